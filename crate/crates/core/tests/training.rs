//! Small end-to-end training runs on a chain-shaped toy graph.

use mixkg::model::AdamConfig;
use mixkg::negative_sampler::{Criterion, SamplerConfig};
use mixkg::trainer::{train_epoch, SidePolicy, StepMode, TrainConfig};
use mixkg::{AdamState, EmbeddingModel, Execution, Family, Norm, ScoreFamily, Triplet, TripletCorpus};

/// 51 entities linked `e_i -r-> e_{i+1}` by two alternating relations.
fn chain() -> TripletCorpus {
    let train: Vec<Triplet> = (0..50).map(|i| Triplet::new(i, i % 2, i + 1)).collect();
    let valid = train.iter().step_by(10).copied().collect();
    let test = train.iter().skip(5).step_by(10).copied().collect();
    TripletCorpus::from_ids(train, valid, test, 51, 2).unwrap()
}

fn config(criterion: Criterion) -> TrainConfig {
    TrainConfig {
        batch_size: 10,
        sampler: SamplerConfig {
            m: 32,
            k: 8,
            n: 16,
            criterion,
            include_hard: false,
            filtered: false,
            single_passthrough: false,
        },
        epochs: 200,
        adam: AdamConfig::new(0.01),
        seed: 7,
        side_policy: SidePolicy::Both,
        step_mode: StepMode::Batch,
        l2: 0.0,
        eval_every: 0,
        execution: Execution::Sequential,
    }
}

fn losses(family: Family, criterion: Criterion, epochs: usize) -> Vec<f64> {
    let corpus = chain();
    let cfg = config(criterion);
    let mut model = EmbeddingModel::init(51, 2, 16, ScoreFamily::new(family, Norm::L1, 6.0), 3).unwrap();
    let mut state = AdamState::new(&model, cfg.adam);
    (1..=epochs)
        .map(|e| train_epoch(&corpus, None, &mut model, &mut state, &cfg, e).unwrap().mean_loss)
        .collect()
}

#[test]
fn transe_loss_falls_on_chain_graph() {
    let l = losses(Family::TransE, Criterion::Sf, 200);
    for w in l[..10].windows(2) {
        assert!(w[1] < w[0], "loss did not decrease: {:?}", &l[..10]);
    }
    assert!(l[199] < l[0] / 2.0, "initial {} final {}", l[0], l[199]);
}

#[test]
fn every_criterion_trains_every_family() {
    for family in Family::ALL {
        for criterion in [Criterion::Sf, Criterion::Ces, Criterion::Random, Criterion::Uniform] {
            let l = losses(family, criterion, 30);
            assert!(l.iter().all(|x| x.is_finite() && *x >= 0.0));
            assert!(l[29] < l[0], "{family} {criterion}: {} -> {}", l[0], l[29]);
        }
    }
}
