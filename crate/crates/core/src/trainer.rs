//! Losses over positives and generated negatives, and the epoch loop.
//!
//! Distance families (TransE, RotatE) use
//! `L = −log σ(γ − f(pos)) − Σ log σ(f(neg) − γ)`,
//! matching families (DistMult, ComplEx) use
//! `L = −log σ(f(pos)) − Σ log σ(−f(neg))`.
//!
//! A mixed negative `α·e_a + (1−α)·e_b` is not a parameter row; its gradient
//! is routed back as `α·g` to row `a` and `(1−α)·g` to row `b`.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{evaluate, EvalReport};
use crate::exec::Execution;
use crate::kg_store::{FilterIndex, Triplet, TripletCorpus};
use crate::model::{adam_step, AdamConfig, AdamState, EmbeddingModel, SparseGrad};
use crate::negative_sampler::{draw_negatives, mix_vectors, Negative, SamplerConfig, Side};
use crate::scorers::{grad_score, ScoreFamily};

/// Read access to parameter rows in `f64`.
pub trait ParamLookup {
    fn num_entities(&self) -> usize;
    fn num_relations(&self) -> usize;
    fn entity_row(&self, id: usize) -> Vec<f64>;
    fn relation_row(&self, id: usize) -> Vec<f64>;
}

impl ParamLookup for EmbeddingModel {
    fn num_entities(&self) -> usize {
        EmbeddingModel::num_entities(self)
    }

    fn num_relations(&self) -> usize {
        EmbeddingModel::num_relations(self)
    }

    fn entity_row(&self, id: usize) -> Vec<f64> {
        self.entity(id).iter().map(|&x| x as f64).collect()
    }

    fn relation_row(&self, id: usize) -> Vec<f64> {
        self.relation(id).iter().map(|&x| x as f64).collect()
    }
}

/// Full-precision copy of a model's tables, one `Vec` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct F64Params {
    pub entity: Vec<Vec<f64>>,
    pub relation: Vec<Vec<f64>>,
}

impl F64Params {
    pub fn from_model(model: &EmbeddingModel) -> Self {
        F64Params {
            entity: (0..model.num_entities()).map(|i| model.entity_row(i)).collect(),
            relation: (0..model.num_relations()).map(|i| model.relation_row(i)).collect(),
        }
    }
}

impl ParamLookup for F64Params {
    fn num_entities(&self) -> usize {
        self.entity.len()
    }

    fn num_relations(&self) -> usize {
        self.relation.len()
    }

    fn entity_row(&self, id: usize) -> Vec<f64> {
        self.entity[id].clone()
    }

    fn relation_row(&self, id: usize) -> Vec<f64> {
        self.relation[id].clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub value: f64,
    pub grads: SparseGrad,
}

/// `−log σ(x)`, stable for large `|x|`.
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss term and its derivative with respect to the raw score.
type TermFn = fn(f64, f64) -> (f64, f64);

fn translational_pos(f: f64, gamma: f64) -> (f64, f64) {
    (neg_log_sigmoid(gamma - f), sigmoid(f - gamma))
}

fn translational_neg(f: f64, gamma: f64) -> (f64, f64) {
    (neg_log_sigmoid(f - gamma), -sigmoid(gamma - f))
}

fn semantic_pos(f: f64, _: f64) -> (f64, f64) {
    (neg_log_sigmoid(f), -sigmoid(-f))
}

fn semantic_neg(f: f64, _: f64) -> (f64, f64) {
    (neg_log_sigmoid(-f), sigmoid(f))
}

fn check_ids<P: ParamLookup>(positive: &Triplet, negatives: &[Negative], params: &P) -> Result<()> {
    let ne = params.num_entities();
    let bad_entity = |e: usize| e >= ne;
    let neg_bad = negatives.iter().any(|n| match n {
        Negative::Entity(e) => bad_entity(*e),
        Negative::Mixed(m) => bad_entity(m.src_i) || bad_entity(m.src_j),
    });
    if bad_entity(positive.head) || bad_entity(positive.tail) || positive.relation >= params.num_relations() || neg_bad {
        return Err(Error::InvalidArgument(format!(
            "ids of ({}, {}, {}) or its negatives are outside the parameter tables",
            positive.head, positive.relation, positive.tail
        )));
    }
    Ok(())
}

fn assemble<P: ParamLookup>(
    positive: &Triplet,
    side: Side,
    negatives: &[Negative],
    params: &P,
    scorer: &ScoreFamily,
    pos_term: TermFn,
    neg_term: TermFn,
) -> Result<BatchLoss> {
    check_ids(positive, negatives, params)?;
    let (family, norm, gamma) = (scorer.family, scorer.norm, scorer.gamma);
    let h = params.entity_row(positive.head);
    let r = params.relation_row(positive.relation);
    let t = params.entity_row(positive.tail);
    let (ew, rw) = (h.len(), r.len());
    let mut grads = SparseGrad::new();

    let g = grad_score(family, norm, &h, &r, &t)?;
    let (mut value, c) = pos_term(g.value, gamma);
    axpy(grads.entity_row(positive.head, ew), c, &g.dh);
    axpy(grads.relation_row(positive.relation, rw), c, &g.dr);
    axpy(grads.entity_row(positive.tail, ew), c, &g.dt);

    for neg in negatives {
        let x = match neg {
            Negative::Entity(e) => params.entity_row(*e),
            Negative::Mixed(m) => mix_vectors(&params.entity_row(m.src_i), &params.entity_row(m.src_j), m.alpha),
        };
        let (g, fixed_id) = match side {
            Side::Tail => (grad_score(family, norm, &h, &r, &x)?, positive.head),
            Side::Head => (grad_score(family, norm, &x, &r, &t)?, positive.tail),
        };
        let (l, c) = neg_term(g.value, gamma);
        value += l;
        let (g_fixed, g_x) = match side {
            Side::Tail => (&g.dh, &g.dt),
            Side::Head => (&g.dt, &g.dh),
        };
        axpy(grads.entity_row(fixed_id, ew), c, g_fixed);
        axpy(grads.relation_row(positive.relation, rw), c, &g.dr);
        match neg {
            Negative::Entity(e) => axpy(grads.entity_row(*e, ew), c, g_x),
            Negative::Mixed(m) => {
                axpy(grads.entity_row(m.src_i, ew), c * m.alpha, g_x);
                axpy(grads.entity_row(m.src_j, ew), c * (1.0 - m.alpha), g_x);
            }
        }
    }

    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss {value} for triplet ({}, {}, {})",
            positive.head, positive.relation, positive.tail
        )));
    }
    Ok(BatchLoss { value, grads })
}

fn axpy(dst: &mut [f64], a: f64, x: &[f64]) {
    for (d, v) in dst.iter_mut().zip(x) {
        *d += a * v;
    }
}

fn require(scorer: &ScoreFamily, distance: bool) -> Result<()> {
    if scorer.family.is_distance() != distance {
        return Err(Error::InvalidArgument(format!(
            "{} loss does not apply to {}",
            if distance { "translational" } else { "semantic" },
            scorer.family
        )));
    }
    Ok(())
}

/// Margin loss for TransE / RotatE.
pub fn loss_translational<P: ParamLookup>(positive: &Triplet, side: Side, negatives: &[Negative], params: &P, scorer: &ScoreFamily) -> Result<BatchLoss> {
    require(scorer, true)?;
    assemble(positive, side, negatives, params, scorer, translational_pos, translational_neg)
}

/// Logistic loss for DistMult / ComplEx.
pub fn loss_semantic<P: ParamLookup>(positive: &Triplet, side: Side, negatives: &[Negative], params: &P, scorer: &ScoreFamily) -> Result<BatchLoss> {
    require(scorer, false)?;
    assemble(positive, side, negatives, params, scorer, semantic_pos, semantic_neg)
}

/// Picks the loss matching the scorer family.
pub fn triplet_loss<P: ParamLookup>(positive: &Triplet, side: Side, negatives: &[Negative], params: &P, scorer: &ScoreFamily) -> Result<BatchLoss> {
    if scorer.family.is_distance() {
        loss_translational(positive, side, negatives, params, scorer)
    } else {
        loss_semantic(positive, side, negatives, params, scorer)
    }
}

/// Adds `λ·‖row‖²` for every row present in the gradient map.
pub fn add_l2_penalty<P: ParamLookup>(loss: &mut BatchLoss, params: &P, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for (&id, g) in loss.grads.entity.iter_mut() {
        let row = params.entity_row(id);
        loss.value += lambda * row.iter().map(|x| x * x).sum::<f64>();
        axpy(g, 2.0 * lambda, &row);
    }
    for (&id, g) in loss.grads.relation.iter_mut() {
        let row = params.relation_row(id);
        loss.value += lambda * row.iter().map(|x| x * x).sum::<f64>();
        axpy(g, 2.0 * lambda, &row);
    }
}

/// Which slot of each positive gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SidePolicy {
    /// Head or tail with probability 1/2 each.
    #[default]
    Both,
    TailOnly,
}

/// When the optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMode {
    /// One step per mini-batch on the batch-averaged gradient.
    #[default]
    Batch,
    /// One step after every positive.
    Triplet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub sampler: SamplerConfig,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub side_policy: SidePolicy,
    pub step_mode: StepMode,
    pub l2: f64,
    pub eval_every: usize,
    pub execution: Execution,
}

impl TrainConfig {
    pub fn validate(&self, scorer: &ScoreFamily) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if scorer.family.is_distance() && (scorer.gamma.is_nan() || scorer.gamma <= 0.0) {
            return Err(Error::InvalidArgument(format!("margin gamma must be positive, got {}", scorer.gamma)));
        }
        if self.l2.is_nan() || self.l2 < 0.0 {
            return Err(Error::InvalidArgument("l2 penalty must be non-negative".into()));
        }
        self.sampler.validate()?;
        self.adam.validate()
    }
}

/// Independent random stream for `(seed, epoch, slot)`.
pub fn stream_rng(seed: u64, epoch: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) ^ slot);
    rng
}

const SHUFFLE_SLOT: u64 = 0xFFFF_FFFF;

/// Chooses the corruption side and draws the negatives for one positive.
pub fn negatives_for(
    positive: &Triplet,
    cfg: &TrainConfig,
    model: &EmbeddingModel,
    filter: Option<&FilterIndex>,
    rng: &mut ChaCha8Rng,
) -> Result<crate::negative_sampler::NegativeSample> {
    let side = match cfg.side_policy {
        SidePolicy::TailOnly => Side::Tail,
        SidePolicy::Both => {
            if rng.random_bool(0.5) {
                Side::Head
            } else {
                Side::Tail
            }
        }
    };
    draw_negatives(positive, side, &cfg.sampler, model, filter, rng)
}

fn triplet_step(positive: &Triplet, cfg: &TrainConfig, model: &EmbeddingModel, filter: Option<&FilterIndex>, mut rng: ChaCha8Rng) -> Result<BatchLoss> {
    let sample = negatives_for(positive, cfg, model, filter, &mut rng)?;
    let mut loss = triplet_loss(positive, sample.candidates.side, &sample.negatives, model, &model.scorer)?;
    add_l2_penalty(&mut loss, model, cfg.l2);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub batches: usize,
    pub wall_secs: f64,
}

/// One pass over the shuffled training split. `epoch` selects the random
/// streams, so a run is reproducible from `cfg.seed` alone.
pub fn train_epoch(
    corpus: &TripletCorpus,
    filter: Option<&FilterIndex>,
    model: &mut EmbeddingModel,
    state: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    cfg.validate(&model.scorer)?;
    let start = Instant::now();
    let train = &corpus.train;
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(cfg.seed, epoch, SHUFFLE_SLOT));

    let mut total = 0.0;
    let mut batches = 0;
    for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
        let base = b * cfg.batch_size;
        match cfg.step_mode {
            StepMode::Batch => {
                let shared: &EmbeddingModel = model;
                let losses = cfg.execution.map_collect(chunk.len(), |i| {
                    triplet_step(&train[chunk[i]], cfg, shared, filter, stream_rng(cfg.seed, epoch, (base + i) as u64))
                });
                let mut grads = SparseGrad::new();
                for loss in losses {
                    let loss = loss?;
                    total += loss.value;
                    grads.merge(&loss.grads);
                }
                grads.scale(1.0 / chunk.len() as f64);
                adam_step(model, &grads, state)?;
            }
            StepMode::Triplet => {
                for (i, &idx) in chunk.iter().enumerate() {
                    let loss = triplet_step(&train[idx], cfg, model, filter, stream_rng(cfg.seed, epoch, (base + i) as u64))?;
                    total += loss.value;
                    adam_step(model, &loss.grads, state)?;
                }
            }
        }
        batches += 1;
    }
    Ok(EpochStats {
        epoch,
        mean_loss: if train.is_empty() { 0.0 } else { total / train.len() as f64 },
        batches,
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Per-epoch metrics line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: Option<f64>,
    pub valid_mrr: Option<f64>,
    pub valid_hits1: Option<f64>,
    pub valid_hits3: Option<f64>,
    pub valid_hits10: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best_epoch: usize,
    pub best_valid: Option<EvalReport>,
    pub best_model: EmbeddingModel,
    pub best_state: AdamState,
    pub records: Vec<EpochRecord>,
}

/// Runs `cfg.epochs` epochs, evaluating on the valid split every
/// `cfg.eval_every` epochs and after the last one, and keeps the best-MRR
/// parameters. With zero epochs the initial model is evaluated and kept.
///
/// `on_epoch` sees every record together with the current parameters and a
/// flag telling whether they are the new best.
pub fn fit<F>(
    corpus: &TripletCorpus,
    filter: &FilterIndex,
    model: &mut EmbeddingModel,
    state: &mut AdamState,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitOutcome>
where
    F: FnMut(&EpochRecord, &EmbeddingModel, &AdamState, bool) -> Result<()>,
{
    cfg.validate(&model.scorer)?;
    let train_filter = cfg.sampler.filtered.then_some(filter);
    let mut best: Option<(usize, EvalReport, EmbeddingModel, AdamState)> = None;
    let mut records = Vec::new();

    let first = if cfg.epochs == 0 { 0 } else { 1 };
    for epoch in first..=cfg.epochs {
        let start = Instant::now();
        let mean_loss = if epoch == 0 {
            None
        } else {
            Some(train_epoch(corpus, train_filter, model, state, cfg, epoch)?.mean_loss)
        };
        let due = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        let report = if due && !corpus.valid.is_empty() {
            Some(evaluate(&corpus.valid, model, filter, cfg.execution)?)
        } else {
            None
        };
        let improved = match (&report, &best) {
            (Some(r), Some((_, b, _, _))) => r.mrr > b.mrr,
            (Some(_), None) => true,
            (None, _) => corpus.valid.is_empty() && epoch == cfg.epochs,
        };
        let record = EpochRecord {
            epoch,
            mean_loss,
            valid_mrr: report.as_ref().map(|r| r.mrr),
            valid_hits1: report.as_ref().and_then(|r| r.hits_at(1)),
            valid_hits3: report.as_ref().and_then(|r| r.hits_at(3)),
            valid_hits10: report.as_ref().and_then(|r| r.hits_at(10)),
            wall_secs: start.elapsed().as_secs_f64(),
        };
        if let Some(l) = mean_loss {
            log::info!("epoch {epoch}: loss {l:.6}");
        }
        if improved {
            let report = report.unwrap_or_else(|| EvalReport {
                mrr: f64::NAN,
                hits: Default::default(),
                n_tasks: 0,
                per_relation: Vec::new(),
                ranks: Vec::new(),
            });
            best = Some((epoch, report, model.clone(), state.clone()));
        }
        on_epoch(&record, model, state, improved)?;
        records.push(record);
    }

    let (best_epoch, report, best_model, best_state) = best.expect("final epoch always produces a best entry");
    Ok(FitOutcome {
        best_epoch,
        best_valid: (report.n_tasks > 0).then_some(report),
        best_model,
        best_state,
        records,
    })
}
