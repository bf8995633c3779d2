//! The `train`, `eval`, `sweep` and `inspect` commands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mixkg::evaluator::{evaluate, EvalReport};
use mixkg::model::{load_checkpoint, save_checkpoint};
use mixkg::negative_sampler::InspectRecord;
use mixkg::trainer::{fit, negatives_for, stream_rng};
use mixkg::{AdamState, EmbeddingModel, FilterIndex, TripletCorpus};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Settings};
use crate::DataError;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const RESOLVED_CONFIG: &str = "resolved-config.txt";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn load_corpus(train: &Path, valid: &Path, test: &Path) -> Result<(TripletCorpus, FilterIndex)> {
    let corpus = TripletCorpus::load(train, valid, test)?;
    let filter = FilterIndex::build(&corpus);
    log::info!(
        "loaded {} entities, {} relations, {}/{}/{} triplets",
        corpus.num_entities(),
        corpus.num_relations(),
        corpus.train.len(),
        corpus.valid.len(),
        corpus.test.len()
    );
    Ok((corpus, filter))
}

fn check_vocab(model: &EmbeddingModel, corpus: &TripletCorpus) -> Result<()> {
    if model.num_entities() != corpus.num_entities() || model.num_relations() != corpus.num_relations() {
        return Err(DataError::msg(format!(
            "vocabulary mismatch: checkpoint has {} entities / {} relations, dataset has {} / {}",
            model.num_entities(),
            model.num_relations(),
            corpus.num_entities(),
            corpus.num_relations()
        ))
        .into());
    }
    Ok(())
}

/// Runs `f` inside a pool of `threads` workers (0 = rayon default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub valid: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub wall_secs: f64,
}

/// Trains one model and writes checkpoints, metrics and a summary under the
/// configured output directory.
pub fn cmd_train(settings: &Settings) -> Result<TrainSummary> {
    let cfg = settings.resolve()?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join(RESOLVED_CONFIG), settings.render())?;
    let (corpus, filter) = load_corpus(&cfg.train_path, &cfg.valid_path, &cfg.test_path)?;
    with_threads(cfg.threads, || run_training(&cfg, &corpus, &filter))?
}

fn run_training(cfg: &ExperimentConfig, corpus: &TripletCorpus, filter: &FilterIndex) -> Result<TrainSummary> {
    let start = Instant::now();
    let mut model = EmbeddingModel::init_with_bound(
        corpus.num_entities(),
        corpus.num_relations(),
        cfg.dim,
        cfg.scorer,
        cfg.train.seed,
        cfg.init_bound,
    )?;
    let mut state = AdamState::new(&model, cfg.train.adam);
    let out = &cfg.out_dir;
    let mut metrics = fs::File::create(out.join(METRICS_FILE))?;

    let outcome = fit(corpus, filter, &mut model, &mut state, &cfg.train, |record, model, state, best| {
        let line = serde_json::to_string(record).map_err(|e| mixkg::Error::Format(e.to_string()))?;
        let io = |e| mixkg::Error::Io {
            path: out.join(METRICS_FILE),
            source: e,
        };
        writeln!(metrics, "{line}").map_err(io)?;
        metrics.flush().map_err(io)?;
        save_checkpoint(model, state, out.join(LAST_CKPT))?;
        if best {
            save_checkpoint(model, state, out.join(BEST_CKPT))?;
        }
        Ok(())
    })?;

    let test = if corpus.test.is_empty() {
        None
    } else {
        Some(evaluate(&corpus.test, &outcome.best_model, filter, cfg.train.execution)?)
    };
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        valid: outcome.best_valid,
        test,
        wall_secs: start.elapsed().as_secs_f64(),
    };
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Split {
    Valid,
    Test,
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub split: Split,
    pub report: Option<PathBuf>,
    pub ranks_csv: Option<PathBuf>,
}

/// Filtered evaluation of a saved checkpoint.
pub fn cmd_eval(settings: &Settings, args: &EvalArgs) -> Result<EvalReport> {
    let cfg = settings.resolve()?;
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let (corpus, filter) = load_corpus(&cfg.train_path, &cfg.valid_path, &cfg.test_path)?;
    check_vocab(&model, &corpus)?;
    let split = match args.split {
        Split::Valid => &corpus.valid,
        Split::Test => &corpus.test,
    };
    let exec = cfg.train.execution;
    let report = with_threads(cfg.threads, || evaluate(split, &model, &filter, exec))??;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &args.report {
        fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.ranks_csv {
        fs::write(path, report.ranks_csv(split)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepKey {
    K,
    N,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub mrr: f64,
    pub hits10: f64,
    pub wall_secs: f64,
}

/// Trains one model per value of `key` (shared seed) and writes
/// `sweep_<key>.csv` with test MRR / Hits@10 of each run's best checkpoint.
pub fn cmd_sweep(settings: &Settings, key: SweepKey, values: &[usize]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let base = settings.resolve()?;
    let (name, cfg_key) = match key {
        SweepKey::K => ("k", "train.k"),
        SweepKey::N => ("n", "train.n"),
    };
    let mut runs = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = settings.clone();
        s.set(cfg_key, v.to_string())?;
        s.set("output.dir", base.out_dir.join(format!("{name}={v}")).display().to_string())?;
        s.resolve().with_context(|| format!("sweep value {name}={v}"))?;
        runs.push((v, s));
    }
    fs::create_dir_all(&base.out_dir)?;
    let mut rows = Vec::new();
    let mut csv = String::from("value,mrr,hits10,wall_secs\n");
    for (v, s) in runs {
        let summary = cmd_train(&s)?;
        let report = summary.test.as_ref().or(summary.valid.as_ref());
        let row = SweepRow {
            value: v,
            mrr: report.map_or(f64::NAN, |r| r.mrr),
            hits10: report.and_then(|r| r.hits_at(10)).unwrap_or(f64::NAN),
            wall_secs: summary.wall_secs,
        };
        csv.push_str(&format!("{},{},{},{}\n", row.value, row.mrr, row.hits10, row.wall_secs));
        fs::write(base.out_dir.join(format!("sweep_{name}.csv")), &csv)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Dumps negative-sampling internals for `count` random training triplets
/// as JSON lines.
pub fn cmd_inspect(settings: &Settings, checkpoint: &Path, count: usize, out: &mut dyn Write) -> Result<Vec<InspectRecord>> {
    let cfg = settings.resolve()?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let (corpus, filter) = load_corpus(&cfg.train_path, &cfg.valid_path, &cfg.test_path)?;
    check_vocab(&model, &corpus)?;
    if count > 0 && corpus.train.is_empty() {
        return Err(DataError::msg("training split is empty").into());
    }
    let mut pick = stream_rng(cfg.train.seed, 0, u64::from(u32::MAX) - 1);
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let positive = corpus.train[pick.random_range(0..corpus.train.len())];
        let mut rng = stream_rng(cfg.train.seed, 0, i as u64);
        let sample = negatives_for(&positive, &cfg.train, &model, Some(&filter), &mut rng)?;
        let record = InspectRecord::from_sample(&sample, cfg.train.sampler.criterion);
        writeln!(out, "{}", serde_json::to_string(&record)?)?;
        records.push(record);
    }
    Ok(records)
}
