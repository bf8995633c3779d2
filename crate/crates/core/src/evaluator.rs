//! Filtered link-prediction metrics.
//!
//! Each test triplet yields two ranking tasks (replace the head, replace the
//! tail). Every entity is scored in the corrupted slot; entities that form a
//! known-true triplet, other than the test entity itself, are dropped. Ties
//! with the test entity count against it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kg_store::{FilterIndex, Triplet};
use crate::model::EmbeddingModel;
use crate::negative_sampler::Side;
use crate::scorers::plausibility;

pub const HITS_AT: [usize; 3] = [1, 3, 10];

/// Plausibility of every entity placed on `side` of `t`, indexed by entity id.
pub fn plausibilities(t: &Triplet, side: Side, model: &EmbeddingModel) -> Result<Vec<f64>> {
    model.check_triplet(t)?;
    let r = model.relation(t.relation);
    let family = model.family();
    (0..model.num_entities())
        .map(|e| {
            let f = match side {
                Side::Tail => model.scorer.score(model.entity(t.head), r, model.entity(e))?,
                Side::Head => model.scorer.score(model.entity(e), r, model.entity(t.tail))?,
            };
            Ok(plausibility(family, f))
        })
        .collect()
}

/// Rank of the true entity among `scores` after removing `filtered`
/// (sorted ids; the true entity is never removed). Ties rank last.
pub fn rank_from_scores(scores: &[f64], truth: usize, filtered: &[usize]) -> usize {
    let target = scores[truth];
    let mut skip = filtered.iter().copied().peekable();
    let mut ahead = 0;
    for (e, &p) in scores.iter().enumerate() {
        while skip.next_if(|&f| f < e).is_some() {}
        if skip.next_if_eq(&e).is_some() || e == truth {
            continue;
        }
        if p >= target {
            ahead += 1;
        }
    }
    1 + ahead
}

/// Filtered rank of the true entity on `side`.
pub fn rank_filtered(t: &Triplet, side: Side, model: &EmbeddingModel, filter: &FilterIndex) -> Result<usize> {
    let scores = plausibilities(t, side, model)?;
    Ok(rank_from_scores(&scores, side.entity_of(t), side.true_entities(t, filter)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub relation: usize,
    pub mrr: f64,
    pub hits10: f64,
    /// Number of ranking tasks (two per triplet).
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub n_tasks: usize,
    pub per_relation: Vec<RelationMetrics>,
    /// `(head_rank, tail_rank)` per evaluated triplet.
    #[serde(skip)]
    pub ranks: Vec<(usize, usize)>,
}

impl EvalReport {
    pub fn from_ranks(split: &[Triplet], ranks: Vec<(usize, usize)>) -> Result<Self> {
        if split.is_empty() || split.len() != ranks.len() {
            return Err(Error::InvalidArgument(format!(
                "need one rank pair per triplet of a non-empty split ({} triplets, {} rank pairs)",
                split.len(),
                ranks.len()
            )));
        }
        let all: Vec<usize> = ranks.iter().flat_map(|&(h, t)| [h, t]).collect();
        let n = all.len() as f64;
        let mrr = all.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n;
        let hits = HITS_AT
            .iter()
            .map(|&k| (k, all.iter().filter(|&&r| r <= k).count() as f64 / n))
            .collect();

        let mut by_rel: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
        for (t, &(hr, tr)) in split.iter().zip(&ranks) {
            let entry = by_rel.entry(t.relation).or_default();
            for r in [hr, tr] {
                entry.0 += 1.0 / r as f64;
                entry.1 += usize::from(r <= 10);
                entry.2 += 1;
            }
        }
        let per_relation = by_rel
            .into_iter()
            .map(|(relation, (rr, h10, count))| RelationMetrics {
                relation,
                mrr: rr / count as f64,
                hits10: h10 as f64 / count as f64,
                count,
            })
            .collect();
        Ok(EvalReport {
            mrr,
            hits,
            n_tasks: all.len(),
            per_relation,
            ranks,
        })
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }

    /// `head,relation,tail,head_rank,tail_rank` rows.
    pub fn ranks_csv(&self, split: &[Triplet]) -> String {
        let mut out = String::from("head,relation,tail,head_rank,tail_rank\n");
        for (t, (hr, tr)) in split.iter().zip(&self.ranks) {
            out.push_str(&format!("{},{},{},{hr},{tr}\n", t.head, t.relation, t.tail));
        }
        out
    }
}

/// Filtered MRR and Hits@{1,3,10} over both prediction sides of `split`.
pub fn evaluate(split: &[Triplet], model: &EmbeddingModel, filter: &FilterIndex, exec: Execution) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    let ranks = exec.map_collect(split.len(), |i| -> Result<(usize, usize)> {
        let t = &split[i];
        Ok((
            rank_filtered(t, Side::Head, model, filter)?,
            rank_filtered(t, Side::Tail, model, filter)?,
        ))
    });
    let ranks = ranks.into_iter().collect::<Result<Vec<_>>>()?;
    EvalReport::from_ranks(split, ranks)
}
