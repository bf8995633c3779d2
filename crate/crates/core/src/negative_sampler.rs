//! Negative generation: uniform candidates, hard-negative selection, mixing.
//!
//! For a positive `(h, r, t)` corrupted on the tail side:
//!
//! 1. draw `M` entity ids uniformly with replacement;
//! 2. keep the `K` hardest, either by plausibility of `(h, r, t')` under the
//!    scoring function ([`Criterion::Sf`]) or by the dot product `⟨t, t'⟩`
//!    with the correct entity ([`Criterion::Ces`]);
//! 3. build `N` virtual entities `α·t'_i + (1−α)·t'_j` from random pairs
//!    `i ≠ j` of the hard set, with `α ~ U(0, 1)` per mix.
//!
//! Head corruption mirrors this on the head slot.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::{FilterIndex, Triplet};
use crate::model::EmbeddingModel;
use crate::scorers::plausibility;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl Side {
    /// Entity currently occupying this side of `t`.
    pub fn entity_of(self, t: &Triplet) -> usize {
        match self {
            Side::Head => t.head,
            Side::Tail => t.tail,
        }
    }

    /// `t` with this side replaced by `entity`.
    pub fn replace(self, t: &Triplet, entity: usize) -> Triplet {
        match self {
            Side::Head => Triplet::new(entity, t.relation, t.tail),
            Side::Tail => Triplet::new(t.head, t.relation, entity),
        }
    }

    /// Entities that form a known-true triplet when placed on this side.
    pub fn true_entities<'a>(self, t: &Triplet, filter: &'a FilterIndex) -> &'a [usize] {
        match self {
            Side::Head => filter.heads_of(t.relation, t.tail),
            Side::Tail => filter.tails_of(t.head, t.relation),
        }
    }
}

/// How the hard set is chosen from the candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Top-K by scoring-function plausibility.
    Sf,
    /// Top-K by dot product with the correct entity.
    Ces,
    /// No selection: pairs are drawn from all candidates.
    Random,
    /// No selection and no mixing: `N` raw uniform negatives.
    Uniform,
}

impl Criterion {
    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Sf => "sf",
            Criterion::Ces => "ces",
            Criterion::Random => "random",
            Criterion::Uniform => "uniform",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sf" => Ok(Criterion::Sf),
            "ces" => Ok(Criterion::Ces),
            "random" => Ok(Criterion::Random),
            "uniform" => Ok(Criterion::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown criterion {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub positive: Triplet,
    pub side: Side,
    pub ids: Vec<usize>,
}

/// Draws `m` candidate ids i.i.d. uniformly from `0..num_entities`.
///
/// With `filter` set, ids that form a known-true triplet on `side`
/// (including the positive's own entity) are excluded.
pub fn sample_candidates<R: Rng + ?Sized>(
    positive: &Triplet,
    side: Side,
    m: usize,
    num_entities: usize,
    filter: Option<&FilterIndex>,
    rng: &mut R,
) -> Result<CandidateSet> {
    if num_entities == 0 {
        return Err(Error::InvalidArgument("cannot sample from an empty entity set".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("candidate count M must be at least 1".into()));
    }
    let ids = match filter {
        None => (0..m).map(|_| rng.random_range(0..num_entities)).collect(),
        Some(filter) => {
            let banned = side.true_entities(positive, filter);
            let own = side.entity_of(positive);
            let is_banned = |e: usize| e == own || banned.binary_search(&e).is_ok();
            let banned_count = banned.len() + usize::from(banned.binary_search(&own).is_err());
            if banned_count >= num_entities {
                return Err(Error::Sampling(format!(
                    "no legal {side:?} candidates for ({}, {}, {})",
                    positive.head, positive.relation, positive.tail
                )));
            }
            if banned_count * 2 > num_entities {
                let allowed: Vec<usize> = (0..num_entities).filter(|&e| !is_banned(e)).collect();
                (0..m).map(|_| allowed[rng.random_range(0..allowed.len())]).collect()
            } else {
                (0..m)
                    .map(|_| loop {
                        let e = rng.random_range(0..num_entities);
                        if !is_banned(e) {
                            break e;
                        }
                    })
                    .collect()
            }
        }
    };
    Ok(CandidateSet {
        positive: *positive,
        side,
        ids,
    })
}

/// Selected hard negatives, hardest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HardSet {
    pub ids: Vec<usize>,
    /// Index of each selected id within the candidate list.
    pub positions: Vec<usize>,
    /// Selection key per entry; all zero for [`Criterion::Random`].
    pub hardness: Vec<f64>,
    pub criterion: Criterion,
}

impl HardSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The whole candidate list in its original order.
    pub fn unselected(candidates: &CandidateSet) -> Self {
        HardSet {
            ids: candidates.ids.clone(),
            positions: (0..candidates.ids.len()).collect(),
            hardness: vec![0.0; candidates.ids.len()],
            criterion: Criterion::Random,
        }
    }
}

/// Keeps the `k` largest keys; ties go to the earlier position.
pub fn top_k_by_key(keys: &[f64], k: usize) -> Vec<usize> {
    let order = |&a: &usize, &b: &usize| -> Ordering { keys[b].total_cmp(&keys[a]).then(a.cmp(&b)) };
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    let k = k.min(keys.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_unstable_by(order);
    idx
}

fn hard_from_keys(candidates: &CandidateSet, keys: Vec<f64>, k: usize, criterion: Criterion) -> Result<HardSet> {
    if k == 0 {
        return Err(Error::InvalidArgument("hard-set size K must be at least 1".into()));
    }
    let positions = top_k_by_key(&keys, k);
    Ok(HardSet {
        ids: positions.iter().map(|&p| candidates.ids[p]).collect(),
        hardness: positions.iter().map(|&p| keys[p]).collect(),
        positions,
        criterion,
    })
}

/// Hardness keys under the scoring function: plausibility of each corrupted triplet.
pub fn sf_keys(candidates: &CandidateSet, model: &EmbeddingModel) -> Result<Vec<f64>> {
    let pos = &candidates.positive;
    model.check_triplet(pos)?;
    let r = model.relation(pos.relation);
    let family = model.family();
    candidates
        .ids
        .iter()
        .map(|&c| {
            let f = match candidates.side {
                Side::Tail => model.scorer.score(model.entity(pos.head), r, model.entity(c))?,
                Side::Head => model.scorer.score(model.entity(c), r, model.entity(pos.tail))?,
            };
            Ok(plausibility(family, f))
        })
        .collect()
}

/// Hardness keys by similarity: raw-layout dot product with the correct entity.
pub fn ces_keys(candidates: &CandidateSet, model: &EmbeddingModel) -> Result<Vec<f64>> {
    model.check_triplet(&candidates.positive)?;
    let truth = model.entity(candidates.side.entity_of(&candidates.positive));
    Ok(candidates
        .ids
        .iter()
        .map(|&c| {
            model
                .entity(c)
                .iter()
                .zip(truth)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum()
        })
        .collect())
}

pub fn select_hns_sf(candidates: &CandidateSet, model: &EmbeddingModel, k: usize) -> Result<HardSet> {
    hard_from_keys(candidates, sf_keys(candidates, model)?, k, Criterion::Sf)
}

pub fn select_hns_ces(candidates: &CandidateSet, model: &EmbeddingModel, k: usize) -> Result<HardSet> {
    hard_from_keys(candidates, ces_keys(candidates, model)?, k, Criterion::Ces)
}

/// A virtual entity `alpha·emb(src_i) + (1 − alpha)·emb(src_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedNegative {
    pub embedding: Vec<f64>,
    pub src_i: usize,
    pub src_j: usize,
    pub alpha: f64,
}

/// Coordinatewise convex combination, clamped into the source hull so the
/// bound holds exactly under rounding.
pub fn mix_vectors<A, B>(a: &[A], b: &[B], alpha: f64) -> Vec<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (x, y): (f64, f64) = (x.into(), y.into());
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            (alpha * x + (1.0 - alpha) * y).clamp(lo, hi)
        })
        .collect()
}

/// `α ~ U(0, 1)` on the open interval.
pub fn draw_alpha<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let a: f64 = rng.random();
        if a > 0.0 {
            return a;
        }
    }
}

/// Builds `n` mixed negatives from uniformly drawn position pairs `i ≠ j` of
/// the hard set. Pairs are drawn with replacement across mixes.
///
/// A single-entry hard set is an error unless `single_passthrough` is set,
/// in which case every output is that entity's own embedding.
pub fn mix_pairs<R: Rng + ?Sized>(
    hard: &HardSet,
    model: &EmbeddingModel,
    n: usize,
    single_passthrough: bool,
    rng: &mut R,
) -> Result<Vec<MixedNegative>> {
    let k = hard.len();
    if k < 2 && !(k == 1 && single_passthrough) {
        return Err(Error::DegenerateSet(k));
    }
    if let Some(&bad) = hard.ids.iter().find(|&&e| e >= model.num_entities()) {
        return Err(Error::InvalidArgument(format!("entity {bad} outside model")));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, j) = if k == 1 {
            (0, 0)
        } else {
            let i = rng.random_range(0..k);
            let mut j = rng.random_range(0..k - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        };
        let alpha = draw_alpha(rng);
        let (src_i, src_j) = (hard.ids[i], hard.ids[j]);
        out.push(MixedNegative {
            embedding: mix_vectors(model.entity(src_i), model.entity(src_j), alpha),
            src_i,
            src_j,
            alpha,
        });
    }
    Ok(out)
}

/// Mixing without selection: pairs come from the full candidate list.
pub fn random_mix<R: Rng + ?Sized>(
    candidates: &CandidateSet,
    model: &EmbeddingModel,
    n: usize,
    single_passthrough: bool,
    rng: &mut R,
) -> Result<Vec<MixedNegative>> {
    mix_pairs(&HardSet::unselected(candidates), model, n, single_passthrough, rng)
}

/// A negative as consumed by the loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Negative {
    /// An existing entity substituted on the corrupted side.
    Entity(usize),
    Mixed(MixedNegative),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub criterion: Criterion,
    /// Also feed the `K` selected entities to the loss.
    pub include_hard: bool,
    /// Exclude known-true entities from the candidates.
    pub filtered: bool,
    pub single_passthrough: bool,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if self.criterion != Criterion::Uniform && !(1 <= self.k && self.k <= self.m) {
            return Err(Error::InvalidArgument(format!("need 1 <= K <= M, got K={} M={}", self.k, self.m)));
        }
        Ok(())
    }
}

/// Everything produced for one positive triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub candidates: CandidateSet,
    pub hard: Option<HardSet>,
    pub negatives: Vec<Negative>,
}

/// Runs the full pipeline for one positive on a fixed side.
pub fn draw_negatives<R: Rng + ?Sized>(
    positive: &Triplet,
    side: Side,
    cfg: &SamplerConfig,
    model: &EmbeddingModel,
    filter: Option<&FilterIndex>,
    rng: &mut R,
) -> Result<NegativeSample> {
    let filter = if cfg.filtered { filter } else { None };
    if cfg.criterion == Criterion::Uniform {
        let candidates = sample_candidates(positive, side, cfg.n, model.num_entities(), filter, rng)?;
        let negatives = candidates.ids.iter().map(|&e| Negative::Entity(e)).collect();
        return Ok(NegativeSample {
            candidates,
            hard: None,
            negatives,
        });
    }
    let candidates = sample_candidates(positive, side, cfg.m, model.num_entities(), filter, rng)?;
    let hard = match cfg.criterion {
        Criterion::Sf => select_hns_sf(&candidates, model, cfg.k)?,
        Criterion::Ces => select_hns_ces(&candidates, model, cfg.k)?,
        Criterion::Random | Criterion::Uniform => HardSet::unselected(&candidates),
    };
    let mixes = mix_pairs(&hard, model, cfg.n, cfg.single_passthrough, rng)?;
    let mut negatives: Vec<Negative> = mixes.into_iter().map(Negative::Mixed).collect();
    if cfg.include_hard {
        negatives.extend(hard.ids.iter().map(|&e| Negative::Entity(e)));
    }
    Ok(NegativeSample {
        candidates,
        hard: Some(hard),
        negatives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixProvenance {
    pub src_i: usize,
    pub src_j: usize,
    pub alpha: f64,
}

/// One JSON-lines record of the inspect dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InspectRecord {
    pub triplet: Triplet,
    pub side: Side,
    pub criterion: Criterion,
    pub candidates: Vec<usize>,
    pub selected: Vec<usize>,
    pub hardness: Vec<f64>,
    pub mixes: Vec<MixProvenance>,
}

impl InspectRecord {
    pub fn from_sample(sample: &NegativeSample, criterion: Criterion) -> Self {
        let (selected, hardness) = match &sample.hard {
            Some(h) => (h.ids.clone(), h.hardness.clone()),
            None => (Vec::new(), Vec::new()),
        };
        let mixes = sample
            .negatives
            .iter()
            .filter_map(|n| match n {
                Negative::Mixed(m) => Some(MixProvenance {
                    src_i: m.src_i,
                    src_j: m.src_j,
                    alpha: m.alpha,
                }),
                Negative::Entity(_) => None,
            })
            .collect();
        InspectRecord {
            triplet: sample.candidates.positive,
            side: sample.candidates.side,
            criterion,
            candidates: sample.candidates.ids.clone(),
            selected,
            hardness,
            mixes,
        }
    }

    /// Structural checks a consumer of the dump can rely on.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.selected.len() != self.hardness.len() {
            return fail("selected and hardness lengths differ".into());
        }
        let mut pool = self.candidates.clone();
        pool.sort_unstable();
        for id in &self.selected {
            match pool.binary_search(id) {
                Ok(p) => {
                    pool.remove(p);
                }
                Err(_) => return fail(format!("selected id {id} not among candidates")),
            }
        }
        if matches!(self.criterion, Criterion::Sf | Criterion::Ces) && self.hardness.windows(2).any(|w| w[0] < w[1]) {
            return fail("hardness not sorted non-increasing".into());
        }
        for m in &self.mixes {
            if !(m.alpha > 0.0 && m.alpha < 1.0) {
                return fail(format!("alpha {} outside (0, 1)", m.alpha));
            }
            if !self.selected.contains(&m.src_i) || !self.selected.contains(&m.src_j) {
                return fail(format!("mix sources ({}, {}) not in the hard set", m.src_i, m.src_j));
            }
        }
        Ok(())
    }
}
