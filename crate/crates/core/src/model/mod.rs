//! Entity and relation embedding tables.
//!
//! Tables are dense row-major `f32`. Row widths follow the family layout in
//! [`crate::scorers`]; RotatE relations are stored as phase angles.

mod adam;
mod checkpoint;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg_store::Triplet;
use crate::scorers::{Family, Norm, ScoreFamily};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub scorer: ScoreFamily,
    pub dim: usize,
    num_entities: usize,
    num_relations: usize,
    entity: Vec<f32>,
    relation: Vec<f32>,
}

impl EmbeddingModel {
    /// Uniform initialization with the default bound for the family:
    /// `(gamma + 2) / dim` for distance families, `1 / sqrt(dim)` otherwise.
    pub fn init(num_entities: usize, num_relations: usize, dim: usize, scorer: ScoreFamily, seed: u64) -> Result<Self> {
        Self::init_with_bound(num_entities, num_relations, dim, scorer, seed, None)
    }

    pub fn default_bound(scorer: &ScoreFamily, dim: usize) -> f64 {
        if scorer.family.is_distance() {
            (scorer.gamma + 2.0) / dim as f64
        } else {
            1.0 / (dim as f64).sqrt()
        }
    }

    pub fn init_with_bound(
        num_entities: usize,
        num_relations: usize,
        dim: usize,
        scorer: ScoreFamily,
        seed: u64,
        bound: Option<f64>,
    ) -> Result<Self> {
        if num_entities == 0 || num_relations == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "model sizes must be positive (entities={num_entities}, relations={num_relations}, dim={dim})"
            )));
        }
        let b = bound.unwrap_or_else(|| Self::default_bound(&scorer, dim));
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::InvalidArgument(format!("init bound must be positive, got {b}")));
        }
        let family = scorer.family;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entity = (0..num_entities * family.entity_width(dim))
            .map(|_| rng.random_range(-b..=b) as f32)
            .collect();
        let rel_bound = if family == Family::RotatE { PI } else { b };
        let relation = (0..num_relations * family.relation_width(dim))
            .map(|_| rng.random_range(-rel_bound..=rel_bound) as f32)
            .collect();
        Ok(EmbeddingModel {
            scorer,
            dim,
            num_entities,
            num_relations,
            entity,
            relation,
        })
    }

    /// Builds a model from explicit tables, validating their sizes.
    pub fn from_tables(scorer: ScoreFamily, dim: usize, num_entities: usize, num_relations: usize, entity: Vec<f32>, relation: Vec<f32>) -> Result<Self> {
        let family = scorer.family;
        if dim == 0 || num_entities == 0 || num_relations == 0 {
            return Err(Error::InvalidArgument("model sizes must be positive".into()));
        }
        if entity.len() != num_entities * family.entity_width(dim) || relation.len() != num_relations * family.relation_width(dim) {
            return Err(Error::InvalidArgument(format!(
                "table sizes {}/{} do not match {num_entities}x{} / {num_relations}x{}",
                entity.len(),
                relation.len(),
                family.entity_width(dim),
                family.relation_width(dim)
            )));
        }
        Ok(EmbeddingModel {
            scorer,
            dim,
            num_entities,
            num_relations,
            entity,
            relation,
        })
    }

    pub fn family(&self) -> Family {
        self.scorer.family
    }

    pub fn norm(&self) -> Norm {
        self.scorer.norm
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn entity_width(&self) -> usize {
        self.family().entity_width(self.dim)
    }

    pub fn relation_width(&self) -> usize {
        self.family().relation_width(self.dim)
    }

    pub fn entity(&self, id: usize) -> &[f32] {
        let w = self.entity_width();
        &self.entity[id * w..(id + 1) * w]
    }

    pub fn relation(&self, id: usize) -> &[f32] {
        let w = self.relation_width();
        &self.relation[id * w..(id + 1) * w]
    }

    pub fn entity_mut(&mut self, id: usize) -> &mut [f32] {
        let w = self.entity_width();
        &mut self.entity[id * w..(id + 1) * w]
    }

    pub fn relation_mut(&mut self, id: usize) -> &mut [f32] {
        let w = self.relation_width();
        &mut self.relation[id * w..(id + 1) * w]
    }

    pub fn entity_table(&self) -> &[f32] {
        &self.entity
    }

    pub fn relation_table(&self) -> &[f32] {
        &self.relation
    }

    pub fn check_triplet(&self, t: &Triplet) -> Result<()> {
        if t.head >= self.num_entities || t.tail >= self.num_entities || t.relation >= self.num_relations {
            return Err(Error::InvalidArgument(format!(
                "triplet ({}, {}, {}) outside model of {} entities / {} relations",
                t.head, t.relation, t.tail, self.num_entities, self.num_relations
            )));
        }
        Ok(())
    }

    /// Raw score of a stored triplet.
    pub fn score(&self, t: &Triplet) -> Result<f64> {
        self.check_triplet(t)?;
        self.scorer.score(self.entity(t.head), self.relation(t.relation), self.entity(t.tail))
    }
}

/// Row-sparse gradients for both tables. Rows are kept in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub entity: BTreeMap<usize, Vec<f64>>,
    pub relation: BTreeMap<usize, Vec<f64>>,
}

impl SparseGrad {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entity.is_empty() && self.relation.is_empty()
    }

    pub fn entity_row(&mut self, id: usize, width: usize) -> &mut [f64] {
        self.entity.entry(id).or_insert_with(|| vec![0.0; width])
    }

    pub fn relation_row(&mut self, id: usize, width: usize) -> &mut [f64] {
        self.relation.entry(id).or_insert_with(|| vec![0.0; width])
    }

    /// Adds `other` into `self` row by row.
    pub fn merge(&mut self, other: &SparseGrad) {
        for (dst, src) in [(&mut self.entity, &other.entity), (&mut self.relation, &other.relation)] {
            for (&id, row) in src {
                let acc = dst.entry(id).or_insert_with(|| vec![0.0; row.len()]);
                for (a, g) in acc.iter_mut().zip(row) {
                    *a += g;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.entity.values_mut().chain(self.relation.values_mut()) {
            for g in row {
                *g *= factor;
            }
        }
    }
}
