//! Row-sparse Adam.
//!
//! Only rows carrying a nonzero gradient have their parameters and moments
//! touched; everything else stays bitwise identical.

use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, SparseGrad};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// Moment tables shaped like the model's tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m_entity: Vec<f32>,
    pub v_entity: Vec<f32>,
    pub m_relation: Vec<f32>,
    pub v_relation: Vec<f32>,
}

impl AdamState {
    pub fn new(model: &EmbeddingModel, config: AdamConfig) -> Self {
        let (ne, nr) = (model.entity_table().len(), model.relation_table().len());
        AdamState {
            config,
            step: 0,
            m_entity: vec![0.0; ne],
            v_entity: vec![0.0; ne],
            m_relation: vec![0.0; nr],
            v_relation: vec![0.0; nr],
        }
    }

    pub fn matches(&self, model: &EmbeddingModel) -> bool {
        let (ne, nr) = (model.entity_table().len(), model.relation_table().len());
        self.m_entity.len() == ne && self.v_entity.len() == ne && self.m_relation.len() == nr && self.v_relation.len() == nr
    }
}

fn validate_rows(rows: &std::collections::BTreeMap<usize, Vec<f64>>, count: usize, width: usize, table: &str) -> Result<()> {
    for (&id, row) in rows {
        if id >= count || row.len() != width {
            return Err(Error::InvalidArgument(format!(
                "{table} gradient row {id} (width {}) does not fit table {count}x{width}",
                row.len()
            )));
        }
        if let Some(g) = row.iter().find(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient {g} in {table} row {id}")));
        }
    }
    Ok(())
}

/// Applies one bias-corrected Adam update. The gradient map is validated in
/// full before anything is written, so an error leaves model and state as
/// they were. The step counter advances once per call.
pub fn adam_step(model: &mut EmbeddingModel, grads: &SparseGrad, state: &mut AdamState) -> Result<()> {
    if !state.matches(model) {
        return Err(Error::InvalidArgument("optimizer state does not match model tables".into()));
    }
    validate_rows(&grads.entity, model.num_entities(), model.entity_width(), "entity")?;
    validate_rows(&grads.relation, model.num_relations(), model.relation_width(), "relation")?;

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    let update = |param: &mut [f32], m: &mut [f32], v: &mut [f32], g: &[f64]| {
        for i in 0..g.len() {
            let mi = cfg.beta1 * m[i] as f64 + (1.0 - cfg.beta1) * g[i];
            let vi = cfg.beta2 * v[i] as f64 + (1.0 - cfg.beta2) * g[i] * g[i];
            m[i] = mi as f32;
            v[i] = vi as f32;
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            param[i] = (param[i] as f64 - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
        }
    };

    let w = model.entity_width();
    for (&id, g) in &grads.entity {
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let span = id * w..(id + 1) * w;
        update(
            model.entity_mut(id),
            &mut state.m_entity[span.clone()],
            &mut state.v_entity[span],
            g,
        );
    }
    let w = model.relation_width();
    for (&id, g) in &grads.relation {
        if g.iter().all(|&x| x == 0.0) {
            continue;
        }
        let span = id * w..(id + 1) * w;
        update(
            model.relation_mut(id),
            &mut state.m_relation[span.clone()],
            &mut state.v_relation[span],
            g,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorers::{Family, Norm, ScoreFamily};
    use proptest::prelude::*;

    fn model(ne: usize, dim: usize) -> EmbeddingModel {
        EmbeddingModel::init(ne, 2, dim, ScoreFamily::new(Family::TransE, Norm::L1, 6.0), 9).unwrap()
    }

    #[test]
    fn zero_gradients_only_advance_step() {
        let mut m = model(4, 3);
        let before = m.clone();
        let mut st = AdamState::new(&m, AdamConfig::new(0.1));
        let mut g = SparseGrad::new();
        g.entity_row(1, 3);
        adam_step(&mut m, &g, &mut st).unwrap();
        assert_eq!(m, before);
        assert_eq!(st.step, 1);
        assert!(st.m_entity.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = model(4, 3);
        let before = m.clone();
        let mut st = AdamState::new(&m, AdamConfig::new(0.0));
        let mut g = SparseGrad::new();
        g.entity_row(2, 3).copy_from_slice(&[1.0, -2.0, 0.5]);
        adam_step(&mut m, &g, &mut st).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001 → m̂ = 1, v̂ = 1 → Δ = 0.1 / (1 + 1e-8)
        let mut m = EmbeddingModel::from_tables(ScoreFamily::new(Family::TransE, Norm::L1, 1.0), 1, 1, 1, vec![0.5], vec![0.0]).unwrap();
        let mut st = AdamState::new(&m, AdamConfig::new(0.1));
        let mut g = SparseGrad::new();
        g.entity_row(0, 1)[0] = 1.0;
        adam_step(&mut m, &g, &mut st).unwrap();
        let expected = 0.5 - 0.1 / (1.0 + 1e-8);
        assert!((m.entity(0)[0] as f64 - expected).abs() < 1e-7);
        assert!((st.m_entity[0] as f64 - 0.1).abs() < 1e-8);
        assert!((st.v_entity[0] as f64 - 0.001).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_row_and_leaves_state() {
        let mut m = model(4, 2);
        let before = m.clone();
        let mut st = AdamState::new(&m, AdamConfig::new(0.1));
        let mut g = SparseGrad::new();
        g.entity_row(0, 2)[0] = 1.0;
        g.entity_row(3, 2)[1] = f64::NAN;
        let err = adam_step(&mut m, &g, &mut st).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
        assert_eq!(m, before);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn out_of_range_row_is_rejected() {
        let mut m = model(4, 2);
        let mut st = AdamState::new(&m, AdamConfig::new(0.1));
        let mut g = SparseGrad::new();
        g.entity_row(4, 2)[0] = 1.0;
        assert!(adam_step(&mut m, &g, &mut st).is_err());
    }

    proptest! {
        #[test]
        fn untouched_rows_are_bitwise_unchanged(rows in prop::collection::btree_set(0usize..12, 0..6), steps in 1usize..4) {
            let mut m = model(12, 3);
            let mut st = AdamState::new(&m, AdamConfig::new(0.05));
            // warm the moments of every row first
            let mut warm = SparseGrad::new();
            for id in 0..12 {
                warm.entity_row(id, 3).copy_from_slice(&[0.3, -0.1, 0.2]);
            }
            adam_step(&mut m, &warm, &mut st).unwrap();
            let (m0, s0) = (m.clone(), st.clone());
            for _ in 0..steps {
                let mut g = SparseGrad::new();
                for &id in &rows {
                    g.entity_row(id, 3).copy_from_slice(&[1.0, 0.5, -0.25]);
                }
                adam_step(&mut m, &g, &mut st).unwrap();
            }
            for id in (0..12).filter(|id| !rows.contains(id)) {
                prop_assert_eq!(m.entity(id), m0.entity(id));
                let span = id * 3..id * 3 + 3;
                prop_assert_eq!(&st.m_entity[span.clone()], &s0.m_entity[span.clone()]);
                prop_assert_eq!(&st.v_entity[span.clone()], &s0.v_entity[span]);
            }
            prop_assert_eq!(m.relation_table(), m0.relation_table());
            prop_assert!(st.v_entity.iter().all(|&v| v >= 0.0));
        }
    }
}
