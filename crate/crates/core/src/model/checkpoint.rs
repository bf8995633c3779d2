//! Binary checkpoint format.
//!
//! ```text
//! "MIXKGCK1"                      8 bytes
//! metadata length                 u64 little-endian
//! metadata                        UTF-8 JSON (CheckpointMeta)
//! entity table                    f32 LE, row-major
//! relation table                  f32 LE, row-major
//! Adam m: entity, relation        f32 LE
//! Adam v: entity, relation        f32 LE
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, EmbeddingModel};
use crate::error::{Error, Result};
use crate::scorers::{Family, Norm, ScoreFamily};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MIXKGCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub family: Family,
    pub d: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub step: u64,
    pub gamma: f64,
    pub norm: Norm,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl CheckpointMeta {
    fn of(model: &EmbeddingModel, state: &AdamState) -> Self {
        CheckpointMeta {
            family: model.family(),
            d: model.dim,
            num_entities: model.num_entities(),
            num_relations: model.num_relations(),
            step: state.step,
            gamma: model.scorer.gamma,
            norm: model.norm(),
            lr: state.config.lr,
            beta1: state.config.beta1,
            beta2: state.config.beta2,
            eps: state.config.eps,
        }
    }
}

pub fn to_bytes(model: &EmbeddingModel, state: &AdamState) -> Result<Vec<u8>> {
    if !state.matches(model) {
        return Err(Error::InvalidArgument("optimizer state does not match model tables".into()));
    }
    let meta = serde_json::to_vec(&CheckpointMeta::of(model, state)).map_err(|e| Error::Format(e.to_string()))?;
    let floats = 3 * (model.entity_table().len() + model.relation_table().len());
    let mut out = Vec::with_capacity(16 + meta.len() + 4 * floats);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(&meta);
    for table in [
        model.entity_table(),
        model.relation_table(),
        &state.m_entity,
        &state.m_relation,
        &state.v_entity,
        &state.v_relation,
    ] {
        for x in table {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(EmbeddingModel, AdamState)> {
    if bytes.len() < 16 {
        return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let meta_end = 16usize
        .checked_add(meta_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format("truncated metadata".into()))?;
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[16..meta_end]).map_err(|e| Error::Format(format!("bad metadata: {e}")))?;

    let ne = meta.num_entities * meta.family.entity_width(meta.d);
    let nr = meta.num_relations * meta.family.relation_width(meta.d);
    let expected = 4 * 3 * (ne + nr);
    let payload = &bytes[meta_end..];
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
    let entity = take(ne);
    let relation = take(nr);
    let m_entity = take(ne);
    let m_relation = take(nr);
    let v_entity = take(ne);
    let v_relation = take(nr);

    let scorer = ScoreFamily::new(meta.family, meta.norm, meta.gamma);
    let model = EmbeddingModel::from_tables(scorer, meta.d, meta.num_entities, meta.num_relations, entity, relation)
        .map_err(|e| Error::Format(e.to_string()))?;
    let state = AdamState {
        config: AdamConfig {
            lr: meta.lr,
            beta1: meta.beta1,
            beta2: meta.beta2,
            eps: meta.eps,
        },
        step: meta.step,
        m_entity,
        v_entity,
        m_relation,
        v_relation,
    };
    Ok((model, state))
}

/// Writes via a temporary sibling file and a rename, so an existing
/// checkpoint at `path` is only replaced by a complete one.
pub fn save_checkpoint(model: &EmbeddingModel, state: &AdamState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model, state)?;
    let tmp = path.with_extension("ckpt.tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EmbeddingModel, AdamState)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{adam_step, SparseGrad};

    fn trained(family: Family) -> (EmbeddingModel, AdamState) {
        let mut m = EmbeddingModel::init(6, 3, 4, ScoreFamily::new(family, Norm::L2, 3.0), 5).unwrap();
        let mut st = AdamState::new(&m, AdamConfig::new(0.01));
        let mut g = SparseGrad::new();
        g.entity_row(2, m.entity_width()).fill(0.5);
        g.relation_row(1, m.relation_width()).fill(-0.5);
        adam_step(&mut m, &g, &mut st).unwrap();
        (m, st)
    }

    #[test]
    fn round_trip_is_identity() {
        for family in Family::ALL {
            let (m, st) = trained(family);
            let (m2, st2) = from_bytes(&to_bytes(&m, &st).unwrap()).unwrap();
            assert_eq!(m, m2);
            assert_eq!(st, st2);
            let bits = |t: &[f32]| t.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(m.entity_table()), bits(m2.entity_table()));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let (m, st) = trained(Family::RotatE);
        save_checkpoint(&m, &st, &path).unwrap();
        let (m2, st2) = load_checkpoint(&path).unwrap();
        assert_eq!((m, st), (m2, st2));
    }

    #[test]
    fn payload_size_follows_layout() {
        // |E| = 5, d = 2, TransE, |R| = 3 → 5*2 + 3*2 = 16 parameters, then m and v of the same size
        let m = EmbeddingModel::init(5, 3, 2, ScoreFamily::new(Family::TransE, Norm::L1, 6.0), 0).unwrap();
        let st = AdamState::new(&m, AdamConfig::new(0.1));
        let bytes = to_bytes(&m, &st).unwrap();
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let params = 5 * 2 + 3 * 2;
        assert_eq!(bytes.len(), 16 + meta_len + 4 * params * 3);
        let first: Vec<f32> = bytes[16 + meta_len..16 + meta_len + 4 * params]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(&first[..10], m.entity_table());
        assert_eq!(&first[10..], m.relation_table());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let (m, st) = trained(Family::TransE);
        let mut bytes = to_bytes(&m, &st).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(from_bytes(truncated), Err(Error::Format(_))));
        assert!(matches!(from_bytes(&bytes[..10]), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn metadata_has_documented_keys() {
        let (m, st) = trained(Family::ComplEx);
        let bytes = to_bytes(&m, &st).unwrap();
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[16..16 + meta_len]).unwrap();
        for key in ["family", "d", "num_entities", "num_relations", "step", "gamma"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["family"], "complex");
        assert_eq!(v["step"], 1);
    }
}
