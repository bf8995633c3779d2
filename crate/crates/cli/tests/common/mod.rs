#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use mixkg_cli::config::Settings;

/// Writes a 51-entity chain graph: 50 training triplets `e_i -r_{i%2}-> e_{i+1}`
/// plus valid/test slices of it.
pub fn write_toy(dir: &Path) -> [PathBuf; 3] {
    let line = |i: usize| format!("e{i}\tr{}\te{}\n", i % 2, i + 1);
    let train: String = (0..50).map(line).collect();
    let valid: String = (0..50).step_by(10).map(line).collect();
    let test: String = (5..50).step_by(10).map(line).collect();
    let paths = [dir.join("train.txt"), dir.join("valid.txt"), dir.join("test.txt")];
    for (p, text) in paths.iter().zip([train, valid, test]) {
        fs::write(p, text).unwrap();
    }
    paths
}

/// Small deterministic training setup on the toy graph.
pub fn toy_settings(data: &Path, out: &Path) -> Settings {
    let mut s = Settings::default();
    let [train, valid, test] = write_toy(data);
    for (k, v) in [
        ("dataset.train", train.display().to_string()),
        ("dataset.valid", valid.display().to_string()),
        ("dataset.test", test.display().to_string()),
        ("model.dim", "16".into()),
        ("train.lr", "0.01".into()),
        ("train.batch_size", "10".into()),
        ("train.m", "32".into()),
        ("train.k", "8".into()),
        ("train.n", "16".into()),
        ("train.epochs", "6".into()),
        ("train.eval_every", "2".into()),
        ("train.seed", "11".into()),
        ("train.deterministic", "true".into()),
        ("output.dir", out.display().to_string()),
    ] {
        s.set(k, v).unwrap();
    }
    s
}
