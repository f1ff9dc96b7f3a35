//! Artifact writers: CSV with a trailing metadata comment, and ASCII PGM heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use sinhflow::{Field, Result};

use crate::config::ExperimentConfig;

/// SHA-256 of the canonical config text, lowercase hex.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_text().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Appends `# config_sha256=… n=…` to a CSV body.
pub fn with_metadata(mut csv: String, cfg: &ExperimentConfig) -> String {
    if !csv.ends_with('\n') {
        csv.push('\n');
    }
    let _ = writeln!(csv, "# config_sha256={} n={}", config_hash(cfg), cfg.n);
    csv
}

/// Plain (P2) graymap, 255 levels, min/max normalized; row 0 is the top (`y` near 1).
pub fn pgm(field: &Field) -> String {
    let grid = field.grid();
    let n = grid.n();
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::with_capacity(4 * n * n + 64);
    let _ = writeln!(s, "P2\n# min={lo:e} max={hi:e}\n{n} {n}\n255");
    for iy in (0..n).rev() {
        let row: Vec<String> = (0..n)
            .map(|ix| {
                let v = ((field.at(ix, iy) - lo) / span * 255.0).round();
                (v.clamp(0.0, 255.0) as u8).to_string()
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}
