//! Nearest-neighbor matching between probe and gallery feature vectors.
//!
//! The working metric is the chi-square histogram distance
//! `sum_i (x_i - y_i)^2 / (x_i + y_i)` with empty bins skipped; Euclidean
//! distance is available for reduced (post-PCA) vectors, whose entries
//! may be negative.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use std::path::Path;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("negative entry {value} at index {index}")]
    NegativeEntry { index: usize, value: f32 },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("matrix file {path}: {msg}")]
    FileFormat { path: String, msg: String },
    #[error("matrix file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "chi_square")]
    ChiSquare,
    #[serde(rename = "euclidean")]
    Euclidean,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ChiSquare => "chi_square",
            Metric::Euclidean => "euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "chi_square" | "chi2" => Some(Metric::ChiSquare),
            "euclidean" | "l2" => Some(Metric::Euclidean),
            _ => None,
        }
    }

    fn distance(self, x: &[f32], y: &[f32]) -> Result<f64, MatchError> {
        match self {
            Metric::ChiSquare => chi_square(x, y),
            Metric::Euclidean => euclidean(x, y),
        }
    }
}

/// Chi-square histogram distance. Entries must be non-negative and
/// finite; bins where both histograms are zero contribute nothing.
pub fn chi_square(x: &[f32], y: &[f32]) -> Result<f64, MatchError> {
    if x.len() != y.len() {
        return Err(MatchError::LengthMismatch(x.len(), y.len()));
    }
    let mut acc = 0.0f64;
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(MatchError::NonFinite(i));
        }
        if a < 0.0 {
            return Err(MatchError::NegativeEntry { index: i, value: a });
        }
        if b < 0.0 {
            return Err(MatchError::NegativeEntry { index: i, value: b });
        }
        let sum = a as f64 + b as f64;
        if sum > 0.0 {
            let d = a as f64 - b as f64;
            acc += d * d / sum;
        }
    }
    Ok(acc)
}

/// Euclidean distance; entries may be negative (reduced vectors).
pub fn euclidean(x: &[f32], y: &[f32]) -> Result<f64, MatchError> {
    if x.len() != y.len() {
        return Err(MatchError::LengthMismatch(x.len(), y.len()));
    }
    let mut acc = 0.0f64;
    for (i, (&a, &b)) in x.iter().zip(y).enumerate() {
        if !a.is_finite() || !b.is_finite() {
            return Err(MatchError::NonFinite(i));
        }
        let d = a as f64 - b as f64;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// One id-tagged feature vector, the matcher's input currency.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub values: Vec<f32>,
}

/// Probe-by-gallery distance matrix with the ids that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    probe_ids: Vec<String>,
    gallery_ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn probe_ids(&self) -> &[String] {
        &self.probe_ids
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.gallery_ids
    }

    pub fn rows(&self) -> usize {
        self.probe_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.gallery_ids.len()
    }

    pub fn get(&self, probe: usize, gallery: usize) -> f64 {
        self.values[probe * self.gallery_ids.len() + gallery]
    }

    pub fn row(&self, probe: usize) -> &[f64] {
        let g = self.gallery_ids.len();
        &self.values[probe * g..(probe + 1) * g]
    }

    /// Apply a strictly increasing function to every distance; rankings
    /// are unchanged.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DistanceMatrix {
        DistanceMatrix {
            probe_ids: self.probe_ids.clone(),
            gallery_ids: self.gallery_ids.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn from_parts(
        probe_ids: Vec<String>,
        gallery_ids: Vec<String>,
        values: Vec<f64>,
    ) -> Result<DistanceMatrix, MatchError> {
        if probe_ids.is_empty() {
            return Err(MatchError::EmptySet("probe"));
        }
        if gallery_ids.is_empty() {
            return Err(MatchError::EmptySet("gallery"));
        }
        if values.len() != probe_ids.len() * gallery_ids.len() {
            return Err(MatchError::LengthMismatch(
                values.len(),
                probe_ids.len() * gallery_ids.len(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatchError::NonFinite(i));
        }
        Ok(DistanceMatrix {
            probe_ids,
            gallery_ids,
            values,
        })
    }

    /// Write as CSV: header of gallery ids, one row per probe.
    pub fn write_csv(&self, path: &Path) -> Result<(), MatchError> {
        let io_err = |source: std::io::Error| MatchError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = String::new();
        out.push_str("probe_id");
        for gid in &self.gallery_ids {
            out.push(',');
            out.push_str(gid);
        }
        out.push('\n');
        for (i, pid) in self.probe_ids.iter().enumerate() {
            out.push_str(pid);
            for &v in self.row(i) {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(io_err)
    }

    pub fn read_csv(path: &Path) -> Result<DistanceMatrix, MatchError> {
        let fmt_err = |msg: String| MatchError::FileFormat {
            path: path.display().to_string(),
            msg,
        };
        let io_err = |source: std::io::Error| MatchError::Io {
            path: path.display().to_string(),
            source,
        };
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| fmt_err("empty file".into()))?;
        let mut cells = header.split(',');
        if cells.next() != Some("probe_id") {
            return Err(fmt_err("header must start with probe_id".into()));
        }
        let gallery_ids: Vec<String> = cells.map(str::to_string).collect();
        let mut probe_ids = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            probe_ids.push(
                cells
                    .next()
                    .ok_or_else(|| fmt_err(format!("row {}: missing probe id", ln + 2)))?
                    .to_string(),
            );
            let row: Vec<f64> = cells
                .map(|c| c.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| fmt_err(format!("row {}: {e}", ln + 2)))?;
            if row.len() != gallery_ids.len() {
                return Err(fmt_err(format!(
                    "row {} has {} values, header has {} gallery ids",
                    ln + 2,
                    row.len(),
                    gallery_ids.len()
                )));
            }
            values.extend(row);
        }
        DistanceMatrix::from_parts(probe_ids, gallery_ids, values)
    }
}

/// Full probe-by-gallery distance matrix. Rows are computed in parallel;
/// results do not depend on scheduling.
pub fn distance_matrix(
    probes: &[Sample],
    gallery: &[Sample],
    metric: Metric,
) -> Result<DistanceMatrix, MatchError> {
    if probes.is_empty() {
        return Err(MatchError::EmptySet("probe"));
    }
    if gallery.is_empty() {
        return Err(MatchError::EmptySet("gallery"));
    }
    for set in [probes, gallery] {
        let mut seen = std::collections::HashSet::new();
        for s in set {
            if !seen.insert(s.id.as_str()) {
                return Err(MatchError::DuplicateId(s.id.clone()));
            }
        }
    }
    let dim = gallery[0].values.len();
    for s in probes.iter().chain(gallery) {
        if s.values.len() != dim {
            return Err(MatchError::LengthMismatch(s.values.len(), dim));
        }
    }
    let values: Vec<f64> = probes
        .par_iter()
        .map(|p| {
            gallery
                .iter()
                .map(|g| metric.distance(&p.values, &g.values))
                .collect::<Result<Vec<f64>, MatchError>>()
        })
        .collect::<Result<Vec<Vec<f64>>, MatchError>>()?
        .into_iter()
        .flatten()
        .collect();
    DistanceMatrix::from_parts(
        probes.iter().map(|s| s.id.clone()).collect(),
        gallery.iter().map(|s| s.id.clone()).collect(),
        values,
    )
}

/// Gallery indices sorted by ascending distance; ties break toward the
/// lower index, so the result is a deterministic permutation.
pub fn rank_gallery(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order
}
