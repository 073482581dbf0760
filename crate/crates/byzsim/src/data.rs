//! Datasets: LIBSVM parsing, synthetic generation, and worker partitioning.

use std::io::Read;

use crate::error::{Result, SimError};
use crate::rng::RngStream;

/// Binary-classification dataset with dense features and labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(SimError::Dimension {
                left: features.len(),
                right: labels.len(),
            });
        }
        for row in &features {
            if row.len() != dim {
                return Err(SimError::Dimension {
                    left: row.len(),
                    right: dim,
                });
            }
        }
        for &b in &labels {
            if b != 1.0 && b != -1.0 {
                return Err(SimError::config(format!("label {b} is not in {{-1, +1}}")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// New dataset with every label negated and features untouched.
    pub fn with_negated_labels(&self) -> Dataset {
        Dataset {
            features: self.features.clone(),
            labels: self.labels.iter().map(|b| -b).collect(),
            dim: self.dim,
        }
    }
}

/// How samples are split across workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    /// Seeded random permutation, then contiguous near-equal shards.
    IidUniform,
    /// Sort by label, then contiguous shards: maximal label heterogeneity.
    LabelSorted,
}

/// Parse LIBSVM text: `<label> <idx>:<val> ...` per line, 1-based indices.
/// Labels 0/1 are remapped to -1/+1. Absent indices are zero-filled.
pub fn parse_libsvm(text: &str, dim: usize) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let label_tok = tokens.next().expect("nonblank line has a first token");
        let label_val: f64 = label_tok.parse().map_err(|_| SimError::Parse {
            line,
            msg: format!("unparseable label {label_tok:?}"),
        })?;
        let label = match label_val {
            v if v == 1.0 => 1.0,
            v if v == -1.0 => -1.0,
            v if v == 0.0 => -1.0,
            v => {
                return Err(SimError::Parse {
                    line,
                    msg: format!("label {v} is not in {{-1, 0, +1}}"),
                })
            }
        };
        let mut row = vec![0.0; dim];
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| SimError::Parse {
                line,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| SimError::Parse {
                line,
                msg: format!("bad feature index {idx_str:?}"),
            })?;
            let val: f64 = val_str.parse().map_err(|_| SimError::Parse {
                line,
                msg: format!("bad feature value {val_str:?}"),
            })?;
            if idx == 0 || idx > dim {
                return Err(SimError::Parse {
                    line,
                    msg: format!("feature index {idx} outside 1..={dim}"),
                });
            }
            row[idx - 1] = val;
        }
        features.push(row);
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(SimError::config("dataset has no samples"));
    }
    Dataset::new(features, labels, dim)
}

/// Read a LIBSVM file, transparently gunzipping when `gzip` is set.
pub fn read_libsvm_file(path: &std::path::Path, dim: usize, gzip: bool) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let text = if gzip {
        let mut out = String::new();
        flate2::read::GzDecoder::new(&bytes[..])
            .read_to_string(&mut out)
            .map_err(|e| SimError::Parse {
                line: 0,
                msg: format!("gzip decode failed: {e}"),
            })?;
        out
    } else {
        String::from_utf8(bytes).map_err(|e| SimError::Parse {
            line: 0,
            msg: format!("not UTF-8: {e}"),
        })?
    };
    parse_libsvm(&text, dim)
}

/// Serialize back to LIBSVM text. Nonzero entries only, 1-based indices,
/// values printed with enough digits to round-trip exactly.
pub fn to_libsvm_string(data: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..data.len() {
        let label = if data.label(i) > 0.0 { "+1" } else { "-1" };
        out.push_str(label);
        for (j, &v) in data.feature_row(i).iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!(" {}:{:e}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

/// Split `data` into `n` shards. Shard sizes differ by at most one, with the
/// remainder spread over the leading shards.
pub fn partition(
    data: &Dataset,
    n: usize,
    scheme: PartitionScheme,
    rng: &mut RngStream,
) -> Result<Vec<Dataset>> {
    let m = data.len();
    if n == 0 || m < n {
        return Err(SimError::config(format!(
            "cannot split {m} samples across {n} workers"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    match scheme {
        PartitionScheme::IidUniform => rng.shuffle(&mut order),
        PartitionScheme::LabelSorted => {
            // Stable on the original index, so ordering is deterministic.
            order.sort_by(|&a, &b| data.label(a).partial_cmp(&data.label(b)).unwrap());
        }
    }
    let base = m / n;
    let rem = m % n;
    let mut shards = Vec::with_capacity(n);
    let mut start = 0;
    for w in 0..n {
        let size = base + usize::from(w < rem);
        let idx = &order[start..start + size];
        start += size;
        let features = idx.iter().map(|&i| data.feature_row(i).to_vec()).collect();
        let labels = idx.iter().map(|&i| data.label(i)).collect();
        shards.push(Dataset::new(features, labels, data.dim())?);
    }
    Ok(shards)
}

/// Generate a synthetic binary-classification problem: standard Gaussian
/// features, labels `sign(a·w* + noise)` for a unit ground-truth direction
/// `w*`. Label noise has standard deviation `1 / (1 + separation)`, so
/// larger separation means cleaner labels (infinite separation is noiseless).
pub fn synth_logreg(m: usize, dim: usize, separation: f64, rng: &mut RngStream) -> Result<Dataset> {
    if m == 0 || dim == 0 {
        return Err(SimError::config("synthetic dataset needs m >= 1, d >= 1"));
    }
    if separation < 0.0 {
        return Err(SimError::config("separation must be >= 0"));
    }
    let mut w_star: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let norm = w_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in w_star.iter_mut() {
        *x /= norm;
    }
    let noise_sd = if separation.is_infinite() {
        0.0
    } else {
        1.0 / (1.0 + separation)
    };
    let mut features = Vec::with_capacity(m);
    let mut labels = Vec::with_capacity(m);
    for _ in 0..m {
        let row: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let score: f64 = row.iter().zip(&w_star).map(|(a, w)| a * w).sum();
        let noisy = score + noise_sd * rng.normal();
        labels.push(if noisy >= 0.0 { 1.0 } else { -1.0 });
        features.push(row);
    }
    Dataset::new(features, labels, dim)
}
