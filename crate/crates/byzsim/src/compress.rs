//! Contractive compression operators and their sparse wire format.
//!
//! All three operators satisfy `E||C(x) - x||^2 <= (1 - alpha) ||x||^2`
//! with `alpha = k/d` for Top-k and Rand-k and `alpha = 1` for identity.
//! Top-k keeps the k entries of largest absolute value (lowest index wins
//! ties), which makes the contraction bound hold deterministically, not just
//! in expectation. Rand-k keeps k uniformly chosen coordinates at their
//! original values; the unbiased `d/k` rescaling is available behind a flag
//! but is not the default, matching the contractive convention.

use crate::error::{Result, SimError};
use crate::rng::RngStream;
use crate::vector::Vector;

/// Which compressor to apply to worker updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorSpec {
    TopK { k: usize },
    RandK { k: usize, rescale: bool },
    Identity,
}

impl CompressorSpec {
    pub fn rand_k(k: usize) -> Self {
        CompressorSpec::RandK { k, rescale: false }
    }

    fn validate(&self, dim: usize) -> Result<usize> {
        match *self {
            CompressorSpec::TopK { k } | CompressorSpec::RandK { k, .. } => {
                if k == 0 || k > dim {
                    Err(SimError::config(format!("k = {k} outside 1..={dim}")))
                } else {
                    Ok(k)
                }
            }
            CompressorSpec::Identity => Ok(dim),
        }
    }

    /// Whether compression consumes randomness.
    pub fn is_randomized(&self) -> bool {
        matches!(self, CompressorSpec::RandK { .. })
    }
}

/// Compressed update: strictly increasing indices with their values, plus
/// the ambient dimension. Accounting convention: 4 bytes per index and
/// 8 bytes per value.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMessage {
    entries: Vec<(u32, f64)>,
    dim: usize,
}

impl SparseMessage {
    pub fn new(entries: Vec<(u32, f64)>, dim: usize) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(SimError::Protocol(
                    "message indices must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&(last, _)) = entries.last() {
            if last as usize >= dim {
                return Err(SimError::IndexOutOfRange {
                    index: last as usize,
                    limit: dim,
                });
            }
        }
        Ok(SparseMessage { entries, dim })
    }

    /// Sparse view of a vector's nonzero coordinates.
    pub fn from_nonzeros(v: &Vector) -> Self {
        let entries = v
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x != 0.0)
            .map(|(j, &x)| (j as u32, x))
            .collect();
        SparseMessage {
            entries,
            dim: v.len(),
        }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn byte_cost(&self) -> u64 {
        12 * self.entries.len() as u64
    }

    /// Zero-filled expansion to a dense vector.
    pub fn densify(&self) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for &(j, v) in &self.entries {
            out[j as usize] = v;
        }
        out
    }

    pub fn negated(&self) -> SparseMessage {
        SparseMessage {
            entries: self.entries.iter().map(|&(j, v)| (j, -v)).collect(),
            dim: self.dim,
        }
    }
}

/// Contraction parameter `alpha` of a compressor at dimension `d`.
pub fn alpha_of(spec: CompressorSpec, dim: usize) -> Result<f64> {
    let k = spec.validate(dim)?;
    Ok(match spec {
        CompressorSpec::Identity => 1.0,
        _ => k as f64 / dim as f64,
    })
}

/// Apply a compressor to `x`. Randomness is consumed only by Rand-k.
pub fn compress(spec: CompressorSpec, x: &Vector, rng: &mut RngStream) -> Result<SparseMessage> {
    let dim = x.len();
    let k = spec.validate(dim)?;
    let entries = match spec {
        CompressorSpec::Identity => x
            .as_slice()
            .iter()
            .enumerate()
            .map(|(j, &v)| (j as u32, v))
            .collect(),
        CompressorSpec::TopK { .. } => {
            let mut order: Vec<usize> = (0..dim).collect();
            // Largest absolute value first; ties go to the lower index.
            order.sort_by(|&a, &b| {
                x[b].abs()
                    .total_cmp(&x[a].abs())
                    .then_with(|| a.cmp(&b))
            });
            let mut kept: Vec<usize> = order[..k].to_vec();
            kept.sort_unstable();
            kept.into_iter().map(|j| (j as u32, x[j])).collect()
        }
        CompressorSpec::RandK { rescale, .. } => {
            let kept = rng.sample_indices(dim, k);
            let factor = if rescale { dim as f64 / k as f64 } else { 1.0 };
            kept.into_iter()
                .map(|j| (j as u32, x[j] * factor))
                .collect()
        }
    };
    SparseMessage::new(entries, dim)
}
