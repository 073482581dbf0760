//! Byzantine message generation under the omniscient-attacker model.
//!
//! Attacks operate on the densified candidate messages of the current round:
//! the attacker sees every honest message, knows the aggregation rule, and
//! the Byzantine workers coordinate. Sign flipping negates the message a
//! protocol-following worker at that slot would have sent; label flipping is
//! handled upstream by poisoning the slot's shard and passes the reference
//! message through unchanged.

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::vector::{mean_of, Vector};

/// Attack model and strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackSpec {
    NoAttack,
    SignFlip,
    LabelFlip,
    /// Inner product manipulation: send `-(z/G) * sum of honest messages`.
    Ipm { z: f64 },
    /// A little is enough: send `mu_G - z * sigma_G` elementwise. `z = None`
    /// derives the standard strength from (n, B).
    Alie { z: Option<f64> },
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if let AttackSpec::Ipm { z } = self {
            if *z <= 0.0 || !z.is_finite() {
                return Err(SimError::config(format!("IPM strength z = {z} must be > 0")));
            }
        }
        if let AttackSpec::Alie { z: Some(z) } = self {
            if !z.is_finite() {
                return Err(SimError::config("ALIE strength must be finite".into()));
            }
        }
        Ok(())
    }

    /// Whether Byzantine slots behave as protocol-following workers (their
    /// reference messages go out unchanged).
    pub fn is_passthrough(&self) -> bool {
        matches!(self, AttackSpec::NoAttack | AttackSpec::LabelFlip)
    }
}

/// Everything the omniscient attacker observes in one round.
#[derive(Debug, Clone)]
pub struct AttackContext {
    /// Densified candidate messages of the honest workers.
    pub honest_messages: Vec<Vector>,
    /// Per Byzantine slot, the message a protocol-following worker there
    /// would have sent.
    pub reference_messages: Vec<Vector>,
}

/// Default ALIE strength for n workers with B Byzantine:
/// `z = quantile((n - B - s) / (n - B))` with `s = floor(n/2) + 1 - B`.
pub fn alie_default_z(n: usize, byzantine: usize) -> f64 {
    let g = (n - byzantine) as f64;
    let s = (n / 2 + 1).saturating_sub(byzantine) as f64;
    normal_quantile((g - s) / g)
}

/// Produce the B Byzantine messages for one round.
pub fn byz_messages(
    spec: AttackSpec,
    ctx: &AttackContext,
    byzantine: usize,
) -> Result<Vec<Vector>> {
    spec.validate()?;
    if ctx.honest_messages.is_empty() {
        return Err(SimError::Protocol(
            "attack context missing honest messages".into(),
        ));
    }
    if ctx.reference_messages.len() != byzantine {
        return Err(SimError::Protocol(format!(
            "expected {byzantine} reference messages, got {}",
            ctx.reference_messages.len()
        )));
    }
    let g = ctx.honest_messages.len();
    match spec {
        AttackSpec::NoAttack | AttackSpec::LabelFlip => Ok(ctx.reference_messages.clone()),
        AttackSpec::SignFlip => Ok(ctx
            .reference_messages
            .iter()
            .map(|c| c.scale(-1.0))
            .collect()),
        AttackSpec::Ipm { z } => {
            let mut sum = Vector::zeros(ctx.honest_messages[0].len());
            for c in &ctx.honest_messages {
                sum.axpy(1.0, c)?;
            }
            let msg = sum.scale(-z / g as f64);
            Ok(vec![msg; byzantine])
        }
        AttackSpec::Alie { z } => {
            let z = z.unwrap_or_else(|| alie_default_z(g + byzantine, byzantine));
            let mu = mean_of(&ctx.honest_messages)?;
            let dim = mu.len();
            let mut msg = Vector::zeros(dim);
            for j in 0..dim {
                let var = ctx
                    .honest_messages
                    .iter()
                    .map(|c| {
                        let d = c[j] - mu[j];
                        d * d
                    })
                    .sum::<f64>()
                    / g as f64;
                msg[j] = mu[j] - z * var.sqrt();
            }
            Ok(vec![msg; byzantine])
        }
    }
}

/// Negate every label in a shard; features are untouched.
pub fn poison_labels(shard: &Dataset) -> Dataset {
    shard.with_negated_labels()
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9 on (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0, 1), got {p}");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
