//! Independent analytical checks: closed-form momentum-chain variances, the
//! Monte-Carlo chains that validate them, and a long-run geometric-median
//! oracle.
//!
//! Nothing here calls into the engine or aggregation code. These are the
//! reference computations that the rest of the crate is checked against.

use crate::error::{Result, SimError};
use crate::rng::{derive_stream, Purpose, RngStream};
use crate::vector::{mean_of, Vector};

/// Empirical steady-state variances of the two chained estimators.
#[derive(Debug, Clone)]
pub struct MomentumChainStats {
    pub var_v: f64,
    pub var_u: f64,
    pub eta: f64,
    pub sigma: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl MomentumChainStats {
    pub fn ratio(&self) -> f64 {
        self.var_u / self.var_v
    }
}

/// Steady-state variance ratio of the double- over the single-momentum
/// estimator: `(2 - 2 eta + eta^2) / (2 - eta)^2`, in [1/2, 1) on (0, 1).
pub fn variance_ratio_theory(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SimError::config(format!("eta = {eta} outside (0, 1)")));
    }
    Ok((2.0 - 2.0 * eta + eta * eta) / ((2.0 - eta) * (2.0 - eta)))
}

/// Steady-state variance of the single-momentum chain in units of sigma^2:
/// `eta / (2 - eta)`.
pub fn single_momentum_var_theory(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(SimError::config(format!("eta = {eta} outside (0, 1]")));
    }
    Ok(eta / (2.0 - eta))
}

/// Simulate the scalar chains `v' = (1-eta) v + eta g`, `u' = (1-eta) u +
/// eta v'` on `g = mu + noise` with i.i.d. Gaussian noise, discard the first
/// half as burn-in, and report empirical variances.
pub fn mc_momentum_chains(eta: f64, sigma: f64, horizon: usize, seed: u64) -> Result<MomentumChainStats> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(SimError::config(format!("eta = {eta} outside (0, 1)")));
    }
    if horizon < (10.0 / eta) as usize {
        return Err(SimError::config(format!(
            "horizon {horizon} too short for burn-in at eta = {eta}"
        )));
    }
    let mu = 1.0;
    let mut rng = derive_stream(seed, 0, 0, Purpose::SynthData);
    let mut v = 0.0;
    let mut u = 0.0;
    let burn_in = horizon / 2;
    let kept = horizon - burn_in;
    let (mut sv, mut svv, mut su, mut suu) = (0.0, 0.0, 0.0, 0.0);
    for t in 0..horizon {
        let g = mu + sigma * rng.normal();
        v = (1.0 - eta) * v + eta * g;
        u = (1.0 - eta) * u + eta * v;
        if t >= burn_in {
            sv += v;
            svv += v * v;
            su += u;
            suu += u * u;
        }
    }
    let n = kept as f64;
    let var_v = svv / n - (sv / n) * (sv / n);
    let var_u = suu / n - (su / n) * (su / n);
    Ok(MomentumChainStats {
        var_v,
        var_u,
        eta,
        sigma,
        horizon,
        seed,
    })
}

/// Long-run smoothed Weiszfeld: `iters` iterations with a tiny floor,
/// asserting the objective never increases beyond rounding slack.
pub fn geomedian_oracle(points: &[Vector], iters: usize) -> Result<Vector> {
    if points.is_empty() {
        return Err(SimError::config("geometric median of no points"));
    }
    let smoothing = 1e-12;
    let objective = |x: &Vector| -> Result<f64> {
        Ok(points
            .iter()
            .map(|p| x.dist_sq(p).map(f64::sqrt))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .sum())
    };
    let mut x = mean_of(points)?;
    let mut obj = objective(&x)?;
    for _ in 0..iters {
        let next = crate::aggregate::weiszfeld_step(&x, points, smoothing)?;
        let next_obj = objective(&next)?;
        if next_obj > obj * (1.0 + 1e-12) + 1e-300 {
            return Err(SimError::Protocol(format!(
                "Weiszfeld objective increased: {obj} -> {next_obj}"
            )));
        }
        x = next;
        obj = next_obj;
    }
    Ok(x)
}

/// One line of the verification suite report.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Run the full oracle suite: momentum-chain variances against their closed
/// forms, compressor contraction properties, and aggregator oracle
/// agreement. Returns one line per check.
pub fn run_suite() -> Vec<CheckLine> {
    let mut lines = Vec::new();

    // Momentum chains at the standard grid.
    for &eta in &[0.1, 0.3, 0.5] {
        let stats = mc_momentum_chains(eta, 1.0, 1_000_000, 20_240_501).expect("chain config valid");
        let v_theory = single_momentum_var_theory(eta).expect("eta valid");
        let r_theory = variance_ratio_theory(eta).expect("eta valid");
        let v_err = (stats.var_v - v_theory).abs() / v_theory;
        let r_err = (stats.ratio() - r_theory).abs() / r_theory;
        lines.push(CheckLine {
            name: format!("momentum-variance eta={eta}"),
            passed: v_err < 0.05 && r_err < 0.05,
            detail: format!(
                "var_v={:.6} (theory {:.6}), ratio={:.6} (theory {:.6})",
                stats.var_v,
                v_theory,
                stats.ratio(),
                r_theory
            ),
        });
    }

    // Top-k deterministic contraction at the a9a shape.
    {
        let (d, k) = (123usize, 12usize);
        let mut rng = derive_stream(99, 0, 0, Purpose::SynthData);
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for _ in 0..1000 {
            let x = Vector::from_vec((0..d).map(|_| rng.normal()).collect());
            let msg = crate::compress::compress(
                crate::compress::CompressorSpec::TopK { k },
                &x,
                &mut rng,
            )
            .expect("valid spec");
            let residual = msg.densify().sub(&x).expect("same dim").norm_sq();
            let bound = (1.0 - k as f64 / d as f64) * x.norm_sq();
            worst = worst.max(residual / bound);
            ok &= residual <= bound;
        }
        lines.push(CheckLine {
            name: "topk-contraction d=123 k=12".into(),
            passed: ok,
            detail: format!("worst residual/bound = {worst:.6}"),
        });
    }

    // Rand-k mean residual ratio.
    {
        let (d, k) = (123usize, 12usize);
        let mut rng = derive_stream(101, 0, 0, Purpose::SynthData);
        let x = Vector::from_vec((0..d).map(|_| rng.normal()).collect());
        let mut sum = 0.0;
        let trials = 10_000;
        for _ in 0..trials {
            let msg = crate::compress::compress(
                crate::compress::CompressorSpec::rand_k(k),
                &x,
                &mut rng,
            )
            .expect("valid spec");
            sum += msg.densify().sub(&x).expect("same dim").norm_sq() / x.norm_sq();
        }
        let mean_ratio = sum / trials as f64;
        let target = 1.0 - k as f64 / d as f64;
        let rel = (mean_ratio - target).abs() / target;
        lines.push(CheckLine {
            name: "randk-residual d=123 k=12".into(),
            passed: rel < 0.02,
            detail: format!("mean ratio {mean_ratio:.6} vs {target:.6}"),
        });
    }

    // RFA eight-step objective against the long-run oracle.
    {
        let mut rng = derive_stream(103, 0, 0, Purpose::SynthData);
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for _ in 0..100 {
            let pts: Vec<Vector> = (0..10)
                .map(|_| Vector::from_vec(vec![rng.next_f64(), rng.next_f64()]))
                .collect();
            let fast = crate::aggregate::rfa(&pts, 8, 1e-6).expect("valid");
            let oracle = geomedian_oracle(&pts, 10_000).expect("oracle converges");
            let obj = |x: &Vector| -> f64 {
                pts.iter()
                    .map(|p| x.dist_sq(p).expect("dim").sqrt())
                    .sum()
            };
            let (fo, oo) = (obj(&fast), obj(&oracle));
            let excess = fo / oo - 1.0;
            worst = worst.max(excess);
            ok &= excess <= 1e-3;
        }
        lines.push(CheckLine {
            name: "rfa-8step objective vs oracle".into(),
            passed: ok,
            detail: format!("worst excess {worst:.2e}"),
        });
    }

    lines
}
