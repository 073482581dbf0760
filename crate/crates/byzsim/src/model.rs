//! L2-regularized binary logistic regression oracles.
//!
//! The per-sample loss is `log(1 + exp(-b a.x)) + lambda ||x||^2`, with the
//! regularizer written exactly that way (no 1/2 factor), so `lambda = 1/m`
//! reproduces the usual experimental setting. The logistic term is evaluated
//! through the softplus identity `log(1+e^z) = max(z,0) + log(1+e^-|z|)`,
//! which stays finite for any finite margin.

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::vector::Vector;

/// One worker's local problem: its shard plus the regularization weight.
#[derive(Debug, Clone)]
pub struct LogRegProblem {
    shard: Dataset,
    lambda: f64,
}

/// Numerically stable `log(1 + exp(z))`.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Numerically stable logistic sigmoid.
#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogRegProblem {
    /// Build a problem over `shard`. `lambda = None` applies the default
    /// `1 / m` for a shard of `m` samples.
    pub fn new(shard: Dataset, lambda: Option<f64>) -> Result<Self> {
        let lambda = lambda.unwrap_or(1.0 / shard.len() as f64);
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(SimError::config(format!("lambda {lambda} must be >= 0")));
        }
        Ok(LogRegProblem { shard, lambda })
    }

    pub fn shard(&self) -> &Dataset {
        &self.shard
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.shard.dim()
    }

    pub fn n_samples(&self) -> usize {
        self.shard.len()
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(SimError::Dimension {
                left: x.len(),
                right: self.dim(),
            });
        }
        Ok(())
    }

    fn check_idx(&self, sample_idx: usize) -> Result<()> {
        if sample_idx >= self.n_samples() {
            return Err(SimError::IndexOutOfRange {
                index: sample_idx,
                limit: self.n_samples(),
            });
        }
        Ok(())
    }

    /// Mean logistic loss over the shard plus `lambda ||x||^2`.
    pub fn loss(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        let mut acc = 0.0;
        for i in 0..self.n_samples() {
            let margin = self.margin(x, i);
            acc += softplus(-margin);
        }
        Ok(acc / self.n_samples() as f64 + self.lambda * x.norm_sq())
    }

    /// `b_i * (a_i . x)` for sample `i`.
    #[inline]
    fn margin(&self, x: &Vector, i: usize) -> f64 {
        let row = self.shard.feature_row(i);
        let dot: f64 = row.iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
        self.shard.label(i) * dot
    }

    /// Scalar coefficient of the logistic gradient term for sample `i`:
    /// the gradient is `coeff * a_i + 2 lambda x` with
    /// `coeff = -b_i * sigmoid(-b_i a_i.x)`.
    #[inline]
    fn grad_coeff(&self, x: &Vector, i: usize) -> f64 {
        -self.shard.label(i) * sigmoid(-self.margin(x, i))
    }

    /// Stochastic gradient at one sample.
    pub fn stoch_grad(&self, x: &Vector, sample_idx: usize) -> Result<Vector> {
        self.check_dim(x)?;
        self.check_idx(sample_idx)?;
        let coeff = self.grad_coeff(x, sample_idx);
        let row = self.shard.feature_row(sample_idx);
        let two_lambda = 2.0 * self.lambda;
        let values = row
            .iter()
            .zip(x.as_slice())
            .map(|(a, xi)| coeff * a + two_lambda * xi)
            .collect();
        Ok(Vector::from_vec(values))
    }

    /// Gradients at `x_new` and `x_old` sharing a single sample draw, as the
    /// variance-reduced momentum update requires.
    pub fn stoch_grad_pair(
        &self,
        x_new: &Vector,
        x_old: &Vector,
        sample_idx: usize,
    ) -> Result<(Vector, Vector)> {
        Ok((
            self.stoch_grad(x_new, sample_idx)?,
            self.stoch_grad(x_old, sample_idx)?,
        ))
    }

    /// Mean of stochastic gradients over a set of indices.
    pub fn batch_grad(&self, x: &Vector, indices: &[usize]) -> Result<Vector> {
        self.check_dim(x)?;
        if indices.is_empty() {
            return Err(SimError::config("batch gradient over empty index set"));
        }
        let mut acc = Vector::zeros(self.dim());
        for &i in indices {
            self.check_idx(i)?;
            let coeff = self.grad_coeff(x, i);
            let row = self.shard.feature_row(i);
            for (a, &f) in acc.as_mut_slice().iter_mut().zip(row) {
                *a += coeff * f;
            }
        }
        let inv = 1.0 / indices.len() as f64;
        let two_lambda = 2.0 * self.lambda;
        for (a, &xi) in acc.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *a = *a * inv + two_lambda * xi;
        }
        Ok(acc)
    }

    /// Full gradient: the average of `stoch_grad` over every sample.
    pub fn full_grad(&self, x: &Vector) -> Result<Vector> {
        let all: Vec<usize> = (0..self.n_samples()).collect();
        self.batch_grad(x, &all)
    }

    /// Loss and full gradient in a single pass over the shard.
    pub fn loss_and_grad(&self, x: &Vector) -> Result<(f64, Vector)> {
        self.check_dim(x)?;
        let mut loss_acc = 0.0;
        let mut grad = Vector::zeros(self.dim());
        for i in 0..self.n_samples() {
            let margin = self.margin(x, i);
            loss_acc += softplus(-margin);
            let coeff = -self.shard.label(i) * sigmoid(-margin);
            let row = self.shard.feature_row(i);
            for (a, &f) in grad.as_mut_slice().iter_mut().zip(row) {
                *a += coeff * f;
            }
        }
        let inv = 1.0 / self.n_samples() as f64;
        let two_lambda = 2.0 * self.lambda;
        for (a, &xi) in grad.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *a = *a * inv + two_lambda * xi;
        }
        Ok((loss_acc * inv + self.lambda * x.norm_sq(), grad))
    }

    /// Per-sample smoothness bound for this shard:
    /// `max_j ||a_j||^2 / 4 + 2 lambda`.
    pub fn lipschitz_bound(&self) -> f64 {
        let max_sq = (0..self.n_samples())
            .map(|i| {
                self.shard
                    .feature_row(i)
                    .iter()
                    .map(|a| a * a)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        max_sq / 4.0 + 2.0 * self.lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_libsvm, synth_logreg};
    use crate::rng::{derive_stream, Purpose};

    fn tiny(lines: &str, dim: usize, lambda: f64) -> LogRegProblem {
        LogRegProblem::new(parse_libsvm(lines, dim).unwrap(), Some(lambda)).unwrap()
    }

    #[test]
    fn loss_at_origin_is_log2() {
        let p = tiny("+1 1:1 2:-3\n-1 2:2", 2, 0.0);
        let x = Vector::zeros(2);
        assert!((p.loss(&x).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_saturates_to_regularizer() {
        // a = [1], b = +1, large positive x: the logistic term vanishes and
        // only lambda * t^2 remains.
        let p = tiny("+1 1:1", 1, 0.5);
        let t = 300.0;
        let x = Vector::from_vec(vec![t]);
        assert!((p.loss(&x).unwrap() - 0.5 * t * t).abs() < 1e-9);
    }

    #[test]
    fn loss_stable_at_huge_margin() {
        let p = tiny("-1 1:1", 1, 0.0);
        let x = Vector::from_vec(vec![700.0]);
        let loss = p.loss(&x).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 700.0).abs() < 1e-9); // log(1+e^700) ~ 700
    }

    #[test]
    fn loss_matches_naive_formula() {
        let mut rng = derive_stream(2, 0, 0, Purpose::SynthData);
        let data = synth_logreg(40, 5, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, Some(0.03)).unwrap();
        let x = Vector::from_vec((0..5).map(|_| rng.normal() * 0.3).collect());
        // Direct formula, no softplus trick.
        let mut naive = 0.0;
        for i in 0..p.n_samples() {
            let dot: f64 = p
                .shard()
                .feature_row(i)
                .iter()
                .zip(x.as_slice())
                .map(|(a, b)| a * b)
                .sum();
            naive += (1.0 + (-p.shard().label(i) * dot).exp()).ln();
        }
        naive = naive / p.n_samples() as f64 + 0.03 * x.norm_sq();
        assert!((p.loss(&x).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn stoch_grad_at_origin() {
        let p = tiny("+1 1:2 2:0", 2, 0.0);
        let g = p.stoch_grad(&Vector::zeros(2), 0).unwrap();
        assert_eq!(g.as_slice(), &[-1.0, 0.0]);
    }

    #[test]
    fn stoch_grad_regularizer_only() {
        // Zero feature row: gradient is exactly 2 lambda x.
        let p = tiny("+1 1:0", 1, 0.25);
        let x = Vector::from_vec(vec![3.0]);
        let g = p.stoch_grad(&x, 0).unwrap();
        assert!((g[0] - 2.0 * 0.25 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn stoch_grad_index_error() {
        let p = tiny("+1 1:1", 1, 0.0);
        assert!(p.stoch_grad(&Vector::zeros(1), 1).is_err());
    }

    #[test]
    fn finite_difference_agreement() {
        let mut rng = derive_stream(4, 0, 0, Purpose::SynthData);
        let data = synth_logreg(30, 6, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, Some(0.02)).unwrap();
        let h = 1e-6;
        for _ in 0..100 {
            let x = Vector::from_vec((0..6).map(|_| rng.normal()).collect());
            let idx = rng.index(p.n_samples());
            let g = p.stoch_grad(&x, idx).unwrap();
            for j in 0..6 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                // Per-sample objective evaluated directly.
                let f = |y: &Vector| {
                    let dot: f64 = p
                        .shard()
                        .feature_row(idx)
                        .iter()
                        .zip(y.as_slice())
                        .map(|(a, b)| a * b)
                        .sum();
                    (1.0 + (-p.shard().label(idx) * dot).exp()).ln() + p.lambda() * y.norm_sq()
                };
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                let denom = g[j].abs().max(1.0);
                assert!(
                    (g[j] - fd).abs() / denom < 1e-5,
                    "coord {j}: analytic {} vs fd {fd}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn full_grad_is_mean_of_stoch_grads() {
        let mut rng = derive_stream(5, 0, 0, Purpose::SynthData);
        let data = synth_logreg(25, 4, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, Some(0.05)).unwrap();
        let x = Vector::from_vec((0..4).map(|_| rng.normal()).collect());
        let mut acc = Vector::zeros(4);
        for i in 0..p.n_samples() {
            acc = acc.add(&p.stoch_grad(&x, i).unwrap()).unwrap();
        }
        let mean = acc.scale(1.0 / p.n_samples() as f64);
        let full = p.full_grad(&x).unwrap();
        for j in 0..4 {
            assert!((mean[j] - full[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_grad_at_origin_single_sample() {
        let p = tiny("-1 1:3 2:1", 2, 0.0);
        let g = p.full_grad(&Vector::zeros(2)).unwrap();
        // -b a / 2 with b = -1.
        assert_eq!(g.as_slice(), &[1.5, 0.5]);
    }

    #[test]
    fn identical_samples_collapse_variance() {
        let p = tiny("+1 1:2\n+1 1:2\n+1 1:2", 1, 0.1);
        let x = Vector::from_vec(vec![0.7]);
        let full = p.full_grad(&x).unwrap();
        let one = p.stoch_grad(&x, 1).unwrap();
        assert!((full[0] - one[0]).abs() < 1e-15);
    }

    #[test]
    fn pair_shares_sample_and_matches_components() {
        let p = tiny("+1 1:1 2:2\n-1 1:-1 2:0.5", 2, 0.01);
        let xn = Vector::from_vec(vec![0.3, -0.2]);
        let xo = Vector::from_vec(vec![0.1, 0.4]);
        let (gn, go) = p.stoch_grad_pair(&xn, &xo, 1).unwrap();
        assert!(gn.bit_eq(&p.stoch_grad(&xn, 1).unwrap()));
        assert!(go.bit_eq(&p.stoch_grad(&xo, 1).unwrap()));
        let (a, b) = p.stoch_grad_pair(&xn, &xn, 0).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn pair_difference_respects_lipschitz_bound() {
        let mut rng = derive_stream(6, 0, 0, Purpose::SynthData);
        let data = synth_logreg(30, 5, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, Some(0.02)).unwrap();
        let ell = p.lipschitz_bound();
        for _ in 0..200 {
            let xn = Vector::from_vec((0..5).map(|_| rng.normal()).collect());
            let xo = Vector::from_vec((0..5).map(|_| rng.normal()).collect());
            let idx = rng.index(p.n_samples());
            let (gn, go) = p.stoch_grad_pair(&xn, &xo, idx).unwrap();
            let diff = gn.sub(&go).unwrap().norm_sq().sqrt();
            let dist = xn.sub(&xo).unwrap().norm_sq().sqrt();
            assert!(diff <= ell * dist * (1.0 + 1e-12));
        }
    }

    #[test]
    fn loss_is_midpoint_convex_on_probes() {
        let mut rng = derive_stream(7, 0, 0, Purpose::SynthData);
        let data = synth_logreg(20, 4, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, Some(0.01)).unwrap();
        for _ in 0..50 {
            let a = Vector::from_vec((0..4).map(|_| rng.normal()).collect());
            let b = Vector::from_vec((0..4).map(|_| rng.normal()).collect());
            let mid = a.add(&b).unwrap().scale(0.5);
            let lhs = p.loss(&mid).unwrap();
            let rhs = 0.5 * (p.loss(&a).unwrap() + p.loss(&b).unwrap());
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn loss_and_grad_matches_separate_calls() {
        let mut rng = derive_stream(8, 0, 0, Purpose::SynthData);
        let data = synth_logreg(30, 5, 1.0, &mut rng).unwrap();
        let p = LogRegProblem::new(data, None).unwrap();
        let x = Vector::from_vec((0..5).map(|_| rng.normal()).collect());
        let (l, g) = p.loss_and_grad(&x).unwrap();
        assert!((l - p.loss(&x).unwrap()).abs() < 1e-14);
        let full = p.full_grad(&x).unwrap();
        for j in 0..5 {
            assert!((g[j] - full[j]).abs() < 1e-14);
        }
    }
}
