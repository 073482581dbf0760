//! Robust aggregation rules and nearest-neighbor pre-mixing.
//!
//! The server combines the n per-worker estimators with one of Mean, CM
//! (coordinate-wise median), CWTM (coordinate-wise trimmed mean), or RFA
//! (geometric median via smoothed Weiszfeld), optionally after NNM, which
//! replaces each input with the mean of its G = n - B nearest inputs.

use crate::error::{Result, SimError};
use crate::vector::{mean_of, Vector};

/// Base aggregation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseAggregator {
    Mean,
    CoordinateMedian,
    /// Discard the B smallest and B largest per coordinate.
    Cwtm { trim: usize },
    /// `steps` iterations of smoothed Weiszfeld with floor `smoothing`.
    Rfa { steps: usize, smoothing: f64 },
}

/// Full aggregator: optional NNM wrapper, then the base rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatorSpec {
    pub base: BaseAggregator,
    /// When set, apply NNM with this Byzantine bound first.
    pub nnm: Option<usize>,
}

impl AggregatorSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let BaseAggregator::Cwtm { trim } = self.base {
            if 2 * trim >= n {
                return Err(SimError::config(format!(
                    "CWTM needs 2B < n, got B = {trim}, n = {n}"
                )));
            }
        }
        if let BaseAggregator::Rfa { steps, smoothing } = self.base {
            if steps == 0 || smoothing <= 0.0 {
                return Err(SimError::config(
                    "RFA needs steps >= 1 and smoothing > 0".into(),
                ));
            }
        }
        if let Some(b) = self.nnm {
            if 2 * b >= n {
                return Err(SimError::config(format!(
                    "NNM needs B < n/2, got B = {b}, n = {n}"
                )));
            }
        }
        Ok(())
    }
}

fn require_nonempty(vectors: &[Vector]) -> Result<usize> {
    match vectors.first() {
        None => Err(SimError::config("aggregation over empty input")),
        Some(v) => Ok(v.len()),
    }
}

/// Arithmetic mean, summed in input order.
pub fn mean(vectors: &[Vector]) -> Result<Vector> {
    require_nonempty(vectors)?;
    mean_of(vectors)
}

/// Per-coordinate median; even counts average the two middle order
/// statistics.
pub fn coordinate_median(vectors: &[Vector]) -> Result<Vector> {
    let dim = require_nonempty(vectors)?;
    let n = vectors.len();
    let mut out = Vector::zeros(dim);
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for (c, v) in column.iter_mut().zip(vectors) {
            *c = v[j];
        }
        column.sort_by(f64::total_cmp);
        out[j] = if n % 2 == 1 {
            column[n / 2]
        } else {
            (column[n / 2 - 1] + column[n / 2]) / 2.0
        };
    }
    Ok(out)
}

/// Per-coordinate trimmed mean: sort, drop the `trim` smallest and largest,
/// average the rest in sorted order.
pub fn cwtm(vectors: &[Vector], trim: usize) -> Result<Vector> {
    let dim = require_nonempty(vectors)?;
    let n = vectors.len();
    if 2 * trim >= n {
        return Err(SimError::config(format!(
            "CWTM needs 2B < n, got B = {trim}, n = {n}"
        )));
    }
    let mut out = Vector::zeros(dim);
    let mut column = vec![0.0; n];
    for j in 0..dim {
        for (c, v) in column.iter_mut().zip(vectors) {
            *c = v[j];
        }
        column.sort_by(f64::total_cmp);
        let kept = &column[trim..n - trim];
        out[j] = kept.iter().sum::<f64>() / kept.len() as f64;
    }
    Ok(out)
}

/// Smoothed Weiszfeld iterations toward the geometric median, initialized
/// at the coordinate-wise mean.
pub fn rfa(vectors: &[Vector], steps: usize, smoothing: f64) -> Result<Vector> {
    require_nonempty(vectors)?;
    if steps == 0 || smoothing <= 0.0 {
        return Err(SimError::config(
            "RFA needs steps >= 1 and smoothing > 0".into(),
        ));
    }
    let mut x = mean_of(vectors)?;
    for _ in 0..steps {
        x = weiszfeld_step(&x, vectors, smoothing)?;
    }
    Ok(x)
}

/// One smoothed Weiszfeld update: weights `1 / max(nu, ||x - v_j||)`.
pub(crate) fn weiszfeld_step(x: &Vector, vectors: &[Vector], smoothing: f64) -> Result<Vector> {
    let dim = x.len();
    let mut num = Vector::zeros(dim);
    let mut den = 0.0;
    for v in vectors {
        let w = 1.0 / x.dist_sq(v)?.sqrt().max(smoothing);
        num.axpy(w, v)?;
        den += w;
    }
    Ok(num.scale(1.0 / den))
}

/// Nearest Neighbor Mixing: replace each input with the mean of its
/// G = n - B nearest inputs (itself included). Distance ties break toward
/// the lower input index; output order matches input order.
pub fn nnm(vectors: &[Vector], byzantine_bound: usize) -> Result<Vec<Vector>> {
    require_nonempty(vectors)?;
    let n = vectors.len();
    if 2 * byzantine_bound >= n {
        return Err(SimError::config(format!(
            "NNM needs B < n/2, got B = {byzantine_bound}, n = {n}"
        )));
    }
    let g = n - byzantine_bound;
    let dist = distance_matrix(vectors)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then_with(|| a.cmp(&b)));
        // Average the neighbors in sorted order.
        let neighbors: Vec<Vector> = order[..g].iter().map(|&j| vectors[j].clone()).collect();
        out.push(mean_of(&neighbors)?);
    }
    Ok(out)
}

fn distance_matrix(vectors: &[Vector]) -> Result<Vec<Vec<f64>>> {
    let n = vectors.len();
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vectors[i].dist_sq(&vectors[j])?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    Ok(dist)
}

/// Apply the full spec: NNM first when configured, then the base rule.
pub fn aggregate(spec: &AggregatorSpec, vectors: &[Vector]) -> Result<Vector> {
    let mixed;
    let inputs: &[Vector] = match spec.nnm {
        Some(b) => {
            mixed = nnm(vectors, b)?;
            &mixed
        }
        None => vectors,
    };
    match spec.base {
        BaseAggregator::Mean => mean(inputs),
        BaseAggregator::CoordinateMedian => coordinate_median(inputs),
        BaseAggregator::Cwtm { trim } => cwtm(inputs, trim),
        BaseAggregator::Rfa { steps, smoothing } => rfa(inputs, steps, smoothing),
    }
}

/// Empirical robustness ratio for one aggregation: the left side of the
/// (B, kappa) inequality over the honest subset, scaled back by G.
/// Returns None when the honest inputs are all identical.
pub fn empirical_kappa(
    output: &Vector,
    inputs: &[Vector],
    honest: &[usize],
) -> Result<Option<f64>> {
    let honest_vecs: Vec<Vector> = honest.iter().map(|&i| inputs[i].clone()).collect();
    let g = honest_vecs.len();
    if g == 0 {
        return Err(SimError::config("empirical kappa needs honest inputs"));
    }
    let center = mean_of(&honest_vecs)?;
    let spread: f64 = honest_vecs
        .iter()
        .map(|v| v.dist_sq(&center))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .sum();
    if spread == 0.0 {
        return Ok(None);
    }
    Ok(Some(output.dist_sq(&center)? * g as f64 / spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, Purpose};

    fn vecs(rows: &[&[f64]]) -> Vec<Vector> {
        rows.iter().map(|r| Vector::from_vec(r.to_vec())).collect()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&vecs(&[&[1.0], &[3.0]])).unwrap().as_slice(), &[2.0]);
        let single = vecs(&[&[4.0, 5.0]]);
        assert_eq!(mean(&single).unwrap().as_slice(), &[4.0, 5.0]);
        assert!(mean(&[]).is_err());
    }

    #[test]
    fn mean_is_zero_zero_robust() {
        // Definition check with kappa = 0 and S = all inputs.
        let inputs = vecs(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 0.5]]);
        let out = mean(&inputs).unwrap();
        let k = empirical_kappa(&out, &inputs, &[0, 1, 2]).unwrap().unwrap();
        assert!(k < 1e-30);
    }

    #[test]
    fn median_examples() {
        let out = coordinate_median(&vecs(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 0.0]])).unwrap();
        assert_eq!(out.as_slice(), &[2.0, 10.0]);
        let even = coordinate_median(&vecs(&[&[1.0], &[2.0], &[3.0], &[4.0]])).unwrap();
        assert_eq!(even.as_slice(), &[2.5]);
    }

    #[test]
    fn median_ignores_outlier_magnitude() {
        let base = coordinate_median(&vecs(&[&[1.0], &[2.0], &[1e12]])).unwrap();
        let worse = coordinate_median(&vecs(&[&[1.0], &[2.0], &[1e18]])).unwrap();
        assert_eq!(base.as_slice(), worse.as_slice());
    }

    #[test]
    fn cwtm_examples() {
        let out = cwtm(&vecs(&[&[0.0], &[1.0], &[2.0], &[3.0], &[4.0]]), 1).unwrap();
        assert_eq!(out.as_slice(), &[2.0]);
        let all_equal = vecs(&[&[7.0, -1.0]; 5]);
        assert_eq!(cwtm(&all_equal, 2).unwrap().as_slice(), &[7.0, -1.0]);
        assert!(cwtm(&all_equal, 3).is_err());
    }

    #[test]
    fn rfa_triangle_stays_at_centroid() {
        let h = 3f64.sqrt() / 2.0;
        let pts = vecs(&[&[0.0, 0.0], &[1.0, 0.0], &[0.5, h]]);
        let out = rfa(&pts, 8, 1e-6).unwrap();
        let centroid = mean(&pts).unwrap();
        assert!(out.dist_sq(&centroid).unwrap().sqrt() < 1e-9);
    }

    #[test]
    fn rfa_one_dimensional_median() {
        // Weiszfeld roughly halves the distance to 0 per step here, so 25
        // steps from the mean (10/3) land well inside 1e-3.
        let pts = vecs(&[&[0.0], &[0.0], &[10.0]]);
        let out = rfa(&pts, 25, 1e-6).unwrap();
        assert!(out[0].abs() < 1e-3, "got {}", out[0]);
    }

    #[test]
    fn rfa_objective_near_long_run() {
        let mut rng = derive_stream(13, 0, 0, Purpose::SynthData);
        let objective = |x: &Vector, pts: &[Vector]| -> f64 {
            pts.iter().map(|p| x.dist_sq(p).unwrap().sqrt()).sum()
        };
        for _ in 0..20 {
            let pts: Vec<Vector> = (0..10)
                .map(|_| Vector::from_vec(vec![rng.next_f64(), rng.next_f64()]))
                .collect();
            let fast = rfa(&pts, 8, 1e-6).unwrap();
            let long = rfa(&pts, 10_000, 1e-12).unwrap();
            let (fo, lo) = (objective(&fast, &pts), objective(&long, &pts));
            assert!(fo <= lo * 1.001, "objective {fo} vs oracle {lo}");
        }
    }

    #[test]
    fn nnm_three_point_example() {
        let out = nnm(&vecs(&[&[0.0], &[1.0], &[10.0]]), 1).unwrap();
        assert_eq!(out[0].as_slice(), &[0.5]);
        assert_eq!(out[1].as_slice(), &[0.5]);
        assert_eq!(out[2].as_slice(), &[5.5]);
    }

    #[test]
    fn nnm_zero_bound_is_global_mean() {
        let inputs = vecs(&[&[1.0, 0.0], &[3.0, 2.0], &[5.0, -2.0]]);
        let out = nnm(&inputs, 0).unwrap();
        let m = mean(&inputs).unwrap();
        for y in &out {
            assert!(y.bit_eq(&m));
        }
    }

    #[test]
    fn nnm_identical_inputs_fixed_point() {
        let inputs = vecs(&[&[2.0, 2.0]; 5]);
        let out = nnm(&inputs, 2).unwrap();
        for y in &out {
            assert_eq!(y.as_slice(), &[2.0, 2.0]);
        }
    }

    #[test]
    fn aggregate_dispatch() {
        let inputs = vecs(&[&[1.0], &[5.0]]);
        let spec = AggregatorSpec {
            base: BaseAggregator::Mean,
            nnm: None,
        };
        assert_eq!(aggregate(&spec, &inputs).unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn cm_after_nnm_with_zero_bound_is_mean() {
        let inputs = vecs(&[&[1.0], &[2.0], &[6.0]]);
        let spec = AggregatorSpec {
            base: BaseAggregator::CoordinateMedian,
            nnm: Some(0),
        };
        assert_eq!(aggregate(&spec, &inputs).unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn rfa_nnm_finite_with_byzantine_inputs() {
        let mut rng = derive_stream(17, 0, 0, Purpose::SynthData);
        let mut inputs: Vec<Vector> = (0..12)
            .map(|_| Vector::from_vec((0..4).map(|_| rng.normal()).collect()))
            .collect();
        for _ in 0..8 {
            inputs.push(Vector::from_vec(vec![1e9, -1e9, 1e9, -1e9]));
        }
        let spec = AggregatorSpec {
            base: BaseAggregator::Rfa {
                steps: 8,
                smoothing: 1e-6,
            },
            nnm: Some(8),
        };
        let out = aggregate(&spec, &inputs).unwrap();
        assert!(out.all_finite());
        let honest: Vec<usize> = (0..12).collect();
        let kappa = empirical_kappa(&out, &inputs, &honest).unwrap().unwrap();
        assert!(kappa.is_finite());
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = derive_stream(19, 0, 0, Purpose::SynthData);
        let inputs: Vec<Vector> = (0..7)
            .map(|_| Vector::from_vec((0..3).map(|_| rng.normal()).collect()))
            .collect();
        let shift = Vector::from_vec(vec![0.5, -1.5, 2.0]);
        let shifted: Vec<Vector> = inputs.iter().map(|v| v.add(&shift).unwrap()).collect();
        let specs = [
            AggregatorSpec { base: BaseAggregator::Mean, nnm: None },
            AggregatorSpec { base: BaseAggregator::CoordinateMedian, nnm: None },
            AggregatorSpec { base: BaseAggregator::Cwtm { trim: 2 }, nnm: None },
            AggregatorSpec { base: BaseAggregator::Rfa { steps: 8, smoothing: 1e-6 }, nnm: None },
            AggregatorSpec { base: BaseAggregator::CoordinateMedian, nnm: Some(3) },
        ];
        for spec in &specs {
            let a = aggregate(spec, &inputs).unwrap().add(&shift).unwrap();
            let b = aggregate(spec, &shifted).unwrap();
            assert!(
                a.dist_sq(&b).unwrap().sqrt() < 1e-9,
                "translation failed for {spec:?}"
            );
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = derive_stream(23, 0, 0, Purpose::SynthData);
        let inputs: Vec<Vector> = (0..6)
            .map(|_| Vector::from_vec((0..3).map(|_| rng.normal()).collect()))
            .collect();
        let perm = [3usize, 1, 5, 0, 4, 2];
        let permuted: Vec<Vector> = perm.iter().map(|&i| inputs[i].clone()).collect();
        let specs = [
            AggregatorSpec { base: BaseAggregator::Mean, nnm: None },
            AggregatorSpec { base: BaseAggregator::CoordinateMedian, nnm: None },
            AggregatorSpec { base: BaseAggregator::Cwtm { trim: 1 }, nnm: None },
            AggregatorSpec { base: BaseAggregator::Rfa { steps: 8, smoothing: 1e-6 }, nnm: None },
        ];
        for spec in &specs {
            let a = aggregate(spec, &inputs).unwrap();
            let b = aggregate(spec, &permuted).unwrap();
            assert!(
                a.dist_sq(&b).unwrap().sqrt() < 1e-9,
                "permutation failed for {spec:?}"
            );
        }
        // NNM permutes its output consistently with the input permutation.
        let mixed = nnm(&inputs, 2).unwrap();
        let mixed_p = nnm(&permuted, 2).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            assert!(mixed_p[slot].dist_sq(&mixed[src]).unwrap().sqrt() < 1e-9);
        }
    }

    #[test]
    fn breakdown_bounded_for_robust_rules() {
        let mut rng = derive_stream(29, 0, 0, Purpose::SynthData);
        let honest: Vec<Vector> = (0..7)
            .map(|_| Vector::from_vec((0..2).map(|_| rng.normal()).collect()))
            .collect();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &honest {
            for j in 0..2 {
                lo[j] = lo[j].min(v[j]);
                hi[j] = hi[j].max(v[j]);
            }
        }
        let attack = Vector::from_vec(vec![1e6, -1e6]);
        let mut inputs = honest.clone();
        inputs.push(attack.clone());
        inputs.push(attack.clone());
        inputs.push(attack); // B = 3 of n = 10
        let robust = [
            AggregatorSpec { base: BaseAggregator::CoordinateMedian, nnm: Some(3) },
            AggregatorSpec { base: BaseAggregator::Cwtm { trim: 3 }, nnm: Some(3) },
            AggregatorSpec { base: BaseAggregator::Rfa { steps: 8, smoothing: 1e-6 }, nnm: Some(3) },
        ];
        for spec in &robust {
            let out = aggregate(spec, &inputs).unwrap();
            for j in 0..2 {
                let width = (hi[j] - lo[j]).max(1e-12);
                let center = (hi[j] + lo[j]) / 2.0;
                assert!(
                    (out[j] - center).abs() <= width,
                    "{spec:?} escaped inflated box on coord {j}: {}",
                    out[j]
                );
            }
        }
        let mean_out = aggregate(
            &AggregatorSpec { base: BaseAggregator::Mean, nnm: None },
            &inputs,
        )
        .unwrap();
        assert!(mean_out[0].abs() > 1e5);
    }
}
