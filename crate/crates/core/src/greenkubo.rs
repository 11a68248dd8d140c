//! Green-Kubo estimation of the asymptotic-variance field `a(x)` and the
//! step-cocycle variance.
//!
//! The invariant measure of the Z-extension is the product of the base
//! invariant measure with counting measure on the levels, so integrals
//! over the extension reduce to exact finite sums over levels (the
//! shipped fields have finite level support) times a Monte Carlo average
//! over the base measure: no importance sampling is needed.
//!
//! Two truncation formulas are implemented literally: the two-sided
//! symmetrized sum (the general, possibly non-invertible form) and the
//! invertible shortcut in which negative lags are pulled back through
//! the map. On invertible systems they agree up to Monte Carlo noise;
//! the verification harness reports their difference rather than
//! asserting equality.

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::field::DrivenField;
use crate::rng::task_rng;
use crate::zext::{BaseSystem, StepError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GkError {
    #[error("matrix asymmetry {max_dev:.3e} exceeds tolerance")]
    Asymmetric { max_dev: f64 },
    #[error("level truncation too small: tail weight {tail:.3e} above 1e-6")]
    TruncationTooSmall { tail: f64 },
    #[error("base system step failed: {0}")]
    Step(#[from] StepError),
    #[error("invalid argument: {0}")]
    InvalidArg(&'static str),
}

/// Symmetric positive-semidefinite `d x d` matrix (row-major storage).
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct VarianceMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl VarianceMatrix {
    pub fn zeros(dim: usize) -> Self {
        VarianceMatrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn from_data(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        VarianceMatrix { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn scalar(value: f64) -> Self {
        VarianceMatrix { dim: 1, data: vec![value] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                dev = dev.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        dev
    }

    /// Replaces the matrix by its symmetric part.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let s = 0.5 * (self.get(i, j) + self.get(j, i));
                self.data[i * self.dim + j] = s;
                self.data[j * self.dim + i] = s;
            }
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.dim, self.dim, &self.data);
        let se = nalgebra::SymmetricEigen::new(m);
        se.eigenvalues.iter().copied().collect()
    }

    /// Checks symmetry within `1e-10` and eigenvalues above `-1e-8`
    /// (positive semidefinite up to estimation noise).
    pub fn validate(&self) -> Result<(), GkError> {
        let dev = self.max_asymmetry();
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if dev > 1e-10 * scale {
            return Err(GkError::Asymmetric { max_dev: dev });
        }
        if let Some(min) = self.eigenvalues().into_iter().reduce(f64::min) {
            if min < -1e-8 * scale {
                return Err(GkError::InvalidArg("matrix has a significantly negative eigenvalue"));
            }
        }
        Ok(())
    }
}

/// Symmetric PSD square root via eigendecomposition; negative
/// eigenvalues (estimation noise) are clipped to zero.
pub fn psd_sqrt(m: &VarianceMatrix) -> Result<VarianceMatrix, GkError> {
    let scale = m.data.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let dev = m.max_asymmetry();
    if dev > 1e-10 * scale {
        return Err(GkError::Asymmetric { max_dev: dev });
    }
    let dm = DMatrix::from_row_slice(m.dim, m.dim, &m.data);
    let se = nalgebra::SymmetricEigen::new(dm);
    let sqrt_vals: Vec<f64> = se.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
    let q = &se.eigenvectors;
    let mut out = VarianceMatrix::zeros(m.dim);
    for i in 0..m.dim {
        for j in 0..m.dim {
            let mut acc = 0.0;
            for (k, s) in sqrt_vals.iter().enumerate() {
                acc += q[(i, k)] * s * q[(j, k)];
            }
            out.data[i * m.dim + j] = acc;
        }
    }
    out.symmetrize();
    Ok(out)
}

/// Which literal truncation of the lag sum to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkFormula {
    /// `a_ij = 1/2 sum_{|l|<=lmax} [C_ij(|l|) + C_ji(|l|)]`.
    TwoSidedSymmetrized,
    /// `a_ij = sum_{|l|<=lmax} C_ij(l)` with negative lags pulled back
    /// through the (invertible, measure-preserving) map:
    /// `C_ij(-l) = C_ji(l)`.
    InvertibleShortcut,
}

/// Green-Kubo estimate with entrywise Monte Carlo standard errors.
#[derive(Debug, Clone)]
pub struct AEstimate {
    pub matrix: VarianceMatrix,
    pub std_error: VarianceMatrix,
    /// Set when the last lag still carries more than `1e-3` of the
    /// zero-lag magnitude (the plateau diagnostic failed).
    pub tail_warning: bool,
}

fn shard_sizes(n: usize, shards: usize) -> Vec<usize> {
    let base = n / shards;
    let extra = n % shards;
    (0..shards).map(|s| base + usize::from(s < extra)).collect()
}

/// Monte Carlo estimate of the lag-`l` correlation matrix
/// `C_ij(l) = sum_a E[ F_i(x, w, a) * F_j(x, Tbar^l w, a + S_l phi(w)) ]`
/// truncated to levels `|a| <= a_cap`.
pub fn correlation_term<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x: &[f64],
    lag: usize,
    n_samples: usize,
    a_cap: i64,
    seed: u64,
) -> Result<VarianceMatrix, GkError> {
    let full = estimate_lags(sys, field, x, lag, n_samples, a_cap, seed)?;
    Ok(full.lags.into_iter().nth(lag).expect("lag present"))
}

struct LagEstimates {
    /// `C(l)` for `l = 0..=l_max`.
    lags: Vec<VarianceMatrix>,
    /// Standard error of the two-sided per-sample lag aggregate, per entry.
    agg_std_error: VarianceMatrix,
}

/// One pass over `n_samples` base draws estimating all lags `0..=l_max`.
///
/// Sharded over seed substreams; shard partials merge in shard order, so
/// the result does not depend on the number of worker threads.
fn estimate_lags<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x: &[f64],
    l_max: usize,
    n_samples: usize,
    a_cap: i64,
    seed: u64,
) -> Result<LagEstimates, GkError> {
    if n_samples == 0 {
        return Err(GkError::InvalidArg("n_samples must be positive"));
    }
    let tail = field.level_tail_weight(a_cap);
    if tail > 1e-6 {
        return Err(GkError::TruncationTooSmall { tail });
    }
    let d = field.dim();
    let shards = 64usize.min(n_samples);
    let sizes = shard_sizes(n_samples, shards);

    struct Partial {
        sums: Vec<f64>,    // (l_max+1) * d * d
        sq_sums: Vec<f64>, // d * d, of the per-sample lag-aggregated value
        agg: Vec<f64>,     // d * d, sum of per-sample aggregates
        err: Option<GkError>,
    }

    let partials: Vec<Partial> = sizes
        .par_iter()
        .enumerate()
        .map(|(shard, &count)| {
            let mut rng = task_rng(seed, crate::rng::experiments::GREEN_KUBO, shard as u64);
            let mut sums = vec![0.0; (l_max + 1) * d * d];
            let mut agg = vec![0.0; d * d];
            let mut sq_sums = vec![0.0; d * d];
            let mut f0 = vec![vec![0.0; d]; (2 * a_cap + 1) as usize];
            let mut fl = vec![0.0; d];
            let mut sample_acc = vec![0.0; d * d];
            for _ in 0..count {
                let mut p = sys.sample_invariant(&mut rng);
                for (ai, buf) in f0.iter_mut().enumerate() {
                    let a = ai as i64 - a_cap;
                    field.centered(x, &mut p, a, buf);
                }
                let mut s_l = 0i64;
                let mut q = p.clone();
                sample_acc.fill(0.0);
                for l in 0..=l_max {
                    if l > 0 {
                        s_l += sys.phi(&mut q);
                        if let Err(e) = sys.advance(&mut q) {
                            return Partial { sums, sq_sums, agg, err: Some(e.into()) };
                        }
                    }
                    for ai in 0..f0.len() {
                        let a = ai as i64 - a_cap;
                        field.centered(x, &mut q, a + s_l, &mut fl);
                        for i in 0..d {
                            for j in 0..d {
                                let v = f0[ai][i] * fl[j];
                                sums[(l * d + i) * d + j] += v;
                                // Aggregate with the lag-sum weights of the
                                // two-sided formula: weight 1 at l = 0,
                                // weight 2 beyond.
                                let wgt = if l == 0 { 1.0 } else { 2.0 };
                                sample_acc[i * d + j] += wgt * v;
                            }
                        }
                    }
                }
                for k in 0..d * d {
                    agg[k] += sample_acc[k];
                    sq_sums[k] += sample_acc[k] * sample_acc[k];
                }
            }
            Partial { sums, sq_sums, agg, err: None }
        })
        .collect();

    let mut sums = vec![0.0; (l_max + 1) * d * d];
    let mut agg = vec![0.0; d * d];
    let mut sq = vec![0.0; d * d];
    for p in partials {
        if let Some(e) = p.err {
            return Err(e);
        }
        for (acc, v) in sums.iter_mut().zip(p.sums) {
            *acc += v;
        }
        for (acc, v) in agg.iter_mut().zip(p.agg) {
            *acc += v;
        }
        for (acc, v) in sq.iter_mut().zip(p.sq_sums) {
            *acc += v;
        }
    }
    let n = n_samples as f64;
    let lags = (0..=l_max)
        .map(|l| {
            VarianceMatrix::from_data(
                d,
                sums[l * d * d..(l + 1) * d * d].iter().map(|v| v / n).collect(),
            )
        })
        .collect();
    let agg_std_error = VarianceMatrix::from_data(
        d,
        agg.iter()
            .zip(sq.iter())
            .map(|(s, q)| {
                let mean = s / n;
                ((q / n - mean * mean).max(0.0) / n).sqrt()
            })
            .collect(),
    );
    Ok(LagEstimates { lags, agg_std_error })
}

/// Monte Carlo Green-Kubo matrix at state `x`.
pub fn estimate_a<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x: &[f64],
    l_max: usize,
    n_samples: usize,
    a_cap: i64,
    formula: GkFormula,
    seed: u64,
) -> Result<AEstimate, GkError> {
    let est = estimate_lags(sys, field, x, l_max, n_samples, a_cap, seed)?;
    let d = field.dim();
    let mut out = VarianceMatrix::zeros(d);
    for l in 0..=l_max {
        let c = &est.lags[l];
        for i in 0..d {
            for j in 0..d {
                let v = match formula {
                    // 1/2 [C_ij(|l|)+C_ji(|l|)] summed over l in Z.
                    GkFormula::TwoSidedSymmetrized => {
                        let sym = 0.5 * (c.get(i, j) + c.get(j, i));
                        if l == 0 {
                            sym
                        } else {
                            2.0 * sym
                        }
                    }
                    // C_ij(l) for l >= 0 plus C_ji(l) for the pulled-back
                    // negative lags.
                    GkFormula::InvertibleShortcut => {
                        if l == 0 {
                            c.get(i, j)
                        } else {
                            c.get(i, j) + c.get(j, i)
                        }
                    }
                };
                out.data[i * d + j] += v;
            }
        }
    }
    out.symmetrize();
    let c0_scale = est.lags[0].data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cl_scale = est.lags[l_max].data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail_warning = cl_scale > 1e-3 * c0_scale && c0_scale > 0.0;
    Ok(AEstimate {
        matrix: out,
        std_error: est.agg_std_error,
        tail_warning,
    })
}

/// Step-cocycle variance estimate and its ingredients.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SigmaEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `E[phi . phi o Tbar^k]` for `k = 0..=k_max`.
    pub correlations: Vec<f64>,
}

/// Monte Carlo estimate of
/// `Sigma = E[phi^2] + 2 sum_{k=1..k_max} E[phi . phi o Tbar^k]`
/// under invariant sampling.
pub fn estimate_sigma<S: BaseSystem>(
    sys: &S,
    k_max: usize,
    n_samples: usize,
    seed: u64,
) -> Result<SigmaEstimate, GkError> {
    if n_samples == 0 {
        return Err(GkError::InvalidArg("n_samples must be positive"));
    }
    let shards = 64usize.min(n_samples);
    let sizes = shard_sizes(n_samples, shards);

    struct Partial {
        corr: Vec<f64>,
        agg: f64,
        agg_sq: f64,
        err: Option<GkError>,
    }

    let partials: Vec<Partial> = sizes
        .par_iter()
        .enumerate()
        .map(|(shard, &count)| {
            let mut rng = task_rng(seed, crate::rng::experiments::GREEN_KUBO ^ 0x51, shard as u64);
            let mut corr = vec![0.0; k_max + 1];
            let mut agg = 0.0;
            let mut agg_sq = 0.0;
            for _ in 0..count {
                let mut p = sys.sample_invariant(&mut rng);
                let phi0 = sys.phi(&mut p) as f64;
                let mut sample = phi0 * phi0;
                corr[0] += phi0 * phi0;
                for k in 1..=k_max {
                    if let Err(e) = sys.advance(&mut p) {
                        return Partial { corr, agg, agg_sq, err: Some(e.into()) };
                    }
                    let v = phi0 * sys.phi(&mut p) as f64;
                    corr[k] += v;
                    sample += 2.0 * v;
                }
                agg += sample;
                agg_sq += sample * sample;
            }
            Partial { corr, agg, agg_sq, err: None }
        })
        .collect();

    let mut corr = vec![0.0; k_max + 1];
    let (mut agg, mut agg_sq) = (0.0, 0.0);
    for p in partials {
        if let Some(e) = p.err {
            return Err(e);
        }
        for (acc, v) in corr.iter_mut().zip(p.corr) {
            *acc += v;
        }
        agg += p.agg;
        agg_sq += p.agg_sq;
    }
    let n = n_samples as f64;
    for c in corr.iter_mut() {
        *c /= n;
    }
    let mean = agg / n;
    let var = (agg_sq / n - mean * mean).max(0.0);
    Ok(SigmaEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
        correlations: corr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{toy, Drift, LevelProfile, StateFactor};
    use crate::shift::{exact_greenkubo_scalar, exact_level_correlation, CylinderFn, DyadicShift};

    #[test]
    fn psd_sqrt_identity() {
        let m = VarianceMatrix::identity(3);
        let s = psd_sqrt(&m).unwrap();
        assert_eq!(s, VarianceMatrix::identity(3));
    }

    #[test]
    fn psd_sqrt_diagonal() {
        let m = VarianceMatrix::from_data(2, vec![4.0, 0.0, 0.0, 9.0]);
        let s = psd_sqrt(&m).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((s.get(1, 1) - 3.0).abs() < 1e-12);
        assert!(s.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_random_psd() {
        use rand::Rng;
        let mut rng = crate::rng::task_rng(5, 0, 0);
        for _ in 0..20 {
            let d = 3usize;
            // Random PSD: B B^T.
            let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut m = VarianceMatrix::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += b[i * d + k] * b[j * d + k];
                    }
                    m.data[i * d + j] = acc;
                }
            }
            m.symmetrize();
            let s = psd_sqrt(&m).unwrap();
            // s^2 = m within 1e-8.
            for i in 0..d {
                for j in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += s.get(i, k) * s.get(k, j);
                    }
                    assert!((acc - m.get(i, j)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn psd_sqrt_rejects_asymmetric() {
        let m = VarianceMatrix::from_data(2, vec![1.0, 0.5, -0.5, 1.0]);
        assert!(matches!(psd_sqrt(&m), Err(GkError::Asymmetric { .. })));
    }

    #[test]
    fn psd_sqrt_clips_small_negative_eigenvalues() {
        let m = VarianceMatrix::from_data(1, vec![-1e-9]);
        let s = psd_sqrt(&m).unwrap();
        assert_eq!(s.get(0, 0), 0.0);
    }

    #[test]
    fn zero_field_gives_zero_matrix() {
        let sys = DyadicShift;
        let field = toy::product_field(
            StateFactor::Constant(vec![0.0]),
            CylinderFn::step_sign(),
            LevelProfile::odd_pair(),
            Drift::Zero(1),
        )
        .unwrap();
        let est = estimate_a(&sys, &field, &[0.0], 5, 2000, 3, GkFormula::TwoSidedSymmetrized, 1)
            .unwrap();
        assert_eq!(est.matrix.get(0, 0), 0.0);
    }

    #[test]
    fn correlation_single_level_field_lag_zero() {
        // F = 1_{a=0} g(w) with g = phi: C(0) = E[g^2] = 1.
        let sys = DyadicShift;
        let field = toy::product_field(
            StateFactor::Constant(vec![1.0]),
            CylinderFn::step_sign(),
            LevelProfile::indicator_zero(),
            Drift::Zero(1),
        )
        .unwrap();
        let c0 = correlation_term(&sys, &field, &[0.0], 0, 20_000, 2, 7).unwrap();
        assert!((c0.get(0, 0) - 1.0).abs() < 1e-12, "C(0) = {}", c0.get(0, 0));
    }

    #[test]
    fn correlation_matches_cylinder_oracle() {
        // psi = 1_{a=0} - 1_{a=1}; exact values from the enumeration.
        let sys = DyadicShift;
        let h = CylinderFn::step_sign();
        let psi = LevelProfile::new(0, vec![1.0, -1.0]).unwrap();
        let field = toy::product_field(
            StateFactor::Constant(vec![1.0]),
            h.clone(),
            psi.clone(),
            Drift::Zero(1),
        )
        .unwrap();
        let n = 200_000;
        for lag in [0usize, 1, 2, 3] {
            let exact = exact_level_correlation(&h, psi.weights(), lag as u32).unwrap();
            let mc = correlation_term(&sys, &field, &[0.0], lag, n, 4, 11).unwrap();
            // Conservative bound on 4 standard errors of the product sum.
            let tol = 4.0 * 4.0 / (n as f64).sqrt() + 1e-9;
            assert!(
                (mc.get(0, 0) - exact).abs() < tol,
                "lag {lag}: mc {} vs exact {exact}",
                mc.get(0, 0)
            );
        }
    }

    #[test]
    fn estimate_a_matches_oracle_for_default_field() {
        let sys = DyadicShift;
        let field = toy::default_field(1, 1.0);
        let h = CylinderFn::step_sign();
        let exact = exact_greenkubo_scalar(&h, field.psi().weights(), 20).unwrap();
        let est = estimate_a(&sys, &field, &[0.0], 20, 100_000, 3, GkFormula::TwoSidedSymmetrized, 3)
            .unwrap();
        assert!((exact - 2.0).abs() < 1e-12);
        let rel = (est.matrix.get(0, 0) - exact).abs() / exact;
        assert!(rel < 0.05, "relative error {rel}");
    }

    #[test]
    fn formulas_agree_within_noise() {
        let sys = DyadicShift;
        let field = toy::default_field(1, 1.0);
        let a1 = estimate_a(&sys, &field, &[0.0], 10, 50_000, 3, GkFormula::TwoSidedSymmetrized, 5)
            .unwrap();
        let a2 = estimate_a(&sys, &field, &[0.0], 10, 50_000, 3, GkFormula::InvertibleShortcut, 5)
            .unwrap();
        // Same samples, same symmetrization: identical for d = 1.
        assert!((a1.matrix.get(0, 0) - a2.matrix.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn truncation_guard_fires() {
        let sys = DyadicShift;
        let field = toy::default_field(1, 1.0);
        // Support is {-1, 1}; cap 0 leaves tail weight 2.
        let err = estimate_a(&sys, &field, &[0.0], 5, 100, 0, GkFormula::TwoSidedSymmetrized, 1)
            .unwrap_err();
        assert!(matches!(err, GkError::TruncationTooSmall { .. }));
    }

    #[test]
    fn stationarity_under_composition() {
        use crate::field::ShiftedField;
        let sys = DyadicShift;
        let field = toy::default_field(1, 1.0);
        let shifted = ShiftedField { sys: &sys, inner: &field };
        let a = estimate_a(&sys, &field, &[0.0], 8, 60_000, 3, GkFormula::TwoSidedSymmetrized, 9)
            .unwrap();
        let b = estimate_a(&sys, &shifted, &[0.0], 8, 60_000, 4, GkFormula::TwoSidedSymmetrized, 10)
            .unwrap();
        let tol = 4.0 * (a.std_error.get(0, 0) + b.std_error.get(0, 0)) + 1e-9;
        assert!(
            (a.matrix.get(0, 0) - b.matrix.get(0, 0)).abs() < tol,
            "a {} vs shifted {}",
            a.matrix.get(0, 0),
            b.matrix.get(0, 0)
        );
    }

    #[test]
    fn doubling_samples_shrinks_std_error() {
        let sys = DyadicShift;
        let field = toy::default_field(1, 1.0);
        let reps = 24;
        let mut ratios = Vec::new();
        for r in 0..reps {
            let a = estimate_a(&sys, &field, &[0.0], 10, 4_000, 3, GkFormula::TwoSidedSymmetrized, 100 + r)
                .unwrap();
            let b = estimate_a(&sys, &field, &[0.0], 10, 8_000, 3, GkFormula::TwoSidedSymmetrized, 200 + r)
                .unwrap();
            ratios.push(a.std_error.get(0, 0) / b.std_error.get(0, 0));
        }
        let mean = ratios.iter().sum::<f64>() / reps as f64;
        assert!((1.25..=1.6).contains(&mean), "mean ratio {mean}");
    }

    #[test]
    fn sigma_toy_is_near_one() {
        let sys = DyadicShift;
        let est = estimate_sigma(&sys, 20, 100_000, 21).unwrap();
        assert!((est.value - 1.0).abs() < 0.05, "sigma = {}", est.value);
        assert!((est.correlations[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_a_output_is_symmetric_and_psd_after_clip() {
        let sys = DyadicShift;
        // Two-dimensional field sharing one scalar driver.
        let field = toy::product_field(
            StateFactor::Constant(vec![1.0, -0.5]),
            CylinderFn::step_sign(),
            LevelProfile::odd_pair(),
            Drift::Zero(2),
        )
        .unwrap();
        let est = estimate_a(&sys, &field, &[0.0, 0.0], 10, 30_000, 3, GkFormula::TwoSidedSymmetrized, 31)
            .unwrap();
        assert_eq!(est.matrix.max_asymmetry(), 0.0);
        let s = psd_sqrt(&est.matrix).unwrap();
        // sqrt squared equals the clipped input within 1e-8.
        let d = 2;
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += s.get(i, k) * s.get(k, j);
                }
                // rank-1 structure: eigenvalues are >= 0 already
                assert!((acc - est.matrix.get(i, j)).abs() < 1e-8);
            }
        }
    }
}
