//! Statistical harness: moments, distribution distances, bootstrap
//! intervals and scaling-exponent regressions.
//!
//! Everything here is deterministic given explicit seeds, invariant under
//! sample permutation and pure, so resampling and sweeps parallelize
//! without changing results.

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::task_rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample set")]
    Empty,
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("non-finite sample value at index {index}")]
    NonFinite { index: usize },
    #[error("log-log regression requires strictly positive inputs")]
    NonPositive,
    #[error("invalid argument: {0}")]
    InvalidArg(&'static str),
}

/// A set of scalar samples with optional seed provenance.
#[derive(Debug, Clone)]
pub struct SampleSet {
    values: Vec<f64>,
    seeds: Option<Vec<u64>>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::Empty);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { index: i });
        }
        Ok(SampleSet { values, seeds: None })
    }

    pub fn with_seeds(values: Vec<f64>, seeds: Vec<u64>) -> Result<Self, StatsError> {
        assert_eq!(values.len(), seeds.len());
        let mut s = Self::new(values)?;
        s.seeds = Some(seeds);
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn seeds(&self) -> Option<&[u64]> {
        self.seeds.as_deref()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.len() as f64;
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
    }
}

/// A sample moment with a jackknife standard error.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Moment {
    pub order: usize,
    pub value: f64,
    pub std_error: f64,
}

/// Sample moments of orders `1..=up_to` with jackknife standard errors.
///
/// Order 1 is the mean; higher orders are central moments. The jackknife
/// runs on power sums of the centered data, so the whole computation is
/// `O(n * up_to^2)`.
pub fn empirical_moments(s: &SampleSet, up_to: usize) -> Result<Vec<Moment>, StatsError> {
    if up_to < 1 {
        return Err(StatsError::InvalidArg("up_to must be >= 1"));
    }
    let n = s.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    let nf = n as f64;
    let mean = s.mean();
    // Power sums of centered data up to the largest order needed.
    let centered: Vec<f64> = s.values.iter().map(|v| v - mean).collect();
    let mut pow_sums = vec![0.0f64; up_to + 1];
    pow_sums[0] = nf;
    for &y in &centered {
        let mut p = 1.0;
        for ps in pow_sums.iter_mut().skip(1) {
            p *= y;
            *ps += p;
        }
    }

    let mut out = Vec::with_capacity(up_to);
    for k in 1..=up_to {
        let value = if k == 1 { mean } else { pow_sums[k] / nf };
        // Leave-one-out replicates from the power sums.
        let mut reps = Vec::with_capacity(n);
        for &y in &centered {
            let nn = nf - 1.0;
            if k == 1 {
                reps.push(mean + (0.0 - y) / nn);
            } else {
                // Centered power sums with y removed, then re-center
                // around the leave-one-out mean shift d = -y/nn.
                let d = -y / nn;
                let mut ypow = vec![1.0f64; k + 1];
                for j in 1..=k {
                    ypow[j] = ypow[j - 1] * y;
                }
                // m'_k = (1/nn) sum_i (y_i - d)^k over i != removed
                //      = (1/nn) sum_j C(k,j) (-d)^(k-j) (S_j - y^j)
                let mut acc = 0.0;
                let mut binom = 1.0f64;
                for j in 0..=k {
                    if j > 0 {
                        binom *= (k - j + 1) as f64 / j as f64;
                    }
                    let sj = if j == 0 { nn } else { pow_sums[j] - ypow[j] };
                    acc += binom * (-d).powi((k - j) as i32) * sj;
                }
                reps.push(acc / nn);
            }
        }
        let rep_mean = reps.iter().sum::<f64>() / nf;
        let var = reps.iter().map(|r| (r - rep_mean) * (r - rep_mean)).sum::<f64>();
        let std_error = ((nf - 1.0) / nf * var).sqrt();
        out.push(Moment { order: k, value, std_error });
    }
    Ok(out)
}

/// Reference distribution for a one-sample KS comparison.
pub enum Reference<'a> {
    Samples(&'a SampleSet),
    Cdf(&'a dyn Fn(f64) -> f64),
}

/// Kolmogorov-Smirnov distance against a second sample or a CDF.
///
/// Requires at least 30 samples per side; the value lies in `[0,1]` and
/// the two-sample form is symmetric in its arguments.
pub fn ks_distance(s: &SampleSet, reference: Reference<'_>) -> Result<f64, StatsError> {
    match reference {
        Reference::Samples(r) => ks_two_sample(s, r),
        Reference::Cdf(f) => ks_vs_cdf(s, f),
    }
}

pub fn ks_two_sample(a: &SampleSet, b: &SampleSet) -> Result<f64, StatsError> {
    for (set, name) in [(a, "first"), (b, "second")] {
        if set.len() < 30 {
            let _ = name;
            return Err(StatsError::TooFew { need: 30, got: set.len() });
        }
    }
    let mut xs = a.values.clone();
    let mut ys = b.values.clone();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(d)
}

pub fn ks_vs_cdf(s: &SampleSet, cdf: &dyn Fn(f64) -> f64) -> Result<f64, StatsError> {
    if s.len() < 30 {
        return Err(StatsError::TooFew { need: 30, got: s.len() });
    }
    let mut xs = s.values.clone();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

/// Least-squares slope in log-log coordinates with a bootstrap CI.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Fits `statistic ~ C * scale^slope` from `(scale, statistic)` pairs.
///
/// Needs at least three scales and strictly positive inputs. The CI is a
/// percentile bootstrap over pair resamples at the given level.
pub fn scaling_regression(
    pairs: &[(f64, f64)],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<SlopeFit, StatsError> {
    if pairs.len() < 3 {
        return Err(StatsError::TooFew { need: 3, got: pairs.len() });
    }
    if pairs.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(StatsError::NonPositive);
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (slope, intercept) = ls_line(&logs).ok_or(StatsError::InvalidArg("degenerate scales"))?;

    let mut rng = task_rng(seed, 0xB007, 0);
    let mut slopes = Vec::with_capacity(n_resamples);
    let mut guard = 0usize;
    while slopes.len() < n_resamples {
        let resample: Vec<(f64, f64)> =
            (0..logs.len()).map(|_| logs[rng.random_range(0..logs.len())]).collect();
        match ls_line(&resample) {
            Some((b, _)) => slopes.push(b),
            None => {
                guard += 1;
                if guard > 100 * n_resamples {
                    return Err(StatsError::InvalidArg("bootstrap resamples degenerate"));
                }
            }
        }
    }
    slopes.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok(SlopeFit {
        slope,
        intercept,
        ci_low: quantile_sorted(&slopes, alpha),
        ci_high: quantile_sorted(&slopes, 1.0 - alpha),
    })
}

fn ls_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let den = n * sxx - sx * sx;
    if den.abs() < 1e-12 * (1.0 + sxx.abs() * n) {
        return None;
    }
    let slope = (n * sxy - sx * sy) / den;
    Some((slope, (sy - slope * sx) / n))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Percentile bootstrap interval for an arbitrary statistic.
///
/// Deterministic for a given seed; resamples are generated per index and
/// evaluated in parallel without affecting the result.
pub fn bootstrap_ci<F>(
    s: &SampleSet,
    statistic: F,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), StatsError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_resamples < 200 {
        return Err(StatsError::InvalidArg("need at least 200 resamples"));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(StatsError::InvalidArg("level must be in (0,1)"));
    }
    let n = s.len();
    let mut stats: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|rep| {
            let mut rng = task_rng(seed, 0xB007_C1, rep as u64);
            let mut buf = Vec::with_capacity(n);
            for _ in 0..n {
                buf.push(s.values[rng.random_range(0..n)]);
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&stats, alpha), quantile_sorted(&stats, 1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn gauss(n: usize, mean: f64, sd: f64, task: u64) -> SampleSet {
        let mut rng = task_rng(99, 0x57A7, task);
        let normal = Normal::new(mean, sd).unwrap();
        SampleSet::new((0..n).map(|_| normal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn moments_of_constant_samples() {
        let s = SampleSet::new(vec![2.5; 50]).unwrap();
        let ms = empirical_moments(&s, 4).unwrap();
        assert_eq!(ms[0].value, 2.5);
        for m in &ms[1..] {
            assert_eq!(m.value, 0.0);
            assert_eq!(m.std_error, 0.0);
        }
    }

    #[test]
    fn moments_of_standard_normal() {
        let s = gauss(1_000_000, 0.0, 1.0, 0);
        let ms = empirical_moments(&s, 4).unwrap();
        assert!(ms[1].value > 0.99 && ms[1].value < 1.01, "m2 = {}", ms[1].value);
        assert!(ms[3].value > 2.9 && ms[3].value < 3.1, "m4 = {}", ms[3].value);
    }

    #[test]
    fn odd_moments_of_symmetric_samples() {
        let s = gauss(200_000, 0.0, 1.0, 1);
        let ms = empirical_moments(&s, 3).unwrap();
        assert!(ms[0].value.abs() < 3.0 * ms[0].std_error + 1e-12);
        assert!(ms[2].value.abs() < 3.0 * ms[2].std_error + 1e-12);
    }

    #[test]
    fn jackknife_se_matches_classic_for_mean() {
        let s = gauss(5_000, 1.0, 2.0, 2);
        let ms = empirical_moments(&s, 1).unwrap();
        let classic = (s.variance() / s.len() as f64).sqrt();
        assert!((ms[0].std_error - classic).abs() < 1e-10 * classic.max(1.0));
    }

    #[test]
    fn ks_identical_sets_is_zero() {
        let s = gauss(100, 0.0, 1.0, 3);
        let d = ks_two_sample(&s, &s).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn ks_against_true_cdf_small() {
        let s = gauss(10_000, 0.0, 1.0, 4);
        let n = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let d = ks_vs_cdf(&s, &|x| n.cdf(x)).unwrap();
        assert!(d < 0.02, "KS = {d}");
    }

    #[test]
    fn ks_detects_shift() {
        let a = gauss(10_000, 0.0, 1.0, 5);
        let b = gauss(10_000, 1.0, 1.0, 6);
        let d = ks_two_sample(&a, &b).unwrap();
        assert!(d > 0.3, "KS = {d}");
    }

    #[test]
    fn ks_symmetric_and_bounded() {
        let a = gauss(500, 0.0, 1.0, 7);
        let b = gauss(700, 0.3, 1.5, 8);
        let d1 = ks_two_sample(&a, &b).unwrap();
        let d2 = ks_two_sample(&b, &a).unwrap();
        assert_eq!(d1, d2);
        assert!((0.0..=1.0).contains(&d1));
    }

    #[test]
    fn ks_rejects_tiny_sets() {
        let s = SampleSet::new(vec![1.0; 10]).unwrap();
        assert!(matches!(
            ks_two_sample(&s, &s),
            Err(StatsError::TooFew { need: 30, .. })
        ));
    }

    #[test]
    fn statistics_are_permutation_invariant() {
        let s = gauss(2_000, 0.5, 1.0, 9);
        let mut rev: Vec<f64> = s.values().to_vec();
        rev.reverse();
        let r = SampleSet::new(rev).unwrap();
        let ms = empirical_moments(&s, 3).unwrap();
        let mr = empirical_moments(&r, 3).unwrap();
        for (a, b) in ms.iter().zip(mr.iter()) {
            assert!((a.value - b.value).abs() < 1e-12);
        }
        assert_eq!(ks_two_sample(&s, &r).unwrap(), 0.0);
    }

    #[test]
    fn regression_recovers_exact_power_law() {
        let pairs: Vec<(f64, f64)> =
            [0.1, 0.01, 0.001, 0.0001].iter().map(|&x| (x, f64::powf(x, 0.25))).collect();
        let fit = scaling_regression(&pairs, 500, 0.95, 11).unwrap();
        assert!((fit.slope - 0.25).abs() < 1e-10);
        assert!((fit.ci_low - 0.25).abs() < 1e-10 && (fit.ci_high - 0.25).abs() < 1e-10);
    }

    #[test]
    fn regression_flat_data_slope_zero() {
        let pairs = vec![(0.1, 2.0), (0.01, 2.0), (0.001, 2.0), (0.0001, 2.0)];
        let fit = scaling_regression(&pairs, 500, 0.95, 12).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn regression_rejects_nonpositive() {
        let pairs = vec![(0.1, 1.0), (0.01, -1.0), (0.001, 1.0)];
        assert!(matches!(
            scaling_regression(&pairs, 300, 0.95, 13),
            Err(StatsError::NonPositive)
        ));
    }

    #[test]
    fn bootstrap_constant_samples_zero_width() {
        let s = SampleSet::new(vec![3.0; 100]).unwrap();
        let (lo, hi) = bootstrap_ci(&s, |v| v.iter().sum::<f64>() / v.len() as f64, 300, 0.95, 14)
            .unwrap();
        assert_eq!(lo, 3.0);
        assert_eq!(hi, 3.0);
    }

    #[test]
    fn bootstrap_width_matches_clt() {
        let s = gauss(10_000, 0.0, 1.0, 15);
        let (lo, hi) = bootstrap_ci(&s, |v| v.iter().sum::<f64>() / v.len() as f64, 800, 0.95, 16)
            .unwrap();
        let width = hi - lo;
        let clt = 2.0 * 1.96 / 100.0;
        assert!((width - clt).abs() < 0.2 * clt, "width = {width}, clt = {clt}");
    }

    #[test]
    fn bootstrap_is_deterministic_per_seed() {
        let s = gauss(500, 0.0, 1.0, 17);
        let f = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let a = bootstrap_ci(&s, f, 400, 0.9, 18).unwrap();
        let b = bootstrap_ci(&s, f, 400, 0.9, 18).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_coverage_for_gaussian_mean() {
        // 95% interval should cover the true mean 0 in 93-97% of runs.
        let reps = 500usize;
        let covered: usize = (0..reps)
            .map(|r| {
                let s = gauss(100, 0.0, 1.0, 1000 + r as u64);
                let (lo, hi) =
                    bootstrap_ci(&s, |v| v.iter().sum::<f64>() / v.len() as f64, 300, 0.95, r as u64)
                        .unwrap();
                (lo <= 0.0 && 0.0 <= hi) as usize
            })
            .sum();
        let frac = covered as f64 / reps as f64;
        assert!((0.93..=0.97).contains(&frac), "coverage = {frac}");
    }

    #[test]
    fn sample_set_rejects_non_finite() {
        assert!(matches!(
            SampleSet::new(vec![1.0, f64::NAN]),
            Err(StatsError::NonFinite { index: 1 })
        ));
    }
}
