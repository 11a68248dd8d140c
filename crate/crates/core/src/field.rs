//! Driving observables for the slow-fast system.
//!
//! A driven field splits the right-hand side of the perturbed equation
//! into a drift `Fbar(x)` and a centered part `F(x, w, a)` that depends
//! on the base point `w` and the cell level `a`. The shipped family is
//! the product form `F(x, w, a) = g(x) * h(w) * psi(a)` with a finitely
//! supported level profile `psi`; centering `sum_a psi(a) * E[h] = 0` is
//! checked at construction, which together with the finite level support
//! puts the field inside every decay hypothesis the convergence results
//! need.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::zext::BaseSystem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field is not centered: |sum_a psi(a) * E[h]| = {imbalance:.3e}")]
    NotCentered { imbalance: f64 },
    #[error("level profile must contain a nonzero weight")]
    EmptyProfile,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
}

/// Finitely supported level weights `psi(a)`, `a` in
/// `support_min..support_min + weights.len()`.
#[derive(Debug, Clone)]
pub struct LevelProfile {
    support_min: i64,
    weights: Vec<f64>,
}

impl LevelProfile {
    pub fn new(support_min: i64, weights: Vec<f64>) -> Result<Self, FieldError> {
        if weights.iter().all(|w| *w == 0.0) {
            return Err(FieldError::EmptyProfile);
        }
        Ok(LevelProfile { support_min, weights })
    }

    /// Profile `psi = 1_{a=0}`.
    pub fn indicator_zero() -> Self {
        LevelProfile { support_min: 0, weights: vec![1.0] }
    }

    /// Odd profile `psi(-1) = -1, psi(+1) = +1` (zero at the origin).
    pub fn odd_pair() -> Self {
        LevelProfile { support_min: -1, weights: vec![-1.0, 0.0, 1.0] }
    }

    #[inline]
    pub fn eval(&self, level: i64) -> f64 {
        let idx = level - self.support_min;
        if idx < 0 || idx as usize >= self.weights.len() {
            0.0
        } else {
            self.weights[idx as usize]
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_min(&self) -> i64 {
        self.support_min
    }

    pub fn support_max(&self) -> i64 {
        self.support_min + self.weights.len() as i64 - 1
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sup(&self) -> f64 {
        self.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()))
    }

    /// `sum_{|a| > cap} |psi(a)|`.
    pub fn tail_abs_weight(&self, cap: i64) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(i, _)| (self.support_min + *i as i64).abs() > cap)
            .map(|(_, w)| w.abs())
            .sum()
    }

    /// Mirror image `a -> -a`.
    pub fn mirrored(&self) -> Self {
        let mut weights: Vec<f64> = self.weights.clone();
        weights.reverse();
        LevelProfile { support_min: -self.support_max(), weights }
    }
}

/// The drift `Fbar` of the averaged equation, with its Jacobian.
#[derive(Clone)]
pub enum Drift {
    Zero(usize),
    /// `Fbar(x) = A x` with `A` row-major `d x d`.
    Linear { dim: usize, matrix: Vec<f64> },
    Custom {
        dim: usize,
        f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
        jacobian: Option<Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>>,
        lipschitz: f64,
    },
}

impl std::fmt::Debug for Drift {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Drift::Zero(d) => write!(f, "Drift::Zero({d})"),
            Drift::Linear { dim, .. } => write!(f, "Drift::Linear(dim={dim})"),
            Drift::Custom { dim, .. } => write!(f, "Drift::Custom(dim={dim})"),
        }
    }
}

impl Drift {
    /// `Fbar(x) = -rate * x`.
    pub fn linear_decay(dim: usize, rate: f64) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = -rate;
        }
        Drift::Linear { dim, matrix }
    }

    /// Planar rotation `Fbar(x1,x2) = (-x2, x1)` scaled by `rate`.
    pub fn rotation(rate: f64) -> Self {
        Drift::Linear { dim: 2, matrix: vec![0.0, -rate, rate, 0.0] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Drift::Zero(d) => *d,
            Drift::Linear { dim, .. } => *dim,
            Drift::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Drift::Zero(_) => out.fill(0.0),
            Drift::Linear { dim, matrix } => {
                for i in 0..*dim {
                    let mut acc = 0.0;
                    for j in 0..*dim {
                        acc += matrix[i * dim + j] * x[j];
                    }
                    out[i] = acc;
                }
            }
            Drift::Custom { f, .. } => f(x, out),
        }
    }

    /// Jacobian at `x` (row-major). Falls back to central differences
    /// when no analytic callback is available.
    pub fn jacobian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        match self {
            Drift::Zero(_) => out.fill(0.0),
            Drift::Linear { matrix, .. } => out.copy_from_slice(matrix),
            Drift::Custom { f, jacobian, .. } => {
                if let Some(j) = jacobian {
                    j(x, out);
                } else {
                    let h = 1e-6;
                    let mut xp = x.to_vec();
                    let mut fp = vec![0.0; d];
                    let mut fm = vec![0.0; d];
                    for j in 0..d {
                        xp[j] = x[j] + h;
                        f(&xp, &mut fp);
                        xp[j] = x[j] - h;
                        f(&xp, &mut fm);
                        xp[j] = x[j];
                        for i in 0..d {
                            out[i * d + j] = (fp[i] - fm[i]) / (2.0 * h);
                        }
                    }
                }
            }
        }
    }

    /// A Lipschitz constant for the drift (operator-norm bound).
    pub fn lipschitz(&self) -> f64 {
        match self {
            Drift::Zero(_) => 0.0,
            Drift::Linear { dim, matrix } => {
                // Row-sum bound on the operator norm.
                (0..*dim)
                    .map(|i| (0..*dim).map(|j| matrix[i * dim + j].abs()).sum::<f64>())
                    .fold(0.0f64, f64::max)
            }
            Drift::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// The state-dependent factor `g(x)` of a product field.
#[derive(Clone)]
pub enum StateFactor {
    Constant(Vec<f64>),
    Custom {
        dim: usize,
        f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
        lipschitz: f64,
        sup: f64,
    },
}

impl StateFactor {
    pub fn dim(&self) -> usize {
        match self {
            StateFactor::Constant(c) => c.len(),
            StateFactor::Custom { dim, .. } => *dim,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            StateFactor::Constant(c) => c.iter().map(|v| v * v).sum::<f64>().sqrt(),
            StateFactor::Custom { sup, .. } => *sup,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            StateFactor::Constant(_) => 0.0,
            StateFactor::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Contract for driving fields of the perturbed equation.
///
/// `centered` takes the base point by `&mut` for the same reason as
/// [`BaseSystem::phi`]: lazily generated points may extend internal state
/// on read.
pub trait DrivenField<S: BaseSystem>: Sync {
    fn dim(&self) -> usize;

    /// Centered part `F(x, w, a)`.
    fn centered(&self, x: &[f64], omega: &mut S::Point, level: i64, out: &mut [f64]);

    /// Drift `Fbar(x)` of the averaged equation.
    fn drift(&self, x: &[f64], out: &mut [f64]);

    /// Jacobian of the drift, row-major `d x d`.
    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]);

    /// `sup |F|` over states, points and levels (Euclidean norm).
    fn sup_bound(&self) -> f64;

    /// Lipschitz constant of `F` in its state argument.
    fn state_lipschitz(&self) -> f64;

    /// Lipschitz constant of the drift.
    fn drift_lipschitz(&self) -> f64;

    /// `sum_{|a| > cap} sup_x |F(x, ., a)|` for truncation diagnostics.
    fn level_tail_weight(&self, cap: i64) -> f64;

    /// Smallest window `[lo, hi]` containing all levels where `F` can be
    /// nonzero, if the field has finite level support.
    fn level_support(&self) -> Option<(i64, i64)>;
}

/// Product field `F(x, w, a) = g(x) * h(w) * psi(a)` over any base
/// system, plus its drift.
#[derive(Clone)]
pub struct ProductField<S: BaseSystem> {
    g: StateFactor,
    h: Arc<dyn Fn(&mut S::Point) -> f64 + Send + Sync>,
    h_sup: f64,
    psi: LevelProfile,
    drift: Drift,
}

impl<S: BaseSystem> ProductField<S> {
    /// Builds the field, enforcing `sum_a psi(a) * h_mean = 0`.
    ///
    /// `h_mean` is the invariant-measure mean of `h`, supplied by the
    /// caller: exactly (cylinder enumeration on the shift, a symmetry
    /// argument on the billiard) or as a Monte Carlo estimate. The check
    /// uses an absolute tolerance scaled to the field size.
    pub fn new(
        g: StateFactor,
        h: Arc<dyn Fn(&mut S::Point) -> f64 + Send + Sync>,
        h_sup: f64,
        h_mean: f64,
        psi: LevelProfile,
        drift: Drift,
    ) -> Result<Self, FieldError> {
        if g.dim() != drift.dim() {
            return Err(FieldError::DimMismatch { expected: g.dim(), got: drift.dim() });
        }
        let imbalance = (psi.sum() * h_mean).abs();
        let scale = (h_sup * psi.sup()).max(1e-300);
        if imbalance > 1e-9 * scale {
            return Err(FieldError::NotCentered { imbalance });
        }
        Ok(ProductField { g, h, h_sup, psi, drift })
    }

    pub fn psi(&self) -> &LevelProfile {
        &self.psi
    }

    pub fn drift_spec(&self) -> &Drift {
        &self.drift
    }

    pub fn state_factor(&self) -> &StateFactor {
        &self.g
    }

    /// Monte Carlo check that `sum_a E[F_i(x, ., a)] = 0` within three
    /// standard errors, per component, at a fixed state.
    pub fn validate_centering(
        &self,
        sys: &S,
        x: &[f64],
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(), FieldError> {
        let d = self.dim();
        let (lo, hi) = self.level_support().expect("product fields have finite support");
        let mut sums = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut buf = vec![0.0; d];
        let mut tot = vec![0.0; d];
        for _ in 0..n_samples {
            let mut p = sys.sample_invariant(rng);
            tot.fill(0.0);
            for a in lo..=hi {
                self.centered(x, &mut p, a, &mut buf);
                for i in 0..d {
                    tot[i] += buf[i];
                }
            }
            for i in 0..d {
                sums[i] += tot[i];
                sq[i] += tot[i] * tot[i];
            }
        }
        let n = n_samples as f64;
        for i in 0..d {
            let mean = sums[i] / n;
            let var = (sq[i] / n - mean * mean).max(0.0);
            let tol = 3.0 * (var / n).sqrt() + 1e-12;
            if mean.abs() > tol {
                return Err(FieldError::NotCentered { imbalance: mean.abs() });
            }
        }
        Ok(())
    }
}

impl<S: BaseSystem> DrivenField<S> for ProductField<S> {
    fn dim(&self) -> usize {
        self.g.dim()
    }

    #[inline]
    fn centered(&self, x: &[f64], omega: &mut S::Point, level: i64, out: &mut [f64]) {
        let w = self.psi.eval(level);
        if w == 0.0 {
            out.fill(0.0);
            return;
        }
        let hv = (self.h)(omega) * w;
        match &self.g {
            StateFactor::Constant(c) => {
                for (o, ci) in out.iter_mut().zip(c.iter()) {
                    *o = ci * hv;
                }
            }
            StateFactor::Custom { f, .. } => {
                f(x, out);
                for o in out.iter_mut() {
                    *o *= hv;
                }
            }
        }
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.drift.eval(x, out);
    }

    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.drift.jacobian(x, out);
    }

    fn sup_bound(&self) -> f64 {
        self.g.sup() * self.h_sup * self.psi.sup()
    }

    fn state_lipschitz(&self) -> f64 {
        self.g.lipschitz() * self.h_sup * self.psi.sup()
    }

    fn drift_lipschitz(&self) -> f64 {
        self.drift.lipschitz()
    }

    fn level_tail_weight(&self, cap: i64) -> f64 {
        self.g.sup() * self.h_sup * self.psi.tail_abs_weight(cap)
    }

    fn level_support(&self) -> Option<(i64, i64)> {
        Some((self.psi.support_min(), self.psi.support_max()))
    }
}

/// Toy-shift constructors: `h` given as a cylinder observable.
pub mod toy {
    use super::*;
    use crate::shift::{CylinderFn, DyadicShift};

    /// Product field on the dyadic shift with exact centering from the
    /// cylinder mean of `h`.
    pub fn product_field(
        g: StateFactor,
        h: CylinderFn,
        psi: LevelProfile,
        drift: Drift,
    ) -> Result<ProductField<DyadicShift>, FieldError> {
        let h_sup = h.sup();
        let h_mean = h.mean();
        ProductField::new(
            g,
            Arc::new(move |p| h.eval(p)),
            h_sup,
            h_mean,
            psi,
            drift,
        )
    }

    /// The default toy field: `F(x, w, a) = amplitude * phi(w) * psi(a)`
    /// with the odd level pair `psi(-1), psi(+1) = -1, +1` and drift
    /// `Fbar(x) = -x`. Its Green-Kubo variance is exactly
    /// `2 * amplitude^2` and its gap and sensitivity diagnostics admit
    /// closed-form bounds.
    pub fn default_field(dim: usize, amplitude: f64) -> ProductField<DyadicShift> {
        product_field(
            StateFactor::Constant(vec![amplitude; dim]),
            CylinderFn::step_sign(),
            LevelProfile::odd_pair(),
            Drift::linear_decay(dim, 1.0),
        )
        .expect("step sign is exactly centered")
    }
}

/// Adapter evaluating a field along one extra base-map application:
/// `F'(x, w, a) = F(x, Tbar w, a + phi(w))`. Stationarity of the
/// invariant measure makes Green-Kubo estimates invariant under this
/// composition, which is used as a consistency check.
pub struct ShiftedField<'a, S: BaseSystem, F: DrivenField<S>> {
    pub sys: &'a S,
    pub inner: &'a F,
}

impl<'a, S: BaseSystem, F: DrivenField<S>> DrivenField<S> for ShiftedField<'a, S, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn centered(&self, x: &[f64], omega: &mut S::Point, level: i64, out: &mut [f64]) {
        let d = self.sys.phi(omega);
        let mut q = omega.clone();
        if self.sys.advance(&mut q).is_err() {
            out.fill(0.0);
            return;
        }
        self.inner.centered(x, &mut q, level + d, out);
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        self.inner.drift(x, out);
    }

    fn drift_jacobian(&self, x: &[f64], out: &mut [f64]) {
        self.inner.drift_jacobian(x, out);
    }

    fn sup_bound(&self) -> f64 {
        self.inner.sup_bound()
    }

    fn state_lipschitz(&self) -> f64 {
        self.inner.state_lipschitz()
    }

    fn drift_lipschitz(&self) -> f64 {
        self.inner.drift_lipschitz()
    }

    fn level_tail_weight(&self, cap: i64) -> f64 {
        // One map step moves levels by at most phi_bound.
        self.inner.level_tail_weight((cap - self.sys.phi_bound()).max(0))
    }

    fn level_support(&self) -> Option<(i64, i64)> {
        let (lo, hi) = self.inner.level_support()?;
        let b = self.sys.phi_bound();
        Some((lo - b, hi + b))
    }
}

/// Draws a state for centering validation; helper shared by tests.
pub fn _centering_probe(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}
