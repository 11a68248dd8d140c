//! Base-system contract and the Z-extension skew product.
//!
//! A base system is a probability-preserving map `Tbar` on an opaque
//! point type together with a bounded integer step function `phi` and a
//! sampler for the invariant measure. The Z-extension acts on pairs
//! `(base point, level)` by
//!
//! ```text
//! T(w, m) = (Tbar(w), m + phi(w))
//! ```
//!
//! so after `n` steps the level has moved by the Birkhoff sum
//! `S_n phi = sum_{k<n} phi(Tbar^k w)`. Levels are tracked in checked
//! 64-bit arithmetic: `|S_n phi| <= n * phi_bound`, so overflow marks a
//! run far beyond any sane experiment size rather than a modelling case.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Failure of a single base-map application.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    /// No collision found within the configured horizon cap.
    #[error("free flight exceeded the horizon cap of {cap}")]
    HorizonViolation { cap: f64 },
    /// Near-tangential collision; the orbit should be discarded and
    /// resampled by the caller.
    #[error("grazing collision: |<v,n>| = {dot:.3e} below tolerance")]
    GrazingCollision { dot: f64 },
    /// Level arithmetic left the i64 range.
    #[error("cell level overflowed 64-bit range")]
    LevelOverflow,
}

/// A probability-preserving base map with an integer step function.
///
/// Implementations must keep `|phi(w)| <= phi_bound()` for every point
/// they hand out, and `phi` must have zero mean under the invariant
/// measure sampled by [`BaseSystem::sample_invariant`]. The point
/// representation is opaque to callers; nothing in this module inspects
/// it.
pub trait BaseSystem: Sync {
    type Point: Clone + Send;

    /// Applies the base map in place.
    fn advance(&self, p: &mut Self::Point) -> Result<(), StepError>;

    /// Applies the base map to a copy of the point.
    fn step(&self, p: &Self::Point) -> Result<Self::Point, StepError> {
        let mut q = p.clone();
        self.advance(&mut q)?;
        Ok(q)
    }

    /// Integer step function evaluated at the current (pre-step) point.
    ///
    /// Takes `&mut` because lazily generated points may extend their
    /// internal state on read; the point's value is not advanced.
    fn phi(&self, p: &mut Self::Point) -> i64;

    /// Declared bound with `|phi| <= phi_bound` everywhere.
    fn phi_bound(&self) -> i64;

    /// Draws a point distributed according to the invariant measure.
    fn sample_invariant(&self, rng: &mut ChaCha8Rng) -> Self::Point;
}

/// A point of the Z-extension: a base point plus a cell level.
#[derive(Debug, Clone, PartialEq)]
pub struct ZPoint<P> {
    pub base: P,
    pub level: i64,
}

impl<P> ZPoint<P> {
    /// Lifts a base point to the zero level.
    pub fn lift(base: P) -> Self {
        ZPoint { base, level: 0 }
    }
}

/// One application of the skew product: `(w, m) -> (Tbar w, m + phi(w))`.
pub fn step_z<S: BaseSystem>(
    sys: &S,
    p: &ZPoint<S::Point>,
) -> Result<ZPoint<S::Point>, StepError> {
    let mut q = p.clone();
    advance_z(sys, &mut q)?;
    Ok(q)
}

/// In-place skew-product step; returns the `phi` increment consumed.
pub fn advance_z<S: BaseSystem>(
    sys: &S,
    p: &mut ZPoint<S::Point>,
) -> Result<i64, StepError> {
    let d = sys.phi(&mut p.base);
    debug_assert!(d.abs() <= sys.phi_bound());
    sys.advance(&mut p.base)?;
    p.level = p.level.checked_add(d).ok_or(StepError::LevelOverflow)?;
    Ok(d)
}

/// Birkhoff sum `S_n phi` of the step function along the base orbit.
///
/// `S_0 phi = 0` by convention (empty sum).
pub fn birkhoff_phi<S: BaseSystem>(
    sys: &S,
    base: &S::Point,
    n: usize,
) -> Result<i64, StepError> {
    let mut p = base.clone();
    let mut sum: i64 = 0;
    for _ in 0..n {
        sum = sum
            .checked_add(sys.phi(&mut p))
            .ok_or(StepError::LevelOverflow)?;
        sys.advance(&mut p)?;
    }
    Ok(sum)
}

/// The first `n+1` points of the Z-extension orbit of `(base, 0)`.
pub fn orbit<S: BaseSystem>(
    sys: &S,
    base: &S::Point,
    n: usize,
) -> Result<Vec<ZPoint<S::Point>>, StepError> {
    let mut out = Vec::with_capacity(n + 1);
    let mut p = ZPoint::lift(base.clone());
    out.push(p.clone());
    for _ in 0..n {
        advance_z(sys, &mut p)?;
        out.push(p.clone());
    }
    Ok(out)
}
