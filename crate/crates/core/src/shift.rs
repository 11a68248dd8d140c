//! Exact Bernoulli-shift base system on lazily generated bit streams.
//!
//! The doubling map `x -> 2x mod 1` collapses to zero after ~53 steps in
//! binary floating point, so the shift is realized on the dyadic
//! expansion directly: a point is an infinite stream of i.i.d. fair bits
//! (most significant first) and the map drops the leading bit. Orbits of
//! any length stay exact and Lebesgue measure is invariant by
//! construction.
//!
//! Observables are depth-`k` locally constant functions (functions of the
//! first `k` bits), which makes every expectation a finite sum over
//! cylinders: [`exact_cylinder_expectation`] and
//! [`exact_greenkubo_scalar`] enumerate those sums exactly and serve as
//! oracles for the Monte Carlo estimators elsewhere in the crate.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::zext::{BaseSystem, StepError};

/// Enumeration depth above which exact cylinder sums are refused.
pub const MAX_ENUM_DEPTH: u32 = 30;
/// Largest depth for which a cylinder observable is tabulated.
pub const MAX_TABLE_DEPTH: u32 = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShiftError {
    #[error("cylinder enumeration depth {depth} exceeds cap {MAX_ENUM_DEPTH}")]
    DepthOverflow { depth: u32 },
}

/// A point of the shift: an i.i.d. fair bit stream, extended on demand.
///
/// Bits are stored most-significant-first in 64-bit blocks; consumed
/// blocks are dropped, so memory stays proportional to the lookahead
/// actually used, not to the orbit length.
#[derive(Debug, Clone)]
pub struct BitStream {
    blocks: VecDeque<u64>,
    head: usize,
    rng: ChaCha8Rng,
}

impl BitStream {
    /// Creates a stream whose bits are drawn from a child stream of `rng`.
    pub fn sample(rng: &mut ChaCha8Rng) -> Self {
        let mut child = ChaCha8Rng::seed_from_u64(rng.random());
        child.set_stream(rng.random());
        BitStream { blocks: VecDeque::new(), head: 0, rng: child }
    }

    /// Stream with a fixed bit prefix, then random bits. Test helper and
    /// cylinder-point constructor: `bits[0]` is the leading bit.
    pub fn with_prefix(bits: &[u8], rng: &mut ChaCha8Rng) -> Self {
        let mut s = Self::sample(rng);
        s.ensure(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set_bit(i, b != 0);
        }
        s
    }

    fn ensure(&mut self, n: usize) {
        let need_blocks = (self.head + n).div_ceil(64);
        while self.blocks.len() < need_blocks {
            self.blocks.push_back(self.rng.next_u64());
        }
    }

    fn set_bit(&mut self, i: usize, v: bool) {
        let abs = self.head + i;
        let mask = 1u64 << (63 - (abs % 64));
        let blk = &mut self.blocks[abs / 64];
        if v {
            *blk |= mask;
        } else {
            *blk &= !mask;
        }
    }

    /// The `i`-th bit after the current head (0 = leading bit).
    pub fn bit(&mut self, i: usize) -> bool {
        self.ensure(i + 1);
        let abs = self.head + i;
        (self.blocks[abs / 64] >> (63 - (abs % 64))) & 1 == 1
    }

    /// First `n <= 64` bits packed MSB-first into the low `n` bits.
    pub fn prefix(&mut self, n: u32) -> u64 {
        assert!(n <= 64);
        let mut v = 0u64;
        for i in 0..n as usize {
            v = (v << 1) | self.bit(i) as u64;
        }
        v
    }

    /// Position in `[0,1)` encoded by the leading bits (53-bit mantissa).
    pub fn value(&mut self) -> f64 {
        self.prefix(53) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Drops the leading bit.
    pub fn shift(&mut self) {
        self.ensure(1);
        self.head += 1;
        if self.head == 64 {
            self.blocks.pop_front();
            self.head = 0;
        }
    }
}

/// The doubling map as a shift on bit streams, with the `+/-1` step
/// function read off the leading bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct DyadicShift;

impl BaseSystem for DyadicShift {
    type Point = BitStream;

    fn advance(&self, p: &mut BitStream) -> Result<(), StepError> {
        p.shift();
        Ok(())
    }

    fn phi(&self, p: &mut BitStream) -> i64 {
        if p.bit(0) {
            -1
        } else {
            1
        }
    }

    fn phi_bound(&self) -> i64 {
        1
    }

    fn sample_invariant(&self, rng: &mut ChaCha8Rng) -> BitStream {
        BitStream::sample(rng)
    }
}

/// A depth-`k` locally constant observable, tabulated over the `2^k`
/// cylinders of its depth. Locally constant functions are Lipschitz for
/// every dynamical metric on the shift, so they satisfy the regularity
/// required of driving observables by construction.
#[derive(Debug, Clone)]
pub struct CylinderFn {
    depth: u32,
    table: Vec<f64>,
}

impl CylinderFn {
    pub fn from_table(depth: u32, table: Vec<f64>) -> Self {
        assert!(depth <= MAX_TABLE_DEPTH, "table depth {depth} too large");
        assert_eq!(table.len(), 1usize << depth);
        CylinderFn { depth, table }
    }

    pub fn from_fn(depth: u32, f: impl Fn(u64) -> f64) -> Self {
        let table = (0..1u64 << depth).map(f).collect();
        Self::from_table(depth, table)
    }

    /// The step function: +1 when the leading bit is 0, -1 otherwise.
    pub fn step_sign() -> Self {
        Self::from_table(1, vec![1.0, -1.0])
    }

    pub fn constant(c: f64) -> Self {
        Self::from_table(0, vec![c])
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Evaluation on a packed depth-`self.depth` cylinder pattern.
    #[inline]
    pub fn eval_pattern(&self, pattern: u64) -> f64 {
        self.table[pattern as usize]
    }

    /// Evaluation at a stream point (reads the first `depth` bits).
    #[inline]
    pub fn eval(&self, p: &mut BitStream) -> f64 {
        self.table[p.prefix(self.depth) as usize]
    }

    /// Sup norm over all cylinders.
    pub fn sup(&self) -> f64 {
        self.table.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Exact mean under the invariant (uniform-bit) measure.
    pub fn mean(&self) -> f64 {
        self.table.iter().sum::<f64>() / self.table.len() as f64
    }

    /// Pointwise sum, at the larger of the two depths.
    pub fn add(&self, other: &CylinderFn) -> CylinderFn {
        let depth = self.depth.max(other.depth);
        CylinderFn::from_fn(depth, |p| {
            self.eval_pattern(p >> (depth - self.depth))
                + other.eval_pattern(p >> (depth - other.depth))
        })
    }

    /// The observable composed with `lag` shifts, as a deeper cylinder fn.
    pub fn shifted(&self, lag: u32) -> CylinderFn {
        let depth = self.depth + lag;
        assert!(depth <= MAX_TABLE_DEPTH);
        let mask = (1u64 << self.depth) - 1;
        CylinderFn::from_fn(depth, |p| self.eval_pattern(p & mask))
    }
}

/// Exact `E[f * (g o Tbar^lag)]` by enumeration over all cylinders of
/// depth `max(depth f, lag + depth g)`, each of mass `2^-depth`.
pub fn exact_cylinder_expectation(
    f: &CylinderFn,
    g: &CylinderFn,
    lag: u32,
) -> Result<f64, ShiftError> {
    let depth = f.depth.max(lag + g.depth);
    if depth > MAX_ENUM_DEPTH {
        return Err(ShiftError::DepthOverflow { depth });
    }
    let total = 1u64 << depth;
    let weight = 1.0 / total as f64;
    let shift_f = depth - f.depth;
    let shift_g = depth - lag - g.depth;
    let mask_g = (1u64 << g.depth) - 1;
    let sum = |range: std::ops::Range<u64>| -> f64 {
        let mut acc = 0.0;
        for p in range {
            acc += f.eval_pattern(p >> shift_f) * g.eval_pattern((p >> shift_g) & mask_g);
        }
        acc
    };
    let s = if depth >= 22 {
        let chunks = 64u64;
        let per = total / chunks;
        (0..chunks)
            .into_par_iter()
            .map(|c| sum(c * per..(c + 1) * per))
            .sum::<f64>()
    } else {
        sum(0..total)
    };
    Ok(s * weight)
}

/// How the infinite sum of autocorrelations of the step function is
/// truncated into a variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaConvention {
    /// `E[phi^2] + 2 * sum_{k>=1} E[phi . phi o Tbar^k]` (default; the
    /// central-limit normalization).
    TwoSided,
    /// `sum_{k>=0} E[phi . phi o Tbar^k]`, i.e. the one-sided sum in
    /// which the `k = 0` term is not doubled.
    OneSided,
}

/// Exact step-cocycle variance of a cylinder observable, by enumeration.
///
/// The two conventions coincide exactly when all positive-lag
/// correlations vanish (as for the canonical `+/-1` step function, where
/// both equal 1); they differ when they do not, which is why the choice
/// is explicit here.
pub fn sigma_exact(
    phi: &CylinderFn,
    k_max: u32,
    convention: SigmaConvention,
) -> Result<f64, ShiftError> {
    let var0 = exact_cylinder_expectation(phi, phi, 0)?;
    let mut tail = 0.0;
    for k in 1..=k_max {
        tail += exact_cylinder_expectation(phi, phi, k)?;
    }
    Ok(match convention {
        SigmaConvention::TwoSided => var0 + 2.0 * tail,
        SigmaConvention::OneSided => var0 + tail,
    })
}

/// Exact variance of the canonical `+/-1` step function (two-sided
/// convention). All positive-lag correlations vanish by independence of
/// the bits, so the value is exactly 1.
pub fn toy_sigma() -> f64 {
    sigma_exact(&CylinderFn::step_sign(), 20, SigmaConvention::TwoSided)
        .expect("depth 21 enumeration is within the cap")
}

/// Exact scalar Green-Kubo sum for a product observable
/// `F(w, a) = h(w) * psi(a)` on the Z-extension of the shift:
///
/// `C(l) = sum_a E[ h . psi(a) . (h o Tbar^l) . psi(a + S_l phi) ]`
/// summed as `C(0) + 2 sum_{l=1..l_max} C(l)`.
///
/// `psi` is the finitely supported level profile given by its weight
/// window; only level differences enter, so the window's absolute
/// position is irrelevant here.
pub fn exact_greenkubo_scalar(
    h: &CylinderFn,
    weights: &[f64],
    l_max: u32,
) -> Result<f64, ShiftError> {
    let mut a = exact_level_correlation(h, weights, 0)?;
    for l in 1..=l_max {
        a += 2.0 * exact_level_correlation(h, weights, l)?;
    }
    Ok(a)
}

/// Exact lag-`l` term of the Green-Kubo sum for a product observable.
pub fn exact_level_correlation(
    h: &CylinderFn,
    weights: &[f64],
    lag: u32,
) -> Result<f64, ShiftError> {
    let depth = h.depth.max(lag + h.depth);
    if depth > MAX_ENUM_DEPTH {
        return Err(ShiftError::DepthOverflow { depth });
    }
    // Autocorrelation of the level profile: R(s) = sum_a psi(a) psi(a+s).
    let r_psi = |s: i64| -> f64 {
        let mut acc = 0.0;
        for (i, &wi) in weights.iter().enumerate() {
            let aj = i as i64 + s;
            if aj >= 0 && (aj as usize) < weights.len() {
                acc += wi * weights[aj as usize];
            }
        }
        acc
    };
    let total = 1u64 << depth;
    let shift_h0 = depth - h.depth;
    let shift_hl = depth - lag - h.depth;
    let mask = (1u64 << h.depth) - 1;
    let mut acc = 0.0;
    for p in 0..total {
        // Birkhoff sum of the +/-1 step over the first `lag` bits.
        let mut s_l = 0i64;
        for i in 0..lag {
            let bit = (p >> (depth - 1 - i)) & 1;
            s_l += 1 - 2 * bit as i64;
        }
        acc += h.eval_pattern(p >> shift_h0)
            * h.eval_pattern((p >> shift_hl) & mask)
            * r_psi(s_l);
    }
    Ok(acc / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use crate::zext;

    #[test]
    fn shift_drops_leading_bit() {
        let mut rng = task_rng(1, 0, 0);
        let mut p = BitStream::with_prefix(&[1, 0, 1], &mut rng);
        assert_eq!(p.prefix(3), 0b101);
        p.shift();
        assert_eq!(p.prefix(2), 0b01);
    }

    #[test]
    fn prefix_shift_identity_is_exact() {
        let mut rng = task_rng(1, 0, 1);
        for _ in 0..50 {
            let mut p = BitStream::sample(&mut rng);
            let before = p.prefix(64);
            let mut q = p.clone();
            q.shift();
            assert_eq!(q.prefix(63), before & ((1u64 << 63) - 1));
        }
    }

    #[test]
    fn value_doubles_mod_one() {
        let mut rng = task_rng(1, 0, 2);
        for _ in 0..200 {
            let mut p = BitStream::sample(&mut rng);
            let v = p.value();
            let mut q = p.clone();
            q.shift();
            let doubled = (2.0 * v) % 1.0;
            assert!((q.value() - doubled).abs() <= 2.0f64.powi(-52));
        }
    }

    #[test]
    fn phi_reads_leading_bit() {
        let sys = DyadicShift;
        let mut rng = task_rng(1, 0, 3);
        let mut p0 = BitStream::with_prefix(&[0], &mut rng);
        let mut p1 = BitStream::with_prefix(&[1], &mut rng);
        assert_eq!(sys.phi(&mut p0), 1);
        assert_eq!(sys.phi(&mut p1), -1);
    }

    #[test]
    fn bitstream_birkhoff_matches_enumeration() {
        // bits 0,1,0 with phi = +1/-1 on the leading bit: S_3 = +1-1+1.
        let sys = DyadicShift;
        let mut rng = task_rng(1, 0, 4);
        let p = BitStream::with_prefix(&[0, 1, 0], &mut rng);
        assert_eq!(zext::birkhoff_phi(&sys, &p, 3).unwrap(), 1);
    }

    #[test]
    fn expansivity_bookkeeping_is_exact() {
        // Points agreeing in their first 64 + j bits agree in their
        // first j bits after 64 steps.
        let mut rng = task_rng(1, 0, 5);
        let j = 17usize;
        let mut a = BitStream::sample(&mut rng);
        let prefix: Vec<u8> = (0..64 + j).map(|i| a.bit(i) as u8).collect();
        let mut b = BitStream::with_prefix(&prefix, &mut rng);
        for _ in 0..64 {
            a.shift();
            b.shift();
        }
        assert_eq!(a.prefix(j as u32), b.prefix(j as u32));
    }

    #[test]
    fn cylinder_oracle_phi_squared() {
        let phi = CylinderFn::step_sign();
        let v = exact_cylinder_expectation(&phi, &phi, 0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_oracle_phi_lag_one_orthogonal() {
        let phi = CylinderFn::step_sign();
        let v = exact_cylinder_expectation(&phi, &phi, 1).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn cylinder_oracle_constant_times_phi() {
        let one = CylinderFn::constant(1.0);
        let phi = CylinderFn::step_sign();
        for lag in 0..5 {
            let v = exact_cylinder_expectation(&one, &phi, lag).unwrap();
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn depth_overflow_rejected() {
        let deep = CylinderFn::from_fn(16, |p| p as f64);
        let err = exact_cylinder_expectation(&deep, &deep, 15).unwrap_err();
        assert_eq!(err, ShiftError::DepthOverflow { depth: 31 });
    }

    #[test]
    fn toy_sigma_is_exactly_one() {
        assert!((toy_sigma() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_of_smoothed_step() {
        // phi' = phi + phi o Tbar: Var = 2, lag-1 correlation = 1,
        // higher lags vanish: two-sided sigma = 2 + 2*1 = 4.
        let phi = CylinderFn::step_sign();
        let phi2 = phi.add(&phi.shifted(1));
        let s = sigma_exact(&phi2, 12, SigmaConvention::TwoSided).unwrap();
        assert!((s - 4.0).abs() < 1e-12, "sigma = {s}");
        let s1 = sigma_exact(&phi2, 12, SigmaConvention::OneSided).unwrap();
        assert!((s1 - 3.0).abs() < 1e-12, "one-sided sigma = {s1}");
    }

    #[test]
    fn sigma_zero_observable() {
        let zero = CylinderFn::constant(0.0);
        let s = sigma_exact(&zero, 10, SigmaConvention::TwoSided).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn greenkubo_scalar_for_odd_profile() {
        // h = phi, psi(-1) = -1, psi(1) = 1: C(0) = 2, all other lags 0.
        let h = CylinderFn::step_sign();
        let a = exact_greenkubo_scalar(&h, &[-1.0, 0.0, 1.0], 12).unwrap();
        assert!((a - 2.0).abs() < 1e-12, "a = {a}");
    }

    #[test]
    fn greenkubo_scalar_single_level() {
        // h = phi, psi = 1_{a=0}: C(0) = 1, others vanish.
        let h = CylinderFn::step_sign();
        let a = exact_greenkubo_scalar(&h, &[1.0], 12).unwrap();
        assert!((a - 1.0).abs() < 1e-12, "a = {a}");
    }

    #[test]
    fn invariant_sampling_is_uniform() {
        // Distribution of value() after 20 steps stays uniform on [0,1).
        let sys = DyadicShift;
        let mut rng = task_rng(1, 0, 6);
        let n = 100_000usize;
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let mut p = sys.sample_invariant(&mut rng);
            for _ in 0..20 {
                p.shift();
            }
            vals.push(p.value());
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, v) in vals.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            ks = ks.max((v - lo).abs()).max((v - hi).abs());
        }
        assert!(ks < 0.02, "KS = {ks}");
    }

    #[test]
    fn phi_is_centered_empirically() {
        let sys = DyadicShift;
        let mut rng = task_rng(1, 0, 7);
        let n = 1_000_000usize;
        let mut sum = 0i64;
        for _ in 0..n {
            let mut p = sys.sample_invariant(&mut rng);
            sum += sys.phi(&mut p);
        }
        let mean = sum as f64 / n as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean = {mean}");
    }
}
