//! Perturbed and averaged dynamics.
//!
//! The perturbed equation freezes the fast orbit on each slow-time
//! segment `[k*eps, (k+1)*eps)` and advances the resulting smooth ODE
//! `x' = F(x, T^k w) + Fbar(x)` by classical RK4; drivers advance by one
//! skew-product step per segment, so the only discontinuities of the
//! right-hand side sit exactly on segment boundaries and RK4 keeps its
//! order inside each one. The averaged equation `w' = Fbar(w)` uses the
//! same RK4 core on a uniform grid.
//!
//! The perturbed Birkhoff sum `v` integrates the centered field along the
//! averaged path and the fast orbit with Simpson quadrature per unit of
//! fast time (the integrand varies only through the averaged state
//! there); `vtilde` is its pure-sum sibling evaluated at integer fast
//! times. Both carry the `eps^(1/4)` normalization of the convergence
//! statements.

use thiserror::Error;

use crate::field::DrivenField;
use crate::zext::{advance_z, BaseSystem, StepError, ZPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("state left the finite range at t = {t}")]
    NonFinite { t: f64 },
    #[error("base system step failed: {0}")]
    Step(#[from] StepError),
    #[error("trajectory grids do not match ({0})")]
    GridMismatch(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArg(&'static str),
}

/// Time-stamped sampled path of an ODE solution or stochastic process.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGrid {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl TrajectoryGrid {
    pub fn new(dim: usize) -> Self {
        TrajectoryGrid { dim, times: Vec::new(), states: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        TrajectoryGrid { dim, times: Vec::with_capacity(n), states: Vec::with_capacity(n * dim) }
    }

    pub fn push(&mut self, t: f64, state: &[f64]) {
        debug_assert_eq!(state.len(), self.dim);
        debug_assert!(self.times.last().map_or(true, |last| t > *last));
        self.times.push(t);
        self.states.extend_from_slice(state);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Scalar value at node `i` (first coordinate).
    pub fn scalar(&self, i: usize) -> f64 {
        self.states[i * self.dim]
    }

    /// Linear interpolation at time `t` into `out`.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) -> Result<(), SolveError> {
        let times = &self.times;
        if times.is_empty() {
            return Err(SolveError::GridMismatch("empty grid"));
        }
        let eps = 1e-9 * (1.0 + t.abs());
        if t <= times[0] + eps {
            if t < times[0] - eps {
                return Err(SolveError::GridMismatch("time before grid start"));
            }
            out.copy_from_slice(self.state(0));
            return Ok(());
        }
        let last = *times.last().unwrap();
        if t >= last - eps {
            if t > last + eps {
                return Err(SolveError::GridMismatch("time after grid end"));
            }
            out.copy_from_slice(self.last_state());
            return Ok(());
        }
        let idx = times.partition_point(|&u| u <= t);
        let (t0, t1) = (times[idx - 1], times[idx]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.state(idx - 1), self.state(idx));
        for i in 0..self.dim {
            out[i] = a[i] * (1.0 - w) + b[i] * w;
        }
        Ok(())
    }

    /// Largest Euclidean distance between matching nodes of two grids.
    pub fn sup_distance(&self, other: &TrajectoryGrid) -> Result<f64, SolveError> {
        check_same_grid(self, other)?;
        let mut sup: f64 = 0.0;
        for i in 0..self.len() {
            let (a, b) = (self.state(i), other.state(i));
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            sup = sup.max(d2.sqrt());
        }
        Ok(sup)
    }

    /// Largest Euclidean norm over nodes.
    pub fn sup_norm(&self) -> f64 {
        (0..self.len())
            .map(|i| self.state(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Pointwise scaling of the states.
    pub fn scaled(&self, factor: f64) -> TrajectoryGrid {
        TrajectoryGrid {
            dim: self.dim,
            times: self.times.clone(),
            states: self.states.iter().map(|v| v * factor).collect(),
        }
    }
}

fn check_same_grid(a: &TrajectoryGrid, b: &TrajectoryGrid) -> Result<(), SolveError> {
    if a.dim != b.dim {
        return Err(SolveError::GridMismatch("dimension"));
    }
    if a.len() != b.len() {
        return Err(SolveError::GridMismatch("length"));
    }
    for (ta, tb) in a.times.iter().zip(b.times.iter()) {
        if (ta - tb).abs() > 1e-9 * (1.0 + ta.abs()) {
            return Err(SolveError::GridMismatch("times"));
        }
    }
    Ok(())
}

/// Fixed-step RK4 stage buffers, reused across steps.
struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(dim: usize) -> Self {
        Rk4 {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One RK4 step of size `h` for the autonomous RHS `f`.
    fn step(&mut self, x: &mut [f64], h: f64, mut f: impl FnMut(&[f64], &mut [f64])) {
        let d = x.len();
        f(x, &mut self.k1);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..d {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..d {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Classical RK4 for the averaged equation `w' = Fbar(w)` on a uniform
/// grid of step `dt` (last step shortened to land on `t_end`).
pub fn solve_averaged(
    x0: &[f64],
    fbar: impl Fn(&[f64], &mut [f64]),
    t_end: f64,
    dt: f64,
) -> Result<TrajectoryGrid, SolveError> {
    if dt <= 0.0 || t_end < 0.0 {
        return Err(SolveError::InvalidArg("need dt > 0 and t_end >= 0"));
    }
    let dim = x0.len();
    let n_steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut grid = TrajectoryGrid::with_capacity(dim, n_steps + 1);
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(dim);
    grid.push(0.0, &x);
    for k in 0..n_steps {
        let t0 = k as f64 * dt;
        let t1 = ((k + 1) as f64 * dt).min(t_end);
        rk.step(&mut x, t1 - t0, |y, out| fbar(y, out));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite { t: t1 });
        }
        grid.push(t1, &x);
    }
    Ok(grid)
}

/// Streaming integrator for the perturbed equation.
///
/// `observe(k, t, x)` is called once with the initial state (`k = 0`,
/// `t = 0`) and once after each completed segment with the segment index
/// `k+1` and its end time. Segment `k` freezes the driver `T^k w`.
pub fn integrate_perturbed<S, F, O>(
    sys: &S,
    field: &F,
    x0: &[f64],
    omega: &ZPoint<S::Point>,
    eps: f64,
    t_end: f64,
    substeps: usize,
    mut observe: O,
) -> Result<Vec<f64>, SolveError>
where
    S: BaseSystem,
    F: DrivenField<S>,
    O: FnMut(usize, f64, &[f64]),
{
    if eps <= 0.0 {
        return Err(SolveError::InvalidArg("eps must be positive"));
    }
    if substeps == 0 {
        return Err(SolveError::InvalidArg("substeps must be >= 1"));
    }
    let dim = field.dim();
    if x0.len() != dim {
        return Err(SolveError::InvalidArg("state dimension mismatch"));
    }
    let n_segments = (t_end / eps - 1e-9).ceil().max(0.0) as usize;
    let mut x = x0.to_vec();
    let mut driver = omega.clone();
    let mut rk = Rk4::new(dim);
    let mut fbuf = vec![0.0; dim];
    observe(0, 0.0, &x);
    for k in 0..n_segments {
        let t0 = k as f64 * eps;
        let t1 = ((k + 1) as f64 * eps).min(t_end);
        let h = (t1 - t0) / substeps as f64;
        let (base, level) = (&mut driver.base, driver.level);
        for _ in 0..substeps {
            rk.step(&mut x, h, |y, out| {
                field.drift(y, out);
                field.centered(y, base, level, &mut fbuf);
                for i in 0..dim {
                    out[i] += fbuf[i];
                }
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite { t: t1 });
        }
        if k + 1 < n_segments {
            advance_z(sys, &mut driver)?;
        }
        observe(k + 1, t1, &x);
    }
    Ok(x)
}

/// Perturbed solution sampled at the segment boundaries.
pub fn solve_perturbed<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x0: &[f64],
    omega: &ZPoint<S::Point>,
    eps: f64,
    t_end: f64,
    substeps: usize,
) -> Result<TrajectoryGrid, SolveError> {
    let n = (t_end / eps - 1e-9).ceil().max(0.0) as usize;
    let mut grid = TrajectoryGrid::with_capacity(field.dim(), n + 1);
    integrate_perturbed(sys, field, x0, omega, eps, t_end, substeps, |_, t, x| {
        grid.push(t, x);
    })?;
    Ok(grid)
}

/// Pointwise difference `perturbed - averaged` on a shared grid.
pub fn error_process(
    perturbed: &TrajectoryGrid,
    averaged: &TrajectoryGrid,
) -> Result<TrajectoryGrid, SolveError> {
    check_same_grid(perturbed, averaged)?;
    let mut out = TrajectoryGrid::with_capacity(perturbed.dim, perturbed.len());
    let mut buf = vec![0.0; perturbed.dim];
    for i in 0..perturbed.len() {
        let (a, b) = (perturbed.state(i), averaged.state(i));
        for j in 0..perturbed.dim {
            buf[j] = a[j] - b[j];
        }
        out.push(perturbed.times[i], &buf);
    }
    Ok(out)
}

/// Perturbed Birkhoff sum
/// `v_t = eps^(1/4) * integral_0^(t/eps) F(w(eps s), T^floor(s) w) ds`,
/// with Simpson quadrature inside each unit fast-time interval, sampled
/// at segment boundaries. `w` must cover `[0, t_end]`; its values at
/// quadrature nodes are linearly interpolated, so callers wanting
/// quadrature-grade accuracy should supply `w` on a grid at least as fine
/// as `eps / 2`.
pub fn perturbed_birkhoff_v<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    omega: &ZPoint<S::Point>,
    eps: f64,
    t_end: f64,
    w: &TrajectoryGrid,
) -> Result<TrajectoryGrid, SolveError> {
    if eps <= 0.0 {
        return Err(SolveError::InvalidArg("eps must be positive"));
    }
    let dim = field.dim();
    if w.dim() != dim {
        return Err(SolveError::GridMismatch("dimension"));
    }
    let scale = eps.powf(0.25);
    let n_segments = (t_end / eps - 1e-9).ceil().max(0.0) as usize;
    let mut grid = TrajectoryGrid::with_capacity(dim, n_segments + 1);
    let mut driver = omega.clone();
    let mut acc = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    let mut wa = vec![0.0; dim];
    let mut wm = vec![0.0; dim];
    let mut wb = vec![0.0; dim];
    let mut fa = vec![0.0; dim];
    let mut fm = vec![0.0; dim];
    let mut fb = vec![0.0; dim];
    grid.push(0.0, &acc);
    for k in 0..n_segments {
        let t0 = k as f64 * eps;
        let t1 = ((k + 1) as f64 * eps).min(t_end);
        let len = (t1 - t0) / eps; // 1 except for a trailing partial segment
        w.interpolate(t0, &mut wa)?;
        w.interpolate(0.5 * (t0 + t1), &mut wm)?;
        w.interpolate(t1, &mut wb)?;
        let (base, level) = (&mut driver.base, driver.level);
        field.centered(&wa, base, level, &mut fa);
        field.centered(&wm, base, level, &mut fm);
        field.centered(&wb, base, level, &mut fb);
        for i in 0..dim {
            acc[i] += len / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i]);
            out[i] = scale * acc[i];
        }
        if k + 1 < n_segments {
            advance_z(sys, &mut driver)?;
        }
        grid.push(t1, &out);
    }
    Ok(grid)
}

/// Discrete perturbed sum
/// `vtilde_t = eps^(1/4) * sum_{k=1}^{floor(t/eps)} F(w(eps k), T^k w)`,
/// sampled on the same grid as [`perturbed_birkhoff_v`].
pub fn discrete_vtilde<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    omega: &ZPoint<S::Point>,
    eps: f64,
    t_end: f64,
    w: &TrajectoryGrid,
) -> Result<TrajectoryGrid, SolveError> {
    if eps <= 0.0 {
        return Err(SolveError::InvalidArg("eps must be positive"));
    }
    let dim = field.dim();
    if w.dim() != dim {
        return Err(SolveError::GridMismatch("dimension"));
    }
    let scale = eps.powf(0.25);
    let n_segments = (t_end / eps - 1e-9).ceil().max(0.0) as usize;
    let mut grid = TrajectoryGrid::with_capacity(dim, n_segments + 1);
    let mut driver = omega.clone();
    let mut acc = vec![0.0; dim];
    let mut out = vec![0.0; dim];
    let mut wk = vec![0.0; dim];
    let mut fk = vec![0.0; dim];
    grid.push(0.0, &acc);
    for k in 1..=n_segments {
        advance_z(sys, &mut driver)?;
        let t = (k as f64 * eps).min(t_end);
        // The sum counts whole fast steps only; a trailing partial
        // segment contributes nothing new.
        if k as f64 * eps <= t_end + 1e-9 * eps {
            w.interpolate(k as f64 * eps, &mut wk)?;
            field.centered(&wk, &mut driver.base, driver.level, &mut fk);
            for i in 0..dim {
                acc[i] += fk[i];
            }
        }
        for i in 0..dim {
            out[i] = scale * acc[i];
        }
        grid.push(t, &out);
    }
    Ok(grid)
}

/// Shift-sensitivity diagnostic: `sup_t eps^(-3/4) |x_t(w) - x_t(Tw)|`
/// over the segment grid. The averaged path cancels from the difference
/// of the two error processes, so only the perturbed solutions enter.
pub fn zwei_shift_sensitivity<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x0: &[f64],
    omega: &ZPoint<S::Point>,
    eps: f64,
    t_end: f64,
    substeps: usize,
) -> Result<f64, SolveError> {
    let shifted = {
        let mut q = omega.clone();
        advance_z(sys, &mut q)?;
        q
    };
    let a = solve_perturbed(sys, field, x0, omega, eps, t_end, substeps)?;
    let mut sup: f64 = 0.0;
    let mut idx = 0usize;
    integrate_perturbed(sys, field, x0, &shifted, eps, t_end, substeps, |_, _, x| {
        let ref_state = a.state(idx);
        let d2: f64 = x.iter().zip(ref_state).map(|(p, q)| (p - q) * (p - q)).sum();
        sup = sup.max(d2.sqrt());
        idx += 1;
    })?;
    Ok(sup * eps.powf(-0.75))
}
