//! Finite-horizon Z-periodic Lorentz gas: the collision map on the
//! cylinder with periodic circular scatterers.
//!
//! The phase space consists of post-collision states (a boundary point
//! and an outgoing unit direction); the map sends a state to the state
//! after the next collision, and the step function is the integer
//! x-displacement of the flight, which makes the system a Z-extension
//! of the torus (Sinai) billiard obtained by folding the cylinder.
//!
//! Scatterers are disks only: ray-circle intersections are closed-form
//! and the curvature condition is automatic. Geometry is validated at
//! load (pairwise disjoint closures over all periodic images, optional
//! point symmetry, which guarantees a centered step function by time
//! reversal); the finite-horizon property is certified separately by
//! [`validate_finite_horizon`], a corridor sweep over rational
//! directions plus a Monte Carlo flight bound.

mod kernel;
mod scalar;

pub use kernel::{canonicalize, kernel_step, reverse_state, Geometry, KernelFlight, KernelState};
pub use scalar::{BigReal, Real, BIG_PRECISION};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::rng::task_rng;
use crate::zext::{BaseSystem, StepError};

/// Collisions closer to tangency than this are rejected; the orbit
/// should be discarded and resampled by the harness. Tangential
/// collisions form a null set but destroy numerical stability.
pub const GRAZING_TOL: f64 = 1e-10;

/// Minimum separation between disk closures demanded at load.
pub const DISJOINT_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BilliardError {
    #[error("disk {index} has invalid radius {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("disk {index} center must lie in the fundamental cell [0,1)^2")]
    CenterOutOfCell { index: usize },
    #[error("disks {i} and {j} (image offset {offset:?}) are separated by {gap:.3e} < margin")]
    Overlapping { i: usize, j: usize, offset: (i64, i64), gap: f64 },
    #[error("configuration is not symmetric under (x,y) -> (-x,-y): disk {index} has no mirror")]
    NotSymmetric { index: usize },
    #[error("horizon cap must be positive")]
    BadHorizonCap,
    #[error("direction or normal is not a unit vector (|1 - norm| = {dev:.3e})")]
    NonUnitVector { dev: f64 },
}

/// A circular scatterer in the fundamental cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Periodic disk geometry on the cylinder (period 1 in x as the Z
/// direction, period 1 in y as the torus direction).
#[derive(Debug, Clone)]
pub struct BilliardConfig {
    pub disks: Vec<Disk>,
    /// Hard bound on admissible free flights; longer flights are errors.
    pub horizon_cap: f64,
    pub symmetry_required: bool,
    /// For each disk, its mirror partner and the integer shift `k` with
    /// `center_partner = -center + k`. Present when the configuration is
    /// point symmetric.
    mirror_map: Option<Vec<(usize, [i64; 2])>>,
}

impl BilliardConfig {
    pub fn new(
        disks: Vec<Disk>,
        horizon_cap: f64,
        symmetry_required: bool,
    ) -> Result<Self, BilliardError> {
        if !(horizon_cap > 0.0) {
            return Err(BilliardError::BadHorizonCap);
        }
        for (i, d) in disks.iter().enumerate() {
            if !(d.radius > 0.0 && d.radius < 0.5) {
                return Err(BilliardError::BadRadius { index: i, radius: d.radius });
            }
            if !(0.0..1.0).contains(&d.center[0]) || !(0.0..1.0).contains(&d.center[1]) {
                return Err(BilliardError::CenterOutOfCell { index: i });
            }
        }
        // Disjointness over all periodic images. Radii are below 1/2,
        // so only offsets within one cell can touch.
        for (i, a) in disks.iter().enumerate() {
            for (j, b) in disks.iter().enumerate().skip(i) {
                for mx in -1..=1i64 {
                    for my in -1..=1i64 {
                        if i == j && mx == 0 && my == 0 {
                            continue;
                        }
                        let dx = b.center[0] + mx as f64 - a.center[0];
                        let dy = b.center[1] + my as f64 - a.center[1];
                        let gap = (dx * dx + dy * dy).sqrt() - a.radius - b.radius;
                        if gap < DISJOINT_MARGIN {
                            return Err(BilliardError::Overlapping {
                                i,
                                j,
                                offset: (mx, my),
                                gap,
                            });
                        }
                    }
                }
            }
        }
        let mirror_map = Self::find_mirror_map(&disks);
        if symmetry_required && mirror_map.is_none() {
            let index = Self::first_asymmetric(&disks);
            return Err(BilliardError::NotSymmetric { index });
        }
        Ok(BilliardConfig { disks, horizon_cap, symmetry_required, mirror_map })
    }

    /// Two disks at (0,0) r=0.4 and (0.5,0.5) r=0.3: point symmetric,
    /// disjoint with margin ~7e-3 and corridor-blocked for every
    /// rational direction (certified by the horizon validator).
    pub fn default_two_disk() -> Self {
        Self::new(
            vec![
                Disk { center: [0.0, 0.0], radius: 0.4 },
                Disk { center: [0.5, 0.5], radius: 0.3 },
            ],
            3.0,
            true,
        )
        .expect("default geometry is valid")
    }

    fn mirror_target(c: f64) -> f64 {
        if c == 0.0 {
            0.0
        } else {
            1.0 - c
        }
    }

    fn find_mirror_map(disks: &[Disk]) -> Option<Vec<(usize, [i64; 2])>> {
        let mut map = Vec::with_capacity(disks.len());
        for d in disks.iter() {
            let tx = Self::mirror_target(d.center[0]);
            let ty = Self::mirror_target(d.center[1]);
            let partner = disks.iter().position(|e| {
                (e.center[0] - tx).abs() < 1e-9
                    && (e.center[1] - ty).abs() < 1e-9
                    && (e.radius - d.radius).abs() < 1e-9
            })?;
            let k = [
                if d.center[0] == 0.0 { 0 } else { 1 },
                if d.center[1] == 0.0 { 0 } else { 1 },
            ];
            map.push((partner, k));
        }
        Some(map)
    }

    fn first_asymmetric(disks: &[Disk]) -> usize {
        for (i, d) in disks.iter().enumerate() {
            let tx = Self::mirror_target(d.center[0]);
            let ty = Self::mirror_target(d.center[1]);
            if !disks.iter().any(|e| {
                (e.center[0] - tx).abs() < 1e-9
                    && (e.center[1] - ty).abs() < 1e-9
                    && (e.radius - d.radius).abs() < 1e-9
            }) {
                return i;
            }
        }
        0
    }

    pub fn mirror_map(&self) -> Option<&[(usize, [i64; 2])]> {
        self.mirror_map.as_deref()
    }
}

/// Post-collision state: boundary point (canonical cell frame of its
/// disk), outgoing unit direction, and the global x-cell index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollisionState {
    pub disk: usize,
    pub point: [f64; 2],
    pub dir: [f64; 2],
    pub x_cell: i64,
}

impl CollisionState {
    /// Position on the disk circle in `[0, 2pi)`.
    pub fn boundary_angle(&self, cfg: &BilliardConfig) -> f64 {
        let c = cfg.disks[self.disk].center;
        let a = (self.point[1] - c[1]).atan2(self.point[0] - c[0]);
        if a < 0.0 {
            a + 2.0 * std::f64::consts::PI
        } else {
            a
        }
    }

    /// Signed angle between the outgoing direction and the outward
    /// normal, in `(-pi/2, pi/2)`.
    pub fn outgoing_angle(&self, cfg: &BilliardConfig) -> f64 {
        let c = cfg.disks[self.disk].center;
        let r = cfg.disks[self.disk].radius;
        let n = [(self.point[0] - c[0]) / r, (self.point[1] - c[1]) / r];
        let cos = self.dir[0] * n[0] + self.dir[1] * n[1];
        let sin = n[0] * self.dir[1] - n[1] * self.dir[0];
        sin.atan2(cos)
    }
}

/// One free flight of the collision map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeFlightResult {
    pub length: f64,
    pub next: CollisionState,
    /// Integer x-displacement of the flight (the step function value).
    pub cell_displacement: i64,
    /// Periodic copy that was hit: `(mx, my)`; `my` is the torus wrap.
    pub image_offset: (i64, i64),
}

/// The collision map with its precomputed `f64` geometry.
pub struct Billiard {
    cfg: BilliardConfig,
    geom: Geometry<f64>,
}

impl Billiard {
    pub fn new(cfg: BilliardConfig) -> Self {
        let geom = Geometry::new(&cfg);
        Billiard { cfg, geom }
    }

    pub fn default_two_disk() -> Self {
        Self::new(BilliardConfig::default_two_disk())
    }

    pub fn config(&self) -> &BilliardConfig {
        &self.cfg
    }

    /// Earliest collision of the ray from `s`, with exact quadratic
    /// intersection against every periodic image within reach.
    pub fn next_collision(&self, s: &CollisionState) -> Result<FreeFlightResult, StepError> {
        let ks = KernelState {
            disk: s.disk,
            point: [s.point[0], s.point[1]],
            dir: [s.dir[0], s.dir[1]],
            x_cell: s.x_cell,
        };
        let (next, flight) = kernel_step(&self.geom, &ks)?;
        Ok(FreeFlightResult {
            length: flight.length,
            next: CollisionState {
                disk: next.disk,
                point: next.point,
                dir: next.dir,
                x_cell: next.x_cell,
            },
            cell_displacement: flight.cell_displacement,
            image_offset: flight.offset,
        })
    }

    /// Collision map step returning the step-function value
    /// (the x-cell displacement of the flight).
    pub fn step_with_displacement(
        &self,
        s: &mut CollisionState,
    ) -> Result<i64, StepError> {
        let flight = self.next_collision(s)?;
        *s = flight.next;
        Ok(flight.cell_displacement)
    }

    /// Invariant-measure sampler: disk chosen proportionally to
    /// circumference, boundary point uniform, outgoing angle with
    /// density `cos(theta)/2` via `theta = arcsin(2U - 1)`.
    pub fn sample_state(&self, rng: &mut ChaCha8Rng) -> CollisionState {
        let total: f64 = self.cfg.disks.iter().map(|d| d.radius).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut disk = 0;
        for (i, d) in self.cfg.disks.iter().enumerate() {
            disk = i;
            if pick < d.radius {
                break;
            }
            pick -= d.radius;
        }
        let d = &self.cfg.disks[disk];
        let alpha = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let n = [alpha.cos(), alpha.sin()];
        let theta = (2.0 * rng.random::<f64>() - 1.0).asin();
        let (sin_t, cos_t) = theta.sin_cos();
        // Rotate the normal by theta: n cos(theta) + t sin(theta) with
        // t the positively oriented tangent.
        let dir = [cos_t * n[0] - sin_t * n[1], cos_t * n[1] + sin_t * n[0]];
        CollisionState {
            disk,
            point: [d.center[0] + d.radius * n[0], d.center[1] + d.radius * n[1]],
            dir,
            x_cell: 0,
        }
    }
}

impl BaseSystem for Billiard {
    type Point = CollisionState;

    fn advance(&self, p: &mut CollisionState) -> Result<(), StepError> {
        self.step_with_displacement(p).map(|_| ())
    }

    fn phi(&self, p: &mut CollisionState) -> i64 {
        // The step function is the displacement of the next flight; the
        // lookup does not advance the state.
        match self.next_collision(p) {
            Ok(f) => f.cell_displacement,
            Err(_) => 0,
        }
    }

    fn phi_bound(&self) -> i64 {
        self.cfg.horizon_cap.ceil() as i64 + 1
    }

    fn sample_invariant(&self, rng: &mut ChaCha8Rng) -> CollisionState {
        self.sample_state(rng)
    }
}

/// Specular reflection with unit-vector validation (`|v| = |n| = 1`
/// within 1e-9): returns `v - 2 <v,n> n`, which flips the normal
/// component and preserves the norm.
pub fn reflect(v: [f64; 2], n: [f64; 2]) -> Result<[f64; 2], BilliardError> {
    for u in [v, n] {
        let dev = (u[0] * u[0] + u[1] * u[1]).sqrt() - 1.0;
        if dev.abs() > 1e-9 {
            return Err(BilliardError::NonUnitVector { dev });
        }
    }
    Ok(kernel::reflect(&v, &n))
}

/// An open corridor found by the rational-direction sweep.
#[derive(Debug, Clone, Serialize)]
pub struct Corridor {
    /// Primitive integer direction `(p, q)` of the unblocked line family.
    pub direction: (i64, i64),
    /// Transversal offset of the gap midpoint (cell units).
    pub gap_center: f64,
    /// Transversal width of the gap.
    pub gap_width: f64,
}

/// Report of the finite-horizon validator.
#[derive(Debug, Clone, Serialize)]
pub struct HorizonReport {
    /// Largest flight observed by the Monte Carlo part.
    pub max_flight: f64,
    pub n_collisions: u64,
    /// Flights that exceeded the cap (each one disproves the bound).
    pub horizon_violations: u64,
    /// Orbits discarded after a near-tangential collision.
    pub grazing_discards: u64,
    /// Sweep limit: all primitive directions with |p|, q <= q_max.
    pub q_max: i64,
    pub unblocked: Vec<Corridor>,
    pub passed: bool,
}

/// Checks the finite-horizon property two ways: a deterministic corridor
/// sweep over rational directions up to `q_max`, and a Monte Carlo bound
/// on observed flight lengths. The sweep certifies that every line
/// offset class in each swept direction is blocked by some disk; full
/// analytic certification (all irrational directions) is out of scope.
pub fn validate_finite_horizon(
    billiard: &Billiard,
    n_samples: usize,
    n_steps: usize,
    q_max: i64,
    seed: u64,
) -> HorizonReport {
    let unblocked = corridor_sweep(&billiard.cfg, q_max);

    let shards: u64 = 64.min(n_samples.max(1)) as u64;
    let per_shard = n_samples / shards as usize;
    let stats: Vec<(f64, u64, u64, u64)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = task_rng(seed, crate::rng::experiments::BILLIARD_RUN, shard);
            let mut max_flight: f64 = 0.0;
            let mut collisions = 0u64;
            let mut violations = 0u64;
            let mut grazings = 0u64;
            for _ in 0..per_shard {
                let mut s = billiard.sample_state(&mut rng);
                for _ in 0..n_steps {
                    match billiard.next_collision(&s) {
                        Ok(f) => {
                            max_flight = max_flight.max(f.length);
                            collisions += 1;
                            s = f.next;
                        }
                        Err(StepError::HorizonViolation { .. }) => {
                            violations += 1;
                            break;
                        }
                        Err(_) => {
                            grazings += 1;
                            break;
                        }
                    }
                }
            }
            (max_flight, collisions, violations, grazings)
        })
        .collect();

    let mut report = HorizonReport {
        max_flight: 0.0,
        n_collisions: 0,
        horizon_violations: 0,
        grazing_discards: 0,
        q_max,
        unblocked,
        passed: false,
    };
    for (mf, c, v, g) in stats {
        report.max_flight = report.max_flight.max(mf);
        report.n_collisions += c;
        report.horizon_violations += v;
        report.grazing_discards += g;
    }
    report.passed = report.unblocked.is_empty() && report.horizon_violations == 0;
    report
}

/// For every primitive direction `(p, q)` with `|p|, q <= q_max`, checks
/// that the projections of the disk shadows cover the transversal circle
/// of the line family; an uncovered arc is an open corridor.
fn corridor_sweep(cfg: &BilliardConfig, q_max: i64) -> Vec<Corridor> {
    let mut out = Vec::new();
    for q in 0..=q_max {
        for p in -q_max..=q_max {
            if (p == 0 && q == 0) || gcd(p.unsigned_abs(), q.unsigned_abs()) != 1 {
                continue;
            }
            // Canonical representative of +/- the same direction.
            if q == 0 && p != 1 {
                continue;
            }
            if q > 0 || (q == 0 && p == 1) {
                if let Some(gap) = direction_gap(cfg, p, q) {
                    out.push(gap);
                }
            }
        }
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Coverage check for the family of lines with direction `(p, q)`.
/// Returns the largest gap if one exists.
fn direction_gap(cfg: &BilliardConfig, p: i64, q: i64) -> Option<Corridor> {
    let norm = ((p * p + q * q) as f64).sqrt();
    let period = 1.0 / norm; // transversal spacing of the offset classes
    // Shadow of each disk on the transversal axis, folded to [0, period).
    let mut intervals: Vec<(f64, f64)> = Vec::new(); // (start, width)
    for d in &cfg.disks {
        if 2.0 * d.radius >= period {
            return None; // one disk shadows the whole class circle
        }
        let u = (-(q as f64) * d.center[0] + p as f64 * d.center[1]) / norm;
        let start = (u - d.radius).rem_euclid(period);
        intervals.push((start, 2.0 * d.radius));
    }
    intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Circular coverage walk.
    let first = intervals[0];
    let mut end = first.0 + first.1;
    let mut worst: Option<(f64, f64)> = None; // (gap_start, gap_width)
    for &(s, w) in intervals[1..].iter().chain(std::iter::once(&(first.0 + period, 0.0))) {
        if s > end {
            let width = s - end;
            if worst.map_or(true, |(_, ww)| width > ww) {
                worst = Some((end, width));
            }
        }
        end = end.max(s + w);
    }
    worst.map(|(gs, gw)| Corridor {
        direction: (p, q),
        gap_center: (gs + gw / 2.0).rem_euclid(period),
        gap_width: gw,
    })
}

/// Outcome of a high-precision time-reversal retrace.
#[derive(Debug, Clone, Serialize)]
pub struct RetraceReport {
    pub steps: usize,
    /// Largest Euclidean deviation between forward and retraced
    /// collision points.
    pub max_position_dev: f64,
    pub disks_match: bool,
    /// The retraced displacement sequence is the forward one negated
    /// and reversed.
    pub phi_reversed: bool,
}

/// Runs `n` collisions forward from `start`, reverses the final state,
/// runs `n` collisions back and compares. generic over the scalar so
/// verification can run at 512-bit precision, where the only deviation
/// is the method's own rounding rather than chaotic noise amplification.
pub fn time_reversal_retrace<R: Real>(
    cfg: &BilliardConfig,
    start: &CollisionState,
    n: usize,
) -> Result<RetraceReport, StepError> {
    let geom: Geometry<R> = Geometry::new(cfg);
    let mut s = canonicalize(
        &geom,
        &KernelState {
            disk: start.disk,
            point: [R::from_f64(start.point[0]), R::from_f64(start.point[1])],
            dir: [R::from_f64(start.dir[0]), R::from_f64(start.dir[1])],
            x_cell: start.x_cell,
        },
    );
    let mut states = vec![s.clone()];
    let mut phis = Vec::with_capacity(n);
    for _ in 0..n {
        let (next, flight) = kernel_step(&geom, &s)?;
        phis.push(flight.cell_displacement);
        s = next;
        states.push(s.clone());
    }
    let mut back = reverse_state(&geom, states.last().unwrap());
    let mut max_dev: f64 = 0.0;
    let mut disks_match = true;
    let mut phi_reversed = true;
    for k in 0..n {
        let (next, flight) = kernel_step(&geom, &back)?;
        let expect = &states[n - 1 - k];
        if next.disk != expect.disk {
            disks_match = false;
            break;
        }
        if flight.cell_displacement != -phis[n - 1 - k] {
            phi_reversed = false;
        }
        let dx = next.point[0].clone() - expect.point[0].clone();
        let dy = next.point[1].clone() - expect.point[1].clone();
        let dev = (dx.clone() * dx + dy.clone() * dy).sqrt().to_f64();
        max_dev = max_dev.max(dev);
        back = next;
    }
    Ok(RetraceReport { steps: n, max_position_dev: max_dev, disks_match, phi_reversed })
}

/// Outcome of the mirror-symmetry comparison.
#[derive(Debug, Clone, Serialize)]
pub struct MirrorReport {
    pub steps: usize,
    /// Displacement sequences are exactly opposite.
    pub phi_opposite: bool,
    /// Largest deviation between the mirrored orbit and the orbit of the
    /// mirrored start.
    pub max_position_dev: f64,
}

/// On a point-symmetric configuration, the image of an orbit under
/// `(x, y, v) -> (-x, -y, -v)` is the orbit of the image, with the
/// displacement sequence negated. Checked at the scalar type's
/// precision.
pub fn mirror_symmetry_check<R: Real>(
    cfg: &BilliardConfig,
    start: &CollisionState,
    n: usize,
) -> Result<MirrorReport, StepError> {
    let map = cfg
        .mirror_map()
        .expect("mirror check requires a point-symmetric configuration");
    let geom: Geometry<R> = Geometry::new(cfg);
    let mirror = |s: &KernelState<R>| -> KernelState<R> {
        let (partner, k) = map[s.disk];
        KernelState {
            disk: partner,
            point: [
                R::from_f64(k[0] as f64) - s.point[0].clone(),
                R::from_f64(k[1] as f64) - s.point[1].clone(),
            ],
            dir: [-s.dir[0].clone(), -s.dir[1].clone()],
            x_cell: -s.x_cell,
        }
    };
    let mut a = canonicalize(
        &geom,
        &KernelState {
            disk: start.disk,
            point: [R::from_f64(start.point[0]), R::from_f64(start.point[1])],
            dir: [R::from_f64(start.dir[0]), R::from_f64(start.dir[1])],
            x_cell: start.x_cell,
        },
    );
    let mut b = mirror(&a);
    let mut phi_opposite = true;
    let mut max_dev: f64 = 0.0;
    for _ in 0..n {
        let (na, fa) = kernel_step(&geom, &a)?;
        let (nb, fb) = kernel_step(&geom, &b)?;
        if fb.cell_displacement != -fa.cell_displacement {
            phi_opposite = false;
        }
        let ma = mirror(&na);
        if ma.disk != nb.disk {
            phi_opposite = false;
            break;
        }
        let dx = ma.point[0].clone() - nb.point[0].clone();
        let dy = ma.point[1].clone() - nb.point[1].clone();
        max_dev = max_dev.max((dx.clone() * dx + dy.clone() * dy).sqrt().to_f64());
        a = na;
        b = nb;
    }
    Ok(MirrorReport { steps: n, phi_opposite, max_position_dev: max_dev })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use rand::Rng;

    fn unit(angle: f64) -> [f64; 2] {
        [angle.cos(), angle.sin()]
    }

    #[test]
    fn reflect_head_on_reverses() {
        let out = reflect([-1.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(out, [1.0, 0.0]);
    }

    #[test]
    fn reflect_mirror_on_horizontal_tangent() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let out = reflect([s, -s], [0.0, 1.0]).unwrap();
        assert!((out[0] - s).abs() < 1e-15 && (out[1] - s).abs() < 1e-15);
    }

    #[test]
    fn reflect_rejects_non_unit() {
        assert!(matches!(
            reflect([2.0, 0.0], [1.0, 0.0]),
            Err(BilliardError::NonUnitVector { .. })
        ));
    }

    #[test]
    fn reflection_angle_law_random() {
        let mut rng = task_rng(1, 20, 0);
        for _ in 0..500 {
            let n = unit(rng.random::<f64>() * std::f64::consts::TAU);
            // Incoming: angle from -n within (-pi/2, pi/2).
            let a = (rng.random::<f64>() - 0.5) * std::f64::consts::PI * 0.98;
            let v = [
                -(a.cos() * n[0] - a.sin() * n[1]),
                -(a.cos() * n[1] + a.sin() * n[0]),
            ];
            let out = reflect(v, n).unwrap();
            // <out, n> = -<v, n> and the norm is preserved.
            let din = v[0] * n[0] + v[1] * n[1];
            let dout = out[0] * n[0] + out[1] * n[1];
            assert!((dout + din).abs() < 1e-12);
            let norm = (out[0] * out[0] + out[1] * out[1]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reflect_twice_is_identity() {
        let mut rng = task_rng(1, 20, 1);
        for _ in 0..200 {
            let n = unit(rng.random::<f64>() * std::f64::consts::TAU);
            let v = unit(rng.random::<f64>() * std::f64::consts::TAU);
            let w = kernel::reflect(&kernel::reflect(&v, &n), &n);
            assert!((w[0] - v[0]).abs() < 1e-12 && (w[1] - v[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn radial_shot_hits_at_distance_minus_radius() {
        // Aim at the disk at (0.5, 0.5) dead-center from the disk at
        // (0,0): length = |c2 - start| - r2.
        let b = Billiard::default_two_disk();
        let start_n = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        let s = CollisionState {
            disk: 0,
            point: [0.4 * start_n[0], 0.4 * start_n[1]],
            dir: start_n,
            x_cell: 0,
        };
        let f = b.next_collision(&s).unwrap();
        let expect = (0.5f64 * 0.5 + 0.5 * 0.5).sqrt() - 0.4 - 0.3;
        assert!((f.length - expect).abs() < 1e-12, "length = {}", f.length);
        assert_eq!(f.next.disk, 1);
        assert_eq!(f.cell_displacement, 0);
    }

    #[test]
    fn vertical_shot_wraps_torus_to_same_disk() {
        // Single disk at (0.5,0.5) r=0.3: from its top, flying +y wraps
        // the torus and lands on the bottom of the same disk;
        // flight = 1 - 2r = 0.4.
        let cfg = BilliardConfig::new(
            vec![Disk { center: [0.5, 0.5], radius: 0.3 }],
            3.0,
            false,
        )
        .unwrap();
        let b = Billiard::new(cfg);
        let s = CollisionState {
            disk: 0,
            point: [0.5, 0.8],
            dir: [0.0, 1.0],
            x_cell: 0,
        };
        let f = b.next_collision(&s).unwrap();
        assert!((f.length - 0.4).abs() < 1e-12, "length = {}", f.length);
        assert_eq!(f.next.disk, 0);
        assert_eq!(f.image_offset, (0, 1));
        assert_eq!(f.cell_displacement, 0);
        assert!((f.next.point[0] - 0.5).abs() < 1e-12);
        assert!((f.next.point[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn horizontal_corridor_of_sparse_config_is_reported() {
        let cfg = BilliardConfig::new(
            vec![Disk { center: [0.5, 0.5], radius: 0.2 }],
            4.0,
            false,
        )
        .unwrap();
        let b = Billiard::new(cfg);
        let report = validate_finite_horizon(&b, 200, 50, 20, 7);
        assert!(!report.passed);
        assert!(report
            .unblocked
            .iter()
            .any(|c| c.direction == (1, 0) && c.gap_width > 0.5));
    }

    #[test]
    fn default_config_passes_sweep() {
        let b = Billiard::default_two_disk();
        let report = validate_finite_horizon(&b, 2_000, 50, 20, 8);
        assert!(report.passed, "unblocked: {:?}", report.unblocked);
        assert!(report.max_flight <= 2.5, "max flight {}", report.max_flight);
        assert_eq!(report.horizon_violations, 0);
    }

    #[test]
    fn removing_a_disk_never_shrinks_max_flight() {
        let b2 = Billiard::default_two_disk();
        let cfg1 = BilliardConfig::new(
            vec![Disk { center: [0.0, 0.0], radius: 0.4 }],
            3.0,
            false,
        )
        .unwrap();
        let b1 = Billiard::new(cfg1);
        let r2 = validate_finite_horizon(&b2, 2_000, 20, 10, 9);
        let r1 = validate_finite_horizon(&b1, 2_000, 20, 10, 9);
        // The sparser configuration has open corridors, so its observed
        // flights run into the cap.
        assert!(!r1.passed);
        assert!(r1.max_flight >= r2.max_flight);
    }

    #[test]
    fn overlap_rejected_at_load() {
        let res = BilliardConfig::new(
            vec![
                Disk { center: [0.0, 0.0], radius: 0.4 },
                Disk { center: [0.5, 0.5], radius: 0.35 },
            ],
            3.0,
            false,
        );
        assert!(matches!(res, Err(BilliardError::Overlapping { .. })));
    }

    #[test]
    fn asymmetric_config_rejected_when_symmetry_required() {
        let res = BilliardConfig::new(
            vec![
                Disk { center: [0.0, 0.0], radius: 0.4 },
                Disk { center: [0.25, 0.5], radius: 0.15 },
            ],
            3.0,
            true,
        );
        assert!(matches!(res, Err(BilliardError::NotSymmetric { .. })));
    }

    #[test]
    fn sampler_theta_distribution() {
        let b = Billiard::default_two_disk();
        let mut rng = task_rng(2, 20, 0);
        let n = 100_000;
        let mut thetas: Vec<f64> = (0..n)
            .map(|_| {
                let s = b.sample_state(&mut rng);
                s.outgoing_angle(b.config())
            })
            .collect();
        thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, t) in thetas.iter().enumerate() {
            let f = (1.0 + t.sin()) / 2.0;
            ks = ks.max((f - i as f64 / n as f64).abs());
            ks = ks.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn sampler_allocates_disks_by_circumference() {
        let b = Billiard::default_two_disk();
        let mut rng = task_rng(2, 20, 1);
        let n = 100_000;
        let hits0 = (0..n).filter(|_| b.sample_state(&mut rng).disk == 0).count();
        let p0 = 0.4 / 0.7;
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        let frac = hits0 as f64 / n as f64;
        assert!((frac - p0).abs() < 3.0 * se, "frac = {frac}");
    }

    #[test]
    fn speed_is_conserved_along_orbits() {
        let b = Billiard::default_two_disk();
        let mut rng = task_rng(2, 20, 2);
        let mut s = b.sample_state(&mut rng);
        for _ in 0..2_000 {
            match b.next_collision(&s) {
                Ok(f) => {
                    s = f.next;
                    let norm = (s.dir[0] * s.dir[0] + s.dir[1] * s.dir[1]).sqrt();
                    assert!((norm - 1.0).abs() < 1e-12);
                }
                Err(_) => {
                    s = b.sample_state(&mut rng);
                }
            }
        }
    }

    #[test]
    fn displacement_is_bounded_by_horizon() {
        let b = Billiard::default_two_disk();
        let mut rng = task_rng(2, 20, 3);
        let bound = b.phi_bound();
        for _ in 0..200 {
            let mut s = b.sample_state(&mut rng);
            for _ in 0..50 {
                match b.next_collision(&s) {
                    Ok(f) => {
                        assert!(f.cell_displacement.abs() <= bound);
                        s = f.next;
                    }
                    Err(_) => break,
                }
            }
        }
    }

    #[test]
    fn double_precision_retrace_holds_briefly() {
        // f64 only supports a short retrace before chaos amplifies
        // rounding; 8 steps stay comfortably below 1e-10.
        let b = Billiard::default_two_disk();
        let mut rng = task_rng(2, 20, 4);
        let s = b.sample_state(&mut rng);
        let report = time_reversal_retrace::<f64>(b.config(), &s, 8).unwrap();
        assert!(report.disks_match);
        assert!(report.phi_reversed);
        assert!(report.max_position_dev < 1e-10, "dev = {}", report.max_position_dev);
    }
}
