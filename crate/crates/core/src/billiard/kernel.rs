//! Collision kernel, generic over the scalar type.
//!
//! Positions live in the frame of the fundamental cell `[0,1)^2`; the
//! cylinder is unfolded by searching periodic disk images over integer
//! offsets `(mx, my)` and refolding after the hit, with `mx` accumulated
//! into the Z level and `my` absorbed by the torus. The image search
//! walks Chebyshev rings outward and stops once the ring's distance
//! lower bound exceeds the best hit (or the horizon cap), which turns a
//! would-be infinite search into a detectable error.

use crate::zext::StepError;

use super::scalar::Real;
use super::{BilliardConfig, GRAZING_TOL};

/// Disk geometry promoted to the scalar type.
pub struct Geometry<R: Real> {
    pub disks: Vec<GeomDisk<R>>,
    pub cap: R,
    cap_f64: f64,
    /// Integer offsets grouped by Chebyshev radius.
    rings: Vec<Vec<(i64, i64)>>,
}

pub struct GeomDisk<R: Real> {
    pub center: [R; 2],
    pub radius: R,
    pub radius_sq: R,
}

/// Collision state in kernel form: a boundary point in the canonical
/// frame of its disk, an outgoing unit direction, and the Z level.
#[derive(Debug, Clone)]
pub struct KernelState<R: Real> {
    pub disk: usize,
    pub point: [R; 2],
    pub dir: [R; 2],
    pub x_cell: i64,
}

/// One free flight: its length and the periodic image that was hit.
#[derive(Debug, Clone)]
pub struct KernelFlight<R: Real> {
    pub length: R,
    /// `(mx, my)` of the hit disk copy relative to the current frame;
    /// `my` is absorbed by the torus.
    pub offset: (i64, i64),
    /// Displacement of the global cell index `floor(x)`. This is the
    /// step function of the Z-extension; unlike the raw frame offset it
    /// negates exactly under the point symmetry `(x,y) -> (-x,-y)`.
    pub cell_displacement: i64,
}

/// `floor(x)` for boundary points, which always lie in `(-1, 2)`.
#[inline]
fn floor01<R: Real>(x: &R) -> i64 {
    if *x < R::zero() {
        -1
    } else if *x < R::from_f64(1.0) {
        0
    } else {
        1
    }
}

impl<R: Real> Geometry<R> {
    pub fn new(cfg: &BilliardConfig) -> Self {
        let disks = cfg
            .disks
            .iter()
            .map(|d| {
                let radius = R::from_f64(d.radius);
                GeomDisk {
                    center: [R::from_f64(d.center[0]), R::from_f64(d.center[1])],
                    radius_sq: radius.clone() * radius.clone(),
                    radius,
                }
            })
            .collect();
        let ring_max = cfg.horizon_cap.ceil() as i64 + 3;
        let mut rings = Vec::with_capacity(ring_max as usize + 1);
        for r in 0..=ring_max {
            let mut ring = Vec::new();
            for mx in -r..=r {
                for my in -r..=r {
                    if mx.abs().max(my.abs()) == r {
                        ring.push((mx, my));
                    }
                }
            }
            rings.push(ring);
        }
        Geometry {
            disks,
            cap: R::from_f64(cfg.horizon_cap),
            cap_f64: cfg.horizon_cap,
            rings,
        }
    }
}

#[inline]
fn dot<R: Real>(a: &[R; 2], b: &[R; 2]) -> R {
    a[0].clone() * b[0].clone() + a[1].clone() * b[1].clone()
}

/// Specular reflection `v - 2 <v,n> n`. Callers guarantee unit inputs.
pub fn reflect<R: Real>(v: &[R; 2], n: &[R; 2]) -> [R; 2] {
    let two = R::from_f64(2.0);
    let c = two * dot(v, n);
    [
        v[0].clone() - c.clone() * n[0].clone(),
        v[1].clone() - c * n[1].clone(),
    ]
}

/// Earliest positive ray/disk intersection over periodic images, then
/// specular reflection. Ties break to the smaller flight time, then the
/// lower disk id, then the lexicographically smaller offset.
pub fn kernel_step<R: Real>(
    geom: &Geometry<R>,
    state: &KernelState<R>,
) -> Result<(KernelState<R>, KernelFlight<R>), StepError> {
    let o = &state.point;
    let v = &state.dir;
    let t_min = R::from_f64(1e-12);

    struct Hit<R: Real> {
        t: R,
        disk: usize,
        offset: (i64, i64),
    }
    let mut best: Option<Hit<R>> = None;

    for (r, ring) in geom.rings.iter().enumerate() {
        // Any disk with its center in ring r is at least this far away.
        let ring_floor = r as f64 - 2.0;
        if let Some(hit) = &best {
            if ring_floor > hit.t.to_f64() {
                break;
            }
        } else if ring_floor > geom.cap_f64 {
            return Err(StepError::HorizonViolation { cap: geom.cap_f64 });
        }
        for &(mx, my) in ring {
            for (di, disk) in geom.disks.iter().enumerate() {
                if di == state.disk && mx == 0 && my == 0 {
                    // A ray leaving a convex disk outward never returns
                    // to the same copy.
                    continue;
                }
                let oc = [
                    disk.center[0].clone() + R::from_f64(mx as f64) - o[0].clone(),
                    disk.center[1].clone() + R::from_f64(my as f64) - o[1].clone(),
                ];
                let b = dot(&oc, v);
                if b <= R::zero() {
                    continue;
                }
                let disc = b.clone() * b.clone() - dot(&oc, &oc) + disk.radius_sq.clone();
                if disc <= R::zero() {
                    continue;
                }
                let t = b - disc.sqrt();
                if t <= t_min {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(hit) => {
                        if t < hit.t {
                            true
                        } else if t == hit.t {
                            (di, (mx, my)) < (hit.disk, hit.offset)
                        } else {
                            false
                        }
                    }
                };
                if better {
                    best = Some(Hit { t, disk: di, offset: (mx, my) });
                }
            }
        }
    }

    let hit = best.ok_or(StepError::HorizonViolation { cap: geom.cap_f64 })?;
    if hit.t > geom.cap {
        return Err(StepError::HorizonViolation { cap: geom.cap_f64 });
    }

    let disk = &geom.disks[hit.disk];
    let (mx, my) = hit.offset;
    // Hit point folded back into the disk's canonical frame.
    let raw = [
        o[0].clone() + hit.t.clone() * v[0].clone() - R::from_f64(mx as f64),
        o[1].clone() + hit.t.clone() * v[1].clone() - R::from_f64(my as f64),
    ];
    // Rounding leaves the raw hit slightly off the circle, and the
    // map's hyperbolicity amplifies any such defect exponentially along
    // the orbit. Re-anchoring the state on the constraint manifold
    // (point exactly on the circle, unit direction) keeps the per-step
    // defect at one ulp forever instead.
    let rad = [
        raw[0].clone() - disk.center[0].clone(),
        raw[1].clone() - disk.center[1].clone(),
    ];
    let inv_len = R::from_f64(1.0) / dot(&rad, &rad).sqrt();
    let normal = [rad[0].clone() * inv_len.clone(), rad[1].clone() * inv_len];
    let point = [
        disk.center[0].clone() + disk.radius.clone() * normal[0].clone(),
        disk.center[1].clone() + disk.radius.clone() * normal[1].clone(),
    ];
    let incidence = dot(v, &normal);
    if incidence.abs().to_f64() < GRAZING_TOL {
        return Err(StepError::GrazingCollision { dot: incidence.to_f64() });
    }
    let out = reflect(v, &normal);
    let inv_norm = R::from_f64(1.0) / dot(&out, &out).sqrt();
    let dir = [out[0].clone() * inv_norm.clone(), out[1].clone() * inv_norm];
    // Global x: cell * 1 + frame coordinate; the flight moves its floor
    // by the frame offset plus the boundary-crossing correction.
    let cell_displacement = mx + floor01(&point[0]) - floor01(&o[0]);
    let next = KernelState {
        disk: hit.disk,
        point,
        dir,
        x_cell: state
            .x_cell
            .checked_add(cell_displacement)
            .ok_or(StepError::LevelOverflow)?,
    };
    Ok((next, KernelFlight { length: hit.t, offset: (mx, my), cell_displacement }))
}

/// Re-anchors a state on the constraint manifold: point exactly on its
/// disk, direction exactly unit. States sampled in `f64` carry
/// double-precision constraint defects; promoting them to a wider scalar
/// keeps those defects unless they are projected away once.
pub fn canonicalize<R: Real>(geom: &Geometry<R>, state: &KernelState<R>) -> KernelState<R> {
    let disk = &geom.disks[state.disk];
    let rad = [
        state.point[0].clone() - disk.center[0].clone(),
        state.point[1].clone() - disk.center[1].clone(),
    ];
    let inv_len = R::from_f64(1.0) / dot(&rad, &rad).sqrt();
    let n = [rad[0].clone() * inv_len.clone(), rad[1].clone() * inv_len];
    let inv_norm = R::from_f64(1.0) / dot(&state.dir, &state.dir).sqrt();
    KernelState {
        disk: state.disk,
        point: [
            disk.center[0].clone() + disk.radius.clone() * n[0].clone(),
            disk.center[1].clone() + disk.radius.clone() * n[1].clone(),
        ],
        dir: [
            state.dir[0].clone() * inv_norm.clone(),
            state.dir[1].clone() * inv_norm,
        ],
        x_cell: state.x_cell,
    }
}

/// The time-reversal involution: the state at the same boundary point
/// whose forward orbit retraces the incoming trajectory.
///
/// The pre-collision direction is `reflect(dir, n)`; reversing it gives
/// an outgoing state, and iterating the kernel from it visits the
/// previous collision points in reverse order (exactly, in exact
/// arithmetic).
pub fn reverse_state<R: Real>(geom: &Geometry<R>, state: &KernelState<R>) -> KernelState<R> {
    let disk = &geom.disks[state.disk];
    let inv_r = R::from_f64(1.0) / disk.radius.clone();
    let normal = [
        (state.point[0].clone() - disk.center[0].clone()) * inv_r.clone(),
        (state.point[1].clone() - disk.center[1].clone()) * inv_r,
    ];
    let incoming = reflect(&state.dir, &normal);
    KernelState {
        disk: state.disk,
        point: state.point.clone(),
        dir: [-incoming[0].clone(), -incoming[1].clone()],
        x_cell: state.x_cell,
    }
}
