//! Parallel Monte Carlo ensembles over independent orbits and paths.
//!
//! Each path is a pure function of `(master seed, experiment id, path
//! index)`; results are collected in path-index order, so ensembles are
//! bit-reproducible regardless of thread count. Sweeps over scales reuse
//! the same path indices, which shares the driving orbits across scales
//! (common random numbers) and stabilizes scale-to-scale comparisons.

use rayon::prelude::*;
use zext_core::field::DrivenField;
use zext_core::greenkubo::VarianceMatrix;
use zext_core::limit::{
    limit_y, local_time_occupation, simulate_bm, time_changed_bm, SqrtAField,
};
use zext_core::rng::task_rng;
use zext_core::slowfast::{
    discrete_vtilde, integrate_perturbed, perturbed_birkhoff_v, solve_averaged, SolveError,
    TrajectoryGrid,
};
use zext_core::zext::{BaseSystem, ZPoint};

/// Scaled error-process statistics for one scale.
pub struct ErrorEnsemble {
    pub eps: f64,
    pub dim: usize,
    /// `eps^(-3/4) e_T` per path, row-major `n x d`.
    pub terminal_scaled: Vec<f64>,
    /// `sup_t eps^(-3/4) |e_t|` per path.
    pub sup_scaled: Vec<f64>,
    /// The averaged path on the segment grid (shared by all paths).
    pub averaged: TrajectoryGrid,
}

/// Integrates the perturbed equation for `n_paths` invariant-sampled
/// drivers and returns the scaled error statistics at scale `eps`.
#[allow(clippy::too_many_arguments)]
pub fn error_ensemble<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x0: &[f64],
    eps: f64,
    t_end: f64,
    substeps: usize,
    n_paths: usize,
    master: u64,
    experiment: u64,
) -> Result<ErrorEnsemble, SolveError> {
    let dim = field.dim();
    let averaged = solve_averaged(x0, |x, out| field.drift(x, out), t_end, eps)?;
    let scale = eps.powf(-0.75);
    let results: Result<Vec<(Vec<f64>, f64)>, SolveError> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = task_rng(master, experiment, path as u64);
            let omega = ZPoint::lift(sys.sample_invariant(&mut rng));
            let mut sup: f64 = 0.0;
            let mut terminal = vec![0.0; dim];
            integrate_perturbed(sys, field, x0, &omega, eps, t_end, substeps, |k, _t, x| {
                let w = averaged.state(k);
                let mut d2 = 0.0;
                for i in 0..dim {
                    let e = x[i] - w[i];
                    d2 += e * e;
                    terminal[i] = e * scale;
                }
                sup = sup.max(d2.sqrt() * scale);
            })?;
            Ok((terminal, sup))
        })
        .collect();
    let results = results?;
    let mut terminal_scaled = Vec::with_capacity(n_paths * dim);
    let mut sup_scaled = Vec::with_capacity(n_paths);
    for (t, s) in results {
        terminal_scaled.extend_from_slice(&t);
        sup_scaled.push(s);
    }
    Ok(ErrorEnsemble { eps, dim, terminal_scaled, sup_scaled, averaged })
}

/// Perturbed-sum statistics for one scale.
pub struct PerturbedSumEnsemble {
    pub eps: f64,
    pub dim: usize,
    /// Terminal discrete sum `vtilde_T` per path, row-major `n x d`.
    pub vtilde_terminal: Vec<f64>,
    /// `sup_t |v_t - vtilde_t|` (Euclidean) per path.
    pub gap_sup: Vec<f64>,
    /// The bound `eps^(1/4) (T C_F + sup|F|)` these gaps must satisfy,
    /// with `C_F` the state Lipschitz constant of `F` times the
    /// Lipschitz bound of the averaged path.
    pub gap_bound: f64,
}

/// Runs the continuous and discrete perturbed Birkhoff sums along shared
/// orbits and records the terminal sums and the sup gap.
#[allow(clippy::too_many_arguments)]
pub fn perturbed_sum_ensemble<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x0: &[f64],
    eps: f64,
    t_end: f64,
    n_paths: usize,
    master: u64,
    experiment: u64,
) -> Result<PerturbedSumEnsemble, SolveError> {
    let dim = field.dim();
    // Half-step grid so Simpson's midpoint nodes are exact grid values.
    let w = solve_averaged(x0, |x, out| field.drift(x, out), t_end, eps / 2.0)?;
    let lw = averaged_speed_bound(field, &w);
    let gap_bound = eps.powf(0.25) * (t_end * field.state_lipschitz() * lw + field.sup_bound());
    let results: Result<Vec<(Vec<f64>, f64)>, SolveError> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = task_rng(master, experiment, path as u64);
            let omega = ZPoint::lift(sys.sample_invariant(&mut rng));
            let v = perturbed_birkhoff_v(sys, field, &omega, eps, t_end, &w)?;
            let vt = discrete_vtilde(sys, field, &omega, eps, t_end, &w)?;
            let gap = v.sup_distance(&vt)?;
            Ok((vt.last_state().to_vec(), gap))
        })
        .collect();
    let results = results?;
    let mut vtilde_terminal = Vec::with_capacity(n_paths * dim);
    let mut gap_sup = Vec::with_capacity(n_paths);
    for (t, g) in results {
        vtilde_terminal.extend_from_slice(&t);
        gap_sup.push(g);
    }
    Ok(PerturbedSumEnsemble { eps, dim, vtilde_terminal, gap_sup, gap_bound })
}

/// Lipschitz bound of the averaged path: `sup_t |Fbar(w_t)|`.
pub fn averaged_speed_bound<S: BaseSystem, F: DrivenField<S>>(
    field: &F,
    w: &TrajectoryGrid,
) -> f64 {
    let dim = w.dim();
    let mut buf = vec![0.0; dim];
    let mut sup: f64 = 0.0;
    for i in 0..w.len() {
        field.drift(w.state(i), &mut buf);
        sup = sup.max(buf.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    sup
}

/// Terminal samples of the limiting error process `y_T`, simulated by
/// Euler-Maruyama with the drift Jacobian frozen along the averaged
/// path.
#[allow(clippy::too_many_arguments)]
pub fn limit_terminal_ensemble(
    a_matrix: &VarianceMatrix,
    jac_nodes: &[f64],
    dim: usize,
    sigma: f64,
    t_end: f64,
    dt: f64,
    delta: f64,
    n_paths: usize,
    master: u64,
    experiment: u64,
) -> Result<Vec<f64>, zext_core::limit::LimitError> {
    let sqrt_a = SqrtAField::constant(a_matrix)?;
    let results: Result<Vec<Vec<f64>>, zext_core::limit::LimitError> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = task_rng(master, experiment, path as u64);
            let pair = limit_y(
                &sqrt_a,
                |k, out| {
                    let base = k.min(jac_nodes.len() / (dim * dim) - 1) * dim * dim;
                    out.copy_from_slice(&jac_nodes[base..base + dim * dim]);
                },
                sigma,
                t_end,
                dt,
                delta,
                dim,
                &mut rng,
            )?;
            Ok(pair.euler.last_state().to_vec())
        })
        .collect();
    Ok(results?.into_iter().flatten().collect())
}

/// Terminal local-time samples `L'_T(0)` under the occupation estimator.
pub fn local_time_terminal_ensemble(
    sigma: f64,
    t_end: f64,
    dt: f64,
    delta: f64,
    n_paths: usize,
    master: u64,
    experiment: u64,
) -> Result<Vec<f64>, zext_core::limit::LimitError> {
    let results: Result<Vec<f64>, zext_core::limit::LimitError> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = task_rng(master, experiment, path as u64);
            let bm = simulate_bm(sigma, t_end, dt, &mut rng)?;
            let lt = local_time_occupation(&bm, delta)?;
            Ok(*lt.values.last().unwrap())
        })
        .collect();
    results
}

/// Terminal samples of the time-changed motion `B_{L'_T}` together with
/// the local time that drove each path.
#[allow(clippy::too_many_arguments)]
pub fn time_changed_terminal_ensemble(
    sigma: f64,
    t_end: f64,
    dt: f64,
    delta: f64,
    clock_scale: f64,
    n_paths: usize,
    master: u64,
    experiment: u64,
) -> Result<(Vec<f64>, Vec<f64>), zext_core::limit::LimitError> {
    let results: Result<Vec<(f64, f64)>, zext_core::limit::LimitError> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = task_rng(master, experiment, path as u64);
            let bm = simulate_bm(sigma, t_end, dt, &mut rng)?;
            let lt = local_time_occupation(&bm, delta)?.scaled(clock_scale);
            let tc = time_changed_bm(&lt, 1, &mut rng)?;
            Ok((tc.state(tc.len() - 1)[0], *lt.values.last().unwrap()))
        })
        .collect();
    let results = results?;
    let mut vals = Vec::with_capacity(results.len());
    let mut clocks = Vec::with_capacity(results.len());
    for (v, c) in results {
        vals.push(v);
        clocks.push(c);
    }
    Ok((vals, clocks))
}

/// Shift-sensitivity statistics: per scale, the median over seeds of
/// `sup_t eps^(-3/4) |x_t(w) - x_t(Tw)|`, with seeds shared across
/// scales.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_medians<S: BaseSystem, F: DrivenField<S>>(
    sys: &S,
    field: &F,
    x0: &[f64],
    eps_list: &[f64],
    t_end: f64,
    substeps: usize,
    n_seeds: usize,
    master: u64,
    experiment: u64,
) -> Result<Vec<(f64, f64)>, SolveError> {
    let mut out = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let vals: Result<Vec<f64>, SolveError> = (0..n_seeds)
            .into_par_iter()
            .map(|path| {
                let mut rng = task_rng(master, experiment, path as u64);
                let omega = ZPoint::lift(sys.sample_invariant(&mut rng));
                zext_core::slowfast::zwei_shift_sensitivity(
                    sys, field, x0, &omega, eps, t_end, substeps,
                )
            })
            .collect();
        let mut vals = vals?;
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push((eps, vals[vals.len() / 2]));
    }
    Ok(out)
}
