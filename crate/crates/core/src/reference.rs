//! Brute-force dual-boundary Raman solver: alternating damped sweeps of
//! fixed-step RK4 integration, forward lightwaves holding the backward
//! profiles and vice versa. Serves as the accuracy oracle for the fast
//! unidirectional solver and as the fallback when that solver diverges.

use crate::error::{Error, Result};
use crate::link::{lin_to_db, FiberSpan, Lightwave};
use crate::solver::{PowerMatrix, SolverReport, SpanSystem};
use ndarray::{Array1, Array2};
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct RelaxationSettings {
    /// Geometric under-relaxation factor in (0, 1].
    pub damping: f64,
    pub max_sweeps: usize,
    /// Stop when the max profile change per sweep drops below this [dB].
    pub tol_db: f64,
    /// Inner ODE step [km]; defaults to dz/4 when unset.
    pub inner_step_km: Option<f64>,
}

impl Default for RelaxationSettings {
    fn default() -> Self {
        RelaxationSettings {
            damping: 0.3,
            max_sweeps: 500,
            tol_db: 1e-5,
            inner_step_km: None,
        }
    }
}

// Powers are clamped to this range [mW] between sweeps so that a
// transient overflow in one sweep cannot poison the relaxation.
const P_CLAMP_LO: f64 = 1e-30;
const P_CLAMP_HI: f64 = 1e9;

/// Solves the two-point boundary problem by damped alternating sweeps.
///
/// Output is sampled on the same z grid as the unidirectional solver.
/// Returns a report with `converged = false` when `max_sweeps` is
/// exhausted; profiles are still the best available iterate.
pub fn solve_bvp_span(
    lightwaves: &[Lightwave],
    span: &FiberSpan,
    settings: &RelaxationSettings,
) -> Result<(PowerMatrix, SolverReport)> {
    let start = Instant::now();
    if !(settings.damping > 0.0 && settings.damping <= 1.0) {
        return Err(Error::Config("relaxation damping must be in (0, 1]".into()));
    }
    let system = SpanSystem::build(lightwaves, span)?;
    let m = span.steps()?;
    let inner = settings.inner_step_km.unwrap_or(span.dz_km / 4.0);
    let sub = (span.dz_km / inner).round().max(1.0) as usize;
    let h = span.dz_km / sub as f64;
    let n_fine = m * sub + 1;
    let n = lightwaves.len();

    let fwd: Vec<usize> = (0..n).filter(|&i| !lightwaves[i].is_backward()).collect();
    let bwd: Vec<usize> = (0..n).filter(|&i| lightwaves[i].is_backward()).collect();

    // loss-only start, nominal boundary powers
    let mut profiles = Array2::zeros((n, n_fine));
    let l = span.length_km;
    for (i, lw) in lightwaves.iter().enumerate() {
        let a = system.alphas[i];
        for k in 0..n_fine {
            let z = k as f64 * h;
            let dist = if lw.is_backward() { l - z } else { z };
            profiles[(i, k)] = lw.p_launch_mw * (-2.0 * a * dist).exp();
        }
    }

    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let mut sweep_residual = 0.0f64;

        let cand = integrate_group(&system, lightwaves, &profiles, &fwd, &bwd, h, n_fine, false);
        sweep_residual = sweep_residual.max(relax_rows(&mut profiles, &cand, &fwd, settings.damping));

        let cand = integrate_group(&system, lightwaves, &profiles, &bwd, &fwd, h, n_fine, true);
        sweep_residual = sweep_residual.max(relax_rows(&mut profiles, &cand, &bwd, settings.damping));

        residual = sweep_residual;
        if residual < settings.tol_db {
            converged = true;
            break;
        }
    }

    // downsample the fine grid to the output grid
    let mut out = Array2::zeros((n, m + 1));
    for i in 0..n {
        for grid in 0..=m {
            out[(i, grid)] = profiles[(i, grid * sub)];
        }
    }
    let matrix = PowerMatrix { values: out };
    let last = m;
    let pump_boundary_error_db = bwd
        .iter()
        .map(|&i| lin_to_db(matrix.values[(i, last)] / lightwaves[i].p_launch_mw).abs())
        .fold(0.0, f64::max);
    let report = SolverReport {
        iterations: sweeps,
        converged,
        max_residual_db: residual,
        pump_boundary_error_db,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((matrix, report))
}

/// RK4-integrates the `active` rows as a coupled IVP across the span,
/// holding the `held` rows at their stored profiles. Backward groups are
/// integrated in the reversed coordinate u = L - z from their z = L
/// launch powers.
fn integrate_group(
    system: &SpanSystem,
    lightwaves: &[Lightwave],
    profiles: &Array2<f64>,
    active: &[usize],
    held: &[usize],
    h: f64,
    n_fine: usize,
    reverse: bool,
) -> Array2<f64> {
    let na = active.len();
    let mut out = Array2::zeros((na, n_fine));
    if na == 0 {
        return out;
    }
    // coupling among the active rows
    let mut c_aa = Array2::zeros((na, na));
    for (r, &i) in active.iter().enumerate() {
        for (c, &j) in active.iter().enumerate() {
            c_aa[(r, c)] = system.coupling[(i, j)];
        }
    }
    // contribution of the held rows at every fine point, in integration order
    let mut held_term = Array2::zeros((na, n_fine));
    for (r, &i) in active.iter().enumerate() {
        for k in 0..n_fine {
            let src = if reverse { n_fine - 1 - k } else { k };
            let mut acc = 0.0;
            for &j in held {
                acc += system.coupling[(i, j)] * profiles[(j, src)];
            }
            held_term[(r, k)] = acc;
        }
    }
    let alphas: Array1<f64> = active.iter().map(|&i| -2.0 * system.alphas[i]).collect();

    let deriv = |state: &Array1<f64>, held_col: &Array1<f64>| -> Array1<f64> {
        let mut g = c_aa.dot(state);
        g += &alphas;
        g += held_col;
        g * state
    };

    let mut state: Array1<f64> = active.iter().map(|&i| lightwaves[i].p_launch_mw).collect();
    for (r, v) in state.iter().enumerate() {
        out[(r, 0)] = *v;
    }
    for k in 0..n_fine - 1 {
        let held_a = held_term.column(k).to_owned();
        let held_b = held_term.column(k + 1).to_owned();
        let held_mid = (&held_a + &held_b) * 0.5;
        let k1 = deriv(&state, &held_a);
        let k2 = deriv(&(&state + &(&k1 * (0.5 * h))), &held_mid);
        let k3 = deriv(&(&state + &(&k2 * (0.5 * h))), &held_mid);
        let k4 = deriv(&(&state + &(&k3 * h)), &held_b);
        state = &state + &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
        for v in state.iter_mut() {
            if !v.is_finite() || *v > P_CLAMP_HI {
                *v = P_CLAMP_HI;
            } else if *v < P_CLAMP_LO {
                *v = P_CLAMP_LO;
            }
        }
        for (r, v) in state.iter().enumerate() {
            out[(r, k + 1)] = *v;
        }
    }
    if reverse {
        // stored in u = L - z order; flip back to z order
        let mut flipped = Array2::zeros((na, n_fine));
        for r in 0..na {
            for k in 0..n_fine {
                flipped[(r, k)] = out[(r, n_fine - 1 - k)];
            }
        }
        return flipped;
    }
    out
}

/// Geometric under-relaxation toward the candidate; returns the max dB
/// move actually applied.
fn relax_rows(profiles: &mut Array2<f64>, cand: &Array2<f64>, rows: &[usize], damping: f64) -> f64 {
    let mut max_change = 0.0f64;
    for (r, &i) in rows.iter().enumerate() {
        for k in 0..profiles.ncols() {
            let old = profiles[(i, k)];
            let new_full = cand[(r, k)].clamp(P_CLAMP_LO, P_CLAMP_HI);
            let relaxed = old * (new_full / old).powf(damping);
            max_change = max_change.max(lin_to_db(relaxed / old).abs());
            profiles[(i, k)] = relaxed;
        }
    }
    max_change
}

/// Max |10 log10(A/B)| over all lightwaves and points sampled every
/// `sample_interval_km`, with argmax coordinates (row, grid column).
pub fn compare_profiles(
    a: &PowerMatrix,
    b: &PowerMatrix,
    dz_km: f64,
    sample_interval_km: f64,
) -> Result<(f64, (usize, usize))> {
    if a.values.dim() != b.values.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.values.dim(),
            b.values.dim()
        )));
    }
    let stride = (sample_interval_km / dz_km).round().max(1.0) as usize;
    let mut best = (0.0f64, (0usize, 0usize));
    for n in 0..a.n_lightwaves() {
        let mut m = 0;
        while m < a.n_points() {
            let d = lin_to_db(a.values[(n, m)] / b.values[(n, m)]).abs();
            if d > best.0 {
                best = (d, (n, m));
            }
            m += stride;
        }
    }
    Ok(best)
}
