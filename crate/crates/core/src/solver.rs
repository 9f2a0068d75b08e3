//! Fast unidirectional iterative SPP solver.
//!
//! All lightwaves, including backward Raman pumps, are propagated
//! fictitiously forward; backward rows flip the sign of both the
//! intrinsic loss and the Raman exponent. Pumps start scaled down so the
//! total pump launch power matches the total signal launch power, and a
//! linearly decreasing dB schedule walks them back up to their nominal
//! launch powers while the profiles settle.

use crate::error::{Error, Result};
use crate::link::{lin_to_db, mw_to_dbm, raman_gain, sigma, FiberSpan, Lightwave};
use ndarray::{Array1, Array2, Axis};
use std::time::Instant;

#[cfg(feature = "parallel")]
use ndarray::parallel::prelude::*;

/// N x (M+1) grid of lightwave powers [mW] along a span; row n holds
/// lightwave n sampled at z = m * dz, m = 0..M.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMatrix {
    pub values: Array2<f64>,
}

impl PowerMatrix {
    pub fn n_lightwaves(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max |10 log10(a/b)| over all entries, with the argmax coordinates.
    pub fn max_db_diff(&self, other: &PowerMatrix) -> Result<(f64, (usize, usize))> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.values.dim(),
                other.values.dim()
            )));
        }
        let mut best = (0.0f64, (0usize, 0usize));
        for ((n, m), (a, b)) in self
            .values
            .indexed_iter()
            .map(|(idx, a)| (idx, (*a, other.values[idx])))
        {
            let d = lin_to_db(a / b).abs();
            if d > best.0 {
                best = (d, (n, m));
            }
        }
        Ok(best)
    }
}

/// Pump scale-down and the per-iteration dB steps restoring nominal
/// launch powers.
#[derive(Debug, Clone)]
pub struct IterationSchedule {
    pub t_s_db: f64,
    pub l_iter: usize,
    /// delta_db[k-1] is the k-th step; non-increasing, last entry 0.
    pub delta_db: Vec<f64>,
    /// pump_ref_dbm[k-1][p] is the z = L_span reference for pump p after
    /// iteration k; the last row equals the nominal launch powers.
    pub pump_ref_dbm: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub iterations: usize,
    pub converged: bool,
    /// Max dB change between the last two iterations.
    pub max_residual_db: f64,
    /// Max |pump power at z = L_span minus nominal| [dB].
    pub pump_boundary_error_db: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Refinement stopping tolerance on inter-iteration profile change [dB].
    pub tol_db: f64,
    /// Total iteration cap (scheduled + refinement).
    pub max_iterations: usize,
    /// Minimum scheduled/refinement iterations even when t_s = 0.
    pub l_min: usize,
    /// When false, pumps start at nominal power with no ramp. Exists to
    /// exercise the divergence path.
    pub schedule_enabled: bool,
    /// Exponent arguments above this are treated as divergence.
    pub exponent_guard: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_db: 1e-4,
            max_iterations: 1000,
            l_min: 10,
            schedule_enabled: true,
            exponent_guard: 700.0,
        }
    }
}

/// Cumulative trapezoid integration operator, as a dense matrix.
///
/// For a 1 x size row vector p, `dz * p.dot(&U)` gives the prefix
/// trapezoid integrals of p, with value 0 at the first grid point:
/// column 0 is zero, column c has 1/2 at rows 0 and c and 1 between.
pub fn trapezoid_matrix(size: usize) -> Result<Array2<f64>> {
    if size < 2 {
        return Err(Error::Config(format!("trapezoid matrix needs size >= 2, got {size}")));
    }
    let mut u = Array2::zeros((size, size));
    for c in 1..size {
        u[(0, c)] = 0.5;
        for r in 1..c {
            u[(r, c)] = 1.0;
        }
        u[(c, c)] = 0.5;
    }
    Ok(u)
}

/// In-place cumulative trapezoid along each row: out[n][m] =
/// dz * sum-trapezoid of row[0..=m]. Equals multiplying by
/// [`trapezoid_matrix`] on the right.
pub fn cumulative_trapezoid_rows(p: &Array2<f64>, dz: f64) -> Array2<f64> {
    let (n, cols) = p.dim();
    let mut out = Array2::zeros((n, cols));
    for i in 0..n {
        let row = p.row(i);
        let mut acc = 0.0;
        for m in 1..cols {
            acc += 0.5 * dz * (row[m - 1] + row[m]);
            out[(i, m)] = acc;
        }
    }
    out
}

/// Precomputed per-span quantities for the iteration.
#[derive(Debug, Clone)]
pub struct SpanSystem {
    /// Field-convention attenuation per lightwave [1/km].
    pub alphas: Vec<f64>,
    /// Signed coupling matrix [1/(mW km)]: entry (n, j) is
    /// +sigma*C_R when f_j > f_n (n gains from j) and -sigma*C_R when
    /// f_j < f_n (n is depleted by j).
    pub coupling: Array2<f64>,
    /// +1 for forward rows, -1 for physically backward rows.
    pub signs: Vec<f64>,
    /// Grid coordinates z = m * dz [km].
    pub z: Vec<f64>,
    pub dz: f64,
    /// Row indices of the backward pumps.
    pub pump_rows: Vec<usize>,
}

impl SpanSystem {
    pub fn build(lightwaves: &[Lightwave], span: &FiberSpan) -> Result<Self> {
        span.validate()?;
        let n = lightwaves.len();
        if n == 0 {
            return Err(Error::Config("no lightwaves".into()));
        }
        for lw in lightwaves {
            lw.validate()?;
        }
        let m = span.steps()?;
        let alphas = lightwaves
            .iter()
            .map(|lw| crate::link::resolve_alpha(&span.loss, lw.f))
            .collect::<Result<Vec<_>>>()?;
        let mut coupling = Array2::zeros((n, n));
        for (i, a) in lightwaves.iter().enumerate() {
            for (j, b) in lightwaves.iter().enumerate() {
                if i == j || a.f == b.f {
                    continue;
                }
                let mag = sigma(a.f, b.f) * raman_gain(&span.raman, a.f, b.f);
                // 1/(W km) -> 1/(mW km); sign by direction of energy flow.
                let signed = if b.f > a.f { mag } else { -mag };
                coupling[(i, j)] = signed * 1e-3;
            }
        }
        let signs = lightwaves
            .iter()
            .map(|lw| if lw.is_backward() { -1.0 } else { 1.0 })
            .collect();
        let z = (0..=m).map(|k| k as f64 * span.dz_km).collect();
        let pump_rows = lightwaves
            .iter()
            .enumerate()
            .filter(|(_, lw)| lw.is_backward())
            .map(|(i, _)| i)
            .collect();
        Ok(SpanSystem {
            alphas,
            coupling,
            signs,
            z,
            dz: span.dz_km,
            pump_rows,
        })
    }

    pub fn n_points(&self) -> usize {
        self.z.len()
    }

    pub fn length_km(&self) -> f64 {
        *self.z.last().unwrap()
    }
}

/// Loss-only initial profiles plus the pump scale-down t_s [dB].
///
/// Forward rows decay from their launch power at z = 0; backward pump
/// rows are the loss-only backward profile (launch power at z = L_span,
/// decaying toward z = 0). If the pump launch total exceeds the signal
/// launch total, pump rows are scaled down by the dB gap.
pub fn init_profiles(
    lightwaves: &[Lightwave],
    system: &SpanSystem,
    schedule_enabled: bool,
) -> (PowerMatrix, f64) {
    let n = lightwaves.len();
    let cols = system.n_points();
    let l = system.length_km();
    let mut values = Array2::zeros((n, cols));
    for (i, lw) in lightwaves.iter().enumerate() {
        let a = system.alphas[i];
        for (m, &z) in system.z.iter().enumerate() {
            let dist = if lw.is_backward() { l - z } else { z };
            values[(i, m)] = lw.p_launch_mw * (-2.0 * a * dist).exp();
        }
    }
    let pump_sum: f64 = lightwaves
        .iter()
        .filter(|lw| lw.is_backward())
        .map(|lw| lw.p_launch_mw)
        .sum();
    let signal_sum: f64 = lightwaves
        .iter()
        .filter(|lw| !lw.is_backward())
        .map(|lw| lw.p_launch_mw)
        .sum();
    let mut t_s = 0.0;
    if schedule_enabled && pump_sum > signal_sum && signal_sum > 0.0 {
        t_s = lin_to_db(pump_sum / signal_sum);
        let scale = 10f64.powf(-t_s / 10.0);
        for &r in &system.pump_rows {
            values.row_mut(r).mapv_inplace(|v| v * scale);
        }
    }
    (PowerMatrix { values }, t_s)
}

/// Linearly decreasing dB step schedule: 10 dB of pump scale-down is
/// recovered in 100 iterations, the steps ramp from 2*t_s/L_iter down to
/// zero, and the pump references end exactly at the nominal launch powers.
pub fn plan_schedule(t_s_db: f64, pump_launch_dbm: &[f64], l_min: usize) -> IterationSchedule {
    debug_assert!(t_s_db >= 0.0);
    let scheduled = ((t_s_db * 10.0) - 1e-9).ceil().max(0.0) as usize;
    let l_iter = scheduled.max(l_min.max(1));
    let mut delta_db = vec![0.0; l_iter];
    if t_s_db > 0.0 {
        let d1 = 2.0 * t_s_db / l_iter as f64;
        for k in 1..=l_iter {
            delta_db[k - 1] = d1 * (1.0 - (k - 1) as f64 / (l_iter - 1) as f64);
        }
    }
    let mut pump_ref_dbm = Vec::with_capacity(l_iter);
    let mut current: Vec<f64> = pump_launch_dbm.iter().map(|p| p - t_s_db).collect();
    for k in 1..=l_iter {
        for p in current.iter_mut() {
            *p += delta_db[k - 1];
        }
        if k == l_iter {
            // the ramp sums to t_s up to rounding; pin the end exactly
            current.copy_from_slice(pump_launch_dbm);
        }
        pump_ref_dbm.push(current.clone());
    }
    IterationSchedule {
        t_s_db,
        l_iter,
        delta_db,
        pump_ref_dbm,
    }
}

fn coupling_integrals(coupling: &Array2<f64>, cum: &Array2<f64>) -> Array2<f64> {
    #[cfg(feature = "parallel")]
    {
        coupling_integrals_par(coupling, cum)
    }
    #[cfg(not(feature = "parallel"))]
    {
        coupling_integrals_seq(coupling, cum)
    }
}

/// Single-threaded dense product `coupling . cum`.
pub fn coupling_integrals_seq(coupling: &Array2<f64>, cum: &Array2<f64>) -> Array2<f64> {
    coupling.dot(cum)
}

/// Same product, column blocks distributed over the rayon pool.
#[cfg(feature = "parallel")]
pub fn coupling_integrals_par(coupling: &Array2<f64>, cum: &Array2<f64>) -> Array2<f64> {
    let cols = cum.ncols();
    let mut out = Array2::zeros((coupling.nrows(), cols));
    let chunk = (cols / rayon::current_num_threads().max(1)).max(32);
    out.axis_chunks_iter_mut(Axis(1), chunk)
        .into_par_iter()
        .zip(cum.axis_chunks_iter(Axis(1), chunk).into_par_iter())
        .for_each(|(mut o, c)| {
            o.assign(&coupling.dot(&c));
        });
    out
}

/// One application of the matrix iteration: each row n becomes
/// `P_n(0) * exp{ s_n * (-2 alpha_n z + dz-trapezoid Raman integral) }`.
pub fn iterate_once(pk: &PowerMatrix, system: &SpanSystem) -> Result<PowerMatrix> {
    iterate_once_guarded(pk, system, f64::INFINITY, 0)
}

fn iterate_once_guarded(
    pk: &PowerMatrix,
    system: &SpanSystem,
    exponent_guard: f64,
    iteration: usize,
) -> Result<PowerMatrix> {
    let cum = cumulative_trapezoid_rows(&pk.values, system.dz);
    let raman = coupling_integrals(&system.coupling, &cum);
    let p_in: Array1<f64> = pk.values.column(0).to_owned();

    let mut next = raman;
    let guard_hit = std::sync::atomic::AtomicBool::new(false);
    let fill_row = |i: usize, row: &mut ndarray::ArrayViewMut1<f64>| {
        let s = system.signs[i];
        let a2 = 2.0 * system.alphas[i];
        let p0 = p_in[i];
        for (m, v) in row.iter_mut().enumerate() {
            let exponent = s * (-a2 * system.z[m] + *v);
            if exponent > exponent_guard || !exponent.is_finite() {
                guard_hit.store(true, std::sync::atomic::Ordering::Relaxed);
                *v = f64::NAN;
            } else {
                *v = p0 * exponent.exp();
            }
        }
    };

    #[cfg(feature = "parallel")]
    next.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(i, mut row)| fill_row(i, &mut row));
    #[cfg(not(feature = "parallel"))]
    next.axis_iter_mut(Axis(0))
        .enumerate()
        .for_each(|(i, mut row)| fill_row(i, &mut row));

    let next = PowerMatrix { values: next };
    if guard_hit.load(std::sync::atomic::Ordering::Relaxed) || !next.is_finite() {
        return Err(Error::Diverged {
            iteration,
            detail: "non-finite power or exponent overflow".into(),
        });
    }
    Ok(next)
}

/// Rescales each pump row so its value at z = L_span equals the given
/// reference [mW]; channel rows are untouched.
pub fn rescale_pumps(p: &mut PowerMatrix, pump_rows: &[usize], p_ref_mw: &[f64]) -> Result<()> {
    let last = p.n_points() - 1;
    for (&row, &target) in pump_rows.iter().zip(p_ref_mw) {
        let end = p.values[(row, last)];
        if !(end.is_finite() && end > 0.0) {
            return Err(Error::Diverged {
                iteration: 0,
                detail: format!("pump row {row} has non-positive end power {end}"),
            });
        }
        let scale = target / end;
        p.values.row_mut(row).mapv_inplace(|v| v * scale);
    }
    Ok(())
}

fn max_residual_db(a: &PowerMatrix, b: &PowerMatrix) -> f64 {
    // max |10 log10(x/y)| equals 10 log10 of the worst ratio in either
    // direction; taking one log at the end keeps the hot loop log-free
    let worst = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| {
            let r = x / y;
            r.max(1.0 / r)
        })
        .fold(1.0, f64::max);
    lin_to_db(worst)
}

/// Runs the full scheduled iteration plus refinement for one span.
///
/// Returns `Err(Diverged)` when the iteration blows up (the caller is
/// expected to fall back to the reference solver); a report with
/// `converged = false` when the iteration cap is hit.
pub fn solve_span(
    lightwaves: &[Lightwave],
    span: &FiberSpan,
    options: &SolverOptions,
) -> Result<(PowerMatrix, SolverReport)> {
    let start = Instant::now();
    let system = SpanSystem::build(lightwaves, span)?;
    let (mut p, t_s) = init_profiles(lightwaves, &system, options.schedule_enabled);
    let pump_launch_dbm: Vec<f64> = system
        .pump_rows
        .iter()
        .map(|&r| mw_to_dbm(lightwaves[r].p_launch_mw))
        .collect();
    let schedule = plan_schedule(t_s, &pump_launch_dbm, options.l_min);
    let nominal_ref_mw: Vec<f64> = system
        .pump_rows
        .iter()
        .map(|&r| lightwaves[r].p_launch_mw)
        .collect();

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    // The plain iteration can oscillate divergently at high pump power
    // once the ramp ends (the linearized map picks up an eigenvalue
    // below -1). Geometric under-relaxation keeps the same fixed point;
    // eta is halved whenever the residual grows on consecutive
    // refinement iterations. Truly pathological inputs still overflow
    // the exponent guard and surface as Err(Diverged).
    let mut eta = 0.4f64;
    let mut growth_streak = 0usize;
    const ETA_MIN: f64 = 1.0 / 16.0;
    while iterations < options.max_iterations {
        iterations += 1;
        let scheduled = iterations <= schedule.l_iter;
        let mut next = iterate_once_guarded(&p, &system, options.exponent_guard, iterations)?;
        if !scheduled && eta < 1.0 {
            ndarray::Zip::from(&mut next.values)
                .and(&p.values)
                .for_each(|n, &old| *n = old * (*n / old).powf(eta));
        }
        let refs_mw: Vec<f64> = if scheduled {
            schedule.pump_ref_dbm[iterations - 1]
                .iter()
                .map(|d| crate::link::dbm_to_mw(*d))
                .collect()
        } else {
            nominal_ref_mw.clone()
        };
        rescale_pumps(&mut next, &system.pump_rows, &refs_mw)?;
        let prev_residual = residual;
        // the residual only gates the refinement phase; skip the full
        // scan while the pump ramp is still forcing changes anyway
        if !scheduled {
            residual = max_residual_db(&next, &p);
        }
        p = next;
        if !scheduled {
            if residual < options.tol_db {
                converged = true;
                break;
            }
            if residual > prev_residual {
                growth_streak += 1;
                if growth_streak >= 2 && eta > ETA_MIN {
                    eta *= 0.5;
                    growth_streak = 0;
                }
            } else {
                growth_streak = 0;
            }
        }
    }

    let last = p.n_points() - 1;
    let pump_boundary_error_db = system
        .pump_rows
        .iter()
        .map(|&r| lin_to_db(p.values[(r, last)] / lightwaves[r].p_launch_mw).abs())
        .fold(0.0, f64::max);

    let report = SolverReport {
        iterations,
        converged,
        max_residual_db: residual,
        pump_boundary_error_db,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((p, report))
}

/// t_s and schedule preview for a scenario, without running the solve.
pub fn preview_schedule(
    lightwaves: &[Lightwave],
    span: &FiberSpan,
    options: &SolverOptions,
) -> Result<(f64, IterationSchedule)> {
    let system = SpanSystem::build(lightwaves, span)?;
    let (_, t_s) = init_profiles(lightwaves, &system, options.schedule_enabled);
    let pump_launch_dbm: Vec<f64> = system
        .pump_rows
        .iter()
        .map(|&r| mw_to_dbm(lightwaves[r].p_launch_mw))
        .collect();
    Ok((t_s, plan_schedule(t_s, &pump_launch_dbm, options.l_min)))
}
