//! Launch-spectrum and pump optimization: bounded Nelder–Mead over the
//! per-band spectrum coefficients and the pump frequencies/powers, with
//! seeded restarts and a flatness-weighted throughput objective.

use crate::error::{Error, Result};
use crate::gsnr;
use crate::link::BandPlan;
use crate::scenario::{
    assess_with_lightwaves, lightwaves_for, AssessOptions, PumpSection, Scenario,
    SpectrumSection,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const COEFF_BOUNDS: [(f64, f64); 4] = [(-10.0, 5.0), (-2.0, 2.0), (-1.0, 1.0), (-0.5, 0.5)];
pub const PUMP_POWER_BOUNDS: (f64, f64) = (10.0, 30.0);
/// Pump frequencies live in [f_signal_max + guard, f_signal_max + 15].
pub const PUMP_GUARD_THZ: f64 = 2.0;
pub const PUMP_SPAN_THZ: f64 = 15.0;
/// Minimum spacing between pump frequencies [THz].
pub const PUMP_MIN_SPACING_THZ: f64 = 0.5;

/// Flat parameter layout: `4 * n_bands` spectrum coefficients
/// (a0..a3 per band, band order of the plan), then `(f_thz, p_dbm)`
/// per pump.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub n_bands: usize,
    pub n_pumps: usize,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn coeff(&self, band: usize, k: usize) -> f64 {
        self.values[4 * band + k]
    }

    pub fn pump_f(&self, p: usize) -> f64 {
        self.values[4 * self.n_bands + 2 * p]
    }

    pub fn pump_p_dbm(&self, p: usize) -> f64 {
        self.values[4 * self.n_bands + 2 * p + 1]
    }

    /// Packs the current scenario settings into a vector.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let mut values = Vec::new();
        for (_, coeffs, _) in &scenario.spectrum.bands {
            values.extend_from_slice(&[coeffs.a0, coeffs.a1, coeffs.a2, coeffs.a3]);
        }
        for p in &scenario.pumps {
            values.push(p.f_thz);
            values.push(p.p_dbm);
        }
        ParamVector {
            values,
            n_bands: scenario.spectrum.bands.len(),
            n_pumps: scenario.pumps.len(),
        }
    }

    /// Unpacks into scenario-style spectrum and pump sections.
    pub fn to_sections(&self, plan: &BandPlan) -> (Vec<SpectrumSection>, Vec<PumpSection>) {
        let spectrum = plan
            .bands
            .iter()
            .enumerate()
            .map(|(b, band)| SpectrumSection {
                band: band.name.clone(),
                a0: self.coeff(b, 0),
                a1: self.coeff(b, 1),
                a2: self.coeff(b, 2),
                a3: self.coeff(b, 3),
            })
            .collect();
        let pumps = (0..self.n_pumps)
            .map(|p| PumpSection {
                f_thz: self.pump_f(p),
                p_dbm: self.pump_p_dbm(p),
            })
            .collect();
        (spectrum, pumps)
    }
}

/// Projects a raw vector onto the feasible set: coefficient boxes, pump
/// power box, pump frequencies above the signal band with the minimum
/// mutual spacing. Idempotent.
pub fn project_feasible(params: &mut ParamVector, plan: &BandPlan) {
    for b in 0..params.n_bands {
        for k in 0..4 {
            let (lo, hi) = COEFF_BOUNDS[k];
            let v = &mut params.values[4 * b + k];
            *v = v.clamp(lo, hi);
        }
    }
    if params.n_pumps == 0 {
        return;
    }
    let f_lo = plan.f_signal_max() + PUMP_GUARD_THZ;
    let f_hi = plan.f_signal_max() + PUMP_SPAN_THZ;
    let base = 4 * params.n_bands;
    // sort pump slots by frequency so the spacing pass is well defined
    let mut pumps: Vec<(f64, f64)> = (0..params.n_pumps)
        .map(|p| (params.values[base + 2 * p], params.values[base + 2 * p + 1]))
        .collect();
    pumps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prev = f64::NEG_INFINITY;
    for (f, p) in pumps.iter_mut() {
        *f = f.clamp(f_lo, f_hi).max(prev + PUMP_MIN_SPACING_THZ).min(f_hi);
        prev = *f;
        *p = p.clamp(PUMP_POWER_BOUNDS.0, PUMP_POWER_BOUNDS.1);
    }
    // spacing may be infeasible against the upper edge; walk back down
    for i in (0..pumps.len().saturating_sub(1)).rev() {
        let cap = pumps[i + 1].0 - PUMP_MIN_SPACING_THZ;
        if pumps[i].0 > cap {
            pumps[i].0 = cap.max(f_lo);
        }
    }
    for (p, (f, pw)) in pumps.into_iter().enumerate() {
        params.values[base + 2 * p] = f;
        params.values[base + 2 * p + 1] = pw;
    }
}

/// Objective of one candidate: assemble the lightwaves, assess the link
/// and score. Candidates on which both solvers fail score `-inf` so the
/// search simply moves away from them.
pub fn evaluate_candidate(
    scenario: &Scenario,
    params: &ParamVector,
    options: &AssessOptions,
) -> f64 {
    let (spectrum_sections, pumps) = params.to_sections(&scenario.plan);
    let spectrum = match crate::scenario::build_spectrum(&scenario.plan, &spectrum_sections) {
        Ok(s) => s,
        Err(_) => return f64::NEG_INFINITY,
    };
    let lightwaves = match lightwaves_for(&scenario.plan, &spectrum, &pumps) {
        Ok(l) => l,
        Err(_) => return f64::NEG_INFINITY,
    };
    let assessment = match assess_with_lightwaves(scenario, &lightwaves, options) {
        Ok(a) => a,
        Err(_) => return f64::NEG_INFINITY,
    };
    gsnr::objective(&assessment.results, scenario.optimizer.w).unwrap_or(f64::NEG_INFINITY)
}

/// One objective evaluation in the optimization history.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub eval_idx: usize,
    /// Objective of this candidate.
    pub f_obj: f64,
    /// Best objective seen so far (monotone non-decreasing).
    pub best_so_far: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub best_params: ParamVector,
    pub best_objective: f64,
    pub evaluations: usize,
    pub history: Vec<HistoryEntry>,
}

pub struct OptimizeSettings {
    pub budget: usize,
    pub seed: u64,
    /// Terminate a restart when the best objective improves by less than
    /// this over `plateau_window` evaluations.
    pub plateau_tol: f64,
    pub plateau_window: usize,
    pub restarts: usize,
    pub assess: AssessOptions,
}

impl Default for OptimizeSettings {
    fn default() -> Self {
        OptimizeSettings {
            budget: 2000,
            seed: 42,
            plateau_tol: 1e-4,
            plateau_window: 100,
            restarts: 3,
            // candidate scoring favors speed: fast DRB, and divergent
            // candidates fail fast (-inf) instead of invoking the slow
            // reference fallback
            assess: AssessOptions {
                include_drb: true,
                fast_drb: true,
                fallback: false,
            },
        }
    }
}

struct Tracker<'a, F: FnMut(&ParamVector) -> f64> {
    eval: F,
    budget: usize,
    count: usize,
    best: f64,
    best_params: Option<ParamVector>,
    history: &'a mut Vec<HistoryEntry>,
}

impl<'a, F: FnMut(&ParamVector) -> f64> Tracker<'a, F> {
    fn exhausted(&self) -> bool {
        self.count >= self.budget
    }

    fn evaluate(&mut self, params: &ParamVector) -> f64 {
        let f = (self.eval)(params);
        if f > self.best {
            self.best = f;
            self.best_params = Some(params.clone());
        }
        self.history.push(HistoryEntry {
            eval_idx: self.count,
            f_obj: f,
            best_so_far: self.best,
            params: params.values.clone(),
        });
        self.count += 1;
        f
    }
}

/// Seed candidate: flat -1 dBm spectra, pumps spread uniformly 2–10 THz
/// above the top band at 20–27 dBm (highest pump strongest, mirroring
/// the usual counter-pumped allocation).
pub fn seed_candidate(plan: &BandPlan, n_pumps: usize) -> ParamVector {
    let n_bands = plan.bands.len();
    let mut values = Vec::with_capacity(4 * n_bands + 2 * n_pumps);
    for _ in 0..n_bands {
        values.extend_from_slice(&[-1.0, 0.0, 0.0, 0.0]);
    }
    let f_top = plan.f_signal_max();
    for p in 0..n_pumps {
        let t = if n_pumps > 1 {
            p as f64 / (n_pumps - 1) as f64
        } else {
            0.5
        };
        values.push(f_top + 2.0 + 8.0 * t);
        values.push(20.0 + 7.0 * t);
    }
    let mut out = ParamVector {
        values,
        n_bands,
        n_pumps,
    };
    project_feasible(&mut out, plan);
    out
}

/// Bounded Nelder–Mead maximization with seeded restarts. Every probed
/// vertex is projected feasible before evaluation, so the search never
/// leaves the constraint set. The history records one entry per
/// objective evaluation with the monotone best-so-far.
pub fn optimize(scenario: &Scenario, settings: &OptimizeSettings) -> Result<OptimizeOutcome> {
    // candidates far from the optimum may converge slowly; cap the
    // per-candidate solver effort (the caller re-assesses the winner
    // with the scenario's full settings)
    let mut eval_scenario = scenario.clone();
    eval_scenario.solver_options.max_iterations =
        eval_scenario.solver_options.max_iterations.min(300);
    let scenario = &eval_scenario;
    let plan = scenario.plan.clone();
    let seed0 = seed_candidate(&plan, scenario.pumps.len());
    let from_file = {
        let mut p = ParamVector::from_scenario(scenario);
        project_feasible(&mut p, &plan);
        p
    };
    let dim = seed0.len();
    if dim == 0 {
        return Err(Error::Config("nothing to optimize: no bands or pumps".into()));
    }

    let mut history = Vec::new();
    let mut tracker = Tracker {
        eval: |p: &ParamVector| evaluate_candidate(scenario, p, &settings.assess),
        budget: settings.budget,
        count: 0,
        best: f64::NEG_INFINITY,
        best_params: None,
        history: &mut history,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    for restart in 0..settings.restarts.max(1) {
        if tracker.exhausted() {
            break;
        }
        // restart 0 starts from the scenario itself, restart 1 from the
        // heuristic seed, later restarts jitter the best point found
        let start = match restart {
            0 => from_file.clone(),
            1 => seed0.clone(),
            _ => {
                let mut p = tracker.best_params.clone().unwrap_or_else(|| seed0.clone());
                for v in &mut p.values {
                    *v *= 1.0 + 0.1 * (rng.gen::<f64>() - 0.5);
                    *v += 0.05 * (rng.gen::<f64>() - 0.5);
                }
                project_feasible(&mut p, &plan);
                p
            }
        };
        nelder_mead(&mut tracker, &plan, start, settings)?;
    }

    let best_params = tracker
        .best_params
        .take()
        .ok_or(Error::NoFeasibleCandidate)?;
    if !tracker.best.is_finite() {
        return Err(Error::NoFeasibleCandidate);
    }
    let best_objective = tracker.best;
    let evaluations = tracker.count;
    Ok(OptimizeOutcome {
        best_params,
        best_objective,
        evaluations,
        history,
    })
}

fn nelder_mead<F: FnMut(&ParamVector) -> f64>(
    tracker: &mut Tracker<F>,
    plan: &BandPlan,
    start: ParamVector,
    settings: &OptimizeSettings,
) -> Result<()> {
    let dim = start.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let make = |values: Vec<f64>| -> ParamVector {
        let mut p = ParamVector {
            values,
            n_bands: start.n_bands,
            n_pumps: start.n_pumps,
        };
        project_feasible(&mut p, plan);
        p
    };

    // initial simplex: start plus one perturbed vertex per dimension
    let mut simplex: Vec<(ParamVector, f64)> = Vec::with_capacity(dim + 1);
    let f0 = tracker.evaluate(&start);
    simplex.push((start.clone(), f0));
    for d in 0..dim {
        if tracker.exhausted() {
            return Ok(());
        }
        let mut v = start.values.clone();
        let step = if v[d].abs() > 1e-6 { 0.1 * v[d].abs() } else { 0.1 };
        v[d] += step;
        let p = make(v);
        let f = tracker.evaluate(&p);
        simplex.push((p, f));
    }

    let mut plateau_anchor = tracker.best;
    let mut plateau_at = tracker.count;

    while !tracker.exhausted() {
        // maximization: best first
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let worst = simplex.len() - 1;

        // centroid of all but the worst vertex
        let mut centroid = vec![0.0; dim];
        for (p, _) in &simplex[..worst] {
            for (c, v) in centroid.iter_mut().zip(&p.values) {
                *c += v;
            }
        }
        for c in &mut centroid {
            *c /= worst as f64;
        }

        let blend = |t: f64| -> ParamVector {
            let v = centroid
                .iter()
                .zip(&simplex[worst].0.values)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            make(v)
        };

        let reflected = blend(alpha);
        let f_r = tracker.evaluate(&reflected);
        if f_r > simplex[0].1 {
            if tracker.exhausted() {
                break;
            }
            let expanded = blend(gamma);
            let f_e = tracker.evaluate(&expanded);
            simplex[worst] = if f_e > f_r {
                (expanded, f_e)
            } else {
                (reflected, f_r)
            };
        } else if f_r > simplex[worst - 1].1 {
            simplex[worst] = (reflected, f_r);
        } else {
            if tracker.exhausted() {
                break;
            }
            let contracted = blend(-rho);
            let f_c = tracker.evaluate(&contracted);
            if f_c > simplex[worst].1 {
                simplex[worst] = (contracted, f_c);
            } else {
                // shrink toward the best vertex
                let best_vals = simplex[0].0.values.clone();
                for i in 1..simplex.len() {
                    if tracker.exhausted() {
                        return Ok(());
                    }
                    let v = best_vals
                        .iter()
                        .zip(&simplex[i].0.values)
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    let p = make(v);
                    let f = tracker.evaluate(&p);
                    simplex[i] = (p, f);
                }
            }
        }

        if tracker.best > plateau_anchor + settings.plateau_tol {
            plateau_anchor = tracker.best;
            plateau_at = tracker.count;
        } else if tracker.count - plateau_at >= settings.plateau_window {
            break; // converged to a plateau; hand back for a restart
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Band;

    fn plan() -> BandPlan {
        BandPlan::new(vec![Band {
            name: "C".into(),
            f_low_thz: 190.75,
            f_high_thz: 196.60,
            n_channels: 5,
            spacing_ghz: 118.75,
            dfa_nf_db: 5.0,
            symbol_rate_gbaud: 100.0,
            roll_off: 0.1,
        }])
        .unwrap()
    }

    #[test]
    fn layout_round_trip() {
        let p = ParamVector {
            values: vec![1.0, 0.1, 0.01, 0.001, 205.0, 21.0, 210.0, 24.0],
            n_bands: 1,
            n_pumps: 2,
        };
        assert_eq!(p.coeff(0, 2), 0.01);
        assert_eq!(p.pump_f(1), 210.0);
        assert_eq!(p.pump_p_dbm(0), 21.0);
        let (spec, pumps) = p.to_sections(&plan());
        assert_eq!(spec.len(), 1);
        assert_eq!(spec[0].a3, 0.001);
        assert_eq!(pumps[1].f_thz, 210.0);
    }

    #[test]
    fn projection_clamps_and_spaces() {
        let plan = plan();
        let mut p = ParamVector {
            // a0 out of box; pump below the guard band and a coincident pair
            values: vec![9.0, 3.0, -2.0, 0.0, 150.0, 35.0, 198.7, 5.0],
            n_bands: 1,
            n_pumps: 2,
        };
        project_feasible(&mut p, &plan);
        assert_eq!(p.coeff(0, 0), 5.0);
        assert_eq!(p.coeff(0, 1), 2.0);
        assert_eq!(p.coeff(0, 2), -1.0);
        let f_lo = plan.f_signal_max() + PUMP_GUARD_THZ;
        assert!(p.pump_f(0) >= f_lo);
        assert!(p.pump_f(1) - p.pump_f(0) >= PUMP_MIN_SPACING_THZ - 1e-12);
        assert!(p.pump_p_dbm(0) <= PUMP_POWER_BOUNDS.1);
        assert!(p.pump_p_dbm(1) >= PUMP_POWER_BOUNDS.0);
        // idempotent
        let snapshot = p.clone();
        project_feasible(&mut p, &plan);
        assert_eq!(p, snapshot);
    }

    #[test]
    fn seed_candidate_is_feasible() {
        let plan = plan();
        let p = seed_candidate(&plan, 3);
        let mut q = p.clone();
        project_feasible(&mut q, &plan);
        assert_eq!(p, q);
        assert!(p.pump_f(0) < p.pump_f(1) && p.pump_f(1) < p.pump_f(2));
        assert!(p.pump_p_dbm(2) > p.pump_p_dbm(0));
    }

    /// Nelder–Mead sanity check against a pure quadratic, bypassing the
    /// link model entirely.
    #[test]
    fn nelder_mead_maximizes_quadratic() {
        let plan = plan();
        let target = [2.0, 0.5, -0.3, 0.1];
        let mut history = Vec::new();
        let mut tracker = Tracker {
            eval: |p: &ParamVector| {
                -p.values
                    .iter()
                    .zip(&target)
                    .map(|(v, t)| (v - t).powi(2))
                    .sum::<f64>()
            },
            budget: 1500,
            count: 0,
            best: f64::NEG_INFINITY,
            best_params: None,
            history: &mut history,
        };
        let start = ParamVector {
            values: vec![-5.0, -1.0, 0.9, -0.4],
            n_bands: 1,
            n_pumps: 0,
        };
        let settings = OptimizeSettings::default();
        nelder_mead(&mut tracker, &plan, start, &settings).unwrap();
        assert!(tracker.best > -1e-4, "best = {}", tracker.best);
        let best = tracker.best_params.unwrap();
        for (v, t) in best.values.iter().zip(&target) {
            assert!((v - t).abs() < 0.05, "{v} vs {t}");
        }
        // history best-so-far is monotone
        for w in history.windows(2) {
            assert!(w[1].best_so_far >= w[0].best_so_far);
        }
    }

    #[test]
    fn tracker_budget_respected() {
        let plan = plan();
        let mut history = Vec::new();
        let mut tracker = Tracker {
            eval: |p: &ParamVector| -p.values[0].powi(2),
            budget: 37,
            count: 0,
            best: f64::NEG_INFINITY,
            best_params: None,
            history: &mut history,
        };
        let start = ParamVector {
            values: vec![3.0, 0.0, 0.0, 0.0],
            n_bands: 1,
            n_pumps: 0,
        };
        nelder_mead(&mut tracker, &plan, start, &OptimizeSettings::default()).unwrap();
        assert!(tracker.count <= 37);
        let count = tracker.count;
        drop(tracker);
        assert_eq!(history.len(), count);
    }
}
