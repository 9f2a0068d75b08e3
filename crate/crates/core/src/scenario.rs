//! Scenario files (TOML), link assembly and the full assessment
//! pipeline: solve every span (with reference fallback on divergence),
//! generate noise, assemble GSNR and throughput.
//!
//! Units in files: frequencies THz, powers dBm, lengths km.

use crate::error::{Error, Result};
use crate::gsnr::{self, ChannelResult, NliEstimator, ThroughputCurve};
use crate::link::{
    build_channel_grid, dbm_to_mw, Band, BandPlan, BandSpectrum, FiberSpan, Kind, LaunchSpectrum,
    Lightwave,
};
use crate::noise::{self, NoiseBudget, SpanNoise};
use crate::reference::{solve_bvp_span, RelaxationSettings};
use crate::solver::{solve_span, PowerMatrix, SolverOptions, SolverReport};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkSection {
    pub n_spans: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSection {
    pub band: String,
    pub a0: f64,
    #[serde(default)]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    #[serde(default)]
    pub a3: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PumpSection {
    pub f_thz: f64,
    pub p_dbm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanSection {
    pub length_km: f64,
    pub dz_km: f64,
    pub loss_file: String,
    pub raman_file: String,
    #[serde(default)]
    pub lumped_loss_db: f64,
    #[serde(default = "default_rayleigh")]
    pub rayleigh_db_km: f64,
}

fn default_rayleigh() -> f64 {
    -40.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverSection {
    pub tol_db: Option<f64>,
    pub max_iterations: Option<usize>,
    pub l_min: Option<usize>,
    pub schedule_enabled: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReferenceSection {
    pub damping: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub tol_db: Option<f64>,
    pub inner_step_km: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ThroughputSection {
    pub curve_file: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NliSection {
    /// "zero", "gsnr_table" or "power_table".
    pub estimator: Option<String>,
    pub table_file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSection {
    #[serde(default)]
    pub w: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_budget() -> usize {
    2000
}

fn default_seed() -> u64 {
    42
}

impl Default for OptimizerSection {
    fn default() -> Self {
        OptimizerSection {
            w: 0.0,
            budget: default_budget(),
            seed: default_seed(),
        }
    }
}

/// On-disk scenario layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub link: LinkSection,
    pub band: Vec<Band>,
    pub spectrum: Vec<SpectrumSection>,
    #[serde(default)]
    pub pump: Vec<PumpSection>,
    pub span: Vec<SpanSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub throughput: ThroughputSection,
    #[serde(default)]
    pub nli: NliSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
}

/// Fully resolved scenario: all referenced files loaded, units checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub plan: BandPlan,
    pub spectrum: LaunchSpectrum,
    pub pumps: Vec<PumpSection>,
    pub spans: Vec<FiberSpan>,
    pub solver_options: SolverOptions,
    pub reference_settings: RelaxationSettings,
    pub curve: ThroughputCurve,
    pub nli: NliEstimator,
    pub optimizer: OptimizerSection,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ScenarioFile = toml::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Scenario::resolve(file, base)
    }

    pub fn resolve(file: ScenarioFile, base: &Path) -> Result<Scenario> {
        let plan = BandPlan::new(file.band.clone())?;
        let spectrum = build_spectrum(&plan, &file.spectrum)?;

        if file.span.is_empty() {
            return Err(Error::Config("scenario has no span section".into()));
        }
        let mut spans = Vec::new();
        for s in &file.span {
            let loss = crate::io::load_loss_csv(&resolve_path(base, &s.loss_file))?;
            let raman = crate::io::load_raman_csv(&resolve_path(base, &s.raman_file))?;
            let span = FiberSpan {
                length_km: s.length_km,
                dz_km: s.dz_km,
                loss,
                raman,
                lumped_loss_db: s.lumped_loss_db,
                rayleigh_db_km: s.rayleigh_db_km,
            };
            span.validate()?;
            spans.push(span);
        }
        // one span entry describes a uniform link of n_spans spans
        if spans.len() == 1 && file.link.n_spans > 1 {
            let template = spans[0].clone();
            spans = vec![template; file.link.n_spans];
        }
        if spans.len() != file.link.n_spans {
            return Err(Error::Config(format!(
                "scenario lists {} spans but link.n_spans = {}",
                spans.len(),
                file.link.n_spans
            )));
        }

        let mut solver_options = SolverOptions::default();
        if let Some(t) = file.solver.tol_db {
            solver_options.tol_db = t;
        }
        if let Some(m) = file.solver.max_iterations {
            solver_options.max_iterations = m;
        }
        if let Some(l) = file.solver.l_min {
            solver_options.l_min = l;
        }
        if let Some(s) = file.solver.schedule_enabled {
            solver_options.schedule_enabled = s;
        }

        let mut reference_settings = RelaxationSettings::default();
        if let Some(d) = file.reference.damping {
            reference_settings.damping = d;
        }
        if let Some(m) = file.reference.max_sweeps {
            reference_settings.max_sweeps = m;
        }
        if let Some(t) = file.reference.tol_db {
            reference_settings.tol_db = t;
        }
        reference_settings.inner_step_km = file.reference.inner_step_km;

        let curve = match &file.throughput.curve_file {
            Some(p) if !p.is_empty() => crate::io::load_throughput_curve(&resolve_path(base, p))?,
            _ => ThroughputCurve::default_curve(),
        };

        let nli = match file.nli.estimator.as_deref() {
            None | Some("zero") => NliEstimator::Zero,
            Some(kind @ ("gsnr_table" | "power_table")) => {
                let table_path = file.nli.table_file.as_ref().ok_or_else(|| {
                    Error::Config("nli.table_file required for table estimators".into())
                })?;
                let table = crate::io::load_nli_table(&resolve_path(base, table_path))?;
                if kind == "gsnr_table" {
                    NliEstimator::GsnrTable(table)
                } else {
                    NliEstimator::PowerTable(table)
                }
            }
            Some(other) => {
                return Err(Error::Config(format!("unknown NLI estimator {other:?}")));
            }
        };

        Ok(Scenario {
            plan,
            spectrum,
            pumps: file.pump,
            spans,
            solver_options,
            reference_settings,
            curve,
            nli,
            optimizer: file.optimizer,
        })
    }

    /// All lightwaves of the scenario: channel grid plus pumps, pump ids
    /// continuing after the channels.
    pub fn lightwaves(&self) -> Result<Vec<Lightwave>> {
        lightwaves_for(&self.plan, &self.spectrum, &self.pumps)
    }

    pub fn n_spans(&self) -> usize {
        self.spans.len()
    }
}

fn resolve_path(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn build_spectrum(plan: &BandPlan, sections: &[SpectrumSection]) -> Result<LaunchSpectrum> {
    let mut bands = Vec::new();
    for band in &plan.bands {
        let s = sections
            .iter()
            .find(|s| s.band == band.name)
            .ok_or_else(|| Error::Config(format!("no spectrum section for band {}", band.name)))?;
        bands.push((
            band.name.clone(),
            BandSpectrum {
                a0: s.a0,
                a1: s.a1,
                a2: s.a2,
                a3: s.a3,
            },
            band.center(),
        ));
    }
    if sections.len() != plan.bands.len() {
        return Err(Error::Config(
            "spectrum sections do not match the band plan one-to-one".into(),
        ));
    }
    Ok(LaunchSpectrum { bands })
}

pub fn lightwaves_for(
    plan: &BandPlan,
    spectrum: &LaunchSpectrum,
    pumps: &[PumpSection],
) -> Result<Vec<Lightwave>> {
    let mut lws = build_channel_grid(plan, spectrum)?;
    let mut id = lws.len() as u32;
    for p in pumps {
        lws.push(Lightwave::brp(id, p.f_thz, dbm_to_mw(p.p_dbm)));
        id += 1;
    }
    Ok(lws)
}

/// Outcome of solving one span, recording which solver produced it.
#[derive(Debug, Clone)]
pub struct SpanSolve {
    pub spp: PowerMatrix,
    pub report: SolverReport,
    pub used_fallback: bool,
}

/// Solves a span with the unidirectional solver, falling back to the
/// reference relaxation solver when the fast path diverges.
pub fn solve_span_with_fallback(
    lightwaves: &[Lightwave],
    span: &FiberSpan,
    options: &SolverOptions,
    fallback: &RelaxationSettings,
) -> Result<SpanSolve> {
    match solve_span(lightwaves, span, options) {
        Ok((spp, report)) => Ok(SpanSolve {
            spp,
            report,
            used_fallback: false,
        }),
        Err(Error::Diverged { .. }) => {
            let (spp, report) = solve_bvp_span(lightwaves, span, fallback)?;
            Ok(SpanSolve {
                spp,
                report,
                used_fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Wall-time split of a full assessment [ms].
#[derive(Debug, Clone, Default)]
pub struct TimingBreakdown {
    pub spp_ms: f64,
    pub ase_ms: f64,
    pub drb_ms: f64,
    pub nli_ms: f64,
}

impl TimingBreakdown {
    pub fn total_ms(&self) -> f64 {
        self.spp_ms + self.ase_ms + self.drb_ms + self.nli_ms
    }
}

#[derive(Debug, Clone)]
pub struct Assessment {
    pub lightwaves: Vec<Lightwave>,
    /// One SPP per span (identical spans share the same solve).
    pub spps: Vec<PowerMatrix>,
    pub span_reports: Vec<SolverReport>,
    pub budget: NoiseBudget,
    pub results: Vec<ChannelResult>,
    pub timing: TimingBreakdown,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AssessOptions {
    pub include_drb: bool,
    pub fast_drb: bool,
    /// When false, a diverging span solve is an error instead of
    /// falling back to the (much slower) reference solver. The
    /// optimizer turns this off so pathological candidates fail fast.
    pub fallback: bool,
}

impl Default for AssessOptions {
    fn default() -> Self {
        AssessOptions {
            include_drb: true,
            fast_drb: false,
            fallback: true,
        }
    }
}

/// Full link assessment: SPPs, per-span noise, accumulated budget,
/// GSNR and throughput per channel.
pub fn assess(scenario: &Scenario, options: &AssessOptions) -> Result<Assessment> {
    let lightwaves = scenario.lightwaves()?;
    assess_with_lightwaves(scenario, &lightwaves, options)
}

/// Assessment with an externally prepared lightwave set (used by the
/// optimizer, which rebuilds the grid per candidate).
pub fn assess_with_lightwaves(
    scenario: &Scenario,
    lightwaves: &[Lightwave],
    options: &AssessOptions,
) -> Result<Assessment> {
    let mut timing = TimingBreakdown::default();
    let mut fallback_used = false;

    // solve each distinct span once; identical spans share profiles
    let t0 = Instant::now();
    let mut solves: Vec<SpanSolve> = Vec::new();
    let mut span_index: Vec<usize> = Vec::with_capacity(scenario.spans.len());
    let mut distinct: Vec<&FiberSpan> = Vec::new();
    for span in &scenario.spans {
        match distinct.iter().position(|s| *s == span) {
            Some(i) => span_index.push(i),
            None => {
                let solve = if options.fallback {
                    solve_span_with_fallback(
                        lightwaves,
                        span,
                        &scenario.solver_options,
                        &scenario.reference_settings,
                    )?
                } else {
                    let (spp, report) = solve_span(lightwaves, span, &scenario.solver_options)?;
                    SpanSolve {
                        spp,
                        report,
                        used_fallback: false,
                    }
                };
                fallback_used |= solve.used_fallback;
                distinct.push(span);
                solves.push(solve);
                span_index.push(distinct.len() - 1);
            }
        }
    }
    timing.spp_ms = t0.elapsed().as_secs_f64() * 1e3;

    let channels: Vec<Lightwave> = lightwaves
        .iter()
        .filter(|lw| lw.kind == Kind::Channel)
        .cloned()
        .collect();

    // ASE + DFA gains per distinct span
    let t0 = Instant::now();
    let mut distinct_noise: Vec<SpanNoise> = Vec::new();
    for (i, span) in distinct.iter().enumerate() {
        distinct_noise.push(noise::span_noise(
            &solves[i].spp,
            lightwaves,
            span,
            &scenario.plan,
            options.fast_drb,
            false,
        )?);
    }
    timing.ase_ms = t0.elapsed().as_secs_f64() * 1e3;

    // DRB per distinct span, timed separately (it dominates at fine grids)
    let t0 = Instant::now();
    if options.include_drb {
        for (i, span) in distinct.iter().enumerate() {
            let drb = noise::span_drb(
                &solves[i].spp,
                lightwaves,
                span,
                &distinct_noise[i].g_dfa,
                options.fast_drb,
            );
            distinct_noise[i].p_drb_mw = drb;
        }
    }
    timing.drb_ms = t0.elapsed().as_secs_f64() * 1e3;

    let per_span: Vec<SpanNoise> = span_index
        .iter()
        .map(|&i| distinct_noise[i].clone())
        .collect();
    let mut budget = noise::accumulate_link_noise(&per_span, scenario.spans.len())?;

    // NLI through the pluggable estimator
    let t0 = Instant::now();
    for (i, ch) in channels.iter().enumerate() {
        budget.p_nli_mw[i] = scenario.nli.p_nli_mw(ch.id, ch.p_launch_mw)?;
    }
    timing.nli_ms = t0.elapsed().as_secs_f64() * 1e3;

    let mut results = Vec::with_capacity(channels.len());
    for (i, ch) in channels.iter().enumerate() {
        let mut r = gsnr::gsnr(ch.id, ch.f, ch.p_launch_mw, &budget, i);
        r.throughput_gbps = gsnr::throughput_from_gsnr(&scenario.curve, r.gsnr_db);
        results.push(r);
    }

    Ok(Assessment {
        lightwaves: lightwaves.to_vec(),
        spps: span_index.iter().map(|&i| solves[i].spp.clone()).collect(),
        span_reports: span_index.iter().map(|&i| solves[i].report.clone()).collect(),
        budget,
        results,
        timing,
        fallback_used,
    })
}
