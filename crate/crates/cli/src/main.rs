//! Command-line front end: scenario ingestion, orchestration of the
//! solve/assess/optimize/benchmark workflows and CSV artifact emission.

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use raman_spp::link::Kind;
use raman_spp::reference::{compare_profiles, solve_bvp_span};
use raman_spp::scenario::{
    assess, lightwaves_for, solve_span_with_fallback, AssessOptions, Scenario,
};
use raman_spp::solver::{preview_schedule, solve_span, SolverReport};
use raman_spp::{gsnr, io, optimizer, NliEstimator};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    /// Solve the spatial power profiles of each distinct span and emit
    /// them as CSV (mW and dBm variants).
    SolveSpp,
    /// Full link assessment: SPPs, noise budget, GSNR and throughput.
    Assess,
    /// Optimize the launch-spectrum coefficients and pump settings.
    Optimize,
    /// Time the fast solver against the reference solver and the
    /// assessment with and without DRB.
    Benchmark,
    /// Solve with both solvers and report the maximum dB disagreement.
    CompareOracle,
}

#[derive(Debug, Parser)]
#[command(name = "raman-spp", version, about = "Raman-aware SPP solver and multiband link assessment")]
struct Args {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Workflow to run.
    #[arg(long, value_enum)]
    command: Command,
    /// Overrides the scenario's optimizer seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Benchmark repetitions (median reported).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Skip double-Rayleigh-backscattering noise.
    #[arg(long)]
    no_drb: bool,
    /// NLI estimator override: "zero" or "table:<path>".
    #[arg(long)]
    nli: Option<String>,
}

fn main() -> ExitCode {
    let args = Args::parse(); // clap exits with code 2 on usage errors
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(args: &Args) -> anyhow::Result<()> {
    let mut scenario = Scenario::load(&args.scenario)
        .with_context(|| format!("loading scenario {}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        scenario.optimizer.seed = seed;
    }
    if let Some(nli) = &args.nli {
        scenario.nli = parse_nli_override(nli)?;
    }
    let options = AssessOptions {
        include_drb: !args.no_drb,
        fast_drb: true,
        fallback: true,
    };
    for sub in ["spp", "noise", "results", "history"] {
        fs::create_dir_all(args.out.join(sub))
            .with_context(|| format!("creating output directory {}", args.out.display()))?;
    }

    let report = match args.command {
        Command::SolveSpp => cmd_solve_spp(&scenario, &args.out)?,
        Command::Assess => cmd_assess(&scenario, &options, &args.out)?,
        Command::Optimize => cmd_optimize(&scenario, &options, &args.out)?,
        Command::Benchmark => cmd_benchmark(&scenario, &options, args.reps, &args.out)?,
        Command::CompareOracle => cmd_compare_oracle(&scenario, &args.out)?,
    };

    print!("{report}");
    fs::write(args.out.join("report.txt"), &report)
        .with_context(|| format!("writing {}", args.out.join("report.txt").display()))?;
    Ok(())
}

fn parse_nli_override(spec: &str) -> anyhow::Result<NliEstimator> {
    if spec == "zero" {
        return Ok(NliEstimator::Zero);
    }
    if let Some(path) = spec.strip_prefix("table:") {
        let table = io::load_nli_table(Path::new(path))?;
        return Ok(NliEstimator::GsnrTable(table));
    }
    bail!("--nli must be \"zero\" or \"table:<path>\", got {spec:?}");
}

fn report_block(out: &mut String, title: &str, report: &SolverReport) {
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "  iterations           = {}", report.iterations);
    let _ = writeln!(out, "  converged            = {}", report.converged);
    let _ = writeln!(out, "  max_residual_db      = {:.3e}", report.max_residual_db);
    let _ = writeln!(out, "  pump_boundary_err_db = {:.3e}", report.pump_boundary_error_db);
    let _ = writeln!(out, "  wall_ms              = {:.1}", report.wall_ms);
}

fn cmd_solve_spp(scenario: &Scenario, out: &PathBuf) -> anyhow::Result<String> {
    let lightwaves = scenario.lightwaves()?;
    let mut report = String::new();
    let mut solved: Vec<(usize, &raman_spp::FiberSpan)> = Vec::new();
    for (idx, span) in scenario.spans.iter().enumerate() {
        if solved.iter().any(|(_, s)| *s == span) {
            continue;
        }
        solved.push((idx, span));
        let solve = solve_span_with_fallback(
            &lightwaves,
            span,
            &scenario.solver_options,
            &scenario.reference_settings,
        )?;
        let (t_s, schedule) =
            preview_schedule(&lightwaves, span, &scenario.solver_options)?;
        io::write_spp_csv(
            &out.join(format!("spp/span{idx:02}_mw.csv")),
            &solve.spp,
            &lightwaves,
            span.dz_km,
            false,
        )?;
        io::write_spp_csv(
            &out.join(format!("spp/span{idx:02}_dbm.csv")),
            &solve.spp,
            &lightwaves,
            span.dz_km,
            true,
        )?;
        let title = format!(
            "span {idx} solver report{}",
            if solve.used_fallback { " (reference fallback)" } else { "" }
        );
        report_block(&mut report, &title, &solve.report);
        let _ = writeln!(
            report,
            "  t_s_db               = {:.4}\n  scheduled_iterations = {}",
            t_s, schedule.l_iter
        );
    }
    let _ = writeln!(
        report,
        "{} lightwaves, {} spans ({} distinct); SPP CSVs in {}/spp/",
        lightwaves.len(),
        scenario.n_spans(),
        solved.len(),
        out.display()
    );
    Ok(report)
}

fn summarize_results(out: &mut String, results: &[gsnr::ChannelResult]) {
    let n = results.len() as f64;
    let mean_gsnr = results.iter().map(|r| r.gsnr_db).sum::<f64>() / n;
    let min_gsnr = results.iter().map(|r| r.gsnr_db).fold(f64::INFINITY, f64::min);
    let max_gsnr = results.iter().map(|r| r.gsnr_db).fold(f64::NEG_INFINITY, f64::max);
    let total_tput = results.iter().map(|r| r.throughput_gbps).sum::<f64>();
    let min_t = results.iter().map(|r| r.throughput_gbps).fold(f64::INFINITY, f64::min);
    let max_t = results.iter().map(|r| r.throughput_gbps).fold(f64::NEG_INFINITY, f64::max);
    let nonlinear = results.iter().filter(|r| r.nonlinear_regime).count();
    let _ = writeln!(out, "[assessment]");
    let _ = writeln!(out, "  channels             = {}", results.len());
    let _ = writeln!(out, "  mean_gsnr_db         = {mean_gsnr:.3}");
    let _ = writeln!(out, "  gsnr_spread_db       = {:.3} ({min_gsnr:.3} .. {max_gsnr:.3})", max_gsnr - min_gsnr);
    let _ = writeln!(out, "  total_throughput_tbps = {:.3}", total_tput / 1e3);
    let _ = writeln!(out, "  tput_spread_gbps     = {:.1} ({min_t:.1} .. {max_t:.1})", max_t - min_t);
    let _ = writeln!(out, "  nonlinear_channels   = {nonlinear}");
}

fn cmd_assess(
    scenario: &Scenario,
    options: &AssessOptions,
    out: &PathBuf,
) -> anyhow::Result<String> {
    let a = assess(scenario, options)?;
    let channels: Vec<_> = a
        .lightwaves
        .iter()
        .filter(|lw| lw.kind == Kind::Channel)
        .cloned()
        .collect();
    io::write_spp_csv(&out.join("spp/span00_mw.csv"), &a.spps[0], &a.lightwaves, scenario.spans[0].dz_km, false)?;
    io::write_spp_csv(&out.join("spp/span00_dbm.csv"), &a.spps[0], &a.lightwaves, scenario.spans[0].dz_km, true)?;
    io::write_noise_csv(&out.join("noise/noise.csv"), &channels, &a.budget)?;
    io::write_results_csv(&out.join("results/results.csv"), &a.results)?;

    let mut report = String::new();
    summarize_results(&mut report, &a.results);
    if a.fallback_used {
        let _ = writeln!(report, "  note: reference fallback was used for at least one span");
    }
    report_block(&mut report, "span 0 solver report", &a.span_reports[0]);
    let total = a.timing.total_ms().max(1e-12);
    let _ = writeln!(report, "[timing]");
    for (name, ms) in [
        ("spp", a.timing.spp_ms),
        ("ase", a.timing.ase_ms),
        ("drb", a.timing.drb_ms),
        ("nli", a.timing.nli_ms),
    ] {
        let _ = writeln!(report, "  {name:<4} = {ms:>9.1} ms ({:.1}%)", 100.0 * ms / total);
    }
    let _ = writeln!(report, "  total = {total:.1} ms");
    Ok(report)
}

fn cmd_optimize(
    scenario: &Scenario,
    options: &AssessOptions,
    out: &PathBuf,
) -> anyhow::Result<String> {
    let settings = optimizer::OptimizeSettings {
        budget: scenario.optimizer.budget,
        seed: scenario.optimizer.seed,
        // candidate scoring fails fast on divergence; the optimum is
        // re-assessed below with the full fallback path
        assess: AssessOptions {
            fallback: false,
            fast_drb: true,
            ..*options
        },
        ..Default::default()
    };
    let outcome = optimizer::optimize(scenario, &settings)?;

    // history CSV: objective, monotone best-so-far, then the raw params
    let mut names = vec!["best_so_far".to_string()];
    for (b, band) in scenario.plan.bands.iter().enumerate() {
        for k in 0..4 {
            let _ = b;
            names.push(format!("{}_a{k}", band.name));
        }
    }
    for p in 0..outcome.best_params.n_pumps {
        names.push(format!("pump{p}_f_thz"));
        names.push(format!("pump{p}_p_dbm"));
    }
    let rows: Vec<(usize, f64, Vec<f64>)> = outcome
        .history
        .iter()
        .map(|h| {
            let mut params = vec![h.best_so_far];
            params.extend_from_slice(&h.params);
            (h.eval_idx, h.f_obj, params)
        })
        .collect();
    io::write_history_csv(&out.join("history/history.csv"), &rows, &names)?;

    // best parameters as a scenario-syntax fragment, re-usable directly
    let (spectrum, pumps) = outcome.best_params.to_sections(&scenario.plan);
    let mut fragment = String::new();
    for s in &spectrum {
        let _ = writeln!(
            fragment,
            "[[spectrum]]\nband = \"{}\"\na0 = {:.12}\na1 = {:.12}\na2 = {:.12}\na3 = {:.12}\n",
            s.band, s.a0, s.a1, s.a2, s.a3
        );
    }
    for p in &pumps {
        let _ = writeln!(fragment, "[[pump]]\nf_thz = {:.12}\np_dbm = {:.12}\n", p.f_thz, p.p_dbm);
    }
    fs::write(out.join("results/best_params.toml"), &fragment)
        .with_context(|| "writing best_params.toml")?;

    // re-assess the optimum for the artifact set
    let mut best_scenario = scenario.clone();
    let spectrum_obj = raman_spp::scenario::build_spectrum(&scenario.plan, &spectrum)?;
    best_scenario.spectrum = spectrum_obj;
    best_scenario.pumps = pumps;
    let a = assess(&best_scenario, options)?;
    let channels: Vec<_> = a
        .lightwaves
        .iter()
        .filter(|lw| lw.kind == Kind::Channel)
        .cloned()
        .collect();
    io::write_noise_csv(&out.join("noise/noise.csv"), &channels, &a.budget)?;
    io::write_results_csv(&out.join("results/results.csv"), &a.results)?;

    let mut report = String::new();
    let _ = writeln!(report, "[optimize]");
    let _ = writeln!(report, "  w                    = {}", scenario.optimizer.w);
    let _ = writeln!(report, "  seed                 = {}", scenario.optimizer.seed);
    let _ = writeln!(report, "  evaluations          = {}", outcome.evaluations);
    let _ = writeln!(report, "  best_objective_gbps  = {:.3}", outcome.best_objective);
    summarize_results(&mut report, &a.results);
    Ok(report)
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

fn cmd_benchmark(
    scenario: &Scenario,
    options: &AssessOptions,
    reps: usize,
    _out: &PathBuf,
) -> anyhow::Result<String> {
    let reps = reps.max(1);
    let lightwaves = scenario.lightwaves()?;
    let span = &scenario.spans[0];
    let mut report = String::new();
    let _ = writeln!(report, "[benchmark] reps = {reps} (medians reported; timings are machine-specific)");

    let mut fast_ms = Vec::new();
    let mut fast_failed = false;
    for _ in 0..reps {
        let t = Instant::now();
        if solve_span(&lightwaves, span, &scenario.solver_options).is_err() {
            fast_failed = true;
            break;
        }
        fast_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let mut ref_ms = Vec::new();
    let mut ref_failed = false;
    for _ in 0..reps {
        let t = Instant::now();
        match solve_bvp_span(&lightwaves, span, &scenario.reference_settings) {
            Ok((_, rep)) if rep.converged => ref_ms.push(t.elapsed().as_secs_f64() * 1e3),
            _ => {
                ref_failed = true;
                break;
            }
        }
    }
    match (fast_failed, ref_failed) {
        (false, false) => {
            let f = median(&mut fast_ms);
            let r = median(&mut ref_ms);
            let _ = writeln!(report, "  spp_unidir_ms        = {f:.1}");
            let _ = writeln!(report, "  spp_reference_ms     = {r:.1}");
            let _ = writeln!(report, "  speedup              = {:.1}x", r / f);
        }
        _ => {
            let _ = writeln!(report, "  partial report: fast solver failed = {fast_failed}, reference failed = {ref_failed}");
        }
    }

    let mut with_drb = Vec::new();
    let mut without_drb = Vec::new();
    for _ in 0..reps {
        let t = Instant::now();
        assess(scenario, &AssessOptions { include_drb: true, ..*options })?;
        with_drb.push(t.elapsed().as_secs_f64() * 1e3);
        let t = Instant::now();
        assess(scenario, &AssessOptions { include_drb: false, ..*options })?;
        without_drb.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let _ = writeln!(report, "  assess_with_drb_ms   = {:.1}", median(&mut with_drb));
    let _ = writeln!(report, "  assess_no_drb_ms     = {:.1}", median(&mut without_drb));
    Ok(report)
}

fn cmd_compare_oracle(scenario: &Scenario, out: &PathBuf) -> anyhow::Result<String> {
    let lightwaves = lightwaves_for(&scenario.plan, &scenario.spectrum, &scenario.pumps)?;
    let span = &scenario.spans[0];
    let (fast, fast_rep) = solve_span(&lightwaves, span, &scenario.solver_options)?;
    let (oracle, oracle_rep) = solve_bvp_span(&lightwaves, span, &scenario.reference_settings)?;
    io::write_spp_csv(&out.join("spp/unidir_mw.csv"), &fast, &lightwaves, span.dz_km, false)?;
    io::write_spp_csv(&out.join("spp/reference_mw.csv"), &oracle, &lightwaves, span.dz_km, false)?;

    let (max_db, (row, col)) = compare_profiles(&fast, &oracle, span.dz_km, span.dz_km)?;
    let mut report = String::new();
    report_block(&mut report, "unidirectional", &fast_rep);
    report_block(&mut report, "reference", &oracle_rep);
    let _ = writeln!(report, "[compare-oracle]");
    let _ = writeln!(
        report,
        "  max_delta_db         = {:.6} (lightwave {}, z = {:.2} km)",
        max_db,
        lightwaves[row].id,
        col as f64 * span.dz_km
    );
    // per-lightwave table, worst first
    let mut per_lw: Vec<(u32, f64)> = (0..lightwaves.len())
        .map(|n| {
            let mut worst = 0.0f64;
            for m in 0..fast.n_points() {
                let d = raman_spp::lin_to_db(fast.values[(n, m)] / oracle.values[(n, m)]).abs();
                worst = worst.max(d);
            }
            (lightwaves[n].id, worst)
        })
        .collect();
    per_lw.sort_by(|a, b| b.1.total_cmp(&a.1));
    let _ = writeln!(report, "  worst lightwaves (id, max |delta| dB):");
    for (id, d) in per_lw.iter().take(10) {
        let _ = writeln!(report, "    {id:>4}  {d:.6}");
    }
    Ok(report)
}
