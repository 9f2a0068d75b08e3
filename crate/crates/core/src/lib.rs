//! Raman-aware spatial power profile (SPP) solver and link assessment
//! for multiband WDM systems with backward Raman pumping.
//!
//! The crate provides:
//! - a fast unidirectional matrix-iteration SPP solver ([`solver`]),
//! - a brute-force dual-boundary relaxation solver used as the accuracy
//!   reference and as a fallback when the fast path diverges
//!   ([`reference`]),
//! - noise generation (DFA ASE, distributed Raman ASE, double Rayleigh
//!   backscattering) and GSNR/throughput assembly ([`noise`], [`gsnr`]),
//! - launch-spectrum and pump optimization ([`optimizer`]),
//! - TOML scenario files and CSV I/O ([`scenario`], [`io`]).
//!
//! Internal conventions: frequencies in THz, powers in mW (dBm at the
//! file boundary), lengths in km. The `parallel` feature (on by
//! default) enables rayon data-parallel kernels; without it the same
//! algorithms run sequentially.

pub mod error;
pub mod gsnr;
pub mod io;
pub mod link;
pub mod noise;
pub mod optimizer;
pub mod reference;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use gsnr::{objective, ChannelResult, NliEstimator, ThroughputCurve};
pub use link::{
    dbm_to_mw, db_to_lin, lin_to_db, mw_to_dbm, Band, BandPlan, BandSpectrum, Direction,
    FiberSpan, Kind, LaunchSpectrum, Lightwave, LossTable, RamanGainProfile,
};
pub use noise::{NoiseBudget, SpanNoise};
pub use optimizer::{optimize, OptimizeOutcome, OptimizeSettings, ParamVector};
pub use reference::{compare_profiles, solve_bvp_span, RelaxationSettings};
pub use scenario::{assess, AssessOptions, Assessment, Scenario};
pub use solver::{solve_span, PowerMatrix, SolverOptions, SolverReport};
