//! GSNR assembly, partial SNRs, throughput mapping and the optimization
//! objectives.

use crate::error::{Error, Result};
use crate::link::lin_to_db;
use crate::noise::NoiseBudget;

/// Per-channel assembled result.
#[derive(Debug, Clone)]
pub struct ChannelResult {
    pub channel_id: u32,
    pub f_thz: f64,
    pub gsnr_db: f64,
    pub osnr_db: f64,
    pub osnr_dfa_db: f64,
    pub gsnr_nli_db: f64,
    pub gsnr_drb_db: f64,
    pub throughput_gbps: f64,
    pub nonlinear_regime: bool,
}

/// Monotone (GSNR [dB], net throughput [Gb/s]) curve with clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputCurve {
    samples: Vec<(f64, f64)>,
}

impl ThroughputCurve {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("throughput curve needs at least two samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::Config("throughput curve must be non-decreasing".into()));
        }
        Ok(ThroughputCurve { samples })
    }

    /// Shipped default: piecewise linear from (5 dB, 200 Gb/s) to
    /// (25 dB, 1400 Gb/s) with saturation outside. Loosely representative
    /// of probabilistically shaped ~100 GBaud transceivers; overridable
    /// via file and not calibrated against any specific hardware.
    pub fn default_curve() -> Self {
        ThroughputCurve::new(vec![(5.0, 200.0), (25.0, 1400.0)]).unwrap()
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

/// Monotone interpolation with clamping below/above the sampled range.
pub fn throughput_from_gsnr(curve: &ThroughputCurve, gsnr_db: f64) -> f64 {
    let s = &curve.samples;
    if gsnr_db <= s[0].0 {
        return s[0].1;
    }
    if gsnr_db >= s[s.len() - 1].0 {
        return s[s.len() - 1].1;
    }
    let idx = s.partition_point(|&(x, _)| x <= gsnr_db);
    let (x0, y0) = s[idx - 1];
    let (x1, y1) = s[idx];
    y0 + (y1 - y0) * (gsnr_db - x0) / (x1 - x0)
}

fn ratio_db(p_ch: f64, denom: f64) -> f64 {
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        lin_to_db(p_ch / denom)
    }
}

/// Assembles GSNR and the partial SNRs for one channel from its noise
/// budget components [mW].
pub fn gsnr(
    channel_id: u32,
    f_thz: f64,
    p_ch_mw: f64,
    budget: &NoiseBudget,
    idx: usize,
) -> ChannelResult {
    let p_ase_dfa = budget.p_ase_dfa_mw[idx];
    let p_ase_raman = budget.p_ase_raman_mw[idx];
    let p_drb = budget.p_drb_mw[idx];
    let p_nli = budget.p_nli_mw[idx];
    let p_ase = p_ase_dfa + p_ase_raman;
    let gsnr_db = ratio_db(p_ch_mw, p_ase + p_nli + p_drb);
    let osnr_db = ratio_db(p_ch_mw, p_ase);
    let osnr_dfa_db = ratio_db(p_ch_mw, p_ase_dfa);
    let gsnr_nli_db = ratio_db(p_ch_mw, p_nli);
    let gsnr_drb_db = ratio_db(p_ch_mw, p_drb);
    ChannelResult {
        channel_id,
        f_thz,
        gsnr_db,
        osnr_db,
        osnr_dfa_db,
        gsnr_nli_db,
        gsnr_drb_db,
        throughput_gbps: 0.0,
        nonlinear_regime: gsnr_nli_db - osnr_db < 3.0,
    }
}

/// Flatness-weighted objective [Gb/s]:
/// `mean(T) - w * |max(T) - min(T)|`; w = 0 is plain mean throughput.
pub fn objective(results: &[ChannelResult], w: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let n = results.len() as f64;
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for r in results {
        sum += r.throughput_gbps;
        min = min.min(r.throughput_gbps);
        max = max.max(r.throughput_gbps);
    }
    Ok(sum / n - w * (max - min).abs())
}

/// Pluggable NLI estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum NliEstimator {
    /// No NLI (linear-regime assessment).
    Zero,
    /// Per-channel GSNR_NLI [dB] from a table: P_NLI = P_ch / 10^(g/10).
    GsnrTable(std::collections::BTreeMap<u32, f64>),
    /// Per-channel P_NLI [mW] from a table.
    PowerTable(std::collections::BTreeMap<u32, f64>),
}

impl NliEstimator {
    /// P_NLI [mW] for a channel with receiver-referred power `p_ch_mw`.
    pub fn p_nli_mw(&self, channel_id: u32, p_ch_mw: f64) -> Result<f64> {
        match self {
            NliEstimator::Zero => Ok(0.0),
            NliEstimator::GsnrTable(t) => {
                let g = t.get(&channel_id).ok_or(Error::MissingNliChannel(channel_id))?;
                Ok(p_ch_mw / 10f64.powf(g / 10.0))
            }
            NliEstimator::PowerTable(t) => t
                .get(&channel_id)
                .copied()
                .ok_or(Error::MissingNliChannel(channel_id)),
        }
    }
}
