//! Per-span, per-channel noise generation from converged SPPs: DFA gain
//! and ASE, distributed Raman ASE, and double Rayleigh backscattering,
//! accumulated over the link under the transparent-span assumption.
//!
//! All noise powers are referred to the receiver input in a reference
//! bandwidth equal to the channel symbol rate. The Raman ASE model
//! (spontaneous factor n_sp = 1 + phonon occupancy at 300 K) is a
//! modeling choice of this artifact, documented here and in the README.

use crate::error::{Error, Result};
use crate::link::{db_to_lin, BandPlan, Kind, Lightwave};
use crate::solver::PowerMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const PLANCK_J_S: f64 = 6.62607015e-34;
pub const BOLTZMANN_J_K: f64 = 1.380649e-23;
pub const PHONON_TEMP_K: f64 = 300.0;

/// Per-channel accumulated noise powers [mW] at the receiver.
#[derive(Debug, Clone, Default)]
pub struct NoiseBudget {
    pub p_ase_dfa_mw: Vec<f64>,
    pub p_ase_raman_mw: Vec<f64>,
    pub p_drb_mw: Vec<f64>,
    pub p_nli_mw: Vec<f64>,
}

impl NoiseBudget {
    pub fn zeros(n_channels: usize) -> Self {
        NoiseBudget {
            p_ase_dfa_mw: vec![0.0; n_channels],
            p_ase_raman_mw: vec![0.0; n_channels],
            p_drb_mw: vec![0.0; n_channels],
            p_nli_mw: vec![0.0; n_channels],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.p_ase_dfa_mw.len()
    }
}

/// Noise generated in one span, plus the compensating DFA gains.
#[derive(Debug, Clone)]
pub struct SpanNoise {
    /// Per channel: linear DFA gain restoring the launch power.
    pub g_dfa: Vec<f64>,
    pub p_ase_dfa_mw: Vec<f64>,
    pub p_ase_raman_mw: Vec<f64>,
    pub p_drb_mw: Vec<f64>,
}

/// DFA gain that restores the channel to its nominal launch power after
/// the span's distributed propagation and the lumped loss.
pub fn dfa_gain(end_power_mw: f64, launch_mw: f64, lumped_loss_db: f64) -> Result<f64> {
    if !(end_power_mw.is_finite() && end_power_mw > 0.0) {
        return Err(Error::NonPositivePower(format!(
            "channel end-of-span power {end_power_mw} mW"
        )));
    }
    let lumped_factor = db_to_lin(-lumped_loss_db);
    Ok(launch_mw / (end_power_mw * lumped_factor))
}

/// DFA ASE power [mW]: `NF_lin * h * f * (G - 1) * B_ref`.
///
/// The NF-based formula already covers both polarizations. Gains below
/// unity (attenuator convention) contribute no ASE.
pub fn ase_dfa(g_lin: f64, nf_db: f64, f_thz: f64, b_ref_ghz: f64) -> f64 {
    if g_lin <= 1.0 {
        return 0.0;
    }
    let nf = db_to_lin(nf_db);
    nf * PLANCK_J_S * (f_thz * 1e12) * (g_lin - 1.0) * (b_ref_ghz * 1e9) * 1e3
}

/// Spontaneous emission factor for a pump-channel detuning of `df_thz`:
/// 1 plus the Bose phonon occupancy at 300 K.
pub fn spontaneous_factor(df_thz: f64) -> f64 {
    let x = PLANCK_J_S * (df_thz * 1e12) / (BOLTZMANN_J_K * PHONON_TEMP_K);
    1.0 + 1.0 / (x.exp() - 1.0)
}

/// Distributed Raman ASE [mW] accumulated over the span for one channel.
///
/// The spontaneous source is seeded by every pump above the channel
/// frequency and amplified/attenuated by the channel's own net local
/// gain, which the channel SPP row already encodes: the gain from z to
/// L_span is P_ch(L)/P_ch(z). Integration is trapezoid on the SPP grid.
pub fn ase_raman_with_profile(
    spp: &PowerMatrix,
    lightwaves: &[Lightwave],
    channel_row: usize,
    span: &crate::link::FiberSpan,
    b_ref_ghz: f64,
) -> f64 {
    let ch = &lightwaves[channel_row];
    let cols = spp.n_points();
    let dz = span.dz_km;
    // pumps above the channel frequency seed spontaneous photons
    let pumps: Vec<(usize, f64, f64)> = lightwaves
        .iter()
        .enumerate()
        .filter(|(_, lw)| lw.is_pump() && lw.f > ch.f)
        .map(|(i, lw)| {
            let c_r = crate::link::raman_gain(&span.raman, ch.f, lw.f);
            let n_sp = spontaneous_factor(lw.f - ch.f);
            (i, c_r, n_sp)
        })
        .collect();
    if pumps.is_empty() {
        return 0.0;
    }
    let rho_base = 2.0 * PLANCK_J_S * (ch.f * 1e12) * (b_ref_ghz * 1e9) * 1e3; // mW
    let ch_row = spp.values.row(channel_row);
    let p_end = ch_row[cols - 1];
    let mut total = 0.0;
    let mut prev = 0.0;
    for m in 0..cols {
        let mut source = 0.0;
        for &(p_row, c_r, n_sp) in &pumps {
            let p_pump_w = spp.values[(p_row, m)] * 1e-3;
            source += c_r * p_pump_w * rho_base * n_sp;
        }
        // amplify the locally generated ASE by the channel gain to z = L
        let weighted = source * (p_end / ch_row[m]);
        if m > 0 {
            total += 0.5 * dz * (prev + weighted);
        }
        prev = weighted;
    }
    total
}

/// DRB noise of one span [mW], literal double sum over grid-point pairs.
///
/// `g_1m` (the channel's net distributed gain over the span) and the
/// inner gains come from the channel's own SPP row; `g_dfa` multiplies
/// outside per the transparent-span compensation.
pub fn drb_span(
    channel_row: ndarray::ArrayView1<f64>,
    p_ch_launch_mw: f64,
    g_dfa: f64,
    kappa_lin_per_km: f64,
    dz_km: f64,
) -> f64 {
    let m = channel_row.len() - 1;
    if m < 2 || kappa_lin_per_km == 0.0 {
        return 0.0;
    }
    let g_1m = channel_row[m] / channel_row[0];
    let common = p_ch_launch_mw * g_1m * dz_km * dz_km * kappa_lin_per_km * kappa_lin_per_km;
    let mut sum = 0.0;
    for z1 in 2..=m {
        let p1 = channel_row[z1];
        for z2 in 1..z1 {
            let g = channel_row[z2] / p1;
            sum += g * g;
        }
    }
    g_dfa * common * sum
}

/// Prefix-sum accelerated DRB double sum; must agree with [`drb_span`]
/// to floating-point reassociation.
pub fn drb_span_fast(
    channel_row: ndarray::ArrayView1<f64>,
    p_ch_launch_mw: f64,
    g_dfa: f64,
    kappa_lin_per_km: f64,
    dz_km: f64,
) -> f64 {
    let m = channel_row.len() - 1;
    if m < 2 || kappa_lin_per_km == 0.0 {
        return 0.0;
    }
    let g_1m = channel_row[m] / channel_row[0];
    let common = p_ch_launch_mw * g_1m * dz_km * dz_km * kappa_lin_per_km * kappa_lin_per_km;
    let mut sum = 0.0;
    let mut prefix_sq = 0.0; // sum of P(z2)^2 for z2 = 1..z1-1
    for z1 in 2..=m {
        let p_prev = channel_row[z1 - 1];
        prefix_sq += p_prev * p_prev;
        let p1 = channel_row[z1];
        sum += prefix_sq / (p1 * p1);
    }
    g_dfa * common * sum
}

/// Computes DFA gain, ASE and DRB for every channel of one span.
pub fn span_noise(
    spp: &PowerMatrix,
    lightwaves: &[Lightwave],
    span: &crate::link::FiberSpan,
    plan: &BandPlan,
    fast_drb: bool,
    include_drb: bool,
) -> Result<SpanNoise> {
    let channels: Vec<usize> = lightwaves
        .iter()
        .enumerate()
        .filter(|(_, lw)| lw.kind == Kind::Channel)
        .map(|(i, _)| i)
        .collect();
    let kappa = span.rayleigh_lin();
    let last = spp.n_points() - 1;

    let per_channel = |&row: &usize| -> Result<(f64, f64, f64, f64)> {
        let lw = &lightwaves[row];
        let band = plan
            .band_of(lw.f)
            .ok_or(Error::GuardBand { f: lw.f })?;
        let b_ref = lw.symbol_rate_gbaud.unwrap_or(band.symbol_rate_gbaud);
        let g = dfa_gain(spp.values[(row, last)], lw.p_launch_mw, span.lumped_loss_db)?;
        let ase = ase_dfa(g, band.dfa_nf_db, lw.f, b_ref);
        let raman_ase = ase_raman_with_profile(spp, lightwaves, row, span, b_ref);
        let drb = if include_drb {
            let rowv = spp.values.row(row);
            if fast_drb {
                drb_span_fast(rowv, lw.p_launch_mw, g, kappa, span.dz_km)
            } else {
                drb_span(rowv, lw.p_launch_mw, g, kappa, span.dz_km)
            }
        } else {
            0.0
        };
        Ok((g, ase, raman_ase, drb))
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<(f64, f64, f64, f64)> = channels
        .par_iter()
        .map(per_channel)
        .collect::<Result<Vec<_>>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<(f64, f64, f64, f64)> = channels
        .iter()
        .map(per_channel)
        .collect::<Result<Vec<_>>>()?;

    Ok(SpanNoise {
        g_dfa: rows.iter().map(|r| r.0).collect(),
        p_ase_dfa_mw: rows.iter().map(|r| r.1).collect(),
        p_ase_raman_mw: rows.iter().map(|r| r.2).collect(),
        p_drb_mw: rows.iter().map(|r| r.3).collect(),
    })
}

/// DRB power [mW] per channel for one span, given the per-channel DFA
/// gains in channel order (as produced by [`span_noise`]). Split out so
/// callers can time or skip the DRB stage independently of the ASE one.
pub fn span_drb(
    spp: &PowerMatrix,
    lightwaves: &[Lightwave],
    span: &crate::link::FiberSpan,
    g_dfa: &[f64],
    fast: bool,
) -> Vec<f64> {
    let channels: Vec<usize> = lightwaves
        .iter()
        .enumerate()
        .filter(|(_, lw)| lw.kind == Kind::Channel)
        .map(|(i, _)| i)
        .collect();
    let kappa = span.rayleigh_lin();
    let per_channel = |(c, &row): (usize, &usize)| -> f64 {
        let lw = &lightwaves[row];
        let rowv = spp.values.row(row);
        if fast {
            drb_span_fast(rowv, lw.p_launch_mw, g_dfa[c], kappa, span.dz_km)
        } else {
            drb_span(rowv, lw.p_launch_mw, g_dfa[c], kappa, span.dz_km)
        }
    };
    #[cfg(feature = "parallel")]
    return channels.par_iter().enumerate().map(per_channel).collect();
    #[cfg(not(feature = "parallel"))]
    channels.iter().enumerate().map(per_channel).collect()
}

/// Receiver-referred link noise: the per-span components add under the
/// transparent-span assumption.
pub fn accumulate_link_noise(per_span: &[SpanNoise], n_spans: usize) -> Result<NoiseBudget> {
    if per_span.len() != n_spans {
        return Err(Error::SpanCountMismatch {
            expected: n_spans,
            got: per_span.len(),
        });
    }
    let n_ch = per_span
        .first()
        .map(|s| s.p_ase_dfa_mw.len())
        .ok_or(Error::EmptyResults)?;
    let mut budget = NoiseBudget::zeros(n_ch);
    for s in per_span {
        if s.p_ase_dfa_mw.len() != n_ch {
            return Err(Error::ShapeMismatch("span noise channel counts differ".into()));
        }
        for c in 0..n_ch {
            budget.p_ase_dfa_mw[c] += s.p_ase_dfa_mw[c];
            budget.p_ase_raman_mw[c] += s.p_ase_raman_mw[c];
            budget.p_drb_mw[c] += s.p_drb_mw[c];
        }
    }
    Ok(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{dbm_to_mw, LossTable, RamanGainProfile};
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    #[test]
    fn dfa_gain_definition() {
        let g = dfa_gain(dbm_to_mw(-20.5), dbm_to_mw(1.5), 0.0).unwrap();
        assert_relative_eq!(10.0 * g.log10(), 22.0, epsilon = 1e-10);
        // net-zero distributed span: gain equals the lumped loss
        let g = dfa_gain(1.5, 1.5, 4.0).unwrap();
        assert_relative_eq!(10.0 * g.log10(), 4.0, epsilon = 1e-10);
        assert!(dfa_gain(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn ase_dfa_values() {
        assert_eq!(ase_dfa(1.0, 5.0, 193.4, 100.0), 0.0);
        assert_eq!(ase_dfa(0.5, 5.0, 193.4, 100.0), 0.0);
        let p = ase_dfa(db_to_lin(22.0), 5.0, 193.4, 100.0);
        // frozen from direct formula evaluation: 10^0.5 h f (10^2.2 - 1) 1e11, in mW
        assert_relative_eq!(p, 0.0063821000019279326, max_relative = 1e-12);
        // linear in bandwidth
        let p2 = ase_dfa(db_to_lin(22.0), 5.0, 193.4, 200.0);
        assert_relative_eq!(p2, 2.0 * p, max_relative = 1e-12);
    }

    fn toy_span(dz: f64, m: usize) -> crate::link::FiberSpan {
        crate::link::FiberSpan {
            length_km: dz * m as f64,
            dz_km: dz,
            loss: LossTable::new(vec![(150.0, 0.2), (250.0, 0.2)]).unwrap(),
            raman: RamanGainProfile::new(
                206.5,
                vec![(0.0, 0.0), (5.0, 0.16), (13.2, 0.39), (20.0, 0.1), (30.0, 0.0)],
            )
            .unwrap(),
            lumped_loss_db: 0.0,
            rayleigh_db_km: -40.0,
        }
    }

    #[test]
    fn ase_raman_zero_without_pumps() {
        let span = toy_span(0.1, 100);
        let lws = vec![Lightwave::channel(0, 193.0, 1.0, "C", 100.0, 0.1)];
        let spp = PowerMatrix {
            values: Array2::from_elem((1, 101), 1.0),
        };
        assert_eq!(ase_raman_with_profile(&spp, &lws, 0, &span, 100.0), 0.0);
    }

    #[test]
    fn ase_raman_matches_analytic_constant_pump() {
        // flat pump, lossless channel: P_A(L) = rho * (exp(C*Pp*L) - 1)
        let dz = 0.01;
        let m = 2000;
        let span = toy_span(dz, m);
        let l = dz * m as f64;
        let f_ch = 193.3;
        let f_p = 206.5;
        let lws = vec![
            Lightwave::channel(0, f_ch, 1.0, "C", 100.0, 0.1),
            Lightwave::brp(1, f_p, 200.0),
        ];
        let c_r = crate::link::raman_gain(&span.raman, f_ch, f_p);
        let pp_w = 0.2;
        let g = c_r * pp_w; // 1/km
        let mut values = Array2::zeros((2, m + 1));
        for k in 0..=m {
            let z = k as f64 * dz;
            values[(0, k)] = (g * z).exp(); // channel consistent with the gain
            values[(1, k)] = 200.0;
        }
        let spp = PowerMatrix { values };
        let b_ref = 100.0;
        let got = ase_raman_with_profile(&spp, &lws, 0, &span, b_ref);
        let rho = 2.0 * PLANCK_J_S * (f_ch * 1e12) * (b_ref * 1e9) * 1e3
            * spontaneous_factor(f_p - f_ch);
        let expect = rho * ((g * l).exp() - 1.0);
        assert_relative_eq!(got, expect, max_relative = 1e-3);
    }

    #[test]
    fn drb_kappa_conversion() {
        let span = toy_span(0.1, 10);
        assert_relative_eq!(span.rayleigh_lin(), 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn drb_zero_kappa() {
        let row = array![1.0, 0.9, 0.8, 0.7, 0.6];
        assert_eq!(drb_span(row.view(), 1.0, 1.0, 0.0, 0.1), 0.0);
    }

    #[test]
    fn drb_matches_hand_expanded_m4() {
        // M = 4: pairs (2,1), (3,1), (3,2), (4,1), (4,2), (4,3)
        let row = array![2.0, 1.5, 1.1, 0.9, 0.8];
        let (p_ch, g_dfa, kappa, dz) = (2.0, 3.0, 1e-4, 0.25);
        let g_1m = row[4] / row[0];
        let common = p_ch * g_1m * dz * dz * kappa * kappa;
        let mut expect = 0.0;
        for (z1, z2) in [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)] {
            let g: f64 = row[z2] / row[z1];
            expect += g * g;
        }
        expect *= g_dfa * common;
        let got = drb_span(row.view(), p_ch, g_dfa, kappa, dz);
        assert_relative_eq!(got, expect, max_relative = 1e-14);
    }

    #[test]
    fn drb_fast_matches_brute_force() {
        for m in [3usize, 10, 50] {
            let mut state = 0x9e3779b97f4a7c15u64 ^ m as u64;
            let mut rnd = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            };
            let row: Vec<f64> = (0..=m).map(|_| 0.1 + 2.0 * rnd()).collect();
            let row = ndarray::Array1::from_vec(row);
            let brute = drb_span(row.view(), 1.7, 2.2, 1e-4, 0.1);
            let fast = drb_span_fast(row.view(), 1.7, 2.2, 1e-4, 0.1);
            assert_relative_eq!(brute, fast, max_relative = 1e-12);
        }
    }

    #[test]
    fn drb_scaling_invariants() {
        let row = array![2.0, 1.5, 1.1, 0.9, 0.8, 1.2, 1.4];
        let base = drb_span(row.view(), 1.0, 1.0, 1e-4, 0.1);
        // uniform rescale of the SPP row leaves the gains (ratios) unchanged
        let scaled = &row * 7.3;
        let same = drb_span(scaled.view(), 1.0, 1.0, 1e-4, 0.1);
        assert_relative_eq!(base, same, max_relative = 1e-12);
        // launch power scales linearly
        let twice = drb_span(row.view(), 2.0, 1.0, 1e-4, 0.1);
        assert_relative_eq!(twice, 2.0 * base, max_relative = 1e-12);
    }

    #[test]
    fn accumulate_identical_spans() {
        let one = SpanNoise {
            g_dfa: vec![100.0, 120.0],
            p_ase_dfa_mw: vec![1e-4, 2e-4],
            p_ase_raman_mw: vec![5e-5, 6e-5],
            p_drb_mw: vec![1e-6, 2e-6],
        };
        let budget = accumulate_link_noise(&vec![one.clone(); 10], 10).unwrap();
        assert_relative_eq!(budget.p_ase_dfa_mw[0], 10.0 * 1e-4, max_relative = 1e-12);
        assert_relative_eq!(budget.p_drb_mw[1], 10.0 * 2e-6, max_relative = 1e-12);
        let single = accumulate_link_noise(&[one.clone()], 1).unwrap();
        assert_relative_eq!(single.p_ase_raman_mw[1], 6e-5, max_relative = 1e-15);
        assert!(accumulate_link_noise(&[one], 2).is_err());
    }
}
