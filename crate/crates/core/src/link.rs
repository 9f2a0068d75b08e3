//! Domain types and frequency-dependent physics lookups: fiber loss,
//! Raman gain, launch spectrum and channel-grid construction.
//!
//! Conventions: frequencies in THz, powers in mW (dBm in files), lengths
//! in km. Attenuation is stored in the field convention, i.e. a lone
//! lightwave decays as `P(z) = P(0) * exp(-2 * alpha * z)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const LN10: f64 = std::f64::consts::LN_10;

/// dBm -> mW.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// mW -> dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// dB -> linear power ratio.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio -> dB.
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// WDM transmission channel.
    Channel,
    /// Backward Raman pump.
    Brp,
    /// Forward Raman pump (treated by the solver like a channel).
    Frp,
}

/// One channel or Raman pump.
#[derive(Debug, Clone, PartialEq)]
pub struct Lightwave {
    pub id: u32,
    /// Center frequency [THz].
    pub f: f64,
    pub direction: Direction,
    pub kind: Kind,
    /// Nominal launch power [mW]. For BRPs this is the power injected at
    /// the span end (z = L_span); for everything else at z = 0.
    pub p_launch_mw: f64,
    pub band: String,
    /// Symbol rate [GBaud]; channels only.
    pub symbol_rate_gbaud: Option<f64>,
    pub roll_off: Option<f64>,
}

impl Lightwave {
    pub fn channel(id: u32, f: f64, p_launch_mw: f64, band: &str, symbol_rate: f64, roll_off: f64) -> Self {
        Lightwave {
            id,
            f,
            direction: Direction::Forward,
            kind: Kind::Channel,
            p_launch_mw,
            band: band.to_string(),
            symbol_rate_gbaud: Some(symbol_rate),
            roll_off: Some(roll_off),
        }
    }

    pub fn brp(id: u32, f: f64, p_launch_mw: f64) -> Self {
        Lightwave {
            id,
            f,
            direction: Direction::Backward,
            kind: Kind::Brp,
            p_launch_mw,
            band: "pump".to_string(),
            symbol_rate_gbaud: None,
            roll_off: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f <= 0.0 || self.p_launch_mw <= 0.0 {
            return Err(Error::Config(format!(
                "lightwave {}: frequency and launch power must be positive",
                self.id
            )));
        }
        match (self.kind, self.direction) {
            (Kind::Brp, Direction::Backward) => Ok(()),
            (Kind::Brp, Direction::Forward) => Err(Error::Config(format!(
                "lightwave {}: BRPs must be backward-propagating",
                self.id
            ))),
            (_, Direction::Backward) => Err(Error::Config(format!(
                "lightwave {}: channels and FRPs must be forward-propagating",
                self.id
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_pump(&self) -> bool {
        matches!(self.kind, Kind::Brp | Kind::Frp)
    }

    pub fn is_backward(&self) -> bool {
        self.direction == Direction::Backward
    }
}

/// Monotone table of (f [THz], loss [dB/km]) samples. Lookup is linear
/// interpolation; extrapolation is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    /// (frequency [THz], loss [dB/km]) sorted ascending in frequency.
    samples: Vec<(f64, f64)>,
}

impl LossTable {
    pub fn new(mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Config("loss table needs at least two samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        // zero is allowed: lossless spans are useful in conservation tests
        if samples.iter().any(|&(_, l)| l < 0.0) {
            return Err(Error::Config("loss table entries must be non-negative".into()));
        }
        if samples.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("loss table has duplicate frequencies".into()));
        }
        Ok(LossTable { samples })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.samples[0].0, self.samples[self.samples.len() - 1].0)
    }

    /// Loss in dB/km at frequency `f`, linearly interpolated.
    pub fn loss_db_km(&self, f: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if f < lo || f > hi {
            return Err(Error::FrequencyOutOfRange { f, lo, hi });
        }
        Ok(interp_linear(&self.samples, f))
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

fn interp_linear(samples: &[(f64, f64)], x: f64) -> f64 {
    let idx = samples.partition_point(|&(sx, _)| sx <= x);
    if idx == 0 {
        return samples[0].1;
    }
    if idx == samples.len() {
        return samples[samples.len() - 1].1;
    }
    let (x0, y0) = samples[idx - 1];
    let (x1, y1) = samples[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Raman gain coefficient profile measured with a reference pump.
///
/// Only the positive-offset (gain) branch is stored; sign and the
/// photon-energy factor for the depletion branch are applied by the
/// solver through the sigma factor.
#[derive(Debug, Clone, PartialEq)]
pub struct RamanGainProfile {
    /// Pump frequency the profile was measured at [THz].
    pub f_ref: f64,
    /// (df = f_pump - f_probe [THz], gain coefficient [1/(W km)]), df >= 0.
    samples: Vec<(f64, f64)>,
}

impl RamanGainProfile {
    pub fn new(f_ref: f64, mut samples: Vec<(f64, f64)>) -> Result<Self> {
        if f_ref <= 0.0 {
            return Err(Error::Config("raman profile reference frequency must be positive".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples.iter().any(|&(df, g)| df < 0.0 || g < 0.0) {
            return Err(Error::Config(
                "raman profile offsets and gains must be non-negative".into(),
            ));
        }
        // Anchor the zero-offset gain at exactly zero.
        if samples.first().map(|&(df, _)| df != 0.0).unwrap_or(true) {
            samples.insert(0, (0.0, 0.0));
        } else {
            samples[0].1 = 0.0;
        }
        Ok(RamanGainProfile { f_ref, samples })
    }

    /// Unscaled profile value at offset `df` >= 0; zero beyond the
    /// sampled range.
    pub fn value(&self, df: f64) -> f64 {
        let max = self.samples[self.samples.len() - 1].0;
        if df < 0.0 || df > max {
            return 0.0;
        }
        interp_linear(&self.samples, df)
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }
}

/// Field-convention attenuation [1/km] at frequency `f`, so that a lone
/// lightwave decays as `exp(-2 * alpha * z)`.
pub fn resolve_alpha(loss: &LossTable, f: f64) -> Result<f64> {
    Ok(loss.loss_db_km(f)? * LN10 / 20.0)
}

/// Raman gain/loss coefficient magnitude C_R(f_probe, f_pump) [1/(W km)].
///
/// The stored profile is shifted and scaled linearly with the pumping
/// frequency (the higher of the two) relative to the reference pump.
/// Direction of energy flow is handled by [`sigma`], not here.
pub fn raman_gain(profile: &RamanGainProfile, f_probe: f64, f_pump: f64) -> f64 {
    if f_pump > f_probe {
        (f_pump / profile.f_ref) * profile.value(f_pump - f_probe)
    } else if f_pump < f_probe {
        (f_probe / profile.f_ref) * profile.value(f_probe - f_pump)
    } else {
        0.0
    }
}

/// Photon-energy factor: f_n/f_j when f_n > f_j, 1 when f_n < f_j,
/// 0 when f_n = f_j.
pub fn sigma(f_n: f64, f_j: f64) -> f64 {
    if f_n > f_j {
        f_n / f_j
    } else if f_n < f_j {
        1.0
    } else {
        0.0
    }
}

/// Cubic launch-spectrum coefficients for one band, dB domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpectrum {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl BandSpectrum {
    pub fn flat(a0: f64) -> Self {
        BandSpectrum { a0, a1: 0.0, a2: 0.0, a3: 0.0 }
    }

    /// Launch power [dBm] at `f` given the band center `f_c`.
    pub fn eval_dbm(&self, f: f64, f_c: f64) -> f64 {
        let d = f - f_c;
        self.a0 + self.a1 * d + self.a2 * d * d + self.a3 * d * d * d
    }
}

/// Per-band launch spectrum; evaluation is defined only inside the
/// owning band's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct LaunchSpectrum {
    /// (band label, coefficients, band center frequency [THz]).
    pub bands: Vec<(String, BandSpectrum, f64)>,
}

impl LaunchSpectrum {
    pub fn coefficients_for(&self, band: &str) -> Option<(&BandSpectrum, f64)> {
        self.bands
            .iter()
            .find(|(name, _, _)| name == band)
            .map(|(_, c, fc)| (c, *fc))
    }
}

/// One WDM band of the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub f_low_thz: f64,
    pub f_high_thz: f64,
    pub n_channels: usize,
    pub spacing_ghz: f64,
    pub dfa_nf_db: f64,
    pub symbol_rate_gbaud: f64,
    pub roll_off: f64,
}

impl Band {
    pub fn center(&self) -> f64 {
        0.5 * (self.f_low_thz + self.f_high_thz)
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.f_low_thz && f <= self.f_high_thz
    }
}

/// Ordered, non-overlapping set of bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub bands: Vec<Band>,
}

impl BandPlan {
    pub fn new(bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Config("band plan is empty".into()));
        }
        for b in &bands {
            if b.f_low_thz >= b.f_high_thz {
                return Err(Error::Config(format!("band {}: low edge >= high edge", b.name)));
            }
            if b.n_channels == 0 || b.spacing_ghz <= 0.0 {
                return Err(Error::Config(format!(
                    "band {}: channel count and spacing must be positive",
                    b.name
                )));
            }
        }
        for w in bands.windows(2) {
            if w[1].f_low_thz <= w[0].f_high_thz {
                return Err(Error::Config(format!(
                    "bands {} and {} overlap or are out of order",
                    w[0].name, w[1].name
                )));
            }
        }
        Ok(BandPlan { bands })
    }

    pub fn band_of(&self, f: f64) -> Option<&Band> {
        self.bands.iter().find(|b| b.contains(f))
    }

    pub fn f_signal_max(&self) -> f64 {
        self.bands.last().map(|b| b.f_high_thz).unwrap_or(0.0)
    }
}

/// Launch power [dBm] at `f`, using the coefficients and center of the
/// band `f` falls in. An `f` in a guard band is an error.
pub fn evaluate_spectrum_dbm(plan: &BandPlan, spec: &LaunchSpectrum, f: f64) -> Result<f64> {
    let band = plan.band_of(f).ok_or(Error::GuardBand { f })?;
    let (coeffs, f_c) = spec
        .coefficients_for(&band.name)
        .ok_or_else(|| Error::Config(format!("no spectrum coefficients for band {}", band.name)))?;
    Ok(coeffs.eval_dbm(f, f_c))
}

/// Builds the channel grid: per band, `n_channels` channels centered
/// symmetrically within the band edges at the stated spacing, launch
/// powers from the spectrum.
pub fn build_channel_grid(plan: &BandPlan, spec: &LaunchSpectrum) -> Result<Vec<Lightwave>> {
    let mut out = Vec::new();
    let mut id = 0u32;
    for band in &plan.bands {
        let spacing_thz = band.spacing_ghz * 1e-3;
        let occupied = (band.n_channels - 1) as f64 * spacing_thz;
        if occupied > band.f_high_thz - band.f_low_thz {
            return Err(Error::Config(format!(
                "band {}: {} channels at {} GHz exceed the band edges",
                band.name, band.n_channels, band.spacing_ghz
            )));
        }
        let center = band.center();
        let f_first = center - 0.5 * occupied;
        for k in 0..band.n_channels {
            let f = f_first + k as f64 * spacing_thz;
            let p_dbm = evaluate_spectrum_dbm(plan, spec, f)?;
            out.push(Lightwave::channel(
                id,
                f,
                dbm_to_mw(p_dbm),
                &band.name,
                band.symbol_rate_gbaud,
                band.roll_off,
            ));
            id += 1;
        }
    }
    Ok(out)
}

/// Per-span physical description.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpan {
    pub length_km: f64,
    pub dz_km: f64,
    pub loss: LossTable,
    pub raman: RamanGainProfile,
    /// MUX/DEMUX + connector loss [dB], applied outside the distributed solve.
    pub lumped_loss_db: f64,
    /// Rayleigh back-scattering coefficient [dB/km] (negative, e.g. -40).
    pub rayleigh_db_km: f64,
}

impl FiberSpan {
    /// Number of spatial steps M; the grid has M + 1 points.
    pub fn steps(&self) -> Result<usize> {
        let m = self.length_km / self.dz_km;
        let rounded = m.round();
        if (m - rounded).abs() > 1e-9 * m.max(1.0) || rounded < 1.0 {
            return Err(Error::Config(format!(
                "step {} km does not divide span length {} km",
                self.dz_km, self.length_km
            )));
        }
        Ok(rounded as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_km <= 0.0 || self.dz_km <= 0.0 {
            return Err(Error::Config("span length and step must be positive".into()));
        }
        self.steps()?;
        Ok(())
    }

    /// Rayleigh coefficient in linear 1/km units.
    pub fn rayleigh_lin(&self) -> f64 {
        db_to_lin(self.rayleigh_db_km)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(entries: &[(f64, f64)]) -> LossTable {
        LossTable::new(entries.to_vec()).unwrap()
    }

    #[test]
    fn alpha_unit_conversion() {
        let loss = table(&[(180.0, 0.2), (220.0, 0.2)]);
        let a = resolve_alpha(&loss, 193.0).unwrap();
        assert_relative_eq!(a, 0.023025850929940462, max_relative = 1e-12);
        // 0.2 dB/km over 100 km is -20 dB in the -2*alpha*z convention.
        let db = 10.0 * (-2.0 * a * 100.0).exp().log10();
        assert_relative_eq!(db, -20.0, epsilon = 1e-10);
    }

    #[test]
    fn alpha_interpolates_between_nodes() {
        let loss = table(&[(190.0, 0.2), (200.0, 0.3)]);
        let a = resolve_alpha(&loss, 195.0).unwrap();
        assert_relative_eq!(a, 0.25 * LN10 / 20.0, max_relative = 1e-12);
        // exact at the nodes
        assert_relative_eq!(resolve_alpha(&loss, 190.0).unwrap(), 0.2 * LN10 / 20.0);
        assert_relative_eq!(resolve_alpha(&loss, 200.0).unwrap(), 0.3 * LN10 / 20.0);
    }

    #[test]
    fn alpha_distributed_span_budget() {
        // 22 dB total over 100 km minus 4 dB lumped -> 0.18 dB/km.
        let loss = table(&[(180.0, 0.18), (220.0, 0.18)]);
        let a = resolve_alpha(&loss, 193.0).unwrap();
        let span_db = -10.0 * (-2.0 * a * 100.0).exp().log10();
        assert_relative_eq!(span_db + 4.0, 22.0, epsilon = 1e-9);
    }

    #[test]
    fn alpha_rejects_out_of_range() {
        let loss = table(&[(190.0, 0.2), (200.0, 0.3)]);
        assert!(matches!(
            resolve_alpha(&loss, 205.0),
            Err(Error::FrequencyOutOfRange { .. })
        ));
        assert!(resolve_alpha(&loss, 189.9).is_err());
    }

    #[test]
    fn sigma_cases() {
        assert_eq!(sigma(200.0, 200.0), 0.0);
        assert_eq!(sigma(190.0, 200.0), 1.0);
        assert_relative_eq!(sigma(200.0, 190.0), 200.0 / 190.0, max_relative = 1e-15);
    }

    #[test]
    fn sigma_product_identity() {
        // For a > b one side is 1, so the product is a/b.
        let (a, b) = (207.3, 191.1);
        assert_relative_eq!(sigma(a, b) * sigma(b, a), a / b, max_relative = 1e-15);
    }

    fn profile() -> RamanGainProfile {
        RamanGainProfile::new(
            206.5,
            vec![(0.0, 0.0), (5.0, 0.16), (13.2, 0.39), (20.0, 0.1), (30.0, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn raman_gain_zero_at_equal_frequencies() {
        let p = profile();
        assert_eq!(raman_gain(&p, 193.3, 193.3), 0.0);
        assert_eq!(p.value(0.0), 0.0);
    }

    #[test]
    fn raman_gain_reference_pump_unscaled() {
        let p = profile();
        assert_relative_eq!(raman_gain(&p, 193.3, 206.5), p.value(13.2), max_relative = 1e-12);
        assert_relative_eq!(p.value(13.2), 0.39, max_relative = 1e-12);
    }

    #[test]
    fn raman_gain_scales_with_pump_frequency() {
        let p = profile();
        // Same offset, pump moved to 220.6 THz: scale by 220.6/206.5.
        let probe = 220.6 - 13.2;
        let expect = (220.6 / 206.5) * p.value(13.2);
        assert_relative_eq!(raman_gain(&p, probe, 220.6), expect, max_relative = 1e-12);
        // Depletion branch looks up the same positive offset, scaled by
        // the higher (probe) frequency.
        let expect_loss = (220.6 / 206.5) * p.value(13.2);
        assert_relative_eq!(raman_gain(&p, 220.6, probe), expect_loss, max_relative = 1e-12);
    }

    #[test]
    fn raman_gain_zero_beyond_range() {
        let p = profile();
        assert_eq!(raman_gain(&p, 160.0, 206.5), 0.0);
    }

    fn cls_plan() -> BandPlan {
        BandPlan::new(vec![
            Band {
                name: "L".into(),
                f_low_thz: 184.50,
                f_high_thz: 190.35,
                n_channels: 50,
                spacing_ghz: 118.75,
                dfa_nf_db: 6.0,
                symbol_rate_gbaud: 100.0,
                roll_off: 0.1,
            },
            Band {
                name: "C".into(),
                f_low_thz: 190.75,
                f_high_thz: 196.60,
                n_channels: 50,
                spacing_ghz: 118.75,
                dfa_nf_db: 5.0,
                symbol_rate_gbaud: 100.0,
                roll_off: 0.1,
            },
            Band {
                name: "S".into(),
                f_low_thz: 197.00,
                f_high_thz: 202.85,
                n_channels: 50,
                spacing_ghz: 118.75,
                dfa_nf_db: 6.0,
                symbol_rate_gbaud: 100.0,
                roll_off: 0.1,
            },
        ])
        .unwrap()
    }

    fn flat_spectrum(plan: &BandPlan, a0: f64) -> LaunchSpectrum {
        LaunchSpectrum {
            bands: plan
                .bands
                .iter()
                .map(|b| (b.name.clone(), BandSpectrum::flat(a0), b.center()))
                .collect(),
        }
    }

    #[test]
    fn spectrum_polynomial_terms() {
        let plan = cls_plan();
        let f_c = plan.bands[1].center();
        let flat = flat_spectrum(&plan, 1.5);
        assert_relative_eq!(evaluate_spectrum_dbm(&plan, &flat, f_c + 1.0).unwrap(), 1.5);

        let mut lin = flat_spectrum(&plan, 0.0);
        lin.bands[1].1 = BandSpectrum { a0: 0.0, a1: 2.0, a2: 0.0, a3: 0.0 };
        assert_relative_eq!(evaluate_spectrum_dbm(&plan, &lin, f_c + 0.5).unwrap(), 1.0);

        let mut cub = flat_spectrum(&plan, 0.0);
        cub.bands[1].1 = BandSpectrum { a0: 0.0, a1: 0.0, a2: 0.0, a3: 1.0 };
        assert_relative_eq!(evaluate_spectrum_dbm(&plan, &cub, f_c - 2.0).unwrap(), -8.0);
    }

    #[test]
    fn spectrum_guard_band_is_error() {
        let plan = cls_plan();
        let flat = flat_spectrum(&plan, 0.0);
        assert!(matches!(
            evaluate_spectrum_dbm(&plan, &flat, 190.5),
            Err(Error::GuardBand { .. })
        ));
    }

    #[test]
    fn cls_grid_has_150_channels() {
        let plan = cls_plan();
        let grid = build_channel_grid(&plan, &flat_spectrum(&plan, 1.5)).unwrap();
        assert_eq!(grid.len(), 150);
        // symmetric placement inside each band
        for band in &plan.bands {
            let fs: Vec<f64> = grid
                .iter()
                .filter(|lw| lw.band == band.name)
                .map(|lw| lw.f)
                .collect();
            assert_eq!(fs.len(), 50);
            let lo_gap = fs[0] - band.f_low_thz;
            let hi_gap = band.f_high_thz - fs[fs.len() - 1];
            assert_relative_eq!(lo_gap, hi_gap, epsilon = 1e-9);
            for w in fs.windows(2) {
                assert_relative_eq!(w[1] - w[0], 0.11875, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn single_channel_sits_at_band_center() {
        let plan = BandPlan::new(vec![Band {
            name: "C".into(),
            f_low_thz: 190.0,
            f_high_thz: 196.0,
            n_channels: 1,
            spacing_ghz: 100.0,
            dfa_nf_db: 5.0,
            symbol_rate_gbaud: 100.0,
            roll_off: 0.1,
        }])
        .unwrap();
        let grid = build_channel_grid(&plan, &flat_spectrum(&plan, 0.0)).unwrap();
        assert_eq!(grid.len(), 1);
        assert_relative_eq!(grid[0].f, 193.0);
    }

    #[test]
    fn overfull_band_rejected() {
        let plan = BandPlan::new(vec![Band {
            name: "C".into(),
            f_low_thz: 190.0,
            f_high_thz: 191.0,
            n_channels: 50,
            spacing_ghz: 118.75,
            dfa_nf_db: 5.0,
            symbol_rate_gbaud: 100.0,
            roll_off: 0.1,
        }])
        .unwrap();
        let spec = flat_spectrum(&plan, 0.0);
        assert!(build_channel_grid(&plan, &spec).is_err());
    }

    #[test]
    fn brp_direction_invariant() {
        let mut lw = Lightwave::brp(0, 211.5, dbm_to_mw(27.7));
        assert!(lw.validate().is_ok());
        lw.direction = Direction::Forward;
        assert!(lw.validate().is_err());
        let mut ch = Lightwave::channel(1, 193.0, 1.0, "C", 100.0, 0.1);
        ch.direction = Direction::Backward;
        assert!(ch.validate().is_err());
    }
}
