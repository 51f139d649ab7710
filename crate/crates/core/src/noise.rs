//! Dephasing noise power spectral densities.
//!
//! All frequencies are angular (rad/s). Spectra have the form
//! `g (ω/ω_c)^s f(ω, ω_c)` on the band `[ω_min, ω_max]` and vanish outside
//! it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::chi;
use crate::error::{Error, Result};
use crate::pulse::PulseShape;
use crate::quadrature::QuadConfig;
use crate::sequence::TimingPattern;

/// High-frequency behaviour of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rolloff {
    /// Sharp cutoff: nothing above `ω_c`.
    Hard,
    /// `exp(-ω²/ω_c²)` applied over the whole band.
    Gaussian,
    /// Above `ω_c` the density follows `g (ω/ω_c)^(-r)`.
    PowerLaw(f64),
}

/// Power-law dephasing spectrum with a cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub s: f64,
    /// Strength in rad/s.
    pub g: f64,
    pub omega_c: f64,
    pub rolloff: Rolloff,
    pub omega_min: f64,
    pub omega_max: f64,
}

/// Default band edges, 0.01 Hz and 100 MHz.
pub const DEFAULT_OMEGA_MIN: f64 = 2.0 * PI * 0.01;
pub const DEFAULT_OMEGA_MAX: f64 = 2.0 * PI * 1e8;

// Below this fraction of g the Gaussian tail is dropped from integrals.
const GAUSSIAN_TAIL_FLOOR_LN: f64 = -92.1;

impl NoiseSpectrum {
    pub fn new(
        s: f64,
        g: f64,
        omega_c: f64,
        rolloff: Rolloff,
        omega_min: f64,
        omega_max: f64,
    ) -> Result<Self> {
        let spec = Self { s, g, omega_c, rolloff, omega_min, omega_max };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.g.is_finite() && self.g >= 0.0) {
            return Err(Error::Domain(format!("invalid exponent/strength s={}, g={}", self.s, self.g)));
        }
        if !(self.omega_c.is_finite() && self.omega_c > 0.0) {
            return Err(Error::Domain(format!("cutoff must be positive, got {}", self.omega_c)));
        }
        if !(self.omega_min > 0.0 && self.omega_min < self.omega_max && self.omega_max.is_finite()) {
            return Err(Error::Domain(format!(
                "band limits must satisfy 0 < omega_min < omega_max, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        if let Rolloff::PowerLaw(r) = self.rolloff {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Domain(format!("power-law rolloff needs r > 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Spectral density at `omega`; zero outside the band.
    pub fn evaluate(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(Error::Domain(format!("spectrum evaluated at non-positive frequency {omega}")));
        }
        Ok(self.density(omega))
    }

    /// Unchecked evaluation used inside integrands.
    #[inline]
    pub(crate) fn density(&self, omega: f64) -> f64 {
        if omega < self.omega_min || omega > self.omega_max {
            return 0.0;
        }
        let u = omega / self.omega_c;
        match self.rolloff {
            Rolloff::Hard => {
                if u > 1.0 {
                    0.0
                } else {
                    self.g * u.powf(self.s)
                }
            }
            Rolloff::Gaussian => self.g * u.powf(self.s) * (-u * u).exp(),
            Rolloff::PowerLaw(r) => {
                if u > 1.0 {
                    self.g * u.powf(-r)
                } else {
                    self.g * u.powf(self.s)
                }
            }
        }
    }

    /// Same spectrum with strength `g`.
    pub fn with_strength(&self, g: f64) -> Self {
        Self { g, ..*self }
    }

    pub fn with_rolloff(&self, rolloff: Rolloff) -> Self {
        Self { rolloff, ..*self }
    }

    /// Upper integration limit: the band top, clipped where the density is
    /// identically zero (hard cutoff) or below `1e-40 g` (Gaussian tail).
    pub fn effective_upper(&self) -> f64 {
        match self.rolloff {
            Rolloff::Hard => self.omega_c.min(self.omega_max),
            Rolloff::Gaussian => {
                // smallest u >= 1 with s ln u - u^2 below the floor
                let mut u: f64 = 1.0;
                while self.s * u.ln() - u * u > GAUSSIAN_TAIL_FLOOR_LN {
                    u *= 1.05;
                }
                (u * self.omega_c).min(self.omega_max)
            }
            Rolloff::PowerLaw(_) => self.omega_max,
        }
        .max(self.omega_min)
    }

    /// Nuclear-spin noise in a GaAs spin qubit.
    pub fn gaas() -> Self {
        Self::from_json(GAAS_JSON).expect("embedded preset")
    }

    /// 1/f noise of a trapped Yb ion with a 100 Hz Gaussian cutoff, strength
    /// set to a 1 s free-induction decay.
    pub fn yb() -> Self {
        Self::from_json(YB_JSON).expect("embedded preset")
    }

    /// Built-in preset by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "gaas" => Some(Self::gaas()),
            "yb" => Some(Self::yb()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpectrumDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("spectrum document: {e}")))?;
        doc.into_spectrum()
    }

    /// Document form in the angular convention.
    pub fn to_doc(&self) -> SpectrumDoc {
        SpectrumDoc {
            s: self.s,
            g_over_omega_c: self.g / self.omega_c,
            omega_c_hz: self.omega_c / (2.0 * PI),
            rolloff: self.rolloff,
            omega_min_hz: Some(self.omega_min / (2.0 * PI)),
            omega_max_hz: Some(self.omega_max / (2.0 * PI)),
            g_convention: StrengthConvention::Angular,
        }
    }
}

pub const GAAS_JSON: &str = include_str!("../presets/gaas.json");
pub const YB_JSON: &str = include_str!("../presets/yb.json");

/// How `g_over_omega_c` in a spectrum document is to be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthConvention {
    /// `g` enters the overlap integral as written.
    #[default]
    Angular,
    /// `g` is quoted per unit of cyclic frequency and is multiplied by 2π on
    /// load.
    Cyclic,
}

/// On-disk spectrum description. Frequencies are in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumDoc {
    pub s: f64,
    pub g_over_omega_c: f64,
    pub omega_c_hz: f64,
    pub rolloff: Rolloff,
    #[serde(default)]
    pub omega_min_hz: Option<f64>,
    #[serde(default)]
    pub omega_max_hz: Option<f64>,
    #[serde(default)]
    pub g_convention: StrengthConvention,
}

impl SpectrumDoc {
    pub fn into_spectrum(self) -> Result<NoiseSpectrum> {
        let omega_c = 2.0 * PI * self.omega_c_hz;
        let scale = match self.g_convention {
            StrengthConvention::Angular => 1.0,
            StrengthConvention::Cyclic => 2.0 * PI,
        };
        NoiseSpectrum::new(
            self.s,
            scale * self.g_over_omega_c * omega_c,
            omega_c,
            self.rolloff,
            self.omega_min_hz.map_or(DEFAULT_OMEGA_MIN, |f| 2.0 * PI * f),
            self.omega_max_hz.map_or(DEFAULT_OMEGA_MAX, |f| 2.0 * PI * f),
        )
    }
}

/// Rescales `g` so that free evolution over `target_t2` has decoupling
/// error exactly 1 (coherence 1/e).
///
/// The error is linear in `g`, so a single evaluation fixes the scale.
pub fn calibrate_strength(template: &NoiseSpectrum, target_t2: f64, quad: &QuadConfig) -> Result<NoiseSpectrum> {
    if !(target_t2 > 0.0 && target_t2.is_finite()) {
        return Err(Error::Domain(format!("target T2 must be positive, got {target_t2}")));
    }
    let probe_g = if template.g > 0.0 { template.g } else { template.omega_c };
    let probe = template.with_strength(probe_g);
    let free = TimingPattern::free(target_t2)?;
    let budget = chi::chi(&free, &probe, &PulseShape::BangBang, quad)
        .map_err(|e| Error::Calibration(format!("baseline integral failed: {e}")))?;
    let baseline = budget.chi_total;
    if !(baseline.is_finite() && baseline > 0.0) {
        return Err(Error::Calibration(format!("baseline decoupling error is {baseline}")));
    }
    Ok(template.with_strength(probe_g / baseline))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaas_literal() -> NoiseSpectrum {
        let wc = 2.0 * PI * 1e4;
        NoiseSpectrum::new(-2.0, 0.207 * wc, wc, Rolloff::Gaussian, DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX).unwrap()
    }

    #[test]
    fn gaussian_at_cutoff() {
        let sp = gaas_literal();
        let v = sp.evaluate(sp.omega_c).unwrap();
        assert!((v - sp.g * (-1f64).exp()).abs() <= 1e-14 * v);
    }

    #[test]
    fn hard_vanishes_above_cutoff() {
        let sp = gaas_literal().with_rolloff(Rolloff::Hard);
        assert_eq!(sp.evaluate(2.0 * sp.omega_c).unwrap(), 0.0);
        assert!(sp.evaluate(0.5 * sp.omega_c).unwrap() > 0.0);
    }

    #[test]
    fn power_law_continuous_at_cutoff() {
        let sp = gaas_literal().with_rolloff(Rolloff::PowerLaw(2.0));
        let below = sp.evaluate(sp.omega_c * (1.0 - 1e-15)).unwrap();
        let at = sp.evaluate(sp.omega_c).unwrap();
        let above = sp.evaluate(sp.omega_c * (1.0 + 1e-15)).unwrap();
        assert!((at - sp.g).abs() <= 1e-12 * sp.g);
        assert!((below - above).abs() <= 1e-12 * sp.g);
    }

    #[test]
    fn non_positive_frequency_is_domain_error() {
        let sp = gaas_literal();
        assert!(matches!(sp.evaluate(0.0), Err(Error::Domain(_))));
        assert!(matches!(sp.evaluate(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_outside_band() {
        let sp = gaas_literal();
        assert_eq!(sp.evaluate(sp.omega_min * 0.5).unwrap(), 0.0);
        assert_eq!(sp.evaluate(sp.omega_max * 2.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_construction_rejected() {
        let wc = 1.0;
        assert!(NoiseSpectrum::new(-2.0, 1.0, wc, Rolloff::Hard, 2.0, 1.0).is_err());
        assert!(NoiseSpectrum::new(-2.0, 1.0, wc, Rolloff::PowerLaw(0.0), 0.1, 1.0).is_err());
        assert!(NoiseSpectrum::new(-2.0, -1.0, wc, Rolloff::Hard, 0.1, 1.0).is_err());
    }

    #[test]
    fn gaas_preset_reads_cyclic_strength() {
        let sp = NoiseSpectrum::gaas();
        assert_eq!(sp.s, -2.0);
        assert!((sp.omega_c - 2.0 * PI * 1e4).abs() < 1e-9);
        assert!((sp.g / sp.omega_c - 2.0 * PI * 0.207).abs() < 1e-12);
        assert!((sp.omega_min - DEFAULT_OMEGA_MIN).abs() < 1e-15);
        assert!((sp.omega_max - DEFAULT_OMEGA_MAX).abs() < 1e-3);
    }

    #[test]
    fn document_round_trip() {
        let sp = NoiseSpectrum::gaas().with_rolloff(Rolloff::PowerLaw(18.0));
        let text = serde_json::to_string(&sp.to_doc()).unwrap();
        let back = NoiseSpectrum::from_json(&text).unwrap();
        assert!((back.g - sp.g).abs() <= 1e-12 * sp.g);
        assert_eq!(back.rolloff, sp.rolloff);
    }

    #[test]
    fn rolloff_document_forms() {
        let text = r#"{"s":-1,"g_over_omega_c":1,"omega_c_hz":100,"rolloff":{"power_law":6}}"#;
        assert_eq!(NoiseSpectrum::from_json(text).unwrap().rolloff, Rolloff::PowerLaw(6.0));
        let text = r#"{"s":-1,"g_over_omega_c":1,"omega_c_hz":100,"rolloff":"hard"}"#;
        assert_eq!(NoiseSpectrum::from_json(text).unwrap().rolloff, Rolloff::Hard);
        let bad = r#"{"s":-1,"g_over_omega_c":1,"omega_c_hz":100,"rolloff":"cubic"}"#;
        assert!(matches!(NoiseSpectrum::from_json(bad), Err(Error::Parse(_))));
    }

    #[test]
    fn effective_upper_clips_tails() {
        let sp = gaas_literal();
        let top = sp.effective_upper();
        assert!(top > 9.0 * sp.omega_c && top < 11.0 * sp.omega_c);
        assert_eq!(sp.with_rolloff(Rolloff::Hard).effective_upper(), sp.omega_c);
        assert_eq!(sp.with_rolloff(Rolloff::PowerLaw(4.0)).effective_upper(), sp.omega_max);
    }

    #[test]
    fn yb_preset_decays_in_about_a_second() {
        let sp = NoiseSpectrum::yb();
        let free = TimingPattern::free(1.0).unwrap();
        let x = chi::chi(&free, &sp, &PulseShape::BangBang, &QuadConfig::default()).unwrap().chi_total;
        assert!((x - 1.0).abs() < 1e-3, "{x}");
    }
}
