//! Plateau conditions, the asymptotic error of infinitely repeated patterns,
//! and lifetime estimates for soft cutoffs, timing jitter and Markovian
//! noise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::chi::{ChiConfig, ChiEngine, ErrorBudget, Method};
use crate::error::{Error, Result};
use crate::filter::{passband_max, suppression_order, SuppressionOrder};
use crate::noise::{NoiseSpectrum, Rolloff};
use crate::pulse::{pulse_order, PulseShape};
use crate::sequence::TimingPattern;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub holds: bool,
    /// Positive when the inequality holds.
    pub margin: f64,
}

impl Condition {
    fn greater(lhs: f64, rhs: f64) -> Self {
        Self { holds: lhs > rhs, margin: lhs - rhs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauConditions {
    pub alpha_p: u32,
    /// `s + 2α_p > 1`
    pub lowfreq_bb: Condition,
    /// `s + 2α_pul > 1`; absent for bang-bang pulses.
    pub alpha_pul: Option<u32>,
    pub lowfreq_pul: Option<Condition>,
    /// `x = T_p ω_c / 2π < 1`
    pub resonance: Condition,
    pub x: f64,
}

impl PlateauConditions {
    pub fn all_hold(&self) -> bool {
        self.lowfreq_bb.holds && self.lowfreq_pul.is_none_or(|c| c.holds) && self.resonance.holds
    }

    /// Names of the violated inequalities.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.lowfreq_bb.holds {
            out.push(format!("s + 2α_p > 1 fails (s + 2·{} − 1 = {})", self.alpha_p, self.lowfreq_bb.margin));
        }
        if let (Some(c), Some(a)) = (self.lowfreq_pul, self.alpha_pul) {
            if !c.holds {
                out.push(format!("s + 2α_pul > 1 fails (s + 2·{a} − 1 = {})", c.margin));
            }
        }
        if !self.resonance.holds {
            out.push(format!("T_p ω_c < 2π fails (x = {})", self.x));
        }
        out
    }
}

/// Evaluates the three plateau inequalities.
pub fn check_conditions(p: &TimingPattern, spec: &NoiseSpectrum, shape: &PulseShape) -> Result<PlateauConditions> {
    let alpha_p = suppression_order(p)?.alpha;
    let (alpha_pul, lowfreq_pul) = if shape.is_bang_bang() {
        (None, None)
    } else {
        let a = pulse_order(p, shape)?.alpha_pul;
        (Some(a), Some(Condition::greater(spec.s + 2.0 * a as f64, 1.0)))
    };
    let x = p.duration() * spec.omega_c / (2.0 * PI);
    Ok(PlateauConditions {
        alpha_p,
        lowfreq_bb: Condition::greater(spec.s + 2.0 * alpha_p as f64, 1.0),
        alpha_pul,
        lowfreq_pul,
        resonance: Condition { holds: x < 1.0, margin: 1.0 - x },
        x,
    })
}

/// `χ_[p]^∞` from both evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptotic {
    /// Numerical plateau value; `m = 0` marks the limit.
    pub budget: ErrorBudget,
    /// Leading-order hard-cutoff closed form.
    pub closed_form: f64,
    /// Resonant growth per repeat from spectral weight at `2πk/T_p`.
    pub growth_per_repeat: f64,
}

/// `g|A|² ω_c^{2α−1} / (π T² (s + 2α − 1))`.
fn closed_form_term(g: f64, a_sq: f64, alpha: u32, spec: &NoiseSpectrum, t: f64) -> f64 {
    let e = 2.0 * alpha as f64;
    g * a_sq * spec.omega_c.powf(e - 1.0) / (PI * t * t * (spec.s + e - 1.0))
}

/// Plateau error of `p` repeated forever.
pub fn chi_asymptotic(p: &TimingPattern, spec: &NoiseSpectrum, shape: &PulseShape, cfg: &ChiConfig) -> Result<Asymptotic> {
    let cond = check_conditions(p, spec, shape)?;
    if !cond.all_hold() {
        return Err(Error::Divergence(cond.failures().join("; ")));
    }
    let t = p.duration();
    let order = suppression_order(p)?;
    let mut closed_form = closed_form_term(spec.g, order.a_bb.norm_sqr(), order.alpha, spec, t);
    if !shape.is_bang_bang() {
        let po = pulse_order(p, shape)?;
        closed_form += closed_form_term(spec.g, po.a_pul.norm_sqr(), po.alpha_pul, spec, t);
    }
    let engine = ChiEngine::new(p, spec, shape, *cfg)?;
    let total = engine.asymptotic()?;
    let chi_bb = if shape.is_bang_bang() {
        total.chi_inf
    } else {
        ChiEngine::new(p, spec, &PulseShape::BangBang, *cfg)?.asymptotic()?.chi_inf
    };
    let chi_total = total.chi_inf.max(0.0);
    let budget = ErrorBudget {
        chi_total,
        chi_bb,
        chi_pul: (chi_total - chi_bb).max(0.0),
        chi_low: total.chi_inf_low.max(0.0),
        chi_high: total.chi_inf_high.max(0.0),
        m: 0,
        coherence: (-chi_total).exp(),
        error_bound: total.error_bound,
        method: Method::Direct,
    };
    Ok(Asymptotic { budget, closed_form, growth_per_repeat: total.growth_per_repeat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MMax {
    /// Hard cutoff meeting every condition.
    Unbounded,
    Bound {
        /// General lower bound, floored at 1.
        m_max: f64,
        /// `(3π⁶/(5·2²⁵)) x^{7−r}` when `p` is a 16-slot Thue–Morse block and `s = −2`.
        specialized: Option<f64>,
        /// `|general − specialized| / specialized`.
        rel_diff: Option<f64>,
    },
}

/// `3π⁶/(5·2²⁵)`
pub fn cdd4_coefficient() -> f64 {
    3.0 * PI.powi(6) / (5.0 * 2f64.powi(25))
}

/// `48/F_max · (2π/(ω_c T_p))^r · χ_low/(g T_p)`, with `χ_low` the
/// hard-cutoff closed form.
pub fn m_max_general(order: &SuppressionOrder, f_max: f64, spec: &NoiseSpectrum, t: f64, r: f64) -> f64 {
    let chi_low_over_g = closed_form_term(1.0, order.a_bb.norm_sqr(), order.alpha, spec, t);
    48.0 / f_max * (2.0 * PI / (spec.omega_c * t)).powf(r) * chi_low_over_g / t
}

/// Lower bound on the number of repeats before a power-law tail ends the
/// plateau.
pub fn m_max_soft(p: &TimingPattern, spec: &NoiseSpectrum, shape: &PulseShape) -> Result<MMax> {
    let cond = check_conditions(p, spec, shape)?;
    if !(cond.lowfreq_bb.holds && cond.lowfreq_pul.is_none_or(|c| c.holds)) {
        return Err(Error::Divergence(cond.failures().join("; ")));
    }
    let r = match spec.rolloff {
        Rolloff::Hard if cond.resonance.holds => return Ok(MMax::Unbounded),
        Rolloff::Hard => return Err(Error::Divergence(cond.failures().join("; "))),
        Rolloff::Gaussian => {
            return Err(Error::Domain("the repeat bound needs a power-law rolloff".into()));
        }
        Rolloff::PowerLaw(r) => r,
    };
    let t = p.duration();
    let order = suppression_order(p)?;
    let f_max = passband_max(p, None)?.value;
    let general = m_max_general(&order, f_max, spec, t, r).max(1.0);
    let specialized = (spec.s == -2.0 && is_thue_morse_16(p)).then(|| cdd4_coefficient() * cond.x.powf(7.0 - r));
    let rel_diff = specialized.map(|s| (general - s.max(1.0)).abs() / s.max(1.0));
    Ok(MMax::Bound { m_max: general, specialized, rel_diff })
}

fn is_thue_morse_16(p: &TimingPattern) -> bool {
    let reference = TimingPattern::cdd(4, 1.0).ok().and_then(|c| c.slot_signs(16));
    reference.is_some() && p.slot_signs(16) == reference
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterTolerance {
    /// Free-evolution delay at which the error reaches the budget.
    pub delta_t: f64,
    pub chi_inf: f64,
    pub chi_at_zero: f64,
    pub target: f64,
}

/// Largest readout delay `δt` after `m` repeats keeping the error within
/// `budget_factor · χ_[p]^∞`.
pub fn jitter_tolerance(
    p: &TimingPattern,
    m: u64,
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    budget_factor: f64,
    cfg: &ChiConfig,
) -> Result<JitterTolerance> {
    if !(budget_factor > 1.0) {
        return Err(Error::Domain(format!("budget factor must exceed 1, got {budget_factor}")));
    }
    let chi_inf = chi_asymptotic(p, spec, shape, cfg)?.budget.chi_total;
    let engine = ChiEngine::new(p, spec, shape, *cfg)?;
    let target = budget_factor * chi_inf;
    let chi_at_zero = engine.repeated_with_tail(m, 0.0)?;
    if chi_at_zero >= target {
        return Err(Error::Precondition(format!(
            "error after {m} repeats ({chi_at_zero:e}) already exceeds the budget {target:e}"
        )));
    }
    let limit = m as f64 * p.duration();
    let mut lo = 0.0;
    let mut hi = 1e-15;
    while engine.repeated_with_tail(m, hi)? < target {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(Error::Precondition(format!("budget {target:e} not reached within a delay of {limit:e} s")));
        }
    }
    while hi - lo > 1e-4 * hi {
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if engine.repeated_with_tail(m, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(JitterTolerance { delta_t: 0.5 * (lo + hi), chi_inf, chi_at_zero, target })
}

/// `T_max = T_M χ_[p]^∞`.
pub fn markovian_limit(t_markov: f64, chi_inf: f64) -> Result<f64> {
    if !(t_markov > 0.0 && t_markov.is_finite()) {
        return Err(Error::Domain(format!("Markovian time must be positive, got {t_markov}")));
    }
    if !(chi_inf >= 0.0 && chi_inf.is_finite()) {
        return Err(Error::Domain(format!("plateau error must be non-negative, got {chi_inf}")));
    }
    Ok(t_markov * chi_inf)
}

/// Lifetime estimates attached to a plateau report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetimes {
    /// `m_max · T_p` for power-law tails.
    pub soft_cutoff: Option<f64>,
    pub markovian: Option<f64>,
    pub jitter: Option<JitterTolerance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauReport {
    pub conditions: PlateauConditions,
    pub plateau: bool,
    pub chi_infinity: Option<Asymptotic>,
    /// Why `chi_infinity` is missing.
    pub diagnostic: Option<String>,
    pub m_max: Option<MMax>,
    pub lifetimes: Lifetimes,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub t_markov: Option<f64>,
    /// Budget factor and repeat count for the jitter estimate.
    pub jitter: Option<(f64, u64)>,
}

pub fn plateau_report(
    p: &TimingPattern,
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    cfg: &ChiConfig,
    opts: &ReportOptions,
) -> Result<PlateauReport> {
    let conditions = check_conditions(p, spec, shape)?;
    let plateau = conditions.all_hold();
    let (chi_infinity, diagnostic) = match chi_asymptotic(p, spec, shape, cfg) {
        Ok(a) => (Some(a), None),
        Err(Error::Divergence(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };
    let m_max = match spec.rolloff {
        Rolloff::Gaussian => None,
        _ => m_max_soft(p, spec, shape).ok(),
    };
    let soft_cutoff = match m_max {
        Some(MMax::Bound { m_max, .. }) => Some(m_max * p.duration()),
        _ => None,
    };
    let chi_inf = chi_infinity.map(|a| a.budget.chi_total);
    let markovian = match (opts.t_markov, chi_inf) {
        (Some(tm), Some(c)) => Some(markovian_limit(tm, c)?),
        _ => None,
    };
    let jitter = match (opts.jitter, chi_inf) {
        (Some((factor, m)), Some(_)) => Some(jitter_tolerance(p, m, spec, shape, factor, cfg)?),
        _ => None,
    };
    Ok(PlateauReport {
        conditions,
        plateau,
        chi_infinity,
        diagnostic,
        m_max,
        lifetimes: Lifetimes { soft_cutoff, markovian, jitter },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{DEFAULT_OMEGA_MAX, DEFAULT_OMEGA_MIN};

    fn literal(rolloff: Rolloff) -> NoiseSpectrum {
        let wc = 2.0 * PI * 1e4;
        NoiseSpectrum::new(-2.0, 0.207 * wc, wc, rolloff, DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX).unwrap()
    }

    fn cdd4() -> TimingPattern {
        TimingPattern::cdd(4, 1e-6).unwrap()
    }

    #[test]
    fn cdd4_conditions() {
        let c = check_conditions(&cdd4(), &literal(Rolloff::Gaussian), &PulseShape::BangBang).unwrap();
        assert!(c.all_hold());
        assert!((c.x - 0.16).abs() < 1e-12);
        assert_eq!(c.alpha_p, 4);
        assert!(c.lowfreq_pul.is_none());
    }

    #[test]
    fn primitive_pulses_break_condition() {
        let c = check_conditions(&cdd4(), &literal(Rolloff::Gaussian), &PulseShape::primitive(1e-9).unwrap()).unwrap();
        assert!(!c.all_hold());
        assert_eq!(c.lowfreq_pul.unwrap().margin, -1.0);
        let d = check_conditions(&cdd4(), &literal(Rolloff::Gaussian), &PulseShape::dcg(1e-8).unwrap()).unwrap();
        assert!(d.all_hold());
    }

    #[test]
    fn free_evolution_fails() {
        let free = TimingPattern::free(1e-6).unwrap();
        let c = check_conditions(&free, &literal(Rolloff::Hard), &PulseShape::BangBang).unwrap();
        assert!(!c.lowfreq_bb.holds);
        let err = chi_asymptotic(&free, &literal(Rolloff::Hard), &PulseShape::BangBang, &ChiConfig::default());
        assert!(matches!(err, Err(Error::Divergence(ref m)) if m.contains("α_p")));
    }

    #[test]
    fn hard_cutoff_closed_form() {
        let sp = literal(Rolloff::Hard);
        let p = cdd4();
        let a = chi_asymptotic(&p, &sp, &PulseShape::BangBang, &ChiConfig::default()).unwrap();
        let t: f64 = 16e-6;
        let independent = sp.g * t.powi(8) * sp.omega_c.powi(7) / (5.0 * PI * 2f64.powi(28));
        assert!((a.closed_form - independent).abs() < 1e-3 * independent);
        assert!(a.closed_form > 4e-11 && a.closed_form < 6e-11);
        let ratio = a.budget.chi_total / a.closed_form;
        assert!((0.7..1.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_strength_plateau() {
        let sp = literal(Rolloff::Hard).with_strength(0.0);
        let a = chi_asymptotic(&cdd4(), &sp, &PulseShape::BangBang, &ChiConfig::default()).unwrap();
        assert_eq!(a.budget.chi_total, 0.0);
        assert_eq!(a.closed_form, 0.0);
    }

    #[test]
    fn coefficient_value() {
        assert!((cdd4_coefficient() - 1.7191e-5).abs() < 1e-8);
    }

    #[test]
    fn m_max_kinds() {
        let p = cdd4();
        assert_eq!(m_max_soft(&p, &literal(Rolloff::Hard), &PulseShape::BangBang).unwrap(), MMax::Unbounded);
        assert!(matches!(m_max_soft(&p, &literal(Rolloff::Gaussian), &PulseShape::BangBang), Err(Error::Domain(_))));
        let mut last = 0.0;
        for r in [10.0, 14.0, 18.0, 22.0] {
            match m_max_soft(&p, &literal(Rolloff::PowerLaw(r)), &PulseShape::BangBang).unwrap() {
                MMax::Bound { m_max, specialized, rel_diff } => {
                    assert!(m_max > last);
                    last = m_max;
                    assert!(specialized.is_some());
                    assert!(rel_diff.unwrap() < 0.01);
                }
                MMax::Unbounded => panic!("expected a bound"),
            }
        }
    }

    #[test]
    fn markovian_product() {
        assert_eq!(markovian_limit(100.0, 1e-5).unwrap(), 100.0 * 1e-5);
        assert!((markovian_limit(100.0, 1e-5).unwrap() - 1e-3).abs() < 1e-18);
        assert_eq!(markovian_limit(3.0, 0.0).unwrap(), 0.0);
        assert!((markovian_limit(1.0, 1.3e-9).unwrap() - 1.3e-9).abs() < 1e-24);
        assert!(markovian_limit(0.0, 1.0).is_err());
    }

    #[test]
    fn jitter_bracket_is_monotone() {
        let sp = NoiseSpectrum::gaas();
        let p = cdd4();
        let cfg = ChiConfig::default();
        let j = jitter_tolerance(&p, 100, &sp, &PulseShape::BangBang, 2.0, &cfg).unwrap();
        let e = ChiEngine::new(&p, &sp, &PulseShape::BangBang, cfg).unwrap();
        let a = e.repeated_with_tail(100, 0.5 * j.delta_t).unwrap();
        let b = e.repeated_with_tail(100, j.delta_t).unwrap();
        let c = e.repeated_with_tail(100, 2.0 * j.delta_t).unwrap();
        assert!(j.chi_at_zero < a && a < b && b < c);
        assert!((b - j.target).abs() < 1e-3 * j.target);
    }

    #[test]
    fn report_collects_everything() {
        let sp = literal(Rolloff::PowerLaw(18.0));
        let opts = ReportOptions { t_markov: Some(100.0), jitter: None };
        let r = plateau_report(&cdd4(), &sp, &PulseShape::BangBang, &ChiConfig::default(), &opts).unwrap();
        assert!(r.plateau);
        assert!(r.chi_infinity.is_some());
        assert!(r.lifetimes.soft_cutoff.is_some());
        let tm = r.lifetimes.markovian.unwrap();
        assert_eq!(tm, 100.0 * r.chi_infinity.unwrap().budget.chi_total);
        let bad = plateau_report(&cdd4(), &sp, &PulseShape::primitive(1e-9).unwrap(), &ChiConfig::default(), &opts).unwrap();
        assert!(!bad.plateau);
        assert!(bad.diagnostic.unwrap().contains("α_pul"));
    }
}
