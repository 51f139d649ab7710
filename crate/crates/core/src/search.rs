//! Exhaustive search over Walsh sequences on a uniform slot grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chi::{ChiConfig, ChiEngine, ErrorBudget};
use crate::error::{Error, Result};
use crate::noise::NoiseSpectrum;
use crate::pulse::PulseShape;
use crate::sequence::{walsh_signs, TimingPattern};

pub const DEFAULT_SLOT_LIMIT: usize = 1 << 12;

/// Slot count `N = T_s/τ`, required to be a power of two within `limit`.
pub fn slot_count(t_s: f64, tau: f64, limit: usize) -> Result<usize> {
    if !(t_s > 0.0 && tau > 0.0 && t_s.is_finite() && tau.is_finite()) {
        return Err(Error::Domain(format!("storage time {t_s} and slot length {tau} must be positive")));
    }
    let ratio = t_s / tau;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-9 * ratio || n < 1.0 {
        return Err(Error::Domain(format!("T_s/τ = {ratio} is not an integer")));
    }
    let n = n as usize;
    if !n.is_power_of_two() {
        return Err(Error::Domain(format!("T_s/τ = {n} is not a power of two")));
    }
    if n > limit {
        return Err(Error::Domain(format!("T_s/τ = {n} exceeds the slot limit {limit}")));
    }
    Ok(n)
}

/// All Walsh patterns `walsh(k, T_s, N)`, `k = 0..N`.
pub fn enumerate(t_s: f64, tau: f64) -> Result<Vec<TimingPattern>> {
    enumerate_with_limit(t_s, tau, DEFAULT_SLOT_LIMIT)
}

pub fn enumerate_with_limit(t_s: f64, tau: f64, limit: usize) -> Result<Vec<TimingPattern>> {
    let n = slot_count(t_s, tau, limit)?;
    (0..n).map(|k| TimingPattern::walsh(k, t_s, n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub label: String,
    pub pulses: usize,
    pub chi: Option<f64>,
    /// Reason the candidate was left out of the minimum.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    /// `CDD<q>` for Thue–Morse blocks, otherwise `W<k>@<slots>`.
    pub base_label: String,
    pub base_slots: usize,
    pub repeats: usize,
    /// Repetition-kernel error of the base block, relative to the winner's.
    pub kernel_rel_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub t_s: f64,
    pub tau: f64,
    pub slots: usize,
    pub winner_index: usize,
    pub winner: TimingPattern,
    pub chi: ErrorBudget,
    pub candidates: Vec<Candidate>,
    pub structure: Option<Structure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub chi: ChiConfig,
    pub slot_limit: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { chi: ChiConfig::default(), slot_limit: DEFAULT_SLOT_LIMIT }
    }
}

/// Minimum-error Walsh sequence at storage time `t_s` and slot length `tau`.
///
/// Ties go to fewer pulses, then to the lower index.
pub fn best_sequence(
    t_s: f64,
    tau: f64,
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    cfg: &SearchConfig,
) -> Result<SearchResult> {
    let patterns = enumerate_with_limit(t_s, tau, cfg.slot_limit)?;
    let slots = patterns.len();
    let evaluated: Vec<(Candidate, std::result::Result<ErrorBudget, Error>)> = patterns
        .par_iter()
        .enumerate()
        .map(|(index, p)| {
            let outcome = ChiEngine::new(p, spec, shape, cfg.chi).and_then(|e| e.single());
            let (chi, skipped) = match &outcome {
                Ok(b) => (Some(b.chi_total), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let c = Candidate { index, label: p.label().to_string(), pulses: p.pulse_count(), chi, skipped };
            (c, outcome)
        })
        .collect();

    let best = evaluated
        .iter()
        .filter_map(|(c, b)| b.as_ref().ok().map(|b| (c, *b)))
        .min_by(|(a, ba), (b, bb)| {
            ba.chi_total
                .total_cmp(&bb.chi_total)
                .then(a.pulses.cmp(&b.pulses))
                .then(a.index.cmp(&b.index))
        })
        .map(|(c, b)| (c.index, b));
    let Some((winner_index, chi)) = best else {
        // every candidate failed; report the first failure
        return Err(evaluated.into_iter().find_map(|(_, b)| b.err()).expect("at least one candidate"));
    };
    let winner = patterns[winner_index].clone();
    let mut structure = detect_structure(&winner, slots);
    if let Some(s) = structure.as_mut() {
        let base = TimingPattern::walsh(base_index(&winner, slots, s.base_slots), s.base_slots as f64 * tau, s.base_slots)?;
        s.kernel_rel_diff = ChiEngine::new(&base, spec, shape, cfg.chi)
            .and_then(|e| e.repeated(s.repeats as u64))
            .ok()
            .map(|b| if chi.chi_total == 0.0 { b.chi_total } else { (b.chi_total - chi.chi_total).abs() / chi.chi_total });
    }
    Ok(SearchResult {
        t_s,
        tau,
        slots,
        winner_index,
        winner,
        chi,
        candidates: evaluated.into_iter().map(|(c, _)| c).collect(),
        structure,
    })
}

/// Independent searches for each storage time; failures stay per point.
pub fn search_series(
    tau: f64,
    t_s_list: &[f64],
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    cfg: &SearchConfig,
) -> Vec<Result<SearchResult>> {
    t_s_list.iter().map(|&t_s| best_sequence(t_s, tau, spec, shape, cfg)).collect()
}

/// Smallest period of the slot signs that divides `slots`, as base^m.
pub fn detect_structure(p: &TimingPattern, slots: usize) -> Option<Structure> {
    let signs = p.slot_signs(slots)?;
    let mut period = 1;
    while period < slots {
        if slots % period == 0 && (period..slots).all(|i| signs[i] == signs[i % period]) {
            break;
        }
        period += 1;
    }
    if period == slots {
        return None;
    }
    let base = &signs[..period];
    Some(Structure {
        base_label: block_label(base),
        base_slots: period,
        repeats: slots / period,
        kernel_rel_diff: None,
    })
}

fn base_index(p: &TimingPattern, slots: usize, period: usize) -> usize {
    let signs = p.slot_signs(slots).unwrap_or_default();
    walsh_index(&signs[..period]).unwrap_or(0)
}

fn walsh_index(signs: &[i8]) -> Option<usize> {
    (0..signs.len()).find(|&k| walsh_signs(k, signs.len()).is_ok_and(|w| w == signs))
}

fn block_label(signs: &[i8]) -> String {
    let n = signs.len();
    if n.is_power_of_two() && n > 1 {
        let q = n.trailing_zeros();
        let tm: Vec<i8> = (0..n).map(|j| if j.count_ones() % 2 == 0 { 1 } else { -1 }).collect();
        if tm == signs {
            return format!("CDD{q}");
        }
    }
    match walsh_index(signs) {
        Some(k) => format!("W{k}@{n}"),
        None => format!("block@{n}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaas() -> NoiseSpectrum {
        NoiseSpectrum::gaas()
    }

    #[test]
    fn enumerate_counts() {
        let tau = 1e-6;
        let ps = enumerate(4.0 * tau, tau).unwrap();
        assert_eq!(ps.len(), 4);
        assert_eq!(ps[0].pulse_count(), 0);
        let ps = enumerate(16.0 * tau, tau).unwrap();
        let exact = ps.iter().filter(|p| (p.min_interval() - tau).abs() < 1e-9 * tau).count();
        assert_eq!(exact, 8);
        assert!(ps.iter().enumerate().all(|(k, p)| ((p.min_interval() - tau).abs() < 1e-9 * tau) == (k >= 8)));
    }

    #[test]
    fn enumerate_rejects_bad_grids() {
        assert!(matches!(enumerate(3e-6, 1e-6), Err(Error::Domain(_))));
        assert!(matches!(enumerate(2.5e-6, 1e-6), Err(Error::Domain(_))));
        assert!(matches!(enumerate_with_limit(64e-6, 1e-6, 32), Err(Error::Domain(_))));
    }

    #[test]
    fn echo_beats_free() {
        let r = best_sequence(2e-6, 1e-6, &gaas(), &PulseShape::BangBang, &SearchConfig::default()).unwrap();
        assert_eq!(r.winner_index, 1);
        assert_eq!(r.candidates.len(), 2);
    }

    #[test]
    fn zero_noise_picks_free_evolution() {
        let sp = gaas().with_strength(0.0);
        let r = best_sequence(8e-6, 1e-6, &sp, &PulseShape::BangBang, &SearchConfig::default()).unwrap();
        assert_eq!(r.winner_index, 0);
        assert_eq!(r.chi.chi_total, 0.0);
    }

    #[test]
    fn detects_repeated_cdd4() {
        let tau = 1e-6;
        for m in [1usize, 2, 4, 8] {
            let p = TimingPattern::cdd(4, tau).unwrap().repeat(m).unwrap();
            let s = detect_structure(&p, 16 * m);
            if m == 1 {
                assert!(s.is_none());
            } else {
                let s = s.unwrap();
                assert_eq!((s.base_label.as_str(), s.repeats, s.base_slots), ("CDD4", m, 16));
            }
        }
        let cp = TimingPattern::cdd(2, tau).unwrap().repeat(4).unwrap();
        assert_eq!(detect_structure(&cp, 16).unwrap().base_label, "CDD2");
    }

    #[test]
    fn winner_no_worse_than_cdd() {
        let tau = 1e-6;
        let sp = gaas();
        let r = best_sequence(16e-6, tau, &sp, &PulseShape::BangBang, &SearchConfig::default()).unwrap();
        for q in 1..=4 {
            let rep = 1 << (4 - q);
            let p = TimingPattern::cdd(q, tau).unwrap().repeat(rep).unwrap();
            let c = crate::chi::chi(&p, &sp, &PulseShape::BangBang, &Default::default()).unwrap().chi_total;
            assert!(r.chi.chi_total <= c * (1.0 + 1e-9));
        }
        let again = best_sequence(16e-6, tau, &sp, &PulseShape::BangBang, &SearchConfig::default()).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn overlapping_candidates_are_flagged() {
        let shape = PulseShape::primitive(1.2e-6).unwrap();
        let r = best_sequence(4e-6, 1e-6, &gaas(), &shape, &SearchConfig::default()).unwrap();
        assert!(r.candidates.iter().any(|c| c.skipped.is_some()));
        assert!(r.candidates[r.winner_index].skipped.is_none());
    }
}
