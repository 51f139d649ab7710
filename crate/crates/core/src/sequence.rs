//! Pulse-timing patterns for single-axis dynamical decoupling.
//!
//! A pattern is the list of π-pulse centre times inside `(0, T_p)`. It
//! fixes the switching function `y(t)`, which starts at `+1` and flips at
//! every pulse. Composition works on switching functions: joining `p1` and
//! `p2` restarts `p2` at `+1`, so a pulse is placed at the junction whenever
//! `p1` ends with `y = -1`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pulse-count limit applied by [`TimingPattern::repeat`].
pub const DEFAULT_PULSE_LIMIT: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatternDoc", into = "PatternDoc")]
pub struct TimingPattern {
    pulse_times: Vec<f64>,
    duration: f64,
    label: String,
}

/// JSON form of a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternDoc {
    pub label: String,
    pub duration_s: f64,
    pub pulse_times_s: Vec<f64>,
}

impl TryFrom<PatternDoc> for TimingPattern {
    type Error = Error;

    fn try_from(doc: PatternDoc) -> Result<Self> {
        Self::from_doc(doc)
    }
}

impl From<TimingPattern> for PatternDoc {
    fn from(p: TimingPattern) -> Self {
        p.to_doc()
    }
}

impl TimingPattern {
    pub fn new(pulse_times: Vec<f64>, duration: f64, label: impl Into<String>) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Domain(format!("pattern duration must be positive, got {duration}")));
        }
        let mut prev = 0.0;
        for (j, &t) in pulse_times.iter().enumerate() {
            if !(t > prev && t < duration) {
                return Err(Error::Domain(format!(
                    "pulse {} at {t:e} s is not strictly inside ({prev:e}, {duration:e})",
                    j + 1
                )));
            }
            prev = t;
        }
        Ok(Self { pulse_times, duration, label: label.into() })
    }

    /// Free evolution for `duration`.
    pub fn free(duration: f64) -> Result<Self> {
        Self::new(Vec::new(), duration, "free")
    }

    /// Uhrig sequence with `n` pulses at `T_p sin²(πj/(2n+2))`.
    pub fn udd(n: usize, duration: f64) -> Result<Self> {
        if n == 0 {
            return Self::free(duration);
        }
        let times = (1..=n)
            .map(|j| {
                let s = (PI * j as f64 / (2 * n + 2) as f64).sin();
                duration * s * s
            })
            .collect();
        Self::new(times, duration, format!("UDD{n}"))
    }

    /// Uhrig sequence whose first (shortest) interval equals `tau`.
    pub fn udd_with_min_interval(n: usize, tau: f64) -> Result<Self> {
        if n == 0 {
            return Self::free(tau);
        }
        let s = (PI / (2 * n + 2) as f64).sin();
        Self::udd(n, tau / (s * s))
    }

    /// Concatenated DD of the given level on a grid of width `tau`.
    ///
    /// The switching function is the Thue–Morse sign sequence on `2^level`
    /// slots; pulses sit at every slot boundary where the sign flips.
    pub fn cdd(level: u32, tau: f64) -> Result<Self> {
        if level == 0 {
            return Err(Error::Domain("CDD level must be at least 1".into()));
        }
        if level > 30 {
            return Err(Error::Resource(format!("CDD level {level} exceeds 2^30 slots")));
        }
        let slots = 1usize << level;
        let signs: Vec<i8> = (0..slots)
            .map(|j| if (j as u32).count_ones() % 2 == 0 { 1 } else { -1 })
            .collect();
        Self::from_slot_signs(&signs, tau, format!("CDD{level}"))
    }

    /// Carr–Purcell cycle `{τ, 2τ, τ}`.
    pub fn carr_purcell(tau: f64) -> Result<Self> {
        let mut p = Self::cdd(2, tau)?;
        p.label = "CP".into();
        Ok(p)
    }

    /// Paley-ordered Walsh function `w_k` on `slots` slots over `total`.
    pub fn walsh(k: usize, total: f64, slots: usize) -> Result<Self> {
        let signs = walsh_signs(k, slots)?;
        let slot = total / slots as f64;
        let times: Vec<f64> = (1..slots)
            .filter(|&j| signs[j] != signs[j - 1])
            .map(|j| total * (j as f64 / slots as f64))
            .collect();
        let label = format!("W{k}@{slots}");
        if !(slot > 0.0) {
            return Err(Error::Domain(format!("Walsh duration must be positive, got {total}")));
        }
        Self::new(times, total, label)
    }

    /// Pattern from per-slot switching signs; the first sign must be `+1`.
    pub fn from_slot_signs(signs: &[i8], slot: f64, label: impl Into<String>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::Domain("empty sign sequence".into()));
        }
        if signs[0] != 1 {
            return Err(Error::Domain("switching function must start at +1".into()));
        }
        let times = (1..signs.len())
            .filter(|&j| signs[j] != signs[j - 1])
            .map(|j| j as f64 * slot)
            .collect();
        Self::new(times, signs.len() as f64 * slot, label)
    }

    pub fn pulse_times(&self) -> &[f64] {
        &self.pulse_times
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn pulse_count(&self) -> usize {
        self.pulse_times.len()
    }

    /// Value of the switching function just before `T_p`.
    pub fn end_sign(&self) -> f64 {
        if self.pulse_times.len() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Shortest of `t_1, t_2 - t_1, ..., T_p - t_n`.
    pub fn min_interval(&self) -> f64 {
        let mut prev = 0.0;
        let mut min = f64::INFINITY;
        for &t in self.pulse_times.iter().chain(std::iter::once(&self.duration)) {
            min = min.min(t - prev);
            prev = t;
        }
        min
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &TimingPattern) -> TimingPattern {
        let offset = self.duration;
        let mut times = Vec::with_capacity(self.pulse_count() + other.pulse_count() + 1);
        times.extend_from_slice(&self.pulse_times);
        if self.end_sign() < 0.0 {
            times.push(offset);
        }
        times.extend(other.pulse_times.iter().map(|t| t + offset));
        TimingPattern {
            pulse_times: times,
            duration: offset + other.duration,
            label: format!("{}+{}", self.label, other.label),
        }
    }

    /// `m` back-to-back copies, subject to [`DEFAULT_PULSE_LIMIT`].
    pub fn repeat(&self, m: usize) -> Result<TimingPattern> {
        self.repeat_with_limit(m, DEFAULT_PULSE_LIMIT)
    }

    pub fn repeat_with_limit(&self, m: usize, pulse_limit: usize) -> Result<TimingPattern> {
        if m == 0 {
            return Err(Error::Domain("repeat count must be at least 1".into()));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let junction = usize::from(self.end_sign() < 0.0);
        let per_copy = self.pulse_count() + junction;
        let total = per_copy
            .checked_mul(m)
            .map(|t| t - junction)
            .filter(|&t| t <= pulse_limit)
            .ok_or_else(|| {
                Error::Resource(format!(
                    "[{}]^{m} needs more than {pulse_limit} pulses",
                    self.label
                ))
            })?;
        let mut times = Vec::with_capacity(total);
        for copy in 0..m {
            let offset = copy as f64 * self.duration;
            if copy > 0 && junction == 1 {
                times.push(offset);
            }
            times.extend(self.pulse_times.iter().map(|t| t + offset));
        }
        Ok(TimingPattern {
            pulse_times: times,
            duration: m as f64 * self.duration,
            label: format!("[{}]^{m}", self.label),
        })
    }

    /// The pattern read out at time `t`: pulses before `t` are kept.
    pub fn truncate(&self, t: f64) -> Result<TimingPattern> {
        if !(t > 0.0 && t <= self.duration) {
            return Err(Error::Domain(format!(
                "readout time {t:e} outside (0, {:e}]",
                self.duration
            )));
        }
        let times = self.pulse_times.iter().copied().filter(|&tj| tj < t).collect();
        Ok(TimingPattern {
            pulse_times: times,
            duration: t,
            label: format!("{}@{t:e}", self.label),
        })
    }

    /// `t_j -> T_p - t_{n+1-j}`.
    pub fn time_reversed(&self) -> TimingPattern {
        let times = self.pulse_times.iter().rev().map(|t| self.duration - t).collect();
        TimingPattern {
            pulse_times: times,
            duration: self.duration,
            label: format!("rev({})", self.label),
        }
    }

    /// Switching signs on `slots` equal slots, if every pulse sits on a slot
    /// boundary (to within `1e-9` of a slot).
    pub fn slot_signs(&self, slots: usize) -> Option<Vec<i8>> {
        if slots == 0 {
            return None;
        }
        let width = self.duration / slots as f64;
        let mut flips = vec![false; slots];
        for &t in &self.pulse_times {
            let pos = t / width;
            let j = pos.round();
            if (pos - j).abs() > 1e-9 || j < 1.0 || j >= slots as f64 {
                return None;
            }
            flips[j as usize] = true;
        }
        let mut sign = 1i8;
        Some(
            flips
                .iter()
                .map(|&f| {
                    if f {
                        sign = -sign;
                    }
                    sign
                })
                .collect(),
        )
    }

    pub fn to_doc(&self) -> PatternDoc {
        PatternDoc {
            label: self.label.clone(),
            duration_s: self.duration,
            pulse_times_s: self.pulse_times.clone(),
        }
    }

    pub fn from_doc(doc: PatternDoc) -> Result<Self> {
        Self::new(doc.pulse_times_s, doc.duration_s, doc.label)
    }

    /// Builds a pattern from a CLI sequence string: `free`, `udd:n`,
    /// `cdd:n`, `walsh:k/N` or `cp`.
    ///
    /// `tau` is the grid width (or the first UDD interval), `duration` the
    /// total length; each family needs one of them.
    pub fn from_spec(spec: &str, tau: Option<f64>, duration: Option<f64>) -> Result<Self> {
        let spec = spec.trim().to_ascii_lowercase();
        let (family, arg) = match spec.split_once(':') {
            Some((f, a)) => (f, Some(a)),
            None => (spec.as_str(), None),
        };
        let need = |what: &str| Error::Parse(format!("sequence '{spec}' needs {what}"));
        let count = |a: Option<&str>| -> Result<usize> {
            a.ok_or_else(|| need("a count"))?
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad count in sequence '{spec}'")))
        };
        match family {
            "free" => Self::free(duration.or(tau).ok_or_else(|| need("--duration or --tau"))?),
            "udd" => {
                let n = count(arg)?;
                match (duration, tau) {
                    (Some(t), _) => Self::udd(n, t),
                    (None, Some(tau)) => Self::udd_with_min_interval(n, tau),
                    _ => Err(need("--duration or --tau")),
                }
            }
            "cdd" => {
                let level = count(arg)? as u32;
                let tau = match (tau, duration) {
                    (Some(t), _) => t,
                    (None, Some(d)) => d / (1u64 << level.min(62)) as f64,
                    _ => return Err(need("--tau or --duration")),
                };
                Self::cdd(level, tau)
            }
            "cp" => {
                let tau = tau.or(duration.map(|d| d / 4.0)).ok_or_else(|| need("--tau or --duration"))?;
                Self::carr_purcell(tau)
            }
            "walsh" => {
                let arg = arg.ok_or_else(|| need("k/N"))?;
                let (k, n) = arg
                    .split_once('/')
                    .ok_or_else(|| Error::Parse(format!("walsh sequence must be 'walsh:k/N', got '{spec}'")))?;
                let k: usize = k.parse().map_err(|_| Error::Parse(format!("bad Walsh index in '{spec}'")))?;
                let n: usize = n.parse().map_err(|_| Error::Parse(format!("bad slot count in '{spec}'")))?;
                let total = match (duration, tau) {
                    (Some(d), _) => d,
                    (None, Some(t)) => t * n as f64,
                    _ => return Err(need("--duration or --tau")),
                };
                Self::walsh(k, total, n)
            }
            other => Err(Error::Parse(format!("unknown sequence family '{other}'"))),
        }
    }
}

impl fmt::Display for TimingPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} pulses, T_p = {:e} s)", self.label, self.pulse_count(), self.duration)
    }
}

/// Reverses the low `bits` bits of `j`.
fn bit_reverse(j: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        j.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Signs of the Paley-ordered Walsh function `w_k` on `slots` slots.
///
/// Bit `i` of `k` selects the Rademacher function that flips every
/// `slots / 2^(i+1)` slots, so `w_1` flips once at the midpoint and
/// `w_{slots-1}` is the Thue–Morse sequence.
pub fn walsh_signs(k: usize, slots: usize) -> Result<Vec<i8>> {
    if slots == 0 || !slots.is_power_of_two() {
        return Err(Error::Domain(format!("Walsh slot count must be a power of two, got {slots}")));
    }
    if k >= slots {
        return Err(Error::Domain(format!("Walsh index {k} out of range for {slots} slots")));
    }
    let bits = slots.trailing_zeros();
    Ok((0..slots)
        .map(|j| if (k & bit_reverse(j, bits)).count_ones() % 2 == 0 { 1 } else { -1 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn udd_single_pulse_is_echo() {
        let p = TimingPattern::udd(1, 2.0).unwrap();
        assert!(close(p.pulse_times(), &[1.0], 1e-15));
    }

    #[test]
    fn udd_two_pulses() {
        let p = TimingPattern::udd(2, 1.0).unwrap();
        assert!(close(p.pulse_times(), &[0.25, 0.75], 1e-15));
        assert_eq!(p.label(), "UDD2");
    }

    #[test]
    fn udd5_with_microsecond_first_interval() {
        let p = TimingPattern::udd_with_min_interval(5, 1e-6).unwrap();
        assert!((p.duration() - 14.93e-6).abs() < 0.01e-6);
        assert!((p.pulse_times()[0] - 1e-6).abs() < 1e-18);
        assert!((p.min_interval() - 1e-6).abs() < 1e-15);
    }

    #[test]
    fn udd_zero_pulses_is_free() {
        let p = TimingPattern::udd(0, 3.0).unwrap();
        assert_eq!(p.pulse_count(), 0);
        assert_eq!(p.duration(), 3.0);
    }

    #[test]
    fn udd_is_symmetric() {
        for n in 1..=12 {
            let p = TimingPattern::udd(n, 7.0).unwrap();
            let t = p.pulse_times();
            for j in 0..n {
                assert!((t[j] + t[n - 1 - j] - 7.0).abs() <= 1e-12 * 7.0);
            }
        }
    }

    #[test]
    fn cdd_small_levels() {
        let tau = 0.5;
        let echo = TimingPattern::cdd(1, tau).unwrap();
        assert_eq!(echo.pulse_times(), &[0.5]);
        assert_eq!(echo.duration(), 1.0);
        let cp = TimingPattern::cdd(2, tau).unwrap();
        assert_eq!(cp.pulse_times(), &[0.5, 1.5]);
        assert_eq!(cp.duration(), 2.0);
    }

    #[test]
    fn cdd4_grid() {
        let p = TimingPattern::cdd(4, 1e-6).unwrap();
        assert!((p.duration() - 16e-6).abs() < 1e-20);
        // ten interior flips; the eleventh pulse of the nested construction
        // falls on T_p and leaves y unchanged inside the cycle
        assert_eq!(p.pulse_count(), 10);
        assert_eq!(p.end_sign(), 1.0);
        assert!((p.min_interval() - 1e-6).abs() < 1e-20);
    }

    #[test]
    fn walsh_examples() {
        let echo = TimingPattern::walsh(1, 2.0, 2).unwrap();
        assert_eq!(echo.pulse_times(), &[1.0]);
        let cp = TimingPattern::walsh(3, 4.0, 4).unwrap();
        assert_eq!(cp.pulse_times(), &[1.0, 3.0]);
        let free = TimingPattern::walsh(0, 4.0, 4).unwrap();
        assert_eq!(free.pulse_count(), 0);
        assert!(matches!(TimingPattern::walsh(1, 1.0, 6), Err(Error::Domain(_))));
        assert!(matches!(TimingPattern::walsh(8, 1.0, 8), Err(Error::Domain(_))));
    }

    #[test]
    fn walsh_table_for_four_slots() {
        let table: Vec<Vec<i8>> = (0..4).map(|k| walsh_signs(k, 4).unwrap()).collect();
        assert_eq!(table[0], vec![1, 1, 1, 1]);
        assert_eq!(table[1], vec![1, 1, -1, -1]);
        assert_eq!(table[2], vec![1, -1, 1, -1]);
        assert_eq!(table[3], vec![1, -1, -1, 1]);
    }

    #[test]
    fn walsh_top_index_equals_cdd() {
        for q in 1..=6u32 {
            let n = 1usize << q;
            let tau = 1e-6;
            let w = TimingPattern::walsh(n - 1, n as f64 * tau, n).unwrap();
            let c = TimingPattern::cdd(q, tau).unwrap();
            assert_eq!(w.pulse_times(), c.pulse_times(), "q = {q}");
            assert_eq!(w.duration(), c.duration());
        }
    }

    #[test]
    fn concat_examples() {
        let f = TimingPattern::free(1.0).unwrap();
        let ff = f.concat(&f);
        assert_eq!(ff.pulse_count(), 0);
        assert_eq!(ff.duration(), 2.0);
        // echo ends at y = -1, so the second copy restarts with a flip
        let e = TimingPattern::cdd(1, 1.0).unwrap();
        let ee = e.concat(&e);
        assert_eq!(ee.pulse_times(), &[1.0, 2.0, 3.0]);
        assert_eq!(ee.duration(), 4.0);
        // an identity cycle composes by plain shifting
        let cp = TimingPattern::carr_purcell(1.0).unwrap();
        assert_eq!(cp.concat(&cp).pulse_times(), &[1.0, 3.0, 5.0, 7.0]);
    }

    #[test]
    fn repeat_matches_iterated_concat() {
        for base in [
            TimingPattern::cdd(1, 0.25).unwrap(),
            TimingPattern::cdd(3, 0.125).unwrap(),
            TimingPattern::udd(3, 1.0).unwrap(),
        ] {
            let mut acc = base.clone();
            for m in 2..=5 {
                acc = acc.concat(&base);
                let r = base.repeat(m).unwrap();
                assert!(close(r.pulse_times(), acc.pulse_times(), 1e-12));
                assert_eq!(r.duration(), acc.duration());
            }
        }
        let e = TimingPattern::cdd(1, 1.0).unwrap();
        assert_eq!(e.repeat(1).unwrap(), e);
        assert!(matches!(e.repeat(0), Err(Error::Domain(_))));
    }

    #[test]
    fn repeat_limit_is_enforced() {
        let p = TimingPattern::cdd(4, 1e-6).unwrap();
        assert!(matches!(p.repeat_with_limit(100, 500), Err(Error::Resource(_))));
        assert!(p.repeat_with_limit(50, 500).is_ok());
    }

    #[test]
    fn repeated_cdd4_is_walsh_with_paley_index_30() {
        let tau = 1e-6;
        let r = TimingPattern::cdd(4, tau).unwrap().repeat(2).unwrap();
        let w = TimingPattern::walsh(30, 32.0 * tau, 32).unwrap();
        assert!(close(r.pulse_times(), w.pulse_times(), 1e-12 * w.duration()));
    }

    #[test]
    fn min_interval_cases() {
        assert_eq!(TimingPattern::free(3.0).unwrap().min_interval(), 3.0);
        assert_eq!(TimingPattern::cdd(4, 0.5).unwrap().min_interval(), 0.5);
    }

    #[test]
    fn truncation() {
        let p = TimingPattern::udd_with_min_interval(5, 1e-6).unwrap();
        let t = p.truncate(2e-6).unwrap();
        assert_eq!(t.pulse_count(), 1);
        assert_eq!(t.duration(), 2e-6);
        assert_eq!(p.truncate(p.duration()).unwrap().pulse_times(), p.pulse_times());
        assert!(p.truncate(0.0).is_err());
        assert!(p.truncate(2.0 * p.duration()).is_err());
    }

    #[test]
    fn invalid_patterns_rejected() {
        assert!(TimingPattern::new(vec![0.5, 0.4], 1.0, "x").is_err());
        assert!(TimingPattern::new(vec![0.0], 1.0, "x").is_err());
        assert!(TimingPattern::new(vec![1.0], 1.0, "x").is_err());
        assert!(TimingPattern::new(vec![], 0.0, "x").is_err());
    }

    #[test]
    fn slot_signs_recover_walsh() {
        let w = TimingPattern::walsh(13, 16.0, 16).unwrap();
        assert_eq!(w.slot_signs(16).unwrap(), walsh_signs(13, 16).unwrap());
        assert!(TimingPattern::udd(3, 1.0).unwrap().slot_signs(16).is_none());
    }

    #[test]
    fn spec_strings() {
        let p = TimingPattern::from_spec("cdd:4", Some(1e-6), None).unwrap();
        assert_eq!(p.label(), "CDD4");
        let p = TimingPattern::from_spec("udd:5", Some(1e-6), None).unwrap();
        assert!((p.min_interval() - 1e-6).abs() < 1e-15);
        let p = TimingPattern::from_spec("walsh:3/4", Some(1.0), None).unwrap();
        assert_eq!(p.pulse_times(), &[1.0, 3.0]);
        let p = TimingPattern::from_spec("free", None, Some(35e-9)).unwrap();
        assert_eq!(p.duration(), 35e-9);
        let p = TimingPattern::from_spec("CP", Some(1.0), None).unwrap();
        assert_eq!(p.pulse_times(), &[1.0, 3.0]);
        assert!(matches!(TimingPattern::from_spec("xy4", Some(1.0), None), Err(Error::Parse(_))));
        assert!(matches!(TimingPattern::from_spec("cdd:4", None, None), Err(Error::Parse(_))));
        assert!(matches!(TimingPattern::from_spec("walsh:3", Some(1.0), None), Err(Error::Parse(_))));
    }

    #[test]
    fn doc_round_trip() {
        let p = TimingPattern::udd(4, 2.0).unwrap();
        let text = serde_json::to_string(&p.to_doc()).unwrap();
        let back = TimingPattern::from_doc(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
