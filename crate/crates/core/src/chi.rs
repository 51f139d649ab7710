//! Decoupling error `χ = ∫ S(ω)/(2πω²) F(ω) dω` for single, truncated and
//! m-fold repeated patterns.
//!
//! Repetition multiplies the integrand by the Dirichlet kernel
//! `D_m(ω) = sin²(mωT/2)/sin²(ωT/2)`. Direct integration places breakpoints
//! on the kernel nodes `2πk/(mT)`. For large `m` the kernel is replaced, above
//! a low-frequency window of a few hundred nodes, by its average
//! `1/(2sin²(ωT/2))` plus a Dirac comb of weight `2πm/T` at `ω_k = 2πk/T`:
//!
//! ```text
//! χ_m ≈ ∫_{ω_min}^{ω_b} h D_m + ∫_{ω_b}^{π/T} h/(2sin²(ωT/2))
//!       + Σ_k ∫_0^{π/T} [h(ω_k+δ) + h(ω_k−δ) − 2h(ω_k)] / (2sin²(Tδ/2)) dδ
//!       + (2πm/T) Σ_k h(ω_k)
//! ```
//!
//! with `h = S F/(2πω²)`. Dropping the first and last terms leaves the
//! m-independent plateau value.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{dirichlet_factor, repetition_sum, FilterKernel};
use crate::noise::NoiseSpectrum;
use crate::pulse::{PulseFilter, PulseShape};
use crate::quadrature::{compensated_sum, integrate, log_points, QuadConfig, QuadOutcome};
use crate::sequence::TimingPattern;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Direct,
    /// Comb approximation; `crossover_rel_diff` is the comb/direct mismatch
    /// at the crossover repeat count.
    Comb { crossover_rel_diff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub chi_total: f64,
    /// Same integral with bang-bang pulses.
    pub chi_bb: f64,
    /// Excess of `chi_total` over `chi_bb`, floored at zero.
    pub chi_pul: f64,
    /// Contribution from below `ω_c`.
    pub chi_low: f64,
    pub chi_high: f64,
    pub m: u64,
    pub coherence: f64,
    /// Summed quadrature error estimate for `chi_total`.
    pub error_bound: f64,
    pub method: Method,
}

impl ErrorBudget {
    pub fn zero(m: u64) -> Self {
        Self {
            chi_total: 0.0,
            chi_bb: 0.0,
            chi_pul: 0.0,
            chi_low: 0.0,
            chi_high: 0.0,
            m,
            coherence: 1.0,
            error_bound: 0.0,
            method: Method::Direct,
        }
    }

    fn from_parts(total: Parts, bb: Option<Parts>, m: u64, method: Method) -> Self {
        let chi_total = total.value.max(0.0);
        let chi_bb = bb.map_or(chi_total, |b| b.value.max(0.0));
        Self {
            chi_total,
            chi_bb,
            chi_pul: (chi_total - chi_bb).max(0.0),
            chi_low: total.low.max(0.0),
            chi_high: total.high.max(0.0),
            m,
            coherence: (-chi_total).exp(),
            error_bound: total.error,
            method,
        }
    }
}

/// Integration settings shared by all error evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiConfig {
    pub quad: QuadConfig,
    /// Repeat count above which the comb approximation is used.
    pub comb_crossover: u64,
    /// Kernel nodes integrated exactly below the comb region.
    pub comb_nodes: usize,
    /// Node budget for direct integration; beyond it the high-frequency
    /// cells switch to the comb treatment.
    pub max_direct_nodes: usize,
}

impl Default for ChiConfig {
    fn default() -> Self {
        Self {
            quad: QuadConfig::default(),
            comb_crossover: 10_000,
            comb_nodes: 256,
            max_direct_nodes: 1 << 18,
        }
    }
}

impl ChiConfig {
    pub fn with_quad(quad: QuadConfig) -> Self {
        Self { quad, ..Self::default() }
    }
}

const LOG_POINTS_PER_DECADE: f64 = 8.0;
/// Folded cell integrands are frozen below `δ = CELL_FREEZE·π/T`, where the
/// second difference would be lost to rounding.
const CELL_FREEZE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default)]
struct Parts {
    value: f64,
    error: f64,
    low: f64,
    high: f64,
    converged: bool,
}

impl Parts {
    fn from_outcome(out: &QuadOutcome, omega_c: f64, to_omega: impl Fn(f64) -> f64) -> Self {
        Self {
            value: out.value,
            error: out.error,
            low: out.partial(|u| to_omega(u) < omega_c),
            high: out.partial(|u| to_omega(u) >= omega_c),
            converged: out.converged,
        }
    }

    fn add(self, o: Parts) -> Parts {
        Parts {
            value: compensated_sum([self.value, o.value]),
            error: self.error + o.error,
            low: self.low + o.low,
            high: self.high + o.high,
            converged: self.converged && o.converged,
        }
    }

    fn empty() -> Self {
        Parts { converged: true, ..Default::default() }
    }

    fn check(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::Accuracy { estimate: self.value, error_bound: self.error })
        }
    }
}

/// Plateau-limit decomposition of a repeated pattern's error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParts {
    /// m-independent part: the plateau value.
    pub chi_inf: f64,
    pub chi_inf_low: f64,
    pub chi_inf_high: f64,
    /// Resonant growth per additional repeat, `(2π/T) Σ_k h(ω_k)`.
    pub growth_per_repeat: f64,
    pub error_bound: f64,
}

/// Evaluator for one (pattern, spectrum, pulse shape) combination.
pub struct ChiEngine {
    filter: PulseFilter,
    spec: NoiseSpectrum,
    cfg: ChiConfig,
    crossover: OnceLock<Result<f64>>,
}

impl ChiEngine {
    pub fn new(p: &TimingPattern, spec: &NoiseSpectrum, shape: &PulseShape, cfg: ChiConfig) -> Result<Self> {
        Ok(Self { filter: PulseFilter::new(p, shape)?, spec: *spec, cfg, crossover: OnceLock::new() })
    }

    pub fn filter(&self) -> &PulseFilter {
        &self.filter
    }

    pub fn spectrum(&self) -> &NoiseSpectrum {
        &self.spec
    }

    fn duration(&self) -> f64 {
        self.filter.kernel().duration()
    }

    fn finite_pulses(&self) -> bool {
        !self.filter.shape().is_bang_bang()
    }

    /// `h(ω) = S(ω) F(ω) / (2πω²)` with the total filter.
    pub fn integrand(&self, omega: f64) -> f64 {
        let s = self.spec.density(omega);
        if s == 0.0 {
            return 0.0;
        }
        s / (2.0 * PI) * self.filter.reduced_ff(omega)
    }

    fn integrand_bb(&self, omega: f64) -> f64 {
        let s = self.spec.density(omega);
        if s == 0.0 {
            return 0.0;
        }
        s / (2.0 * PI) * self.filter.kernel().y_tilde_sq(omega)
    }

    /// Error of the single pattern.
    pub fn single(&self) -> Result<ErrorBudget> {
        self.repeated(1)
    }

    /// Error of `m` back-to-back repetitions.
    pub fn repeated(&self, m: u64) -> Result<ErrorBudget> {
        if m == 0 {
            return Err(Error::Domain("repeat count must be at least 1".into()));
        }
        if self.spec.g == 0.0 {
            return Ok(ErrorBudget::zero(m));
        }
        if m > self.cfg.comb_crossover {
            let rel = self.crossover_check()?;
            let total = self.comb(m, &|w| self.integrand(w))?;
            let bb = if self.finite_pulses() { Some(self.comb(m, &|w| self.integrand_bb(w))?) } else { None };
            Ok(ErrorBudget::from_parts(total, bb, m, Method::Comb { crossover_rel_diff: rel }))
        } else {
            self.direct_budget(m)
        }
    }

    fn direct_budget(&self, m: u64) -> Result<ErrorBudget> {
        let total = self.direct(m, &|w| self.integrand(w))?;
        let bb = if self.finite_pulses() { Some(self.direct(m, &|w| self.integrand_bb(w))?) } else { None };
        Ok(ErrorBudget::from_parts(total, bb, m, Method::Direct))
    }

    /// Relative comb/direct mismatch at the crossover repeat count.
    pub fn crossover_check(&self) -> Result<f64> {
        self.crossover
            .get_or_init(|| {
                let m = self.cfg.comb_crossover.max(1);
                let h = |w: f64| self.integrand(w);
                let direct = self.direct(m, &h)?.value;
                let comb = self.comb(m, &h)?.value;
                let rel = if direct == 0.0 && comb == 0.0 { 0.0 } else { (comb - direct).abs() / direct.abs() };
                if rel > 0.10 {
                    return Err(Error::Consistency(format!(
                        "comb approximation ({comb:e}) and direct integration ({direct:e}) differ by {:.1}% at m = {m}",
                        100.0 * rel
                    )));
                }
                Ok(rel)
            })
            .clone()
    }

    /// The plateau limit and per-repeat resonant growth.
    pub fn asymptotic(&self) -> Result<AsymptoticParts> {
        if self.spec.g == 0.0 {
            return Ok(AsymptoticParts {
                chi_inf: 0.0,
                chi_inf_low: 0.0,
                chi_inf_high: 0.0,
                growth_per_repeat: 0.0,
                error_bound: 0.0,
            });
        }
        let h = |w: f64| self.integrand(w);
        let t = self.duration();
        let half = PI / t;
        let upper = self.spec.effective_upper();
        let smooth = self.smooth(&h, self.spec.omega_min, half.min(upper))?;
        let (cells, teeth) = if upper > half { self.cells(&h, 1, 1)? } else { (Parts::empty(), Parts::empty()) };
        let parts = smooth.add(cells);
        Ok(AsymptoticParts {
            chi_inf: parts.value,
            chi_inf_low: parts.low,
            chi_inf_high: parts.high,
            growth_per_repeat: teeth.value,
            error_bound: parts.error,
        })
    }

    /// Error of `m` repetitions followed by `tail` seconds of free evolution.
    pub fn repeated_with_tail(&self, m: u64, tail: f64) -> Result<f64> {
        if m == 0 {
            return Err(Error::Domain("repeat count must be at least 1".into()));
        }
        if !(tail >= 0.0) {
            return Err(Error::Domain(format!("tail duration must be non-negative, got {tail}")));
        }
        if tail == 0.0 {
            return Ok(self.repeated(m)?.chi_total);
        }
        let t = self.duration();
        let free = FilterKernel::new(&TimingPattern::free(tail)?);
        let mt = m as f64 * t;
        let h = |w: f64| {
            let s = self.spec.density(w);
            if s == 0.0 {
                return 0.0;
            }
            let (z, y) = self.filter.reduced(w);
            let r = repetition_sum(m as usize, w * t);
            let z = z * r + Complex64::from_polar(1.0, w * mt) * free.y_tilde(w);
            s / (2.0 * PI) * (z.norm_sqr() + (y * r).norm_sqr())
        };
        let upper = self.spec.effective_upper();
        let out = integrate(&h, &self.exact_breakpoints(m, self.spec.omega_min, upper), &self.cfg.quad);
        Ok(Parts::from_outcome(&out, self.spec.omega_c, |w| w).check()?.value)
    }

    fn direct(&self, m: u64, h: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Parts> {
        let t = self.duration();
        let upper = self.spec.effective_upper();
        let node = 2.0 * PI / (m as f64 * t);
        let budget = self.cfg.max_direct_nodes as f64;
        if upper / node <= budget {
            return self.exact(m, h, self.spec.omega_min, upper);
        }
        // Exact up to a cell boundary (2k+1)π/T inside the node budget.
        let k0 = ((budget / m as f64 - 1.0) / 2.0).floor();
        if k0 < 0.0 {
            return self.hybrid(m, h, budget * node);
        }
        let k0 = k0 as u64;
        let wb = (2 * k0 + 1) as f64 * PI / t;
        let exact = self.exact(m, h, self.spec.omega_min, wb)?;
        let (cells, teeth) = self.cells(h, k0 + 1, m)?;
        exact.add(cells).add(teeth).check()
    }

    fn comb(&self, m: u64, h: &(dyn Fn(f64) -> f64 + Sync)) -> Result<Parts> {
        let node = 2.0 * PI / (m as f64 * self.duration());
        self.hybrid(m, h, self.cfg.comb_nodes as f64 * node)
    }

    /// Exact kernel below `wb < π/T`, averaged kernel plus comb above.
    fn hybrid(&self, m: u64, h: &(dyn Fn(f64) -> f64 + Sync), wb: f64) -> Result<Parts> {
        let t = self.duration();
        let half = PI / t;
        let upper = self.spec.effective_upper();
        let wb = wb.min(half);
        let mut parts = Parts::empty();
        if wb > self.spec.omega_min {
            parts = parts.add(self.exact(m, h, self.spec.omega_min, wb.min(upper))?);
        }
        if upper > wb {
            parts = parts.add(self.smooth(h, wb.max(self.spec.omega_min), half.min(upper))?);
        }
        if upper > half {
            let (cells, teeth) = self.cells(h, 1, m)?;
            parts = parts.add(cells).add(teeth);
        }
        parts.check()
    }

    /// `∫_a^b h D_m` on kernel-node breakpoints.
    fn exact(&self, m: u64, h: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64) -> Result<Parts> {
        if b <= a {
            return Ok(Parts::empty());
        }
        let t = self.duration();
        let f = |w: f64| {
            let v = h(w);
            if v == 0.0 {
                0.0
            } else {
                v * dirichlet_factor(m as usize, t, w)
            }
        };
        let out = integrate(&f, &self.exact_breakpoints(m, a, b), &self.cfg.quad);
        Parts::from_outcome(&out, self.spec.omega_c, |w| w).check()
    }

    fn exact_breakpoints(&self, m: u64, a: f64, b: f64) -> Vec<f64> {
        let node = 2.0 * PI / (m as f64 * self.duration());
        let mut pts = vec![a, b];
        let first = (a / node).floor() * node + node;
        let log_end = first.min(b);
        if log_end > a {
            let count = ((log_end / a).log10() * LOG_POINTS_PER_DECADE).ceil().max(1.0) as usize;
            pts.extend(log_points(a, log_end, count));
        }
        if first < b {
            let k_lo = (first / node).round() as u64;
            let k_hi = (b / node).floor() as u64;
            let count = k_hi.saturating_sub(k_lo) + 1;
            let stride = (count as f64 / self.cfg.max_direct_nodes as f64).ceil().max(1.0) as u64;
            let mut k = k_lo;
            while k <= k_hi {
                pts.push(k as f64 * node);
                k += stride;
            }
        }
        self.finish_breakpoints(pts, a, b)
    }

    fn finish_breakpoints(&self, mut pts: Vec<f64>, a: f64, b: f64) -> Vec<f64> {
        for edge in [self.spec.omega_c, self.spec.omega_max] {
            if edge > a && edge < b {
                pts.push(edge);
            }
        }
        pts.retain(|w| *w >= a && *w <= b);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * y.abs());
        pts
    }

    /// `∫_a^b h/(2sin²(ωT/2))` for `b ≤ π/T`.
    fn smooth(&self, h: &(dyn Fn(f64) -> f64 + Sync), a: f64, b: f64) -> Result<Parts> {
        if b <= a {
            return Ok(Parts::empty());
        }
        let t = self.duration();
        let f = |w: f64| {
            let v = h(w);
            if v == 0.0 {
                return 0.0;
            }
            let s = (0.5 * w * t).sin();
            v / (2.0 * s * s)
        };
        let count = ((b / a).log10() * LOG_POINTS_PER_DECADE).ceil().max(1.0) as usize;
        let pts = self.finish_breakpoints(log_points(a, b, count), a, b);
        let out = integrate(&f, &pts, &self.cfg.quad);
        Parts::from_outcome(&out, self.spec.omega_c, |w| w).check()
    }

    /// Folded resonance cells `k ≥ k_first` and their comb teeth for `m`.
    fn cells(&self, h: &(dyn Fn(f64) -> f64 + Sync), k_first: u64, m: u64) -> Result<(Parts, Parts)> {
        let t = self.duration();
        let width = PI / t;
        let upper = self.spec.effective_upper();
        // cells whose lower edge (2k−1)π/T lies below the upper limit
        let k_last = ((upper / width + 1.0) / 2.0).ceil() as u64;
        if k_last < k_first {
            return Ok((Parts::empty(), Parts::empty()));
        }
        let centers: Vec<f64> = (k_first..=k_last).map(|k| 2.0 * PI * k as f64 / t).collect();
        let at_center: Vec<f64> = centers.iter().map(|&w| h(w)).collect();
        let freeze = CELL_FREEZE * width;
        let count = centers.len();
        let f = |u: f64| {
            let idx = ((u / width).floor() as usize).min(count - 1);
            let d = (u - idx as f64 * width).max(freeze);
            let wk = centers[idx];
            let second = h(wk + d) + h(wk - d) - 2.0 * at_center[idx];
            let s = (0.5 * t * d).sin();
            second / (2.0 * s * s)
        };
        let mut pts = Vec::with_capacity(4 * count + 1);
        for (idx, &wk) in centers.iter().enumerate() {
            let base = idx as f64 * width;
            pts.push(base);
            pts.push(base + freeze);
            pts.push(base + 0.01 * width);
            for edge in [self.spec.omega_c, self.spec.omega_max, self.spec.omega_min] {
                let d = (edge - wk).abs();
                if d > freeze && d < width {
                    pts.push(base + d);
                }
            }
        }
        pts.push(count as f64 * width);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let out = integrate(&f, &pts, &self.cfg.quad);
        let cell_of = |u: f64| centers[((u / width).floor() as usize).min(count - 1)];
        let cells = Parts::from_outcome(&out, self.spec.omega_c, cell_of).check()?;

        let weight = 2.0 * PI * m as f64 / t;
        let tooth: Vec<f64> = at_center.iter().map(|v| weight * v).collect();
        let low = compensated_sum(centers.iter().zip(&tooth).filter(|(w, _)| **w < self.spec.omega_c).map(|(_, v)| *v));
        let value = compensated_sum(tooth.iter().copied());
        let teeth = Parts { value, error: 0.0, low, high: value - low, converged: true };
        Ok((cells, teeth))
    }
}

/// Decoupling error of a single pattern.
pub fn chi(p: &TimingPattern, spec: &NoiseSpectrum, shape: &PulseShape, quad: &QuadConfig) -> Result<ErrorBudget> {
    ChiEngine::new(p, spec, shape, ChiConfig::with_quad(*quad))?.single()
}

/// Decoupling error of `m` repetitions of `p`.
pub fn chi_repeated(
    p: &TimingPattern,
    m: u64,
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    cfg: &ChiConfig,
) -> Result<ErrorBudget> {
    ChiEngine::new(p, spec, shape, *cfg)?.repeated(m)
}

/// Error accumulated up to readout time `t` inside `p`.
pub fn chi_during(
    p: &TimingPattern,
    t: f64,
    spec: &NoiseSpectrum,
    shape: &PulseShape,
    quad: &QuadConfig,
) -> Result<ErrorBudget> {
    let cut = p.truncate(t)?;
    chi(&cut, spec, shape, quad)
}
