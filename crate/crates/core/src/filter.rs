//! Bang-bang filter functions.
//!
//! `ỹ_p(ω) = ω⁻¹ Σ_j (−1)^j [e^{iωt_j} − e^{iωt_{j+1}}]` and
//! `F_p(ω) = ω² |ỹ_p(ω)|²`. Everything is evaluated in time units of `T_p`
//! (`x = ωT_p`, `u_j = t_j/T_p`). For `x < 1` the phasor sum is replaced by
//! its Taylor series in the moments of the switching function, which keeps
//! the high-order zero at `ω = 0` intact; moments that vanish to working
//! precision are set to exactly zero.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::compensated_sum;
use crate::sequence::TimingPattern;

const TAYLOR_TERMS: usize = 34;
/// `ωT_p` below which the moment series is used.
pub const TAYLOR_THRESHOLD: f64 = 1.0;

/// A pattern prepared for repeated filter evaluation.
#[derive(Debug, Clone)]
pub struct FilterKernel {
    duration: f64,
    /// `u_j = t_j / T_p`
    u: Vec<f64>,
    /// `(−1)^{n+1}`
    tail_sign: f64,
    /// `M_k / k!` for `k = 1..=TAYLOR_TERMS`, index `k - 1`.
    taylor: Vec<f64>,
}

impl FilterKernel {
    pub fn new(p: &TimingPattern) -> Self {
        let duration = p.duration();
        let u: Vec<f64> = p.pulse_times().iter().map(|t| t / duration).collect();
        let n = u.len();
        let tail_sign = if n % 2 == 0 { -1.0 } else { 1.0 };
        let mut powers = u.clone();
        let mut taylor = Vec::with_capacity(TAYLOR_TERMS);
        let mut factorial = 1.0;
        for k in 1..=TAYLOR_TERMS {
            if k > 1 {
                for (pw, &x) in powers.iter_mut().zip(&u) {
                    *pw *= x;
                }
            }
            factorial *= k as f64;
            // M_k = (−1)^{n+1} + 2 Σ_j (−1)^j u_j^k
            let terms = powers
                .iter()
                .enumerate()
                .map(|(j, &pw)| if j % 2 == 0 { -2.0 * pw } else { 2.0 * pw });
            let moment = compensated_sum(std::iter::once(tail_sign).chain(terms));
            let scale = 1.0 + 2.0 * powers.iter().sum::<f64>();
            let floor = (8.0 + 4.0 * k as f64) * f64::EPSILON * scale;
            let moment = if moment.abs() <= floor { 0.0 } else { moment };
            taylor.push(moment / factorial);
        }
        Self { duration, u, tail_sign, taylor }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn pulse_count(&self) -> usize {
        self.u.len()
    }

    /// `ỹ` in units of `T_p` as a function of `x = ωT_p`.
    fn y_normalized(&self, x: f64) -> Complex64 {
        if x.abs() < TAYLOR_THRESHOLD {
            // i Σ_k c_k (ix)^{k-1}
            let z = Complex64::new(0.0, x);
            let mut acc = Complex64::new(0.0, 0.0);
            for &c in self.taylor.iter().rev() {
                acc = acc * z + c;
            }
            Complex64::new(0.0, 1.0) * acc
        } else {
            self.omega_y_normalized(x) / x
        }
    }

    /// `ωỹ(ω) = 1 + 2 u_p(ω) + (−1)^{n+1} e^{iωT_p}`.
    fn omega_y_normalized(&self, x: f64) -> Complex64 {
        let (s, c) = x.sin_cos();
        Complex64::new(1.0, 0.0) + 2.0 * self.u_normalized(x) + self.tail_sign * Complex64::new(c, s)
    }

    /// `u_p(ω) = Σ_ℓ (−1)^ℓ e^{iωt_ℓ}`.
    fn u_normalized(&self, x: f64) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (j, &u) in self.u.iter().enumerate() {
            let (s, c) = (x * u).sin_cos();
            if j % 2 == 0 {
                re -= c;
                im -= s;
            } else {
                re += c;
                im += s;
            }
        }
        Complex64::new(re, im)
    }

    /// `ỹ_p(ω)`, units of seconds.
    pub fn y_tilde(&self, omega: f64) -> Complex64 {
        self.y_normalized(omega * self.duration) * self.duration
    }

    /// `|ỹ_p(ω)|²`.
    pub fn y_tilde_sq(&self, omega: f64) -> f64 {
        self.y_tilde(omega).norm_sqr()
    }

    /// `F_p(ω)`.
    pub fn filter(&self, omega: f64) -> f64 {
        let x = omega * self.duration;
        if x.abs() < TAYLOR_THRESHOLD {
            x * x * self.y_normalized(x).norm_sqr()
        } else {
            self.omega_y_normalized(x).norm_sqr()
        }
    }

    /// `u_p(ω) = Σ_ℓ (−1)^ℓ e^{iωt_ℓ}`.
    pub fn pulse_phasor_sum(&self, omega: f64) -> Complex64 {
        self.u_normalized(omega * self.duration)
    }
}

pub fn y_tilde(p: &TimingPattern, omega: f64) -> Complex64 {
    FilterKernel::new(p).y_tilde(omega)
}

pub fn filter_fn(p: &TimingPattern, omega: f64) -> f64 {
    FilterKernel::new(p).filter(omega)
}

/// What a [`FilterEvaluation`] holds.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterValues {
    YTilde(Vec<Complex64>),
    Filter(Vec<f64>),
}

/// Filter data sampled on an ascending frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEvaluation {
    pub omega: Vec<f64>,
    pub values: FilterValues,
}

impl FilterEvaluation {
    pub fn y_tilde(p: &TimingPattern, grid: &[f64]) -> Result<Self> {
        check_grid(grid)?;
        let k = FilterKernel::new(p);
        Ok(Self {
            omega: grid.to_vec(),
            values: FilterValues::YTilde(grid.par_iter().map(|&w| k.y_tilde(w)).collect()),
        })
    }

    pub fn filter(p: &TimingPattern, grid: &[f64]) -> Result<Self> {
        check_grid(grid)?;
        let k = FilterKernel::new(p);
        Ok(Self {
            omega: grid.to_vec(),
            values: FilterValues::Filter(grid.par_iter().map(|&w| k.filter(w)).collect()),
        })
    }

    /// `F` values, derived from `ỹ` when necessary.
    pub fn filter_values(&self) -> Vec<f64> {
        match &self.values {
            FilterValues::Filter(v) => v.clone(),
            FilterValues::YTilde(y) => self.omega.iter().zip(y).map(|(w, y)| w * w * y.norm_sqr()).collect(),
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|w| !(*w >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("frequency grid must be non-negative and strictly ascending".into()));
    }
    Ok(())
}

/// `ỹ_{p1+p2}(ω) = ỹ_{p1}(ω) + e^{iωT_{p1}} ỹ_{p2}(ω)`.
pub fn combine(y1: Complex64, y2: Complex64, t_p1: f64, omega: f64) -> Complex64 {
    let (s, c) = (omega * t_p1).sin_cos();
    y1 + Complex64::new(c, s) * y2
}

/// `sin²(mωT_p/2) / sin²(ωT_p/2)`, equal to `m²` at `ω = 2πk/T_p`.
pub fn dirichlet_factor(m: usize, t_p: f64, omega: f64) -> f64 {
    let r = dirichlet_ratio(m, 0.5 * omega * t_p);
    r * r
}

/// `|sin(m x) / sin(x)|` with the removable singularities at `x = kπ`.
fn dirichlet_ratio(m: usize, x: f64) -> f64 {
    if m <= 1 {
        return 1.0;
    }
    let mf = m as f64;
    let d = x - (x / PI).round() * PI;
    if (mf * d).abs() < 1e-5 {
        mf * (1.0 - (mf * mf - 1.0) * d * d / 6.0)
    } else {
        ((mf * d).sin() / d.sin()).abs()
    }
}

/// `Σ_{l=0}^{m-1} e^{ilθ}`, stable near `θ = 2πk`.
pub fn repetition_sum(m: usize, theta: f64) -> Complex64 {
    if m == 0 {
        return Complex64::new(0.0, 0.0);
    }
    let mf = m as f64;
    let half = 0.5 * theta;
    let k = (half / PI).round();
    let d = half - k * PI;
    // sin(m·half)/sin(half) = (−1)^{(m−1)k} sin(m d)/sin(d)
    let ratio = if (mf * d).abs() < 1e-5 {
        mf * (1.0 - (mf * mf - 1.0) * d * d / 6.0)
    } else {
        (mf * d).sin() / d.sin()
    };
    let parity = if ((m - 1) as f64 * k).rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
    let (s, c) = ((mf - 1.0) * half).sin_cos();
    Complex64::new(c, s) * (parity * ratio)
}

/// Leading low-frequency behaviour `ỹ_p(ω) ≈ A_bb ω^{α_p}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuppressionOrder {
    pub alpha: u32,
    pub a_bb: Complex64,
    /// Raw least-squares slope of `ln F` against `ln ω`.
    pub slope: f64,
    /// `|slope − 2(α_p + 1)|`
    pub residual: f64,
}

const ORDER_FIT_POINTS: usize = 41;

/// Fits `F_p ∝ ω^{2(α_p+1)}` on `ω T_p ∈ [1e-4, 1e-2]`.
pub fn suppression_order(p: &TimingPattern) -> Result<SuppressionOrder> {
    let k = FilterKernel::new(p);
    let t = p.duration();
    let (lo, hi) = (1e-4 / t, 1e-2 / t);
    let pts: Vec<(f64, f64)> = (0..ORDER_FIT_POINTS)
        .map(|i| {
            let w = lo * (hi / lo).powf(i as f64 / (ORDER_FIT_POINTS - 1) as f64);
            (w.ln(), k.filter(w).ln())
        })
        .collect();
    if pts.iter().any(|(_, f)| !f.is_finite()) {
        return Err(Error::NotPowerLaw { slope: f64::NAN, residual: f64::INFINITY });
    }
    let (slope, _, rms) = least_squares(&pts);
    let alpha_f = (slope / 2.0 - 1.0).round().max(0.0);
    let residual = (slope - 2.0 * (alpha_f + 1.0)).abs();
    if residual > 0.1 || rms > 0.05 {
        return Err(Error::NotPowerLaw { slope, residual: residual.max(rms) });
    }
    let alpha = alpha_f as u32;
    let at = |w: f64| k.y_tilde(w) / w.powi(alpha as i32);
    let a_bb = 2.0 * at(lo) - at(2.0 * lo);
    Ok(SuppressionOrder { alpha, a_bb, slope, residual })
}

/// Slope, intercept and RMS residual of a straight-line fit.
pub(crate) fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    (slope, intercept, rms)
}

/// Location and height of the passband maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassbandPeak {
    pub omega: f64,
    pub value: f64,
}

const PASSBAND_POINTS_PER_DECADE: f64 = 16_384.0;

/// Default search band `[0.1/T_p, 2π/τ_min]`.
pub fn default_passband(p: &TimingPattern) -> (f64, f64) {
    (0.1 / p.duration(), 2.0 * PI / p.min_interval())
}

/// Global maximum of `F_p` over `band` (default band when `None`).
pub fn passband_max(p: &TimingPattern, band: Option<(f64, f64)>) -> Result<PassbandPeak> {
    let (lo, hi) = band.unwrap_or_else(|| default_passband(p));
    let limit = 4.0 * PI / p.min_interval();
    if !(lo > 0.0 && hi > lo && hi <= limit * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!(
            "passband search band [{lo:e}, {hi:e}] must lie within (0, {limit:e}]"
        )));
    }
    let k = FilterKernel::new(p);
    let decades = (hi / lo).log10();
    let count = (PASSBAND_POINTS_PER_DECADE * decades).ceil().max(16.0) as usize;
    let ratio = (hi / lo).ln() / count as f64;
    let grid: Vec<f64> = (0..=count).map(|i| lo * (ratio * i as f64).exp()).collect();
    let values: Vec<f64> = grid.par_iter().map(|&w| k.filter(w)).collect();
    let (best, _) = values
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(count)];
    let (omega, value) = golden_max(|w| k.filter(w), a, b);
    if value >= values[best] {
        Ok(PassbandPeak { omega, value })
    } else {
        Ok(PassbandPeak { omega: grid[best], value: values[best] })
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a) <= 1e-14 * b.abs() {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let w = 0.5 * (a + b);
    (w, f(w))
}
