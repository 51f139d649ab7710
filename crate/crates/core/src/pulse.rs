//! Finite-width pulses in the generalized (two-quadrature) filter function.
//!
//! The total filter is `F(ω) = |r_y(ω)|² + |r_z(ω)|²` with
//!
//! ```text
//! r_z = ωỹ_p + [2cos(ωτ_π/2) − 2 − e^{−iωτ_π/2} r_z^pul] u_p
//! r_y = −e^{−iωτ_π/2} r_y^pul u_p,          u_p = Σ_ℓ (−1)^ℓ e^{iωt_ℓ}
//! ```
//!
//! Pulse centres are the pattern's pulse times. The removable poles of the
//! per-pulse quadratures at `Ω = π/τ_π` (and `Ω/2` for the DCG) are handled
//! by a local expansion.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterKernel;
use crate::sequence::TimingPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    BangBang,
    PrimitiveRect,
    /// Three-segment first-order dynamically corrected gate.
    Dcg3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape {
    pub kind: PulseKind,
    /// π-pulse duration; zero exactly for bang-bang.
    pub tau_pi: f64,
}

impl PulseShape {
    #[allow(non_upper_case_globals)]
    pub const BangBang: PulseShape = PulseShape { kind: PulseKind::BangBang, tau_pi: 0.0 };

    pub fn primitive(tau_pi: f64) -> Result<Self> {
        Self::finite(PulseKind::PrimitiveRect, tau_pi)
    }

    pub fn dcg(tau_pi: f64) -> Result<Self> {
        Self::finite(PulseKind::Dcg3, tau_pi)
    }

    fn finite(kind: PulseKind, tau_pi: f64) -> Result<Self> {
        if !(tau_pi.is_finite() && tau_pi > 0.0) {
            return Err(Error::Domain(format!("pulse duration must be positive, got {tau_pi}")));
        }
        Ok(Self { kind, tau_pi })
    }

    pub fn is_bang_bang(&self) -> bool {
        self.kind == PulseKind::BangBang
    }

    /// `Ω = π/τ_π`.
    pub fn rabi(&self) -> f64 {
        PI / self.tau_pi
    }

    /// Time occupied by one pulse: `τ_π`, or `4τ_π` for the DCG.
    pub fn footprint(&self) -> f64 {
        match self.kind {
            PulseKind::BangBang => 0.0,
            PulseKind::PrimitiveRect => self.tau_pi,
            PulseKind::Dcg3 => 4.0 * self.tau_pi,
        }
    }

    /// Parses `bb`, `primitive:<tau_pi>` or `dcg:<tau_pi>`.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let spec = spec.trim().to_ascii_lowercase();
        let (kind, arg) = match spec.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (spec.as_str(), None),
        };
        let width = || -> Result<f64> {
            arg.ok_or_else(|| Error::Parse(format!("pulse '{spec}' needs a duration")))?
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad pulse duration in '{spec}'")))
        };
        match kind {
            "bb" | "bang-bang" | "ideal" => Ok(Self::BangBang),
            "primitive" | "prim" => Self::primitive(width()?),
            "dcg" => Self::dcg(width()?),
            other => Err(Error::Parse(format!("unknown pulse kind '{other}'"))),
        }
    }

    pub fn to_spec(&self) -> String {
        match self.kind {
            PulseKind::BangBang => "bb".into(),
            PulseKind::PrimitiveRect => format!("primitive:{:e}", self.tau_pi),
            PulseKind::Dcg3 => format!("dcg:{:e}", self.tau_pi),
        }
    }
}

/// `Σ_k e^{i a_k ω τ}` with its first two derivatives.
struct PhaseSum<'a> {
    multiples: &'a [f64],
    tau: f64,
}

impl PhaseSum<'_> {
    fn value(&self, w: f64) -> Complex64 {
        self.multiples.iter().map(|a| Complex64::from_polar(1.0, a * w * self.tau)).sum()
    }

    fn derivatives(&self, w: f64) -> (Complex64, Complex64) {
        let mut d1 = Complex64::new(0.0, 0.0);
        let mut d2 = Complex64::new(0.0, 0.0);
        for a in self.multiples {
            let at = a * self.tau;
            let e = Complex64::from_polar(1.0, at * w);
            d1 += Complex64::new(0.0, at) * e;
            d2 -= at * at * e;
        }
        (d1, d2)
    }

    /// `c(ω)/(ω² − ω0²)`, where `c(ω0) = 0`.
    fn over_pole(&self, w: f64, w0: f64, window: f64) -> Complex64 {
        let delta = w - w0;
        if delta.abs() < window {
            let (d1, d2) = self.derivatives(w0);
            (d1 + d2 * (0.5 * delta)) / (w + w0)
        } else {
            self.value(w) / ((w - w0) * (w + w0))
        }
    }
}

const PRIMITIVE_PHASES: [f64; 2] = [1.0, 0.0];
const DCG_C1: [f64; 4] = [4.0, 3.0, 1.0, 0.0];
const DCG_C2: [f64; 2] = [3.0, 1.0];
const POLE_WINDOW: f64 = 1e-6;

/// Per-pulse quadratures `(r_z^pul, r_y^pul)`; zero for bang-bang.
pub fn pulse_quadratures(shape: &PulseShape, omega: f64) -> (Complex64, Complex64) {
    let (qz, qy) = reduced_pulse_quadratures(shape, omega);
    (qz * omega, qy * omega)
}

/// `(r_z^pul/ω, r_y^pul/ω)`.
fn reduced_pulse_quadratures(shape: &PulseShape, omega: f64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    if shape.is_bang_bang() {
        return (zero, zero);
    }
    let big = shape.rabi();
    let window = POLE_WINDOW * big;
    let i_big = Complex64::new(0.0, big);
    match shape.kind {
        PulseKind::PrimitiveRect => {
            let q = PhaseSum { multiples: &PRIMITIVE_PHASES, tau: shape.tau_pi }.over_pole(omega, big, window);
            (q * omega, i_big * q)
        }
        PulseKind::Dcg3 => {
            let q1 = PhaseSum { multiples: &DCG_C1, tau: shape.tau_pi }.over_pole(omega, big, window);
            let q2 = PhaseSum { multiples: &DCG_C2, tau: shape.tau_pi }.over_pole(omega, 0.5 * big, window);
            let z = omega * shape.tau_pi;
            let y_part = if z < DCG_SERIES_LIMIT { dcg_y_series(z, shape.tau_pi) } else { q1 - q2 * 0.5 };
            ((q1 - q2) * omega, i_big * y_part)
        }
        PulseKind::BangBang => (zero, zero),
    }
}

const DCG_SERIES_LIMIT: f64 = 0.3;

/// `c₁/(ω²−Ω²) − c₂/(2(ω²−Ω²/4))` for small `z = ωτ_π`.
///
/// The two terms agree to O(z²). With `P_k = Σ a^k` over each phase sum, the
/// combined numerator times `τ²` is
/// `Σ_k (iz)^k/k! [z²(2P₁ₖ − P₂ₖ) − π²(P₁ₖ/2 − P₂ₖ)]`.
fn dcg_y_series(z: f64, tau: f64) -> Complex64 {
    let z2 = z * z;
    let mut num = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    for k in 0..40 {
        let p1: f64 = DCG_C1.iter().map(|a| a.powi(k)).sum();
        let p2: f64 = DCG_C2.iter().map(|a| a.powi(k)).sum();
        num += term * (z2 * (2.0 * p1 - p2) - PI * PI * (0.5 * p1 - p2));
        term *= Complex64::new(0.0, z) / (k + 1) as f64;
    }
    let den = 2.0 * (z2 - PI * PI) * (z2 - 0.25 * PI * PI);
    num * (tau * tau / den)
}

/// A pattern and pulse shape prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct PulseFilter {
    kernel: FilterKernel,
    shape: PulseShape,
}

impl PulseFilter {
    /// Checks that pulse footprints fit inside every interval.
    pub fn new(p: &TimingPattern, shape: &PulseShape) -> Result<Self> {
        if !shape.is_bang_bang() {
            let foot = shape.footprint();
            let mut prev = 0.0;
            for (j, &t) in p.pulse_times().iter().chain(std::iter::once(&p.duration())).enumerate() {
                if t - prev <= foot {
                    return Err(Error::Precondition(format!(
                        "interval {} of {} ({:e} s, from {prev:e} to {t:e}) does not exceed the pulse footprint {foot:e} s",
                        j + 1,
                        p.label(),
                        t - prev
                    )));
                }
                prev = t;
            }
        }
        Ok(Self { kernel: FilterKernel::new(p), shape: *shape })
    }

    pub fn kernel(&self) -> &FilterKernel {
        &self.kernel
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    /// `(r_z/ω, r_y/ω)`.
    pub fn reduced(&self, omega: f64) -> (Complex64, Complex64) {
        let y = self.kernel.y_tilde(omega);
        if self.shape.is_bang_bang() {
            return (y, Complex64::new(0.0, 0.0));
        }
        let (pz, py) = reduced_pulse_quadratures(&self.shape, omega);
        let u = self.kernel.pulse_phasor_sum(omega);
        let half = 0.5 * omega * self.shape.tau_pi;
        let back = Complex64::from_polar(1.0, -half);
        // (2cos(ωτ/2) − 2)/ω = −4 sin²(ωτ/4)/ω
        let quarter = 0.25 * self.shape.tau_pi;
        let cos_term = -4.0 * (omega * quarter).sin() * sinc(omega * quarter) * quarter;
        let z = y + (cos_term - back * pz) * u;
        let yq = -(back * py) * u;
        (z, yq)
    }

    /// `(r_z, r_y)`.
    pub fn quadratures(&self, omega: f64) -> (Complex64, Complex64) {
        let (z, y) = self.reduced(omega);
        (z * omega, y * omega)
    }

    /// `F(ω) = |r_y|² + |r_z|²`; identical to `F_p` for bang-bang.
    pub fn total_ff(&self, omega: f64) -> f64 {
        if self.shape.is_bang_bang() {
            return self.kernel.filter(omega);
        }
        let (z, y) = self.reduced(omega);
        omega * omega * (z.norm_sqr() + y.norm_sqr())
    }

    /// `F(ω)/ω²`, the weight in the overlap integral.
    pub fn reduced_ff(&self, omega: f64) -> f64 {
        let (z, y) = self.reduced(omega);
        z.norm_sqr() + y.norm_sqr()
    }

    /// Pulse-induced part of the control vector, `(r_z − ωỹ_p, r_y)`.
    pub fn pulse_part(&self, omega: f64) -> (Complex64, Complex64) {
        let (z, y) = self.quadratures(omega);
        (z - omega * self.kernel.y_tilde(omega), y)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

pub fn total_quadratures(p: &TimingPattern, shape: &PulseShape, omega: f64) -> Result<(Complex64, Complex64)> {
    Ok(PulseFilter::new(p, shape)?.quadratures(omega))
}

pub fn total_ff(p: &TimingPattern, shape: &PulseShape, omega: f64) -> Result<f64> {
    Ok(PulseFilter::new(p, shape)?.total_ff(omega))
}

/// Leading pulse-error term `F_pul ≈ |A_pul|² ω^{2(α_pul+1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseOrder {
    pub alpha_pul: u32,
    /// Closed-form prefactor for the shape.
    pub a_pul: Complex64,
    /// Prefactor extracted from the dominant pulse-induced quadrature.
    pub a_pul_fit: Complex64,
    /// Set when `|a_pul_fit|` and `|a_pul|` differ by more than 10%.
    pub warning: Option<String>,
}

/// Closed-form `(α_pul, A_pul)` with a low-frequency fit alongside.
pub fn pulse_order(p: &TimingPattern, shape: &PulseShape) -> Result<PulseOrder> {
    let t = p.duration();
    let tau = shape.tau_pi;
    let (alpha_pul, a_pul) = match shape.kind {
        PulseKind::BangBang => {
            return Err(Error::Domain("bang-bang pulses have no pulse-error order".into()));
        }
        PulseKind::PrimitiveRect => (1u32, Complex64::new(-t * tau / PI, 0.0)),
        PulseKind::Dcg3 => (2u32, Complex64::new(0.0, -2.0 * t * tau * tau / (1.0 + 1.0 / (PI * PI)))),
    };
    let pf = PulseFilter::new(p, shape)?;
    let w0 = 1e-4 / t.max(tau);
    let dominant = |w: f64| {
        let (z, y) = pf.pulse_part(w);
        let v = if y.norm() >= z.norm() { y } else { z };
        v / w.powi(alpha_pul as i32 + 1)
    };
    let a_pul_fit = 2.0 * dominant(w0) - dominant(2.0 * w0);
    let mismatch = (a_pul_fit.norm() - a_pul.norm()).abs() / a_pul.norm();
    let warning = (mismatch > 0.1).then(|| {
        format!(
            "fitted |A_pul| = {:e} differs from closed form {:e} by {:.1}%",
            a_pul_fit.norm(),
            a_pul.norm(),
            100.0 * mismatch
        )
    });
    Ok(PulseOrder { alpha_pul, a_pul, a_pul_fit, warning })
}
