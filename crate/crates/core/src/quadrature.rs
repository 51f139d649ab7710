//! Adaptive Gauss–Kronrod quadrature over a fixed set of breakpoints.
//!
//! The integrands handled here oscillate on a scale set by the caller (the
//! Dirichlet-kernel nodes, the cutoff frequency, log-spaced decades at low
//! frequency), so the caller supplies the initial segmentation and the
//! engine only refines. Segment values are evaluated in parallel, but every
//! decision depends only on the segment data, and the final value is a
//! compensated sum in ascending segment order, so results do not depend on
//! the thread count.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_980_225,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss 10-point weights for the nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Tolerances and budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadConfig {
    pub epsrel: f64,
    pub epsabs: f64,
    /// Bisections allowed on top of the initial segmentation.
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            epsrel: 1e-6,
            epsabs: 1e-18,
            max_subdivisions: 200_000,
        }
    }
}

/// One integrated piece of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub a: f64,
    pub b: f64,
    pub value: f64,
    pub error: f64,
}

/// Result of an adaptive integration.
#[derive(Debug, Clone)]
pub struct QuadOutcome {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    /// Final pieces in ascending order of their left endpoint.
    pub pieces: Vec<Piece>,
}

impl QuadOutcome {
    /// Compensated sum of the pieces whose midpoint satisfies `pred`.
    pub fn partial(&self, pred: impl Fn(f64) -> bool) -> f64 {
        compensated_sum(
            self.pieces
                .iter()
                .filter(|p| pred(0.5 * (p.a + p.b)))
                .map(|p| p.value),
        )
    }
}

/// Neumaier-compensated summation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// 21-point Gauss–Kronrod rule on `[a, b]` with the QUADPACK error estimate.
pub fn gk21<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Piece { a, b, value, error: err }
}

struct Ranked(Piece);

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .error
            .total_cmp(&other.0.error)
            .then_with(|| other.0.a.total_cmp(&self.0.a))
    }
}

const BATCH: usize = 32;

/// Integrates `f` over `[breakpoints[0], breakpoints.last()]`.
///
/// Breakpoints must be ascending; zero-width segments are skipped. The
/// worst pieces are bisected in batches until the summed error estimate
/// falls below `max(epsabs, epsrel * |value|)` or the budget runs out.
pub fn integrate<F>(f: &F, breakpoints: &[f64], cfg: &QuadConfig) -> QuadOutcome
where
    F: Fn(f64) -> f64 + Sync + ?Sized,
{
    let segments: Vec<(f64, f64)> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect();
    let initial: Vec<Piece> = segments
        .par_iter()
        .map(|&(a, b)| gk21(f, a, b))
        .collect();

    let mut done: Vec<Piece> = Vec::new();
    let mut heap: BinaryHeap<Ranked> = initial.into_iter().map(Ranked).collect();
    let mut total = compensated_sum(heap.iter().map(|r| r.0.value));
    let mut total_err: f64 = heap.iter().map(|r| r.0.error).sum();
    let mut budget = cfg.max_subdivisions;
    let mut rounds = 0usize;

    loop {
        let tol = cfg.epsabs.max(cfg.epsrel * total.abs());
        if total_err <= tol || heap.is_empty() || budget == 0 {
            break;
        }
        let mut batch = Vec::with_capacity(BATCH);
        while batch.len() < BATCH.min(budget) {
            match heap.pop() {
                Some(Ranked(p)) => {
                    let mid = 0.5 * (p.a + p.b);
                    if mid <= p.a || mid >= p.b || (p.b - p.a) <= 1e-14 * p.a.abs().max(p.b.abs()) {
                        done.push(p);
                        continue;
                    }
                    batch.push(p);
                }
                None => break,
            }
        }
        if batch.is_empty() {
            continue;
        }
        budget -= batch.len();
        let children: Vec<(Piece, Piece)> = batch
            .par_iter()
            .map(|p| {
                let mid = 0.5 * (p.a + p.b);
                (gk21(f, p.a, mid), gk21(f, mid, p.b))
            })
            .collect();
        for (parent, (l, r)) in batch.iter().zip(children) {
            total += (l.value + r.value) - parent.value;
            total_err += (l.error + r.error) - parent.error;
            heap.push(Ranked(l));
            heap.push(Ranked(r));
        }
        rounds += 1;
        if rounds % 64 == 0 {
            total = compensated_sum(heap.iter().map(|r| r.0.value).chain(done.iter().map(|p| p.value)));
            total_err = heap.iter().map(|r| r.0.error).chain(done.iter().map(|p| p.error)).sum();
        }
    }

    let mut pieces: Vec<Piece> = heap.into_iter().map(|r| r.0).chain(done).collect();
    pieces.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value = compensated_sum(pieces.iter().map(|p| p.value));
    let error = compensated_sum(pieces.iter().map(|p| p.error));
    let converged = error <= cfg.epsabs.max(cfg.epsrel * value.abs());
    QuadOutcome { value, error, converged, pieces }
}

/// `count + 1` log-spaced points from `lo` to `hi` (both > 0).
pub fn log_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let count = count.max(1);
    let (la, lb) = (lo.ln(), hi.ln());
    let mut pts: Vec<f64> = (0..=count)
        .map(|i| (la + (lb - la) * i as f64 / count as f64).exp())
        .collect();
    pts[0] = lo;
    pts[count] = hi;
    pts
}
