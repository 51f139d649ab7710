//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line to stderr (bypassing output capture)
//! before asserting.

use std::f64::consts::PI;
use std::io::Write;

use ddplateau::chi::{chi, chi_during, chi_repeated, ChiConfig, ChiEngine};
use ddplateau::filter::{passband_max, suppression_order};
use ddplateau::noise::{NoiseSpectrum, Rolloff};
use ddplateau::plateau::{chi_asymptotic, cdd4_coefficient, jitter_tolerance, m_max_soft, markovian_limit, MMax};
use ddplateau::pulse::PulseShape;
use ddplateau::quadrature::QuadConfig;
use ddplateau::search::{best_sequence, SearchConfig};
use ddplateau::sequence::TimingPattern;

const TAU: f64 = 1e-6;

fn report(n: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
    assert!(pass, "criterion {n}: {detail}");
}

fn gaas() -> NoiseSpectrum {
    NoiseSpectrum::gaas()
}

fn cdd4() -> TimingPattern {
    TimingPattern::cdd(4, TAU).unwrap()
}

fn bb() -> PulseShape {
    PulseShape::BangBang
}

#[test]
fn criterion_01_repetition_kernel() {
    let sp = gaas();
    let cfg = ChiConfig::default();
    let bases = [
        TimingPattern::cdd(1, TAU).unwrap(),
        TimingPattern::carr_purcell(TAU).unwrap(),
        TimingPattern::cdd(3, TAU).unwrap(),
    ];
    let mut worst: f64 = 0.0;
    for p in &bases {
        for m in [2usize, 3, 5, 8] {
            let kernel = chi_repeated(p, m as u64, &sp, &bb(), &cfg).unwrap().chi_total;
            let explicit = chi(&p.repeat(m).unwrap(), &sp, &bb(), &cfg.quad).unwrap().chi_total;
            worst = worst.max((kernel - explicit).abs() / explicit);
        }
    }
    report(1, worst <= 1e-6, format!("max relative difference {worst:.3e} (tolerance 1e-6)"));
}

#[test]
fn criterion_02_udd_order() {
    let mut detail = vec![];
    let mut pass = true;
    for n in 1..=5 {
        match suppression_order(&TimingPattern::udd(n, 1e-5).unwrap()) {
            Ok(o) => {
                pass &= o.alpha as usize == n && o.residual < 0.05;
                detail.push(format!("UDD{n}: alpha {} residual {:.1e}", o.alpha, o.residual));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("UDD{n}: {e}"));
            }
        }
    }
    report(2, pass, detail.join("; "));
}

#[test]
fn criterion_03_cdd4_prefactor() {
    let p = cdd4();
    let a = suppression_order(&p).unwrap().a_bb.norm();
    let expected = p.duration().powi(5) / 2f64.powi(14);
    let rel = (a - expected).abs() / expected;
    report(3, rel <= 0.01, format!("|A_bb| {a:.5e} vs T^5/2^14 {expected:.5e}, relative {rel:.2e} (tolerance 1%)"));
}

#[test]
fn criterion_04_passband_peak() {
    let peak = passband_max(&cdd4(), None).unwrap();
    let rel = (peak.value - 256.0).abs() / 256.0;
    report(4, rel <= 0.01, format!("F_max {:.4} at omega {:.4e} rad/s (256 +/- 1%)", peak.value, peak.omega));
}

#[test]
fn criterion_05_gaas_calibration() {
    let sp = gaas();
    let q = QuadConfig::default();
    let chi_at = |t: f64| chi(&TimingPattern::free(t).unwrap(), &sp, &bb(), &q).unwrap().chi_total;
    let (mut lo, mut hi) = (1e-9f64, 1e-6f64);
    while hi / lo > 1.0 + 1e-6 {
        let mid = (lo * hi).sqrt();
        if chi_at(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t2 = (lo * hi).sqrt();
    let rel = (t2 - 35e-9).abs() / 35e-9;
    report(5, rel <= 0.2, format!("1/e time {:.2} ns (35 ns +/- 20%)", t2 * 1e9));
}

#[test]
fn criterion_06_udd5_trace() {
    let sp = gaas();
    let q = QuadConfig::default();
    let p = TimingPattern::udd_with_min_interval(5, TAU).unwrap();
    let t = p.duration();
    let n = 300;
    let trace: Vec<(f64, f64)> = (1..=n)
        .map(|i| {
            let ti = if i == n { t } else { t * i as f64 / n as f64 };
            (ti, chi_during(&p, ti, &sp, &bb(), &q).unwrap().chi_total)
        })
        .collect();
    let argmin = trace.iter().enumerate().min_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap().0;
    let local: Vec<f64> = trace
        .windows(3)
        .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
        .map(|w| w[1].0)
        .filter(|&ti| (1.6e-6..=2.4e-6).contains(&ti))
        .collect();
    let pass = argmin == n - 1 && !local.is_empty();
    report(
        6,
        pass,
        format!(
            "T_p {:.3} us, global minimum at t = {:.3} us, local coherence maxima in [1.6, 2.4] us: {:?}",
            t * 1e6,
            trace[argmin].0 * 1e6,
            local.iter().map(|v| format!("{:.3} us", v * 1e6)).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_07_plateau_value() {
    let sp = gaas();
    let cfg = ChiConfig::default();
    let e = ChiEngine::new(&cdd4(), &sp, &bb(), cfg).unwrap();
    let c100 = e.repeated(100).unwrap().chi_total;
    let c1000 = e.repeated(1000).unwrap().chi_total;
    let ratio = c1000 / c100;
    let vs_ref = c1000 / 1.3e-9;
    let pass = (0.5..=2.0).contains(&ratio) && (1.0 / 3.0..=3.0).contains(&vs_ref);
    report(
        7,
        pass,
        format!("chi(m=100) {c100:.4e}, chi(m=1000) {c1000:.4e}, ratio {ratio:.3} (within 2), vs 1.3e-9: {vs_ref:.3} (within 3)"),
    );
}

#[test]
fn criterion_08_hard_cutoff_bound() {
    let sp = gaas().with_rolloff(Rolloff::Hard);
    let cfg = ChiConfig::default();
    let p = cdd4();
    let inf = chi_asymptotic(&p, &sp, &bb(), &cfg).unwrap().budget.chi_total;
    let e = ChiEngine::new(&p, &sp, &bb(), cfg).unwrap();
    let bound = 2.0 * inf * 1.05;
    let mut ms: Vec<u64> = (0..=30).map(|i| 10f64.powf(i as f64 / 10.0).round() as u64).collect();
    ms.dedup();
    let mut worst = (0u64, 0.0f64);
    for &m in &ms {
        let c = e.repeated(m).unwrap().chi_total;
        if c / inf > worst.1 {
            worst = (m, c / inf);
        }
    }
    report(
        8,
        worst.1 * inf <= bound,
        format!("chi_inf {inf:.4e}, max chi_m/chi_inf {:.4} at m = {} over {} samples (limit 2.1)", worst.1, worst.0, ms.len()),
    );
}

#[test]
fn criterion_09_pulse_error_dichotomy() {
    let sp = gaas();
    let cfg = ChiConfig::default();
    let p = cdd4();
    let plateau = chi_asymptotic(&p, &sp, &bb(), &cfg).unwrap().budget.chi_total;
    let ms = [10u64, 100, 1000, 10_000, 62_500];
    let series = |shape: PulseShape| -> Vec<f64> {
        let e = ChiEngine::new(&p, &sp, &shape, cfg).unwrap();
        ms.iter().map(|&m| e.repeated(m).unwrap().chi_total / plateau).collect()
    };
    let primitive = series(PulseShape::primitive(1e-9).unwrap());
    let dcg_fast = series(PulseShape::dcg(1e-9).unwrap());
    let dcg_slow = series(PulseShape::dcg(1e-7).unwrap());
    let peak = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let pass = peak(&primitive) > 10.0 && peak(&dcg_fast) <= 5.0 && peak(&dcg_slow) <= 5.0;
    report(
        9,
        pass,
        format!(
            "chi/chi_bb_inf up to T_s = 1 s: primitive 1 ns {:.3e} (> 10), DCG 1 ns {:.3} and DCG 100 ns {:.3} (<= 5)",
            peak(&primitive),
            peak(&dcg_fast),
            peak(&dcg_slow)
        ),
    );
}

#[test]
fn criterion_10_m_max_specialization() {
    let sp = gaas().with_rolloff(Rolloff::PowerLaw(18.0));
    let p = cdd4();
    let x = p.duration() * sp.omega_c / (2.0 * PI);
    let bound = m_max_soft(&p, &sp, &bb()).unwrap();
    let (general, specialized, rel) = match bound {
        MMax::Bound { m_max, specialized: Some(s), rel_diff: Some(r) } => (m_max, s, r),
        other => panic!("criterion 10: expected a specialized bound, got {other:?}"),
    };
    let direct = cdd4_coefficient() * x.powf(7.0 - 18.0);
    let pass = rel <= 0.01 && specialized >= 1e4;
    report(
        10,
        pass,
        format!(
            "x {x:.4}, r 18: general {general:.5e}, specialized {specialized:.5e} (direct {direct:.5e}), \
             relative {rel:.2e} (<= 1%), specialized >= 1e4: {}",
            specialized >= 1e4
        ),
    );
}

#[test]
fn criterion_11_markovian_limit() {
    let t = markovian_limit(100.0, 1e-5).unwrap();
    report(11, t == 1e-3, format!("T_max {t:e} s (exactly 1e-3)"));
}

#[test]
fn criterion_12_walsh_structure() {
    let sp = gaas();
    let cfg = SearchConfig::default();
    let mut lines = vec![];
    let mut top = vec![];
    for q in 1..=10 {
        let ts = (1u64 << q) as f64 * TAU;
        let r = best_sequence(ts, TAU, &sp, &bb(), &cfg).unwrap();
        let base = r.structure.as_ref().map(|s| (s.base_label.clone(), s.repeats));
        lines.push(format!("{:.0} us {} {:?} chi {:.3e}", ts * 1e6, r.winner.label(), base, r.chi.chi_total));
        if q >= 8 {
            top.push((base, r.chi.chi_total));
        }
    }
    let structured = top.iter().all(|(b, _)| matches!(b, Some((label, _)) if label == "CDD4"));
    let hi = top.iter().map(|t| t.1).fold(0.0, f64::max);
    let lo = top.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
    let spread = hi / lo - 1.0;
    report(
        12,
        structured && spread <= 0.2,
        format!("top three CDD4-repeats {structured}, chi spread {:.2}% (<= 20%); {}", spread * 100.0, lines.join("; ")),
    );
}

#[test]
fn criterion_13_jitter_tolerance() {
    let j = jitter_tolerance(&cdd4(), 1000, &gaas(), &bb(), 2.0, &ChiConfig::default()).unwrap();
    let ps = j.delta_t * 1e12;
    report(13, (0.15..=15.0).contains(&ps), format!("delta_t {ps:.3} ps (window [0.15, 15] ps), chi_inf {:.4e}", j.chi_inf));
}
