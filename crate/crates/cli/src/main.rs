use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddplateau::chi::{ChiConfig, ChiEngine, ErrorBudget};
use ddplateau::filter::FilterKernel;
use ddplateau::noise::{calibrate_strength, NoiseSpectrum};
use ddplateau::plateau::{plateau_report, ReportOptions};
use ddplateau::pulse::{PulseFilter, PulseShape};
use ddplateau::quadrature::log_points;
use ddplateau::search::{best_sequence, SearchConfig, DEFAULT_SLOT_LIMIT};
use ddplateau::{Error, TimingPattern};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

const TOOL: &str = "ddplateau";
const VERSION: &str = env!("CARGO_PKG_VERSION");
const PRESET_DIR_VAR: &str = "DDPLATEAU_PRESET_DIR";

const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;
const EXIT_ACCURACY: u8 = 4;
const EXIT_RESOURCE: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = TOOL, version, about = "Filter functions and decoupling errors of dynamical decoupling sequences")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Re-run the configuration recorded in a previous output file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter function on a log-spaced frequency grid.
    Ff {
        #[command(flatten)]
        seq: SequenceArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 2048)]
        points: usize,
        /// Lowest grid frequency in Hz (default 1e-3/T_p in rad/s).
        #[arg(long)]
        f_min_hz: Option<f64>,
        /// Highest grid frequency in Hz (default 1e3/T_p in rad/s).
        #[arg(long)]
        f_max_hz: Option<f64>,
    },
    /// Decoupling error of one sequence.
    Error {
        #[command(flatten)]
        seq: SequenceArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Error against the number of repetitions.
    SweepM {
        #[command(flatten)]
        seq: SequenceArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Comma list (`1,10,100`) or log range `lo:hi:count`.
        #[arg(long, default_value = "1:1000:13")]
        repeats: String,
    },
    /// Error at readout times t_i = i·T_p/points inside the sequence.
    Trace {
        #[command(flatten)]
        seq: SequenceArgs,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Plateau conditions, asymptotic error and lifetime estimates (JSON).
    Plateau {
        #[command(flatten)]
        seq: SequenceArgs,
        #[command(flatten)]
        common: CommonArgs,
        /// Markovian decay time T_M in seconds.
        #[arg(long)]
        t_markov: Option<f64>,
        /// Budget factor for the readout-jitter estimate.
        #[arg(long)]
        jitter_budget: Option<f64>,
        /// Repetitions preceding the delayed readout.
        #[arg(long, default_value_t = 1000)]
        jitter_repeats: u64,
    },
    /// Minimum-error Walsh sequence per storage time.
    Search {
        #[command(flatten)]
        common: CommonArgs,
        /// Slot length in seconds.
        #[arg(long)]
        tau: f64,
        /// Storage times: comma list or `lo..hi` doubling from lo.
        #[arg(long)]
        ts: String,
        #[arg(long, default_value_t = DEFAULT_SLOT_LIMIT)]
        slot_limit: usize,
    },
    /// Rescale the spectrum strength to a free-evolution 1/e time.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Target 1/e time in seconds.
        #[arg(long)]
        t2: f64,
    },
}

#[derive(Args, Debug)]
struct SequenceArgs {
    /// free | udd:n | cdd:n | cp | walsh:k/N
    #[arg(long)]
    sequence: String,
    /// Slot length (CDD, CP, Walsh) or first UDD interval, seconds.
    #[arg(long)]
    tau: Option<f64>,
    /// Total sequence duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Preset name (gaas, yb) or path to a spectrum JSON document.
    #[arg(long, default_value = "gaas")]
    spectrum: String,
    /// bb | primitive:<tau_pi> | dcg:<tau_pi>
    #[arg(long, default_value = "bb")]
    pulse: String,
    /// Relative quadrature tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Lower band edge override in Hz.
    #[arg(long)]
    band_min_hz: Option<f64>,
    /// Upper band edge override in Hz.
    #[arg(long)]
    band_max_hz: Option<f64>,
    /// Repeat count where the comb approximation takes over.
    #[arg(long, default_value_t = 10_000)]
    comb_crossover: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
}

/// Fully resolved run, echoed into every output header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    task: Task,
    spectrum_source: String,
    /// Angular units throughout.
    spectrum: NoiseSpectrum,
    pulse: PulseShape,
    chi: ChiConfig,
    format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Task {
    Ff { pattern: TimingPattern, omega_min: f64, omega_max: f64, points: usize },
    Error { pattern: TimingPattern },
    SweepM { pattern: TimingPattern, repeats: Vec<u64> },
    Trace { pattern: TimingPattern, points: usize },
    Plateau { pattern: TimingPattern, t_markov: Option<f64>, jitter_budget: Option<f64>, jitter_repeats: u64 },
    Search { tau: f64, storage_times: Vec<f64>, slot_limit: usize },
    Calibrate { t2: f64 },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) => EXIT_USAGE,
        Error::Domain(_) | Error::Precondition(_) | Error::Divergence(_) | Error::NotPowerLaw { .. } => EXIT_DOMAIN,
        Error::Accuracy { .. } | Error::Consistency(_) | Error::Calibration(_) => EXIT_ACCURACY,
        Error::Resource(_) => EXIT_RESOURCE,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: exit_code(&e), message: e.to_string() }
    }
}

/// Core error prefixed with the offending option.
fn field(name: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure { code: exit_code(&e), message: format!("{name}: {e}") }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: msg.into() }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{TOOL}: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    let cfg = match (&cli.config, cli.command) {
        (Some(path), _) => load_config(path)?,
        (None, Some(cmd)) => resolve(cmd)?,
        (None, None) => return Err(usage("a subcommand or --config is required")),
    };
    let body = execute(&cfg)?;
    let text = render(&cfg, body)?;
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| usage(format!("--out {}: {e}", path.display())))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| usage(format!("stdout: {e}")))?,
    }
    Ok(())
}

fn resolve(cmd: Command) -> Outcome<RunConfig> {
    let (task, common) = match cmd {
        Command::Ff { seq, common, points, f_min_hz, f_max_hz } => {
            let pattern = pattern_from(&seq)?;
            if points < 2 {
                return Err(usage("--points must be at least 2"));
            }
            let t = pattern.duration();
            let omega_min = f_min_hz.map_or(1e-3 / t, |f| 2.0 * PI * f);
            let omega_max = f_max_hz.map_or(1e3 / t, |f| 2.0 * PI * f);
            if !(omega_min > 0.0 && omega_max > omega_min) {
                return Err(usage("--f-min-hz/--f-max-hz must satisfy 0 < min < max"));
            }
            (Task::Ff { pattern, omega_min, omega_max, points }, common)
        }
        Command::Error { seq, common } => (Task::Error { pattern: pattern_from(&seq)? }, common),
        Command::SweepM { seq, common, repeats } => {
            (Task::SweepM { pattern: pattern_from(&seq)?, repeats: parse_repeats(&repeats)? }, common)
        }
        Command::Trace { seq, common, points } => {
            if points == 0 {
                return Err(usage("--points must be positive"));
            }
            (Task::Trace { pattern: pattern_from(&seq)?, points }, common)
        }
        Command::Plateau { seq, common, t_markov, jitter_budget, jitter_repeats } => (
            Task::Plateau { pattern: pattern_from(&seq)?, t_markov, jitter_budget, jitter_repeats },
            common,
        ),
        Command::Search { common, tau, ts, slot_limit } => {
            (Task::Search { tau, storage_times: parse_storage_times(&ts)?, slot_limit }, common)
        }
        Command::Calibrate { common, t2 } => (Task::Calibrate { t2 }, common),
    };
    if !(common.tol > 0.0 && common.tol < 1.0) {
        return Err(usage(format!("--tol must lie in (0, 1), got {}", common.tol)));
    }
    let spectrum = load_spectrum(&common)?;
    let pulse = PulseShape::from_spec(&common.pulse).map_err(field("--pulse"))?;
    let mut chi = ChiConfig::default();
    chi.quad.epsrel = common.tol;
    chi.comb_crossover = common.comb_crossover;
    Ok(RunConfig { task, spectrum_source: common.spectrum.clone(), spectrum, pulse, chi, format: common.format })
}

fn pattern_from(seq: &SequenceArgs) -> Outcome<TimingPattern> {
    TimingPattern::from_spec(&seq.sequence, seq.tau, seq.duration).map_err(field("--sequence"))
}

fn load_spectrum(common: &CommonArgs) -> Outcome<NoiseSpectrum> {
    let source = common.spectrum.as_str();
    let from_file = |path: &Path| -> Outcome<NoiseSpectrum> {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("--spectrum {}: {e}", path.display())))?;
        NoiseSpectrum::from_json(&text).map_err(|e| usage(format!("--spectrum {}: {e}", path.display())))
    };
    let base = if Path::new(source).is_file() {
        from_file(Path::new(source))?
    } else if let Some(p) = std::env::var_os(PRESET_DIR_VAR)
        .map(|d| Path::new(&d).join(format!("{source}.json")))
        .filter(|p| p.is_file())
    {
        from_file(&p)?
    } else {
        NoiseSpectrum::preset(source)
            .ok_or_else(|| usage(format!("--spectrum: '{source}' is neither a preset nor a readable file")))?
    };
    if common.band_min_hz.is_none() && common.band_max_hz.is_none() {
        return Ok(base);
    }
    let lo = common.band_min_hz.map_or(base.omega_min, |f| 2.0 * PI * f);
    let hi = common.band_max_hz.map_or(base.omega_max, |f| 2.0 * PI * f);
    NoiseSpectrum::new(base.s, base.g, base.omega_c, base.rolloff, lo, hi)
        .map_err(field("--band-min-hz/--band-max-hz"))
}

fn parse_repeats(text: &str) -> Outcome<Vec<u64>> {
    let bad = || usage(format!("--repeats: expected '1,10,100' or 'lo:hi:count', got '{text}'"));
    let mut out: Vec<u64> = if let Some((lo, rest)) = text.split_once(':') {
        let (hi, count) = rest.split_once(':').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if !(lo >= 1.0 && hi >= lo && count >= 1) {
            return Err(bad());
        }
        log_points(lo, hi, count.saturating_sub(1).max(1)).iter().map(|v| v.round() as u64).collect()
    } else {
        text.split(',').map(|s| s.trim().parse::<u64>().map_err(|_| bad())).collect::<Outcome<_>>()?
    };
    out.dedup();
    if out.contains(&0) {
        return Err(usage("--repeats: counts must be at least 1"));
    }
    Ok(out)
}

fn parse_storage_times(text: &str) -> Outcome<Vec<f64>> {
    let bad = || usage(format!("--ts: expected a comma list or 'lo..hi', got '{text}'"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(bad());
        }
        let mut out = vec![];
        let mut t = lo;
        while t <= hi * (1.0 + 1e-9) {
            out.push(t);
            t *= 2.0;
        }
        Ok(out)
    } else {
        text.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect()
    }
}

/// Reads the configuration from a CSV header, a JSON output or a bare
/// configuration document.
fn load_config(path: &Path) -> Outcome<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    let parse = |s: &str| serde_json::from_str::<RunConfig>(s).map_err(|e| usage(format!("--config: {e}")));
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# config: ")) {
        return parse(line);
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(format!("--config: {e}")))?;
    match value.get("config") {
        Some(c) => serde_json::from_value(c.clone()).map_err(|e| usage(format!("--config: {e}"))),
        None => parse(&text),
    }
}

/// Computed output: CSV columns and rows, plus JSON and accuracy notes.
struct Body {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    json: serde_json::Value,
    /// Largest quadrature error bound among the reported errors.
    error_bound: Option<f64>,
    /// Forces JSON regardless of the requested format.
    json_only: bool,
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn budget_error(budgets: &[ErrorBudget]) -> Option<f64> {
    budgets.iter().map(|b| b.error_bound).reduce(f64::max)
}

fn execute(cfg: &RunConfig) -> Outcome<Body> {
    let spec = &cfg.spectrum;
    let shape = &cfg.pulse;
    match &cfg.task {
        Task::Ff { pattern, omega_min, omega_max, points } => {
            let grid = log_points(*omega_min, *omega_max, points - 1);
            let kernel = FilterKernel::new(pattern);
            let finite = !shape.is_bang_bang();
            let pf = if finite { Some(PulseFilter::new(pattern, shape)?) } else { None };
            let rows: Vec<Vec<String>> = grid
                .par_iter()
                .map(|&w| {
                    let y = kernel.y_tilde(w);
                    let mut row = vec![num(w), String::new(), num(y.re), num(y.im)];
                    match &pf {
                        Some(pf) => {
                            let (z, q) = pf.quadratures(w);
                            row[1] = num(z.norm_sqr() + q.norm_sqr());
                            row.push(num(z.norm_sqr()));
                            row.push(num(q.norm_sqr()));
                        }
                        None => row[1] = num(kernel.filter(w)),
                    }
                    row
                })
                .collect();
            let mut columns = vec!["omega_rad_s", "F", "re_y", "im_y"];
            if finite {
                columns.extend(["rz2", "ry2"]);
            }
            let json = table_json(&columns, &rows);
            Ok(Body { columns, rows, json, error_bound: None, json_only: false })
        }
        Task::Error { pattern } => {
            let b = ChiEngine::new(pattern, spec, shape, cfg.chi)?.single()?;
            let columns = vec!["T_s", "chi", "chi_bb", "chi_pul", "chi_low", "chi_high", "coherence", "error_bound"];
            let rows = vec![vec![
                num(pattern.duration()),
                num(b.chi_total),
                num(b.chi_bb),
                num(b.chi_pul),
                num(b.chi_low),
                num(b.chi_high),
                num(b.coherence),
                num(b.error_bound),
            ]];
            let json = json!({ "duration_s": pattern.duration(), "budget": b });
            Ok(Body { columns, rows, json, error_bound: Some(b.error_bound), json_only: false })
        }
        Task::SweepM { pattern, repeats } => {
            let engine = ChiEngine::new(pattern, spec, shape, cfg.chi)?;
            let budgets = repeats.iter().map(|&m| engine.repeated(m)).collect::<ddplateau::Result<Vec<_>>>()?;
            let columns = vec!["m", "T_s", "chi", "coherence"];
            let rows = budgets
                .iter()
                .map(|b| vec![b.m.to_string(), num(b.m as f64 * pattern.duration()), num(b.chi_total), num(b.coherence)])
                .collect::<Vec<_>>();
            let json = json!({ "duration_s": pattern.duration(), "budgets": budgets });
            Ok(Body { columns, rows, json, error_bound: budget_error(&budgets), json_only: false })
        }
        Task::Trace { pattern, points } => {
            let t = pattern.duration();
            let budgets = (1..=*points)
                .map(|i| {
                    let ti = if i == *points { t } else { t * i as f64 / *points as f64 };
                    let cut = pattern.truncate(ti)?;
                    ChiEngine::new(&cut, spec, shape, cfg.chi)?.single().map(|b| (ti, b))
                })
                .collect::<ddplateau::Result<Vec<_>>>()?;
            let columns = vec!["t", "chi", "coherence"];
            let rows = budgets.iter().map(|(t, b)| vec![num(*t), num(b.chi_total), num(b.coherence)]).collect();
            let bs: Vec<ErrorBudget> = budgets.iter().map(|(_, b)| *b).collect();
            let json = json!({ "times_s": budgets.iter().map(|(t, _)| *t).collect::<Vec<_>>(), "budgets": bs });
            Ok(Body { columns, rows, json, error_bound: budget_error(&bs), json_only: false })
        }
        Task::Plateau { pattern, t_markov, jitter_budget, jitter_repeats } => {
            let opts = ReportOptions { t_markov: *t_markov, jitter: jitter_budget.map(|f| (f, *jitter_repeats)) };
            let report = plateau_report(pattern, spec, shape, &cfg.chi, &opts)?;
            let error_bound = report.chi_infinity.map(|a| a.budget.error_bound);
            let json = serde_json::to_value(&report).map_err(|e| usage(e.to_string()))?;
            Ok(Body { columns: vec![], rows: vec![], json, error_bound, json_only: true })
        }
        Task::Search { tau, storage_times, slot_limit } => {
            let scfg = SearchConfig { chi: cfg.chi, slot_limit: *slot_limit };
            let mut rows = vec![];
            let mut results = vec![];
            for &ts in storage_times {
                let r = best_sequence(ts, *tau, spec, shape, &scfg)?;
                let (base, repeats) = match &r.structure {
                    Some(s) => (s.base_label.clone(), s.repeats),
                    None => (r.winner.label().to_string(), 1),
                };
                rows.push(vec![
                    num(ts),
                    r.winner_index.to_string(),
                    r.winner.label().to_string(),
                    r.winner.pulse_count().to_string(),
                    num(r.chi.chi_total),
                    num(r.chi.coherence),
                    base,
                    repeats.to_string(),
                ]);
                results.push(r);
            }
            let columns = vec!["T_s", "walsh_index", "label", "pulses", "chi", "coherence", "base_block", "repeats"];
            let bs: Vec<ErrorBudget> = results.iter().map(|r| r.chi).collect();
            let json = serde_json::to_value(&results).map_err(|e| usage(e.to_string()))?;
            Ok(Body { columns, rows, json, error_bound: budget_error(&bs), json_only: false })
        }
        Task::Calibrate { t2 } => {
            let cal = calibrate_strength(spec, *t2, &cfg.chi.quad)?;
            let doc = cal.to_doc();
            let columns = vec!["t2_s", "g_rad_s", "g_over_omega_c"];
            let rows = vec![vec![num(*t2), num(cal.g), num(doc.g_over_omega_c)]];
            let json = serde_json::to_value(&doc).map_err(|e| usage(e.to_string()))?;
            Ok(Body { columns, rows, json, error_bound: None, json_only: false })
        }
    }
}

fn table_json(columns: &[&str], rows: &[Vec<String>]) -> serde_json::Value {
    let cols: serde_json::Map<String, serde_json::Value> = columns
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let vals: Vec<f64> = rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect();
            (c.to_string(), json!(vals))
        })
        .collect();
    serde_json::Value::Object(cols)
}

fn render(cfg: &RunConfig, body: Body) -> Outcome<String> {
    let config = serde_json::to_string(cfg).map_err(|e| usage(e.to_string()))?;
    let accuracy = json!({ "epsrel": cfg.chi.quad.epsrel, "error_bound": body.error_bound });
    if cfg.format == Format::Json || body.json_only {
        let doc = json!({
            "tool": TOOL,
            "version": VERSION,
            "config": cfg,
            "accuracy": accuracy,
            "result": body.json,
        });
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| usage(e.to_string()))?;
        text.push('\n');
        return Ok(text);
    }
    let mut out = String::new();
    let _ = writeln!(out, "# {TOOL} {VERSION}");
    let _ = writeln!(out, "# config: {config}");
    let _ = writeln!(out, "# accuracy: {accuracy}");
    let _ = writeln!(out, "{}", body.columns.join(","));
    for row in &body.rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}
