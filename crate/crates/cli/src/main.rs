//! `noisecal` command-line front end.
//!
//! Every file written gets a `<file>.manifest.json` beside it. Results sent
//! to stdout carry no manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use noisecal::calibration::{
    optimal_tau, ratio_curve, shot_characterized_eps, shot_fully_white,
    shot_uncharacterized_traces, WhiteSource, DEFAULT_EPSILON_SECU,
};
use noisecal::psd::{bundled, NoisePsdModel};
use noisecal::qkd::{rin_sensitivity, skr_vs_tau, with_scaled_flicker, QkdScenario, TABLE4_JSON};
use noisecal::synth::synthesize;
use noisecal::tgv::{log_grid, tgv, tgv_curve, GateConfig};
use noisecal::white::white_estimate;
use noisecal::wss::block_scan;
use noisecal::{Scheme, Trace, WhiteMethod};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(
    name = "noisecal",
    version,
    about = "Receiver-noise calibration for CV-QKD"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export, check or evaluate a PSD model.
    Model(ModelArgs),
    /// Synthesize a Gaussian trace from a PSD model.
    Synth(SynthArgs),
    /// Time-gated variance at one duration or over a sweep.
    Tgv(TgvArgs),
    /// Stationarity battery over a sequence of blocks.
    Wss(WssArgs),
    /// Estimate the white floor of a trace.
    White(WhiteArgs),
    /// Shot-noise calibration with one of the three schemes.
    Calibrate(CalibrateArgs),
    /// Worst-case N̂₀ against calibration duration.
    OptTau(OptTauArgs),
    /// Effective key rate against calibration duration.
    Skr(SkrArgs),
    /// Emit the data behind one figure.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model file, or `electronic` / `receiver` for the bundled models.
    #[arg(long)]
    model: String,
    /// Evaluate the two-sided density at these frequencies (Hz).
    #[arg(long = "f", value_delimiter = ',')]
    freqs: Vec<f64>,
    /// Report the band power over [lo, hi] Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    band: Option<Vec<f64>>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    fs: f64,
    #[arg(long, env = "NOISECAL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    label: Option<String>,
    /// Output .nct file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TgvArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    fs: f64,
    /// Single duration; without it a log-spaced sweep is written as CSV.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tau_min: f64,
    #[arg(long, default_value_t = 10.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 141)]
    points: usize,
    /// Add one column per model component to the sweep.
    #[arg(long)]
    breakdown: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WssArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    alpha: Vec<f64>,
    #[arg(long, num_args = 1.., required = true)]
    blocks: Vec<PathBuf>,
    /// Sampling rate for CSV blocks.
    #[arg(long)]
    fs: Option<f64>,
    /// Output prefix: writes <prefix>_blocks_<alpha>.csv and <prefix>_cumulative.csv.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Floor,
    Arma,
    Wiener,
}

impl From<MethodArg> for WhiteMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Floor => WhiteMethod::PsdFloor,
            MethodArg::Arma => WhiteMethod::Arma,
            MethodArg::Wiener => WhiteMethod::Wiener,
        }
    }
}

#[derive(Args)]
struct WhiteArgs {
    #[arg(long, value_enum, default_value = "floor")]
    method: MethodArg,
    trace: PathBuf,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum SchemeArg {
    Uncharacterized,
    Characterized,
    FullyWhite,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Uncharacterized => Scheme::Uncharacterized,
            SchemeArg::Characterized => Scheme::Characterized,
            SchemeArg::FullyWhite => Scheme::FullyWhite,
        }
    }
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    scheme: SchemeArg,
    /// Electronic-noise model (characterized, or fully-white from models).
    #[arg(long)]
    elec: Option<String>,
    #[arg(long)]
    rec: Option<String>,
    /// Electronic-noise trace (uncharacterized, or fully-white from data).
    #[arg(long)]
    elec_trace: Option<PathBuf>,
    #[arg(long)]
    rec_trace: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_EPSILON_SECU)]
    eps: f64,
    #[arg(long, value_enum, default_value = "floor")]
    method: MethodArg,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OptTauArgs {
    #[arg(long)]
    elec: String,
    #[arg(long)]
    rec: String,
    #[arg(long)]
    fs: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON_SECU)]
    eps: f64,
    #[arg(long, default_value_t = 1e-6)]
    tau_min: f64,
    #[arg(long, default_value_t = 10.0)]
    tau_max: f64,
    #[arg(long, default_value_t = 141)]
    points: usize,
    /// Output prefix: writes <prefix>.csv and <prefix>.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SkrArgs {
    /// Scenario file; defaults to the bundled scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    elec: String,
    #[arg(long)]
    rec: String,
    #[arg(long, value_enum, default_value = "characterized")]
    scheme: SchemeArg,
    #[arg(long)]
    fs: f64,
    /// Overrides the scenario's stationarity window.
    #[arg(long)]
    taumax: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tau_min: f64,
    #[arg(long, default_value_t = 121)]
    points: usize,
    /// Output prefix: writes <prefix>.csv and <prefix>.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig4,
    Fig5,
    Fig6,
    Fig8,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(value_enum)]
    figure: Figure,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Base seed for the synthesized stand-in traces of fig8.
    #[arg(long, env = "NOISECAL_SEED", default_value_t = 21)]
    seed: u64,
    /// Samples per stand-in trace for fig8.
    #[arg(long, default_value_t = 1 << 23)]
    samples: usize,
}

/// Sampling rate the bundled models were characterized at.
const FS_BUNDLED: f64 = 625e6;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Lib(noisecal::Error),
}

impl From<noisecal::Error> for CliError {
    fn from(e: noisecal::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

type Res<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Provenance collected while a command runs.
struct Run {
    argv: Vec<String>,
    inputs: Vec<Value>,
    seeds: Vec<u64>,
}

impl Run {
    fn input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs
            .push(json!({"path": name, "sha256": sha256(bytes)}));
    }

    fn model(&mut self, spec: &str) -> Res<NoisePsdModel> {
        let (text, name) = match spec {
            "electronic" if !Path::new(spec).exists() => {
                (bundled::ELECTRONIC_JSON.to_string(), "bundled:electronic")
            }
            "receiver" if !Path::new(spec).exists() => {
                (bundled::RECEIVER_JSON.to_string(), "bundled:receiver")
            }
            _ => (fs::read_to_string(spec)?, spec),
        };
        self.input(name, text.as_bytes());
        Ok(NoisePsdModel::from_json_str(&text)?)
    }

    fn trace(&mut self, path: &Path, fs_flag: Option<f64>) -> Res<Trace> {
        let bytes = fs::read(path)?;
        self.input(&path.display().to_string(), &bytes);
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            let fs = fs_flag.ok_or_else(|| usage("--fs is required for CSV traces"))?;
            let text = String::from_utf8(bytes)
                .map_err(|_| usage(format!("{} is not UTF-8", path.display())))?;
            Ok(Trace::from_csv(&text, fs)?)
        } else {
            Ok(Trace::read_nct(bytes.as_slice())?)
        }
    }

    fn scenario(&mut self, path: Option<&Path>) -> Res<QkdScenario> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p)?;
                self.input(&p.display().to_string(), text.as_bytes());
                Ok(QkdScenario::from_json_str(&text)?)
            }
            None => {
                self.input("bundled:table4", TABLE4_JSON.as_bytes());
                Ok(QkdScenario::table4())
            }
        }
    }

    /// Writes `bytes` to `path` with a manifest beside it, or to stdout.
    fn emit(&self, path: Option<&Path>, bytes: &[u8]) -> Res<()> {
        let Some(path) = path else {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            return Ok(());
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, bytes)?;
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "tool": "noisecal",
            "version": env!("CARGO_PKG_VERSION"),
            "command_line": self.argv,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "output": {"path": path.display().to_string(), "sha256": sha256(bytes)},
            "created_unix_s": created,
        });
        let mut name = path.as_os_str().to_owned();
        name.push(".manifest.json");
        fs::write(PathBuf::from(name), pretty(&manifest))?;
        Ok(())
    }

    fn emit_json<T: Serialize>(&self, path: Option<&Path>, v: &T) -> Res<()> {
        let v = serde_json::to_value(v).map_err(noisecal::Error::from)?;
        self.emit(path, pretty(&v).as_bytes())
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialise");
    s.push('\n');
    s
}

fn with_ext(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn tau_grid(lo: f64, hi: f64, points: usize) -> Res<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 1 {
        return Err(usage("need 0 < tau-min < tau-max and at least one point"));
    }
    Ok(if points == 1 {
        vec![lo]
    } else {
        log_grid(lo, hi, points)
    })
}

fn cmd_model(a: ModelArgs, run: &mut Run) -> Res<()> {
    let m = run.model(&a.model)?;
    let mut report = json!({ "model": m.to_json_value() });
    if !a.freqs.is_empty() {
        let d = a
            .freqs
            .iter()
            .map(|f| m.eval_psd(*f))
            .collect::<noisecal::Result<Vec<_>>>()?;
        report["density"] = json!({"f_hz": a.freqs, "psd_v2_per_hz": d});
    }
    if let Some(b) = a.band {
        report["band_power"] =
            json!({"f_lo": b[0], "f_hi": b[1], "power_v2": m.band_power(b[0], b[1])?});
    }
    run.emit(a.out.as_deref(), pretty(&report).as_bytes())
}

fn cmd_synth(a: SynthArgs, run: &mut Run) -> Res<()> {
    let m = run.model(&a.model)?;
    run.seeds.push(a.seed);
    let mut t = synthesize(&m, a.fs, a.n, a.seed)?;
    if let Some(l) = a.label {
        t.label = l;
    }
    let mut buf = Vec::with_capacity(8 * a.n + 256);
    t.write_nct(&mut buf)?;
    run.emit(Some(&a.out), &buf)
}

fn cmd_tgv(a: TgvArgs, run: &mut Run) -> Res<()> {
    let m = run.model(&a.model)?;
    match a.tau {
        Some(tau) => {
            let v = tgv(&m, &GateConfig::new(tau, a.fs)?)?;
            run.emit_json(a.out.as_deref(), &json!({"tau": tau, "variance": v}))
        }
        None => {
            let grid = tau_grid(a.tau_min, a.tau_max, a.points)?;
            let c = tgv_curve(&m, &grid, a.fs, a.breakdown)?;
            run.emit(a.out.as_deref(), c.to_csv().as_bytes())
        }
    }
}

fn cmd_wss(a: WssArgs, run: &mut Run) -> Res<()> {
    let blocks = a
        .blocks
        .iter()
        .map(|p| run.trace(p, a.fs))
        .collect::<Res<Vec<_>>>()?;
    let r = block_scan(&blocks, &a.alpha)?;
    for (i, alpha) in a.alpha.iter().enumerate() {
        run.emit(
            Some(&with_ext(&a.out, &format!("_blocks_{alpha}.csv"))),
            r.blocks_csv(i).as_bytes(),
        )?;
    }
    run.emit(
        Some(&with_ext(&a.out, "_cumulative.csv")),
        r.cumulative_csv().as_bytes(),
    )?;
    let summary: Vec<Value> = a
        .alpha
        .iter()
        .zip(&r.pass_fraction)
        .map(|(al, f)| json!({"alpha": al, "pass_fraction": f}))
        .collect();
    run.emit_json(None, &json!({"blocks": r.block_count, "summary": summary}))
}

fn cmd_white(a: WhiteArgs, run: &mut Run) -> Res<()> {
    let t = run.trace(&a.trace, a.fs)?;
    let w = white_estimate(&t, a.method.into())?;
    run.emit_json(a.out.as_deref(), &w)
}

fn cmd_calibrate(a: CalibrateArgs, run: &mut Run) -> Res<()> {
    let need = |o: Option<f64>, flag: &str| {
        o.ok_or_else(|| usage(format!("--{flag} is required for this scheme")))
    };
    let result = match a.scheme {
        SchemeArg::Uncharacterized => {
            let (Some(rp), Some(ep)) = (&a.rec_trace, &a.elec_trace) else {
                return Err(usage("uncharacterized needs --rec-trace and --elec-trace"));
            };
            let rec = run.trace(rp, a.fs)?;
            let elec = run.trace(ep, a.fs)?;
            shot_uncharacterized_traces(&rec, &elec, need(a.tau, "tau")?)?
        }
        SchemeArg::Characterized => {
            let (Some(r), Some(e)) = (&a.rec, &a.elec) else {
                return Err(usage("characterized needs --rec and --elec models"));
            };
            let rec = run.model(r)?;
            let elec = run.model(e)?;
            shot_characterized_eps(&elec, &rec, need(a.tau, "tau")?, need(a.fs, "fs")?, a.eps)?
        }
        SchemeArg::FullyWhite => match (&a.rec_trace, &a.elec_trace, &a.rec, &a.elec) {
            (Some(rp), Some(ep), None, None) => {
                let rec = run.trace(rp, a.fs)?;
                let elec = run.trace(ep, a.fs)?;
                shot_fully_white(
                    WhiteSource::Trace(&rec),
                    WhiteSource::Trace(&elec),
                    a.method.into(),
                )?
            }
            (None, None, Some(r), Some(e)) => {
                let rec = run.model(r)?;
                let elec = run.model(e)?;
                let fs = need(a.fs, "fs")?;
                shot_fully_white(
                    WhiteSource::Model(&rec, fs),
                    WhiteSource::Model(&elec, fs),
                    a.method.into(),
                )?
            }
            _ => return Err(usage("fully-white needs either both traces or both models")),
        },
    };
    run.emit_json(a.out.as_deref(), &result)
}

fn cmd_opt_tau(a: OptTauArgs, run: &mut Run) -> Res<()> {
    let elec = run.model(&a.elec)?;
    let rec = run.model(&a.rec)?;
    let grid = tau_grid(a.tau_min, a.tau_max, a.points)?;
    let o = optimal_tau(&elec, &rec, a.fs, a.eps, &grid)?;
    run.emit(Some(&with_ext(&a.out, ".csv")), o.to_csv().as_bytes())?;
    run.emit_json(
        Some(&with_ext(&a.out, ".json")),
        &json!({
            "tau_opt": o.tau_opt,
            "tau_opt_pessimistic": o.tau_opt_pessimistic,
            "n0_white": o.n0_white,
            "epsilon_secu": o.epsilon_secu,
        }),
    )
}

fn skr_summary(c: &noisecal::qkd::SkrCurve) -> Value {
    json!({
        "scheme": c.scheme,
        "tau_opt": c.tau_opt,
        "max_effective_rate": c.max_effective_rate,
        "n0_true": c.n0_true,
        "points": c.points.len(),
    })
}

/// Log grid up to just below the feasibility limit τ_max/calib_steps.
fn skr_grid(sc: &QkdScenario, tau_min: f64, points: usize) -> Res<Vec<f64>> {
    let limit = sc.tau_max / sc.calib_steps as f64;
    let mut g = tau_grid(tau_min, 0.99 * limit, points.saturating_sub(1).max(1))?;
    g.push(0.999 * limit);
    Ok(g)
}

fn cmd_skr(a: SkrArgs, run: &mut Run) -> Res<()> {
    let mut sc = run.scenario(a.scenario.as_deref())?;
    if let Some(t) = a.taumax {
        sc.tau_max = t;
        sc.validate()?;
    }
    let elec = run.model(&a.elec)?;
    let rec = run.model(&a.rec)?;
    let grid = skr_grid(&sc, a.tau_min, a.points)?;
    let c = skr_vs_tau(&sc, &elec, &rec, a.fs, &grid, a.scheme.into())?;
    run.emit(Some(&with_ext(&a.out, ".csv")), c.to_csv().as_bytes())?;
    run.emit_json(Some(&with_ext(&a.out, ".json")), &skr_summary(&c))
}

fn cmd_reproduce(a: ReproduceArgs, run: &mut Run) -> Res<()> {
    let dir = &a.out_dir;
    let e = run.model("electronic")?;
    let r = run.model("receiver")?;
    match a.figure {
        Figure::Fig4 => {
            // twenty points per decade
            let grid = log_grid(1e-6, 10.0, 141);
            for (m, name) in [(&r, "fig4_receiver.csv"), (&e, "fig4_electronic.csv")] {
                let c = tgv_curve(m, &grid, FS_BUNDLED, true)?;
                run.emit(Some(&dir.join(name)), c.to_csv().as_bytes())?;
            }
        }
        Figure::Fig5 => {
            let grid = log_grid(1e-6, 10.0, 141);
            let o = optimal_tau(&e, &r, FS_BUNDLED, DEFAULT_EPSILON_SECU, &grid)?;
            run.emit(Some(&dir.join("fig5.csv")), o.to_csv().as_bytes())?;
            run.emit_json(
                Some(&dir.join("fig5_summary.json")),
                &json!({
                    "tau_opt": o.tau_opt,
                    "tau_opt_pessimistic": o.tau_opt_pessimistic,
                    "n0_white": o.n0_white,
                    "epsilon_secu": o.epsilon_secu,
                }),
            )?;
        }
        Figure::Fig6 => {
            let sc = run.scenario(None)?;
            let grid = skr_grid(&sc, 1e-6, 121)?;
            let high = with_scaled_flicker(&r, 40.0);
            let s = rin_sensitivity(&sc, &e, &r, &high, FS_BUNDLED, &grid)?;
            let curves = [
                ("fig6_characterized.csv", &s.characterized_low),
                ("fig6_fully_white.csv", &s.fully_white_low),
                ("fig6_characterized_high_flicker.csv", &s.characterized_high),
                ("fig6_fully_white_high_flicker.csv", &s.fully_white_high),
            ];
            let mut summary = serde_json::Map::new();
            for (name, c) in curves {
                run.emit(Some(&dir.join(name)), c.to_csv().as_bytes())?;
                summary.insert(name.trim_end_matches(".csv").to_string(), skr_summary(c));
            }
            summary.insert("high_flicker_factor".into(), json!(40.0));
            run.emit_json(
                Some(&dir.join("fig6_summary.json")),
                &Value::Object(summary),
            )?;
        }
        Figure::Fig8 => {
            // stand-in traces at a rate low enough to reach long windows
            let fs0 = 5e5;
            let window = 8192;
            run.seeds.extend([a.seed, a.seed + 1]);
            let tr = synthesize(&r, fs0, a.samples, a.seed)?;
            let te = synthesize(&e, fs0, a.samples, a.seed + 1)?;
            let ks = [1usize, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64];
            let durations: Vec<f64> = ks.iter().map(|k| (window * k) as f64 / fs0).collect();
            let c = ratio_curve(&te, &tr, &durations, window, Some((&e, &r)))?;
            run.emit(Some(&dir.join("fig8.csv")), c.to_csv().as_bytes())?;
            if !c.warnings.is_empty() {
                run.emit_json(Some(&dir.join("fig8_warnings.json")), &c.warnings)?;
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Res<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let mut run = Run {
        argv: std::env::args().collect(),
        inputs: Vec::new(),
        seeds: Vec::new(),
    };
    match cli.command {
        Command::Model(a) => cmd_model(a, &mut run),
        Command::Synth(a) => cmd_synth(a, &mut run),
        Command::Tgv(a) => cmd_tgv(a, &mut run),
        Command::Wss(a) => cmd_wss(a, &mut run),
        Command::White(a) => cmd_white(a, &mut run),
        Command::Calibrate(a) => cmd_calibrate(a, &mut run),
        Command::OptTau(a) => cmd_opt_tau(a, &mut run),
        Command::Skr(a) => cmd_skr(a, &mut run),
        Command::Reproduce(a) => cmd_reproduce(a, &mut run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind, msg) = match &err {
                CliError::Usage(m) => (2, "usage", m.clone()),
                CliError::Lib(e) => (
                    if e.is_validation() { 2 } else { 3 },
                    e.kind(),
                    e.to_string(),
                ),
            };
            eprintln!(
                "{}",
                json!({"error": kind, "message": msg, "exit_code": code})
            );
            ExitCode::from(code)
        }
    }
}
