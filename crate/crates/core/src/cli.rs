//! `padm`: run scenarios, sweep a parameter, compare controllers, and
//! analyze saved traces.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{analyze_trace, inf_norm_error, scaling_fit, scenario_report, AnalysisReport, ScalingFit, StickingMetrics};
use crate::scenario::{load_scenario, set_param, with_controller, LoadedScenario, ScenarioError, SweepParam};
use crate::sim::{run_scenario, ControllerKind, Scenario, SimError, Trace};
use crate::trace_csv::{read_trace, write_trace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const OUT_DIR_ENV: &str = "PADM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "padm", version, about = "Passive admittance control simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "padm-out")]
    pub out: PathBuf,
    /// Override the plant integration step (s).
    #[arg(long, global = true)]
    pub dt_physics: Option<f64>,
    /// Seed for the velocity-noise generator, when the scenario enables noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario; write its trace and report.
    Run { scenario: PathBuf },
    /// Run a scenario once per parameter value, concurrently.
    Sweep {
        scenario: PathBuf,
        /// eps, K, K_P, M_n or wall.stiffness
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
    },
    /// Run a scenario under several controllers.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "standard,passive")]
        controllers: Vec<ControllerKind>,
        /// Low-pass cutoff for the force columns of the plot data. Traces
        /// and reports always use raw signals.
        #[arg(long)]
        smooth_hz: Option<f64>,
    },
    /// Print the report for a saved trace.
    Analyze {
        trace: PathBuf,
        /// Scenario the trace came from; enables wall sticking metrics.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub enum CliError {
    Invalid(String),
    Diverged(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Diverged(_) => EXIT_DIVERGED,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Diverged(m) | CliError::Io(m) => m,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

struct Context {
    out: PathBuf,
    dt_physics: Option<f64>,
    seed: Option<u64>,
    quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", msg.as_ref());
        }
    }

    fn load(&self, path: &Path) -> Result<LoadedScenario, CliError> {
        let mut loaded = load_scenario(path)?;
        let s = &mut loaded.scenario;
        if let Some(dt) = self.dt_physics {
            s.sim.dt_physics = dt;
        }
        if let (Some(seed), Some(noise)) = (self.seed, s.noise.as_mut()) {
            noise.seed = seed;
        }
        s.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        Ok(loaded)
    }

    fn ensure_out(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    fn write_trace(&self, name: &str, trace: &Trace) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_trace(trace, &mut w).map_err(|e| io_err(&path, e))?;
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

/// Runs and splits a divergence into its partial trace and message.
fn execute(scenario: &Scenario) -> (Option<Trace>, Option<CliError>) {
    match run_scenario(scenario) {
        Ok(t) => (Some(t), None),
        Err(SimError::Diverged { time, reason, trace }) => {
            let msg = format!("{}: diverged at t = {time:.4} s ({reason})", scenario.name);
            (Some(*trace), Some(CliError::Diverged(msg)))
        }
        Err(e @ SimError::Validation(_)) => (None, Some(CliError::Invalid(e.to_string()))),
    }
}

fn summarize(report: &AnalysisReport) -> String {
    let e: Vec<String> = report.inf_norm_e.iter().map(|x| format!("{x:.4e}")).collect();
    let mut line = format!("{} [{}]: |e_nr|_inf = [{}]", report.scenario, report.controller, e.join(", "));
    if let Some(g) = report.l2_gain_ratio {
        line.push_str(&format!(", L2 ratio = {g:.4}"));
    }
    for s in &report.sticking {
        line.push_str(&format!(", drift = {:.3}, release = {:.3} s", s.max_drift, s.release_delay));
    }
    line
}

fn cmd_run(ctx: &Context, path: &Path) -> Result<(), CliError> {
    let loaded = ctx.load(path)?;
    let base = stem(path);
    let (trace, err) = execute(&loaded.scenario);
    if let Some(trace) = trace {
        ctx.ensure_out()?;
        let trace_name = loaded.outputs.trace.clone().unwrap_or_else(|| format!("{base}.trace.csv"));
        let report_name = loaded.outputs.report.clone().unwrap_or_else(|| format!("{base}.report.toml"));
        let report = scenario_report(&loaded.scenario, &trace);
        let tp = ctx.write_trace(&trace_name, &trace)?;
        let rp = ctx.write_text(&report_name, &report.to_toml())?;
        ctx.say(summarize(&report));
        ctx.say(format!("wrote {} and {}", tp.display(), rp.display()));
    }
    err.map_or(Ok(()), Err)
}

#[derive(Debug, Serialize)]
struct SweepRun {
    value: f64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<AnalysisReport>,
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    scenario: String,
    param: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    scaling: Option<ScalingFit>,
    runs: Vec<SweepRun>,
}

fn value_tag(v: f64) -> String {
    format!("{v}")
}

fn cmd_sweep(ctx: &Context, path: &Path, param: &str, values: &[f64]) -> Result<(), CliError> {
    let param: SweepParam = param.parse()?;
    let loaded = ctx.load(path)?;
    let scenarios = values
        .iter()
        .map(|&v| set_param(&loaded.scenario, param, v).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(move || execute(sc))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    ctx.ensure_out()?;
    let base = stem(path);
    let mut runs = Vec::new();
    let mut first_err = None;
    let mut points = Vec::new();
    for ((value, sc), (trace, err)) in values.iter().zip(&scenarios).zip(results) {
        let mut run = SweepRun { value: *value, status: "ok".into(), trace: None, report: None };
        if let Some(trace) = trace {
            let name = format!("{base}.{}-{}.trace.csv", param.name(), value_tag(*value));
            ctx.write_trace(&name, &trace)?;
            let report = scenario_report(sc, &trace);
            if err.is_none() {
                let worst = (0..trace.meta.dim).map(|i| inf_norm_error(&trace, i)).fold(0.0, f64::max);
                match param {
                    SweepParam::Eps => points.push((*value, worst)),
                    SweepParam::K => points.push((1.0 / value, worst)),
                    _ => {}
                }
            }
            run.trace = Some(name);
            run.report = Some(report);
        }
        if let Some(e) = err {
            run.status = match e {
                CliError::Diverged(_) => "diverged".into(),
                _ => "failed".into(),
            };
            eprintln!("{}", e.message());
            first_err.get_or_insert(e);
        }
        runs.push(run);
    }
    let summary = SweepSummary {
        scenario: loaded.scenario.name.clone(),
        param: param.name().into(),
        scaling: scaling_fit(&points).ok(),
        runs,
    };
    let text = toml::to_string(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    let p = ctx.write_text(&format!("{base}.sweep.toml"), &text)?;
    for r in &summary.runs {
        if let Some(rep) = &r.report {
            ctx.say(format!("{} = {}: {}", summary.param, r.value, summarize(rep)));
        }
    }
    if let Some(fit) = &summary.scaling {
        ctx.say(format!("ratios = {:?}, log-log slope = {:.3}", fit.ratios, fit.slope));
    }
    ctx.say(format!("wrote {}", p.display()));
    first_err.map_or(Ok(()), Err)
}

#[derive(Debug, Serialize)]
struct CompareRun {
    controller: String,
    status: String,
    trace: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sticking: Vec<StickingMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<AnalysisReport>,
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    scenario: String,
    runs: Vec<CompareRun>,
}

/// Time-aligned columns for plotting: t, then q, q_n and τ_a per run and axis.
/// First-order low-pass over uniformly sampled `x`. Display only.
fn low_pass(x: &[f64], dt: f64, cutoff_hz: f64) -> Vec<f64> {
    let a = dt / (dt + 1.0 / (std::f64::consts::TAU * cutoff_hz));
    let mut y = x.first().copied().unwrap_or(0.0);
    x.iter()
        .map(|&v| {
            y += a * (v - y);
            y
        })
        .collect()
}

fn plot_data(runs: &[(String, &Trace)], smooth_hz: Option<f64>) -> String {
    let mut out = String::from("# t");
    for (label, tr) in runs {
        for i in 0..tr.meta.dim {
            out.push_str(&format!(" {label}.q[{i}] {label}.qn[{i}] {label}.tau_h[{i}] {label}.tau_a[{i}]"));
        }
    }
    out.push('\n');
    let n = runs.iter().map(|r| r.1.len()).min().unwrap_or(0);
    // per run, per axis: (tau_h, tau_a), filtered when asked
    let forces: Vec<Vec<(Vec<f64>, Vec<f64>)>> = runs
        .iter()
        .map(|(_, tr)| {
            let dt = if tr.len() > 1 { tr.samples[1].t - tr.samples[0].t } else { 1.0 };
            (0..tr.meta.dim)
                .map(|i| {
                    let h: Vec<f64> = tr.samples.iter().map(|s| s.tau_h[i]).collect();
                    let a: Vec<f64> = tr.samples.iter().map(|s| s.tau_a[i]).collect();
                    match smooth_hz {
                        Some(fc) => (low_pass(&h, dt, fc), low_pass(&a, dt, fc)),
                        None => (h, a),
                    }
                })
                .collect()
        })
        .collect();
    for k in 0..n {
        out.push_str(&format!("{}", runs[0].1.samples[k].t));
        for ((_, tr), f) in runs.iter().zip(&forces) {
            let s = &tr.samples[k];
            for (i, (h, a)) in f.iter().enumerate() {
                out.push_str(&format!(" {} {} {} {}", s.q[i], s.q_n[i], h[k], a[k]));
            }
        }
        out.push('\n');
    }
    out
}

fn cmd_compare(
    ctx: &Context,
    path: &Path,
    controllers: &[ControllerKind],
    smooth_hz: Option<f64>,
) -> Result<(), CliError> {
    if controllers.len() < 2 {
        return Err(CliError::Invalid("compare needs at least two controllers".into()));
    }
    if smooth_hz.is_some_and(|f| !f.is_finite() || f <= 0.0) {
        return Err(CliError::Invalid("--smooth-hz must be positive".into()));
    }
    let loaded = ctx.load(path)?;
    let scenarios = controllers
        .iter()
        .map(|&k| with_controller(&loaded.scenario, k).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(move || execute(sc))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    ctx.ensure_out()?;
    let base = stem(path);
    let mut runs = Vec::new();
    let mut plotted = Vec::new();
    let mut first_err = None;
    for (i, (sc, (trace, err))) in scenarios.iter().zip(&results).enumerate() {
        let label = format!("{i}-{}", sc.controller.kind.name());
        let mut run = CompareRun {
            controller: sc.controller.kind.name().into(),
            status: if err.is_none() { "ok".into() } else { "diverged".into() },
            trace: None,
            sticking: vec![],
            report: None,
        };
        if let Some(trace) = trace {
            let name = format!("{base}.{label}.trace.csv");
            ctx.write_trace(&name, trace)?;
            let report = scenario_report(sc, trace);
            run.sticking = report.sticking.clone();
            run.trace = Some(name);
            run.report = Some(report);
            plotted.push((label, trace));
        }
        if let Some(e) = err {
            eprintln!("{}", e.message());
            first_err.get_or_insert(e.clone());
        }
        runs.push(run);
    }
    let summary = CompareSummary { scenario: loaded.scenario.name.clone(), runs };
    let text = toml::to_string(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    let p = ctx.write_text(&format!("{base}.compare.toml"), &text)?;
    ctx.write_text(&format!("{base}.compare.dat"), &plot_data(&plotted, smooth_hz))?;
    for r in &summary.runs {
        if let Some(rep) = &r.report {
            ctx.say(summarize(rep));
        }
    }
    ctx.say(format!("wrote {}", p.display()));
    first_err.map_or(Ok(()), Err)
}

fn cmd_analyze(ctx: &Context, trace_path: &Path, scenario: Option<&Path>) -> Result<(), CliError> {
    let file = fs::File::open(trace_path).map_err(|e| io_err(trace_path, e))?;
    let trace = read_trace(std::io::BufReader::new(file)).map_err(|e| CliError::Invalid(format!("{}: {e}", trace_path.display())))?;
    let report = match scenario {
        Some(p) => scenario_report(&ctx.load(p)?.scenario, &trace),
        None => analyze_trace(&trace, &[]),
    };
    print!("{}", report.to_toml());
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let ctx = Context { out: cli.out, dt_physics: cli.dt_physics, seed: cli.seed, quiet: cli.quiet };
    let result = match &cli.command {
        Command::Run { scenario } => cmd_run(&ctx, scenario),
        Command::Sweep { scenario, param, values } => cmd_sweep(&ctx, scenario, param, values),
        Command::Compare { scenario, controllers, smooth_hz } => cmd_compare(&ctx, scenario, controllers, *smooth_hz),
        Command::Analyze { trace, scenario } => cmd_analyze(&ctx, trace, scenario.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
