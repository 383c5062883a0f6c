//! `benthos` command-line interface.
//!
//! Subcommands: `decay` (closed-form or macro decay curves), `micro`
//! (stochastic paths and ensembles), `macro` (the population dynamics
//! model), `converge` (micro-to-macro convergence study), `equilibrium`
//! (stationary analysis), `tipping` (abrasion sweep and threshold
//! bisection), `hist` (terminal histograms), `fit` (decay-law calibration),
//! and `preset` (parameter record dump).
//!
//! All durations take `h`/`d` suffixes and rates `/h`/`/d`; internally
//! everything is hours. `--seed` makes runs byte-reproducible.

// `!(x >= 0.0)`-style guards deliberately reject NaN; see the lib crate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod presets;
mod svg;
mod units;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use benthos::analysis::{
    bisect_tipping_macro, convergence_study, histogram_ensemble, tipping_sweep, Fate,
};
use benthos::calibrate::{compare_fits, fit_exponential, fit_long_memory, load_dataset, FitModel};
use benthos::macro_ide::{simulate_macro, solve_equilibrium, MacroState, Stability};
use benthos::micro::{ensemble, simulate_path, MicroState};
use benthos::{GrowthSpec, PathSeries, QuantileLift, RateMeasure, SimConfig};

use presets::Preset;
use units::{Duration, Rate};

#[derive(Parser)]
#[command(
    name = "benthos",
    version,
    about = "Micro-macro benthic-algae population dynamics toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; every output is byte-reproducible for a fixed seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Worker threads for ensembles and sweeps (default: BENTHOS_WORKERS
    /// or all cores). Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Decay-only curves: the closed form (1 + eta beta t)^(-alpha), or the
    /// macroscopic solver when --m is given.
    Decay(DecayArgs),
    /// Stochastic spin-process paths and ensembles.
    Micro(MicroArgs),
    /// The macroscopic population dynamics model.
    #[command(name = "macro")]
    MacroCmd(MacroArgs),
    /// Micro-to-macro convergence-rate study with a power-law fit.
    Converge(ConvergeArgs),
    /// Stationary equilibria of the macroscopic model.
    Equilibrium(EquilibriumArgs),
    /// Abrasion (eta) sweep and tipping-threshold bisection.
    Tipping(TippingArgs),
    /// Terminal-value histogram of a micro ensemble.
    Hist(HistArgs),
    /// Fit the long-memory and exponential decay laws to a dataset.
    Fit(FitArgs),
    /// Print a parameter preset as JSON.
    Preset(PresetArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Parameter preset: case1, case2, sec3.2, or sec3.3.
    #[arg(long)]
    preset: Option<String>,

    /// Gamma shape of the rate measure (overrides the preset).
    #[arg(long)]
    alpha: Option<f64>,

    /// Gamma scale of the rate measure, 1/hour (overrides the preset).
    #[arg(long)]
    beta: Option<f64>,

    /// Abrasion multiplier applied as beta -> eta*beta.
    #[arg(long)]
    eta: Option<f64>,

    /// Intrinsic growth rate with unit suffix, e.g. "0.3/d".
    #[arg(long)]
    r: Option<Rate>,

    /// Constant Allee threshold in (0,1).
    #[arg(long)]
    a: Option<f64>,

    /// Use logistic growth (g+ = 1, g- = 0) instead of Allee.
    #[arg(long)]
    logistic: bool,
}

impl ModelArgs {
    fn preset(&self) -> Result<Option<Preset>> {
        self.preset.as_deref().map(presets::lookup).transpose()
    }

    fn measure(&self) -> Result<RateMeasure> {
        if self.alpha.is_none() && self.beta.is_none() && self.eta.is_none() {
            if let Some(p) = self.preset()? {
                return p.rate_measure();
            }
        }
        let base = self.preset()?.map(|p| p.measure);
        let alpha = self
            .alpha
            .or(base.map(|m| m.alpha))
            .ok_or_else(|| anyhow!("--alpha is required when no --preset is given"))?;
        let beta = self
            .beta
            .or(base.map(|m| m.beta))
            .ok_or_else(|| anyhow!("--beta is required when no --preset is given"))?;
        let eta = self.eta.or(base.map(|m| m.eta)).unwrap_or(1.0);
        Ok(RateMeasure::with_eta(alpha, beta, eta)?)
    }

    /// Growth spec with decay disabled (r = 0) unless growth flags or a
    /// growth-bearing preset are present.
    fn growth_or_none(&self) -> Result<GrowthSpec> {
        if self.logistic {
            let r = self.r.map(|r| r.per_hour).unwrap_or(0.0);
            return Ok(GrowthSpec::logistic(r)?);
        }
        if self.r.is_some() || self.a.is_some() {
            let r = self.r.map(|r| r.per_hour).unwrap_or(0.3 / 24.0);
            let a = self.a.unwrap_or(0.25);
            return Ok(GrowthSpec::allee_constant(r, a)?);
        }
        if let Some(p) = self.preset()? {
            if p.growth.is_some() {
                return p.growth_spec();
            }
        }
        Ok(GrowthSpec::allee_constant(0.0, 0.25)?)
    }

    fn growth_required(&self) -> Result<GrowthSpec> {
        if self.logistic || self.r.is_some() || self.a.is_some() {
            return self.growth_or_none();
        }
        match self.preset()? {
            Some(p) if p.growth.is_some() => p.growth_spec(),
            _ => bail!("growth parameters required: pass --r/--a, --logistic, or a sec3.* preset"),
        }
    }
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Time step with unit suffix (preset default, else "0.001d").
    #[arg(long)]
    dt: Option<Duration>,

    /// Horizon with unit suffix (preset default, else "7d").
    #[arg(long)]
    horizon: Option<Duration>,
}

impl SimArgs {
    fn config(&self, model: &ModelArgs, seed: u64) -> Result<SimConfig> {
        let preset = model.preset()?;
        let dt = self
            .dt
            .map(|d| d.hours)
            .or(preset.as_ref().and_then(|p| p.dt_days.map(|d| d * 24.0)))
            .unwrap_or(0.024);
        let horizon = self
            .horizon
            .map(|d| d.hours)
            .or(preset
                .as_ref()
                .and_then(|p| p.horizon_days.map(|d| d * 24.0)))
            .unwrap_or(168.0);
        Ok(SimConfig::new(dt, horizon, seed)?)
    }
}

#[derive(Args)]
struct DecayArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Curve end time, e.g. "6h".
    #[arg(long, default_value = "6h")]
    t_max: Duration,

    /// Sample spacing for the closed-form curve.
    #[arg(long, default_value = "0.5h")]
    step: Duration,

    /// Solve the macroscopic model on an M-node lift instead of evaluating
    /// the closed form.
    #[arg(long, alias = "M")]
    m: Option<usize>,

    /// Macro-mode time step.
    #[arg(long, default_value = "0.001h")]
    dt: Duration,

    /// Output CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Also render the curve as an SVG line plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct MicroArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,

    /// Number of spin sites M.
    #[arg(long, alias = "M")]
    m: Option<usize>,

    /// Run exactly this many steps instead of the horizon (0 = emit the
    /// initial state only).
    #[arg(long)]
    steps: Option<u64>,

    /// Number of ensemble paths; 1 writes a single trajectory.
    #[arg(long, default_value_t = 1)]
    paths: usize,

    /// Dump per-site bits (t,i,bit) instead of the aggregate; single-path
    /// runs only, using the direct per-step sampler.
    #[arg(long)]
    per_site: bool,

    /// Output CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Ensemble summary JSON path.
    #[arg(long)]
    summary: Option<PathBuf>,

    /// Also render the trajectory as an SVG line plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct MacroArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,

    /// Number of lift nodes M.
    #[arg(long, alias = "M")]
    m: Option<usize>,

    /// Uniform initial occupancy.
    #[arg(long, default_value_t = 1.0)]
    x0: f64,

    /// Output CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Node dump CSV (t,R_i,x_hat_i), thinned by --node-stride.
    #[arg(long)]
    nodes: Option<PathBuf>,

    /// Record every k-th step in the node dump.
    #[arg(long, default_value_t = 100)]
    node_stride: usize,

    /// Also render the trajectory as an SVG line plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,

    /// Smallest level l (M = 2^l).
    #[arg(long, default_value_t = 1)]
    l_min: u32,

    /// Largest level l.
    #[arg(long, default_value_t = 12)]
    l_max: u32,

    /// Independent micro seeds averaged per level.
    #[arg(long, default_value_t = 16)]
    seeds: usize,

    /// Disable growth (r = 0), the decay-only study.
    #[arg(long)]
    no_growth: bool,

    /// Er(M) table CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Power-law fit JSON path.
    #[arg(long)]
    fit_json: Option<PathBuf>,
}

#[derive(Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Lift nodes for the equilibrium profile.
    #[arg(long, alias = "M", default_value_t = 1024)]
    m: usize,

    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct TippingArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,

    /// Comma-separated abrasion multipliers to classify.
    #[arg(long, value_delimiter = ',')]
    etas: Vec<f64>,

    /// Bisection bracket "lo:hi" for the tipping threshold.
    #[arg(long)]
    bisect: Option<String>,

    /// Bisection bracket width target.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,

    /// Macro lift nodes.
    #[arg(long, alias = "M", default_value_t = 1024)]
    m: usize,

    /// Classification CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Sweep/bracket JSON path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct HistArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    sim: SimArgs,

    /// Number of spin sites M.
    #[arg(long, alias = "M", default_value_t = 128)]
    m: usize,

    /// Ensemble size (10000 restores the full-scale experiment).
    #[arg(long, default_value_t = 2000)]
    paths: usize,

    /// Histogram bins on `[0,1]`.
    #[arg(long, default_value_t = 50)]
    bins: usize,

    /// Histogram CSV path (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Modes/summary JSON path.
    #[arg(long)]
    json: Option<PathBuf>,

    /// Also render the histogram as an SVG bar chart.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input CSV with header time_s,avg,h1,...,hN.
    #[arg(long)]
    input: PathBuf,

    /// Model to report: long-memory, exponential, or both.
    #[arg(long, default_value = "both")]
    model: String,

    /// Fit JSON path (stdout when omitted).
    #[arg(long)]
    json: Option<PathBuf>,

    /// Fitted-curve CSV (t,observed,fitted).
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Observed points plus fitted curve(s) as an SVG line plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PresetArgs {
    /// Preset name: case1, case2, sec3.2, or sec3.3.
    #[arg(long)]
    name: String,

    /// JSON path (stdout when omitted).
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers(cli.workers);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn init_workers(workers: Option<usize>) {
    let n = workers.or_else(|| {
        std::env::var("BENTHOS_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn init_workers(_workers: Option<usize>) {}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Decay(args) => cmd_decay(args, cli.seed),
        Command::Micro(args) => cmd_micro(args, cli.seed),
        Command::MacroCmd(args) => cmd_macro(args, cli.seed),
        Command::Converge(args) => cmd_converge(args, cli.seed),
        Command::Equilibrium(args) => cmd_equilibrium(args),
        Command::Tipping(args) => cmd_tipping(args, cli.seed),
        Command::Hist(args) => cmd_hist(args, cli.seed),
        Command::Fit(args) => cmd_fit(args),
        Command::Preset(args) => cmd_preset(args),
    }
}

fn write_out(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn series_csv(series: &PathSeries, header: &str) -> String {
    let mut out = String::with_capacity(series.len() * 24);
    out.push_str(header);
    out.push('\n');
    for (t, x) in series.times.iter().zip(&series.values) {
        let _ = writeln!(out, "{t},{x}");
    }
    out
}

fn series_svg(series: &PathSeries, label: &str, title: &str) -> Result<String> {
    let s = svg::Series {
        label: label.into(),
        points: series
            .times
            .iter()
            .copied()
            .zip(series.values.iter().copied())
            .collect(),
    };
    svg::line_plot(&[s], title, "t (hours)", "X")
}

fn cmd_decay(args: DecayArgs, seed: u64) -> Result<()> {
    let measure = args.model.measure()?;
    let series = match args.m {
        None => {
            if args.step.hours <= 0.0 {
                bail!("--step must be positive");
            }
            let n = (args.t_max.hours / args.step.hours).round() as usize;
            let times: Vec<f64> = (0..=n).map(|k| k as f64 * args.step.hours).collect();
            let values = times
                .iter()
                .map(|&t| measure.laplace_transform(t))
                .collect::<benthos::Result<Vec<f64>>>()?;
            PathSeries { times, values }
        }
        Some(m) => {
            let lift = QuantileLift::build(&measure, m)?;
            let spec = GrowthSpec::allee_constant(0.0, 0.25)?; // decay only
            let config = SimConfig::new(args.dt.hours, args.t_max.hours, seed)?;
            simulate_macro(&vec![1.0; m], &lift, &spec, &config)?
        }
    };
    write_out(args.output.as_deref(), &series_csv(&series, "t,X"))?;
    if let Some(path) = &args.svg {
        fs::write(path, series_svg(&series, "decay", "population decay")?)?;
    }
    Ok(())
}

fn cmd_micro(args: MicroArgs, seed: u64) -> Result<()> {
    let measure = args.model.measure()?;
    let spec = args.model.growth_or_none()?;
    let m = args
        .m
        .or(args.model.preset()?.and_then(|p| p.m))
        .unwrap_or(128);
    let lift = QuantileLift::build(&measure, m)?;
    let initial = vec![1u8; m];

    let config = match args.steps {
        Some(0) => {
            // zero steps: emit the initial state and stop
            let state = MicroState::fully_occupied(lift, seed);
            let content = if args.per_site {
                let mut out = String::from("t,i,bit\n");
                for (i, b) in state.bits().iter().enumerate() {
                    let _ = writeln!(out, "0,{i},{b}");
                }
                out
            } else {
                format!("t,X\n0,{}\n", state.aggregate())
            };
            return write_out(args.output.as_deref(), &content);
        }
        Some(steps) => {
            let base = args.sim.config(&args.model, seed)?;
            SimConfig::new(base.dt_hours(), base.dt_hours() * steps as f64, seed)?
        }
        None => args.sim.config(&args.model, seed)?,
    };

    if args.paths <= 1 {
        if args.per_site {
            // direct per-step sampler so every site is observable
            let mut state = MicroState::fully_occupied(lift, seed);
            let mut out = String::from("t,i,bit\n");
            for (i, b) in state.bits().iter().enumerate() {
                let _ = writeln!(out, "{},{i},{b}", state.t());
            }
            for _ in 0..config.n_steps() {
                state.step(&spec, config.dt_hours())?;
                for (i, b) in state.bits().iter().enumerate() {
                    let _ = writeln!(out, "{},{i},{b}", state.t());
                }
            }
            return write_out(args.output.as_deref(), &out);
        }
        let series = simulate_path(&initial, &lift, &spec, &config)?;
        write_out(args.output.as_deref(), &series_csv(&series, "t,X"))?;
        if let Some(path) = &args.svg {
            fs::write(path, series_svg(&series, "micro", "stochastic path")?)?;
        }
        return Ok(());
    }

    if args.per_site {
        bail!("--per-site applies to single-path runs (--paths 1)");
    }
    let summary = ensemble(&initial, &lift, &spec, &config, args.paths)?;
    let mut out = String::from("path_id,X_T\n");
    for (k, x) in summary.terminal.iter().enumerate() {
        let _ = writeln!(out, "{k},{x}");
    }
    write_out(args.output.as_deref(), &out)?;

    let n = summary.terminal.len() as f64;
    let mean = summary.terminal.iter().sum::<f64>() / n;
    let variance = if summary.terminal.len() > 1 {
        summary
            .terminal
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let report = json!({
        "mean": mean,
        "variance": variance,
        "n_paths": summary.n_paths,
        "seed": summary.seed,
    });
    if let Some(path) = &args.summary {
        fs::write(
            path,
            format!("{}\n", serde_json::to_string_pretty(&report)?),
        )?;
    }
    Ok(())
}

fn cmd_macro(args: MacroArgs, seed: u64) -> Result<()> {
    let measure = args.model.measure()?;
    let spec = args.model.growth_or_none()?;
    let m = args
        .m
        .or(args.model.preset()?.and_then(|p| p.m))
        .unwrap_or(1024);
    if !(0.0..=1.0).contains(&args.x0) {
        bail!("--x0 must lie in [0,1]");
    }
    let lift = QuantileLift::build(&measure, m)?;
    let config = args.sim.config(&args.model, seed)?;
    let series = simulate_macro(&vec![args.x0; m], &lift, &spec, &config)?;
    write_out(args.output.as_deref(), &series_csv(&series, "t,X_hat"))?;

    if let Some(path) = &args.nodes {
        let stride = args.node_stride.max(1);
        let mut state = MacroState::uniform(args.x0, lift.clone())?;
        let mut out = String::from("t,R_i,x_hat_i\n");
        let dump = |state: &MacroState, out: &mut String| {
            for (r, x) in lift.rates().iter().zip(state.occupancy()) {
                let _ = writeln!(out, "{},{r},{x}", state.t());
            }
        };
        dump(&state, &mut out);
        for k in 1..=config.n_steps() {
            state.step(&spec, config.dt_hours())?;
            if k % stride == 0 || k == config.n_steps() {
                dump(&state, &mut out);
            }
        }
        fs::write(path, out)?;
    }
    if let Some(path) = &args.svg {
        fs::write(
            path,
            series_svg(&series, "macro", "population dynamics model")?,
        )?;
    }
    Ok(())
}

fn cmd_converge(args: ConvergeArgs, seed: u64) -> Result<()> {
    if args.l_min > args.l_max {
        bail!("--l-min must not exceed --l-max");
    }
    let measure = args.model.measure()?;
    let spec = if args.no_growth {
        GrowthSpec::allee_constant(0.0, 0.25)?
    } else {
        args.model.growth_required()?
    };
    let config = args.sim.config(&args.model, seed)?;
    let levels: Vec<u32> = (args.l_min..=args.l_max).collect();
    let report = convergence_study(&measure, &spec, &config, &levels, args.seeds)?;

    let mut out = String::from("l,M,Er\n");
    for p in &report.points {
        let _ = writeln!(out, "{},{},{}", p.level, p.m, p.er);
    }
    write_out(args.output.as_deref(), &out)?;

    let fit = json!({
        "c": report.fit.c,
        "p": report.fit.p,
        "r_squared": report.fit.r_squared,
        "n_seeds": args.seeds,
        "per_seed_er": report.per_seed,
    });
    let fit_text = format!("{}\n", serde_json::to_string_pretty(&fit)?);
    match &args.fit_json {
        Some(path) => fs::write(path, fit_text)?,
        None => {
            if args.output.is_some() {
                print!("{fit_text}");
            }
        }
    }
    Ok(())
}

fn cmd_equilibrium(args: EquilibriumArgs) -> Result<()> {
    let measure = args.model.measure()?;
    let spec = args.model.growth_required()?;
    let result = solve_equilibrium(&measure, &spec, args.m)?;
    let roots: Vec<_> = result
        .roots
        .iter()
        .map(|r| {
            json!({
                "x": r.x,
                "classification": match r.classification {
                    Stability::Stable => "stable",
                    Stability::Saddle => "saddle",
                },
            })
        })
        .collect();
    let report = json!({
        "roots": roots,
        "extinction_only": result.extinction_only,
        "profile_m": args.m,
        "profile": result.profile,
    });
    write_out(
        args.json.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )
}

fn cmd_tipping(args: TippingArgs, seed: u64) -> Result<()> {
    let measure = args.model.measure()?;
    let spec = args.model.growth_required()?;
    let config = args.sim.config(&args.model, seed)?;

    let mut csv = String::from("eta,classification,terminal_X\n");
    let mut report = serde_json::Map::new();

    if !args.etas.is_empty() {
        let sweep = tipping_sweep(&args.etas, &measure, &spec, &config, args.m)?;
        for p in &sweep.points {
            let _ = writeln!(
                csv,
                "{},{},{}",
                p.eta,
                match p.fate {
                    Fate::Persistent => "persistent",
                    Fate::Extinct => "extinct",
                },
                p.terminal
            );
        }
        if let Some((lo, hi)) = sweep.bracket {
            report.insert("sweep_bracket".into(), json!([lo, hi]));
        }
    }

    if let Some(bracket) = &args.bisect {
        let (lo, hi) = bracket
            .split_once(':')
            .ok_or_else(|| anyhow!("--bisect expects \"lo:hi\", got {bracket:?}"))?;
        let lo: f64 = lo.trim().parse().context("parsing --bisect lower bound")?;
        let hi: f64 = hi.trim().parse().context("parsing --bisect upper bound")?;
        let (eta_lo, eta_hi) =
            bisect_tipping_macro(lo, hi, args.tol, &measure, &spec, &config, args.m)?;
        report.insert("bisect_bracket".into(), json!([eta_lo, eta_hi]));
        report.insert("tol".into(), json!(args.tol));
    }

    if args.etas.is_empty() && args.bisect.is_none() {
        bail!("nothing to do: pass --etas and/or --bisect lo:hi");
    }

    if !args.etas.is_empty() {
        write_out(args.output.as_deref(), &csv)?;
    }
    if !report.is_empty() {
        let text = format!(
            "{}\n",
            serde_json::to_string_pretty(&serde_json::Value::Object(report))?
        );
        match &args.json {
            Some(path) => fs::write(path, text)?,
            None => print!("{text}"),
        }
    }
    Ok(())
}

fn cmd_hist(args: HistArgs, seed: u64) -> Result<()> {
    let measure = args.model.measure()?;
    let spec = args.model.growth_required()?;
    let config = args.sim.config(&args.model, seed)?;
    let hist = histogram_ensemble(
        measure.eta(),
        args.m,
        args.paths,
        args.bins,
        &measure,
        &spec,
        &config,
    )?;

    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (j, c) in hist.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", hist.bin_edges[j], hist.bin_edges[j + 1]);
    }
    write_out(args.output.as_deref(), &out)?;

    let report = json!({
        "modes": hist.modes,
        "zero_bin_share": hist.zero_bin_share(),
        "n_paths": args.paths,
        "m": args.m,
        "eta": measure.eta(),
        "seed": seed,
    });
    if let Some(path) = &args.json {
        fs::write(
            path,
            format!("{}\n", serde_json::to_string_pretty(&report)?),
        )?;
    }
    if let Some(path) = &args.svg {
        fs::write(
            path,
            svg::bar_chart(
                &hist.bin_edges,
                &hist.counts,
                "terminal population",
                "X",
                "count",
            )?,
        )?;
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    if !args.input.exists() {
        bail!("--input: file {} does not exist", args.input.display());
    }
    let file =
        fs::File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let data = load_dataset(file)?;

    let mut warnings: Vec<String> = Vec::new();
    let (report, fitted_primary, fitted_secondary) = match args.model.as_str() {
        "long-memory" => {
            let fit = fit_long_memory(&data)?;
            if !fit.converged {
                warnings.push("long-memory optimizer stopped before convergence".into());
            }
            let FitModel::LongMemory { alpha, beta } = fit.model else {
                unreachable!()
            };
            (
                json!({
                    "model": "long_memory",
                    "params": {"alpha": alpha, "beta_per_hour": beta},
                    "sse": fit.sse,
                    "warnings": warnings,
                }),
                fit.fitted,
                None,
            )
        }
        "exponential" => {
            let fit = fit_exponential(&data)?;
            if !fit.converged {
                warnings.push("exponential rate pinned at a search bound".into());
            }
            let FitModel::Exponential { lambda } = fit.model else {
                unreachable!()
            };
            (
                json!({
                    "model": "exponential",
                    "params": {"lambda_per_hour": lambda},
                    "sse": fit.sse,
                    "warnings": warnings,
                }),
                fit.fitted,
                None,
            )
        }
        "both" => {
            let cmp = compare_fits(&data)?;
            if !cmp.long_memory.converged {
                warnings.push("long-memory optimizer stopped before convergence".into());
            }
            if !cmp.exponential.converged {
                warnings.push("exponential rate pinned at a search bound".into());
            }
            let FitModel::LongMemory { alpha, beta } = cmp.long_memory.model else {
                unreachable!()
            };
            let FitModel::Exponential { lambda } = cmp.exponential.model else {
                unreachable!()
            };
            (
                json!({
                    "model": "both",
                    "long_memory": {
                        "params": {"alpha": alpha, "beta_per_hour": beta},
                        "sse": cmp.long_memory.sse,
                    },
                    "exponential": {
                        "params": {"lambda_per_hour": lambda},
                        "sse": cmp.exponential.sse,
                    },
                    "sse_ratio": cmp.sse_ratio,
                    "exp_residuals_fitted_minus_observed": cmp.exp_residuals,
                    "warnings": warnings,
                }),
                cmp.long_memory.fitted,
                Some(cmp.exponential.fitted),
            )
        }
        other => bail!("--model must be long-memory, exponential, or both; got {other:?}"),
    };

    write_out(
        args.json.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&report)?),
    )?;

    if let Some(path) = &args.output {
        let mut out = String::from("t,observed,fitted\n");
        for ((t, y), f) in data.times().iter().zip(data.average()).zip(&fitted_primary) {
            let _ = writeln!(out, "{t},{y},{f}");
        }
        fs::write(path, out)?;
    }

    if let Some(path) = &args.svg {
        let mut series = vec![
            svg::Series {
                label: "observed".into(),
                points: data
                    .times()
                    .iter()
                    .copied()
                    .zip(data.average().iter().copied())
                    .collect(),
            },
            svg::Series {
                label: "long-memory fit".into(),
                points: data
                    .times()
                    .iter()
                    .copied()
                    .zip(fitted_primary.iter().copied())
                    .collect(),
            },
        ];
        if let Some(second) = fitted_secondary {
            series.push(svg::Series {
                label: "exponential fit".into(),
                points: data.times().iter().copied().zip(second).collect(),
            });
        }
        fs::write(
            path,
            svg::line_plot(&series, "covering-ratio decay", "t (hours)", "X")?,
        )?;
    }
    Ok(())
}

fn cmd_preset(args: PresetArgs) -> Result<()> {
    let preset = presets::lookup(&args.name)?;
    write_out(
        args.json.as_deref(),
        &format!("{}\n", serde_json::to_string_pretty(&preset)?),
    )
}
