//! Command-line front end: single computations, simulations and the
//! success-probability figures.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for numerical failures.

pub mod config;
pub mod figure;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chargelot::des::{simulate_general, simulate_markovian, RunLength, SimConfig};
use chargelot::diffusion::{
    diffusion_success_estimate, invariant_density, scaled_params, simulate_sde, DiffusionSpec, ScalingRegime, SdeConfig,
};
use chargelot::exact::{bounds, metrics, stationary_distribution};
use chargelot::fluid::{fluid_fixed_point, fluid_fixed_point_raw, DistributionSpec};
use chargelot::stats::CiMethod;
use chargelot::ModelParams;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use config::Settings;
use figure::{default_grid, default_sim_config, figure_rows, panel_name, plot_script, write_csv, FigureSpec};

pub const DEFAULT_SEED: u64 = 2016;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(chargelot::Error),
    Io(io::Error),
}

impl std::error::Error for CliError {}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<chargelot::Error> for CliError {
    fn from(e: chargelot::Error) -> Self {
        match e {
            chargelot::Error::InvalidParams(m) => CliError::Usage(m),
            chargelot::Error::InvalidState { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    JsonLines,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Parser)]
#[command(name = "chargelot", version, about = "Success probability of EV charging lots with limited spaces and power")]
pub struct Cli {
    /// Flat key = value file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (directory for `figure --all`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Parking spaces.
    #[arg(short = 'K', long = "K")]
    pub k: Option<usize>,
    /// Full-power charging capacity (may be fractional).
    #[arg(short = 'M', long = "M")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Run until this many departures instead of a fixed horizon.
    #[arg(long)]
    pub departures: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub warmup: Option<f64>,
    /// Use batch means with this many batches per run.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub confidence: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact stationary metrics from the (U, Q) chain.
    Exact(ModelArgs),
    /// Lower and upper bounds on the success probability.
    Bounds(ModelArgs),
    /// Fluid fixed point and success probability.
    Fluid {
        #[command(flatten)]
        model: ModelArgs,
        /// Use the prefactor min(lambda, mu K) instead of lambda (1 - P_K).
        #[arg(long)]
        raw: bool,
    },
    /// Discrete-event simulation.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Parking-time law: exp:RATE or det:VALUE (default exp:mu).
        #[arg(long)]
        parking: Option<String>,
        /// Charging-requirement law: exp:RATE or det:VALUE (default exp:nu).
        #[arg(long)]
        charging: Option<String>,
        /// Force the per-EV event simulator even for exponential laws.
        #[arg(long)]
        general: bool,
    },
    /// Square-root staffing diffusion: scaling, SDE moments, invariant density.
    Diffusion {
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        /// Use `inf` for unlimited spaces.
        #[arg(long, allow_negative_numbers = true)]
        kappa: Option<f64>,
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Success probability against M/K: CSV plus a plot script.
    Figure {
        #[arg(short = 'K', long = "K")]
        k: Option<usize>,
        /// lambda / K.
        #[arg(long)]
        load: Option<f64>,
        /// Comma-separated M/K values in (0, 1].
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
        /// Emit all six panels (K in {10, 50}, load in {0.8, 1.0, 1.2}) into the --out directory.
        #[arg(long)]
        all: bool,
    },
}

/// One output record with ordered fields.
pub type Record = Map<String, Value>;

fn record(fields: impl IntoIterator<Item = (&'static str, Value)>) -> Record {
    fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or_else(|| Value::String(x.to_string()), Value::Number)
}

pub fn write_records(records: &[Record], format: Format, mut w: impl Write) -> io::Result<()> {
    match format {
        Format::Csv => {
            if let Some(first) = records.first() {
                writeln!(w, "{}", first.keys().cloned().collect::<Vec<_>>().join(","))?;
            }
            for r in records {
                let cells: Vec<String> = r
                    .values()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Format::JsonLines => {
            for r in records {
                writeln!(w, "{}", Value::Object(r.clone()))?;
            }
        }
    }
    Ok(())
}

struct Context {
    settings: Settings,
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
}

fn model_params(s: &Settings, a: &ModelArgs) -> Result<ModelParams, CliError> {
    let p = ModelParams {
        lambda: s.require("lambda", a.lambda)?,
        mu: s.get_or("mu", a.mu, 1.0)?,
        nu: s.get_or("nu", a.nu, 1.0)?,
        k: s.require("K", a.k)?,
        m: s.require("M", a.m)?,
    };
    p.validate()?;
    Ok(p)
}

fn sim_config(s: &Settings, a: &SimArgs, base: SimConfig) -> Result<SimConfig, CliError> {
    let run_length = match (s.lookup("departures", a.departures)?, s.lookup("horizon", a.horizon)?) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either horizon or departures, not both".into())),
        (Some(n), None) => RunLength::Departures(n),
        (None, Some(t)) => RunLength::Horizon(t),
        (None, None) => base.run_length,
    };
    let batches: Option<usize> = s.lookup("batches", a.batches)?;
    let cfg = SimConfig {
        run_length,
        replications: s.get_or("replications", a.replications, base.replications)?,
        warmup: s.get_or("warmup", a.warmup, base.warmup)?,
        confidence: s.get_or("confidence", a.confidence, base.confidence)?,
        ci_method: if batches.is_some() { CiMethod::BatchMeans } else { base.ci_method },
        batch_count: batches.unwrap_or(base.batch_count),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_distribution(text: &str) -> Result<DistributionSpec, CliError> {
    let (kind, value) =
        text.split_once(':').ok_or_else(|| CliError::Usage(format!("distribution {text:?}: expected KIND:VALUE")))?;
    let v: f64 = value.parse().map_err(|_| CliError::Usage(format!("distribution {text:?}: bad number")))?;
    let d = match kind {
        "exp" => DistributionSpec::exponential(v),
        "det" => DistributionSpec::deterministic(v),
        _ => return Err(CliError::Usage(format!("distribution kind {kind:?}: expected exp or det"))),
    };
    d.validate()?;
    Ok(d)
}

fn estimate_fields(out: &mut Record, name: &str, e: &chargelot::EstimateWithCI) {
    out.insert(name.to_string(), num(e.estimate));
    out.insert(format!("{name}_ci"), num(e.half_width));
}

fn params_fields(p: &ModelParams) -> Record {
    record([("lambda", num(p.lambda)), ("mu", num(p.mu)), ("nu", num(p.nu)), ("K", Value::from(p.k)), ("M", num(p.m))])
}

fn run_exact(ctx: &Context, a: &ModelArgs) -> Result<Vec<Record>, CliError> {
    let p = model_params(&ctx.settings, a)?;
    let m = metrics(&stationary_distribution(&p)?)?;
    let mut r = params_fields(&p);
    r.extend(record([
        ("e_u", num(m.e_u)),
        ("e_q", num(m.e_q)),
        ("e_c", num(m.e_c)),
        ("p_block", num(m.p_block)),
        ("success", num(m.success)),
    ]));
    Ok(vec![r])
}

fn run_bounds(ctx: &Context, a: &ModelArgs) -> Result<Vec<Record>, CliError> {
    let p = model_params(&ctx.settings, a)?;
    let b = bounds(&p)?;
    let mut r = params_fields(&p);
    r.extend(record([("lower", num(b.lower)), ("upper", num(b.upper))]));
    Ok(vec![r])
}

fn run_fluid(ctx: &Context, a: &ModelArgs, raw: bool) -> Result<Vec<Record>, CliError> {
    let p = model_params(&ctx.settings, a)?;
    let s = if raw { fluid_fixed_point_raw(&p)? } else { fluid_fixed_point(&p)? };
    let mut r = params_fields(&p);
    r.extend(record([
        ("u_star", num(s.u_star)),
        ("regime", Value::String(serde_json::to_value(s.regime).unwrap().as_str().unwrap().to_string())),
        ("p_s", num(s.p_s)),
        ("p_block", num(s.p_block)),
        ("throughput", num(s.throughput)),
    ]));
    Ok(vec![r])
}

fn run_simulate(
    ctx: &Context,
    a: &ModelArgs,
    sim: &SimArgs,
    parking: Option<&str>,
    charging: Option<&str>,
    general: bool,
) -> Result<Vec<Record>, CliError> {
    let p = model_params(&ctx.settings, a)?;
    let cfg = sim_config(&ctx.settings, sim, SimConfig { master_seed: ctx.seed, ..SimConfig::default() })?;
    let parking: Option<String> = ctx.settings.lookup("parking", parking.map(str::to_string))?;
    let charging: Option<String> = ctx.settings.lookup("charging", charging.map(str::to_string))?;
    let b = parking.as_deref().map(parse_distribution).transpose()?.unwrap_or(DistributionSpec::exponential(p.mu));
    let d = charging.as_deref().map(parse_distribution).transpose()?.unwrap_or(DistributionSpec::exponential(p.nu));
    let markovian = !general
        && matches!((&b, &d), (DistributionSpec::Exponential { rate: x }, DistributionSpec::Exponential { rate: y })
            if *x == p.mu && *y == p.nu);
    let est =
        if markovian { simulate_markovian(&p, &cfg)? } else { simulate_general(p.lambda, p.k, p.m, &b, &d, &cfg)? };
    let mut r = params_fields(&p);
    r.insert("engine".into(), Value::String(if markovian { "markovian" } else { "general" }.into()));
    for (name, e) in [
        ("e_u", &est.e_u),
        ("e_q", &est.e_q),
        ("e_c", &est.e_c),
        ("p_block", &est.p_block),
        ("success_departures", &est.success_departures),
        ("success_time_average", &est.success_time_average),
    ] {
        estimate_fields(&mut r, name, e);
    }
    r.insert("confidence".into(), num(cfg.confidence));
    r.insert("ci_method".into(), serde_json::to_value(est.e_u.method).unwrap());
    r.insert("samples".into(), Value::from(est.e_u.samples));
    r.insert("admitted".into(), Value::from(est.counts.admitted));
    r.insert("blocked".into(), Value::from(est.counts.blocked));
    Ok(vec![r])
}

#[allow(clippy::too_many_arguments)]
fn run_diffusion(
    ctx: &Context,
    beta: Option<f64>,
    kappa: Option<f64>,
    n: Option<u32>,
    nu: Option<f64>,
    mu: Option<f64>,
    dt: Option<f64>,
    horizon: Option<f64>,
) -> Result<Vec<Record>, CliError> {
    let s = &ctx.settings;
    let spec = DiffusionSpec::new(
        s.get_or("beta", beta, 0.0)?,
        s.get_or("kappa", kappa, f64::INFINITY)?,
        s.get_or("nu", nu, 1.0)?,
        s.get_or("mu", mu, 1.0)?,
    )?;
    let regime = ScalingRegime { n: s.get_or("n", n, 100)?, spec };
    let defaults = SdeConfig::default();
    let sde_cfg = SdeConfig {
        dt: s.get_or("dt", dt, defaults.dt)?,
        horizon: s.get_or("horizon", horizon, defaults.horizon)?,
        seed: ctx.seed,
        ..defaults
    };
    let mut r = record([
        ("n", Value::from(regime.n)),
        ("beta", num(spec.beta)),
        ("kappa", num(spec.kappa)),
        ("nu", num(spec.nu)),
        ("mu", num(spec.mu)),
    ]);
    if spec.kappa.is_finite() {
        let p = scaled_params(&regime)?;
        r.extend(record([("lambda_n", num(p.lambda)), ("M_n", num(p.m)), ("K_n", Value::from(p.k))]));
    } else {
        let d = invariant_density(&spec)?;
        r.extend(record([("c1", num(d.c1)), ("c2", num(d.c2))]));
    }
    let path = simulate_sde(&spec, (0.0, spec.kappa.min(0.0)), &sde_cfg)?;
    let m = path.moments(0.1);
    let est = diffusion_success_estimate(&regime, m.mean_u, m.mean_q);
    r.extend(record([
        ("mean_u_hat", num(m.mean_u)),
        ("mean_q_hat", num(m.mean_q)),
        ("var_u_hat", num(m.var_u)),
        ("var_q_hat", num(m.var_q)),
        ("cov_uq_hat", num(m.cov_uq)),
        ("success_estimate", num(est.success)),
        ("breakdown", Value::Bool(est.breakdown)),
    ]));
    Ok(vec![r])
}

fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("grid value {t:?} is not a number"))))
        .collect()
}

fn figure_spec(
    ctx: &Context,
    k: usize,
    load: f64,
    grid: Option<&str>,
    mu: Option<f64>,
    nu: Option<f64>,
    sim: &SimArgs,
) -> Result<FigureSpec, CliError> {
    let s = &ctx.settings;
    let grid: Option<String> = s.lookup("grid", grid.map(str::to_string))?;
    Ok(FigureSpec {
        k,
        load,
        grid: grid.as_deref().map(parse_grid).transpose()?.unwrap_or_else(default_grid),
        mu: s.get_or("mu", mu, 1.0)?,
        nu: s.get_or("nu", nu, 1.0)?,
        sim: sim_config(s, sim, default_sim_config(ctx.seed))?,
    })
}

fn emit_panel(spec: &FigureSpec, dir: &Path, name: &str) -> Result<(), CliError> {
    let rows = figure_rows(spec)?;
    let csv_file = format!("{name}.csv");
    write_csv(&rows, io::BufWriter::new(fs::File::create(dir.join(&csv_file))?))?;
    fs::write(dir.join(format!("{name}.py")), plot_script(&csv_file, spec.k, spec.load))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_figure(
    ctx: &Context,
    k: Option<usize>,
    load: Option<f64>,
    grid: Option<&str>,
    mu: Option<f64>,
    nu: Option<f64>,
    sim: &SimArgs,
    all: bool,
) -> Result<(), CliError> {
    if all {
        let dir = ctx.out.as_ref().ok_or_else(|| CliError::Usage("figure --all needs --out <directory>".into()))?;
        fs::create_dir_all(dir)?;
        for &k in &figure::PANEL_SPACES {
            for &load in &figure::PANEL_LOADS {
                let spec = figure_spec(ctx, k, load, grid, mu, nu, sim)?;
                emit_panel(&spec, dir, &panel_name(k, load))?;
            }
        }
        return Ok(());
    }
    let k = ctx.settings.require("K", k)?;
    let load = ctx.settings.require("load", load)?;
    let spec = figure_spec(ctx, k, load, grid, mu, nu, sim)?;
    match &ctx.out {
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("figure").to_string();
            let rows = figure_rows(&spec)?;
            write_csv(&rows, io::BufWriter::new(fs::File::create(path)?))?;
            let csv_file = path.file_name().and_then(|s| s.to_str()).unwrap_or("figure.csv");
            fs::write(dir.join(format!("{stem}.py")), plot_script(csv_file, k, load))?;
        }
        None => {
            let rows = figure_rows(&spec)?;
            match ctx.format {
                Format::Csv => write_csv(&rows, io::stdout().lock())?,
                Format::JsonLines => {
                    let mut out = io::stdout().lock();
                    for r in &rows {
                        writeln!(out, "{}", serde_json::to_string(r).expect("plain struct"))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Executes a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let ctx = Context {
        seed: settings.get_or("seed", cli.seed, DEFAULT_SEED)?,
        out: settings.lookup("out", cli.out.clone())?,
        format: settings.get_or("format", cli.format, Format::Csv)?,
        settings,
    };
    let records = match &cli.command {
        Command::Exact(a) => run_exact(&ctx, a)?,
        Command::Bounds(a) => run_bounds(&ctx, a)?,
        Command::Fluid { model, raw } => run_fluid(&ctx, model, *raw)?,
        Command::Simulate { model, sim, parking, charging, general } => {
            run_simulate(&ctx, model, sim, parking.as_deref(), charging.as_deref(), *general)?
        }
        Command::Diffusion { beta, kappa, n, nu, mu, dt, horizon } => {
            run_diffusion(&ctx, *beta, *kappa, *n, *nu, *mu, *dt, *horizon)?
        }
        Command::Figure { k, load, grid, mu, nu, sim, all } => {
            return run_figure(&ctx, *k, *load, grid.as_deref(), *mu, *nu, sim, *all);
        }
    };
    match &ctx.out {
        Some(path) => write_records(&records, ctx.format, io::BufWriter::new(fs::File::create(path)?))?,
        None => write_records(&records, ctx.format, io::stdout().lock())?,
    }
    Ok(())
}
