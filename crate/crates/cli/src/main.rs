use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use threetank::harness::config::presets;
use threetank::harness::{compute_metrics, read_csv, run_scenario, write_csv, ScenarioConfig};
use threetank::linmodel;
use threetank::nalgebra::{Complex, DMatrix};
use threetank::tracking;

#[derive(Parser)]
#[command(name = "threetank", version, about = "Three-tank benchmark: linearize, design, simulate, score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the continuous and ZOH-discretized linear model at an operating point.
    Linearize {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Place the tracking poles and print the gain K = [K1 K2].
    Design {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated poles; complex ones as `re+imi` / `re-imi`, in conjugate pairs.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        poles: Option<Vec<String>>,
    },
    /// Run a scenario, write the CSV trace and print the metrics as JSON.
    Simulate {
        /// Scenario file (JSON). Missing fields take their defaults.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in scenario instead of a file.
        #[arg(long)]
        preset: Option<Preset>,
        /// CSV destination; stdout when omitted (metrics then go to stderr).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute the metrics of a CSV trace.
    Metrics {
        #[arg(long)]
        csv: PathBuf,
        /// Seconds excluded from the estimation RMSE.
        #[arg(long, default_value_t = 200.0)]
        burn_in: f64,
        /// Band for settling times, m.
        #[arg(long, default_value_t = 1e-3)]
        settle_band: f64,
    },
    /// Print a built-in scenario as JSON, as a starting point for config files.
    Preset { name: Preset },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    LinearTracking,
    Decoupling,
    Estimation,
    OpenLoop,
}

impl Preset {
    fn config(self) -> ScenarioConfig {
        match self {
            Preset::LinearTracking => presets::linear_tracking(),
            Preset::Decoupling => presets::decoupling(),
            Preset::Estimation => presets::estimation(),
            Preset::OpenLoop => presets::open_loop(),
        }
    }
}

#[derive(clap::Args)]
struct ModelArgs {
    /// Take plant, operating point and t_s from this scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Operating levels h1,h2,h3 in m.
    #[arg(long, value_delimiter = ',')]
    y0: Option<Vec<f64>>,
    /// Operating pump flows q1,q2 in m³/s.
    #[arg(long, value_delimiter = ',')]
    u0: Option<Vec<f64>>,
    /// Sampling period in s.
    #[arg(long)]
    t_s: Option<f64>,
}

impl ModelArgs {
    fn scenario(&self) -> anyhow::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(y0) = &self.y0 {
            cfg.operating_point.y0 = y0
                .as_slice()
                .try_into()
                .map_err(|_| threetank::Error::Config(format!("--y0 needs 3 levels, got {}", y0.len())))?;
        }
        if let Some(u0) = &self.u0 {
            cfg.operating_point.u0 = u0
                .as_slice()
                .try_into()
                .map_err(|_| threetank::Error::Config(format!("--u0 needs 2 flows, got {}", u0.len())))?;
        }
        if let Some(t_s) = self.t_s {
            cfg.t_s = t_s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_config(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::from_json(&text)?)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_pole(s: &str) -> anyhow::Result<Complex<f64>> {
    let t = s.trim();
    let bad = || anyhow!("cannot parse pole `{s}`; expected `re`, `re+imi` or `re-imi`");
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| Complex::new(re, 0.0)).map_err(|_| bad());
    };
    // split at the last sign that is not part of an exponent or the leading sign
    let split = body
        .char_indices()
        .rev()
        .find(|&(i, c)| (c == '+' || c == '-') && i > 0 && !matches!(body.as_bytes()[i - 1], b'e' | b'E'))
        .map(|(i, _)| i)
        .ok_or_else(bad)?;
    let re = body[..split].parse::<f64>().map_err(|_| bad())?;
    let im = match &body[split..] {
        "+" => 1.0,
        "-" => -1.0,
        rest => rest.parse::<f64>().map_err(|_| bad())?,
    };
    Ok(Complex::new(re, im))
}

fn linearize(model: &ModelArgs) -> anyhow::Result<()> {
    let cfg = model.scenario()?;
    let op = cfg.operating_point()?;
    let (cm, dm) = linmodel::linearize(&cfg.plant, &op, cfg.t_s)?;
    let out = json!({
        "y0": cfg.operating_point.y0,
        "u0": cfg.operating_point.u0,
        "t_s": cfg.t_s,
        "F": rows(&cm.f),
        "B": rows(&cm.b),
        "C": rows(&cm.c),
        "A_d": rows(&dm.a_d),
        "B_d": rows(&dm.b_d),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn design(model: &ModelArgs, poles: Option<&[String]>) -> anyhow::Result<()> {
    let mut cfg = model.scenario()?;
    if let Some(list) = poles {
        let parsed = list.iter().map(|p| parse_pole(p)).collect::<anyhow::Result<Vec<_>>>()?;
        let specs = parsed
            .into_iter()
            .map(|c| threetank::harness::config::PoleSpec::Complex { re: c.re, im: c.im })
            .collect();
        cfg.tracking.gain = threetank::harness::config::GainSpec::Poles(specs);
    }
    let (dm, gain) = threetank::harness::runner::design_tracking(&cfg)?;
    let am = tracking::augment(&dm)?;
    let achieved: Vec<[f64; 2]> = tracking::closed_loop_poles(&am, &gain).iter().map(|c| [c.re, c.im]).collect();
    let out = json!({
        "K": rows(&gain.k),
        "K1": rows(&gain.k1()),
        "K2": rows(&gain.k2()),
        "closed_loop_poles": achieved,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn simulate(
    config: Option<&Path>,
    preset: Option<Preset>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> anyhow::Result<()> {
    let mut cfg = match (config, preset) {
        (Some(path), _) => load_config(path)?,
        (None, Some(p)) => p.config(),
        (None, None) => bail!(threetank::Error::Config("simulate needs --config or --preset".into())),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let run = run_scenario(&cfg)?;
    let report = serde_json::to_string_pretty(&run.metrics)?;
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            write_csv(&run.records, &mut w)?;
            w.flush()?;
            println!("{report}");
        }
        None => {
            write_csv(&run.records, io::stdout().lock())?;
            eprintln!("{report}");
        }
    }
    Ok(())
}

fn metrics(csv: &Path, burn_in: f64, settle_band: f64) -> anyhow::Result<()> {
    let file = File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
    let records = read_csv(BufReader::new(file))?;
    let report = compute_metrics(&records, burn_in, settle_band);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Linearize { model } => linearize(&model),
        Command::Design { model, poles } => design(&model, poles.as_deref()),
        Command::Simulate { config, preset, out, seed } => simulate(config.as_deref(), preset, out.as_deref(), seed),
        Command::Metrics { csv, burn_in, settle_band } => metrics(&csv, burn_in, settle_band),
        Command::Preset { name } => {
            println!("{}", name.config().to_json());
            Ok(())
        }
    }
}

/// 1 for bad input, 2 for numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<threetank::Error>() {
        Some(e) if !e.is_config_error() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
