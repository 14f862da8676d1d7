//! `siforecast`: generate data, train drifts, forecast, and evaluate.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 numerical
//! abort, 1 anything else (I/O failures while writing outputs).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{invalid, parse_value, Invalid, RunConfig};

#[derive(Parser)]
#[command(name = "siforecast", version, about = "Probabilistic forecasting with stochastic interpolants")]
struct Cli {
    /// Cap on worker threads (1 runs everything on the main thread).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory (`out_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// gmm_synthetic, jump_diffusion or navier_stokes.
    #[arg(long)]
    task: Option<String>,
    /// Override any config key, e.g. `--set train.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate transition pairs and write a dataset directory.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a drift to a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory (`data.dir`).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint (`train.resume`).
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sample forecast ensembles, or rollouts with `--lags k`.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `n x d` array of conditioning states.
        #[arg(long)]
        x0_file: Option<PathBuf>,
        #[arg(long)]
        lags: Option<usize>,
        #[arg(long)]
        ensemble_size: Option<usize>,
    },
    /// Compare an ensemble with reference samples.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Shell-averaged enstrophy spectra of vorticity fields.
    Spectra {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fields: Option<PathBuf>,
        #[arg(long)]
        downsample: Option<usize>,
    },
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut o = Vec::new();
        if let Some(p) = &self.out {
            o.push(("out_dir".into(), path_value(p)));
        }
        if let Some(s) = self.seed {
            o.push(("seed".into(), toml::Value::Integer(s as i64)));
        }
        if let Some(t) = &self.task {
            o.push(("task".into(), toml::Value::String(t.clone())));
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| invalid(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            o.push((k.trim().to_string(), parse_value(v.trim())));
        }
        Ok(o)
    }
}

fn push_path(o: &mut Vec<(String, toml::Value)>, key: &str, p: &Option<PathBuf>) {
    if let Some(p) = p {
        o.push((key.into(), path_value(p)));
    }
}

fn push_int(o: &mut Vec<(String, toml::Value)>, key: &str, v: Option<usize>) {
    if let Some(v) = v {
        o.push((key.into(), toml::Value::Integer(v as i64)));
    }
}

fn run(cmd: Cmd) -> Result<String> {
    let (common, extra, f): (Common, Vec<(String, toml::Value)>, fn(&RunConfig) -> Result<String>) = match cmd {
        Cmd::GenData { common } => (common, Vec::new(), commands::gen_data),
        Cmd::Train {
            common,
            data,
            resume,
            epochs,
        } => {
            let mut o = Vec::new();
            push_path(&mut o, "data.dir", &data);
            push_path(&mut o, "train.resume", &resume);
            push_int(&mut o, "train.epochs", epochs);
            (common, o, commands::train)
        }
        Cmd::Forecast {
            common,
            checkpoint,
            x0_file,
            lags,
            ensemble_size,
        } => {
            let mut o = Vec::new();
            push_path(&mut o, "forecast.checkpoint", &checkpoint);
            push_path(&mut o, "forecast.x0_file", &x0_file);
            push_int(&mut o, "forecast.lags", lags);
            push_int(&mut o, "sampler.ensemble", ensemble_size);
            (common, o, commands::forecast)
        }
        Cmd::Eval {
            common,
            ensemble,
            reference,
        } => {
            let mut o = Vec::new();
            push_path(&mut o, "eval.ensemble", &ensemble);
            push_path(&mut o, "eval.reference", &reference);
            (common, o, commands::eval)
        }
        Cmd::Spectra {
            common,
            fields,
            downsample,
        } => {
            let mut o = Vec::new();
            push_path(&mut o, "spectra.fields", &fields);
            push_int(&mut o, "spectra.downsample", downsample);
            (common, o, commands::spectra)
        }
    };
    let mut overrides = common.overrides()?;
    overrides.extend(extra);
    let cfg = RunConfig::from_file(common.config.as_deref(), &overrides)?;
    f(&cfg)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<siforecast::Error>() {
            return match e {
                e if e.is_numerical() => 3,
                siforecast::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(invalid("--threads must be at least 1")),
        Some(1) => siforecast::exec::with_mode(siforecast::exec::ExecMode::Sequential, || run(cli.cmd)),
        Some(n) => {
            #[cfg(feature = "parallel")]
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: could not size the thread pool: {e}");
            }
            #[cfg(not(feature = "parallel"))]
            let _ = n;
            run(cli.cmd)
        }
        None => run(cli.cmd),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
