use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mhc::classifiers::{ClassifierKind, ClassifierSpec};
use mhc::diagnostics::summarize;
use mhc::experiment::{self, ExperimentConfig, ExperimentId, Scale, SliceAxis};
use mhc::samplers::Chain;

#[derive(Parser)]
#[command(name = "mhc", version, about = "Metropolis-Hastings via classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set mhc.m=50`.
    #[arg(long = "set", value_name = "KEY=VAL")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VAL, got {kv:?}"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(s) = seed {
            overrides.push(("seed".into(), s.to_string()));
        }
        Ok(ExperimentConfig::load(&self.config, &overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and write chains, summaries and a manifest.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to `$MHC_OUT_DIR/<experiment>_<scale>_seed<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Chains run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, env = "MHC_OUT_DIR", hide_env_values = true, default_value = "mhc-out")]
        out_root: PathBuf,
    },
    /// Check a config and list every problem found.
    Validate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Tabulate the estimated log-likelihood ratio over a grid.
    Slice {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Parameter name; give twice for a two-dimensional grid.
        #[arg(long, required = true)]
        param: Vec<String>,
        /// `a:b:steps`, one per `--param`.
        #[arg(long, required = true, allow_hyphen_values = true)]
        grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Replace the classifier by `D = 1/2`.
        #[arg(long)]
        constant_half: bool,
    },
    /// Summarise an existing chain CSV.
    Summarize {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        burn_in: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the experiments and their shipped presets.
    ListExperiments,
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            cfg,
            out,
            seed,
            jobs,
            out_root,
        } => {
            let config = cfg.load(seed)?;
            let out = out.unwrap_or_else(|| {
                out_root.join(format!(
                    "{}_{}_seed{}",
                    config.experiment.as_str(),
                    match config.scale {
                        Scale::Paper => "paper",
                        Scale::Desk => "desk",
                    },
                    config.seed
                ))
            });
            let result = experiment::run(&config, &out, jobs)?;
            for r in &result.records {
                let s = &r.summary;
                let coords: Vec<String> = s
                    .coords
                    .iter()
                    .map(|c| format!("{}={:.4} [{:.4}, {:.4}]", c.param, c.mean, c.lower, c.upper))
                    .collect();
                let bf = r
                    .bayes_factor
                    .map(|b| format!(" bf={:.3}", b.value))
                    .unwrap_or_default();
                println!(
                    "{} chain {}: accept {:.3}; {}{bf}",
                    r.algorithm.as_str(),
                    r.chain_index,
                    s.accept_rate,
                    coords.join(", ")
                );
            }
            println!("wrote {}", out.display());
            if !result.manifest.complete {
                for f in &result.manifest.failures {
                    eprintln!("{} chain {} failed: {}", f.algorithm, f.chain, f.error);
                }
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { cfg } => {
            let config = cfg.load(None)?;
            match config.validate() {
                Ok(()) => {
                    println!("ok");
                    Ok(ExitCode::SUCCESS)
                }
                Err(issues) => {
                    for i in issues {
                        eprintln!("{i}");
                    }
                    Ok(ExitCode::from(1))
                }
            }
        }
        Command::Slice {
            cfg,
            param,
            grid,
            out,
            constant_half,
        } => {
            if param.len() != grid.len() {
                bail!("give one --grid per --param");
            }
            let mut config = cfg.load(None)?;
            if constant_half {
                if let Some(m) = config.mhc.as_mut() {
                    m.classifier = ClassifierSpec::new(ClassifierKind::Constant);
                }
            }
            let axes = param
                .iter()
                .zip(&grid)
                .map(|(p, g)| SliceAxis::parse(p, g))
                .collect::<mhc::Result<Vec<_>>>()?;
            let table = experiment::slice(&config, &axes)?;
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            write_out(&out, &buf)?;
            if let Some(i) = table.argmax() {
                println!("max eta {:.4} at {:?}", table.eta[i], table.points[i]);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize {
            chain,
            burn_in,
            level,
            out,
        } => {
            let f = fs::File::open(&chain).with_context(|| format!("opening {}", chain.display()))?;
            let c = Chain::read_csv(std::io::BufReader::new(f))?;
            let s = summarize(&c, burn_in, level)?;
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            match out {
                Some(p) => write_out(&p, &buf)?,
                None => std::io::stdout().write_all(&buf)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListExperiments => {
            for id in ExperimentId::ALL {
                println!(
                    "{:<16} {} (configs/{}_paper.toml, configs/{}_desk.toml)",
                    id.as_str(),
                    id.description(),
                    id.as_str(),
                    id.as_str()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
