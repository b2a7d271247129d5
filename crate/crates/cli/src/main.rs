use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gcomp_core::experiments::{
    run_capacity_sweep, run_outage_sweep, run_power_alloc_sweep, run_spectral_sweep, write_capacity_csv,
    write_outage_csv, write_power_alloc_csv, ExperimentConfig, SweepOutput,
};
use gcomp_core::monte_carlo::{write_records_csv, Scenario};
use gcomp_core::validation::{run_criterion, CRITERIA};

#[derive(Parser)]
#[command(name = "gcomp", version, about = "Outage, capacity and power-allocation sweeps for GCoMP NOMA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage probability sweep (closed form where valid, plus Monte-Carlo).
    Outage(SweepArgs),
    /// Epsilon-outage capacity sweep.
    Capacity(SweepArgs),
    /// Optimal power allocation sweep.
    PowerAlloc(SweepArgs),
    /// Monte-Carlo spectral efficiency for each scenario.
    Spectral(SweepArgs),
    /// Run the acceptance suite.
    Validate {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        partitions: usize,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `start:stop:step` or a comma-separated list, in dBm.
    #[arg(long, allow_hyphen_values = true)]
    p_dbm_range: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    m_users: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    k_bs: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated scenarios (gcomp-noma, gcomp-oma, comp-noma, comp-oma).
    #[arg(long, value_delimiter = ',')]
    scenario: Option<Vec<Scenario>>,
    /// Output CSV path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bandwidth_hz: Option<f64>,
    #[arg(long)]
    partitions: Option<usize>,
}

fn parse_power_range(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) = (start.trim().parse()?, stop.trim().parse()?, step.trim().parse()?);
            if !(step > 0.0) || stop < start {
                bail!("power range needs step > 0 and stop >= start");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| start + i as f64 * step).collect())
        }
        [list] => list
            .split(',')
            .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad power '{t}'")))
            .collect(),
        _ => bail!("expected start:stop:step or a comma-separated list"),
    }
}

impl SweepArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(r) = &self.p_dbm_range {
            cfg.p_dbm = parse_power_range(r)?;
        }
        if let Some(v) = &self.n {
            cfg.n = v.clone();
        }
        if let Some(v) = &self.m_users {
            cfg.m_users = v.clone();
        }
        if let Some(v) = &self.k_bs {
            cfg.k_bs = v.clone();
        }
        if let Some(v) = &self.scenario {
            cfg.scenarios = v.clone();
        }
        cfg.trials = self.trials.unwrap_or(cfg.trials);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.bandwidth_hz = self.bandwidth_hz.unwrap_or(cfg.bandwidth_hz);
        cfg.partitions = self.partitions.unwrap_or(cfg.partitions);
        if let Some(out) = &self.out {
            cfg.out = Some(out.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sink(cfg: &ExperimentConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.out {
        Some(path) => Box::new(File::create(path).with_context(|| format!("creating {path}"))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn finish<T>(out: &SweepOutput<T>) -> ExitCode {
    for f in &out.failures {
        eprintln!("failed: {f}");
    }
    if out.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Outage(args) => {
            let cfg = args.config()?;
            let out = run_outage_sweep(&cfg)?;
            write_outage_csv(sink(&cfg)?, &out.rows)?;
            Ok(finish(&out))
        }
        Command::Capacity(args) => {
            let cfg = args.config()?;
            let out = run_capacity_sweep(&cfg)?;
            write_capacity_csv(sink(&cfg)?, &out.rows)?;
            Ok(finish(&out))
        }
        Command::PowerAlloc(args) => {
            let cfg = args.config()?;
            let out = run_power_alloc_sweep(&cfg)?;
            write_power_alloc_csv(sink(&cfg)?, &out.rows)?;
            Ok(finish(&out))
        }
        Command::Spectral(args) => {
            let cfg = args.config()?;
            let out = run_spectral_sweep(&cfg)?;
            write_records_csv(sink(&cfg)?, &out.rows)?;
            Ok(finish(&out))
        }
        Command::Validate { only, partitions } => {
            let mut failed = 0;
            for (id, _) in CRITERIA {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                let r = run_criterion(id, partitions.max(1)).expect("known criterion");
                println!(
                    "criterion {:>2} {:<44} {} {}",
                    r.id,
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
