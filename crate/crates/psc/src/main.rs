use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psc::{cmd_check, cmd_rates, cmd_run, ExperimentSpec, Options, PscError};

/// GD vs. Nesterov experiments on partitioned objectives.
#[derive(Parser)]
#[command(name = "psc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials; write trace.csv, report.json, loss.svg, displacement.svg.
    Run(Common),
    /// Run one trial with every check; exit 1 if any check is violated.
    Check(Common),
    /// Fit per-trial contraction rates; write rates.csv.
    Rates(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON).
    spec: PathBuf,
    /// Override base_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum concurrent trials (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; falls back to the experiment spec's output_dir, then PSC_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentSpec, Options), PscError> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(out) = &self.out {
            spec.output_dir = Some(out.clone());
        } else if spec.output_dir.is_none() {
            spec.output_dir = std::env::var_os("PSC_OUT_DIR").map(PathBuf::from);
        }
        let mut opts = Options::default();
        if let Some(j) = self.jobs {
            if j == 0 {
                return Err(PscError::Spec("--jobs must be at least 1".into()));
            }
            opts.jobs = j;
        }
        Ok((spec, opts))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => c.load().and_then(|(s, o)| {
            let out = cmd_run(&s, o)?;
            for case in &out.cases {
                println!("{}: {:?}", case.label, case.status);
            }
            println!("wrote {}", out.output_dir.display());
            Ok(0)
        }),
        Command::Check(c) => c.load().and_then(|(s, o)| {
            let out = cmd_check(&s, o)?;
            for case in &out.cases {
                println!("{}: {:?}", case.label, case.status);
                for v in &case.violations {
                    println!("  violated {v}");
                }
            }
            Ok(out.exit_code())
        }),
        Command::Rates(c) => c.load().and_then(|(s, o)| {
            let rows = cmd_rates(&s, o)?;
            for r in &rows {
                println!(
                    "{} trial {}: kappa {:.3e}, log-rate ratio {:.3}, {}",
                    r.case, r.trial, r.kappa, r.log_ratio, r.status
                );
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("psc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
