use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use etgp::config::ExperimentConfig;
use etgp::experiments::{
    check, check_summary, curves, run_experiment, run_summary, table1, write_curve_csv, write_run_outputs,
    write_table1_csv,
};
use etgp::{Error, Result};

/// Event-triggered gradient-push simulator.
#[derive(Parser)]
#[command(name = "etgp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run: metrics, trajectory, theory report.
    Run(Common),
    /// Trigger counts and termination times over the (tau, zeta) grid.
    Table1(Common),
    /// R_f and R_c series for each schedule variant.
    Curves(Common),
    /// Assumption verdicts and the fast invariant suite.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed of the initial states.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (overrides [output].dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Round horizon (run, curves and check).
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.run.trials = trials;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(h) = self.horizon {
            cfg.run.horizon = h;
            cfg.curves.horizon = h;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = run_experiment(&cfg)?;
            let files = write_run_outputs(&outcome, &cfg, &cfg.output.dir)?;
            args.say(&run_summary(&outcome));
            for f in files {
                args.say(&format!("wrote {}\n", f.display()));
            }
            Ok(true)
        }
        Command::Table1(args) => {
            let cfg = args.load()?;
            let cells = table1(&cfg)?;
            create_dir(&cfg.output.dir)?;
            let path = cfg.output.dir.join("table1.csv");
            write_table1_csv(&cells, &path)?;
            let mut text = format!("{:<16}{:<18}{:>10}{:>10}{:>10}{:>8}\n", "tau", "zeta", "N_x", "N_y", "k_f", "capped");
            for c in &cells {
                text += &format!(
                    "{:<16}{:<18}{:>10.1}{:>10.1}{:>10.1}{:>8}\n",
                    c.tau.to_string(),
                    c.zeta.to_string(),
                    c.nx_mean,
                    c.ny_mean,
                    c.kf_mean,
                    c.capped
                );
            }
            args.say(&text);
            args.say(&format!("wrote {}\n", path.display()));
            Ok(true)
        }
        Command::Curves(args) => {
            let cfg = args.load()?;
            let series = curves(&cfg)?;
            create_dir(&cfg.output.dir)?;
            for s in &series {
                let path = cfg.output.dir.join(format!("curve_{}.csv", s.label));
                write_curve_csv(s, &path)?;
                let flagged = s.verdicts.iter().filter(|v| !v.is_ok()).count();
                args.say(&format!(
                    "{:<12} R_f {:<12.4e} R_c {:<12.4e}{}\n",
                    s.label,
                    s.r_f.last().copied().unwrap_or(f64::NAN),
                    s.r_c.last().copied().unwrap_or(f64::NAN),
                    if flagged > 0 { "  (violates assumptions)" } else { "" }
                ));
            }
            Ok(true)
        }
        Command::Check(args) => {
            let cfg = args.load()?;
            let rounds = args.horizon.unwrap_or(cfg.run.horizon.min(200));
            let report = check(&cfg, rounds)?;
            args.say(&check_summary(&report));
            Ok(report.failures.is_empty())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
