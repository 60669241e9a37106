use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use lrvar::assimilation::mean;
use lrvar::experiment::{run, write_outputs, ExperimentConfig, RunModes, PRESETS};
use lrvar::assimilation::SolverMode;

// A closed stdout (e.g. piping into `head`) is not an error worth panicking over.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "lrvar", version, about = "Low-rank weak-constraint 4D-Var twin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a config file.
    Run {
        /// Preset name or path to a `key = value` config file.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the preset's rank list with a single rank.
        #[arg(long)]
        rank: Option<usize>,
        /// Number of Gauss-Newton outer iterations.
        #[arg(long)]
        outer: Option<usize>,
        /// Preconditioner name (none, ic-i, ic-lhat, ic-exact, ic-ih, sd-lhat, sd-sylvester, block-tri).
        #[arg(long)]
        precond: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Output directory; defaults to `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the presets.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Lowrank,
    Fullrank,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> lrvar::Result<()> {
    let cli = Cli::parse();
    let Command::Run {
        target,
        seed,
        rank,
        outer,
        precond,
        mode,
        out,
    } = cli.command
    else {
        for p in PRESETS {
            say!("{p}");
        }
        return Ok(());
    };

    let mut cfg = if PRESETS.contains(&target.as_str()) {
        ExperimentConfig::preset(&target)?
    } else {
        ExperimentConfig::from_file(target.as_ref())?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = rank {
        cfg.ranks = vec![r];
    }
    if let Some(k) = outer {
        cfg.n_outer = k;
    }
    if let Some(p) = precond {
        cfg.precond = vec![p];
    }
    if let Some(m) = mode {
        cfg.modes = RunModes::Only(match m {
            Mode::Lowrank => SolverMode::LowRank,
            Mode::Fullrank => SolverMode::FullRank,
        });
    }
    cfg.validate()?;

    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let result = run(&cfg)?;
    let w = result.problem.window;
    if let Some(f) = &result.full_rank {
        say!(
            "full-rank: window RMSE {:.4e} (no assimilation {:.4e})",
            f.mean_window_rmse(w),
            mean(&f.background_rmse[..=w])
        );
    }
    for lr in &result.low_rank {
        let its: Vec<usize> = lr.result.reports.iter().map(|r| r.iterations).collect();
        say!(
            "low-rank r={}: window RMSE {:.4e}, GMRES iterations {:?}, storage {} of {}",
            lr.rank,
            lr.result.mean_window_rmse(w),
            its,
            lr.storage.low_elems,
            lr.storage.full_elems
        );
    }
    for c in &result.comparisons {
        let rel = c.report.relative_residuals();
        say!(
            "{:>13}: {} iterations, final relative residual {:.3e}",
            c.name,
            c.report.iterations,
            rel.last().copied().unwrap_or(f64::NAN)
        );
    }
    for path in write_outputs(&result, &dir)? {
        say!("wrote {}", path.display());
    }
    Ok(())
}
