//! Command-line front end.
//!
//! Exit status: 0 all invariants hold, 2 invariant breach, 3 configuration
//! error, 4 non-convergence, 1 anything else. Lattice kernel tables are cached
//! in the directory named by `KSFLOW_KERNEL_CACHE` when it is set.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ksflow::hls::HlsSearchConfig;
use ksflow::runner::{self, status_of, Axis, RunOutput, Status};
use ksflow::scenario::{Scenario, SolverKind};

#[derive(Parser)]
#[command(name = "ksflow", version, about = "Minimizing-movement runs for parabolic-parabolic Keller-Segel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, or continue one from a checkpoint.
    Run {
        #[arg(long, required_unless_present = "resume")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Checkpoint file written by an earlier run.
        #[arg(long, conflicts_with = "scenario")]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario at several values of one parameter.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// One of chi, h, N, tau, alpha.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate C_HLS and the critical sensitivity.
    ChiC {
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        levels: usize,
        #[arg(long, default_value_t = 48)]
        corpus: usize,
        #[arg(long, default_value_t = 8.0)]
        half_width: f64,
        #[arg(long, default_value = "chi-c")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run both solvers on a scenario and write the comparison.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The invariant suite on coarse grids.
    Validate {
        #[arg(long, default_value = "validate")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> ksflow::Result<Scenario> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn default_out(s: &Scenario) -> PathBuf {
    PathBuf::from("runs").join(if s.name.is_empty() { "run" } else { &s.name })
}

fn report(out: &RunOutput) -> Status {
    let s = &out.summary;
    for i in &s.invariants {
        println!("{}", i.line());
    }
    if let Some(h) = &s.halted {
        println!("halted: {h}");
    }
    if let Some(e) = &s.error {
        eprintln!("error: {e}");
    }
    let tag = if s.exploratory { " (exploratory: chi >= chi_c)" } else { "" };
    println!("{}: {:?}{tag}, {} steps to t = {}, artifacts in {}", s.name, s.status, s.steps, s.final_time, out.dir.display());
    s.status
}

fn execute(cmd: Command) -> ksflow::Result<Status> {
    match cmd {
        Command::Run { scenario, out, resume, seed } => {
            let result = match (resume, scenario) {
                (Some(ckpt), _) => runner::resume(&ckpt, out.as_deref())?,
                (None, Some(path)) => {
                    let s = load(&path, seed)?;
                    let dir = out.unwrap_or_else(|| default_out(&s));
                    runner::run(&s, &dir)?
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            Ok(report(&result))
        }
        Command::Compare { scenario, out, seed } => {
            let mut s = load(&scenario, seed)?;
            s.solver.kind = SolverKind::Both;
            let dir = out.unwrap_or_else(|| default_out(&s));
            let result = runner::run(&s, &dir)?;
            if let Some(c) = &result.summary.comparison {
                println!("t = {}: L^m relative gap {:.4e}, H^1 relative gap {:.4e}", c.t, c.lm_relative, c.h1_relative);
            }
            Ok(report(&result))
        }
        Command::Sweep { scenario, axis, values, out, workers, seed } => {
            let s = load(&scenario, seed)?;
            let axis: Axis = axis.parse()?;
            let rep = runner::sweep(&s, axis, &values, &out, workers)?;
            for m in &rep.members {
                println!("{} = {}: {:?} (exit {})", axis_name(axis), m.value, m.status, m.exit_code);
            }
            if let Some(t) = rep.trend {
                println!("trend as expected: {t}");
            }
            println!("{}sweep written to {}", if rep.partial { "partial " } else { "" }, out.display());
            Ok(rep.status)
        }
        Command::ChiC { d, points, levels, corpus, half_width, out, seed } => {
            let cfg = HlsSearchConfig { points, half_width, levels, seed, corpus_size: corpus, ..HlsSearchConfig::default() };
            let (est, checks) = runner::chi_c(d, &cfg, &out)?;
            println!("{:>8} {:>20} {:>14} {:>10}", "points", "c_hls", "rel. change", "converged");
            for r in &est.refinement {
                let change = r.relative_change.map_or("-".to_string(), |c| format!("{c:.3e}"));
                println!("{:>8} {:>20.15} {:>14} {:>10}", r.points, r.estimate, change, r.converged);
            }
            println!("c_hls = {}", est.c_hls);
            println!("chi_c = {} (recomputed {})", est.chi_c, checks.chi_c_recomputed);
            println!("largest screened ratio {} below c_hls: {}", checks.max_screened_ratio, checks.screened_below);
            println!("written to {}", out.join("hls_estimate.json").display());
            Ok(if !est.converged {
                Status::NonConvergence
            } else if !checks.screened_below {
                Status::InvariantBreach
            } else {
                Status::Pass
            })
        }
        Command::Validate { out, workers, seed } => {
            let rep = runner::validate(&out, seed, workers)?;
            for l in rep.lines() {
                println!("{l}");
            }
            println!("validate: {:?} in {:.1} s, report in {}", rep.status, rep.seconds, out.join("validate.json").display());
            Ok(rep.status)
        }
    }
}

fn axis_name(a: Axis) -> String {
    serde_json::to_string(&a).unwrap_or_default().trim_matches('"').to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match execute(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("ksflow: {e}");
            status_of(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
