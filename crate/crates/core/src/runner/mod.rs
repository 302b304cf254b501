//! Scenario runs and the artifacts they leave behind.
//!
//! A run directory holds `config.json` (written first), `diagnostics.csv`,
//! `comparison.csv` when both solvers ran, `fields/` snapshots,
//! `checkpoints/` and `summary.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{compare_trajectories, run_fd, ComparisonRow, FdRun, Stability, FD_MASS_TOL};
use crate::field::MASS_TOL;
use crate::jko::{
    check_regularity, regularity_diagnostic, step_count, RegularityCheck, RegularityRecord, Stepper, Trajectory,
    TrajectoryChecks, CLIP_TOL, EL_V_TOL,
};
use crate::scenario::{Scenario, Setup, SolverKind};

pub mod output;
mod suite;
mod sweep;

pub use suite::{suite_scenarios, validate, ValidationReport};
pub use sweep::{sweep, with_axis, Axis, SweepMember, SweepReport};

/// Heat-flow steps in each regularity diagnostic; the flow runs for one `h`.
pub const REGULARITY_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    InvariantBreach,
    ConfigError,
    NonConvergence,
    Failure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Failure => 1,
            Status::InvariantBreach => 2,
            Status::ConfigError => 3,
            Status::NonConvergence => 4,
        }
    }

    /// The more severe of two outcomes.
    pub fn worst(self, other: Status) -> Status {
        let rank = |s: Status| match s {
            Status::Pass => 0,
            Status::NonConvergence => 1,
            Status::InvariantBreach => 2,
            Status::Failure => 3,
            Status::ConfigError => 4,
        };
        if rank(other) > rank(self) {
            other
        } else {
            self
        }
    }
}

pub fn status_of(e: &Error) -> Status {
    match e {
        Error::Config(_) | Error::InvalidParam { .. } | Error::InvalidGrid(_) | Error::MemoryBudget { .. } => {
            Status::ConfigError
        }
        Error::NonConvergence(_) => Status::NonConvergence,
        Error::EnergyIncrease { .. }
        | Error::MassDrift { .. }
        | Error::Negative { .. }
        | Error::NonFinite { .. }
        | Error::Stability(_)
        | Error::Concentration { .. }
        | Error::Solvability(_) => Status::InvariantBreach,
        _ => Status::Failure,
    }
}

/// One checked property; `passed` is `None` when it does not apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub passed: Option<bool>,
    pub value: f64,
    pub limit: Option<f64>,
}

impl Invariant {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Invariant { name: name.into(), passed: Some(value <= limit), value, limit: Some(limit) }
    }

    fn optional(name: &str, value: f64, limit: Option<f64>) -> Self {
        Invariant { name: name.into(), passed: limit.map(|l| value <= l), value, limit }
    }

    pub fn line(&self) -> String {
        let tag = match self.passed {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "SKIP",
        };
        match self.limit {
            Some(l) => format!("{tag} {} = {:.6e} (limit {:.6e})", self.name, self.value, l),
            None => format!("{tag} {} = {:.6e}", self.name, self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdSummary {
    pub steps: usize,
    pub stability: Stability,
    pub max_mass_drift: f64,
    pub max_clipped_mass: f64,
    pub max_energy_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario_hash: String,
    pub name: String,
    pub seed: u64,
    pub exploratory: bool,
    pub status: Status,
    pub exit_code: i32,
    pub error: Option<String>,
    pub halted: Option<String>,
    pub chi: f64,
    pub chi_c: f64,
    pub c_hls: f64,
    pub steps: usize,
    pub final_time: f64,
    pub jko: Option<TrajectoryChecks>,
    pub regularity: Option<RegularityCheck>,
    pub fd: Option<FdSummary>,
    pub comparison: Option<ComparisonRow>,
    pub invariants: Vec<Invariant>,
}

impl Summary {
    pub fn failed(&self) -> Vec<&Invariant> {
        self.invariants.iter().filter(|i| i.passed == Some(false)).collect()
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario: Scenario,
    pub scenario_hash: String,
    pub stepper: Stepper,
    pub trajectory: Trajectory,
    pub regularity: Vec<RegularityRecord>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let c: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("checkpoint {}: {e}", path.display())))?;
        if c.scenario.hash() != c.scenario_hash {
            return Err(Error::Config(format!("checkpoint {}: scenario hash does not match", path.display())));
        }
        Ok(c)
    }
}

pub fn checkpoint_name(n: usize) -> String {
    format!("ckpt_{n:06}.json")
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub summary: Summary,
    pub trajectory: Option<Trajectory>,
    pub fd: Option<FdRun>,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    scenario_hash: String,
    scenario: &'a Scenario,
    seed: u64,
    exploratory: bool,
    chi: f64,
    chi_c: f64,
    c_hls: f64,
    m: f64,
    /// Mass of the discretized profile before it was scaled to one.
    initial_raw_mass: f64,
    initial_scale: f64,
    steps: usize,
    stride: usize,
    snapshot_stride: usize,
    jko: &'a crate::jko::JkoConfig,
    fd: &'a crate::fd::FdConfig,
    version: &'static str,
}

fn echo<'a>(s: &'a Scenario, set: &'a Setup) -> ConfigEcho<'a> {
    let p = &set.params;
    ConfigEcho {
        scenario_hash: s.hash(),
        scenario: s,
        seed: s.seed,
        exploratory: p.exploratory(),
        chi: p.chi,
        chi_c: p.chi_c,
        c_hls: p.c_hls,
        m: p.m,
        initial_raw_mass: set.raw_mass,
        initial_scale: 1.0 / set.raw_mass,
        steps: step_count(set.t_final, p.h),
        stride: set.stride,
        snapshot_stride: set.snapshot_stride,
        jko: &set.jko,
        fd: &set.fd,
        version: env!("CARGO_PKG_VERSION"),
    }
}

fn json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    output::write(path, &text)
}

/// Runs a scenario into `out`. Configuration problems are returned as
/// errors before anything is written; failures during the run end up in the
/// summary.
pub fn run(scenario: &Scenario, out: &Path) -> Result<RunOutput> {
    let setup = scenario.setup()?;
    execute(scenario, &setup, out, None)
}

/// Continues from a checkpoint, by default in the directory it came from.
pub fn resume(checkpoint: &Path, out: Option<&Path>) -> Result<RunOutput> {
    let c = Checkpoint::load(checkpoint)?;
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => checkpoint
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let setup = c.scenario.setup()?;
    let scenario = c.scenario.clone();
    execute(&scenario, &setup, &dir, Some(c))
}

struct JkoPart {
    traj: Trajectory,
    regularity: Vec<RegularityRecord>,
    error: Option<Error>,
}

fn run_jko(scenario: &Scenario, set: &Setup, dir: &Path, start: Option<Checkpoint>) -> Result<JkoPart> {
    let p = set.params;
    let (mut traj, mut stepper, mut regularity) = match start {
        Some(c) => (c.trajectory, c.stepper, c.regularity),
        None => (
            Trajectory::new(&set.initial, p, set.jko, set.snapshot_stride)?,
            Stepper::new(set.initial.clone(), p, set.jko)?,
            Vec::new(),
        ),
    };
    let total = step_count(set.t_final, p.h);
    let every = scenario.output.checkpoint_every;
    let with_regularity = scenario.output.regularity && p.chi > 0.0;
    let mut error = None;
    while stepper.n < total && traj.halted.is_none() {
        let prev = with_regularity.then(|| stepper.state.clone());
        let r = match stepper.step() {
            Ok(r) => r,
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        if let Some(prev) = prev {
            let s = &stepper.state;
            match regularity_diagnostic(&s.u, &s.v, &prev.u, &prev.v, &p, p.h, REGULARITY_STEPS) {
                Ok(rep) => regularity.push(RegularityRecord::new(r.n, &rep, p.m)),
                Err(e) => {
                    error = Some(e);
                    break;
                }
            }
        }
        let halt = stepper.concentration(&r);
        traj.record(r, &stepper.state, stepper.n == total || halt.is_some())?;
        if let Some(e) = halt {
            traj.halted = Some(e.to_string());
        }
        if every > 0 && stepper.n % every == 0 && stepper.n < total {
            let ckdir = dir.join("checkpoints");
            std::fs::create_dir_all(&ckdir)?;
            let c = Checkpoint {
                scenario: scenario.clone(),
                scenario_hash: scenario.hash(),
                stepper: stepper.clone(),
                trajectory: traj.clone(),
                regularity: regularity.clone(),
            };
            output::write(&ckdir.join(checkpoint_name(stepper.n)), &serde_json::to_string(&c)?)?;
        }
    }
    Ok(JkoPart { traj, regularity, error })
}

fn write_fields(dir: &Path, prefix: &str, traj_snaps: &[crate::jko::Snapshot]) -> Result<()> {
    let fields = dir.join("fields");
    std::fs::create_dir_all(&fields)?;
    for s in traj_snaps {
        s.u.save(&fields.join(format!("{prefix}_u_{:06}.kfld", s.n)))?;
        s.v.save(&fields.join(format!("{prefix}_v_{:06}.kfld", s.n)))?;
    }
    Ok(())
}

fn jko_invariants(c: &TrajectoryChecks, tol: f64, reg: Option<&RegularityCheck>, halted: bool, exploratory: bool) -> Vec<Invariant> {
    let flag = |name: &str, ok: Option<bool>, value: f64, limit: Option<f64>| Invariant {
        name: name.into(),
        passed: ok,
        value,
        limit,
    };
    let mut v = vec![
        Invariant::at_most("energy_monotone", c.max_energy_increase, tol),
        Invariant::at_most("telescoping", c.increment_sum, c.increment_bound),
        flag("functional_below_energy", Some(c.functional_below_energy), 0.0, None),
        Invariant::at_most("el_residual_v", c.max_el_residual_v, EL_V_TOL),
        flag("lm_bound", c.lm_bound, c.sup_lm_pow, None),
        flag("grad_v_bound", c.grad_v_bound, c.sup_grad_v_sq, None),
        flag("growth_bound", c.growth_bound, 0.0, None),
        Invariant::at_most("jko_mass_drift", c.max_mass_drift, MASS_TOL),
        Invariant::at_most("jko_clipped_mass", c.max_clipped_mass, CLIP_TOL),
        flag("all_steps_converged", Some(c.all_converged), 0.0, None),
    ];
    if let Some(r) = reg {
        v.push(Invariant::at_most("regularity_bound", r.worst_ratio, 1.0));
        v.push(flag("entropy_decreasing", Some(r.entropy_decreasing), 0.0, None));
    }
    // Blow-up is a legitimate outcome above the threshold.
    v.push(flag("resolved_to_the_end", (!exploratory).then_some(!halted), 0.0, None));
    v
}

fn execute(scenario: &Scenario, set: &Setup, dir: &Path, start: Option<Checkpoint>) -> Result<RunOutput> {
    std::fs::create_dir_all(dir)?;
    let hash = scenario.hash();
    json(&dir.join("config.json"), &echo(scenario, set))?;
    let p = set.params;
    let exploratory = p.exploratory();
    let mut errors: Vec<Error> = Vec::new();
    let mut invariants = Vec::new();

    let jko = if scenario.solver.kind != SolverKind::Fd {
        let part = run_jko(scenario, set, dir, start)?;
        write_fields(dir, "jko", &part.traj.snapshots)?;
        if let Some(e) = part.error {
            errors.push(e);
        }
        Some((part.traj, part.regularity))
    } else {
        None
    };
    let regularity = jko.as_ref().and_then(|(_, r)| check_regularity(r));
    let checks = jko.as_ref().map(|(t, _)| t.checks());
    if let (Some(c), Some((t, _))) = (&checks, &jko) {
        invariants.extend(jko_invariants(c, set.jko.energy_tol, regularity.as_ref(), t.halted.is_some(), exploratory));
    }

    let fd = if scenario.solver.kind != SolverKind::Jko {
        let stride = ((set.snapshot_stride as f64 * p.h / set.fd.dt).round() as usize).max(1);
        match run_fd(set.initial.clone(), p, set.fd, stride) {
            Ok(f) => {
                write_fields(dir, "fd", &f.snapshots)?;
                invariants.push(Invariant::at_most("fd_mass_drift", f.max_mass_drift(), FD_MASS_TOL));
                invariants.push(Invariant::at_most("fd_clipped_mass", f.max_clipped_mass(), CLIP_TOL));
                invariants.push(Invariant::optional("fd_energy_increase", f.max_energy_increase(), None));
                Some(f)
            }
            Err(e) => {
                errors.push(e);
                None
            }
        }
    } else {
        None
    };

    let mut comparison = None;
    if let (Some((t, _)), Some(f)) = (&jko, &fd) {
        if t.halted.is_none() && !t.reports.is_empty() {
            match compare_trajectories(t, f) {
                Ok(c) => {
                    output::write(&dir.join("comparison.csv"), &output::comparison_csv(&hash, exploratory, &c))?;
                    if let Some(last) = c.last() {
                        invariants.push(Invariant::at_most("oracle_gap", last.lm_relative, set.oracle_gap));
                        comparison = Some(*last);
                    }
                }
                Err(e) => errors.push(e),
            }
        }
    }

    let traj = jko.map(|(t, _)| t);
    let csv = output::diagnostics_csv(&hash, exploratory, set.stride, traj.as_ref(), fd.as_ref());
    output::write(&dir.join("diagnostics.csv"), &csv)?;

    let mut status = Status::Pass;
    for e in &errors {
        status = status.worst(status_of(e));
    }
    if invariants.iter().any(|i| i.passed == Some(false)) {
        let only_convergence =
            invariants.iter().filter(|i| i.passed == Some(false)).all(|i| i.name == "all_steps_converged");
        status = status.worst(if only_convergence { Status::NonConvergence } else { Status::InvariantBreach });
    }
    let summary = Summary {
        scenario_hash: hash,
        name: scenario.name.clone(),
        seed: scenario.seed,
        exploratory,
        status,
        exit_code: status.code(),
        error: (!errors.is_empty()).then(|| errors.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
        halted: traj.as_ref().and_then(|t| t.halted.clone()),
        chi: p.chi,
        chi_c: p.chi_c,
        c_hls: p.c_hls,
        steps: traj.as_ref().map_or(fd.as_ref().map_or(0, |f| f.reports.len()), |t| t.reports.len()),
        final_time: traj.as_ref().map_or(fd.as_ref().map_or(0.0, |f| f.reports.last().map_or(0.0, |r| r.t)), |t| t.final_time()),
        jko: checks,
        regularity,
        fd: fd.as_ref().map(|f| FdSummary {
            steps: f.reports.len(),
            stability: f.stability,
            max_mass_drift: f.max_mass_drift(),
            max_clipped_mass: f.max_clipped_mass(),
            max_energy_increase: f.max_energy_increase(),
        }),
        comparison,
        invariants,
    };
    json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutput { dir: dir.to_path_buf(), summary, trajectory: traj, fd })
}

/// Estimates `C_HLS` and writes `hls_estimate.json` into `out`.
pub fn chi_c(d: usize, cfg: &crate::hls::HlsSearchConfig, out: &Path) -> Result<(crate::hls::HlsEstimate, ChiCChecks)> {
    if d < 3 {
        return Err(Error::Config(format!("d must be at least 3, got {d}")));
    }
    let est = crate::hls::estimate_c_hls(d, cfg)?;
    std::fs::create_dir_all(out)?;
    json(&out.join("hls_estimate.json"), &est)?;
    let checks = ChiCChecks::new(&est, cfg)?;
    json(&out.join("hls_checks.json"), &checks)?;
    Ok((est, checks))
}

/// Consistency checks reported with a `C_HLS` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiCChecks {
    /// Largest relative change of `chi_c` between consecutive resolutions.
    pub chi_c_refinement: Option<f64>,
    /// `2 / ((m - 1) c_hls)` recomputed from the estimate.
    pub chi_c_recomputed: f64,
    /// Largest ratio over the corpus with `alpha > 0`.
    pub max_screened_ratio: f64,
    pub screened_below: bool,
}

/// Screening strengths for the monotone-family check.
const SCREENED_ALPHAS: [f64; 3] = [0.5, 1.0, 4.0];

impl ChiCChecks {
    fn new(est: &crate::hls::HlsEstimate, cfg: &crate::hls::HlsSearchConfig) -> Result<Self> {
        let chi_c_refinement = est.refinement.iter().filter_map(|r| r.relative_change).map(|x| (1.0 / (1.0 + x) - 1.0).abs()).fold(None, |a: Option<f64>, x| {
            Some(a.map_or(x, |a| a.max(x)))
        });
        let grid = crate::GridSpec::radial(est.d, cfg.half_width, cfg.points)?;
        let mut max_screened_ratio = 0.0f64;
        for p in crate::hls::hls_corpus(cfg.half_width, cfg.corpus_size, cfg.seed) {
            let h = match p.sample(grid) {
                Ok(h) => h,
                Err(_) => continue,
            };
            for &a in &SCREENED_ALPHAS {
                max_screened_ratio = max_screened_ratio.max(crate::hls::hls_ratio(&h, a)?);
            }
        }
        Ok(ChiCChecks {
            chi_c_refinement,
            chi_c_recomputed: crate::params::critical_chi(est.m, est.c_hls),
            max_screened_ratio,
            screened_below: max_screened_ratio <= est.c_hls,
        })
    }
}

#[cfg(test)]
mod tests;
