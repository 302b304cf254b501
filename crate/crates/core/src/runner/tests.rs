use super::*;
use crate::scenario::Scenario;

const TINY: &str = r#"
name = "tiny"
seed = 3

[model]
d = 3
chi_fraction = 0.5
alpha = 1.0
tau = 1.0

[grid]
mode = "radial"
half_width = 8.0
points = 64

[time]
h = 2e-3
t_final = 0.02

[initial]
family = "gaussian"
sigma = 0.5

[solver]
kind = "both"

[output]
stride = 2
checkpoint_every = 4
"#;

fn tiny() -> Scenario {
    Scenario::parse(TINY).unwrap()
}

#[test]
fn run_writes_every_artifact_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&tiny(), dir.path()).unwrap();
    let s = &out.summary;
    assert_eq!(s.status, Status::Pass, "{:?}", s.failed());
    assert_eq!(s.steps, 10);
    for f in ["config.json", "diagnostics.csv", "comparison.csv", "summary.json", "checkpoints/ckpt_000004.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(dir.path().join("fields/jko_u_000010.kfld").exists());
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), output::DIAGNOSTICS_COLUMNS.join(","));
    let rows: Vec<&str> = lines.collect();
    // Steps 0, 2, .., 10 for each solver.
    assert_eq!(rows.len(), 12);
    for r in &rows {
        assert!(r.starts_with(&s.scenario_hash), "{r}");
        assert_eq!(r.split(',').count(), output::DIAGNOSTICS_COLUMNS.len());
    }
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["scenario_hash"], s.scenario_hash.as_str());
    assert_eq!(echo["seed"], 3);
    assert!(echo["initial_raw_mass"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_scenarios_give_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&tiny(), a.path()).unwrap();
    run(&tiny(), b.path()).unwrap();
    for f in ["diagnostics.csv", "comparison.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_reproduces_the_continuation_bit_exactly() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let full = run(&tiny(), a.path()).unwrap();
    let resumed = resume(&a.path().join("checkpoints").join(checkpoint_name(8)), Some(b.path())).unwrap();
    assert_eq!(resumed.summary.steps, full.summary.steps);
    assert_eq!(
        std::fs::read(a.path().join("diagnostics.csv")).unwrap(),
        std::fs::read(b.path().join("diagnostics.csv")).unwrap()
    );
    assert_eq!(full.trajectory.unwrap().snapshots, resumed.trajectory.unwrap().snapshots);
    assert_eq!(full.summary.regularity, resumed.summary.regularity);
}

#[test]
fn supercritical_runs_are_marked_exploratory() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace("chi_fraction = 0.5", "chi_fraction = 1.2").replace("kind = \"both\"", "kind = \"jko\"");
    let out = run(&Scenario::parse(&text).unwrap(), dir.path()).unwrap();
    assert!(out.summary.exploratory);
    let lm = out.summary.invariants.iter().find(|i| i.name == "lm_bound").unwrap();
    assert_eq!(lm.passed, None);
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("true")));
}

#[test]
fn errors_map_to_exit_codes() {
    assert_eq!(status_of(&Error::Config("x".into())).code(), 3);
    assert_eq!(status_of(&Error::NonConvergence("x".into())).code(), 4);
    assert_eq!(status_of(&Error::MassDrift { drift: 1.0, tol: 0.0 }).code(), 2);
    assert_eq!(Status::Pass.worst(Status::NonConvergence).worst(Status::InvariantBreach), Status::InvariantBreach);
    let bad = TINY.replace("tau = 1.0", "tau = -1.0");
    assert_eq!(status_of(&Scenario::parse(&bad).unwrap_err()), Status::ConfigError);
}

#[test]
fn chi_sweep_joins_members_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = tiny();
    base.solver.kind = crate::scenario::SolverKind::Jko;
    base.output.checkpoint_every = 0;
    let rep = sweep(&base, Axis::Chi, &[0.75, 0.25], dir.path(), 2).unwrap();
    assert!(!rep.partial);
    assert_eq!(rep.members[0].value, 0.75);
    assert_eq!(rep.trend, Some(true));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("chi_7.5e-1/summary.json").exists());
}
