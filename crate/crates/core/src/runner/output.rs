//! CSV artifacts. Column lists here must match `schema/csv_schema.json`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::fd::{Comparison, FdRun};
use crate::jko::{Diagnostics, Trajectory};

pub const DIAGNOSTICS_COLUMNS: [&str; 23] = [
    "scenario_hash",
    "solver",
    "exploratory",
    "n",
    "t",
    "energy",
    "diffusion_term",
    "interaction_term",
    "dirichlet_term",
    "mass_term",
    "lm_norm",
    "grad_v",
    "l2_v",
    "second_moment",
    "entropy",
    "w2_increment",
    "el_residual_u",
    "el_residual_v",
    "max_density",
    "mass_drift",
    "clipped_mass",
    "functional",
    "converged",
];

pub const COMPARISON_COLUMNS: [&str; 9] =
    ["scenario_hash", "t", "lm_gap", "lm_relative", "h1_gap", "h1_relative", "energy_jko", "energy_fd", "exploratory"];

pub const SWEEP_COLUMNS: [&str; 18] = [
    "sweep_hash",
    "scenario_hash",
    "axis",
    "value",
    "status",
    "exit_code",
    "exploratory",
    "chi",
    "chi_fraction",
    "e0",
    "final_energy",
    "sup_lm_pow",
    "lm_bound",
    "gap_to_next",
    "v_modulus",
    "u_modulus",
    "v_minus_bessel_relative",
    "oracle_gap",
];

/// Shortest round-trip form; empty for a missing value.
pub(crate) fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:e}"),
        Some(v) => v.to_string(),
        None => String::new(),
    }
}

fn header(cols: &[&str]) -> String {
    let mut s = cols.join(",");
    s.push('\n');
    s
}

/// Step quantities that only the variational scheme has.
struct StepExtras {
    w2: Option<f64>,
    el_u: Option<f64>,
    el_v: Option<f64>,
    drift: f64,
    clipped: f64,
    functional: Option<f64>,
    converged: &'static str,
}

fn row(out: &mut String, hash: &str, solver: &str, exploratory: bool, d: &Diagnostics, x: &StepExtras) {
    let e = &d.energy;
    let cells = [
        num(Some(d.t)),
        num(Some(e.total)),
        num(Some(e.diffusion_term)),
        num(Some(e.interaction_term)),
        num(Some(e.dirichlet_term)),
        num(Some(e.mass_term)),
        num(Some(d.lm_norm)),
        num(Some(d.grad_v)),
        num(Some(d.l2_v)),
        num(Some(d.second_moment)),
        num(Some(d.entropy)),
        num(x.w2),
        num(x.el_u),
        num(x.el_v),
        num(Some(d.max_density)),
        num(Some(x.drift)),
        num(Some(x.clipped)),
        num(x.functional),
    ];
    let _ = writeln!(out, "{hash},{solver},{exploratory},{},{},{}", d.n, cells.join(","), x.converged);
}

fn keep(n: usize, stride: usize, last: usize) -> bool {
    n % stride == 0 || n == last
}

/// Rows every `stride` steps plus the initial and final states.
pub fn diagnostics_csv(hash: &str, exploratory: bool, stride: usize, jko: Option<&Trajectory>, fd: Option<&FdRun>) -> String {
    let mut out = header(&DIAGNOSTICS_COLUMNS);
    let stride = stride.max(1);
    if let Some(t) = jko {
        let none = StepExtras { w2: None, el_u: None, el_v: None, drift: 0.0, clipped: 0.0, functional: None, converged: "" };
        row(&mut out, hash, "jko", exploratory, &t.initial, &none);
        let last = t.reports.last().map_or(0, |r| r.n);
        for (r, d) in t.reports.iter().zip(&t.series) {
            if keep(r.n, stride, last) {
                let x = StepExtras {
                    w2: Some(r.w2_sq_increment),
                    el_u: Some(r.el_residual_u),
                    el_v: Some(r.el_residual_v),
                    drift: r.mass_drift,
                    clipped: r.clipped_mass,
                    functional: Some(r.functional),
                    converged: if r.converged { "true" } else { "false" },
                };
                row(&mut out, hash, "jko", exploratory, d, &x);
            }
        }
    }
    if let Some(f) = fd {
        let none = StepExtras { w2: None, el_u: None, el_v: None, drift: 0.0, clipped: 0.0, functional: None, converged: "" };
        row(&mut out, hash, "fd", exploratory, &f.initial, &none);
        let last = f.reports.last().map_or(0, |r| r.n);
        for (r, d) in f.reports.iter().zip(&f.series) {
            if keep(r.n, stride, last) {
                let x = StepExtras {
                    w2: None,
                    el_u: None,
                    el_v: None,
                    drift: r.mass_drift,
                    clipped: r.clipped_mass,
                    functional: None,
                    converged: "true",
                };
                row(&mut out, hash, "fd", exploratory, d, &x);
            }
        }
    }
    out
}

pub fn comparison_csv(hash: &str, exploratory: bool, c: &Comparison) -> String {
    let mut out = header(&COMPARISON_COLUMNS);
    for r in &c.rows {
        let cells = [r.t, r.lm_gap, r.lm_relative, r.h1_gap, r.h1_relative, r.energy_jko, r.energy_fd].map(|x| num(Some(x)));
        let _ = writeln!(out, "{hash},{},{exploratory}", cells.join(","));
    }
    out
}

pub(crate) fn sweep_header() -> String {
    header(&SWEEP_COLUMNS)
}

pub(crate) fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_columns(file: &str) -> Vec<String> {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schema/csv_schema.json");
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        doc["files"][file]["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap().to_string()).collect()
    }

    #[test]
    fn shipped_schema_matches_the_writers() {
        assert_eq!(schema_columns("diagnostics.csv"), DIAGNOSTICS_COLUMNS);
        assert_eq!(schema_columns("comparison.csv"), COMPARISON_COLUMNS);
        assert_eq!(schema_columns("sweep.csv"), SWEEP_COLUMNS);
    }

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300, 0.0] {
            assert_eq!(num(Some(x)).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(None), "");
    }
}
