//! One-parameter families of runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::output::{num, sweep_header, write};
use super::{json, run, status_of, RunOutput, Status};
use crate::error::{Error, Result};
use crate::field::{weighted_sum, GridFunction};
use crate::jko::{modulus_constants, refinement_gap};
use crate::kernels::apply_bessel;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// In the units the base scenario uses: `model.chi` or `model.chi_fraction`.
    Chi,
    H,
    N,
    Tau,
    Alpha,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi" => Ok(Axis::Chi),
            "h" => Ok(Axis::H),
            "N" | "n" | "points" => Ok(Axis::N),
            "tau" => Ok(Axis::Tau),
            "alpha" => Ok(Axis::Alpha),
            _ => Err(Error::Config(format!("sweep axis must be one of chi, h, N, tau, alpha; got `{s}`"))),
        }
    }
}

impl Axis {
    fn label(self) -> &'static str {
        match self {
            Axis::Chi => "chi",
            Axis::H => "h",
            Axis::N => "N",
            Axis::Tau => "tau",
            Axis::Alpha => "alpha",
        }
    }
}

/// The base scenario with one parameter replaced.
pub fn with_axis(base: &Scenario, axis: Axis, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    match axis {
        Axis::Chi if base.model.chi_fraction.is_some() => s.model.chi_fraction = Some(value),
        Axis::Chi => s.model.chi = Some(value),
        Axis::H => {
            // Keep the snapshot times shared across the ladder.
            if s.output.snapshot_interval.is_none() {
                s.output.snapshot_interval = Some(base.time.t_final / 10.0);
            }
            s.time.h = value;
            s.output.stride = ((base.output.stride as f64 * base.time.h / value).round() as usize).max(1);
        }
        Axis::N => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Config(format!("sweep value {value} is not a point count")));
            }
            s.grid.points = value as usize;
        }
        Axis::Tau => s.model.tau = value,
        Axis::Alpha => s.model.alpha = value,
    }
    s.name = format!("{}-{}-{}", base.name, axis.label(), value);
    s.check(None)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMember {
    pub value: f64,
    pub dir: PathBuf,
    pub scenario_hash: String,
    pub status: Status,
    pub exit_code: i32,
    pub exploratory: bool,
    pub chi: f64,
    pub chi_fraction: f64,
    pub e0: Option<f64>,
    pub final_energy: Option<f64>,
    pub sup_lm_pow: Option<f64>,
    pub lm_bound: Option<f64>,
    /// `||u_h - u_(h/2)||_(L^m(delta, T))` to the next member of an h-ladder.
    pub gap_to_next: Option<f64>,
    pub v_modulus: Option<f64>,
    pub u_modulus: Option<f64>,
    /// `||v - S_alpha(u)||_2 / ||v||_2` at the final time.
    pub v_minus_bessel_relative: Option<f64>,
    pub oracle_gap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep_hash: String,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub members: Vec<SweepMember>,
    /// Some member failed a hard invariant or did not run.
    pub partial: bool,
    pub status: Status,
    /// Whether the headline quantity of the axis grows with the value:
    /// `sup ||u||_m^m` with chi (ties allowed), the refinement gap with h,
    /// and `||v - S(u)||` with tau.
    pub trend: Option<bool>,
}

fn member(value: f64, dir: PathBuf, s: &Scenario, run: Result<RunOutput>) -> (SweepMember, Option<RunOutput>) {
    let mut m = SweepMember {
        value,
        dir,
        scenario_hash: s.hash(),
        status: Status::Failure,
        exit_code: Status::Failure.code(),
        exploratory: false,
        chi: f64::NAN,
        chi_fraction: f64::NAN,
        e0: None,
        final_energy: None,
        sup_lm_pow: None,
        lm_bound: None,
        gap_to_next: None,
        v_modulus: None,
        u_modulus: None,
        v_minus_bessel_relative: None,
        oracle_gap: None,
        error: None,
    };
    match run {
        Err(e) => {
            m.status = status_of(&e);
            m.exit_code = m.status.code();
            m.error = Some(e.to_string());
            (m, None)
        }
        Ok(out) => {
            let sm = &out.summary;
            m.status = sm.status;
            m.exit_code = sm.exit_code;
            m.exploratory = sm.exploratory;
            m.chi = sm.chi;
            m.chi_fraction = sm.chi / sm.chi_c;
            m.error = sm.error.clone();
            m.oracle_gap = sm.comparison.map(|c| c.lm_relative);
            if let Some(t) = &out.trajectory {
                m.e0 = Some(t.bounds.e0);
                m.final_energy = t.series.last().map(|d| d.energy.total);
                m.sup_lm_pow = sm.jko.map(|c| c.sup_lm_pow);
                m.lm_bound = t.bounds.lm_pow;
                if let Ok((v, u)) = modulus_constants(t) {
                    m.v_modulus = Some(v);
                    m.u_modulus = Some(u);
                }
                if let Some(last) = t.snapshots.last() {
                    if let Ok(s) = apply_bessel(&last.u, t.params.alpha) {
                        let g = *last.v.grid();
                        let diff: Vec<f64> = last.v.values().iter().zip(s.values()).map(|(a, b)| a - b).collect();
                        let norm = weighted_sum(&g, last.v.values(), |x| x * x).sqrt();
                        if norm > 0.0 {
                            m.v_minus_bessel_relative = Some(weighted_sum(&g, &diff, |x| x * x).sqrt() / norm);
                        }
                    }
                }
            }
            (m, Some(out))
        }
    }
}

/// Increasing in the swept value; ties are allowed unless `strict`.
fn increasing(pairs: &[(f64, f64)], strict: bool) -> Option<bool> {
    (pairs.len() >= 2).then(|| pairs.windows(2).all(|w| w[1].1 > w[0].1 || (!strict && w[1].1 == w[0].1)))
}

fn csv(report: &SweepReport) -> String {
    let mut out = sweep_header();
    for m in &report.members {
        let cells = [
            Some(m.chi),
            Some(m.chi_fraction),
            m.e0,
            m.final_energy,
            m.sup_lm_pow,
            m.lm_bound,
            m.gap_to_next,
            m.v_modulus,
            m.u_modulus,
            m.v_minus_bessel_relative,
            m.oracle_gap,
        ]
        .map(num);
        let status = serde_json::to_value(m.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{status},{},{},{}",
            report.sweep_hash,
            m.scenario_hash,
            report.axis.label(),
            num(Some(m.value)),
            m.exit_code,
            m.exploratory,
            cells.join(",")
        );
    }
    out
}

/// Runs the base scenario at each value, at most `workers` at a time, each in
/// its own directory under `out`, and joins the results in value order.
pub fn sweep(base: &Scenario, axis: Axis, values: &[f64], out: &Path, workers: usize) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let scenarios = values.iter().map(|&v| with_axis(base, axis, v)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out)?;
    let mut hasher = Sha256::new();
    hasher.update(base.canonical_json());
    hasher.update(format!("{axis:?}{values:?}"));
    let sweep_hash: String = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<(SweepMember, Option<RunOutput>)> = pool.install(|| {
        scenarios
            .par_iter()
            .zip(values.par_iter())
            .map(|(s, &v)| {
                let dir = out.join(format!("{}_{}", axis.label(), num(Some(v))));
                let r = run(s, &dir);
                member(v, dir, s, r)
            })
            .collect()
    });
    let (mut members, outputs): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    if axis == Axis::H {
        let delta = base.time.t_final / 10.0;
        for i in 0..members.len().saturating_sub(1) {
            let halved = (values[i + 1] * 2.0 - values[i]).abs() <= 1e-9 * values[i];
            if let (true, Some(a), Some(b)) = (halved, &outputs[i], &outputs[i + 1]) {
                if let (Some(ta), Some(tb)) = (&a.trajectory, &b.trajectory) {
                    members[i].gap_to_next = refinement_gap(ta, tb, delta).ok();
                }
            }
        }
    }

    let partial = members.iter().any(|m| m.status != Status::Pass);
    let status = members.iter().fold(Status::Pass, |s, m| s.worst(m.status));
    let metric = |m: &SweepMember| match axis {
        Axis::Chi => m.sup_lm_pow,
        Axis::H => m.gap_to_next,
        Axis::Tau => m.v_minus_bessel_relative,
        Axis::N | Axis::Alpha => None,
    };
    let mut pairs: Vec<(f64, f64)> = members.iter().filter_map(|m| metric(m).map(|x| (m.value, x))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // A spreading density attains its sup at t = 0 for every chi.
    let trend = increasing(&pairs, axis != Axis::Chi);
    let report = SweepReport { sweep_hash, axis, values: values.to_vec(), members, partial, status, trend };
    write(&out.join("sweep.csv"), &csv(&report))?;
    json(&out.join("sweep.json"), &report)?;
    Ok(report)
}
