//! The invariant suite behind `ksflow validate`: short runs on coarse grids
//! plus the kernel and transport anchors.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{json, run, status_of, Invariant, Status, Summary};
use crate::error::Result;
use crate::field::DensityField;
use crate::grid::GridSpec;
use crate::kernels::{bessel_kernel_value, bessel_residual};
use crate::scenario::{
    ChemStart, Family, GridKind, GridSection, InitialSection, ModelSection, OutputSection, Scenario, SolverKind,
    SolverSection, TimeSection, ToleranceSection,
};
use crate::transport::{entropic_bias_bound, w2_radial, w2_sinkhorn, w2_triangle_check, Method, SinkhornConfig};

/// Points on the radial toy grids.
pub const TOY_POINTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub checks: Vec<Invariant>,
    pub runs: Vec<Summary>,
    pub status: Status,
    pub seconds: f64,
}

impl ValidationReport {
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().map(Invariant::line).collect();
        for s in &self.runs {
            for i in &s.invariants {
                out.push(format!("[{}] {}", s.name, i.line()));
            }
        }
        out
    }
}

fn toy(name: &str, chi_fraction: f64, alpha: f64, tau: f64, family: Family, kind: SolverKind) -> Scenario {
    Scenario {
        name: name.into(),
        seed: 0,
        model: ModelSection { d: 3, chi: None, chi_fraction: Some(chi_fraction), alpha, tau, c_hls: None },
        grid: GridSection { mode: GridKind::Radial, half_width: 8.0, points: TOY_POINTS },
        time: TimeSection { h: 2e-3, t_final: 0.05 },
        initial: InitialSection {
            family,
            sigma: Some(0.5),
            center: None,
            radius: Some(2.0),
            width: Some(0.5),
            separation: None,
            path: None,
            noise: 0.0,
            v0: ChemStart::Bessel,
        },
        solver: SolverSection { kind, ..SolverSection::default() },
        output: OutputSection { stride: 5, ..OutputSection::default() },
        tolerances: ToleranceSection::default(),
    }
}

/// The scenarios run by [`validate`].
pub fn suite_scenarios() -> Vec<Scenario> {
    let mut v: Vec<Scenario> = [0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&f| toy(&format!("gaussian-{f}"), f, 1.0, 1.0, Family::Gaussian, SolverKind::Both))
        .collect();
    v.push(toy("shell-screened", 0.5, 1.0, 0.1, Family::Shell, SolverKind::Jko));
    v.push(toy("shell-newtonian", 0.5, 0.0, 1.0, Family::Shell, SolverKind::Jko));
    v.push(toy("decoupled", 0.0, 1.0, 1.0, Family::Gaussian, SolverKind::Both));
    let mut hot = toy("supercritical", 1.5, 1.0, 1.0, Family::Gaussian, SolverKind::Jko);
    hot.time.t_final = 0.01;
    v.push(hot);
    let mut cube = toy("box", 0.5, 1.0, 1.0, Family::TwoBump, SolverKind::Jko);
    cube.grid = GridSection { mode: GridKind::Box, half_width: 3.0, points: 16 };
    cube.initial.separation = Some(1.5);
    cube.initial.sigma = Some(0.6);
    cube.time = TimeSection { h: 1e-2, t_final: 0.02 };
    cube.output.regularity = false;
    v.push(cube);
    v
}

fn radial_bump(g: GridSpec, c: f64, w: f64) -> Result<DensityField> {
    let v = g.axis_centers().iter().map(|r| (-(r - c).powi(2) / (2.0 * w * w)).exp()).collect();
    DensityField::probability(g, v)
}

fn anchors(seed: u64) -> Result<Vec<Invariant>> {
    let mut out = Vec::new();
    let radial = GridSpec::radial(3, 8.0, TOY_POINTS)?;
    let cube = GridSpec::full_box(3, 4.0, TOY_POINTS)?;
    let shell = |g: GridSpec| -> Result<DensityField> {
        let c = g.axis_centers();
        match g.mode {
            crate::grid::GridMode::Radial => radial_bump(g, 2.0, 0.5),
            crate::grid::GridMode::FullBox => {
                let mut ix = vec![0; g.dim];
                let vals = (0..g.cell_count())
                    .map(|n| {
                        g.unflatten(n, &mut ix);
                        let r = ix.iter().map(|&j| c[j] * c[j]).sum::<f64>().sqrt();
                        (-(r - 1.5).powi(2) / (2.0 * 0.4 * 0.4)).exp()
                    })
                    .collect();
                DensityField::probability(g, vals)
            }
        }
    };
    let mut worst_box = 0.0f64;
    for u in [DensityField::gaussian(cube, 0.6, &[0.0; 3])?, shell(cube)?] {
        for alpha in [0.0, 1.0] {
            worst_box = worst_box.max(bessel_residual(&u, alpha)?);
        }
    }
    out.push(Invariant::at_most("kernel_identity_box", worst_box, 1e-4));
    let mut worst_radial = 0.0f64;
    for u in [DensityField::gaussian(radial, 0.5, &[])?, shell(radial)?] {
        for alpha in [0.0, 1.0] {
            worst_radial = worst_radial.max(bessel_residual(&u, alpha)?);
        }
    }
    out.push(Invariant::at_most("kernel_identity_radial", worst_radial, 1e-6));
    let mut yukawa = 0.0f64;
    for alpha in [0.25, 1.0, 4.0] {
        for r in [0.1, 0.7, 2.0, 5.0] {
            let exact = (-f64::sqrt(alpha) * r).exp() / (4.0 * std::f64::consts::PI * r);
            yukawa = yukawa.max(((bessel_kernel_value(alpha, r, 3)? - exact) / exact).abs());
        }
    }
    out.push(Invariant::at_most("yukawa_closed_form", yukawa, 1e-8));

    let g = GridSpec::radial(3, 4.0, TOY_POINTS)?;
    let c = g.axis_centers();
    let atom = |i: usize| {
        let mut v = vec![0.0; g.points];
        v[i] = 1.0;
        DensityField::probability(g, v)
    };
    let mut shells = 0.0f64;
    for (i, j) in [(3, 50), (20, 21), (63, 0)] {
        let w = w2_radial(&atom(i)?, &atom(j)?)?.w2_squared;
        shells = shells.max((w - (c[i] - c[j]).powi(2)).abs());
    }
    out.push(Invariant::at_most("w2_equal_shells", shells, 1e-13));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bump = |rng: &mut ChaCha8Rng| radial_bump(g, rng.gen_range(0.3..2.5), rng.gen_range(0.25..0.8));
    let cfg = SinkhornConfig { max_iter: 5000, ..SinkhornConfig::for_grid(&g) };
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..5 {
        let (a, b) = (bump(&mut rng)?, bump(&mut rng)?);
        let exact = w2_radial(&a, &b)?.w2_squared;
        let ent = w2_sinkhorn(&a, &b, &cfg)?.w2_squared;
        let tol = (0.02 * exact).max(entropic_bias_bound(cfg.epsilon, 1));
        excess = excess.max((ent - exact).abs() / tol);
    }
    out.push(Invariant::at_most("sinkhorn_vs_exact", excess, 1.0));
    let mut slack = f64::INFINITY;
    for _ in 0..100 {
        let (a, b, d) = (bump(&mut rng)?, bump(&mut rng)?, bump(&mut rng)?);
        slack = slack.min(w2_triangle_check(&a, &b, &d, Method::Exact)?.slack);
    }
    out.push(Invariant { name: "w2_triangle_min_slack".into(), passed: Some(slack >= -1e-12), value: slack, limit: None });
    Ok(out)
}

/// Runs [`suite_scenarios`] into subdirectories of `out`, then the anchors.
pub fn validate(out: &Path, seed: u64, workers: usize) -> Result<ValidationReport> {
    let clock = Instant::now();
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let scenarios = suite_scenarios();
    let results: Vec<std::result::Result<Summary, (String, Status, String)>> = pool.install(|| {
        use rayon::prelude::*;
        scenarios
            .par_iter()
            .map(|s| match run(s, &out.join(&s.name)) {
                Ok(o) => Ok(o.summary),
                Err(e) => Err((s.name.clone(), status_of(&e), e.to_string())),
            })
            .collect()
    });
    let mut status = Status::Pass;
    let mut runs = Vec::new();
    let mut checks = Vec::new();
    for r in results {
        match r {
            Ok(s) => {
                status = status.worst(s.status);
                runs.push(s);
            }
            Err((name, st, msg)) => {
                status = status.worst(st);
                checks.push(Invariant { name: format!("{name}: {msg}"), passed: Some(false), value: f64::NAN, limit: None });
            }
        }
    }
    let mut anchors = pool.install(|| anchors(seed))?;
    if anchors.iter().any(|i| i.passed == Some(false)) {
        status = status.worst(Status::InvariantBreach);
    }
    anchors.append(&mut checks);
    let report = ValidationReport { seed, checks: anchors, runs, status, seconds: clock.elapsed().as_secs_f64() };
    json(&out.join("validate.json"), &report)?;
    Ok(report)
}
