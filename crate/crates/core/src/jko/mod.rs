//! The minimizing-movement scheme
//!
//! ```text
//! (u_{n+1}, v_{n+1}) = argmin  W_2^2(u, u_n) / (2 h chi) + tau ||v - v_n||^2 / (2h) + E[u, v]
//! ```
//!
//! Each step alternates the exact quadratic minimization in `v` with a
//! proximal minimization in `u` until the step functional stops decreasing.
//! Everything is computed on `chi` times the functional, which stays finite
//! in the decoupled case `chi = 0`.

pub mod diagnostics;
mod prox;
mod quantile;

use serde::{Deserialize, Serialize};

use crate::energy::{energy, scaled_energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::field::{weighted_sum, ChemField, DensityField, GridFunction, MASS_TOL};
use crate::grid::GridSpec;
use crate::kernels::{elliptic_residual, elliptic_solve};
use crate::ops::Boundary;
use crate::params::ModelParams;
use crate::transport::{w2_radial, Lattice, Quantile, SinkhornConfig};

pub use diagnostics::{
    check_regularity, diagnostics, el_residual_u, modulus_constants, refinement_gap, regularity_diagnostic, time_modulus,
    Diagnostics, ModulusReport, RegularityCheck, RegularityRecord, RegularityReport,
};

/// Largest negative mass the u-step may clip before it is an error.
pub const CLIP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UMethod {
    /// Newton on the radial cumulative masses with the exact transport term.
    Quantile,
    /// Entropic proximal iteration; works on every grid.
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JkoConfig {
    pub method: UMethod,
    pub sinkhorn: SinkhornConfig,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Relative decrease of the step functional that ends the sweeps.
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    /// Allowed energy increase per step.
    pub energy_tol: f64,
    /// Fraction of the mass in one cell at which a run halts.
    pub concentration: f64,
}

impl JkoConfig {
    pub fn for_grid(grid: &GridSpec) -> Self {
        JkoConfig {
            method: if grid.is_radial() { UMethod::Quantile } else { UMethod::Sinkhorn },
            sinkhorn: SinkhornConfig { tol: 1e-9, ..SinkhornConfig::for_grid(grid) },
            newton_tol: 1e-14,
            max_newton: 200,
            sweep_tol: 1e-9,
            max_sweeps: 100,
            energy_tol: 1e-8,
            concentration: 0.25,
        }
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.method == UMethod::Quantile && !grid.is_radial() {
            return Err(Error::Unsupported("the quantile u-step needs a radial grid".into()));
        }
        self.sinkhorn.validate()?;
        for (name, x) in [("newton_tol", self.newton_tol), ("sweep_tol", self.sweep_tol), ("energy_tol", self.energy_tol)] {
            if !(x > 0.0) {
                return Err(crate::error::param(name, "must be positive"));
            }
        }
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(crate::error::param("concentration", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub u: DensityField,
    pub v: ChemField,
}

impl State {
    pub fn new(u: DensityField, v: ChemField) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(State { u, v })
    }
}

/// Record of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub n: usize,
    pub t: f64,
    pub w2_sq_increment: f64,
    /// `||v_{n+1} - v_n||_2^2`.
    pub v_increment_sq: f64,
    pub energy_before: EnergyBreakdown,
    pub energy_after: EnergyBreakdown,
    /// Step functional at the accepted pair, in the units of the energy.
    pub functional: f64,
    pub el_residual_v: f64,
    pub el_residual_u: f64,
    /// Slack `W_2^2 / 2` allowed to `el_residual_u`.
    pub el_slack: f64,
    pub entropy: f64,
    pub inner_iterations: usize,
    pub sweeps: usize,
    pub converged: bool,
    pub mass_drift: f64,
    pub clipped_mass: f64,
    pub max_density: f64,
    /// Largest fraction of the mass held by a single cell.
    pub peak_cell_mass: f64,
}

/// Energy units: the scheme works with `chi E`, reported as `E` when `chi > 0`.
fn unscale(p: &ModelParams, x: f64) -> f64 {
    if p.chi > 0.0 {
        x / p.chi
    } else {
        x
    }
}

fn check_grids(a: &impl GridFunction, b: &impl GridFunction) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn v_rhs(u: &DensityField, v_prev: &ChemField, kappa: f64) -> Vec<f64> {
    u.values().iter().zip(v_prev.values()).map(|(a, b)| a + kappa * b).collect()
}

/// Exact minimizer in `v`: `(tau/h + alpha - Laplacian) v = u + (tau/h) v_prev`.
pub fn v_step(u: &DensityField, v_prev: &ChemField, p: &ModelParams) -> Result<ChemField> {
    check_grids(u, v_prev)?;
    let kappa = p.tau / p.h;
    let rhs = ChemField::new(*u.grid(), v_rhs(u, v_prev, kappa))?;
    elliptic_solve(&rhs, p.alpha, kappa)
}

/// Relative residual of `tau (v - v_prev) / h - Laplacian v + alpha v - u = 0`.
pub fn v_residual(u: &DensityField, v: &ChemField, v_prev: &ChemField, p: &ModelParams) -> Result<f64> {
    check_grids(u, v)?;
    check_grids(u, v_prev)?;
    let g = u.grid();
    let kappa = p.tau / p.h;
    Ok(elliptic_residual(g, v.values(), &v_rhs(u, v_prev, kappa), kappa + p.alpha, Boundary::chemical(g, p.alpha)))
}

/// Result of the proximal minimization in `u`.
#[derive(Debug, Clone)]
pub struct UStep {
    pub u: DensityField,
    pub w2_sq: f64,
    pub iterations: usize,
    pub converged: bool,
    pub clipped_mass: f64,
    pub mass_drift: f64,
    /// Column potential of the entropic iteration, reused as a warm start.
    pub warm: Option<Vec<f64>>,
}

/// Turns cell masses into a unit-mass density, enforcing the clipping and
/// drift tolerances. `clipped` is mass already cut by the solver.
fn finish(grid: &GridSpec, masses: Vec<f64>, clipped: f64) -> Result<(DensityField, f64, f64)> {
    let clipped = clipped + masses.iter().filter(|x| **x < 0.0).map(|x| -x).sum::<f64>();
    if clipped > CLIP_TOL {
        return Err(Error::Stability(format!("u-step produced {clipped:e} of negative mass")));
    }
    let total: f64 = masses.iter().map(|x| x.max(0.0)).sum();
    let drift = (total - 1.0).abs();
    if drift > MASS_TOL {
        return Err(Error::MassDrift { drift, tol: MASS_TOL });
    }
    let vals = masses.iter().zip(grid.volumes()).map(|(x, v)| x.max(0.0) / (total * v)).collect();
    Ok((DensityField::new(*grid, vals)?, clipped, drift))
}

/// Minimizes `W_2^2(u, u_prev) / (2h) + int u^m / (m-1) - chi int u v` over unit-mass `u`.
pub fn u_step(u_prev: &DensityField, v: &ChemField, p: &ModelParams, cfg: &JkoConfig) -> Result<UStep> {
    u_step_from(u_prev, u_prev, v, p, cfg, None)
}

fn u_step_from(
    u_prev: &DensityField,
    start: &DensityField,
    v: &ChemField,
    p: &ModelParams,
    cfg: &JkoConfig,
    warm: Option<&[f64]>,
) -> Result<UStep> {
    check_grids(u_prev, v)?;
    cfg.validate(u_prev.grid())?;
    let g = *u_prev.grid();
    let drive: Vec<f64> = v.values().iter().map(|x| p.chi * x).collect();
    let vol = g.volumes();
    match cfg.method {
        UMethod::Quantile => {
            let prob = quantile::Problem {
                grid: &g,
                base: Quantile::from_masses(&g, &u_prev.cell_masses()),
                vol,
                drive: &drive,
                m: p.m,
                h: p.h,
            };
            let out = prob.solve(&start.cell_masses(), cfg.newton_tol, cfg.max_newton);
            let (u, clipped, mass_drift) = finish(&g, out.masses, out.clipped)?;
            Ok(UStep {
                w2_sq: w2_radial(&u, u_prev)?.w2_squared,
                u,
                iterations: out.iterations,
                converged: out.converged,
                clipped_mass: clipped,
                mass_drift,
                warm: None,
            })
        }
        UMethod::Sinkhorn => {
            let lat = Lattice::new(&g);
            let a = u_prev.cell_masses();
            let prox = prox::Prox { lat: &lat, a: &a, vol: &vol, drive: &drive, m: p.m, h: p.h };
            let s = &cfg.sinkhorn;
            let out = prox.solve(s.epsilon, s.tol, s.max_iter, warm);
            let (u, clipped_mass, mass_drift) = finish(&g, out.masses, 0.0)?;
            let w2_sq = if g.is_radial() { w2_radial(&u, u_prev)?.w2_squared } else { out.cost };
            Ok(UStep {
                w2_sq,
                u,
                iterations: out.iterations,
                converged: out.residual <= s.tol,
                clipped_mass,
                mass_drift,
                warm: Some(out.g),
            })
        }
    }
}

/// `chi F_{h,n}[u, v]` given `W_2^2(u, u_n)`.
fn scaled_functional(u: &DensityField, v: &ChemField, v_n: &ChemField, w2_sq: f64, p: &ModelParams) -> f64 {
    let dv: Vec<f64> = v.values().iter().zip(v_n.values()).map(|(a, b)| a - b).collect();
    let l2 = weighted_sum(u.grid(), &dv, |x| x * x);
    (w2_sq + p.chi * p.tau * l2) / (2.0 * p.h) + scaled_energy(u, v, p)
}

fn peak_cell_mass(u: &DensityField) -> f64 {
    u.cell_masses().into_iter().fold(0.0, f64::max)
}

/// One step of the scheme from `state`, which is step `n`.
pub fn jko_step(state: &State, p: &ModelParams, cfg: &JkoConfig, n: usize) -> Result<(State, StepReport)> {
    let mut warm = None;
    jko_step_warm(state, p, cfg, n, &mut warm)
}

fn jko_step_warm(
    state: &State,
    p: &ModelParams,
    cfg: &JkoConfig,
    n: usize,
    warm: &mut Option<Vec<f64>>,
) -> Result<(State, StepReport)> {
    check_grids(&state.u, &state.v)?;
    cfg.validate(state.u.grid())?;
    let (u_n, v_n) = (&state.u, &state.v);
    let energy_before = energy(u_n, v_n, p)?;
    let mut v = v_step(u_n, v_n, p)?;
    let mut u = u_n.clone();
    let mut f_prev = scaled_functional(&u, &v, v_n, 0.0, p);
    let (mut iterations, mut sweeps) = (0, 0);
    let mut converged = false;
    let (mut w2_sq, mut clipped, mut drift) = (0.0, 0.0f64, 0.0f64);
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        let us = u_step_from(u_n, &u, &v, p, cfg, warm.as_deref())?;
        iterations += us.iterations;
        clipped = clipped.max(us.clipped_mass);
        drift = drift.max(us.mass_drift);
        *warm = us.warm;
        u = us.u;
        w2_sq = us.w2_sq;
        v = v_step(&u, v_n, p)?;
        let f = scaled_functional(&u, &v, v_n, w2_sq, p);
        let done = f_prev - f <= cfg.sweep_tol * f.abs().max(1.0);
        f_prev = f;
        if done {
            converged = us.converged;
            break;
        }
    }
    let energy_after = energy(&u, &v, p)?;
    let increase = energy_after.total - energy_before.total;
    if increase > cfg.energy_tol {
        return Err(Error::EnergyIncrease { step: n + 1, increase, tol: cfg.energy_tol });
    }
    let dv: Vec<f64> = v.values().iter().zip(v_n.values()).map(|(a, b)| a - b).collect();
    let report = StepReport {
        n: n + 1,
        t: (n + 1) as f64 * p.h,
        w2_sq_increment: w2_sq,
        v_increment_sq: weighted_sum(u.grid(), &dv, |x| x * x),
        energy_before,
        energy_after,
        functional: unscale(p, f_prev),
        el_residual_v: v_residual(&u, &v, v_n, p)?,
        el_residual_u: el_residual_u(&u, u_n, &v, p),
        el_slack: 0.5 * w2_sq,
        entropy: crate::field::boltzmann_entropy(&u),
        inner_iterations: iterations,
        sweeps,
        converged,
        mass_drift: drift,
        clipped_mass: clipped,
        max_density: u.max_value(),
        peak_cell_mass: peak_cell_mass(&u),
    };
    Ok((State { u, v }, report))
}

/// A solver positioned at step `n`, carrying its warm start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stepper {
    pub params: ModelParams,
    pub config: JkoConfig,
    pub state: State,
    pub n: usize,
    pub warm: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(state: State, params: ModelParams, config: JkoConfig) -> Result<Self> {
        config.validate(state.u.grid())?;
        Ok(Stepper { params, config, state, n: 0, warm: None })
    }

    pub fn time(&self) -> f64 {
        self.n as f64 * self.params.h
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let (next, report) = jko_step_warm(&self.state, &self.params, &self.config, self.n, &mut self.warm)?;
        self.state = next;
        self.n += 1;
        Ok(report)
    }

    /// Concentration halt: a single cell holding more than the configured
    /// fraction of the mass means the grid no longer resolves the density.
    pub fn concentration(&self, report: &StepReport) -> Option<Error> {
        (report.peak_cell_mass > self.config.concentration).then(|| Error::Concentration {
            step: report.n,
            detail: format!("{:.3} of the mass in one cell of width {}", report.peak_cell_mass, self.state.u.grid().spacing()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    pub t: f64,
    pub u: DensityField,
    pub v: ChemField,
}

/// A-priori bounds computed from the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub e0: f64,
    /// `2 chi E_0 / (C_HLS (chi_c - chi))` for `0 < chi < chi_c`.
    pub lm_pow: Option<f64>,
    /// `4 E_0 + C_1 lm_pow`.
    pub grad_v_sq: Option<f64>,
    /// `||u||_m + ||grad v||_2` ceiling.
    pub c5: Option<f64>,
    /// `||v||_2^2 + int |x|^2 u <= intercept + slope t`.
    pub growth_intercept: Option<f64>,
    pub growth_slope: Option<f64>,
}

impl Bounds {
    pub fn new(initial: &Diagnostics, p: &ModelParams) -> Self {
        let e0 = initial.energy.total;
        let coupled = p.chi > 0.0;
        let lm_pow = (coupled && p.chi < p.chi_c).then(|| 2.0 * p.chi * e0 / (p.c_hls * (p.chi_c - p.chi)));
        let grad_v_sq = lm_pow.map(|b| 4.0 * e0 + crate::energy::gradient_bound_constant(p.d) * b);
        let c5 = lm_pow.zip(grad_v_sq).map(|(a, b)| a.powf(1.0 / p.m) + b.sqrt());
        let growth_intercept = coupled.then(|| 2.0 * (initial.second_moment + initial.l2_v * initial.l2_v));
        let growth_slope = coupled.then(|| 4.0 * e0 * (p.chi + 1.0 / p.tau));
        Bounds { e0, lm_pow, grad_v_sq, c5, growth_intercept, growth_slope }
    }
}

/// Outcome of the uniform estimates along a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryChecks {
    pub max_energy_increase: f64,
    pub energy_monotone: bool,
    /// `sum W_2^2 / chi + tau ||v_{n+1} - v_n||^2` (`sum W_2^2` at `chi = 0`).
    pub increment_sum: f64,
    pub increment_bound: f64,
    pub telescoping: bool,
    pub functional_below_energy: bool,
    pub sup_lm_pow: f64,
    pub lm_bound: Option<bool>,
    pub sup_grad_v_sq: f64,
    pub grad_v_bound: Option<bool>,
    pub growth_bound: Option<bool>,
    pub max_mass_drift: f64,
    pub max_clipped_mass: f64,
    pub conservation: bool,
    pub max_el_residual_v: f64,
    pub el_v: bool,
    /// Time integrals from `h` to the final time.
    pub grad_power_integral: f64,
    pub chemical_residual_integral: f64,
    pub flux_integral: f64,
    pub all_converged: bool,
}

impl TrajectoryChecks {
    /// The hard invariants of a run.
    pub fn passed(&self) -> bool {
        self.energy_monotone
            && self.telescoping
            && self.functional_below_energy
            && self.lm_bound != Some(false)
            && self.grad_v_bound != Some(false)
            && self.growth_bound != Some(false)
            && self.conservation
            && self.el_v
    }
}

/// Residual tolerance of the discrete v-equation.
pub const EL_V_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub config: JkoConfig,
    pub stride: usize,
    pub bounds: Bounds,
    pub initial: Diagnostics,
    pub reports: Vec<StepReport>,
    pub series: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
    pub halted: Option<String>,
}

impl Trajectory {
    pub fn new(initial: &State, params: ModelParams, config: JkoConfig, stride: usize) -> Result<Self> {
        let d0 = diagnostics(&initial.u, &initial.v, &params, 0)?;
        Ok(Trajectory {
            params,
            config,
            stride: stride.max(1),
            bounds: Bounds::new(&d0, &params),
            initial: d0,
            reports: Vec::new(),
            series: Vec::new(),
            snapshots: vec![Snapshot { n: 0, t: 0.0, u: initial.u.clone(), v: initial.v.clone() }],
            halted: None,
        })
    }

    /// Appends the report and diagnostics of the state reached at `report.n`.
    pub fn record(&mut self, report: StepReport, state: &State, force_snapshot: bool) -> Result<()> {
        self.series.push(diagnostics(&state.u, &state.v, &self.params, report.n)?);
        if force_snapshot || report.n % self.stride == 0 {
            if self.snapshots.last().map_or(true, |s| s.n != report.n) {
                self.snapshots.push(Snapshot { n: report.n, t: report.t, u: state.u.clone(), v: state.v.clone() });
            }
        }
        self.reports.push(report);
        Ok(())
    }

    pub fn final_time(&self) -> f64 {
        self.reports.last().map_or(0.0, |r| r.t)
    }

    pub fn checks(&self) -> TrajectoryChecks {
        let p = &self.params;
        let tol = self.config.energy_tol;
        let steps = self.reports.len() as f64;
        let max_energy_increase = self
            .reports
            .iter()
            .map(|r| r.energy_after.total - r.energy_before.total)
            .fold(f64::NEG_INFINITY, f64::max);
        let increment_sum: f64 = self
            .reports
            .iter()
            .map(|r| unscale(p, r.w2_sq_increment + p.chi * p.tau * r.v_increment_sq))
            .sum();
        let increment_bound = 2.0 * self.bounds.e0 * p.h + steps * tol;
        let sup_lm_pow = self.series.iter().map(|d| d.lm_norm.powf(p.m)).fold(self.initial.lm_norm.powf(p.m), f64::max);
        let sup_grad_v_sq = self.series.iter().map(|d| d.grad_v * d.grad_v).fold(self.initial.grad_v.powi(2), f64::max);
        let growth_bound = self.bounds.growth_intercept.zip(self.bounds.growth_slope).map(|(a, b)| {
            self.series.iter().all(|d| d.l2_v * d.l2_v + d.second_moment <= a + b * d.t)
        });
        let max_mass_drift = self.reports.iter().map(|r| r.mass_drift).fold(0.0, f64::max);
        let max_clipped_mass = self.reports.iter().map(|r| r.clipped_mass).fold(0.0, f64::max);
        let max_el_residual_v = self.reports.iter().map(|r| r.el_residual_v).fold(0.0, f64::max);
        let integral = |f: &dyn Fn(&Diagnostics) -> f64| self.series.iter().map(|d| p.h * f(d)).sum::<f64>();
        TrajectoryChecks {
            max_energy_increase,
            energy_monotone: max_energy_increase <= tol || self.reports.is_empty(),
            increment_sum,
            increment_bound,
            telescoping: increment_sum <= increment_bound,
            functional_below_energy: self.reports.iter().all(|r| r.functional <= r.energy_before.total + tol),
            sup_lm_pow,
            lm_bound: self.bounds.lm_pow.map(|b| sup_lm_pow <= b),
            sup_grad_v_sq,
            grad_v_bound: self.bounds.grad_v_sq.map(|b| sup_grad_v_sq <= b),
            growth_bound,
            max_mass_drift,
            max_clipped_mass,
            conservation: max_mass_drift <= MASS_TOL && max_clipped_mass <= CLIP_TOL,
            max_el_residual_v,
            el_v: max_el_residual_v <= EL_V_TOL,
            grad_power_integral: integral(&|d| d.grad_power_sq),
            chemical_residual_integral: integral(&|d| d.chemical_residual_sq),
            flux_integral: integral(&|d| d.flux_term),
            all_converged: self.reports.iter().all(|r| r.converged),
        }
    }
}

/// Number of steps needed to reach `t_final`.
pub fn step_count(t_final: f64, h: f64) -> usize {
    (t_final / h - 1e-9).ceil().max(0.0) as usize
}

/// Runs the scheme to `t_final`, keeping a snapshot every `stride` steps and
/// at the end. A concentration halt ends the run early and is recorded in
/// [`Trajectory::halted`].
pub fn run_trajectory(initial: State, params: ModelParams, config: JkoConfig, t_final: f64, stride: usize) -> Result<Trajectory> {
    let mut traj = Trajectory::new(&initial, params, config, stride)?;
    let mut stepper = Stepper::new(initial, params, config)?;
    let total = step_count(t_final, params.h);
    while stepper.n < total {
        let r = stepper.step()?;
        let halt = stepper.concentration(&r);
        traj.record(r, &stepper.state, stepper.n == total || halt.is_some())?;
        if let Some(e) = halt {
            traj.halted = Some(e.to_string());
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
