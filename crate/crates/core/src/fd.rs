//! Finite-volume oracle for the same system.
//!
//! Each step moves `u` by an explicit upwind drift, then solves one
//! backward-Euler diffusion problem with the coefficient `m u^(m-1)` frozen
//! at the current state, and finally advances `v` by backward Euler. All
//! fluxes are conservative, so mass is preserved up to rounding.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{integral, weighted_sum, ChemField, DensityField, GridFunction};
use crate::grid::{GridMode, GridSpec};
use crate::jko::diagnostics::for_each_face;
use crate::jko::{diagnostics, Diagnostics, Snapshot, State, Trajectory};
use crate::kernels::elliptic_solve;
use crate::ops::{dirichlet_form, stride, thomas, Boundary};
use crate::params::ModelParams;

/// Largest mass change allowed in one step.
pub const FD_MASS_TOL: f64 = 1e-12;

/// Most negative density that is clipped rather than reported.
pub const NEGATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub dt: f64,
    /// Second-order minmod reconstruction of the drift face values.
    pub limiter: bool,
    pub t_final: f64,
}

impl FdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(crate::error::param("dt", "must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(crate::error::param("t_final", "must be non-negative"));
        }
        Ok(())
    }

    /// Courant number below which the explicit drift keeps `u >= 0`.
    pub fn courant_limit(&self) -> f64 {
        if self.limiter {
            0.5
        } else {
            1.0
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Stability numbers of a state under a given step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    /// `dt max_i sum_out A_f b_f / V_i` for the drift velocity `b = chi grad v`.
    pub courant: f64,
    /// Largest admissible step for the drift.
    pub dt_max: f64,
    /// `dt max(m u^(m-1)) / dx^2`; the diffusion is implicit, so this only
    /// measures how far the frozen coefficient lags.
    pub diffusion_number: f64,
    pub max_grad_v: f64,
}

/// Interior faces with their transport coefficient `A_f / dx`.
#[derive(Debug, Clone, Copy)]
struct Face {
    i: usize,
    j: usize,
    coef: f64,
    /// Cell beyond `i` on the side away from `j`, and beyond `j` away from `i`.
    behind_i: Option<usize>,
    ahead_j: Option<usize>,
}

fn faces(grid: &GridSpec) -> Vec<Face> {
    let dx = grid.spacing();
    let n = grid.points;
    let mut out = Vec::new();
    for_each_face(grid, |w, _, axis, i, j| {
        let (behind_i, ahead_j) = match axis {
            None => (i.checked_sub(1), (j + 1 < n).then_some(j + 1)),
            Some(k) => {
                let st = stride(grid, k);
                let pos = (i / st) % n;
                ((pos > 0).then(|| i - st), (pos + 2 < n).then(|| j + st))
            }
        };
        out.push(Face { i, j, coef: w / (dx * dx), behind_i, ahead_j });
    });
    out
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Drift velocity `chi (v_j - v_i) / dx` across a face, positive towards `j`.
fn velocity(f: &Face, v: &[f64], p: &ModelParams, dx: f64) -> f64 {
    p.chi * (v[f.j] - v[f.i]) / dx
}

pub fn stability(state: &State, p: &ModelParams, cfg: &FdConfig) -> Stability {
    let g = state.u.grid();
    let dx = g.spacing();
    let vol = g.volumes();
    let v = state.v.values();
    let mut out_rate = vec![0.0; vol.len()];
    let mut max_grad_v: f64 = 0.0;
    for f in faces(g) {
        let b = velocity(&f, v, p, dx);
        max_grad_v = max_grad_v.max(((v[f.j] - v[f.i]) / dx).abs());
        if b > 0.0 {
            out_rate[f.i] += f.coef * dx * b;
        } else {
            out_rate[f.j] -= f.coef * dx * b;
        }
    }
    let rate = out_rate.iter().zip(&vol).map(|(r, v)| r / v).fold(0.0, f64::max);
    let pressure = state.u.values().iter().map(|u| p.m * u.powf(p.m - 1.0)).fold(0.0, f64::max);
    Stability {
        courant: cfg.dt * rate,
        dt_max: if rate > 0.0 { cfg.courant_limit() / rate } else { f64::INFINITY },
        diffusion_number: cfg.dt * pressure / (dx * dx),
        max_grad_v,
    }
}

/// Errors if `cfg.dt` violates the drift stability bound at `state`.
pub fn check_stability(state: &State, p: &ModelParams, cfg: &FdConfig) -> Result<Stability> {
    cfg.validate()?;
    let s = stability(state, p, cfg);
    if s.courant > cfg.courant_limit() {
        return Err(Error::Stability(format!(
            "dt = {} exceeds the drift bound {:.3e} (max |grad v| = {:.3e}); use a smaller dt",
            cfg.dt, s.dt_max, s.max_grad_v
        )));
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdStepReport {
    pub n: usize,
    pub t: f64,
    pub mass_drift: f64,
    pub clipped_mass: f64,
    pub courant: f64,
    pub solver_iterations: usize,
}

/// `(V / dt) x + sum_f c_f D_f (x_i - x_j)` over the faces.
fn apply(faces: &[Face], diff: &[f64], diag: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y: Vec<f64> = diag.iter().zip(x).map(|(d, x)| d * x).collect();
    for (f, &k) in faces.iter().zip(diff) {
        let flux = k * (x[f.i] - x[f.j]);
        y[f.i] += flux;
        y[f.j] -= flux;
    }
    y
}

/// Jacobi-preconditioned conjugate gradients on the diffusion system.
fn cg(faces: &[Face], diff: &[f64], diag: &[f64], b: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut pre = diag.to_vec();
    for (f, &k) in faces.iter().zip(diff) {
        pre[f.i] += k;
        pre[f.j] += k;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bn = dot(b, b).sqrt();
    let mut x: Vec<f64> = b.iter().zip(&pre).map(|(b, p)| b / p).collect();
    let ax = apply(faces, diff, diag, &x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&pre).map(|(r, p)| r / p).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 20 * b.len().max(100);
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= 1e-15 * bn {
            return Ok((x, it));
        }
        let ad = apply(faces, diff, diag, &dir);
        let alpha = rz / dot(&dir, &ad);
        for k in 0..x.len() {
            x[k] += alpha * dir[k];
            r[k] -= alpha * ad[k];
        }
        z = r.iter().zip(&pre).map(|(r, p)| r / p).collect();
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..x.len() {
            dir[k] = z[k] + beta * dir[k];
        }
    }
    let res = dot(&r, &r).sqrt() / bn.max(f64::MIN_POSITIVE);
    if res <= 1e-13 {
        Ok((x, max_iter))
    } else {
        Err(Error::NonConvergence(format!("diffusion solve stalled at relative residual {res:e}")))
    }
}

/// One step of the oracle from `state`, which is step `n`.
pub fn fd_step(state: &State, p: &ModelParams, cfg: &FdConfig, n: usize) -> Result<(State, FdStepReport)> {
    let g = *state.u.grid();
    if state.v.grid() != &g {
        return Err(Error::GridMismatch);
    }
    let dt = cfg.dt;
    let dx = g.spacing();
    let vol = g.volumes();
    let u = state.u.values();
    let v = state.v.values();
    let fs = faces(&g);
    let courant = stability(state, p, cfg).courant;

    // Explicit upwind drift.
    let mut rhs: Vec<f64> = u.iter().zip(&vol).map(|(u, v)| u * v / dt).collect();
    if p.chi != 0.0 {
        for f in &fs {
            let b = velocity(f, v, p, dx);
            let face_u = if b > 0.0 {
                let slope = if cfg.limiter { f.behind_i.map_or(0.0, |k| minmod(u[f.i] - u[k], u[f.j] - u[f.i])) } else { 0.0 };
                u[f.i] + 0.5 * slope
            } else {
                let slope = if cfg.limiter { f.ahead_j.map_or(0.0, |k| minmod(u[f.j] - u[k], u[f.i] - u[f.j])) } else { 0.0 };
                u[f.j] + 0.5 * slope
            };
            let flux = f.coef * dx * b * face_u;
            rhs[f.i] -= flux;
            rhs[f.j] += flux;
        }
    }

    // Lagged-coefficient implicit diffusion.
    let pressure: Vec<f64> = u.iter().map(|x| p.m * x.powf(p.m - 1.0)).collect();
    let diff: Vec<f64> = fs.iter().map(|f| f.coef * 0.5 * (pressure[f.i] + pressure[f.j])).collect();
    let diag: Vec<f64> = vol.iter().map(|v| v / dt).collect();
    let (mut next, iterations) = match g.mode {
        GridMode::Radial => {
            let k = vol.len();
            let mut lo = vec![0.0; k];
            let mut up = vec![0.0; k];
            let mut di = diag.clone();
            for (f, &c) in fs.iter().zip(&diff) {
                di[f.i] += c;
                di[f.j] += c;
                up[f.i] = -c;
                lo[f.j] = -c;
            }
            (thomas(&lo, &di, &up, &rhs), 1)
        }
        GridMode::FullBox => cg(&fs, &diff, &diag, &rhs)?,
    };

    let mut clipped = 0.0;
    for (i, x) in next.iter_mut().enumerate() {
        if *x < -NEGATIVITY_TOL {
            return Err(Error::Stability(format!(
                "density {:e} at cell {i} after step {}; use a smaller dt",
                *x,
                n + 1
            )));
        }
        if *x < 0.0 {
            clipped -= *x * vol[i];
            *x = 0.0;
        }
    }
    let u_next = DensityField::new(g, next)?;
    let before = integral(&state.u);
    let mass_drift = (integral(&u_next) - before).abs();
    if mass_drift > FD_MASS_TOL * before.max(1.0) {
        return Err(Error::MassDrift { drift: mass_drift, tol: FD_MASS_TOL });
    }

    let kappa = p.tau / dt;
    let v_rhs: Vec<f64> = u_next.values().iter().zip(v).map(|(u, v)| u + kappa * v).collect();
    let v_next = elliptic_solve(&ChemField::new(g, v_rhs)?, p.alpha, kappa)?;
    let report = FdStepReport {
        n: n + 1,
        t: (n + 1) as f64 * dt,
        mass_drift,
        clipped_mass: clipped,
        courant,
        solver_iterations: iterations,
    };
    Ok((State { u: u_next, v: v_next }, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdRun {
    pub params: ModelParams,
    pub config: FdConfig,
    pub stride: usize,
    pub stability: Stability,
    pub initial: Diagnostics,
    pub reports: Vec<FdStepReport>,
    pub series: Vec<Diagnostics>,
    pub snapshots: Vec<Snapshot>,
}

impl FdRun {
    /// Largest step-to-step increase of the energy; the oracle has no exact
    /// discrete energy law, so this is reported rather than enforced.
    pub fn max_energy_increase(&self) -> f64 {
        let mut prev = self.initial.energy.total;
        let mut worst = f64::NEG_INFINITY;
        for d in &self.series {
            worst = worst.max(d.energy.total - prev);
            prev = d.energy.total;
        }
        worst
    }

    pub fn max_mass_drift(&self) -> f64 {
        self.reports.iter().map(|r| r.mass_drift).fold(0.0, f64::max)
    }

    pub fn max_clipped_mass(&self) -> f64 {
        self.reports.iter().map(|r| r.clipped_mass).fold(0.0, f64::max)
    }
}

fn fd_diagnostics(state: &State, p: &ModelParams, n: usize, dt: f64) -> Result<Diagnostics> {
    let mut d = diagnostics(&state.u, &state.v, p, n)?;
    d.t = n as f64 * dt;
    Ok(d)
}

/// Runs the oracle to `cfg.t_final`, keeping a snapshot every `stride` steps
/// and at the end. The drift bound is checked on the initial state.
pub fn run_fd(initial: State, params: ModelParams, cfg: FdConfig, stride: usize) -> Result<FdRun> {
    let stability = check_stability(&initial, &params, &cfg)?;
    let stride = stride.max(1);
    let mut run = FdRun {
        params,
        config: cfg,
        stride,
        stability,
        initial: fd_diagnostics(&initial, &params, 0, cfg.dt)?,
        reports: Vec::new(),
        series: Vec::new(),
        snapshots: vec![Snapshot { n: 0, t: 0.0, u: initial.u.clone(), v: initial.v.clone() }],
    };
    let total = cfg.steps();
    let mut state = initial;
    for n in 0..total {
        let (next, report) = fd_step(&state, &params, &cfg, n)?;
        state = next;
        run.series.push(fd_diagnostics(&state, &params, report.n, cfg.dt)?);
        if report.n % stride == 0 || report.n == total {
            run.snapshots.push(Snapshot { n: report.n, t: report.t, u: state.u.clone(), v: state.v.clone() });
        }
        run.reports.push(report);
    }
    Ok(run)
}

/// Unit-mass Barenblatt profile of `u_t = Laplacian u^m` at time `t`:
/// `t^(-d b) (C - k r^2 t^(-2b))_+^(1/(m-1))` with `b = 1/(d(m-1)+2)`.
pub fn barenblatt(grid: GridSpec, m: f64, t: f64) -> Result<DensityField> {
    if !(m > 1.0 && t > 0.0) {
        return Err(crate::error::param("t", "Barenblatt profiles need m > 1 and t > 0"));
    }
    let d = grid.dim as f64;
    let b = 1.0 / (d * (m - 1.0) + 2.0);
    let k = (m - 1.0) * b / (2.0 * m);
    let q = 1.0 / (m - 1.0);
    // Unit mass: C^(q + d/2) k^(-d/2) pi^(d/2) Gamma(q+1) / Gamma(q+1+d/2) = 1.
    let shape = std::f64::consts::PI.powf(d / 2.0) * gamma(q + 1.0) / gamma(q + 1.0 + d / 2.0);
    let c = (k.powf(d / 2.0) / shape).powf(1.0 / (q + d / 2.0));
    let scale = t.powf(-d * b);
    DensityField::from_fn(grid, |r| scale * (c - k * r * r * t.powf(-2.0 * b)).max(0.0).powf(q))
}

/// Exponent `d / (d(m-1)+2)` of the Barenblatt peak decay `||u||_inf ~ t^(-a)`.
pub fn barenblatt_exponent(d: usize, m: f64) -> f64 {
    d as f64 / (d as f64 * (m - 1.0) + 2.0)
}

/// One matched output time of two trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub t: f64,
    /// `||u_jko - u_fd||_m`.
    pub lm_gap: f64,
    /// `lm_gap / ||u_fd||_m`.
    pub lm_relative: f64,
    /// `H^1` norm of `v_jko - v_fd`.
    pub h1_gap: f64,
    pub h1_relative: f64,
    pub energy_jko: f64,
    pub energy_fd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn last(&self) -> Option<&ComparisonRow> {
        self.rows.last()
    }
}

/// `(||grad w||^2 + ||w||^2)^(1/2)` with the chemical boundary treatment.
fn h1_norm(grid: &GridSpec, w: &[f64], alpha: f64) -> f64 {
    (dirichlet_form(grid, w, Boundary::chemical(grid, alpha)) + weighted_sum(grid, w, |x| x * x)).sqrt()
}

fn lm(grid: &GridSpec, w: &[f64], m: f64) -> f64 {
    weighted_sum(grid, w, |x| x.abs().powf(m)).powf(1.0 / m)
}

/// Gaps between the two solvers at every snapshot time they share.
pub fn compare_trajectories(jko: &Trajectory, fd: &FdRun) -> Result<Comparison> {
    let (a, b) = (&jko.params, &fd.params);
    if a.d != b.d || a.chi != b.chi || a.alpha != b.alpha || a.tau != b.tau {
        return Err(Error::Mismatch("model parameters differ".into()));
    }
    let (s0, f0) = (&jko.snapshots[0], &fd.snapshots[0]);
    if s0.u.grid() != f0.u.grid() {
        return Err(Error::Mismatch("grids differ".into()));
    }
    if s0.u != f0.u || s0.v != f0.v {
        return Err(Error::Mismatch("initial data differ".into()));
    }
    let g = *s0.u.grid();
    let mut rows = Vec::new();
    for s in &jko.snapshots {
        let Some(f) = fd.snapshots.iter().find(|f| (f.t - s.t).abs() <= 1e-9 * s.t.max(1.0)) else {
            continue;
        };
        let du: Vec<f64> = s.u.values().iter().zip(f.u.values()).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = s.v.values().iter().zip(f.v.values()).map(|(x, y)| x - y).collect();
        let lm_gap = lm(&g, &du, a.m);
        let h1_gap = h1_norm(&g, &dv, a.alpha);
        let rel = |x: f64, y: f64| if y > 0.0 { x / y } else { x };
        rows.push(ComparisonRow {
            t: s.t,
            lm_gap,
            lm_relative: rel(lm_gap, lm(&g, f.u.values(), a.m)),
            h1_gap,
            h1_relative: rel(h1_gap, h1_norm(&g, f.v.values(), a.alpha)),
            energy_jko: crate::energy::energy(&s.u, &s.v, a)?.total,
            energy_fd: crate::energy::energy(&f.u, &f.v, b)?.total,
        });
    }
    if rows.is_empty() {
        return Err(Error::Mismatch("no common output times".into()));
    }
    Ok(Comparison { rows })
}

#[cfg(test)]
mod tests;
