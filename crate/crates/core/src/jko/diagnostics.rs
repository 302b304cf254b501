//! Per-state and per-trajectory diagnostics of the scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{boltzmann_entropy, lp_norm_pow, weighted_sum, ChemField, DensityField, GridFunction};
use crate::grid::{GridMode, GridSpec};
use crate::kernels::elliptic_solve_bc;
use crate::ops::{dirichlet_form, laplacian, stride, Boundary};
use crate::params::ModelParams;

use super::Trajectory;

/// Calls `visit(weight, centre, axis, i, j)` for every interior face between
/// cells `i` and `j`, with `j` on the positive side. Radial faces report
/// `axis = None` and the face radius as centre.
pub(crate) fn for_each_face(grid: &GridSpec, mut visit: impl FnMut(f64, &[f64], Option<usize>, usize, usize)) {
    let dx = grid.spacing();
    match grid.mode {
        GridMode::Radial => {
            for k in 1..grid.points {
                visit(grid.face_area(k) * dx, &[grid.face_radius(k)], None, k - 1, k);
            }
        }
        GridMode::FullBox => {
            let c = grid.axis_centers();
            let w = dx.powi(grid.dim as i32);
            let mut ix = vec![0; grid.dim];
            let mut x = vec![0.0; grid.dim];
            for i in 0..grid.cell_count() {
                grid.unflatten(i, &mut ix);
                for (k, &j) in ix.iter().enumerate() {
                    if j + 1 < grid.points {
                        for (a, &jj) in ix.iter().enumerate() {
                            x[a] = c[jj];
                        }
                        x[k] += 0.5 * dx;
                        visit(w, &x, Some(k), i, i + stride(grid, k));
                    }
                }
            }
        }
    }
}

/// Face values of the flux `grad(u^m) - chi u grad v`.
pub(crate) fn face_flux(u: &[f64], v: &[f64], p: &ModelParams, dx: f64, i: usize, j: usize) -> f64 {
    let um = |x: f64| x.powf(p.m);
    (um(u[j]) - um(u[i])) / dx - p.chi * 0.5 * (u[i] + u[j]) * (v[j] - v[i]) / dx
}

/// `||grad(u^m) - chi u grad v||_q^q` with `q = 2m/(2m-1)`, summing face
/// components separately on box grids.
pub fn flux_norm_pow(u: &DensityField, v: &ChemField, p: &ModelParams) -> f64 {
    let g = u.grid();
    let q = 2.0 * p.m / (2.0 * p.m - 1.0);
    let dx = g.spacing();
    let mut s = 0.0;
    for_each_face(g, |w, _, _, i, j| s += w * face_flux(u.values(), v.values(), p, dx, i, j).abs().powf(q));
    s
}

/// `||grad(u^(m/2))||_2^2`.
pub fn grad_power_sq(u: &DensityField, m: f64) -> f64 {
    let w: Vec<f64> = u.values().iter().map(|x| x.powf(0.5 * m)).collect();
    dirichlet_form(u.grid(), &w, Boundary::Neumann)
}

/// `||Laplacian v - alpha v + u||_2^2`.
pub fn chemical_residual_sq(u: &[f64], v: &[f64], grid: &GridSpec, alpha: f64) -> f64 {
    let lap = laplacian(grid, v, Boundary::chemical(grid, alpha));
    let r: Vec<f64> = lap.iter().zip(v).zip(u).map(|((l, v), u)| l - alpha * v + u).collect();
    weighted_sum(grid, &r, |x| x * x)
}

/// Widths of the Gaussian test functions `exp(-|x|^2 / 2w^2)` used to probe
/// the weak Euler-Lagrange relation.
pub const TEST_WIDTHS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

/// `||xi||_{W^{2,oo}}` of the Gaussian test function of width `w`.
pub fn test_function_norm(w: f64) -> f64 {
    1.0 + (-0.5f64).exp() / w + 1.0 / (w * w)
}

/// Largest `|int xi (u - u0) + h grad xi . (grad u^m - chi u grad v)| / ||xi||`
/// over the test battery. The relation allows up to `W_2^2(u, u0) / 2`.
pub fn el_residual_u(u: &DensityField, u0: &DensityField, v: &ChemField, p: &ModelParams) -> f64 {
    let g = u.grid();
    let dx = g.spacing();
    let radii = g.radii();
    let mut worst: f64 = 0.0;
    for w in TEST_WIDTHS {
        let xi = |r2: f64| (-r2 / (2.0 * w * w)).exp();
        let diff: Vec<f64> = u
            .values()
            .iter()
            .zip(u0.values())
            .zip(&radii)
            .map(|((a, b), r)| xi(r * r) * (a - b))
            .collect();
        let mut s = weighted_sum(g, &diff, |x| x);
        let mut flux = 0.0;
        for_each_face(g, |wt, x, axis, i, j| {
            let r2: f64 = x.iter().map(|c| c * c).sum();
            let dxi = match axis {
                None => -x[0] / (w * w) * xi(r2),
                Some(k) => -x[k] / (w * w) * xi(r2),
            };
            flux += wt * dxi * face_flux(u.values(), v.values(), p, dx, i, j);
        });
        s += p.h * flux;
        worst = worst.max(s.abs() / test_function_norm(w));
    }
    worst
}

/// Scalar summaries of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub t: f64,
    pub energy: crate::energy::EnergyBreakdown,
    pub lm_norm: f64,
    pub grad_v: f64,
    pub l2_v: f64,
    pub second_moment: f64,
    pub entropy: f64,
    pub max_density: f64,
    /// `||grad(u^(m/2))||_2^2`.
    pub grad_power_sq: f64,
    /// `||Laplacian v - alpha v + u||_2^2`.
    pub chemical_residual_sq: f64,
    /// Flux norm raised to `2m/(m+1)`.
    pub flux_term: f64,
}

pub fn diagnostics(u: &DensityField, v: &ChemField, p: &ModelParams, n: usize) -> Result<Diagnostics> {
    let g = u.grid();
    let q = 2.0 * p.m / (2.0 * p.m - 1.0);
    let theta = 2.0 * p.m / (p.m + 1.0);
    Ok(Diagnostics {
        n,
        t: n as f64 * p.h,
        energy: crate::energy::energy(u, v, p)?,
        lm_norm: lp_norm_pow(u, p.m).powf(1.0 / p.m),
        grad_v: dirichlet_form(g, v.values(), Boundary::chemical(g, p.alpha)).sqrt(),
        l2_v: weighted_sum(g, v.values(), |x| x * x).sqrt(),
        second_moment: crate::field::second_moment(u),
        entropy: boltzmann_entropy(u),
        max_density: u.max_value(),
        grad_power_sq: grad_power_sq(u, p.m),
        chemical_residual_sq: chemical_residual_sq(u.values(), v.values(), g, p.alpha),
        flux_term: flux_norm_pow(u, v, p).powf(theta / q),
    })
}

/// Auxiliary heat flows started from a minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    /// `(s, D(s), R(s), H[U(s)])`, starting at `s = 0`.
    pub samples: Vec<(f64, f64, f64, f64)>,
    /// Diffusive part `(4 / m chi) ||grad U^(m/2)||^2` at each sample.
    pub diffusive: Vec<f64>,
    pub mean_dissipation: f64,
    /// `(H[u0] - H[u]) / (h chi) + tau / 2h (q(v0) - q(v))`, `q(w) = ||grad w||^2 + alpha ||w||^2`.
    pub a_h: f64,
    /// `E[u0, v0]` of the state the step started from.
    pub energy0: f64,
    /// `H[U(s)]` non-increasing in `s` and below `H[u]`.
    pub entropy_decreasing: bool,
}

impl RegularityReport {
    pub fn energy_factor(&self, m: f64) -> f64 {
        let e = self.energy0.max(0.0);
        e + e.powf(1.0 / (m - 1.0))
    }

    /// Smallest `C_2` for which the bound holds at this step.
    pub fn required_c2(&self, m: f64) -> f64 {
        let f = self.energy_factor(m);
        if f > 0.0 {
            ((self.mean_dissipation - 2.0 * self.a_h) / f).max(0.0)
        } else {
            0.0
        }
    }

    pub fn bound(&self, m: f64, c2: f64) -> f64 {
        2.0 * self.a_h + c2 * self.energy_factor(m)
    }

    pub fn holds(&self, m: f64, c2: f64) -> bool {
        self.mean_dissipation <= self.bound(m, c2)
    }
}

/// The scalars of a [`RegularityReport`] kept for every step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityRecord {
    pub n: usize,
    pub mean_dissipation: f64,
    pub a_h: f64,
    pub energy_factor: f64,
    pub entropy_decreasing: bool,
}

impl RegularityRecord {
    pub fn new(n: usize, rep: &RegularityReport, m: f64) -> Self {
        RegularityRecord {
            n,
            mean_dissipation: rep.mean_dissipation,
            a_h: rep.a_h,
            energy_factor: rep.energy_factor(m),
            entropy_decreasing: rep.entropy_decreasing,
        }
    }

    fn required_c2(&self) -> f64 {
        if self.energy_factor > 0.0 {
            ((self.mean_dissipation - 2.0 * self.a_h) / self.energy_factor).max(0.0)
        } else {
            0.0
        }
    }

    pub fn bound(&self, c2: f64) -> f64 {
        2.0 * self.a_h + c2 * self.energy_factor
    }
}

/// Steps used to calibrate `C_2`, and the safety factor applied to it.
pub const C2_CALIBRATION_STEPS: usize = 10;
pub const C2_MARGIN: f64 = 2.0;

/// `C_2` calibrated on the opening steps and then checked on all of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityCheck {
    pub c2: f64,
    pub steps: usize,
    /// Largest `D / bound` over the run.
    pub worst_ratio: f64,
    pub worst_step: usize,
    pub holds: bool,
    pub entropy_decreasing: bool,
}

pub fn check_regularity(records: &[RegularityRecord]) -> Option<RegularityCheck> {
    if records.is_empty() {
        return None;
    }
    let c2 = C2_MARGIN * records.iter().take(C2_CALIBRATION_STEPS).map(RegularityRecord::required_c2).fold(0.0, f64::max);
    let mut worst = (f64::NEG_INFINITY, 0);
    for r in records {
        let b = r.bound(c2);
        let ratio = if b > 0.0 { r.mean_dissipation / b } else { f64::INFINITY };
        if ratio > worst.0 {
            worst = (ratio, r.n);
        }
    }
    Some(RegularityCheck {
        c2,
        steps: records.len(),
        worst_ratio: worst.0,
        worst_step: worst.1,
        holds: records.iter().all(|r| r.mean_dissipation <= r.bound(c2)),
        entropy_decreasing: records.iter().all(|r| r.entropy_decreasing),
    })
}

fn quadratic_form(grid: &GridSpec, v: &[f64], alpha: f64) -> f64 {
    dirichlet_form(grid, v, Boundary::chemical(grid, alpha)) + alpha * weighted_sum(grid, v, |x| x * x)
}

/// Evolves `U_t = Laplacian U` and `V_t = Laplacian V - alpha V` from `(u, v)`
/// by `steps` backward-Euler steps up to `s_max`, and evaluates the
/// dissipation `D` and remainder `R` along the way.
pub fn regularity_diagnostic(
    u: &DensityField,
    v: &ChemField,
    u0: &DensityField,
    v0: &ChemField,
    p: &ModelParams,
    s_max: f64,
    steps: usize,
) -> Result<RegularityReport> {
    if p.chi <= 0.0 {
        return Err(Error::Unsupported("the regularity diagnostic needs chi > 0".into()));
    }
    if !(s_max > 0.0) || steps == 0 {
        return Err(crate::error::param("s_max", "must be positive with at least one step"));
    }
    let g = *u.grid();
    let ds = s_max / steps as f64;
    let bc = Boundary::chemical(&g, p.alpha);
    let mut uu = u.values().to_vec();
    let mut vv = v.values().to_vec();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut diffusive = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let uf = DensityField::new(g, uu.iter().map(|x| x.max(0.0)).collect())?;
        let dq = 4.0 / (p.m * p.chi) * grad_power_sq(&uf, p.m);
        let d = dq + chemical_residual_sq(&uu, &vv, &g, p.alpha);
        let uvs: Vec<f64> = uu.iter().zip(&vv).map(|(a, b)| a * b).collect();
        let r = weighted_sum(&g, &uu, |x| x * x) - p.alpha * weighted_sum(&g, &uvs, |x| x);
        samples.push((k as f64 * ds, d, r, boltzmann_entropy(&uf)));
        diffusive.push(dq);
        if k < steps {
            let ru: Vec<f64> = uu.iter().map(|x| x / ds).collect();
            uu = elliptic_solve_bc(&g, &ru, 1.0 / ds, Boundary::Neumann)?;
            let rv: Vec<f64> = vv.iter().map(|x| x / ds).collect();
            vv = elliptic_solve_bc(&g, &rv, 1.0 / ds + p.alpha, bc)?;
        }
    }
    // Trapezoid average over [0, s_max].
    let mean = samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1)).sum::<f64>() / steps as f64;
    let h0 = boltzmann_entropy(u0);
    let h1 = boltzmann_entropy(u);
    let a_h = (h0 - h1) / (p.h * p.chi)
        + p.tau / (2.0 * p.h) * (quadratic_form(&g, v0.values(), p.alpha) - quadratic_form(&g, v.values(), p.alpha));
    let tol = 1e-12 * (1.0 + h1.abs());
    let entropy_decreasing =
        samples.windows(2).all(|w| w[1].3 <= w[0].3 + tol) && samples.iter().skip(1).all(|s| s.3 <= h1 + tol);
    Ok(RegularityReport {
        samples,
        diffusive,
        mean_dissipation: mean,
        a_h,
        energy0: crate::energy::energy(u0, v0, p)?.total,
        entropy_decreasing,
    })
}

/// Squared `H^{-k}` surrogate `<w, (1 - Laplacian)^{-k} w>` with zero-flux faces.
pub fn negative_sobolev_sq(grid: &GridSpec, w: &[f64], k: usize) -> Result<f64> {
    let mut z = w.to_vec();
    for _ in 0..k {
        z = elliptic_solve_bc(grid, &z, 1.0, Boundary::Neumann)?;
    }
    let prod: Vec<f64> = w.iter().zip(&z).map(|(a, b)| a * b).collect();
    Ok(weighted_sum(grid, &prod, |x| x).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub s: f64,
    pub t: f64,
    pub v_diff: f64,
    /// `||v(t) - v(s)||_2 / (sqrt(t - s) + sqrt(h))`.
    pub v_ratio: f64,
    pub u_diff: f64,
    /// `||u(t) - u(s)||_{H^-(d+2)} / ((1 + t)^((m+1)/2m) (t - s + h)^((m-1)/2m))`.
    pub u_ratio: f64,
}

/// Moduli between the stored snapshots at times `s <= t`. The scheme's
/// interpolant is piecewise constant, so each time maps to the latest
/// snapshot at or before it.
pub fn time_modulus(traj: &Trajectory, s: f64, t: f64) -> Result<ModulusReport> {
    if !(s <= t) || s < 0.0 {
        return Err(crate::error::param("s", format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    let p = &traj.params;
    let pick = |x: f64| {
        let n = (x / p.h + 1e-9).floor() as usize;
        traj.snapshots.iter().rev().find(|sn| sn.n <= n).ok_or_else(|| Error::Unsupported(format!("no snapshot at t = {x}")))
    };
    let (a, b) = (pick(s)?, pick(t)?);
    let g = *a.u.grid();
    let dv: Vec<f64> = b.v.values().iter().zip(a.v.values()).map(|(x, y)| x - y).collect();
    let du: Vec<f64> = b.u.values().iter().zip(a.u.values()).map(|(x, y)| x - y).collect();
    let v_diff = weighted_sum(&g, &dv, |x| x * x).sqrt();
    let u_diff = negative_sobolev_sq(&g, &du, p.d + 2)?.sqrt();
    let m = p.m;
    let (den_v, den_u) = if a.n == b.n {
        (1.0, 1.0)
    } else {
        ((t - s).sqrt() + p.h.sqrt(), (1.0 + t).powf((m + 1.0) / (2.0 * m)) * (t - s + p.h).powf((m - 1.0) / (2.0 * m)))
    };
    Ok(ModulusReport { s, t, v_diff, v_ratio: v_diff / den_v, u_diff, u_ratio: u_diff / den_u })
}

/// Empirical `C_7` for `v` and `u`: the largest ratios over all snapshot pairs.
pub fn modulus_constants(traj: &Trajectory) -> Result<(f64, f64)> {
    let times: Vec<f64> = traj.snapshots.iter().map(|s| s.t).collect();
    let mut best = (0.0f64, 0.0f64);
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i + 1..] {
            let r = time_modulus(traj, s, t)?;
            best = (best.0.max(r.v_ratio), best.1.max(r.u_ratio));
        }
    }
    Ok(best)
}

/// `(int_delta^T ||u_a - u_b||_m^m dt)^(1/m)` over the snapshot times the two
/// runs share, by the trapezoid rule.
pub fn refinement_gap(a: &Trajectory, b: &Trajectory, delta: f64) -> Result<f64> {
    if a.snapshots.first().map(|s| *s.u.grid()) != b.snapshots.first().map(|s| *s.u.grid()) {
        return Err(Error::GridMismatch);
    }
    let m = a.params.m;
    let mut pts = Vec::new();
    for sa in &a.snapshots {
        if sa.t + 1e-12 < delta {
            continue;
        }
        if let Some(sb) = b.snapshots.iter().find(|sb| (sb.t - sa.t).abs() <= 1e-9 * (1.0 + sa.t)) {
            let diff: Vec<f64> = sa.u.values().iter().zip(sb.u.values()).map(|(x, y)| x - y).collect();
            pts.push((sa.t, weighted_sum(sa.u.grid(), &diff, |x| x.abs().powf(m))));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Unsupported("fewer than two shared snapshot times after delta".into()));
    }
    let integral: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    Ok(integral.powf(1.0 / m))
}
