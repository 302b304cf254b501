//! Quadratic Wasserstein distances between discrete densities.
//!
//! [`w2_radial`] is exact for radial grids and serves as the reference;
//! [`w2_sinkhorn`] is the debiased entropic divergence and works on any grid.

mod radial;
pub(crate) mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DensityField, GridFunction, MASS_TOL};
use crate::grid::GridSpec;

pub use radial::{quantile_distance_sq, Quantile};
pub(crate) use radial::distance_derivatives;
pub(crate) use sinkhorn::Lattice;

/// Description of the coupling behind a distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Plan {
    /// Monotone rearrangement: radius of each measure at shared mass levels.
    MonotoneMap { levels: Vec<f64>, source: Vec<f64>, target: Vec<f64> },
    /// Entropic dual potentials of the cross term.
    Potentials { f: Vec<f64>, g: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub w2_squared: f64,
    /// Zero for the exact method.
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `L^1` marginal error of the returned coupling.
    pub marginal_residual: f64,
    pub plan: Plan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Over-relaxation factor of the final stage; `1` is plain Sinkhorn,
    /// whose marginal residuals decay monotonically.
    pub relaxation: f64,
}

impl SinkhornConfig {
    /// `epsilon = 0.05 dx^2`.
    pub fn for_grid(grid: &GridSpec) -> Self {
        SinkhornConfig { epsilon: default_epsilon(grid), tol: 1e-8, max_iter: 20_000, relaxation: 1.9 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(crate::error::param("epsilon", "must be positive"));
        }
        if !(self.relaxation >= 1.0 && self.relaxation < 2.0) {
            return Err(crate::error::param("relaxation", "must lie in [1, 2)"));
        }
        Ok(())
    }

    fn run(&self, lat: &Lattice, a: &[f64], b: &[f64]) -> sinkhorn::Dual {
        sinkhorn::solve(lat, a, b, self.epsilon, self.tol, self.max_iter, self.relaxation)
    }

    fn run_self(&self, lat: &Lattice, a: &[f64]) -> sinkhorn::Dual {
        sinkhorn::solve_symmetric(lat, a, self.epsilon, self.tol, self.max_iter)
    }
}

pub fn default_epsilon(grid: &GridSpec) -> f64 {
    0.05 * grid.spacing().powi(2)
}

/// Slack allowed between the debiased divergence and the exact distance.
pub fn entropic_bias_bound(epsilon: f64, d: usize) -> f64 {
    epsilon * d as f64 * (1.0 + epsilon.ln().abs())
}

fn check_pair(u1: &DensityField, u2: &DensityField) -> Result<()> {
    if u1.grid() != u2.grid() {
        return Err(Error::GridMismatch);
    }
    for u in [u1, u2] {
        let drift = (u.mass() - 1.0).abs();
        if drift > MASS_TOL {
            return Err(Error::MassDrift { drift, tol: MASS_TOL });
        }
    }
    Ok(())
}

/// Exact `W_2^2` between two radial densities by monotone rearrangement.
pub fn w2_radial(u1: &DensityField, u2: &DensityField) -> Result<TransportResult> {
    if !u1.grid().is_radial() {
        return Err(Error::Unsupported("w2_radial needs radial grids".into()));
    }
    check_pair(u1, u2)?;
    let g = u1.grid();
    let q1 = Quantile::from_masses(g, &u1.cell_masses());
    let q2 = Quantile::from_masses(g, &u2.cell_masses());
    let w2_squared = quantile_distance_sq(&q1, &q2);
    let mut levels: Vec<f64> = q1.levels.iter().chain(&q2.levels).copied().collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let source = levels.iter().map(|&s| q1.eval(s)).collect();
    let target = levels.iter().map(|&s| q2.eval(s)).collect();
    Ok(TransportResult {
        w2_squared,
        epsilon: 0.0,
        iterations: 0,
        converged: true,
        marginal_residual: 0.0,
        plan: Plan::MonotoneMap { levels, source, target },
    })
}

/// Debiased entropic divergence
/// `OT_eps(u1, u2) - OT_eps(u1, u1) / 2 - OT_eps(u2, u2) / 2`.
///
/// Radial grids transport along the radius with cost `(r - r')^2`.
pub fn w2_sinkhorn(u1: &DensityField, u2: &DensityField, cfg: &SinkhornConfig) -> Result<TransportResult> {
    cfg.validate()?;
    check_pair(u1, u2)?;
    let lat = Lattice::new(u1.grid());
    let a = u1.cell_masses();
    let b = u2.cell_masses();
    let swap = a.iter().zip(&b).find(|(x, y)| x != y).map_or(false, |(x, y)| x > y);
    let (x, y) = if swap { (&b, &a) } else { (&a, &b) };
    let sa = cfg.run_self(&lat, x);
    let (cross, sb) = if a == b { (sa.clone(), sa.clone()) } else { (cfg.run(&lat, x, y), cfg.run_self(&lat, y)) };
    let value = cross.value - 0.5 * (sa.value + sb.value);
    let residual = cross.residual.max(sa.residual).max(sb.residual);
    let (f, g) = if swap { (cross.g, cross.f) } else { (cross.f, cross.g) };
    Ok(TransportResult {
        w2_squared: value.max(0.0),
        epsilon: cfg.epsilon,
        iterations: cross.iterations + sa.iterations + sb.iterations,
        converged: residual <= cfg.tol,
        marginal_residual: residual,
        plan: Plan::Potentials { f, g },
    })
}

/// Marginal residual history of the final stage of an entropic solve.
pub fn sinkhorn_residual_history(u1: &DensityField, u2: &DensityField, cfg: &SinkhornConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_pair(u1, u2)?;
    let lat = Lattice::new(u1.grid());
    Ok(cfg.run(&lat, &u1.cell_masses(), &u2.cell_masses()).history)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub w12: f64,
    pub w23: f64,
    pub w13: f64,
    /// `W(1,2) + W(2,3) - W(1,3)`.
    pub slack: f64,
    /// Only the exact method is a metric; `None` for entropic divergences.
    pub holds: Option<bool>,
}

pub enum Method<'a> {
    Exact,
    Entropic(&'a SinkhornConfig),
}

pub const TRIANGLE_TOL: f64 = 1e-12;

/// Triangle inequality for the distances `W_2 = sqrt(W_2^2)`.
pub fn w2_triangle_check(u1: &DensityField, u2: &DensityField, u3: &DensityField, method: Method) -> Result<TriangleReport> {
    let dist = |a: &DensityField, b: &DensityField| -> Result<f64> {
        Ok(match method {
            Method::Exact => w2_radial(a, b)?.w2_squared.sqrt(),
            Method::Entropic(cfg) => w2_sinkhorn(a, b, cfg)?.w2_squared.sqrt(),
        })
    };
    let (w12, w23, w13) = (dist(u1, u2)?, dist(u2, u3)?, dist(u1, u3)?);
    let slack = w12 + w23 - w13;
    let holds = match method {
        Method::Exact => Some(slack >= -TRIANGLE_TOL),
        Method::Entropic(_) => None,
    };
    Ok(TriangleReport { w12, w23, w13, slack, holds })
}

#[cfg(test)]
mod tests;
