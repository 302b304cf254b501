//! The free energy
//!
//! ```text
//! E[u, v] = int u^m / (chi (m-1)) - int u v + 1/2 ||grad v||^2 + alpha/2 ||v||^2
//! ```
//!
//! and its lower bounds.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{lp_norm_pow, weighted_sum, ChemField, DensityField, GridFunction};
use crate::kernels::apply_bessel;
use crate::ops::{dirichlet_form, Boundary};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub diffusion_term: f64,
    pub interaction_term: f64,
    pub dirichlet_term: f64,
    pub mass_term: f64,
    pub total: f64,
    pub lower_bound: f64,
    /// At `chi = 0` the density decouples: only `int u^m / (m-1)` is reported.
    pub decoupled: bool,
}

fn check_grids(u: &DensityField, v: &ChemField) -> Result<()> {
    if u.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `chi E`, the form minimized by the scheme; also defined at `chi = 0`.
pub(crate) fn scaled_energy(u: &DensityField, v: &ChemField, p: &ModelParams) -> f64 {
    let g = u.grid();
    let internal = lp_norm_pow(u, p.m) / (p.m - 1.0);
    if p.chi == 0.0 {
        return internal;
    }
    let uv: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a * b).collect();
    let q = dirichlet_form(g, v.values(), Boundary::chemical(g, p.alpha));
    let l2 = weighted_sum(g, v.values(), |x| x * x);
    internal + p.chi * (-weighted_sum(g, &uv, |x| x) + 0.5 * q + 0.5 * p.alpha * l2)
}

pub fn energy(u: &DensityField, v: &ChemField, p: &ModelParams) -> Result<EnergyBreakdown> {
    check_grids(u, v)?;
    let g = u.grid();
    let um = lp_norm_pow(u, p.m);
    if p.chi == 0.0 {
        let d = um / (p.m - 1.0);
        return Ok(EnergyBreakdown {
            diffusion_term: d,
            interaction_term: 0.0,
            dirichlet_term: 0.0,
            mass_term: 0.0,
            total: d,
            lower_bound: 0.0,
            decoupled: true,
        });
    }
    let uv: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a * b).collect();
    let diffusion_term = um / (p.chi * (p.m - 1.0));
    let interaction_term = -weighted_sum(g, &uv, |x| x);
    let dirichlet_term = 0.5 * dirichlet_form(g, v.values(), Boundary::chemical(g, p.alpha));
    let mass_term = 0.5 * p.alpha * weighted_sum(g, v.values(), |x| x * x);
    Ok(EnergyBreakdown {
        diffusion_term,
        interaction_term,
        dirichlet_term,
        mass_term,
        total: diffusion_term + interaction_term + dirichlet_term + mass_term,
        lower_bound: energy_lower_bound(u, p),
        decoupled: false,
    })
}

/// `(C_HLS / 2 chi) (chi_c - chi ||u||_1^(2/d)) ||u||_m^m`.
pub fn energy_lower_bound(u: &DensityField, p: &ModelParams) -> f64 {
    if p.chi == 0.0 {
        return 0.0;
    }
    let mass = crate::field::integral(u);
    let d = p.d as f64;
    p.c_hls / (2.0 * p.chi) * (p.chi_c - p.chi * mass.powf(2.0 / d)) * lp_norm_pow(u, p.m)
}

/// `|E[u,v] - E[u,S(u)] - 1/2 ||grad(v - S(u))||^2 - alpha/2 ||v - S(u)||^2|`.
pub fn energy_decomposition_check(u: &DensityField, v: &ChemField, p: &ModelParams) -> Result<f64> {
    if p.alpha <= 0.0 {
        return Err(Error::Unsupported("the decomposition identity needs alpha > 0".into()));
    }
    check_grids(u, v)?;
    let g = u.grid();
    let s = apply_bessel(u, p.alpha)?;
    let lhs = energy(u, v, p)?.total;
    let base = energy(u, &s, p)?.total;
    let w: Vec<f64> = v.values().iter().zip(s.values()).map(|(a, b)| a - b).collect();
    let corr = 0.5 * dirichlet_form(g, &w, Boundary::chemical(g, p.alpha))
        + 0.5 * p.alpha * weighted_sum(g, &w, |x| x * x);
    Ok((lhs - base - corr).abs())
}

/// Sharp Sobolev constant: `||v||_{2d/(d-2)} <= S_d ||grad v||_2`.
pub fn sobolev_constant(d: usize) -> f64 {
    let df = d as f64;
    (std::f64::consts::PI * df * (df - 2.0)).powf(-0.5) * (gamma(df) / gamma(df / 2.0)).powf(1.0 / df)
}

/// Constant in `||grad v||^2 + alpha ||v||^2 <= 4E + C_1 ||u||_1^(2/d) ||u||_m^m`,
/// obtained from the Young and Sobolev steps with the sharp Sobolev constant.
pub fn gradient_bound_constant(d: usize) -> f64 {
    4.0 * sobolev_constant(d).powi(2)
}

/// Left and right sides of the gradient bound.
pub fn gradient_bound(u: &DensityField, v: &ChemField, p: &ModelParams) -> Result<(f64, f64)> {
    let e = energy(u, v, p)?;
    let lhs = 2.0 * (e.dirichlet_term + e.mass_term);
    let mass = crate::field::integral(u);
    let rhs = 4.0 * e.total + gradient_bound_constant(p.d) * mass.powf(2.0 / p.d as f64) * lp_norm_pow(u, p.m);
    Ok((lhs, rhs))
}
