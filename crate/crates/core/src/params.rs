//! Model parameters of the rescaled system and the map from physical constants.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Chemotactic sensitivity after rescaling. Zero decouples the density.
    pub chi: f64,
    pub alpha: f64,
    pub tau: f64,
    pub d: usize,
    pub m: f64,
    /// Time step of the minimizing-movement scheme.
    pub h: f64,
    pub c_hls: f64,
    pub chi_c: f64,
}

/// `chi_c = 2 / ((m - 1) c_hls)`.
pub fn critical_chi(m: f64, c_hls: f64) -> f64 {
    2.0 / ((m - 1.0) * c_hls)
}

impl ModelParams {
    pub fn new(d: usize, chi: f64, alpha: f64, tau: f64, h: f64, c_hls: f64) -> Result<Self> {
        if d < 3 {
            return Err(param("d", format!("dimension {d} < 3")));
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(chi) {
            return Err(param("chi", format!("{chi} must be a non-negative number")));
        }
        if !finite_nonneg(alpha) {
            return Err(param("alpha", format!("{alpha} must be a non-negative number")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(param("tau", format!("{tau} must be positive")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(param("h", format!("{h} must be positive")));
        }
        if !(c_hls.is_finite() && c_hls > 0.0) {
            return Err(param("c_hls", format!("{c_hls} must be positive")));
        }
        let m = 2.0 - 2.0 / d as f64;
        Ok(ModelParams { chi, alpha, tau, d, m, h, c_hls, chi_c: critical_chi(m, c_hls) })
    }

    /// Runs at or above the critical sensitivity are outside the guaranteed regime.
    pub fn exploratory(&self) -> bool {
        self.chi >= self.chi_c
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_chi(mut self, chi: f64) -> Self {
        self.chi = chi;
        self
    }
}

/// Result of removing the physical constants, with the scale factors relating
/// `rho(t, x) = R u(T t, X x)` and `c(t, x) = G v(T t, X x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescaling {
    pub chi: f64,
    pub alpha: f64,
    pub tau: f64,
    pub d: usize,
    pub r: f64,
    pub x: f64,
    pub t: f64,
    pub gamma: f64,
}

/// Physical constants of the unscaled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mass: f64,
    pub chi0: f64,
    pub d0: f64,
    pub beta0: f64,
    pub alpha0: f64,
    pub tau: f64,
}

pub fn rescale_physical(p: &PhysicalParams, d: usize) -> Result<Rescaling> {
    if d < 3 {
        return Err(param("d", format!("dimension {d} < 3 has no rescaling exponent")));
    }
    let pos = |x: f64| x.is_finite() && x > 0.0;
    if !pos(p.mass) {
        return Err(param("mass", "must be positive"));
    }
    if !pos(p.chi0) {
        return Err(param("chi0", "must be positive"));
    }
    if !pos(p.d0) {
        return Err(param("d0", "must be positive"));
    }
    if !pos(p.beta0) {
        return Err(param("beta0", "must be positive"));
    }
    if !(p.alpha0.is_finite() && p.alpha0 >= 0.0) {
        return Err(param("alpha0", "must be non-negative"));
    }
    if !(p.tau.is_finite() && p.tau >= 0.0) {
        return Err(param("tau", "must be non-negative"));
    }
    let df = d as f64;
    let m23 = p.mass.powf(2.0 / df);
    let dd = p.d0.powf(df / (df - 2.0));
    Ok(Rescaling {
        chi: p.chi0 / p.d0 * p.beta0 * m23,
        alpha: p.alpha0 / dd * m23,
        tau: p.tau,
        d,
        r: dd,
        // Unit rescaled mass forces X^d = R / mass.
        x: p.d0.powf(1.0 / (df - 2.0)) * p.mass.powf(-1.0 / df),
        t: dd / m23,
        gamma: p.beta0 * m23,
    })
}

impl Rescaling {
    pub fn into_params(self, h: f64, c_hls: f64) -> Result<ModelParams> {
        ModelParams::new(self.d, self.chi, self.alpha, self.tau, h, c_hls)
    }

    /// Physical density at physical radius `r` from the rescaled density.
    pub fn density_to_physical(&self, u_at: impl Fn(f64) -> f64, r: f64) -> f64 {
        self.r * u_at(self.x * r)
    }

    /// Physical time corresponding to rescaled time `s`.
    pub fn time_to_physical(&self, s: f64) -> f64 {
        s / self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phys(mass: f64, chi0: f64) -> PhysicalParams {
        PhysicalParams { mass, chi0, d0: 1.0, beta0: 1.0, alpha0: 0.0, tau: 1.0 }
    }

    #[test]
    fn unit_constants_give_unit_chi() {
        let r = rescale_physical(&phys(1.0, 1.0), 3).unwrap();
        assert_eq!(r.chi, 1.0);
        assert_eq!(r.alpha, 0.0);
    }

    #[test]
    fn mass_eight_in_three_d() {
        let r = rescale_physical(&phys(8.0, 2.0), 3).unwrap();
        assert!((r.chi - 8.0).abs() < 1e-12);
    }

    #[test]
    fn rescaled_density_has_unit_mass() {
        // Physical mass = R X^{-d} times the rescaled mass.
        let p = PhysicalParams { mass: 5.0, chi0: 1.3, d0: 2.1, beta0: 0.7, alpha0: 0.4, tau: 1.0 };
        for d in 3..6 {
            let r = rescale_physical(&p, d).unwrap();
            assert!((r.r * r.x.powi(-(d as i32)) - p.mass).abs() < 1e-12 * p.mass);
            // Time derivative and Laplacian balance in the chemical equation.
            assert!((r.t - p.d0 * r.x * r.x).abs() < 1e-12 * r.t);
        }
    }

    #[test]
    fn rejects_two_dimensions_and_bad_values() {
        assert!(rescale_physical(&phys(1.0, 1.0), 2).is_err());
        assert!(rescale_physical(&phys(-1.0, 1.0), 3).is_err());
        assert!(ModelParams::new(3, -0.1, 0.0, 1.0, 1e-3, 1.0).is_err());
    }

    #[test]
    fn exponent_and_critical_value() {
        let p = ModelParams::new(3, 1.0, 0.0, 1.0, 1e-3, 0.5).unwrap();
        assert!((p.m - 4.0 / 3.0).abs() < 1e-15);
        assert!((p.chi_c - 2.0 / (p.m - 1.0) / 0.5).abs() < 1e-12);
        assert!(p.m > 1.0 && p.m < 2.0);
    }
}
