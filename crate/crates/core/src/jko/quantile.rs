//! Radial u-step by Newton descent on the cumulative masses.
//!
//! The unknowns are the interior face masses `M_1..M_{N-1}`, so mass is
//! conserved by construction and positivity is a linear constraint on
//! consecutive differences. The transport term is exact.

use crate::grid::GridSpec;
use crate::ops::thomas;
use crate::transport::{distance_derivatives, quantile_distance_sq, Quantile};

/// Smallest density at which the curvature `m u^(m-2)` is evaluated.
const CURVATURE_FLOOR: f64 = 1e-40;

/// Cells lighter than this are below the resolution of the cumulative
/// masses; they are clipped at zero instead of limiting the step.
const RESOLVED_MASS: f64 = 1e-15;

/// Faces with less outer mass than this sit within a few ulps of level one,
/// where the transport term is rounding noise; they are left out of the
/// stopping test.
const RESOLVED_TAIL: f64 = 1e-12;

pub(crate) struct Problem<'a> {
    pub grid: &'a GridSpec,
    pub base: Quantile,
    pub vol: Vec<f64>,
    /// `chi v`, per cell.
    pub drive: &'a [f64],
    pub m: f64,
    pub h: f64,
}

pub(crate) struct Outcome {
    pub masses: Vec<f64>,
    /// Mass removed by clipping unresolved cells at zero.
    pub clipped: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Problem<'_> {
    fn internal(&self, mu: &[f64]) -> f64 {
        let m = self.m;
        mu.iter()
            .zip(&self.vol)
            .zip(self.drive)
            .map(|((&x, &v), &c)| v * (x / v).powf(m) / (m - 1.0) - c * x)
            .sum()
    }

    pub fn value(&self, mu: &[f64]) -> f64 {
        quantile_distance_sq(&self.quantile(mu), &self.base) / (2.0 * self.h) + self.internal(mu)
    }

    fn quantile(&self, mu: &[f64]) -> Quantile {
        Quantile::from_masses(self.grid, mu)
    }

    /// Newton direction with unresolved cells heading below zero held fixed,
    /// the directional derivative, and its part on resolved faces.
    fn direction(&self, mu: &[f64]) -> (Vec<f64>, f64, f64) {
        let mut pinned = vec![false; mu.len()];
        let mut out = self.direction_pinned(mu, &pinned);
        let mut any = false;
        for (i, (x, d)) in mu.iter().zip(&out.0).enumerate() {
            if *x < RESOLVED_MASS && x + d < 0.0 {
                pinned[i] = true;
                any = true;
            }
        }
        if any {
            out = self.direction_pinned(mu, &pinned);
        }
        out
    }

    /// Newton direction in the cell masses and the directional derivative.
    /// A pinned cell ties its two faces together, so its mass is unchanged.
    fn direction_pinned(&self, mu: &[f64], pinned: &[bool]) -> (Vec<f64>, f64, f64) {
        let n = mu.len();
        let m = self.m;
        let (gw, dw, ow) = distance_derivatives(&self.quantile(mu), &self.base);
        let s = 0.5 / self.h;
        let dens: Vec<f64> = mu.iter().zip(&self.vol).map(|(x, v)| x / v).collect();
        let g: Vec<f64> = dens.iter().zip(self.drive).map(|(&u, &c)| m / (m - 1.0) * u.powf(m - 1.0) - c).collect();
        let c: Vec<f64> = dens
            .iter()
            .zip(&self.vol)
            .zip(pinned)
            .map(|((&u, &v), &p)| if p { 0.0 } else { m * u.max(CURVATURE_FLOOR).powf(m - 2.0) / v })
            .collect();

        // Face groups; the groups holding face 0 or face n are fixed.
        let mut label = vec![0usize; n + 1];
        for f in 1..=n {
            label[f] = label[f - 1] + usize::from(!pinned[f - 1]);
        }
        let last = label[n];
        let free = |l: usize| l > 0 && l < last;
        let k = last.saturating_sub(1);
        let mut rhs = vec![0.0; k];
        let mut di = vec![0.0; k];
        let mut off = vec![0.0; k];
        for f in 0..=n {
            let l = label[f];
            if free(l) {
                let left = if f > 0 { g[f - 1] } else { 0.0 };
                let right = if f < n { g[f] } else { 0.0 };
                rhs[l - 1] -= s * gw[f] + left - right;
                di[l - 1] += s * dw[f] + if f > 0 { c[f - 1] } else { 0.0 } + if f < n { c[f] } else { 0.0 };
            }
            if f < n {
                let o = s * ow[f] - c[f];
                let (l1, l2) = (l, label[f + 1]);
                if l1 == l2 && free(l1) {
                    di[l1 - 1] += 2.0 * o;
                } else if free(l1) && free(l2) {
                    off[l1 - 1] += o;
                }
            }
        }
        if k == 0 {
            return (vec![0.0; n], 0.0, 0.0);
        }
        let lo: Vec<f64> = std::iter::once(0.0).chain(off[..k - 1].iter().copied()).collect();
        let z = thomas(&lo, &di, &off, &rhs);
        let slope = -rhs.iter().zip(&z).map(|(r, d)| r * d).sum::<f64>();
        let mut outer = vec![0.0; n + 1];
        for i in (0..n).rev() {
            outer[i] = outer[i + 1] + mu[i];
        }
        let mut resolved = vec![false; k];
        for f in 0..=n {
            if free(label[f]) && outer[f] > RESOLVED_TAIL {
                resolved[label[f] - 1] = true;
            }
        }
        let resolved_slope = -(0..k).filter(|&j| resolved[j]).map(|j| rhs[j] * z[j]).sum::<f64>();
        let dm = |f: usize| if free(label[f]) { z[label[f] - 1] } else { 0.0 };
        let dmu = (0..n).map(|i| dm(i + 1) - dm(i)).collect();
        (dmu, slope, resolved_slope)
    }

    /// Damped Newton from `start` until the decrement falls below `tol`.
    pub fn solve(&self, start: &[f64], tol: f64, max_iter: usize) -> Outcome {
        let mut mu = start.to_vec();
        let mut phi = self.value(&mu);
        let mut iterations = 0;
        let mut converged = false;
        let mut clipped = 0.0;
        while iterations < max_iter {
            iterations += 1;
            let (dmu, slope, resolved) = self.direction(&mu);
            if !(slope < 0.0) || -resolved.min(0.0) <= tol * phi.abs().max(1.0) {
                converged = slope.is_finite();
                break;
            }
            // Fraction to the boundary of the positive orthant.
            let mut t: f64 = 1.0;
            for (x, d) in mu.iter().zip(&dmu) {
                if *d < 0.0 && *x >= RESOLVED_MASS {
                    t = t.min(-0.995 * x / d);
                }
            }
            let mut accepted = false;
            while t > 1e-14 {
                let raw: Vec<f64> = mu.iter().zip(&dmu).map(|(x, d)| x + t * d).collect();
                let cut: f64 = raw.iter().filter(|x| **x < 0.0).map(|x| -x).sum();
                let trial: Vec<f64> = raw.into_iter().map(|x| x.max(0.0)).collect();
                let p = self.value(&trial);
                if p < phi && p <= phi + 1e-4 * t * slope {
                    mu = trial;
                    clipped += cut;
                    phi = p;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                // No representable decrease left along the Newton direction.
                converged = -resolved.min(0.0) <= 1e3 * tol * phi.abs().max(1.0);
                break;
            }
        }
        Outcome { masses: mu, clipped, iterations, converged }
    }
}
