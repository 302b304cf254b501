//! Entropic proximal u-step.
//!
//! Solves `min_pi <C, pi> + eps KL(pi | a x V) + 2h G(pi^T 1)` over couplings
//! with first marginal `a`, where `G(nu) = sum V phi(nu / V) - chi v nu`.
//! Block ascent on the dual alternates a soft-min row update with a per-cell
//! scalar root solve for the column potential.

use crate::transport::sinkhorn::{eps_schedule, log_weights, Lattice};

pub(crate) struct Prox<'a> {
    pub lat: &'a Lattice,
    pub a: &'a [f64],
    pub vol: &'a [f64],
    pub drive: &'a [f64],
    pub m: f64,
    pub h: f64,
}

pub(crate) struct ProxOutcome {
    pub masses: Vec<f64>,
    pub g: Vec<f64>,
    /// Transport cost `<C, pi>` of the final plan.
    pub cost: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Root of `eps y + A exp((m-1) y) = r`, approached from above.
fn cell_root(eps: f64, big_a: f64, m: f64, r: f64) -> f64 {
    let mut y = r / eps;
    if r > 0.0 {
        y = y.min(((r / big_a).ln() / (m - 1.0)).max(0.0));
    }
    for _ in 0..200 {
        let e = big_a * ((m - 1.0) * y).exp();
        let f = eps * y + e - r;
        let step = f / (eps + (m - 1.0) * e);
        y -= step;
        if step.abs() <= 1e-15 * (1.0 + y.abs()) {
            break;
        }
    }
    y
}

impl Prox<'_> {
    /// Runs the iteration from the column potential `warm`.
    pub fn solve(&self, eps: f64, tol: f64, max_iter: usize, warm: Option<&[f64]>) -> ProxOutcome {
        let n = self.a.len();
        let la = log_weights(self.a);
        let lv: Vec<f64> = self.vol.iter().map(|v| v.ln()).collect();
        let big_a = 2.0 * self.h * self.m / (self.m - 1.0);
        let mut g = warm.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let schedule = if warm.is_some() { vec![eps] } else { eps_schedule(self.lat, eps) };
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        let mut f = vec![0.0; n];
        for (stage, &e) in schedule.iter().enumerate() {
            let last = stage + 1 == schedule.len();
            let stage_tol = if last { tol } else { 1e-3 };
            let k = self.lat.kernel(e);
            let row = |g: &[f64]| {
                let hv: Vec<f64> = lv.iter().zip(g).map(|(l, g)| l + g / e).collect();
                self.lat.softmin_with(&k, &hv)
            };
            f = row(&g);
            loop {
                let hf: Vec<f64> = la.iter().zip(&f).map(|(l, f)| l + f / e).collect();
                let log_kappa: Vec<f64> = self.lat.softmin_with(&k, &hf).iter().map(|s| -s / e).collect();
                for j in 0..n {
                    let r = e * log_kappa[j] + 2.0 * self.h * self.drive[j];
                    let y = cell_root(e, big_a, self.m, r);
                    g[j] = e * (y - log_kappa[j]);
                }
                let f_new = row(&g);
                iterations += 1;
                residual = self
                    .a
                    .iter()
                    .zip(f.iter().zip(&f_new))
                    .filter(|(x, _)| **x > 0.0)
                    .map(|(x, (p, q))| x * (1.0 - ((p - q) / e).exp()).abs())
                    .sum();
                f = f_new;
                if residual <= stage_tol || iterations >= max_iter {
                    break;
                }
            }
            if iterations >= max_iter {
                break;
            }
        }
        let e = *schedule.last().unwrap();
        let k = self.lat.kernel(e);
        let hf: Vec<f64> = la.iter().zip(&f).map(|(l, f)| l + f / e).collect();
        let lk: Vec<f64> = self.lat.softmin_with(&k, &hf).iter().map(|s| -s / e).collect();
        let masses = self.vol.iter().zip(g.iter().zip(&lk)).map(|(v, (g, l))| v * (g / e + l).exp()).collect();
        let q: Vec<f64> = lv.iter().zip(&g).map(|(l, g)| l + g / e).collect();
        let cost = self.lat.plan_cost(&k, &hf, &q);
        ProxOutcome { masses, g, cost, iterations, residual }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_root_solves_the_condition() {
        for (eps, a, r) in [(1e-4, 3e-3, 0.5), (1e-2, 1.0, -3.0), (1e-5, 6e-3, 1e-6), (0.1, 2.0, 40.0)] {
            let m = 4.0 / 3.0;
            let y = cell_root(eps, a, m, r);
            let f = eps * y + a * ((m - 1.0) * y).exp() - r;
            assert!(f.abs() < 1e-12 * (1.0 + r.abs()), "{eps} {a} {r}: {f}");
        }
    }
}
