//! Log-domain entropic transport with squared Euclidean cost.
//!
//! The cost is separable across axes, so the soft-min over all cells is a
//! sequence of one-dimensional log-sum-exp passes.

use rayon::prelude::*;

use crate::grid::{GridMode, GridSpec};

/// Tensor layout of the point cloud carrying the measures: the product of
/// `dims` copies of `coords` (radial grids use the radius line).
#[derive(Debug, Clone)]
pub(crate) struct Lattice {
    coords: Vec<f64>,
    dims: usize,
}

impl Lattice {
    pub fn new(grid: &GridSpec) -> Self {
        let dims = match grid.mode {
            GridMode::Radial => 1,
            GridMode::FullBox => grid.dim,
        };
        Lattice { coords: grid.axis_centers(), dims }
    }

    /// Largest pairwise cost.
    pub fn max_cost(&self) -> f64 {
        let n = self.coords.len();
        let span = self.coords[n - 1] - self.coords[0];
        self.dims as f64 * span * span
    }

    /// One-axis log-kernel table `-(x - y)^2 / eps`.
    pub fn kernel(&self, eps: f64) -> Kernel {
        let n = self.coords.len();
        let log_k = (0..n * n)
            .map(|k| {
                let d = self.coords[k / n] - self.coords[k % n];
                -d * d / eps
            })
            .collect();
        Kernel { log_k, eps }
    }

    /// `out(x) = -eps log sum_y exp(h(y) - |x - y|^2 / eps)`.
    #[cfg(test)]
    pub fn softmin(&self, h: &[f64], eps: f64) -> Vec<f64> {
        self.softmin_with(&self.kernel(eps), h)
    }

    pub fn softmin_with(&self, k: &Kernel, h: &[f64]) -> Vec<f64> {
        let tables = vec![k.log_k.as_slice(); self.dims];
        let mut out = self.log_sum(&tables, h);
        out.iter_mut().for_each(|z| *z *= -k.eps);
        out
    }

    /// `sum_xy exp(p(x) + q(y) - |x - y|^2 / eps) |x - y|^2`: the transport
    /// cost of the plan with log-potentials `p`, `q`.
    pub fn plan_cost(&self, k: &Kernel, p: &[f64], q: &[f64]) -> f64 {
        let weighted: Vec<f64> =
            k.log_k.iter().map(|&l| if l < 0.0 { (-l * k.eps).ln() + l } else { f64::NEG_INFINITY }).collect();
        (0..self.dims)
            .map(|axis| {
                let mut tables = vec![k.log_k.as_slice(); self.dims];
                tables[axis] = &weighted;
                let inner = self.log_sum(&tables, q);
                p.iter().zip(&inner).map(|(a, b)| (a + b).exp()).filter(|x| x.is_finite()).sum::<f64>()
            })
            .sum()
    }

    /// `out(x) = log sum_y exp(h(y) + sum_k t_k(x_k, y_k))`, one axis at a time.
    fn log_sum(&self, tables: &[&[f64]], h: &[f64]) -> Vec<f64> {
        let n = self.coords.len();
        let mut cur = h.to_vec();
        for (axis, table) in tables.iter().enumerate() {
            let stride = n.pow((self.dims - 1 - axis) as u32);
            let block = n * stride;
            let mut next = vec![0.0; cur.len()];
            next.par_chunks_mut(block).zip(cur.par_chunks(block)).for_each(|(out, inp)| {
                let mut line = vec![0.0; n];
                for inner in 0..stride {
                    for x in 0..n {
                        let row = &table[x * n..(x + 1) * n];
                        let mut hi = f64::NEG_INFINITY;
                        for y in 0..n {
                            line[y] = inp[y * stride + inner] + row[y];
                            hi = hi.max(line[y]);
                        }
                        out[x * stride + inner] = if hi == f64::NEG_INFINITY {
                            f64::NEG_INFINITY
                        } else {
                            hi + line.iter().map(|&z| (z - hi).exp()).sum::<f64>().ln()
                        };
                    }
                }
            });
            cur = next;
        }
        cur
    }
}

pub(crate) struct Kernel {
    log_k: Vec<f64>,
    eps: f64,
}

pub(crate) fn log_weights(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect()
}

fn shifted(logw: &[f64], pot: &[f64], eps: f64) -> Vec<f64> {
    logw.iter().zip(pot).map(|(l, p)| l + p / eps).collect()
}

/// Outcome of one balanced entropic problem.
#[derive(Debug, Clone)]
pub(crate) struct Dual {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

/// Geometric schedule from the cost scale down to `eps`.
pub(crate) fn eps_schedule(lat: &Lattice, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut e = lat.max_cost().max(eps);
    while e > eps {
        out.push(e);
        e *= 0.5;
    }
    out.push(eps);
    out
}

fn relax(old: &[f64], new: &[f64], w: f64) -> Vec<f64> {
    old.iter().zip(new).map(|(o, n)| if n.is_finite() && o.is_finite() { (1.0 - w) * o + w * n } else { *n }).collect()
}

/// `sum_i w_i |1 - exp((p_i - q_i) / eps)|`: the `L^1` marginal error of the
/// coupling built from potential `p` when `q` is the exact best response.
fn marginal_error(w: &[f64], p: &[f64], q: &[f64], eps: f64) -> f64 {
    w.iter()
        .zip(p.iter().zip(q))
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, (a, b))| x * (1.0 - ((a - b) / eps).exp()).abs())
        .sum()
}

fn dot(w: &[f64], p: &[f64]) -> f64 {
    w.iter().zip(p).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum()
}

/// Entropic transport between weight vectors `a` and `b` (both of unit mass),
/// with `eps`-scaling and over-relaxation `omega` on the final stage.
///
/// The returned `f` is the exact best response to `g`, so the first marginal
/// is matched to rounding and `residual` measures the second.
pub(crate) fn solve(lat: &Lattice, a: &[f64], b: &[f64], eps: f64, tol: f64, max_iter: usize, omega: f64) -> Dual {
    let (la, lb) = (log_weights(a), log_weights(b));
    let n = a.len();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut history = Vec::new();
    let schedule = eps_schedule(lat, eps);
    for (stage, &e) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let (stage_tol, mut w) = if last { (tol, omega) } else { (1e-3, 1.0) };
        let k = lat.kernel(e);
        // Last checked pair; over-relaxation is undone whenever it raises the residual.
        let mut saved: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        loop {
            let f_star = lat.softmin_with(&k, &shifted(&lb, &g, e));
            if w > 1.0 && (iterations % 10 == 0 || iterations + 1 >= max_iter) {
                let g_star = lat.softmin_with(&k, &shifted(&la, &f_star, e));
                residual = marginal_error(b, &g, &g_star, e);
                match &saved {
                    Some((sf, sg, r)) if residual > *r => {
                        w = 1.0 + 0.5 * (w - 1.0);
                        if w < 1.05 {
                            w = 1.0;
                        }
                        f = sf.clone();
                        g = sg.clone();
                        iterations += 1;
                        continue;
                    }
                    _ => saved = Some((f.clone(), g.clone(), residual)),
                }
                if last {
                    history.push(residual);
                }
                if residual <= stage_tol || iterations + 1 >= max_iter {
                    f = f_star;
                    iterations += 1;
                    break;
                }
            }
            f = relax(&f, &f_star, w);
            let g_new = lat.softmin_with(&k, &shifted(&la, &f, e));
            iterations += 1;
            if w == 1.0 {
                residual = marginal_error(b, &g, &g_new, e);
                if last {
                    history.push(residual);
                }
                if residual <= stage_tol || iterations >= max_iter {
                    f = f_star;
                    break;
                }
            }
            g = relax(&g, &g_new, w);
        }
        if iterations >= max_iter {
            break;
        }
    }
    let value = dot(a, &f) + dot(b, &g);
    Dual { f, g, value, iterations, residual, history }
}

/// `OT_eps(a, a)` by the averaged fixed point `f <- (f + T(f)) / 2`.
pub(crate) fn solve_symmetric(lat: &Lattice, a: &[f64], eps: f64, tol: f64, max_iter: usize) -> Dual {
    let la = log_weights(a);
    let mut f = vec![0.0; a.len()];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut history = Vec::new();
    let schedule = eps_schedule(lat, eps);
    for (stage, &e) in schedule.iter().enumerate() {
        let last = stage + 1 == schedule.len();
        let stage_tol = if last { tol } else { 1e-3 };
        let k = lat.kernel(e);
        loop {
            let t = lat.softmin_with(&k, &shifted(&la, &f, e));
            residual = marginal_error(a, &f, &t, e);
            iterations += 1;
            if last {
                history.push(residual);
            }
            if residual <= stage_tol || iterations >= max_iter {
                break;
            }
            f = f.iter().zip(&t).map(|(x, y)| if y.is_finite() && x.is_finite() { 0.5 * (x + y) } else { *y }).collect();
        }
        if iterations >= max_iter {
            break;
        }
    }
    let value = 2.0 * dot(a, &f);
    Dual { g: f.clone(), f, value, iterations, residual, history }
}
