//! Finite-volume stencils shared by the solvers.
//!
//! Every operator here is the one generated by the discrete Dirichlet form
//! `sum_faces area * (jump / h)^2 * h`, so summation by parts holds exactly.

use crate::grid::{GridMode, GridSpec};

/// Outer boundary treatment of a second-order operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Zero flux.
    Neumann,
    /// Radial grids: Robin condition matching the decaying exterior solution
    /// of `(alpha - Laplacian) w = 0`. Box grids fall back to zero flux.
    FreeSpace { alpha: f64 },
}

impl Boundary {
    /// Boundary used for chemical fields on a given grid.
    pub fn chemical(grid: &GridSpec, alpha: f64) -> Self {
        match grid.mode {
            GridMode::Radial => Boundary::FreeSpace { alpha },
            GridMode::FullBox => Boundary::Neumann,
        }
    }
}

/// `K_{nu+1}(z) / K_nu(z)` from `K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt`.
pub fn bessel_k_ratio(nu: f64, z: f64) -> f64 {
    let dt = 0.01;
    let (mut num, mut den) = (0.0, 0.0);
    let mut t: f64 = 0.0;
    loop {
        let e = (-z * (t.cosh() - 1.0)).exp();
        let w = if t == 0.0 { 0.5 } else { 1.0 };
        num += w * e * ((nu + 1.0) * t).cosh();
        den += w * e * (nu * t).cosh();
        if z * (t.cosh() - 1.0) > 60.0 + (nu + 1.0) * t {
            break;
        }
        t += dt;
    }
    num / den
}

/// Logarithmic decay rate `-w'/w` at radius `l` of the exterior solution.
pub fn robin_coefficient(d: usize, alpha: f64, l: f64) -> f64 {
    let nu = d as f64 / 2.0 - 1.0;
    if alpha == 0.0 {
        return 2.0 * nu / l;
    }
    let s = alpha.sqrt();
    if d == 3 {
        return s + 1.0 / l;
    }
    s * bessel_k_ratio(nu, s * l)
}

/// Radial flux coefficients `c_i = A_i / dr` on faces `0..=N` and the
/// effective coefficient of the outer boundary term.
pub(crate) struct RadialStencil {
    pub c: Vec<f64>,
    pub outer: f64,
    pub vol: Vec<f64>,
}

impl RadialStencil {
    pub fn new(grid: &GridSpec, bc: Boundary) -> Self {
        let n = grid.points;
        let dr = grid.spacing();
        let mut c: Vec<f64> = (0..=n).map(|i| grid.face_area(i) / dr).collect();
        c[0] = 0.0;
        let outer = match bc {
            Boundary::Neumann => 0.0,
            Boundary::FreeSpace { alpha } => {
                let g = robin_coefficient(grid.dim, alpha, grid.half_width);
                grid.face_area(n) * g / (1.0 + 0.5 * g * dr)
            }
        };
        c[n] = 0.0;
        RadialStencil { c, outer, vol: grid.volumes() }
    }

    /// `sum_i (A w)_i` contribution: returns `-V_i (Laplacian w)_i`.
    pub fn apply_weak(&self, w: &[f64]) -> Vec<f64> {
        let n = w.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            if i > 0 {
                s += self.c[i] * (w[i] - w[i - 1]);
            }
            if i + 1 < n {
                s += self.c[i + 1] * (w[i] - w[i + 1]);
            }
            out[i] = s;
        }
        out[n - 1] += self.outer * w[n - 1];
        out
    }

    pub fn form(&self, w: &[f64]) -> f64 {
        let n = w.len();
        let mut s = 0.0;
        for i in 1..n {
            s += self.c[i] * (w[i] - w[i - 1]).powi(2);
        }
        s + self.outer * w[n - 1] * w[n - 1]
    }

    /// Tridiagonal matrix of `shift * V + A`.
    pub fn matrix(&self, shift: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.vol.len();
        let mut lo = vec![0.0; n];
        let mut di = vec![0.0; n];
        let mut up = vec![0.0; n];
        for i in 0..n {
            di[i] = shift * self.vol[i];
            if i > 0 {
                di[i] += self.c[i];
                lo[i] = -self.c[i];
            }
            if i + 1 < n {
                di[i] += self.c[i + 1];
                up[i] = -self.c[i + 1];
            }
        }
        di[n - 1] += self.outer;
        (lo, di, up)
    }
}

/// Solves a tridiagonal system; `lo[0]` and `up[n-1]` are ignored.
pub fn thomas(lo: &[f64], di: &[f64], up: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = di.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = up[0] / di[0];
    dp[0] = rhs[0] / di[0];
    for i in 1..n {
        let den = di[i] - lo[i] * cp[i - 1];
        cp[i] = if i + 1 < n { up[i] / den } else { 0.0 };
        dp[i] = (rhs[i] - lo[i] * dp[i - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Stride of axis `k` in a row-major box array.
pub(crate) fn stride(grid: &GridSpec, k: usize) -> usize {
    grid.points.pow((grid.dim - 1 - k) as u32)
}

/// Box Laplacian with zero-flux faces.
fn box_laplacian(grid: &GridSpec, w: &[f64]) -> Vec<f64> {
    let n = grid.points;
    let h2 = grid.spacing().powi(2);
    let mut out = vec![0.0; w.len()];
    let mut ix = vec![0; grid.dim];
    for (i, o) in out.iter_mut().enumerate() {
        grid.unflatten(i, &mut ix);
        let mut s = 0.0;
        for (k, &j) in ix.iter().enumerate() {
            let st = stride(grid, k);
            if j > 0 {
                s += w[i - st] - w[i];
            }
            if j + 1 < n {
                s += w[i + st] - w[i];
            }
        }
        *o = s / h2;
    }
    out
}

/// Discrete Laplacian under the given boundary treatment.
pub fn laplacian(grid: &GridSpec, w: &[f64], bc: Boundary) -> Vec<f64> {
    match grid.mode {
        GridMode::FullBox => box_laplacian(grid, w),
        GridMode::Radial => {
            let st = RadialStencil::new(grid, bc);
            st.apply_weak(w)
                .iter()
                .zip(&st.vol)
                .map(|(a, v)| -a / v)
                .collect()
        }
    }
}

/// Discrete `||grad w||_2^2`, including the exterior tail on free-space radial grids.
pub fn dirichlet_form(grid: &GridSpec, w: &[f64], bc: Boundary) -> f64 {
    match grid.mode {
        GridMode::Radial => RadialStencil::new(grid, bc).form(w),
        GridMode::FullBox => {
            let n = grid.points;
            let hd = grid.spacing().powi(grid.dim as i32 - 2);
            let mut ix = vec![0; grid.dim];
            let mut s = 0.0;
            for i in 0..w.len() {
                grid.unflatten(i, &mut ix);
                for (k, &j) in ix.iter().enumerate() {
                    if j + 1 < n {
                        s += (w[i + stride(grid, k)] - w[i]).powi(2);
                    }
                }
            }
            s * hd
        }
    }
}

/// Face gradients of a radial field: entry `i` is `(w_i - w_{i-1}) / dr` at face `i`, `i = 1..N-1`.
pub fn radial_face_gradient(grid: &GridSpec, w: &[f64]) -> Vec<f64> {
    let dr = grid.spacing();
    (1..w.len()).map(|i| (w[i] - w[i - 1]) / dr).collect()
}
