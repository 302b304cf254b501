//! Poisson and Bessel kernels, the convolution `S_alpha = Y_alpha * u`, and the
//! shared elliptic solver for `(kappa + alpha - Laplacian) w = rhs`.
//!
//! On a box the convolution uses the Green function of the discrete operator,
//! so `(alpha - Laplacian_h) S_alpha(u) = u` holds to quadrature accuracy
//! away from the truncation. Radial grids use the exact Green function of the
//! tridiagonal radial operator with a decaying-exterior Robin condition.

pub mod lattice;
pub mod transform;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::field::{weighted_sum, ChemField, DensityField, GridFunction};
use crate::grid::{GridMode, GridSpec};
use crate::ops::{laplacian, thomas, Boundary, RadialStencil};

/// Environment variable naming a directory for cached lattice tables.
pub const CACHE_ENV: &str = "KSFLOW_KERNEL_CACHE";

/// `c_d = Gamma(d/2) / (2 (d-2) pi^(d/2))`.
pub fn poisson_constant(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::InvalidParam { name: "d", reason: format!("Poisson constant needs d >= 3, got {d}") });
    }
    let h = d as f64 / 2.0;
    Ok(gamma(h) / (2.0 * (d as f64 - 2.0) * std::f64::consts::PI.powf(h)))
}

/// `Y_alpha(x) = int_0^inf (4 pi s)^(-d/2) exp(-|x|^2/(4s) - alpha s) ds`.
pub fn bessel_kernel_value(alpha: f64, r: f64, d: usize) -> Result<f64> {
    if r == 0.0 {
        return Err(Error::Singular("Bessel kernel evaluated at the origin".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParam { name: "alpha", reason: format!("{alpha}") });
    }
    if alpha == 0.0 && d < 3 {
        return Err(Error::Unsupported(format!("Newtonian kernel in dimension {d}")));
    }
    let h = d as f64 / 2.0;
    let r2 = r * r;
    let f = |t: f64| {
        let s = t.exp();
        s * (4.0 * std::f64::consts::PI * s).powf(-h) * (-r2 / (4.0 * s) - alpha * s).exp()
    };
    let t_lo = (r2 / 2800.0).ln();
    let s_hi = if alpha > 0.0 {
        (750.0 / alpha).min(r2 * 1e30)
    } else {
        r2 * 1e13f64.powf(2.0 / (d as f64 - 2.0))
    };
    let t_hi = s_hi.ln().max(t_lo + 1.0);
    let tail = if alpha == 0.0 {
        (4.0 * std::f64::consts::PI).powf(-h) * s_hi.powf(1.0 - h) / (h - 1.0)
    } else {
        0.0
    };
    // Trapezoid in log-time converges geometrically for this analytic integrand.
    let mut n = 64usize;
    let mut prev = f64::NAN;
    loop {
        let dt = (t_hi - t_lo) / n as f64;
        let mut s = 0.5 * (f(t_lo) + f(t_hi));
        for i in 1..n {
            s += f(t_lo + i as f64 * dt);
        }
        let val = s * dt + tail;
        if (val - prev).abs() <= 1e-12 * val.abs() || n > 1 << 20 {
            return Ok(val);
        }
        prev = val;
        n *= 2;
    }
}

type TableKey = (usize, usize, u64);

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn disk_path(key: TableKey) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    Some(PathBuf::from(dir).join(format!("lattice_d{}_n{}_a{:016x}.kfld", key.0, key.1, key.2)))
}

fn read_table(path: &PathBuf, key: TableKey) -> Option<Vec<f64>> {
    let buf = std::fs::read(path).ok()?;
    let len = (key.1 + 1).pow(key.0 as u32);
    if buf.len() != 22 + 8 * len || &buf[..4] != b"KFLD" {
        return None;
    }
    let d = buf[9] as usize;
    let n = u32::from_le_bytes(buf[10..14].try_into().ok()?) as usize;
    let a = u64::from_le_bytes(buf[14..22].try_into().ok()?);
    if (d, n, a) != key {
        return None;
    }
    Some(buf[22..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_table(path: &PathBuf, key: TableKey, vals: &[f64]) {
    let mut buf = Vec::with_capacity(22 + 8 * vals.len());
    buf.extend_from_slice(b"KFLD");
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.push(0);
    buf.push(key.0 as u8);
    buf.extend_from_slice(&(key.1 as u32).to_le_bytes());
    buf.extend_from_slice(&key.2.to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    // The cache is an optimization; failures to write are ignored.
    let _ = std::fs::write(path, buf);
}

/// Lattice Green table in lattice units, memoized in memory and optionally on disk.
fn cached_lattice_table(d: usize, nmax: usize, alpha_lattice: f64) -> Arc<Vec<f64>> {
    let key = (d, nmax, alpha_lattice.to_bits());
    if let Some(t) = table_cache().lock().unwrap().get(&key) {
        return t.clone();
    }
    let path = disk_path(key);
    let table = path
        .as_ref()
        .and_then(|p| read_table(p, key))
        .unwrap_or_else(|| {
            let t = lattice::lattice_green_table(d, nmax, alpha_lattice);
            if let Some(p) = &path {
                write_table(p, key, &t);
            }
            t
        });
    let t = Arc::new(table);
    table_cache().lock().unwrap().insert(key, t.clone());
    t
}

enum Table {
    Box { spectrum: Vec<Complex64>, lattice: Arc<Vec<f64>>, scale: f64 },
    Radial { phi: Vec<f64>, psi: Vec<f64>, wronskian: f64 },
}

/// A convolution kernel `Y_alpha` tabulated for one grid.
pub struct KernelSpec {
    pub alpha: f64,
    pub grid: GridSpec,
    table: Table,
}

/// Padded index of a signed cell offset.
fn wrap(o: i64, p: usize) -> usize {
    o.rem_euclid(p as i64) as usize
}

impl KernelSpec {
    pub fn new(grid: GridSpec, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParam { name: "alpha", reason: format!("{alpha} must be non-negative") });
        }
        let table = match grid.mode {
            GridMode::FullBox => {
                if alpha == 0.0 && grid.dim < 3 {
                    return Err(Error::Unsupported(format!("Newtonian kernel in dimension {}", grid.dim)));
                }
                let (n, d) = (grid.points, grid.dim);
                let p = 2 * n;
                let cells = p.pow(d as u32);
                if cells > crate::grid::MAX_CELLS * (1 << d) {
                    return Err(Error::MemoryBudget { cells, budget: crate::grid::MAX_CELLS * (1 << d) });
                }
                let dx = grid.spacing();
                let lat = cached_lattice_table(d, n, alpha * dx * dx);
                let scale = dx.powi(2 - d as i32);
                let side = n + 1;
                let mut buf = vec![Complex64::new(0.0, 0.0); cells];
                let mut ix = vec![0usize; d];
                for (i, b) in buf.iter_mut().enumerate() {
                    let mut r = i;
                    for k in (0..d).rev() {
                        ix[k] = r % p;
                        r /= p;
                    }
                    let mut li = 0;
                    for &j in &ix {
                        let o = if j < n { j } else { p - j };
                        li = li * side + o;
                    }
                    *b = Complex64::new(lat[li] * scale, 0.0);
                }
                transform::fft_nd(&mut buf, p, d, false);
                Table::Box { spectrum: buf, lattice: lat, scale }
            }
            GridMode::Radial => {
                let st = RadialStencil::new(&grid, Boundary::FreeSpace { alpha });
                let (_, di, _) = st.matrix(alpha);
                let n = grid.points;
                let mut phi = vec![0.0; n];
                phi[0] = 1.0;
                phi[1] = di[0] / st.c[1];
                for i in 1..n - 1 {
                    phi[i + 1] = (di[i] * phi[i] - st.c[i] * phi[i - 1]) / st.c[i + 1];
                }
                let mut psi = vec![0.0; n];
                psi[n - 1] = 1.0;
                psi[n - 2] = di[n - 1] / st.c[n - 1];
                for i in (1..n - 1).rev() {
                    psi[i - 1] = (di[i] * psi[i] - st.c[i + 1] * psi[i + 1]) / st.c[i];
                }
                let wronskian = st.c[1] * (phi[1] * psi[0] - phi[0] * psi[1]);
                if !(wronskian.is_finite() && wronskian > 0.0) {
                    return Err(Error::Singular("radial operator has no bounded Green function".into()));
                }
                Table::Radial { phi, psi, wronskian }
            }
        };
        Ok(KernelSpec { alpha, grid, table })
    }

    /// Kernel value at a signed lattice offset (box grids only).
    pub fn offset_value(&self, offset: &[i64]) -> Option<f64> {
        match &self.table {
            Table::Box { lattice, scale, .. } => {
                let side = self.grid.points + 1;
                let mut li = 0;
                for &o in offset {
                    let a = o.unsigned_abs() as usize;
                    if a > self.grid.points {
                        return None;
                    }
                    li = li * side + a;
                }
                Some(lattice[li] * scale)
            }
            Table::Radial { .. } => None,
        }
    }

    fn box_convolve(&self, u: &[f64]) -> Vec<Complex64> {
        let Table::Box { spectrum, .. } = &self.table else { unreachable!() };
        let (n, d) = (self.grid.points, self.grid.dim);
        let p = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); p.pow(d as u32)];
        let mut ix = vec![0usize; d];
        for (i, &x) in u.iter().enumerate() {
            self.grid.unflatten(i, &mut ix);
            let pi = ix.iter().fold(0, |acc, &j| acc * p + j);
            buf[pi] = Complex64::new(x, 0.0);
        }
        transform::fft_nd(&mut buf, p, d, false);
        buf.iter_mut().zip(spectrum).for_each(|(a, b)| *a *= b);
        transform::fft_nd(&mut buf, p, d, true);
        let norm = self.grid.spacing().powi(d as i32) / buf.len() as f64;
        buf.iter_mut().for_each(|x| *x *= norm);
        buf
    }

    /// `S_alpha(u)` on the grid cells.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        match &self.table {
            Table::Box { .. } => {
                let (n, d) = (self.grid.points, self.grid.dim);
                let p = 2 * n;
                let buf = self.box_convolve(u);
                let mut ix = vec![0usize; d];
                (0..u.len())
                    .map(|i| {
                        self.grid.unflatten(i, &mut ix);
                        buf[ix.iter().fold(0, |acc, &j| acc * p + j)].re
                    })
                    .collect()
            }
            Table::Radial { phi, psi, wronskian } => {
                let vol = self.grid.volumes();
                let b: Vec<f64> = u.iter().zip(&vol).map(|(x, v)| x * v).collect();
                let n = b.len();
                let mut right = vec![0.0; n + 1];
                for j in (0..n).rev() {
                    right[j] = right[j + 1] + psi[j] * b[j];
                }
                let mut left = 0.0;
                (0..n)
                    .map(|i| {
                        left += phi[i] * b[i];
                        (psi[i] * left + phi[i] * right[i + 1]) / wronskian
                    })
                    .collect()
            }
        }
    }

    /// `S_alpha(u)` on the box extended by one ghost layer per side,
    /// as an `(N+2)^d` row-major cube.
    pub fn apply_with_halo(&self, u: &[f64]) -> Option<Vec<f64>> {
        if !matches!(self.table, Table::Box { .. }) {
            return None;
        }
        let (n, d) = (self.grid.points, self.grid.dim);
        let p = 2 * n;
        let e = n + 2;
        let buf = self.box_convolve(u);
        let mut out = vec![0.0; e.pow(d as u32)];
        for (i, o) in out.iter_mut().enumerate() {
            let mut r = i;
            let mut pi = 0;
            let mut digits = vec![0usize; d];
            for k in (0..d).rev() {
                digits[k] = r % e;
                r /= e;
            }
            for &j in &digits {
                pi = pi * p + wrap(j as i64 - 1, p);
            }
            *o = buf[pi].re;
        }
        Some(out)
    }
}

/// `S_alpha(u) = Y_alpha * u`.
pub fn apply_bessel(u: &DensityField, alpha: f64) -> Result<ChemField> {
    let k = KernelSpec::new(*u.grid(), alpha)?;
    ChemField::new(*u.grid(), k.apply(u.values()))
}

/// Relative residual `||(alpha - Laplacian) S_alpha(u) - u||_2 / ||u||_2` of the
/// discrete free-space operator.
pub fn bessel_residual(u: &DensityField, alpha: f64) -> Result<f64> {
    let g = *u.grid();
    let k = KernelSpec::new(g, alpha)?;
    let res: Vec<f64> = match g.mode {
        GridMode::Radial => {
            let s = k.apply(u.values());
            let lap = laplacian(&g, &s, Boundary::FreeSpace { alpha });
            s.iter().zip(&lap).zip(u.values()).map(|((s, l), u)| alpha * s - l - u).collect()
        }
        GridMode::FullBox => {
            let ext = k.apply_with_halo(u.values()).expect("box kernel");
            let (n, d) = (g.points, g.dim);
            let e = n + 2;
            let h2 = g.spacing().powi(2);
            let mut ix = vec![0usize; d];
            (0..g.cell_count())
                .map(|i| {
                    g.unflatten(i, &mut ix);
                    let c = ix.iter().fold(0, |acc, &j| acc * e + j + 1);
                    let mut lap = 0.0;
                    for k in 0..d {
                        let st = e.pow((d - 1 - k) as u32);
                        lap += ext[c + st] + ext[c - st] - 2.0 * ext[c];
                    }
                    alpha * ext[c] - lap / h2 - u.values()[i]
                })
                .collect()
        }
    };
    let num = weighted_sum(&g, &res, |x| x * x).sqrt();
    let den = weighted_sum(&g, u.values(), |x| x * x).sqrt();
    Ok(num / den)
}

/// Solves `(shift - Laplacian) w = rhs` under the given boundary treatment.
pub fn elliptic_solve_bc(grid: &GridSpec, rhs: &[f64], shift: f64, bc: Boundary) -> Result<Vec<f64>> {
    if rhs.len() != grid.cell_count() {
        return Err(Error::GridMismatch);
    }
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParam { name: "kappa", reason: format!("shift {shift} must be non-negative") });
    }
    match grid.mode {
        GridMode::Radial => {
            let st = RadialStencil::new(grid, bc);
            if shift == 0.0 && st.outer == 0.0 {
                check_zero_mean(grid, rhs)?;
                // Integrate the cumulative flux outward, then fix the constant.
                let mut w = vec![0.0; rhs.len()];
                let mut flux = 0.0;
                for i in 0..rhs.len() - 1 {
                    flux += rhs[i] * st.vol[i];
                    w[i + 1] = w[i] - flux / st.c[i + 1];
                }
                let mean = weighted_sum(grid, &w, |x| x) / grid.volumes().iter().sum::<f64>();
                w.iter_mut().for_each(|x| *x -= mean);
                return Ok(w);
            }
            let (lo, di, up) = st.matrix(shift);
            let b: Vec<f64> = rhs.iter().zip(&st.vol).map(|(r, v)| r * v).collect();
            Ok(thomas(&lo, &di, &up, &b))
        }
        GridMode::FullBox => {
            if shift == 0.0 {
                check_zero_mean(grid, rhs)?;
            }
            let (n, d) = (grid.points, grid.dim);
            let mut buf = rhs.to_vec();
            transform::dct2_nd(&mut buf, n, d);
            let h2 = grid.spacing().powi(2);
            let lam: Vec<f64> = (0..n)
                .map(|k| (2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos()) / h2)
                .collect();
            let mut ix = vec![0usize; d];
            for (i, b) in buf.iter_mut().enumerate() {
                grid.unflatten(i, &mut ix);
                let l = shift + ix.iter().map(|&k| lam[k]).sum::<f64>();
                *b = if l == 0.0 { 0.0 } else { *b / l };
            }
            transform::dct3_nd(&mut buf, n, d);
            let s = (2.0 / n as f64).powi(d as i32);
            buf.iter_mut().for_each(|x| *x *= s);
            Ok(buf)
        }
    }
}

fn check_zero_mean(grid: &GridSpec, rhs: &[f64]) -> Result<()> {
    let mean = weighted_sum(grid, rhs, |x| x);
    let scale = weighted_sum(grid, rhs, |x| x.abs()).max(f64::MIN_POSITIVE);
    if mean.abs() > 1e-12 * scale {
        return Err(Error::Solvability(format!(
            "singular operator needs a zero-mean right-hand side, integral is {mean:e}"
        )));
    }
    Ok(())
}

/// Solves `(kappa + alpha - Laplacian) w = rhs` with the chemical-field boundary treatment.
pub fn elliptic_solve(rhs: &impl GridFunction, alpha: f64, kappa: f64) -> Result<ChemField> {
    if !(alpha >= 0.0 && kappa >= 0.0) {
        return Err(Error::InvalidParam { name: "alpha", reason: "alpha and kappa must be non-negative".into() });
    }
    let g = *rhs.grid();
    let w = elliptic_solve_bc(&g, rhs.values(), kappa + alpha, Boundary::chemical(&g, alpha))?;
    ChemField::new(g, w)
}

/// Relative residual of `(shift - Laplacian) w = rhs`.
pub fn elliptic_residual(grid: &GridSpec, w: &[f64], rhs: &[f64], shift: f64, bc: Boundary) -> f64 {
    let lap = laplacian(grid, w, bc);
    let r: Vec<f64> = w.iter().zip(&lap).zip(rhs).map(|((w, l), b)| shift * w - l - b).collect();
    let den = weighted_sum(grid, rhs, |x| x * x).sqrt().max(f64::MIN_POSITIVE);
    weighted_sum(grid, &r, |x| x * x).sqrt() / den
}

#[cfg(test)]
mod tests;
