//! Densities and chemical concentrations sampled on a grid.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMode, GridSpec};

/// Mass drift tolerated by operations that must conserve mass.
pub const MASS_TOL: f64 = 1e-10;

const MAGIC: &[u8; 4] = b"KFLD";
const VERSION: u32 = 1;

/// Read access shared by both field kinds.
pub trait GridFunction {
    fn grid(&self) -> &GridSpec;
    fn values(&self) -> &[f64];
}

/// A non-negative density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
}

/// A real-valued chemical concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemField {
    grid: GridSpec,
    values: Vec<f64>,
}

fn check_len(grid: &GridSpec, values: &[f64]) -> Result<()> {
    if values.len() != grid.cell_count() {
        return Err(Error::InvalidGrid(format!(
            "{} values for a grid of {} cells",
            values.len(),
            grid.cell_count()
        )));
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite { index, value });
    }
    Ok(())
}

impl DensityField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::Negative { index, value });
        }
        Ok(DensityField { grid, values })
    }

    /// Builds a field and rescales it to unit mass.
    pub fn probability(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        let mut f = Self::new(grid, values)?;
        let m = f.mass();
        if m <= 0.0 {
            return Err(Error::Singular("density has zero mass".into()));
        }
        f.values.iter_mut().for_each(|x| *x /= m);
        Ok(f)
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Result<Self> {
        let v = grid.radii().into_iter().map(f).collect();
        Self::new(grid, v)
    }

    /// Unit-mass Gaussian profile of width `sigma`, centred at `center`.
    pub fn gaussian(grid: GridSpec, sigma: f64, center: &[f64]) -> Result<Self> {
        let vals = match grid.mode {
            GridMode::Radial => grid
                .axis_centers()
                .iter()
                .map(|r| (-r * r / (2.0 * sigma * sigma)).exp())
                .collect(),
            GridMode::FullBox => {
                let c = grid.axis_centers();
                let mut ix = vec![0; grid.dim];
                (0..grid.cell_count())
                    .map(|i| {
                        grid.unflatten(i, &mut ix);
                        let r2: f64 = ix
                            .iter()
                            .enumerate()
                            .map(|(k, &j)| (c[j] - center.get(k).copied().unwrap_or(0.0)).powi(2))
                            .sum();
                        (-r2 / (2.0 * sigma * sigma)).exp()
                    })
                    .collect()
            }
        };
        Self::probability(grid, vals)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        DensityField { grid, values: vec![0.0; grid.cell_count()] }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values scaled by cell volume, i.e. the mass held in each cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.grid.volumes()).map(|(u, v)| u * v).collect()
    }

    pub fn mass(&self) -> f64 {
        integral(self)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_binary(path, &self.grid, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (g, v) = read_binary(path)?;
        Self::new(g, v)
    }
}

impl ChemField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        Ok(ChemField { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        ChemField { grid, values: vec![0.0; grid.cell_count()] }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_binary(path, &self.grid, &self.values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (g, v) = read_binary(path)?;
        Self::new(g, v)
    }
}

impl GridFunction for DensityField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

impl GridFunction for ChemField {
    fn grid(&self) -> &GridSpec {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Midpoint-rule integral.
pub fn integral(f: &impl GridFunction) -> f64 {
    weighted_sum(f.grid(), f.values(), |x| x)
}

pub(crate) fn weighted_sum(grid: &GridSpec, vals: &[f64], g: impl Fn(f64) -> f64) -> f64 {
    match grid.mode {
        GridMode::FullBox => vals.iter().map(|&x| g(x)).sum::<f64>() * grid.spacing().powi(grid.dim as i32),
        GridMode::Radial => vals.iter().zip(grid.volumes()).map(|(&x, v)| g(x) * v).sum(),
    }
}

/// `(sum |f|^p V)^(1/p)`.
pub fn lp_norm(f: &impl GridFunction, p: f64) -> f64 {
    lp_norm_pow(f, p).powf(1.0 / p)
}

/// `sum |f|^p V`.
pub fn lp_norm_pow(f: &impl GridFunction, p: f64) -> f64 {
    weighted_sum(f.grid(), f.values(), |x| x.abs().powf(p))
}

pub fn second_moment(u: &DensityField) -> f64 {
    let w = u.grid.r2_weights();
    let vol = u.grid.volumes();
    u.values.iter().zip(w).zip(vol).map(|((a, b), c)| a * b * c).sum()
}

/// `sum u ln u V` with `0 ln 0 = 0`.
pub fn boltzmann_entropy(u: &DensityField) -> f64 {
    weighted_sum(&u.grid, &u.values, |x| if x > 0.0 { x * x.ln() } else { 0.0 })
}

/// `L^2` distance between two fields on the same grid.
pub fn l2_distance(a: &impl GridFunction, b: &impl GridFunction) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    Ok(weighted_sum(a.grid(), &d, |x| x * x).sqrt())
}

fn write_binary(path: &Path, grid: &GridSpec, vals: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * vals.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match grid.mode {
        GridMode::FullBox => 0,
        GridMode::Radial => 1,
    });
    buf.push(grid.dim as u8);
    buf.extend_from_slice(&(grid.points as u32).to_le_bytes());
    buf.extend_from_slice(&grid.half_width.to_le_bytes());
    for v in vals {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_binary(path: &Path) -> Result<(GridSpec, Vec<f64>)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 22 || &buf[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not a field file", path.display())));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported field version {version}")));
    }
    let mode = match buf[8] {
        0 => GridMode::FullBox,
        1 => GridMode::Radial,
        b => return Err(Error::Format(format!("unknown grid mode tag {b}"))),
    };
    let dim = buf[9] as usize;
    let points = u32::from_le_bytes(buf[10..14].try_into().unwrap()) as usize;
    let half_width = f64::from_le_bytes(buf[14..22].try_into().unwrap());
    let grid = GridSpec::new(dim, mode, half_width, points)?;
    let body = &buf[22..];
    if body.len() != 8 * grid.cell_count() {
        return Err(Error::Format(format!(
            "field body has {} bytes, expected {}",
            body.len(),
            8 * grid.cell_count()
        )));
    }
    let vals = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((grid, vals))
}

/// Writes `index, coordinates..., value` rows.
pub fn write_csv(path: &Path, f: &impl GridFunction) -> Result<()> {
    let g = f.grid();
    let mut out = String::new();
    let c = g.axis_centers();
    match g.mode {
        GridMode::Radial => {
            out.push_str("index,r,value\n");
            for (i, v) in f.values().iter().enumerate() {
                out.push_str(&format!("{i},{:.17e},{:.17e}\n", c[i], v));
            }
        }
        GridMode::FullBox => {
            out.push_str("index");
            for k in 0..g.dim {
                out.push_str(&format!(",x{k}"));
            }
            out.push_str(",value\n");
            let mut ix = vec![0; g.dim];
            for (i, v) in f.values().iter().enumerate() {
                g.unflatten(i, &mut ix);
                out.push_str(&i.to_string());
                for &j in &ix {
                    out.push_str(&format!(",{:.17e}", c[j]));
                }
                out.push_str(&format!(",{:.17e}\n", v));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial() -> GridSpec {
        GridSpec::radial(3, 8.0, 256).unwrap()
    }

    #[test]
    fn gaussian_has_unit_mass() {
        let u = DensityField::gaussian(radial(), 0.5, &[]).unwrap();
        assert!((u.mass() - 1.0).abs() < 1e-13, "{}", u.mass());
        let b = GridSpec::full_box(3, 4.0, 32).unwrap();
        let u = DensityField::gaussian(b, 0.7, &[0.0; 3]).unwrap();
        assert!((u.mass() - 1.0).abs() < 1e-13, "{}", u.mass());
    }

    #[test]
    fn gaussian_second_moment() {
        // 3 sigma^2 for a 3D Gaussian.
        let u = DensityField::gaussian(radial(), 0.5, &[]).unwrap();
        assert!((second_moment(&u) - 0.75).abs() < 1e-3, "{}", second_moment(&u));
    }

    #[test]
    fn gaussian_entropy() {
        // -d/2 (1 + ln(2 pi sigma^2))
        let s: f64 = 0.5;
        let u = DensityField::gaussian(radial(), s, &[]).unwrap();
        let exact = -1.5 * (1.0 + (2.0 * std::f64::consts::PI * s * s).ln());
        assert!((boltzmann_entropy(&u) - exact).abs() < 1e-4);
    }

    #[test]
    fn rejects_negative_and_nan() {
        let g = GridSpec::radial(3, 1.0, 8).unwrap();
        let mut v = vec![1.0; 8];
        v[3] = -1e-3;
        assert!(matches!(DensityField::new(g, v.clone()), Err(Error::Negative { index: 3, .. })));
        v[3] = f64::NAN;
        assert!(matches!(ChemField::new(g, v), Err(Error::NonFinite { index: 3, .. })));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let u = DensityField::gaussian(radial(), 0.5, &[]).unwrap();
        let p = dir.path().join("u.kfld");
        u.save(&p).unwrap();
        assert_eq!(DensityField::load(&p).unwrap(), u);
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(DensityField::load(&p), Err(Error::Format(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridSpec::full_box(3, 1.0, 8).unwrap();
        let u = DensityField::gaussian(g, 0.3, &[0.0; 3]).unwrap();
        let p = dir.path().join("u.csv");
        write_csv(&p, &u).unwrap();
        let s = std::fs::read_to_string(p).unwrap();
        assert!(s.starts_with("index,x0,x1,x2,value\n"));
        assert_eq!(s.lines().count(), 513);
    }
}
