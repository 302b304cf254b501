//! Uniform grids: a full Cartesian box `[-L, L]^d` or a radial line `[0, L]`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Largest number of cells a single grid may hold.
pub const MAX_CELLS: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    FullBox,
    Radial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub mode: GridMode,
    pub half_width: f64,
    pub points: usize,
}

/// Surface area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

impl GridSpec {
    pub fn new(dim: usize, mode: GridMode, half_width: f64, points: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        if points < 8 {
            return Err(Error::InvalidGrid(format!("{points} points per axis, need at least 8")));
        }
        if mode == GridMode::FullBox && !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "full-box grids need a power-of-two point count, got {points}"
            )));
        }
        let g = GridSpec { dim, mode, half_width, points };
        let cells = g.try_cell_count()?;
        if cells > MAX_CELLS {
            return Err(Error::MemoryBudget { cells, budget: MAX_CELLS });
        }
        Ok(g)
    }

    pub fn radial(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(dim, GridMode::Radial, half_width, points)
    }

    pub fn full_box(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        Self::new(dim, GridMode::FullBox, half_width, points)
    }

    fn try_cell_count(&self) -> Result<usize> {
        match self.mode {
            GridMode::Radial => Ok(self.points),
            GridMode::FullBox => {
                let mut c: usize = 1;
                for _ in 0..self.dim {
                    c = c.checked_mul(self.points).ok_or(Error::MemoryBudget {
                        cells: usize::MAX,
                        budget: MAX_CELLS,
                    })?;
                }
                Ok(c)
            }
        }
    }

    pub fn cell_count(&self) -> usize {
        self.try_cell_count().expect("validated at construction")
    }

    pub fn is_radial(&self) -> bool {
        self.mode == GridMode::Radial
    }

    /// Cell width: `dr = L/N` on a radial grid, `dx = 2L/N` on a box.
    pub fn spacing(&self) -> f64 {
        match self.mode {
            GridMode::Radial => self.half_width / self.points as f64,
            GridMode::FullBox => 2.0 * self.half_width / self.points as f64,
        }
    }

    /// Critical diffusion exponent `m = 2 - 2/d`.
    pub fn exponent(&self) -> f64 {
        2.0 - 2.0 / self.dim as f64
    }

    /// Radial face position `r_i = i dr`, `i = 0..=N`.
    pub fn face_radius(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Radial area of the sphere at face `i`.
    pub fn face_area(&self, i: usize) -> f64 {
        sphere_area(self.dim) * self.face_radius(i).powi(self.dim as i32 - 1)
    }

    /// Cell volumes. Radial shells use the exact shell volume.
    pub fn volumes(&self) -> Vec<f64> {
        match self.mode {
            GridMode::FullBox => vec![self.spacing().powi(self.dim as i32); self.cell_count()],
            GridMode::Radial => {
                let s = sphere_area(self.dim) / self.dim as f64;
                let d = self.dim as i32;
                (0..self.points)
                    .map(|i| s * (self.face_radius(i + 1).powi(d) - self.face_radius(i).powi(d)))
                    .collect()
            }
        }
    }

    /// Radial cell centres or box coordinates along one axis.
    pub fn axis_centers(&self) -> Vec<f64> {
        let h = self.spacing();
        match self.mode {
            GridMode::Radial => (0..self.points).map(|i| (i as f64 + 0.5) * h).collect(),
            GridMode::FullBox => (0..self.points)
                .map(|i| -self.half_width + (i as f64 + 0.5) * h)
                .collect(),
        }
    }

    /// Multi-index of a flat box index (last axis fastest).
    pub fn unflatten(&self, mut idx: usize, out: &mut [usize]) {
        for k in (0..self.dim).rev() {
            out[k] = idx % self.points;
            idx /= self.points;
        }
    }

    /// Distance of each cell centre from the origin.
    pub fn radii(&self) -> Vec<f64> {
        match self.mode {
            GridMode::Radial => self.axis_centers(),
            GridMode::FullBox => {
                let c = self.axis_centers();
                let mut ix = vec![0; self.dim];
                (0..self.cell_count())
                    .map(|i| {
                        self.unflatten(i, &mut ix);
                        ix.iter().map(|&j| c[j] * c[j]).sum::<f64>().sqrt()
                    })
                    .collect()
            }
        }
    }

    /// Cell-averaged `|x|^2`, exact on radial shells.
    pub fn r2_weights(&self) -> Vec<f64> {
        match self.mode {
            GridMode::FullBox => self.radii().iter().map(|r| r * r).collect(),
            GridMode::Radial => {
                let d = self.dim as f64;
                (0..self.points)
                    .map(|i| {
                        let (a, b) = (self.face_radius(i), self.face_radius(i + 1));
                        let num = b.powf(d + 2.0) - a.powf(d + 2.0);
                        let den = b.powf(d) - a.powf(d);
                        d / (d + 2.0) * num / den
                    })
                    .collect()
            }
        }
    }

    /// Smallest cell volume.
    pub fn min_volume(&self) -> f64 {
        self.volumes().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Volume of the computational domain.
    pub fn domain_volume(&self) -> f64 {
        match self.mode {
            GridMode::FullBox => (2.0 * self.half_width).powi(self.dim as i32),
            GridMode::Radial => sphere_area(self.dim) / self.dim as f64 * self.half_width.powi(self.dim as i32),
        }
    }

    /// Diameter of the domain.
    pub fn diameter(&self) -> f64 {
        match self.mode {
            GridMode::FullBox => 2.0 * self.half_width * (self.dim as f64).sqrt(),
            GridMode::Radial => 2.0 * self.half_width,
        }
    }

    /// Same domain with a different resolution.
    pub fn with_points(&self, points: usize) -> Result<Self> {
        Self::new(self.dim, self.mode, self.half_width, points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shell_volumes_sum_to_ball() {
        let g = GridSpec::radial(3, 2.0, 64).unwrap();
        let v: f64 = g.volumes().iter().sum();
        let ball = 4.0 / 3.0 * std::f64::consts::PI * 8.0;
        assert!((v - ball).abs() < 1e-12 * ball);
    }

    #[test]
    fn sphere_area_matches_known_values() {
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((sphere_area(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::full_box(3, 1.0, 48).is_err());
        assert!(GridSpec::full_box(0, 1.0, 64).is_err());
        assert!(GridSpec::radial(3, -1.0, 64).is_err());
        assert!(matches!(
            GridSpec::full_box(3, 1.0, 128),
            Err(Error::MemoryBudget { .. })
        ));
    }

    #[test]
    fn unflatten_is_row_major() {
        let g = GridSpec::full_box(3, 1.0, 8).unwrap();
        let mut ix = [0; 3];
        g.unflatten(8 * 8 * 2 + 8 * 3 + 5, &mut ix);
        assert_eq!(ix, [2, 3, 5]);
    }

    #[test]
    fn shell_r2_lies_inside_shell() {
        let g = GridSpec::radial(3, 1.0, 16).unwrap();
        for (i, w) in g.r2_weights().iter().enumerate() {
            let (a, b) = (g.face_radius(i), g.face_radius(i + 1));
            assert!(*w >= a * a && *w <= b * b);
        }
    }
}
