//! Scenario files: a TOML document with dotted sections.
//!
//! ```toml
//! name = "reference"
//! seed = 7
//!
//! [model]
//! d = 3
//! chi_fraction = 0.5   # chi / chi_c; or give `chi` directly
//! alpha = 1.0
//! tau = 1.0
//!
//! [grid]
//! mode = "radial"      # or "box"
//! half_width = 8.0
//! points = 256
//!
//! [time]
//! h = 1e-3
//! t_final = 0.5
//!
//! [initial]
//! family = "gaussian"
//! sigma = 0.5
//! ```
//!
//! Every parsed scenario has a SHA-256 hash of its canonical JSON form, which
//! is stamped on all the artifacts produced from it.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fd::FdConfig;
use crate::field::{ChemField, DensityField, GridFunction};
use crate::grid::{GridMode, GridSpec};
use crate::hls::shipped_c_hls;
use crate::jko::{JkoConfig, State, UMethod};
use crate::kernels::apply_bessel;
use crate::params::{critical_chi, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub grid: GridSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: ToleranceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub chi: Option<f64>,
    pub chi_fraction: Option<f64>,
    pub alpha: f64,
    pub tau: f64,
    /// Overrides the shipped HLS constant.
    pub c_hls: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Radial,
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mode: GridKind,
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub h: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Shell,
    TwoBump,
    FromFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChemStart {
    /// `v_0 = S_alpha(u_0)`.
    #[default]
    Bessel,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub family: Family,
    pub sigma: Option<f64>,
    pub center: Option<Vec<f64>>,
    pub radius: Option<f64>,
    pub width: Option<f64>,
    pub separation: Option<f64>,
    /// Field file written by [`DensityField::save`], relative to the scenario.
    pub path: Option<PathBuf>,
    /// Relative amplitude of seeded multiplicative noise.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub v0: ChemStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    Jko,
    Fd,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub kind: SolverKind,
    /// u-step method; defaults to quantile on radial grids.
    pub method: Option<UMethod>,
    /// Oracle time step; defaults to `h`.
    pub fd_dt: Option<f64>,
    #[serde(default = "yes")]
    pub fd_limiter: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { kind: SolverKind::Jko, method: None, fd_dt: None, fd_limiter: true }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Steps between diagnostics rows.
    #[serde(default = "one")]
    pub stride: usize,
    /// Time between field snapshots; defaults to a tenth of the run.
    pub snapshot_interval: Option<f64>,
    /// Steps between checkpoints; zero disables them.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Heat-flow regularity diagnostic on every step.
    #[serde(default = "yes")]
    pub regularity: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { stride: 1, snapshot_interval: None, checkpoint_every: 0, regularity: true }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub energy: Option<f64>,
    pub sweep: Option<f64>,
    pub newton: Option<f64>,
    pub sinkhorn: Option<f64>,
    /// Largest relative L^m gap between the two solvers at the final time.
    pub oracle_gap: Option<f64>,
}

/// Default for [`ToleranceSection::oracle_gap`].
pub const ORACLE_GAP: f64 = 0.05;

/// Everything a run needs, derived from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub jko: JkoConfig,
    pub fd: FdConfig,
    pub initial: State,
    /// Mass of the discretized profile before it was scaled to one.
    pub raw_mass: f64,
    pub t_final: f64,
    pub stride: usize,
    pub snapshot_stride: usize,
    pub oracle_gap: f64,
}

fn config_error(text: Option<&str>, section: &str, key: &str, reason: impl std::fmt::Display) -> Error {
    let line = text.and_then(|t| find_line(t, section, key));
    match line {
        Some(l) => Error::Config(format!("line {l}: {section}.{key} {reason}")),
        None if section.is_empty() => Error::Config(format!("{key} {reason}")),
        None => Error::Config(format!("{section}.{key} {reason}")),
    }
}

/// 1-based line of `key` inside `[section]`.
fn find_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let lhs = line.split('=').next().unwrap_or("").trim();
        if lhs.is_empty() || line.starts_with('#') {
            continue;
        }
        let dotted = format!("{section}.{key}");
        if (current == section && lhs == key) || (current.is_empty() && lhs == dotted) {
            return Some(i + 1);
        }
    }
    None
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        s.check(Some(text))?;
        Ok(s)
    }

    /// Reads a scenario and makes a relative `initial.path` relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let Some(p) = &s.initial.path {
            if p.is_relative() {
                s.initial.path = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(s)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Field checks that do not need the derived parameters.
    pub fn check(&self, text: Option<&str>) -> Result<()> {
        let err = |s: &str, k: &str, r: String| Err(config_error(text, s, k, r));
        let m = &self.model;
        if m.d < 3 {
            return err("model", "d", format!("must be at least 3, got {}", m.d));
        }
        match (m.chi, m.chi_fraction) {
            (Some(_), Some(_)) => return err("model", "chi", "and model.chi_fraction are mutually exclusive".into()),
            (None, None) => return err("model", "chi", "is missing (or give model.chi_fraction)".into()),
            (Some(x), None) if !(x >= 0.0 && x.is_finite()) => {
                return err("model", "chi", format!("must be non-negative, got {x}"))
            }
            (None, Some(x)) if !(x >= 0.0 && x.is_finite()) => {
                return err("model", "chi_fraction", format!("must be non-negative, got {x}"))
            }
            _ => {}
        }
        if !(m.alpha >= 0.0 && m.alpha.is_finite()) {
            return err("model", "alpha", format!("must be non-negative, got {}", m.alpha));
        }
        if !(m.tau > 0.0 && m.tau.is_finite()) {
            return err("model", "tau", format!("must be positive, got {}", m.tau));
        }
        if let Some(c) = m.c_hls {
            if !(c > 0.0 && c.is_finite()) {
                return err("model", "c_hls", format!("must be positive, got {c}"));
            }
        }
        if !(self.grid.half_width > 0.0 && self.grid.half_width.is_finite()) {
            return err("grid", "half_width", format!("must be positive, got {}", self.grid.half_width));
        }
        if self.grid.points < 8 {
            return err("grid", "points", format!("must be at least 8, got {}", self.grid.points));
        }
        let t = &self.time;
        if !(t.h > 0.0 && t.h.is_finite()) {
            return err("time", "h", format!("must be positive, got {}", t.h));
        }
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return err("time", "t_final", format!("must be non-negative, got {}", t.t_final));
        }
        let i = &self.initial;
        let positive = |k: &str, x: Option<f64>| match x {
            None => err("initial", k, format!("is required for family {:?}", i.family)),
            Some(v) if !(v > 0.0 && v.is_finite()) => err("initial", k, format!("must be positive, got {v}")),
            _ => Ok(()),
        };
        match i.family {
            Family::Gaussian => positive("sigma", i.sigma)?,
            Family::Shell => {
                positive("radius", i.radius)?;
                positive("width", i.width)?;
            }
            Family::TwoBump => {
                positive("separation", i.separation)?;
                if self.grid.mode == GridKind::Radial {
                    return err("initial", "family", "two-bump needs grid.mode = \"box\"".into());
                }
            }
            Family::FromFile => {
                if i.path.is_none() {
                    return err("initial", "path", "is required for family FromFile".into());
                }
            }
        }
        if let Some(c) = &i.center {
            if self.grid.mode == GridKind::Radial && c.iter().any(|x| *x != 0.0) {
                return err("initial", "center", "must be the origin on a radial grid".into());
            }
            if c.len() > m.d {
                return err("initial", "center", format!("has {} coordinates for d = {}", c.len(), m.d));
            }
        }
        if !(i.noise >= 0.0 && i.noise < 1.0) {
            return err("initial", "noise", format!("must lie in [0, 1), got {}", i.noise));
        }
        if self.solver.method == Some(UMethod::Quantile) && self.grid.mode == GridKind::Box {
            return err("solver", "method", "quantile needs a radial grid".into());
        }
        if let Some(dt) = self.solver.fd_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return err("solver", "fd_dt", format!("must be positive, got {dt}"));
            }
        }
        if self.output.stride == 0 {
            return err("output", "stride", "must be at least 1".into());
        }
        if let Some(s) = self.output.snapshot_interval {
            if !(s > 0.0 && s.is_finite()) {
                return err("output", "snapshot_interval", format!("must be positive, got {s}"));
            }
            let k = s / self.time.h;
            if (k - k.round()).abs() > 1e-6 * k.max(1.0) || k.round() < 1.0 {
                return err("output", "snapshot_interval", format!("must be a whole number of steps of h = {}, got {s}", self.time.h));
            }
        }
        let tol = &self.tolerances;
        for (k, v) in [
            ("energy", tol.energy),
            ("sweep", tol.sweep),
            ("newton", tol.newton),
            ("sinkhorn", tol.sinkhorn),
            ("oracle_gap", tol.oracle_gap),
        ] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return err("tolerances", k, format!("must be positive, got {x}"));
                }
            }
        }
        Ok(())
    }

    pub fn c_hls(&self) -> Result<f64> {
        self.model.c_hls.or_else(|| shipped_c_hls(self.model.d)).ok_or_else(|| {
            Error::Config(format!(
                "model.c_hls is missing and there is no shipped estimate for d = {}; run `ksflow chi-c --d {}`",
                self.model.d, self.model.d
            ))
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let mode = match self.grid.mode {
            GridKind::Radial => GridMode::Radial,
            GridKind::Box => GridMode::FullBox,
        };
        GridSpec::new(self.model.d, mode, self.grid.half_width, self.grid.points)
            .map_err(|e| Error::Config(format!("grid: {e}")))
    }

    pub fn params(&self) -> Result<ModelParams> {
        let c_hls = self.c_hls()?;
        let m = 2.0 - 2.0 / self.model.d as f64;
        let chi = match (self.model.chi, self.model.chi_fraction) {
            (Some(x), _) => x,
            (None, Some(f)) => f * critical_chi(m, c_hls),
            (None, None) => unreachable!("checked at parse time"),
        };
        ModelParams::new(self.model.d, chi, self.model.alpha, self.model.tau, self.time.h, c_hls)
            .map_err(|e| Error::Config(format!("model: {e}")))
    }

    /// Discretized initial density before normalization.
    fn raw_density(&self, grid: GridSpec) -> Result<Vec<f64>> {
        let i = &self.initial;
        let c = grid.axis_centers();
        let center = i.center.clone().unwrap_or_default();
        let at = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
            match grid.mode {
                GridMode::Radial => c.iter().map(|r| f(&[*r])).collect(),
                GridMode::FullBox => {
                    let mut ix = vec![0; grid.dim];
                    let mut x = vec![0.0; grid.dim];
                    (0..grid.cell_count())
                        .map(|n| {
                            grid.unflatten(n, &mut ix);
                            for (xk, &j) in x.iter_mut().zip(&ix) {
                                *xk = c[j];
                            }
                            f(&x)
                        })
                        .collect()
                }
            }
        };
        let dist2 = |x: &[f64], y: &[f64]| -> f64 {
            x.iter().enumerate().map(|(k, xk)| (xk - y.get(k).copied().unwrap_or(0.0)).powi(2)).sum()
        };
        Ok(match i.family {
            Family::Gaussian => {
                let s = i.sigma.unwrap_or(1.0);
                at(&|x| (-dist2(x, &center) / (2.0 * s * s)).exp())
            }
            Family::Shell => {
                let (r0, w) = (i.radius.unwrap_or(1.0), i.width.unwrap_or(1.0));
                at(&|x| (-(dist2(x, &center).sqrt() - r0).powi(2) / (2.0 * w * w)).exp())
            }
            Family::TwoBump => {
                let a = 0.5 * i.separation.unwrap_or(1.0);
                let s = i.sigma.unwrap_or(0.5);
                at(&|x| {
                    let left = (-dist2(x, &[-a]) / (2.0 * s * s)).exp();
                    let right = (-dist2(x, &[a]) / (2.0 * s * s)).exp();
                    left + right
                })
            }
            Family::FromFile => {
                let path = i.path.as_deref().unwrap_or(Path::new(""));
                let f = DensityField::load(path)
                    .map_err(|e| Error::Config(format!("initial.path {}: {e}", path.display())))?;
                if *f.grid() != grid {
                    return Err(Error::Config(format!(
                        "initial.path {}: field grid {:?} differs from the scenario grid {:?}",
                        path.display(),
                        f.grid(),
                        grid
                    )));
                }
                f.into_values()
            }
        })
    }

    pub fn setup(&self) -> Result<Setup> {
        let grid = self.grid_spec()?;
        let params = self.params()?;
        let mut raw = self.raw_density(grid)?;
        if self.initial.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for x in raw.iter_mut() {
                *x *= 1.0 + self.initial.noise * (2.0 * rng.gen::<f64>() - 1.0);
            }
        }
        let unnormalized = DensityField::new(grid, raw.clone()).map_err(|e| Error::Config(format!("initial: {e}")))?;
        let raw_mass = unnormalized.mass();
        if !(raw_mass > 0.0) {
            return Err(Error::Config("initial: the discretized profile has no mass on this grid".into()));
        }
        let u = DensityField::probability(grid, raw)?;
        let v = match self.initial.v0 {
            ChemStart::Bessel => apply_bessel(&u, params.alpha)?,
            ChemStart::Zero => ChemField::zeros(grid),
        };
        let mut jko = JkoConfig::for_grid(&grid);
        if let Some(m) = self.solver.method {
            jko.method = m;
        }
        let tol = &self.tolerances;
        if let Some(x) = tol.energy {
            jko.energy_tol = x;
        }
        if let Some(x) = tol.sweep {
            jko.sweep_tol = x;
        }
        if let Some(x) = tol.newton {
            jko.newton_tol = x;
        }
        if let Some(x) = tol.sinkhorn {
            jko.sinkhorn.tol = x;
        }
        jko.validate(&grid).map_err(|e| Error::Config(format!("solver: {e}")))?;
        let t_final = self.time.t_final;
        let fd = FdConfig { dt: self.solver.fd_dt.unwrap_or(self.time.h), limiter: self.solver.fd_limiter, t_final };
        let interval = self.output.snapshot_interval.unwrap_or(t_final / 10.0);
        let snapshot_stride = ((interval / self.time.h).round() as usize).max(1);
        Ok(Setup {
            params,
            grid,
            jko,
            fd,
            initial: State::new(u, v)?,
            raw_mass,
            t_final,
            stride: self.output.stride,
            snapshot_stride,
            oracle_gap: tol.oracle_gap.unwrap_or(ORACLE_GAP),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "t"
[model]
d = 3
chi_fraction = 0.5
alpha = 1.0
tau = 1.0

[grid]
mode = "radial"
half_width = 8.0
points = 64

[time]
h = 1e-3
t_final = 0.01

[initial]
family = "gaussian"
sigma = 0.5
"#;

    #[test]
    fn parses_and_resolves_the_base() {
        let s = Scenario::parse(BASE).unwrap();
        let set = s.setup().unwrap();
        assert!((set.params.chi / set.params.chi_c - 0.5).abs() < 1e-14);
        assert!((set.initial.u.mass() - 1.0).abs() < 1e-12);
        assert_eq!(set.fd.dt, 1e-3);
        assert_eq!(set.snapshot_stride, 1);
    }

    #[test]
    fn negative_chi_names_the_field_and_line() {
        let text = BASE.replace("chi_fraction = 0.5", "chi = -1.0");
        let e = Scenario::parse(&text).unwrap_err().to_string();
        assert!(e.contains("model.chi") && e.contains("line 5"), "{e}");
    }

    #[test]
    fn unknown_keys_and_bad_types_are_rejected_with_a_position() {
        let e = Scenario::parse(&BASE.replace("tau = 1.0", "tau = 1.0\ntua = 2")).unwrap_err().to_string();
        assert!(e.contains("tua") && e.contains("line"), "{e}");
        let e = Scenario::parse(&BASE.replace("points = 64", "points = \"many\"")).unwrap_err().to_string();
        assert!(e.contains("points"), "{e}");
    }

    #[test]
    fn family_parameters_are_required() {
        let e = Scenario::parse(&BASE.replace("sigma = 0.5", "radius = 1.0")).unwrap_err().to_string();
        assert!(e.contains("initial.sigma"), "{e}");
        let e = Scenario::parse(&BASE.replace("family = \"gaussian\"", "family = \"two-bump\"\nseparation = 2.0"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("box"), "{e}");
    }

    #[test]
    fn hash_ignores_comments_and_layout() {
        let a = Scenario::parse(BASE).unwrap();
        let b = Scenario::parse(&BASE.replace("alpha = 1.0", "alpha = 1.0   # screening")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Scenario::parse(&BASE.replace("alpha = 1.0", "alpha = 0.5")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn noise_is_seeded_and_the_mass_renormalized() {
        let text = BASE.replace("sigma = 0.5", "sigma = 0.5\nnoise = 0.2");
        let a = Scenario::parse(&text).unwrap().setup().unwrap();
        let b = Scenario::parse(&text).unwrap().setup().unwrap();
        assert_eq!(a.initial.u, b.initial.u);
        let c = Scenario::parse(&text.replace("name = \"t\"", "name = \"t\"\nseed = 9")).unwrap().setup().unwrap();
        assert_ne!(a.initial.u, c.initial.u);
        assert!((c.initial.u.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shell_and_two_bump_integrate_to_one() {
        let shell = BASE.replace("sigma = 0.5", "radius = 2.0\nwidth = 0.5").replace("\"gaussian\"", "\"shell\"");
        let s = Scenario::parse(&shell).unwrap().setup().unwrap();
        assert!((s.initial.u.mass() - 1.0).abs() < 1e-12);
        assert!(s.raw_mass > 0.0);
        let bump = BASE
            .replace("\"radial\"", "\"box\"")
            .replace("points = 64", "points = 16")
            .replace("half_width = 8.0", "half_width = 3.0")
            .replace("family = \"gaussian\"\nsigma = 0.5", "family = \"two-bump\"\nseparation = 2.0");
        let b = Scenario::parse(&bump).unwrap().setup().unwrap();
        assert!((b.initial.u.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_file_reads_a_saved_field() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::parse(BASE).unwrap().setup().unwrap();
        let path = dir.path().join("u0.kfld");
        s.initial.u.save(&path).unwrap();
        let text = BASE.replace("family = \"gaussian\"\nsigma = 0.5", "family = \"from-file\"\npath = \"u0.kfld\"");
        let file = dir.path().join("s.cfg");
        std::fs::write(&file, text).unwrap();
        let f = Scenario::load(&file).unwrap().setup().unwrap();
        // Renormalizing a unit-mass field moves it by rounding only.
        for (a, b) in f.initial.u.values().iter().zip(s.initial.u.values()) {
            assert!((a - b).abs() <= 1e-15 * b, "{a} vs {b}");
        }
        assert!((f.raw_mass - 1.0).abs() < 1e-14);
    }
}
