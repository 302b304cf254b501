//! Exact transport between radial densities.
//!
//! Inside a shell the radius is taken uniformly distributed, so the radial
//! CDF is piecewise linear in `r` and the quantile function is piecewise
//! linear in the mass level `s`. Squared distances between two such
//! quantile functions integrate exactly.

use crate::grid::GridSpec;

/// Quantile function of a radial density, stored as the face radii and the
/// normalized cumulative masses at those faces.
#[derive(Debug, Clone)]
pub struct Quantile {
    pub(crate) levels: Vec<f64>,
    pub(crate) dr: f64,
}

impl Quantile {
    /// Builds the quantile of a vector of cell masses.
    pub fn from_masses(grid: &GridSpec, masses: &[f64]) -> Self {
        let total: f64 = masses.iter().sum();
        let mut levels = Vec::with_capacity(masses.len() + 1);
        let mut acc = 0.0;
        levels.push(0.0);
        for m in masses {
            acc += m;
            levels.push(acc / total);
        }
        Quantile { levels, dr: grid.spacing() }
    }

    pub fn cells(&self) -> usize {
        self.levels.len() - 1
    }

    fn width(&self, i: usize) -> f64 {
        self.levels[i + 1] - self.levels[i]
    }

    /// Value at level `s` on the linear piece of cell `i`.
    fn on_cell(&self, i: usize, s: f64) -> f64 {
        let w = self.width(i);
        let t = if w > 0.0 { (s - self.levels[i]) / w } else { 0.0 };
        self.dr * (i as f64 + t)
    }

    /// Slope `dQ/ds` on cell `i`.
    fn slope(&self, i: usize) -> f64 {
        self.dr / self.width(i)
    }

    /// Index of the non-empty cell whose level range holds `s`.
    fn locate(&self, s: f64) -> usize {
        let n = self.cells();
        let mut i = self.levels.partition_point(|&l| l <= s).saturating_sub(1).min(n - 1);
        while i + 1 < n && self.width(i) <= 0.0 {
            i += 1;
        }
        while i > 0 && self.width(i) <= 0.0 {
            i -= 1;
        }
        i
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.on_cell(self.locate(s), s)
    }

    /// Sampled monotone map: `(level, radius)` pairs at every face.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.levels.iter().enumerate().map(|(i, &s)| (s, self.dr * i as f64)).collect()
    }
}

/// `int (x - y)^2` over a segment whose endpoint differences are `a` and `b`.
fn sq_segment(len: f64, a: f64, b: f64) -> f64 {
    len * (a * a + a * b + b * b) / 3.0
}

/// `int_0^1 (Q_1 - Q_2)^2 ds` by merging the two sets of breakpoints.
pub fn quantile_distance_sq(q1: &Quantile, q2: &Quantile) -> f64 {
    let (n1, n2) = (q1.cells(), q2.cells());
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < n1 && j < n2 {
        if q1.width(i) <= 0.0 {
            i += 1;
            continue;
        }
        if q2.width(j) <= 0.0 {
            j += 1;
            continue;
        }
        let lo = q1.levels[i].max(q2.levels[j]);
        let hi = q1.levels[i + 1].min(q2.levels[j + 1]);
        if hi > lo {
            let a = q1.on_cell(i, lo) - q2.on_cell(j, lo);
            let b = q1.on_cell(i, hi) - q2.on_cell(j, hi);
            total += sq_segment(hi - lo, a, b);
        }
        if q1.levels[i + 1] <= q2.levels[j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Derivatives of `W(mu) = W_2^2(mu, base)` with respect to the interior
/// cumulative masses `M_1..M_{N-1}` of `mu`, as returned in
/// `(gradient, diagonal, off-diagonal)` with entry `k` belonging to face `k`.
///
/// With `F` the piecewise-linear CDF of `mu` the first variation is
/// `-2 int (r - Q_base(F(r))) dF` and the second `2 int Q_base'(F) dF dF`.
pub(crate) fn distance_derivatives(q: &Quantile, base: &Quantile) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = q.cells();
    let dr = q.dr;
    let mut grad = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut off = vec![0.0; n + 1];
    let mut k = 0;
    for i in 0..n {
        let (r0, r1) = (dr * i as f64, dr * (i + 1) as f64);
        let (s0, s1) = (q.levels[i], q.levels[i + 1]);
        let mut pieces: Vec<(f64, f64, f64, f64, f64)> = Vec::new();
        if s1 <= s0 {
            let c = base.locate(s0);
            let y = base.on_cell(c, s0);
            pieces.push((r0, r1, y, y, base.slope(c)));
        } else {
            while k + 1 < base.cells() && base.levels[k + 1] <= s0 {
                k += 1;
            }
            let mut c = k;
            loop {
                if base.width(c) > 0.0 {
                    let lo = s0.max(base.levels[c]);
                    let hi = s1.min(base.levels[c + 1]);
                    if hi > lo {
                        let ra = r0 + dr * (lo - s0) / (s1 - s0);
                        let rb = r0 + dr * (hi - s0) / (s1 - s0);
                        pieces.push((ra, rb, base.on_cell(c, lo), base.on_cell(c, hi), base.slope(c)));
                    }
                }
                if c + 1 >= base.cells() || base.levels[c + 1] >= s1 {
                    break;
                }
                c += 1;
            }
        }
        for (ra, rb, ya, yb, slope) in pieces {
            let len = rb - ra;
            let rm = 0.5 * (ra + rb);
            let ym = 0.5 * (ya + yb);
            let left = |r: f64| (r1 - r) / dr;
            let right = |r: f64| (r - r0) / dr;
            let simpson = |f: &dyn Fn(f64, f64) -> f64| len / 6.0 * (f(ra, ya) + 4.0 * f(rm, ym) + f(rb, yb));
            grad[i] -= 2.0 * simpson(&|r, y| (r - y) * left(r));
            grad[i + 1] -= 2.0 * simpson(&|r, y| (r - y) * right(r));
            diag[i] += 2.0 * slope * simpson(&|r, _| left(r) * left(r));
            diag[i + 1] += 2.0 * slope * simpson(&|r, _| right(r) * right(r));
            off[i] += 2.0 * slope * simpson(&|r, _| left(r) * right(r));
        }
    }
    (grad, diag, off)
}
