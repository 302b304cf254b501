use super::*;
use crate::grid::GridSpec;

fn shell(g: GridSpec, cell: usize) -> DensityField {
    let mut v = vec![0.0; g.points];
    v[cell] = 1.0;
    DensityField::probability(g, v).unwrap()
}

fn radial_bump(g: GridSpec, c: f64, w: f64) -> DensityField {
    let v = g.axis_centers().iter().map(|r| (-(r - c).powi(2) / (2.0 * w * w)).exp()).collect();
    DensityField::probability(g, v).unwrap()
}

/// Splits every shell into `s` equal atoms and transports the two atom
/// clouds by sorting (north-west corner rule on the line).
fn atom_transport(u1: &DensityField, u2: &DensityField, s: usize) -> f64 {
    let atoms = |u: &DensityField| -> Vec<(f64, f64)> {
        let dr = u.grid().spacing();
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, m) in u.cell_masses().iter().enumerate() {
            for j in 0..s {
                out.push((dr * (i as f64 + (j as f64 + 0.5) / s as f64), m / s as f64));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    };
    let (a, b) = (atoms(u1), atoms(u2));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let t = ra.min(rb);
        total += t * (a[i].0 - b[j].0).powi(2);
        ra -= t;
        rb -= t;
        if ra <= 0.0 {
            i += 1;
            ra = a.get(i).map_or(0.0, |x| x.1);
        }
        if rb <= 0.0 {
            j += 1;
            rb = b.get(j).map_or(0.0, |x| x.1);
        }
    }
    total
}

#[test]
fn identical_inputs_give_zero() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let u = radial_bump(g, 1.0, 0.4);
    assert_eq!(w2_radial(&u, &u).unwrap().w2_squared, 0.0);
    let cfg = SinkhornConfig::for_grid(&g);
    assert!(w2_sinkhorn(&u, &u, &cfg).unwrap().w2_squared.abs() < 1e-9);
}

#[test]
fn shells_move_rigidly() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let c = g.axis_centers();
    for (i, j) in [(5, 40), (10, 11), (63, 0)] {
        let w = w2_radial(&shell(g, i), &shell(g, j)).unwrap().w2_squared;
        assert!((w - (c[i] - c[j]).powi(2)).abs() < 1e-13, "{i} {j}: {w}");
    }
}

#[test]
fn exact_radial_matches_atom_sorting() {
    let g = GridSpec::radial(3, 6.0, 96).unwrap();
    let m = 4.0 / 3.0;
    let baren = |scale: f64| {
        let v = g.axis_centers().iter().map(|r| (1.0 - (r / scale).powi(2)).max(0.0).powf(1.0 / (m - 1.0))).collect();
        DensityField::probability(g, v).unwrap()
    };
    let (u1, u2) = (baren(2.0), baren(3.1));
    let exact = w2_radial(&u1, &u2).unwrap().w2_squared;
    let oracle = atom_transport(&u1, &u2, 400);
    assert!(((exact - oracle) / exact).abs() < 1e-5, "{exact} vs {oracle}");
}

#[test]
fn both_methods_are_symmetric() {
    let g = GridSpec::radial(3, 5.0, 64).unwrap();
    let (a, b) = (radial_bump(g, 1.0, 0.5), radial_bump(g, 2.2, 0.3));
    assert_eq!(w2_radial(&a, &b).unwrap().w2_squared, w2_radial(&b, &a).unwrap().w2_squared);
    let cfg = SinkhornConfig::for_grid(&g);
    assert_eq!(w2_sinkhorn(&a, &b, &cfg).unwrap().w2_squared, w2_sinkhorn(&b, &a, &cfg).unwrap().w2_squared);
}

#[test]
fn radial_sinkhorn_agrees_with_exact() {
    let g = GridSpec::radial(3, 6.0, 64).unwrap();
    let cfg = SinkhornConfig { max_iter: 5000, ..SinkhornConfig::for_grid(&g) };
    for (c1, w1, c2, w2) in [(0.5, 0.6, 2.0, 0.4), (1.0, 0.3, 1.4, 0.8), (3.0, 0.5, 0.0, 1.0)] {
        let (a, b) = (radial_bump(g, c1, w1), radial_bump(g, c2, w2));
        let exact = w2_radial(&a, &b).unwrap().w2_squared;
        let ent = w2_sinkhorn(&a, &b, &cfg).unwrap();
        let tol = (0.02 * exact).max(entropic_bias_bound(cfg.epsilon, 1));
        assert!((ent.w2_squared - exact).abs() < tol, "{} vs {exact}", ent.w2_squared);
    }
}

fn shifted(u: &DensityField, cells: usize) -> DensityField {
    let g = *u.grid();
    let n = g.points;
    let mut out = vec![0.0; g.cell_count()];
    let stride = n * n;
    for (i, &x) in u.values().iter().enumerate() {
        let ix = i / stride;
        if ix + cells < n {
            out[i + cells * stride] = x;
        }
    }
    DensityField::probability(g, out).unwrap()
}

#[test]
fn box_translation_by_lattice_vector() {
    let g = GridSpec::full_box(3, 4.0, 16).unwrap();
    let sigma = 0.7;
    let u = DensityField::gaussian(g, sigma, &[-1.0, 0.0, 0.0]).unwrap();
    let cfg = SinkhornConfig { epsilon: 0.1 * sigma * sigma, ..SinkhornConfig::for_grid(&g) };
    let w = w2_sinkhorn(&u, &shifted(&u, 2), &cfg).unwrap();
    assert!(w.converged);
    let a2 = (2.0 * g.spacing()).powi(2);
    assert!(((w.w2_squared - a2) / a2).abs() < 0.02, "{}", w.w2_squared);

    let v = DensityField::gaussian(g, 0.5, &[0.0, 0.5, 0.0]).unwrap();
    let base = w2_sinkhorn(&u, &v, &cfg).unwrap().w2_squared;
    let moved = w2_sinkhorn(&shifted(&u, 1), &shifted(&v, 1), &cfg).unwrap().w2_squared;
    assert!((base - moved).abs() < 1e-10 * base.max(1.0), "{base} vs {moved}");
}

#[test]
fn box_gaussians_offset_centres() {
    let g = GridSpec::full_box(3, 4.0, 16).unwrap();
    let sigma = 0.6;
    let cfg = SinkhornConfig { epsilon: 0.1 * sigma * sigma, ..SinkhornConfig::for_grid(&g) };
    let a = DensityField::gaussian(g, sigma, &[-0.4, 0.3, 0.0]).unwrap();
    let b = DensityField::gaussian(g, sigma, &[0.6, -0.2, 0.1]).unwrap();
    let exact: f64 = 1.0 + 0.25 + 0.01;
    let w = w2_sinkhorn(&a, &b, &cfg).unwrap().w2_squared;
    assert!(((w - exact) / exact).abs() < 0.02, "{w}");
}

#[test]
fn residual_history_is_monotone() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let cfg = SinkhornConfig { relaxation: 1.0, ..SinkhornConfig::for_grid(&g) };
    let h = sinkhorn_residual_history(&radial_bump(g, 0.5, 0.5), &radial_bump(g, 2.0, 0.3), &cfg).unwrap();
    assert!(!h.is_empty());
    for w in h.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{:?}", w);
    }
}

#[test]
fn triangle_on_collinear_shells() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let c = g.axis_centers();
    let cell = |r: f64| c.iter().position(|&x| (x - r).abs() < g.spacing() / 2.0 + 1e-12).unwrap();
    let (a, b, d) = (shell(g, cell(1.0)), shell(g, cell(2.0)), shell(g, cell(3.0)));
    let rep = w2_triangle_check(&a, &b, &d, Method::Exact).unwrap();
    assert_eq!(rep.holds, Some(true));
    assert!(rep.slack.abs() < 1e-12);
    let same = w2_triangle_check(&a, &a, &b, Method::Exact).unwrap();
    assert!(same.slack.abs() < 1e-15);
}

#[test]
fn rejects_bad_inputs() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let u = radial_bump(g, 1.0, 0.4);
    let half = DensityField::new(g, u.values().iter().map(|x| 0.5 * x).collect()).unwrap();
    assert!(matches!(w2_radial(&u, &half), Err(Error::MassDrift { .. })));
    let b = GridSpec::full_box(3, 4.0, 8).unwrap();
    let ub = DensityField::gaussian(b, 1.0, &[0.0; 3]).unwrap();
    assert!(w2_radial(&ub, &ub).is_err());
    assert!(w2_sinkhorn(&u, &u, &SinkhornConfig { epsilon: 0.0, ..SinkhornConfig::for_grid(&g) }).is_err());
}

#[test]
fn plan_cost_matches_the_dense_sum() {
    let g = GridSpec::full_box(2, 2.0, 8).unwrap();
    let lat = sinkhorn::Lattice::new(&g);
    let eps = 0.3;
    let k = lat.kernel(eps);
    let c = g.axis_centers();
    let p: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
    let q: Vec<f64> = (0..64).map(|i| (i as f64 * 0.91).cos()).collect();
    let mut dense = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            let d2 = (c[i / 8] - c[j / 8]).powi(2) + (c[i % 8] - c[j % 8]).powi(2);
            dense += (p[i] + q[j] - d2 / eps).exp() * d2;
        }
    }
    let fast = lat.plan_cost(&k, &p, &q);
    assert!((fast - dense).abs() < 1e-12 * dense, "{fast} vs {dense}");
}
