use super::*;
use crate::field::integral;
use crate::ops::Boundary;

const PI: f64 = std::f64::consts::PI;

fn dot(g: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    weighted_sum(g, &p, |x| x)
}

#[test]
fn poisson_constants() {
    assert!((poisson_constant(3).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
    assert!((poisson_constant(4).unwrap() - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
    assert!(poisson_constant(2).is_err());
    for d in 3..10 {
        assert!(poisson_constant(d).unwrap() > 0.0);
    }
}

#[test]
fn yukawa_closed_form() {
    for &alpha in &[0.0, 0.25, 1.0, 4.0] {
        for &r in &[0.05, 0.5, 1.0, 2.5, 6.0] {
            let q = bessel_kernel_value(alpha, r, 3).unwrap();
            let exact = (-alpha.sqrt() * r).exp() / (4.0 * PI * r);
            assert!(((q - exact) / exact).abs() < 1e-8, "alpha={alpha} r={r}: {q} vs {exact}");
        }
    }
    let q = bessel_kernel_value(1.0, 1.0, 3).unwrap();
    assert!((q - 0.029_274_915_762_159).abs() < 1e-10);
}

#[test]
fn newtonian_closed_form_higher_d() {
    for d in [4, 5, 6] {
        let c = poisson_constant(d).unwrap();
        for r in [0.3, 1.0, 3.0] {
            let q = bessel_kernel_value(0.0, r, d).unwrap();
            let exact = c * r.powi(2 - d as i32);
            assert!(((q - exact) / exact).abs() < 1e-8, "d={d} r={r}");
        }
    }
}

#[test]
fn kernel_dominated_by_poisson() {
    for r in [0.1, 1.0, 5.0] {
        let y0 = bessel_kernel_value(0.0, r, 3).unwrap();
        let y1 = bessel_kernel_value(0.5, r, 3).unwrap();
        assert!(y1 > 0.0 && y1 < y0);
    }
    assert!(matches!(bessel_kernel_value(1.0, 0.0, 3), Err(Error::Singular(_))));
}

#[test]
fn lattice_kernel_approaches_newtonian() {
    let g = GridSpec::full_box(3, 8.0, 32).unwrap();
    let k = KernelSpec::new(g, 0.0).unwrap();
    let dx = g.spacing();
    for off in [[12i64, 0, 0], [8, 8, 0], [7, 6, 5]] {
        let r = dx * off.iter().map(|o| (o * o) as f64).sum::<f64>().sqrt();
        let exact = 1.0 / (4.0 * PI * r);
        let v = k.offset_value(&off).unwrap();
        assert!(((v - exact) / exact).abs() < 2e-3, "{off:?}: {v} vs {exact}");
    }
}

#[test]
fn zero_density_gives_zero_potential() {
    for g in [GridSpec::radial(3, 4.0, 32).unwrap(), GridSpec::full_box(3, 2.0, 8).unwrap()] {
        let s = apply_bessel(&DensityField::zeros(g), 1.0).unwrap();
        assert!(s.values().iter().all(|&x| x == 0.0));
    }
}

#[test]
fn box_residual_small() {
    let g = GridSpec::full_box(3, 4.0, 32).unwrap();
    let u = DensityField::gaussian(g, 0.6, &[0.0; 3]).unwrap();
    for alpha in [0.0, 1.0] {
        let r = bessel_residual(&u, alpha).unwrap();
        assert!(r < 1e-6, "alpha={alpha}: {r}");
    }
}

#[test]
fn radial_residual_tiny() {
    let g = GridSpec::radial(3, 8.0, 256).unwrap();
    let u = DensityField::gaussian(g, 0.5, &[]).unwrap();
    for alpha in [0.0, 1.0] {
        assert!(bessel_residual(&u, alpha).unwrap() < 1e-10);
    }
    let g4 = GridSpec::radial(4, 6.0, 128).unwrap();
    let u = DensityField::gaussian(g4, 0.5, &[]).unwrap();
    assert!(bessel_residual(&u, 2.0).unwrap() < 1e-10);
}

#[test]
fn radial_green_matches_tridiagonal_solve() {
    let g = GridSpec::radial(3, 8.0, 128).unwrap();
    let u = DensityField::gaussian(g, 0.7, &[]).unwrap();
    let s = apply_bessel(&u, 1.0).unwrap();
    let w = elliptic_solve(&u, 1.0, 0.0).unwrap();
    for (a, b) in s.values().iter().zip(w.values()) {
        assert!((a - b).abs() < 1e-12 * a.abs().max(1e-3));
    }
}

#[test]
fn radial_potential_matches_continuum() {
    // Newtonian potential of a unit Gaussian: erf(r / (sqrt 2 sigma)) / (4 pi r).
    let g = GridSpec::radial(3, 8.0, 512).unwrap();
    let sigma: f64 = 0.5;
    let u = DensityField::gaussian(g, sigma, &[]).unwrap();
    let s = apply_bessel(&u, 0.0).unwrap();
    for (i, r) in g.axis_centers().iter().enumerate().step_by(37) {
        let exact = statrs::function::erf::erf(r / (2f64.sqrt() * sigma)) / (4.0 * PI * r);
        assert!(((s.values()[i] - exact) / exact).abs() < 1e-3, "r={r}");
    }
}

#[test]
fn self_adjoint() {
    let g = GridSpec::full_box(3, 4.0, 16).unwrap();
    let a = DensityField::gaussian(g, 0.8, &[0.5, 0.0, -0.3]).unwrap();
    let b = DensityField::gaussian(g, 0.5, &[-1.0, 0.4, 0.0]).unwrap();
    let k = KernelSpec::new(g, 0.5).unwrap();
    let l = dot(&g, a.values(), &k.apply(b.values()));
    let r = dot(&g, b.values(), &k.apply(a.values()));
    assert!((l - r).abs() < 1e-10 * l.abs());

    let g = GridSpec::radial(3, 6.0, 64).unwrap();
    let a = DensityField::gaussian(g, 0.8, &[]).unwrap();
    let b = DensityField::from_fn(g, |r| (-(r - 2.0).powi(2)).exp()).unwrap();
    let k = KernelSpec::new(g, 0.0).unwrap();
    let l = dot(&g, a.values(), &k.apply(b.values()));
    let r = dot(&g, b.values(), &k.apply(a.values()));
    assert!((l - r).abs() < 1e-12 * l.abs());
}

#[test]
fn positive_and_monotone_in_alpha() {
    for g in [GridSpec::full_box(3, 4.0, 16).unwrap(), GridSpec::radial(3, 6.0, 64).unwrap()] {
        let u = DensityField::gaussian(g, 0.7, &[0.0; 3]).unwrap();
        let mut prev: Option<Vec<f64>> = None;
        for alpha in [0.0, 0.5, 2.0] {
            let s = apply_bessel(&u, alpha).unwrap().into_values();
            assert!(s.iter().all(|&x| x > 0.0));
            if let Some(p) = &prev {
                assert!(s.iter().zip(p).all(|(a, b)| a < b));
            }
            prev = Some(s);
        }
    }
}

#[test]
fn elliptic_manufactured_solution() {
    for g in [GridSpec::full_box(3, 3.0, 16).unwrap(), GridSpec::radial(3, 5.0, 100).unwrap()] {
        let gfun: Vec<f64> = g.radii().iter().map(|r| (-r * r).exp() * (1.0 + 0.3 * r)).collect();
        let bc = Boundary::chemical(&g, 0.0);
        let lap = laplacian(&g, &gfun, bc);
        let rhs: Vec<f64> = gfun.iter().zip(&lap).map(|(a, l)| a - l).collect();
        let f = ChemField::new(g, rhs.clone()).unwrap();
        let w = elliptic_solve(&f, 0.0, 1.0).unwrap();
        for (a, b) in w.values().iter().zip(&gfun) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(elliptic_residual(&g, w.values(), &rhs, 1.0, bc) < 1e-10);
    }
}

#[test]
fn elliptic_zero_rhs() {
    let g = GridSpec::full_box(3, 1.0, 8).unwrap();
    let w = elliptic_solve(&ChemField::zeros(g), 0.0, 2.0).unwrap();
    assert!(w.values().iter().all(|&x| x == 0.0));
}

#[test]
fn box_elliptic_agrees_with_convolution_inside() {
    let g = GridSpec::full_box(3, 8.0, 32).unwrap();
    let u = DensityField::gaussian(g, 1.0, &[0.0; 3]).unwrap();
    let s = apply_bessel(&u, 1.0).unwrap();
    let w = elliptic_solve(&u, 1.0, 0.0).unwrap();
    let mut ix = [0usize; 3];
    let c = g.axis_centers();
    for i in 0..g.cell_count() {
        g.unflatten(i, &mut ix);
        if ix.iter().all(|&j| c[j].abs() < 4.0) {
            assert!((s.values()[i] - w.values()[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn singular_operator_needs_zero_mean() {
    let g = GridSpec::full_box(3, 1.0, 8).unwrap();
    let u = DensityField::gaussian(g, 0.3, &[0.0; 3]).unwrap();
    assert!(matches!(elliptic_solve_bc(&g, u.values(), 0.0, Boundary::Neumann), Err(Error::Solvability(_))));
    let mean = integral(&u) / g.domain_volume();
    let rhs: Vec<f64> = u.values().iter().map(|x| x - mean).collect();
    let w = elliptic_solve_bc(&g, &rhs, 0.0, Boundary::Neumann).unwrap();
    assert!(elliptic_residual(&g, &w, &rhs, 0.0, Boundary::Neumann) < 1e-10);

    let r = GridSpec::radial(3, 2.0, 32).unwrap();
    let u = DensityField::gaussian(r, 0.3, &[]).unwrap();
    assert!(elliptic_solve_bc(&r, u.values(), 0.0, Boundary::Neumann).is_err());
    let mean = integral(&u) / r.volumes().iter().sum::<f64>();
    let rhs: Vec<f64> = u.values().iter().map(|x| x - mean).collect();
    let w = elliptic_solve_bc(&r, &rhs, 0.0, Boundary::Neumann).unwrap();
    assert!(elliptic_residual(&r, &w, &rhs, 0.0, Boundary::Neumann) < 1e-10);
}
