use super::*;
use crate::field::{integral, l2_distance};
use crate::hls::shipped_c_hls;
use crate::kernels::apply_bessel;

fn grid(n: usize) -> GridSpec {
    GridSpec::radial(3, 8.0, n).unwrap()
}

fn params(frac: f64, h: f64) -> ModelParams {
    let c = shipped_c_hls(3).unwrap();
    let chi_c = crate::params::critical_chi(4.0 / 3.0, c);
    ModelParams::new(3, frac * chi_c, 1.0, 1.0, h, c).unwrap()
}

fn initial(g: GridSpec, sigma: f64, alpha: f64) -> State {
    let u = DensityField::gaussian(g, sigma, &[0.0]).unwrap();
    let v = apply_bessel(&u, alpha).unwrap();
    State::new(u, v).unwrap()
}

fn l1(a: &DensityField, b: &DensityField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).collect();
    crate::field::weighted_sum(a.grid(), &d, |x| x)
}

#[test]
fn v_step_of_nothing_is_nothing() {
    let g = grid(64);
    let p = params(0.5, 1e-3);
    let v = v_step(&DensityField::zeros(g), &ChemField::zeros(g), &p).unwrap();
    assert!(v.values().iter().all(|x| *x == 0.0));
}

#[test]
fn v_step_with_huge_step_is_the_bessel_potential() {
    let g = grid(128);
    let p = params(0.5, 1e6);
    let s = initial(g, 0.5, 1.0);
    let v = v_step(&s.u, &ChemField::zeros(g), &p).unwrap();
    let err = l2_distance(&v, &s.v).unwrap() / crate::field::lp_norm(&s.v, 2.0);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn v_step_solves_its_equation_and_lowers_the_functional() {
    let g = grid(128);
    let p = params(0.5, 1e-3);
    let s = initial(g, 0.5, 1.0);
    let u = DensityField::gaussian(g, 0.6, &[0.0]).unwrap();
    let v = v_step(&u, &s.v, &p).unwrap();
    assert!(v_residual(&u, &v, &s.v, &p).unwrap() <= EL_V_TOL);
    let f_old = scaled_functional(&u, &s.v, &s.v, 0.0, &p);
    let f_new = scaled_functional(&u, &v, &s.v, 0.0, &p);
    assert!(f_new < f_old);
}

#[test]
fn tiny_step_stays_at_the_base_point() {
    let g = grid(128);
    let p = params(0.5, 1e-6);
    let u0 = DensityField::gaussian(g, 0.5, &[0.0]).unwrap();
    let cfg = JkoConfig::for_grid(&g);
    let out = u_step(&u0, &ChemField::zeros(g), &p, &cfg).unwrap();
    assert!(out.converged, "{}", out.iterations);
    assert!(w2_radial(&out.u, &u0).unwrap().w2_squared.sqrt() <= 1e-4);
}

/// Discrete minimizer of `int u^m / (m-1) - chi int u v` at unit mass.
fn static_minimizer(g: GridSpec, v: &[f64], p: &ModelParams) -> DensityField {
    let vol = g.volumes();
    let prof = |lam: f64| -> Vec<f64> {
        v.iter().map(|x| ((p.m - 1.0) / p.m * (p.chi * x + lam)).max(0.0).powf(1.0 / (p.m - 1.0))).collect()
    };
    let mass = |lam: f64| prof(lam).iter().zip(&vol).map(|(a, b)| a * b).sum::<f64>();
    let (mut lo, mut hi) = (-100.0, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    DensityField::new(g, prof(0.5 * (lo + hi))).unwrap()
}

#[test]
fn static_minimizer_is_a_fixed_point_of_the_u_step() {
    let g = grid(128);
    let p = params(0.5, 1e-3);
    let v: Vec<f64> = g.axis_centers().iter().map(|r| -0.5 * r * r).collect();
    let v = ChemField::new(g, v).unwrap();
    let u = static_minimizer(g, v.values(), &p);
    let out = u_step(&u, &v, &p, &JkoConfig::for_grid(&g)).unwrap();
    assert!(l1(&out.u, &u) < 1e-8, "{}", l1(&out.u, &u));
}

#[test]
fn first_step_lies_below_the_initial_energy() {
    let g = grid(128);
    let p = params(0.5, 1e-3);
    let s = initial(g, 0.5, 1.0);
    let (next, r) = jko_step(&s, &p, &JkoConfig::for_grid(&g), 0).unwrap();
    assert!(r.converged, "{r:?}");
    assert!(r.functional <= r.energy_before.total, "{} > {}", r.functional, r.energy_before.total);
    assert!((integral(&next.u) - 1.0).abs() <= 1e-10);
    assert!(r.el_residual_v <= EL_V_TOL);
    assert!(r.clipped_mass <= 1e-12);
}

#[test]
fn ten_steps_telescope() {
    let g = grid(128);
    let p = params(0.5, 1e-3);
    let cfg = JkoConfig::for_grid(&g);
    let t = run_trajectory(initial(g, 0.5, 1.0), p, cfg, 10.0 * p.h, 5).unwrap();
    assert_eq!(t.reports.len(), 10);
    let c = t.checks();
    let e0 = t.initial.energy.total;
    let e10 = t.series.last().unwrap().energy.total;
    assert!(c.increment_sum / (2.0 * p.h) <= e0 - e10 + 10.0 * cfg.energy_tol);
    assert!(c.passed(), "{c:?}");
    assert_eq!(t.snapshots.iter().map(|s| s.n).collect::<Vec<_>>(), vec![0, 5, 10]);
}

#[test]
fn energy_decreases_and_respects_the_lm_bound() {
    let g = grid(128);
    let p = params(0.5, 2e-3);
    let t = run_trajectory(initial(g, 0.5, 1.0), p, JkoConfig::for_grid(&g), 0.1, 10).unwrap();
    let c = t.checks();
    assert!(c.energy_monotone, "{}", c.max_energy_increase);
    assert_eq!(c.lm_bound, Some(true));
    assert!(c.passed(), "{c:?}");
    for w in t.series.windows(2) {
        assert!(w[1].energy.total <= w[0].energy.total + 1e-8);
    }
}

#[test]
fn euler_lagrange_relation_within_its_slack() {
    let g = grid(256);
    let p = params(0.5, 1e-3);
    let s = initial(g, 0.5, 1.0);
    let (_, r) = jko_step(&s, &p, &JkoConfig::for_grid(&g), 0).unwrap();
    eprintln!("el {} slack {}", r.el_residual_u, r.el_slack);
    assert!(r.el_residual_u <= r.el_slack, "{} > {}", r.el_residual_u, r.el_slack);
}

#[test]
fn quantile_and_entropic_steps_agree() {
    let g = grid(256);
    let p = params(0.5, 1e-3);
    let s = initial(g, 0.5, 1.0);
    let v = v_step(&s.u, &s.v, &p).unwrap();
    let exact = JkoConfig::for_grid(&g);
    let ent = JkoConfig { method: UMethod::Sinkhorn, ..exact };
    let a = u_step(&s.u, &v, &p, &exact).unwrap();
    let b = u_step(&s.u, &v, &p, &ent).unwrap();
    assert!(b.converged);
    let gap = l1(&a.u, &b.u);
    assert!(gap < 0.02, "{gap}");
}

#[test]
fn decoupled_step_ignores_the_chemical() {
    let g = grid(128);
    let p = params(0.0, 1e-3);
    let s = initial(g, 0.5, 1.0);
    let cfg = JkoConfig::for_grid(&g);
    let a = u_step(&s.u, &s.v, &p, &cfg).unwrap();
    let b = u_step(&s.u, &ChemField::zeros(g), &p, &cfg).unwrap();
    assert_eq!(a.u, b.u);
}

#[test]
fn box_step_conserves_mass() {
    let g = GridSpec::full_box(3, 3.0, 16).unwrap();
    let p = params(0.5, 1e-2);
    let s = initial(g, 0.8, 1.0);
    let (next, r) = jko_step(&s, &p, &JkoConfig::for_grid(&g), 0).unwrap();
    assert!((integral(&next.u) - 1.0).abs() <= 1e-10);
    assert!(r.functional <= r.energy_before.total + 1e-8, "{r:?}");
}

#[test]
fn modulus_vanishes_on_the_diagonal() {
    let g = grid(64);
    let p = params(0.5, 1e-3);
    let t = run_trajectory(initial(g, 0.5, 1.0), p, JkoConfig::for_grid(&g), 4e-3, 2).unwrap();
    let r = time_modulus(&t, 2e-3, 2e-3).unwrap();
    assert_eq!((r.v_ratio, r.u_ratio), (0.0, 0.0));
    let r = time_modulus(&t, 0.0, 4e-3).unwrap();
    assert!(r.v_ratio > 0.0 && r.u_ratio > 0.0);
}

#[test]
fn flat_profile_has_no_diffusive_dissipation() {
    let g = grid(64);
    let p = params(0.5, 1e-3);
    let u = DensityField::probability(g, vec![1.0; 64]).unwrap();
    let v = ChemField::zeros(g);
    let rep = regularity_diagnostic(&u, &v, &u, &v, &p, 1e-2, 10).unwrap();
    assert!(rep.diffusive.iter().all(|d| d.abs() < 1e-20));
}

#[test]
fn heat_flow_smooths_and_lowers_entropy() {
    let g = grid(128);
    let p = params(0.5, 1e-3);
    let s = initial(g, 0.4, 1.0);
    let rep = regularity_diagnostic(&s.u, &s.v, &s.u, &s.v, &p, 1e-2, 10).unwrap();
    for w in rep.diffusive.windows(2) {
        assert!(w[1] <= 1.01 * w[0], "{w:?}");
    }
    assert!(rep.entropy_decreasing);
}

/// Cell-centre transport pins mass for `h` well below the spacing, so the
/// two methods are also compared where both steps move a large fraction.
#[test]
fn quantile_and_entropic_steps_agree_on_a_long_step() {
    let g = grid(128);
    let p = params(0.5, 0.2);
    let s = initial(g, 0.5, 1.0);
    let exact = JkoConfig::for_grid(&g);
    let ent = JkoConfig { method: UMethod::Sinkhorn, ..exact };
    let a = u_step(&s.u, &s.v, &p, &exact).unwrap();
    let b = u_step(&s.u, &s.v, &p, &ent).unwrap();
    assert!(l1(&a.u, &s.u) > 0.25);
    let gap = l1(&a.u, &b.u);
    assert!(gap < 0.02, "{gap}");
}
