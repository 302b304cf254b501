use super::*;
use crate::hls::shipped_c_hls;
use crate::kernels::apply_bessel;

fn params(chi_frac: f64, alpha: f64, tau: f64) -> ModelParams {
    let c = shipped_c_hls(3).unwrap();
    let chi_c = crate::params::critical_chi(4.0 / 3.0, c);
    ModelParams::new(3, chi_frac * chi_c, alpha, tau, 1e-3, c).unwrap()
}

fn gaussian_state(g: GridSpec, sigma: f64, alpha: f64) -> State {
    let centre = vec![0.0; if g.is_radial() { 1 } else { g.dim }];
    let u = DensityField::gaussian(g, sigma, &centre).unwrap();
    let v = apply_bessel(&u, alpha).unwrap();
    State::new(u, v).unwrap()
}

#[test]
fn empty_density_leaves_a_decaying_chemical_mode() {
    let g = GridSpec::full_box(3, 4.0, 16).unwrap();
    let (alpha, tau) = (1.0, 1.0);
    let p = params(0.5, alpha, tau);
    let k = std::f64::consts::PI / 8.0;
    let x = g.axis_centers();
    let n = g.points;
    let v0: Vec<f64> = (0..g.cell_count()).map(|i| (k * (x[i / (n * n)] + 4.0)).cos()).collect();
    let v0 = ChemField::new(g, v0).unwrap();
    let norm0 = weighted_sum(&g, v0.values(), |x| x * x).sqrt();
    let cfg = FdConfig { dt: 5e-4, limiter: false, t_final: 0.1 };
    let run = run_fd(State::new(DensityField::zeros(g), v0).unwrap(), p, cfg, 200).unwrap();
    let last = run.snapshots.last().unwrap();
    assert!(last.u.values().iter().all(|&u| u == 0.0));
    let norm = weighted_sum(&g, last.v.values(), |x| x * x).sqrt();
    let exact = (-(k * k + alpha) * last.t / tau).exp() * norm0;
    assert!(((norm - exact) / exact).abs() < 1e-4, "{norm} vs {exact}");
}

#[test]
fn decoupled_radial_run_spreads_like_barenblatt() {
    let g = GridSpec::radial(3, 4.0, 128).unwrap();
    let p = params(0.0, 0.0, 1.0);
    let t0 = 0.05;
    let u0 = barenblatt(g, p.m, t0).unwrap();
    assert!((integral(&u0) - 1.0).abs() < 1e-3);
    let u0 = DensityField::probability(g, u0.into_values()).unwrap();
    let state = State::new(u0, ChemField::zeros(g)).unwrap();
    let cfg = FdConfig { dt: 1e-3, limiter: false, t_final: 10.0 * t0 - t0 };
    let run = run_fd(state, p, cfg, 1).unwrap();
    let pts: Vec<(f64, f64)> = run
        .snapshots
        .iter()
        .filter(|s| s.n > 0 && s.n % 25 == 0)
        .map(|s| ((t0 + s.t).ln(), s.u.max_value().ln()))
        .collect();
    let mean = |f: &dyn Fn(&(f64, f64)) -> f64| pts.iter().map(f).sum::<f64>() / pts.len() as f64;
    let (mx, my) = (mean(&|p| p.0), mean(&|p| p.1));
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let expected = barenblatt_exponent(3, p.m);
    assert!(((-slope - expected) / expected).abs() < 0.05, "{slope} vs {expected}");
}

#[test]
fn mass_is_constant_over_ten_thousand_steps() {
    let g = GridSpec::radial(3, 6.0, 64).unwrap();
    let p = params(0.5, 1.0, 1.0);
    let mut state = gaussian_state(g, 0.6, 1.0);
    let cfg = FdConfig { dt: 1e-4, limiter: true, t_final: 1.0 };
    let m0 = integral(&state.u);
    for n in 0..10_000 {
        state = fd_step(&state, &p, &cfg, n).unwrap().0;
    }
    assert!((integral(&state.u) - m0).abs() <= 1e-12);
}

#[test]
fn box_step_conserves_mass_and_positivity() {
    let g = GridSpec::full_box(3, 3.0, 16).unwrap();
    let p = params(0.9, 1.0, 1.0);
    let state = gaussian_state(g, 0.6, 1.0);
    for limiter in [false, true] {
        let cfg = FdConfig { dt: 1e-3, limiter, t_final: 1e-2 };
        let run = run_fd(state.clone(), p, cfg, 5).unwrap();
        assert!(run.max_mass_drift() <= FD_MASS_TOL);
        assert_eq!(run.max_clipped_mass(), 0.0);
        let last = run.snapshots.last().unwrap();
        assert!((integral(&last.u) - 1.0).abs() <= 1e-11);
    }
}

#[test]
fn radial_and_box_steps_agree_on_symmetric_data() {
    let p = params(0.5, 1.0, 1.0);
    let radial = GridSpec::radial(3, 3.0, 48).unwrap();
    let boxed = GridSpec::full_box(3, 3.0, 32).unwrap();
    let cfg = FdConfig { dt: 2e-3, limiter: false, t_final: 0.02 };
    let a = run_fd(gaussian_state(radial, 0.7, 1.0), p, cfg, 10).unwrap();
    let b = run_fd(gaussian_state(boxed, 0.7, 1.0), p, cfg, 10).unwrap();
    let (da, db) = (a.series.last().unwrap(), b.series.last().unwrap());
    let rel = ((da.energy.total - db.energy.total) / da.energy.total).abs();
    assert!(rel < 0.02, "{} vs {}", da.energy.total, db.energy.total);
    assert!((da.second_moment - db.second_moment).abs() / da.second_moment < 0.02);
}

#[test]
fn oversized_steps_are_rejected() {
    let g = GridSpec::radial(3, 4.0, 64).unwrap();
    let p = params(0.9, 1.0, 1.0);
    let u = DensityField::gaussian(g, 0.2, &[0.0]).unwrap();
    let v = ChemField::new(g, apply_bessel(&u, 1.0).unwrap().values().iter().map(|x| 1e3 * x).collect()).unwrap();
    let state = State::new(u, v).unwrap();
    let cfg = FdConfig { dt: 0.1, limiter: false, t_final: 1.0 };
    let s = stability(&state, &p, &cfg);
    assert!(s.courant > 1.0);
    assert!(matches!(check_stability(&state, &p, &cfg), Err(Error::Stability(_))));
    let ok = FdConfig { dt: 0.9 * s.dt_max, ..cfg };
    assert!(check_stability(&state, &p, &ok).is_ok());
}

#[test]
fn energy_decays_along_the_oracle() {
    let g = GridSpec::radial(3, 6.0, 96).unwrap();
    let p = params(0.5, 1.0, 1.0);
    let cfg = FdConfig { dt: 1e-3, limiter: false, t_final: 0.1 };
    let run = run_fd(gaussian_state(g, 0.5, 1.0), p, cfg, 10).unwrap();
    assert!(run.series.last().unwrap().energy.total < run.initial.energy.total);
    assert!(run.max_energy_increase() <= 10.0 * cfg.dt);
}

#[test]
fn barenblatt_has_unit_mass_and_the_right_peak() {
    let g = GridSpec::radial(3, 5.0, 2000).unwrap();
    let m = 4.0 / 3.0;
    for t in [0.05, 0.3] {
        let u = barenblatt(g, m, t).unwrap();
        assert!((integral(&u) - 1.0).abs() < 1e-4, "{}", integral(&u));
    }
    let (a, b) = (barenblatt(g, m, 0.1).unwrap(), barenblatt(g, m, 0.2).unwrap());
    let ratio = a.values()[0] / b.values()[0];
    assert!((ratio - 2f64.powf(barenblatt_exponent(3, m))).abs() < 1e-3);
}
