//! Runs the variational scheme and the finite-volume oracle from the same
//! radial Gaussian and prints the gap between them.
//!
//! cargo run --release --example compare_oracle -- [points] [h] [t_final] [chi/chi_c] [limiter 0|1]

use std::time::Instant;

use ksflow::fd::{compare_trajectories, run_fd, FdConfig};
use ksflow::hls::shipped_c_hls;
use ksflow::jko::{run_trajectory, JkoConfig, State};
use ksflow::kernels::apply_bessel;
use ksflow::{DensityField, GridSpec, ModelParams};

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, default: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let points = arg(1, 256.0) as usize;
    let h = arg(2, 1e-3);
    let t_final = arg(3, 0.5);
    let frac = arg(4, 0.5);
    let limiter = arg(5, 1.0) != 0.0;

    let grid = GridSpec::radial(3, 8.0, points)?;
    let c_hls = shipped_c_hls(3).expect("shipped estimate for d = 3");
    let chi_c = ksflow::params::critical_chi(4.0 / 3.0, c_hls);
    let params = ModelParams::new(3, frac * chi_c, 1.0, 1.0, h, c_hls)?;
    let u0 = DensityField::gaussian(grid, 0.5, &[0.0])?;
    let v0 = apply_bessel(&u0, params.alpha)?;
    let initial = State::new(u0, v0)?;
    let stride = ((t_final / h / 10.0).round() as usize).max(1);

    let clock = Instant::now();
    let jko = run_trajectory(initial.clone(), params, JkoConfig::for_grid(&grid), t_final, stride)?;
    println!("jko: {} steps in {:.1?}", jko.reports.len(), clock.elapsed());

    let clock = Instant::now();
    let fd = run_fd(initial, params, FdConfig { dt: h, limiter, t_final }, stride)?;
    println!("fd:  {} steps in {:.1?}", fd.reports.len(), clock.elapsed());

    println!("{:>8} {:>12} {:>12} {:>12} {:>12}", "t", "L^m rel", "H^1 rel", "E jko", "E fd");
    for r in &compare_trajectories(&jko, &fd)?.rows {
        println!("{:8.4} {:12.4e} {:12.4e} {:12.6} {:12.6}", r.t, r.lm_relative, r.h1_relative, r.energy_jko, r.energy_fd);
    }
    let checks = jko.checks();
    println!("jko invariants passed: {}  (all steps converged: {})", checks.passed(), checks.all_converged);
    Ok(())
}
