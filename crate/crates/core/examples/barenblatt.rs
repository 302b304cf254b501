//! Decoupled run (chi = 0) started from a Barenblatt profile; the peak should
//! decay like `t^(-d / (d(m-1)+2))`.
//!
//! cargo run --release --example barenblatt -- [points] [h]

use ksflow::fd::{barenblatt, barenblatt_exponent};
use ksflow::hls::shipped_c_hls;
use ksflow::jko::{run_trajectory, JkoConfig, State};
use ksflow::{ChemField, DensityField, GridSpec, ModelParams};

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let points = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(128);
    let h = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let g = GridSpec::radial(3, 4.0, points)?;
    let p = ModelParams::new(3, 0.0, 0.0, 1.0, h, shipped_c_hls(3).expect("d = 3 estimate"))?;
    let t0 = 0.05;
    let u0 = DensityField::probability(g, barenblatt(g, p.m, t0)?.into_values())?;
    let traj = run_trajectory(State::new(u0, ChemField::zeros(g))?, p, JkoConfig::for_grid(&g), 0.45, 25)?;
    let a = barenblatt_exponent(3, p.m);
    println!("{:>8} {:>12} {:>12}", "t", "max u", "Barenblatt");
    for s in &traj.snapshots {
        let exact = barenblatt(g, p.m, t0 + s.t)?;
        println!("{:>8.3} {:>12.6} {:>12.6}", t0 + s.t, s.u.max_value(), exact.max_value());
    }
    println!("expected peak exponent {a}");
    Ok(())
}
