//! Halves the step size on the reference scenario and prints the Cauchy gaps
//! and time-modulus constants.
//!
//! cargo run --release --example h_ladder -- [workers]

use ksflow::runner::{sweep, Axis};
use ksflow::scenario::Scenario;

fn main() -> ksflow::Result<()> {
    let workers = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let s = Scenario::load(std::path::Path::new("scenarios/reference.cfg"))?;
    let out = std::env::temp_dir().join("ksflow-h-ladder");
    let rep = sweep(&s, Axis::H, &[4e-3, 2e-3, 1e-3, 5e-4], &out, workers)?;
    println!("{:>8} {:>14} {:>12} {:>12} {:>12}", "h", "gap to h/2", "v modulus", "u modulus", "oracle gap");
    let show = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.4e}"));
    for m in &rep.members {
        println!(
            "{:>8} {:>14} {:>12} {:>12} {:>12}",
            m.value,
            show(m.gap_to_next),
            show(m.v_modulus),
            show(m.u_modulus),
            show(m.oracle_gap)
        );
    }
    println!("gaps decrease: {:?}", rep.trend);
    Ok(())
}
