//! Runs a scenario file and prints its invariants.
//!
//! cargo run --release --example run_scenario -- [scenario] [out]

use std::path::PathBuf;

use ksflow::runner;
use ksflow::scenario::Scenario;

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("scenarios/reference.cfg"));
    let out = args.get(2).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("ksflow-run"));
    let s = Scenario::load(&path)?;
    println!("{} (hash {})", s.name, &s.hash()[..12]);
    let run = runner::run(&s, &out)?;
    for i in &run.summary.invariants {
        println!("  {}", i.line());
    }
    if let Some(t) = &run.trajectory {
        println!("{:>8} {:>14} {:>14} {:>12}", "t", "energy", "||u||_m", "max u");
        for d in &t.series {
            println!("{:>8.4} {:>14.8} {:>14.8} {:>12.6}", d.t, d.energy.total, d.lm_norm, d.max_density);
        }
    }
    println!("{:?}, artifacts in {}", run.summary.status, run.dir.display());
    Ok(())
}
