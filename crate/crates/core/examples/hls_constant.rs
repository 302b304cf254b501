//! Estimates the HLS constant and the critical sensitivity for d = 3.
//!
//! cargo run --release --example hls_constant -- [points] [levels] [d]

use ksflow::hls::{estimate_c_hls, HlsSearchConfig};

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let points = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let levels = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2);
    let d = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = HlsSearchConfig { points, levels, ..Default::default() };
    let est = estimate_c_hls(d, &cfg)?;
    for e in &est.refinement {
        println!(
            "N = {:5}  estimate = {:.10}  family best = {:.10}  change = {:?}  scf iters = {} converged = {}",
            e.points, e.estimate, e.best_family_ratio, e.relative_change, e.iterations, e.converged
        );
    }
    println!("d = {d}  c_hls = {:.10}  chi_c = {:.10}", est.c_hls, est.chi_c);
    println!("{}", serde_json::to_string_pretty(&est)?);
    Ok(())
}
