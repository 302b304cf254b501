//! Sup of `||u||_m^m` against its a-priori bound as chi approaches chi_c.
//!
//! cargo run --release --example chi_sweep -- [workers]

use ksflow::runner::{sweep, Axis};
use ksflow::scenario::Scenario;

fn main() -> ksflow::Result<()> {
    let workers = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let s = Scenario::load(std::path::Path::new("scenarios/reference.cfg"))?;
    let out = std::env::temp_dir().join("ksflow-chi-sweep");
    let rep = sweep(&s, Axis::Chi, &[0.25, 0.5, 0.75, 0.9, 0.99], &out, workers)?;
    println!("{:>8} {:>14} {:>14} {:>8}", "chi/chi_c", "sup ||u||^m", "bound", "ratio");
    for m in &rep.members {
        let (sup, bound) = (m.sup_lm_pow.unwrap_or(f64::NAN), m.lm_bound.unwrap_or(f64::NAN));
        println!("{:>8} {:>14.6} {:>14.6} {:>8.4}", m.chi_fraction, sup, bound, sup / bound);
    }
    Ok(())
}
