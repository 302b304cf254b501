//! The coarse-grid invariant suite, as run by `ksflow validate`.
//!
//! cargo run --release --example validate_suite -- [workers]

use ksflow::runner::validate;

fn main() -> ksflow::Result<()> {
    let workers = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let rep = validate(&std::env::temp_dir().join("ksflow-validate"), 0, workers)?;
    for l in rep.lines().iter().filter(|l| !l.contains("PASS")) {
        println!("{l}");
    }
    println!("{} anchors, {} runs: {:?} in {:.1} s", rep.checks.len(), rep.runs.len(), rep.status, rep.seconds);
    Ok(())
}
