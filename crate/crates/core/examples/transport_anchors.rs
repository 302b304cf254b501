//! Exact radial W2 against the debiased Sinkhorn estimate on random pairs.
//!
//! cargo run --release --example transport_anchors -- [pairs] [seed]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ksflow::transport::{w2_radial, w2_sinkhorn, SinkhornConfig};
use ksflow::{DensityField, GridSpec};

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let pairs = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let g = GridSpec::radial(3, 4.0, 128)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bump = || {
        let (c, w): (f64, f64) = (rng.gen_range(0.3..2.5), rng.gen_range(0.25..0.8));
        DensityField::from_fn(g, |r| (-(r - c).powi(2) / (2.0 * w * w)).exp())
            .and_then(|u| DensityField::probability(g, u.into_values()))
    };
    let cfg = SinkhornConfig { max_iter: 5000, ..SinkhornConfig::for_grid(&g) };
    println!("epsilon = {:.3e}", cfg.epsilon);
    println!("{:>14} {:>14} {:>10}", "exact", "sinkhorn", "rel. err");
    for _ in 0..pairs {
        let (a, b) = (bump()?, bump()?);
        let exact = w2_radial(&a, &b)?.w2_squared;
        let ent = w2_sinkhorn(&a, &b, &cfg)?.w2_squared;
        println!("{exact:>14.6e} {ent:>14.6e} {:>10.3e}", (ent - exact).abs() / exact);
    }
    Ok(())
}
