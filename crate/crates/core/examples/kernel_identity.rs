//! Residual of `-Laplacian S + alpha S = u` for the lattice and radial kernels.
//!
//! cargo run --release --example kernel_identity -- [box points] [radial points]

use ksflow::kernels::bessel_residual;
use ksflow::{DensityField, GridSpec};

fn main() -> ksflow::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let nb = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let nr = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(256);
    let cube = GridSpec::full_box(3, 4.0, nb)?;
    let radial = GridSpec::radial(3, 8.0, nr)?;
    for alpha in [0.0, 0.5, 1.0, 4.0] {
        let b = bessel_residual(&DensityField::gaussian(cube, 0.6, &[0.0; 3])?, alpha)?;
        let r = bessel_residual(&DensityField::gaussian(radial, 0.5, &[])?, alpha)?;
        println!("alpha = {alpha:<4} box {nb}^3: {b:.3e}  radial {nr}: {r:.3e}");
    }
    Ok(())
}
