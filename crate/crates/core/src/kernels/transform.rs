//! Separable multi-dimensional FFT and DCT passes over row-major cubes.

use rayon::prelude::*;
use rustdct::DctPlanner;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Applies `f` to every line along every axis of an `n^d` cube.
fn for_each_line<T: Copy + Default + Send + Sync>(
    buf: &mut [T],
    n: usize,
    d: usize,
    f: &(dyn Fn(&mut [T]) + Sync),
) {
    for axis in 0..d {
        let st = n.pow((d - 1 - axis) as u32);
        if st == 1 {
            buf.par_chunks_mut(n).for_each(|line| f(line));
            continue;
        }
        let block = st * n;
        buf.par_chunks_mut(block).for_each(|blk| {
            let mut line = vec![T::default(); n];
            for off in 0..st {
                for j in 0..n {
                    line[j] = blk[off + j * st];
                }
                f(&mut line);
                for j in 0..n {
                    blk[off + j * st] = line[j];
                }
            }
        });
    }
}

/// Unnormalized forward or inverse FFT over an `n^d` cube.
pub fn fft_nd(buf: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let f = move |line: &mut [Complex64]| plan.process(line);
    for_each_line(buf, n, d, &f);
}

/// DCT-II along every axis.
pub fn dct2_nd(buf: &mut [f64], n: usize, d: usize) {
    let plan = DctPlanner::new().plan_dct2(n);
    let f = move |line: &mut [f64]| plan.process_dct2(line);
    for_each_line(buf, n, d, &f);
}

/// DCT-III along every axis; `dct3_nd(dct2_nd(x))` returns `(n/2)^d x`.
pub fn dct3_nd(buf: &mut [f64], n: usize, d: usize) {
    let plan = DctPlanner::new().plan_dct3(n);
    let f = move |line: &mut [f64]| plan.process_dct3(line);
    for_each_line(buf, n, d, &f);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let (n, d) = (8, 3);
        let orig: Vec<Complex64> = (0..n * n * n).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let mut b = orig.clone();
        fft_nd(&mut b, n, d, false);
        fft_nd(&mut b, n, d, true);
        let s = (n * n * n) as f64;
        for (x, y) in orig.iter().zip(&b) {
            assert!((x - y / s).norm() < 1e-12);
        }
    }

    #[test]
    fn dct_round_trip_scaling() {
        let (n, d) = (8, 3);
        let orig: Vec<f64> = (0..n * n * n).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut b = orig.clone();
        dct2_nd(&mut b, n, d);
        dct3_nd(&mut b, n, d);
        let s = (n as f64 / 2.0).powi(3);
        for (x, y) in orig.iter().zip(&b) {
            assert!((x - y / s).abs() < 1e-12);
        }
    }
}
