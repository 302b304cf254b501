//! Green function of `alpha - Laplacian` on the unit cubic lattice `Z^d`.
//!
//! `G(n) = int_0^inf exp(-alpha s) prod_j exp(-2s) I_{n_j}(2s) ds`, evaluated by
//! Simpson's rule in `t = ln s`. The scaled modified Bessel functions come from
//! Miller's backward recurrence at moderate arguments and from the Hankel
//! expansion at large ones.

use rayon::prelude::*;

const S_LO: f64 = 1e-6;
const S_FAR: f64 = 1e30;
const DT: f64 = 0.02;

/// `exp(-x) I_k(x)` for `k = 0..=kmax`.
pub fn scaled_bessel_i(kmax: usize, x: f64) -> Vec<f64> {
    if x == 0.0 {
        let mut v = vec![0.0; kmax + 1];
        v[0] = 1.0;
        return v;
    }
    let start = kmax + (80.0 * x).sqrt() as usize + 20;
    let mut out = vec![0.0; kmax + 1];
    let (mut above, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = above + 2.0 * k as f64 / x * cur;
        if k <= kmax {
            out[k] = cur;
        }
        norm += 2.0 * cur;
        above = cur;
        cur = below;
        if cur > 1e250 {
            cur *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    out[0] = cur;
    norm += cur;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Hankel expansion of `exp(-x) I_k(x)` for large `x`.
fn scaled_bessel_i_asymptotic(kmax: usize, x: f64) -> Vec<f64> {
    let pre = 1.0 / (2.0 * std::f64::consts::PI * x).sqrt();
    (0..=kmax)
        .map(|k| {
            let mu = 4.0 * (k * k) as f64;
            let mut term = 1.0;
            let mut sum = 1.0;
            for j in 1..30 {
                let odd = (2 * j - 1) as f64;
                term *= -(mu - odd * odd) / (j as f64 * 8.0 * x);
                sum += term;
                if term.abs() < 1e-17 {
                    break;
                }
            }
            pre * sum
        })
        .collect()
}

/// All non-increasing `d`-tuples with entries in `0..=nmax`.
fn sorted_tuples(d: usize, nmax: usize) -> Vec<Vec<usize>> {
    fn rec(d: usize, cap: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for v in 0..=cap {
            cur.push(v);
            rec(d, v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, nmax, &mut Vec::new(), &mut out);
    out
}

/// Dense table of `G` over offsets with every component in `0..=nmax`,
/// indexed row-major with `nmax + 1` entries per axis.
pub fn lattice_green_table(d: usize, nmax: usize, alpha: f64) -> Vec<f64> {
    assert!(alpha > 0.0 || d >= 3, "lattice Green function diverges for d < 3 at alpha = 0");
    let s_switch = (1e4f64).max(4.0 * (nmax * nmax) as f64);
    let s_hi = if alpha > 0.0 { (45.0 / alpha).min(S_FAR) } else { S_FAR };
    let t0 = S_LO.ln();
    let t1 = s_hi.ln().max(t0 + 4.0 * DT);
    let mut steps = ((t1 - t0) / DT).ceil() as usize;
    steps += steps % 2;
    let dt = (t1 - t0) / steps as f64;

    // Per node: Simpson weight times ds/dt times exp(-alpha s), and g_k(s).
    let nodes: Vec<(f64, Vec<f64>)> = (0..=steps)
        .into_par_iter()
        .map(|i| {
            let t = t0 + i as f64 * dt;
            let s = t.exp();
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let g = if s <= s_switch {
                scaled_bessel_i(nmax, 2.0 * s)
            } else {
                scaled_bessel_i_asymptotic(nmax, 2.0 * s)
            };
            (w * dt / 3.0 * s * (-alpha * s).exp(), g)
        })
        .collect();

    let tail = if alpha == 0.0 {
        let h = d as f64 / 2.0;
        (4.0 * std::f64::consts::PI).powf(-h) * s_hi.powf(1.0 - h) / (h - 1.0)
    } else {
        0.0
    };

    let tuples = sorted_tuples(d, nmax);
    let vals: Vec<f64> = tuples
        .par_iter()
        .map(|tp| {
            let mut acc = 0.0;
            for (w, g) in &nodes {
                let mut p = *w;
                for &k in tp {
                    p *= g[k];
                }
                acc += p;
            }
            if tp.iter().all(|&k| k == 0) {
                acc += S_LO;
            }
            acc + tail
        })
        .collect();

    let side = nmax + 1;
    let mut table = vec![0.0; side.pow(d as u32)];
    let mut idx = vec![0usize; d];
    for i in 0..table.len() {
        let mut r = i;
        for k in (0..d).rev() {
            idx[k] = r % side;
            r /= side;
        }
        let mut key = idx.clone();
        key.sort_unstable_by(|a, b| b.cmp(a));
        table[i] = vals[tuple_rank(&key, nmax)];
    }
    table
}

/// Position of a non-increasing tuple within `sorted_tuples` order.
fn tuple_rank(key: &[usize], nmax: usize) -> usize {
    // Number of non-increasing tuples of length `len` with entries <= cap.
    fn count(len: usize, cap: usize) -> usize {
        // C(cap + len, len)
        let mut c: usize = 1;
        for i in 0..len {
            c = c * (cap + 1 + i) / (i + 1);
        }
        c
    }
    debug_assert!(key.iter().all(|&v| v <= nmax));
    let mut rank = 0;
    for (pos, &v) in key.iter().enumerate() {
        let rem = key.len() - pos - 1;
        for smaller in 0..v {
            rank += count(rem, smaller);
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_sums_to_one() {
        for x in [0.01, 1.0, 30.0, 500.0] {
            let g = scaled_bessel_i(400, x);
            let s = g[0] + 2.0 * g[1..].iter().sum::<f64>();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn bessel_known_values() {
        // I_0(1) = 1.2660658777520082, I_1(1) = 0.5651591039924851
        let g = scaled_bessel_i(3, 1.0);
        let e = (-1.0f64).exp();
        assert!((g[0] - 1.2660658777520082 * e).abs() < 1e-15);
        assert!((g[1] - 0.5651591039924851 * e).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_matches_recurrence() {
        let x = 4e4;
        let a = scaled_bessel_i(50, x);
        let b = scaled_bessel_i_asymptotic(50, x);
        for k in 0..=50 {
            assert!(((a[k] - b[k]) / a[k]).abs() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn ranks_are_consistent() {
        let t = sorted_tuples(3, 5);
        for (i, tp) in t.iter().enumerate() {
            assert_eq!(tuple_rank(tp, 5), i);
        }
    }

    #[test]
    fn watson_integral() {
        // Simple cubic lattice Green function at the origin.
        let g = lattice_green_table(3, 2, 0.0);
        assert!((g[0] - 0.252_731_009_858_663).abs() < 1e-10, "{}", g[0]);
    }

    #[test]
    fn solves_lattice_equation() {
        for alpha in [0.0, 0.3] {
            let n = 6;
            let g = lattice_green_table(3, n, alpha);
            let side = n + 1;
            let at = |a: i64, b: i64, c: i64| {
                g[(a.unsigned_abs() as usize * side + b.unsigned_abs() as usize) * side
                    + c.unsigned_abs() as usize]
            };
            for (a, b, c) in [(0, 0, 0), (1, 0, 0), (2, 1, 0), (3, 2, 1)] {
                let lap = at(a + 1, b, c) + at(a - 1, b, c) + at(a, b + 1, c) + at(a, b - 1, c)
                    + at(a, b, c + 1)
                    + at(a, b, c - 1)
                    - 6.0 * at(a, b, c);
                let r = alpha * at(a, b, c) - lap;
                let want = if (a, b, c) == (0, 0, 0) { 1.0 } else { 0.0 };
                assert!((r - want).abs() < 1e-10, "alpha={alpha} {:?}: {r}", (a, b, c));
            }
        }
    }
}
