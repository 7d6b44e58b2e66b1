#![allow(dead_code)]

use nalgebra::DMatrix;
use pco_core::topology::Topology;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `p`.
pub fn random_connected_edges(n: usize, p: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((rng.gen_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.gen_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Connected topology with at least one node hearing the cue.
pub fn random_topology(n: usize, seed: u64) -> Topology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let edges = random_connected_edges(n, rng.gen_range(0.0..0.6), seed);
    let mut gains: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.005..0.05) } else { 0.0 })
        .collect();
    let k = rng.gen_range(0..n);
    gains[k] = rng.gen_range(0.005..0.05);
    Topology::new(n, &edges, gains, rng.gen_range(0.005..0.05), 1.0).unwrap()
}

/// Random symmetric matrix with entries in `[-1, 1]`.
pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    a
}

/// Characteristic polynomial coefficients `c_0..c_n` of `det(λI − A)`, highest
/// degree first, by the Faddeev–LeVerrier recursion.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        let prev = *coeffs.last().unwrap();
        m = a * &m + DMatrix::identity(n, n) * prev;
        let c = -(a * &m).trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of the characteristic polynomial, found by scanning the
/// Gershgorin interval for sign changes and bisecting each bracket.
pub fn char_poly_roots(a: &DMatrix<f64>, scan: usize) -> Vec<f64> {
    let n = a.nrows();
    let coeffs = char_poly(a);
    let radius = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
        + 1e-9;
    let h = 2.0 * radius / scan as f64;
    let mut roots = Vec::new();
    let mut x0 = -radius;
    let mut f0 = horner(&coeffs, x0);
    for k in 1..=scan {
        let x1 = -radius + k as f64 * h;
        let f1 = horner(&coeffs, x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            let (mut lo, mut hi, mut flo) = (x0, x1, f0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = horner(&coeffs, mid);
                if fm == 0.0 || hi - lo < 1e-15 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x0 = x1;
        f0 = f1;
    }
    roots
}
