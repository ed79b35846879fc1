//! Independent reference implementations used by the integration tests.
//!
//! Element matrices come from product-form Lagrange polynomials integrated
//! with a Golub–Welsch Gauss rule, global matrices from explicit dense
//! assembly, and all linear algebra from nalgebra.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss–Legendre rule from the eigen-decomposition of the Jacobi matrix.
pub fn golub_welsch(m: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(m, m, |i, k| {
        if i + 1 == k || k + 1 == i {
            let b = i.max(k) as f64;
            b / (4.0 * b * b - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> =
        (0..m).map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn lagrange_value(nodes: &[f64], l: usize, x: f64) -> f64 {
    nodes.iter().enumerate().filter(|&(m, _)| m != l).map(|(_, xm)| (x - xm) / (nodes[l] - xm)).product()
}

fn lagrange_derivative(nodes: &[f64], l: usize, x: f64) -> f64 {
    let denom: f64 = nodes.iter().enumerate().filter(|&(m, _)| m != l).map(|(_, xm)| nodes[l] - xm).product();
    let mut s = 0.0;
    for j in (0..nodes.len()).filter(|&j| j != l) {
        s += nodes.iter().enumerate().filter(|&(m, _)| m != l && m != j).map(|(_, xm)| x - xm).product::<f64>();
    }
    s / denom
}

/// Reference-element stiffness and mass matrices, row-major `(n+1)²`.
pub fn local_matrices(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
    let (xs, ws) = golub_welsch(n + 3);
    let d = n + 1;
    let mut a = vec![0.0; d * d];
    let mut c = vec![0.0; d * d];
    for (x, w) in xs.iter().zip(&ws) {
        let v: Vec<f64> = (0..d).map(|l| lagrange_value(&nodes, l, *x)).collect();
        let dv: Vec<f64> = (0..d).map(|l| lagrange_derivative(&nodes, l, *x)).collect();
        for k in 0..d {
            for l in 0..d {
                a[k * d + l] += w * dv[k] * dv[l];
                c[k * d + l] += w * v[k] * v[l];
            }
        }
    }
    (a, c)
}

/// Dense scaled 1D pencil `(𝒜, 𝒞)` on `K` elements.
pub fn global_pencil(k_el: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (a, c) = local_matrices(n);
    let dim = n * k_el - 1;
    let mut ga = DMatrix::zeros(dim, dim);
    let mut gc = DMatrix::zeros(dim, dim);
    for e in 0..k_el {
        for p in 0..=n {
            for q in 0..=n {
                let (gp, gq) = (e * n + p, e * n + q);
                if gp == 0 || gq == 0 || gp > dim || gq > dim {
                    continue;
                }
                ga[(gp - 1, gq - 1)] += a[p * (n + 1) + q];
                gc[(gp - 1, gq - 1)] += c[p * (n + 1) + q];
            }
        }
    }
    (ga, gc)
}

/// Ascending generalized eigenvalues of `A x = λ C x`.
pub fn generalized_eigenvalues(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Vec<f64> {
    let l = c.clone().cholesky().expect("mass matrix is positive definite").l();
    let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
    let m = &linv * a * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Dense 2D operator `s₀ 𝒜⊗𝒞 + s₁ 𝒞⊗𝒜 + α 𝒞⊗𝒞` for a square of `K×K`
/// elements with side `x`.
pub fn dense_operator_2d(k_el: usize, n: usize, x: f64, alpha: f64) -> DMatrix<f64> {
    let (a, c) = global_pencil(k_el, n);
    let h = x / k_el as f64;
    let s = 4.0 / (h * h);
    kron(&a, &c) * s + kron(&c, &a) * s + kron(&c, &c) * alpha
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `‖a - b‖∞ / ‖b‖∞`.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    d / max_abs(b)
}
