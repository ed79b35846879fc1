//! Small dense kernels for element-level matrices (order <= 17).
//!
//! Matrices are row-major `Vec<f64>` with an explicit dimension.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() <= 8 {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mut acc = CompensatedSum::default();
    for (x, y) in a.iter().zip(b) {
        acc.add(x * y);
    }
    acc.value()
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or the failing row.
pub(crate) fn cholesky(a: &[f64], dim: usize) -> Result<Vec<f64>, usize> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut s = a[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(i);
                }
                l[i * dim + i] = s.sqrt();
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b` in place.
pub(crate) fn forward_substitute(l: &[f64], dim: usize, b: &mut [f64]) {
    for i in 0..dim {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * dim + k] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
}

/// Solves `L^T x = b` in place.
pub(crate) fn backward_substitute(l: &[f64], dim: usize, b: &mut [f64]) {
    for i in (0..dim).rev() {
        let mut s = b[i];
        for k in i + 1..dim {
            s -= l[k * dim + i] * b[k];
        }
        b[i] = s / l[i * dim + i];
    }
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// Returns eigenvalues (unsorted) and eigenvectors stored as columns of a
/// row-major matrix.
pub(crate) fn jacobi_eigen(a: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * dim + j] * m[i * dim + j])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-3 * norm || off == 0.0 {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k * dim + p];
                    let mkq = m[k * dim + q];
                    m[k * dim + p] = c * mkp - s * mkq;
                    m[k * dim + q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p * dim + k];
                    let mqk = m[q * dim + k];
                    m[p * dim + k] = c * mpk - s * mqk;
                    m[q * dim + k] = s * mpk + c * mqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..dim).map(|i| m[i * dim + i]).collect();
    (vals, v)
}

/// Generalized symmetric-definite eigenproblem `A x = lambda C x`.
///
/// Eigenvalues ascending; eigenvectors are the columns of the returned
/// row-major matrix, normalized so that `x^T C x = 1`.
pub(crate) fn generalized_eigen(a: &[f64], c: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>), usize> {
    if dim == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let l = cholesky(c, dim)?;
    // M = L^{-1} A L^{-T}
    let mut tmp = a.to_vec();
    for col in 0..dim {
        let mut column: Vec<f64> = (0..dim).map(|r| tmp[r * dim + col]).collect();
        forward_substitute(&l, dim, &mut column);
        for r in 0..dim {
            tmp[r * dim + col] = column[r];
        }
    }
    for row in 0..dim {
        let r = &mut tmp[row * dim..(row + 1) * dim];
        forward_substitute(&l, dim, r);
    }
    for i in 0..dim {
        for j in 0..i {
            let s = 0.5 * (tmp[i * dim + j] + tmp[j * dim + i]);
            tmp[i * dim + j] = s;
            tmp[j * dim + i] = s;
        }
    }
    let (vals, vecs) = jacobi_eigen(&tmp, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let mut out_vals = Vec::with_capacity(dim);
    let mut out_vecs = vec![0.0; dim * dim];
    for (dst, &src) in order.iter().enumerate() {
        out_vals.push(vals[src]);
        let mut y: Vec<f64> = (0..dim).map(|r| vecs[r * dim + src]).collect();
        backward_substitute(&l, dim, &mut y);
        let cy = mat_vec(c, dim, &y);
        let scale = compensated_dot(&cy, &y).sqrt();
        for r in 0..dim {
            out_vecs[r * dim + dst] = y[r] / scale;
        }
    }
    Ok((out_vals, out_vecs))
}

pub(crate) fn mat_vec(a: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    (0..dim).map(|i| compensated_dot(&a[i * dim..(i + 1) * dim], x)).collect()
}
