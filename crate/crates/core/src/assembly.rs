//! Load vectors, manufactured solutions and discrete error norms.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::element::BasisTable;
use crate::error::{Error, Result};
use crate::grid::{Mesh1D, TensorField, TensorMesh};

/// A real function on the closed box.
pub trait ScalarField: Sync {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Largest supported number of axes for point evaluation.
pub const MAX_AXES: usize = 8;

fn check_axes(mesh: &TensorMesh) -> Result<()> {
    if mesh.ndim() > MAX_AXES {
        return Err(Error::InvalidMesh(format!("at most {MAX_AXES} axes are supported, got {}", mesh.ndim())));
    }
    Ok(())
}

/// Sparse map from quadrature samples of one axis to its degrees of freedom.
struct AxisProjection {
    samples: usize,
    /// Row `dof`: `(sample, weight)` pairs.
    rows: Vec<Vec<(usize, f64)>>,
    coordinates: Vec<f64>,
}

impl AxisProjection {
    fn new(axis: &Mesh1D, points: usize) -> Result<Self> {
        let n = axis.order();
        let table = BasisTable::with_quadrature(n, points)?;
        let q = table.quadrature.len();
        let h = axis.h();
        let mut rows = vec![Vec::with_capacity(2 * q); axis.dim()];
        let mut coordinates = Vec::with_capacity(axis.elements() * q);
        for e in 0..axis.elements() {
            for (s, xi) in table.quadrature.nodes.iter().enumerate() {
                coordinates.push(h * (e as f64 + 0.5 * (xi + 1.0)));
                let w = table.quadrature.weights[s];
                for m in 0..=n {
                    let Some(dof) = (e * n + m).checked_sub(1).filter(|&d| d < axis.dim()) else {
                        continue;
                    };
                    rows[dof].push((e * q + s, w * table.value(s, m)));
                }
            }
        }
        Ok(Self { samples: axis.elements() * q, rows, coordinates })
    }

    /// Contracts `axis` of `input` (length `samples`) to the DOF dimension.
    fn apply(&self, input: &TensorField, axis: usize) -> TensorField {
        let shape = input.shape();
        debug_assert_eq!(shape[axis], self.samples);
        let inner: usize = shape[axis + 1..].iter().product();
        let dim = self.rows.len();
        let mut out_shape = shape.to_vec();
        out_shape[axis] = dim;
        let mut out = TensorField::zeros(&out_shape);
        let src = input.data();
        let slab_in = self.samples * inner;
        if inner == 1 {
            out.data_mut().par_chunks_mut(dim).enumerate().for_each(|(o, row)| {
                let line = &src[o * slab_in..(o + 1) * slab_in];
                for (y, terms) in row.iter_mut().zip(&self.rows) {
                    *y = terms.iter().map(|&(s, w)| w * line[s]).sum();
                }
            });
        } else {
            out.data_mut().par_chunks_mut(inner).enumerate().for_each(|(r, row)| {
                let (o, dof) = (r / dim, r % dim);
                for &(s, w) in &self.rows[dof] {
                    let start = o * slab_in + s * inner;
                    for (y, x) in row.iter_mut().zip(&src[start..start + inner]) {
                        *y += w * x;
                    }
                }
            });
        }
        out
    }
}

/// `f^h = Π_i (2/h_i) ∫ f φ` with the `(n+1)`-point Gauss rule per axis.
pub fn assemble_rhs(mesh: &TensorMesh, f: &impl ScalarField) -> Result<TensorField> {
    assemble_rhs_with(mesh, f, mesh.order() + 1)
}

/// [`assemble_rhs`] with `points` Gauss points per element and axis.
///
/// The element Jacobian `h_i/2` cancels against the scaling, leaving
/// `Σ_q w_q f(x_q) φ(x_q)` per element.
pub fn assemble_rhs_with(mesh: &TensorMesh, f: &impl ScalarField, points: usize) -> Result<TensorField> {
    if points == 0 {
        return Err(Error::InvalidProblem("quadrature needs at least one point".into()));
    }
    check_axes(mesh)?;
    let proj: Vec<AxisProjection> =
        mesh.axes().iter().map(|a| AxisProjection::new(a, points)).collect::<Result<_>>()?;
    let shape: Vec<usize> = proj.iter().map(|p| p.samples).collect();
    let mut field = TensorField::from_fn(&shape, |idx| {
        let mut x = [0.0; MAX_AXES];
        for (a, &i) in idx.iter().enumerate() {
            x[a] = proj[a].coordinates[i];
        }
        f.value(&x[..idx.len()])
    });
    // Contract the last axis first: every step shrinks the largest stride.
    for axis in (0..mesh.ndim()).rev() {
        field = proj[axis].apply(&field, axis);
    }
    Ok(field)
}

/// Nodal values of `u` at the degrees of freedom.
pub fn interpolant(mesh: &TensorMesh, u: &impl ScalarField) -> Result<TensorField> {
    check_axes(mesh)?;
    let coords: Vec<Vec<f64>> = mesh.axes().iter().map(Mesh1D::coordinates).collect();
    Ok(TensorField::from_fn(&mesh.shape(), |idx| {
        let mut x = [0.0; MAX_AXES];
        for (a, &i) in idx.iter().enumerate() {
            x[a] = coords[a][i];
        }
        u.value(&x[..idx.len()])
    }))
}

/// `max |v - u|` over the degrees of freedom.
pub fn error_uniform(mesh: &TensorMesh, v: &TensorField, u: &impl ScalarField) -> Result<f64> {
    if v.shape() != mesh.shape().as_slice() {
        return Err(Error::ShapeMismatch(format!("expected {:?}, got {:?}", mesh.shape(), v.shape())));
    }
    let exact = interpolant(mesh, u)?;
    Ok(v.data().par_iter().zip(exact.data()).map(|(a, b)| (a - b).abs()).reduce(|| 0.0, f64::max))
}

/// `-Δu + u = f` on the unit square with
/// `u = sin(πx₁) sin(πx₂) (x₁ + x₂ - 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Manufactured2D;

impl Manufactured2D {
    pub const ALPHA: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;

    pub fn u(x: &[f64]) -> f64 {
        (PI * x[0]).sin() * (PI * x[1]).sin() * (x[0] + x[1] - 1.0)
    }

    pub fn f(x: &[f64]) -> f64 {
        let (s1, c1) = (PI * x[0]).sin_cos();
        let (s2, c2) = (PI * x[1]).sin_cos();
        (2.0 * PI * PI + 1.0) * Self::u(x) - 2.0 * PI * (c1 * s2 + s1 * c2)
    }

    /// Largest mismatch between `f` and a central-difference `-Δu + u` at
    /// a fixed set of interior points, relative to `max |f|` there.
    pub fn finite_difference_check() -> f64 {
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for &(a, b) in &[(0.3, 0.7), (0.11, 0.42), (0.77, 0.23), (0.5, 0.9), (0.64, 0.58)] {
            let u = |x: f64, y: f64| Self::u(&[x, y]);
            let lap = (u(a + h, b) + u(a - h, b) + u(a, b + h) + u(a, b - h) - 4.0 * u(a, b)) / (h * h);
            let f = Self::f(&[a, b]);
            worst = worst.max((-lap + u(a, b) - f).abs() / f.abs().max(1.0));
        }
        worst
    }
}

/// The same family on a box `Π [0, Xᵢ]` with any shift `α`:
/// `u = Π sin(π yᵢ) (Σ yᵢ - 1)`, `yᵢ = xᵢ / Xᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedBox {
    lengths: Vec<f64>,
    alpha: f64,
}

impl ManufacturedBox {
    pub fn new(lengths: Vec<f64>, alpha: f64) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > MAX_AXES {
            return Err(Error::InvalidProblem(format!("1 to {MAX_AXES} axes are supported, got {}", lengths.len())));
        }
        if lengths.iter().any(|x| !(x.is_finite() && *x > 0.0)) || !alpha.is_finite() {
            return Err(Error::InvalidProblem(format!("box {lengths:?} with α = {alpha}")));
        }
        Ok(Self { lengths, alpha })
    }

    pub fn for_mesh(mesh: &TensorMesh, alpha: f64) -> Result<Self> {
        Self::new(mesh.axes().iter().map(|a| a.length()).collect(), alpha)
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn u(&self, x: &[f64]) -> f64 {
        let mut prod = 1.0;
        let mut lin = -1.0;
        for (xi, li) in x.iter().zip(&self.lengths) {
            prod *= (PI * xi / li).sin();
            lin += xi / li;
        }
        prod * lin
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        let d = self.lengths.len();
        let mut sines = [0.0; MAX_AXES];
        let mut cosines = [0.0; MAX_AXES];
        let mut lin = -1.0;
        for i in 0..d {
            let y = x[i] / self.lengths[i];
            (sines[i], cosines[i]) = (PI * y).sin_cos();
            lin += y;
        }
        let prod: f64 = sines[..d].iter().product();
        let mut out = self.alpha * prod * lin;
        for i in 0..d {
            let others: f64 = (0..d).filter(|&j| j != i).map(|j| sines[j]).product();
            let li = self.lengths[i];
            out += (PI / li).powi(2) * prod * lin - 2.0 * PI / (li * li) * cosines[i] * others;
        }
        out
    }

    /// Central-difference consistency of `f` with `-Δu + αu` at a few interior
    /// points, relative to `max(|f|, 1)` there.
    pub fn finite_difference_check(&self) -> f64 {
        let d = self.lengths.len();
        let fractions = [0.3, 0.11, 0.77, 0.5, 0.64];
        let mut worst: f64 = 0.0;
        for s in 0..fractions.len() {
            let x: Vec<f64> = (0..d).map(|i| fractions[(s + 2 * i) % fractions.len()] * self.lengths[i]).collect();
            let u0 = self.u(&x);
            let mut lap = 0.0;
            for i in 0..d {
                let h = 1e-4 * self.lengths[i];
                let mut p = x.clone();
                p[i] += h;
                let up = self.u(&p);
                p[i] -= 2.0 * h;
                lap += (up + self.u(&p) - 2.0 * u0) / (h * h);
            }
            let f = self.f(&x);
            worst = worst.max((-lap + self.alpha * u0 - f).abs() / f.abs().max(1.0));
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_and_constant_loads() {
        let mesh = TensorMesh::uniform(1, 5, 1, 1.0).unwrap();
        let zero = assemble_rhs(&mesh, &|_: &[f64]| 0.0).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let one = assemble_rhs(&mesh, &|_: &[f64]| 1.0).unwrap();
        for v in one.data() {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn separable_loads_factor() {
        let axes = vec![Mesh1D::new(4, 3, 2.0).unwrap(), Mesh1D::new(5, 3, 0.5).unwrap()];
        let mesh = TensorMesh::new(axes.clone()).unwrap();
        let g = |t: f64| (1.3 * t).sin() + t * t;
        let h = |t: f64| (-t).exp();
        let full = assemble_rhs(&mesh, &|x: &[f64]| g(x[0]) * h(x[1])).unwrap();
        let gx = assemble_rhs(&TensorMesh::new(vec![axes[0].clone()]).unwrap(), &|x: &[f64]| g(x[0])).unwrap();
        let hy = assemble_rhs(&TensorMesh::new(vec![axes[1].clone()]).unwrap(), &|x: &[f64]| h(x[0])).unwrap();
        for i in 0..gx.len() {
            for j in 0..hy.len() {
                let expected = gx.data()[i] * hy.data()[j];
                assert!((full.get(&[i, j]) - expected).abs() < 1e-13 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn quadrature_order_independence_for_polynomials() {
        for n in 1..=4 {
            let mesh = TensorMesh::new(vec![Mesh1D::new(3, n, 1.0).unwrap(), Mesh1D::new(4, n, 0.5).unwrap()]).unwrap();
            let f = |x: &[f64]| x[0].powi(n as i32) - 2.0 * x[1].powi(n as i32) * x[0] + 0.3;
            let a = assemble_rhs_with(&mesh, &f, n + 1).unwrap();
            let b = assemble_rhs_with(&mesh, &f, n + 3).unwrap();
            let scale = b.max_abs();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn projection_matches_per_dof_integrals() {
        // Independent route: integrate f·φ_dof with a fine rule on each element.
        let mesh = TensorMesh::uniform(1, 3, 2, 1.5).unwrap();
        let axis = &mesh.axes()[0];
        let f = |x: &[f64]| (3.0 * x[0]).exp();
        let g = assemble_rhs_with(&mesh, &f, 12).unwrap();
        let fine = crate::quadrature::GaussLegendre::new(30);
        let basis = &axis.element().basis;
        for dof in 0..axis.dim() {
            let mut s = 0.0;
            for e in 0..3 {
                for m in 0..=2 {
                    if e * 2 + m != dof + 1 {
                        continue;
                    }
                    for (xi, w) in fine.nodes.iter().zip(&fine.weights) {
                        let x = axis.h() * (e as f64 + 0.5 * (xi + 1.0));
                        s += w * f(&[x]) * basis.eval(m, *xi);
                    }
                }
            }
            assert!((g.data()[dof] - s).abs() < 1e-12 * s.abs());
        }
    }

    #[test]
    fn manufactured_case_boundary_and_center() {
        for t in [0.0, 0.3, 1.0] {
            assert!(Manufactured2D::u(&[0.0, t]).abs() < 1e-15);
            assert!(Manufactured2D::u(&[t, 0.0]).abs() < 1e-15);
            assert!(Manufactured2D::u(&[1.0, t]).abs() < 1e-15);
        }
        assert_eq!(Manufactured2D::u(&[0.5, 0.5]), 0.0);
        assert!(Manufactured2D::finite_difference_check() < 1e-6);
    }

    #[test]
    fn box_family_reduces_to_the_square_case() {
        let b = ManufacturedBox::new(vec![1.0, 1.0], Manufactured2D::ALPHA).unwrap();
        for x in [[0.3, 0.7], [0.12, 0.5], [0.9, 0.05]] {
            assert!((b.u(&x) - Manufactured2D::u(&x)).abs() < 1e-15);
            assert!((b.f(&x) - Manufactured2D::f(&x)).abs() < 1e-12);
        }
        for (lengths, alpha) in [(vec![2.0], 0.0), (vec![1.0, 0.5, 3.0], 4.5), (vec![0.7, 1.3], -1.0)] {
            let b = ManufacturedBox::new(lengths.clone(), alpha).unwrap();
            assert!(b.finite_difference_check() < 1e-6, "{lengths:?}");
            let corner: Vec<f64> = lengths.iter().map(|l| l * 0.999_999_999_9).collect();
            assert!(b.u(&corner).abs() < 1e-8);
        }
        assert!(ManufacturedBox::new(vec![], 1.0).is_err());
        assert!(ManufacturedBox::new(vec![1.0, -1.0], 1.0).is_err());
    }

    #[test]
    fn interpolation_error_decreases() {
        let u = |x: &[f64]| Manufactured2D::u(x);
        let mut prev = f64::INFINITY;
        for k in [4, 8, 16] {
            let mesh = TensorMesh::uniform(2, k, 2, 1.0).unwrap();
            let v = interpolant(&mesh, &u).unwrap();
            assert_eq!(error_uniform(&mesh, &v, &u).unwrap(), 0.0);
            let coarse = TensorField::from_vec(
                &mesh.shape(),
                v.data().iter().map(|x| x * (1.0 + 1.0 / (k * k) as f64)).collect(),
            )
            .unwrap();
            let e = error_uniform(&mesh, &coarse, &u).unwrap();
            assert!(e < prev);
            prev = e;
        }
    }
}
