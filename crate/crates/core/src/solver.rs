//! Direct solvers for `-Δu + αu = f` on a tensor-product mesh.
//!
//! With `f^h = Π_i (2/h_i) ∫ f φ`, the discrete system reads
//!
//! ```text
//! L u = f^h,   L = Σ_i 4h_i⁻² 𝒜_i ⊗ (⊗_{j≠i} 𝒞_j) + α ⊗_j 𝒞_j.
//! ```
//!
//! Full diagonalization transforms every axis, divides by
//! `D = Σ_i 4h_i⁻² Λ_i + α` and transforms back. Partial diagonalization
//! transforms all axes but the first and solves the remaining banded
//! systems `(4h_0⁻² 𝒜_0 + μ 𝒞_0) v = g` directly.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::grid::{BandCholesky, Mesh1D, SymBand, TensorField, TensorMesh};
use crate::spectral::{self, SpectralBasis1D};
use crate::transform::FnPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    /// Diagonalize every axis.
    Full,
    /// Diagonalize all axes but the first; banded solves along it.
    Partial,
}

/// How the `𝒞⁻¹` factors of `F_n = N⁻¹Sᵀ𝒞` meet the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassHandling {
    /// `𝒞⁻¹` cancels against `𝒞`; apply `N⁻¹Sᵀ` directly.
    Fused,
    /// Solve with `𝒞` along each axis, then apply `F_n`.
    Explicit,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub algorithm: Algorithm,
    pub mass: MassHandling,
    /// Upper bound on bytes kept for precomputed shifted factors.
    pub factor_budget: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { algorithm: Algorithm::Full, mass: MassHandling::Fused, factor_budget: 256 << 20 }
    }
}

impl SolveOptions {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        Self { algorithm, ..Self::default() }
    }
}

/// Wall time spent in each phase of one solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    /// Forward and inverse `F_n` sweeps (including explicit mass solves).
    pub transforms: Duration,
    /// Division by the symbol, or the banded solves along the first axis.
    pub solves: Duration,
}

fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    *acc += start.elapsed();
    out
}

/// Reusable solver for one mesh and one `α`.
#[derive(Debug)]
pub struct Solver {
    mesh: TensorMesh,
    alpha: f64,
    plans: Vec<Arc<FnPlan>>,
    /// `4/h_i²` per axis.
    scales: Vec<f64>,
    eigenvalues: Vec<Vec<f64>>,
}

impl Solver {
    pub fn new(mesh: TensorMesh, alpha: f64) -> Result<Self> {
        Self::build(mesh, alpha, SpectralBasis1D::new)
    }

    /// Loads 1D spectral data from (and stores it into) `dir`.
    pub fn with_cache(mesh: TensorMesh, alpha: f64, dir: &Path) -> Result<Self> {
        Self::build(mesh, alpha, |k, n| spectral::load_or_build(dir, k, n))
    }

    fn build(mesh: TensorMesh, alpha: f64, basis: impl Fn(usize, usize) -> Result<SpectralBasis1D>) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidProblem(format!("alpha must be finite, got {alpha}")));
        }
        let mut by_size: HashMap<usize, Arc<FnPlan>> = HashMap::new();
        let mut plans = Vec::with_capacity(mesh.ndim());
        for axis in mesh.axes() {
            let plan = match by_size.get(&axis.elements()) {
                Some(p) => Arc::clone(p),
                None => {
                    let p = Arc::new(FnPlan::from_basis(Arc::new(basis(axis.elements(), axis.order())?))?);
                    by_size.insert(axis.elements(), Arc::clone(&p));
                    p
                }
            };
            plans.push(plan);
        }
        let scales: Vec<f64> = mesh.axes().iter().map(|a| 4.0 / (a.h() * a.h())).collect();
        let eigenvalues: Vec<Vec<f64>> = plans.iter().map(|p| p.eigenvalues()).collect();
        let solver = Self { mesh, alpha, plans, scales, eigenvalues };
        solver.check_definite()?;
        Ok(solver)
    }

    /// Rejects `α` at or below `-Σ_i 4h_i⁻² min Λ_i`.
    fn check_definite(&self) -> Result<()> {
        let mut index = Vec::with_capacity(self.mesh.ndim());
        let mut d = self.alpha;
        for (lam, s) in self.eigenvalues.iter().zip(&self.scales) {
            let (i, min) = lam
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (i, *v))
                .expect("axes have at least one unknown");
            index.push(i);
            d += s * min;
        }
        if !(d > 0.0) {
            return Err(Error::IndefiniteOperator { denominator: d, index });
        }
        Ok(())
    }

    pub fn mesh(&self) -> &TensorMesh {
        &self.mesh
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn plans(&self) -> &[Arc<FnPlan>] {
        &self.plans
    }

    /// Scaled 1D eigenvalues of `axis` in coefficient order.
    pub fn eigenvalues(&self, axis: usize) -> &[f64] {
        &self.eigenvalues[axis]
    }

    fn check_shape(&self, field: &TensorField) -> Result<()> {
        let shape = self.mesh.shape();
        if field.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch(format!("expected {:?}, got {:?}", shape, field.shape())));
        }
        Ok(())
    }

    /// Solves `L u = f^h`, consuming the right-hand side.
    pub fn solve(&self, rhs: TensorField, options: &SolveOptions) -> Result<TensorField> {
        self.solve_timed(rhs, options).map(|(u, _)| u)
    }

    /// [`Solver::solve`] that also reports where the time went.
    pub fn solve_timed(&self, rhs: TensorField, options: &SolveOptions) -> Result<(TensorField, PhaseTimes)> {
        self.check_shape(&rhs)?;
        let mut times = PhaseTimes::default();
        let u = match options.algorithm {
            Algorithm::Full => self.solve_full(rhs, options.mass, &mut times),
            Algorithm::Partial => self.solve_partial(rhs, options, &mut times),
        }?;
        Ok((u, times))
    }

    fn forward_axis(&self, field: &mut TensorField, axis: usize, mass: MassHandling) -> Result<()> {
        let plan = &self.plans[axis];
        match mass {
            MassHandling::Fused => plan.direct_from_mass_axis(field, axis),
            MassHandling::Explicit => {
                let factor = plan.mass().cholesky().map_err(|(row, pivot)| Error::IndefiniteShift {
                    shift: f64::INFINITY,
                    row,
                    pivot,
                })?;
                field.solve_band(axis, &factor);
                plan.direct_axis(field, axis)
            }
        }
    }

    fn solve_full(&self, mut field: TensorField, mass: MassHandling, times: &mut PhaseTimes) -> Result<TensorField> {
        let ndim = self.mesh.ndim();
        timed(&mut times.transforms, || {
            (0..ndim).rev().try_for_each(|axis| self.forward_axis(&mut field, axis, mass))
        })?;
        timed(&mut times.solves, || self.divide_by_symbol(&mut field))?;
        timed(&mut times.transforms, || {
            (0..ndim).try_for_each(|axis| self.plans[axis].inverse_axis(&mut field, axis))
        })?;
        Ok(field)
    }

    fn divide_by_symbol(&self, field: &mut TensorField) -> Result<()> {
        let last = self.mesh.ndim() - 1;
        let inner_lam = &self.eigenvalues[last];
        let inner_scale = self.scales[last];
        let outer_shape: Vec<usize> = self.mesh.shape()[..last].to_vec();
        let outer_strides = crate::grid::strides(&outer_shape);
        // Fix the leading axes per line; the last axis varies along it.
        let bad = std::sync::Mutex::new(None);
        field.for_each_line_indexed(
            last,
            || vec![0usize; last],
            |idx, id, line| {
                crate::grid::unravel(id, &outer_shape, &outer_strides, idx);
                let mut base = self.alpha;
                for (a, &i) in idx.iter().enumerate() {
                    base += self.scales[a] * self.eigenvalues[a][i];
                }
                for (t, (x, lam)) in line.iter_mut().zip(inner_lam).enumerate() {
                    let d = base + inner_scale * lam;
                    if !(d > 0.0) {
                        let mut index = idx.clone();
                        index.push(t);
                        bad.lock().unwrap().get_or_insert(Error::IndefiniteOperator { denominator: d, index });
                    }
                    *x /= d;
                }
            },
        );
        match bad.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `μ = α + Σ_{i≥1} 4h_i⁻² Λ_i` for each line along axis 0.
    fn shifts(&self) -> Vec<f64> {
        let shape = self.mesh.shape();
        let rest = &shape[1..];
        let strides = crate::grid::strides(rest);
        let count: usize = rest.iter().product();
        let mut idx = vec![0usize; rest.len()];
        let mut terms = Vec::with_capacity(rest.len());
        (0..count)
            .map(|id| {
                crate::grid::unravel(id, rest, &strides, &mut idx);
                terms.clear();
                terms.extend(idx.iter().enumerate().map(|(a, &i)| self.scales[a + 1] * self.eigenvalues[a + 1][i]));
                // Sorted summation makes symmetric axis permutations bit-identical.
                terms.sort_by(f64::total_cmp);
                terms.iter().fold(self.alpha, |acc, t| acc + t)
            })
            .collect()
    }

    fn solve_partial(
        &self,
        mut field: TensorField,
        options: &SolveOptions,
        times: &mut PhaseTimes,
    ) -> Result<TensorField> {
        let ndim = self.mesh.ndim();
        timed(&mut times.transforms, || {
            (1..ndim).rev().try_for_each(|axis| self.forward_axis(&mut field, axis, options.mass))
        })?;
        timed(&mut times.solves, || self.banded_solves(&mut field, options))?;
        timed(&mut times.transforms, || {
            (1..ndim).try_for_each(|axis| self.plans[axis].inverse_axis(&mut field, axis))
        })?;
        Ok(field)
    }

    fn banded_solves(&self, field: &mut TensorField, options: &SolveOptions) -> Result<()> {
        let axis0 = &self.mesh.axes()[0];
        let shifts = self.shifts();
        let factor_bytes = axis0.dim() * (axis0.order() + 1) * std::mem::size_of::<f64>();
        let mut distinct: HashMap<u64, usize> = HashMap::new();
        let mut slot = Vec::with_capacity(shifts.len());
        let mut unique = Vec::new();
        for &mu in &shifts {
            let next = distinct.len();
            let s = *distinct.entry(mu.to_bits()).or_insert_with(|| {
                unique.push(mu);
                next
            });
            slot.push(s);
        }
        let stiffness = axis0.scaled_stiffness();
        let mass = axis0.scaled_mass();
        let scale = self.scales[0];
        let stored = unique.len().saturating_mul(factor_bytes) <= options.factor_budget;
        log::debug!(
            "partial diagonalization: {} lines, {} distinct shifts, factors {}",
            shifts.len(),
            unique.len(),
            if stored { "stored" } else { "rebuilt per line" }
        );
        let factor =
            |mu: f64| -> Result<BandCholesky> {
                SymBand::combine(scale, &stiffness, mu, &mass)
                    .cholesky()
                    .map_err(|(row, pivot)| Error::IndefiniteShift { shift: mu, row, pivot })
            };
        let bad = std::sync::Mutex::new(None);
        if stored {
            use rayon::prelude::*;
            let factors: Vec<BandCholesky> = unique.par_iter().map(|&mu| factor(mu)).collect::<Result<_>>()?;
            field.for_each_line_indexed(0, || (), |_, id, line| factors[slot[id]].solve_in_place(line));
        } else {
            field.for_each_line_indexed(
                0,
                || (),
                |_, id, line| match factor(shifts[id]) {
                    Ok(f) => f.solve_in_place(line),
                    Err(e) => {
                        bad.lock().unwrap().get_or_insert(e);
                    }
                },
            );
        }
        match bad.into_inner().unwrap() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `L u`.
    pub fn apply_operator(&self, u: &TensorField) -> Result<TensorField> {
        self.check_shape(u)?;
        let axes = self.mesh.axes();
        let stiff: Vec<SymBand> = axes.iter().map(Mesh1D::scaled_stiffness).collect();
        let mass: Vec<SymBand> = axes.iter().map(Mesh1D::scaled_mass).collect();
        // Every term shares ⊗𝒞 on all but at most one axis.
        let mut out = TensorField::zeros(u.shape());
        for term in 0..=axes.len() {
            let mut t = u.clone();
            for (axis, (a, c)) in stiff.iter().zip(&mass).enumerate() {
                t.apply_band(axis, if axis == term { a } else { c });
            }
            let coef = if term < axes.len() { self.scales[term] } else { self.alpha };
            if coef != 0.0 {
                out.axpy(coef, &t);
            }
        }
        Ok(out)
    }

    /// `‖L u - f^h‖₂ / ‖f^h‖₂`.
    pub fn relative_residual(&self, u: &TensorField, rhs: &TensorField) -> Result<f64> {
        self.check_shape(rhs)?;
        let mut r = self.apply_operator(u)?;
        r.axpy(-1.0, rhs);
        Ok((r.dot(&r) / rhs.dot(rhs)).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rhs(shape: &[usize]) -> TensorField {
        TensorField::from_fn(shape, |i| {
            i.iter().enumerate().map(|(a, &x)| ((a + 1) as f64 * 0.37 * (x + 1) as f64).sin()).product::<f64>() + 0.1
        })
    }

    #[test]
    fn one_dimensional_solve_matches_banded() {
        let mesh = TensorMesh::uniform(1, 9, 3, 2.0).unwrap();
        let solver = Solver::new(mesh.clone(), 1.5).unwrap();
        let f = rhs(&mesh.shape());
        let u = solver.solve(f.clone(), &SolveOptions::default()).unwrap();
        let axis = &mesh.axes()[0];
        let fac = axis.shifted_factor(1.5).unwrap();
        let mut v = f.data().to_vec();
        fac.solve_in_place(&mut v);
        for (a, b) in u.data().iter().zip(&v) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn timed_solve_is_the_same_solve() {
        let mesh = TensorMesh::uniform(2, 16, 2, 1.0).unwrap();
        let solver = Solver::new(mesh.clone(), 0.0).unwrap();
        let f = rhs(&mesh.shape());
        for algorithm in [Algorithm::Full, Algorithm::Partial] {
            let opts = SolveOptions::with_algorithm(algorithm);
            let plain = solver.solve(f.clone(), &opts).unwrap();
            let (timed, times) = solver.solve_timed(f.clone(), &opts).unwrap();
            assert_eq!(plain, timed);
            assert!(times.transforms > Duration::ZERO && times.solves > Duration::ZERO);
        }
    }

    #[test]
    fn algorithms_and_mass_modes_agree() {
        let axes =
            vec![Mesh1D::new(6, 2, 1.0).unwrap(), Mesh1D::new(5, 2, 0.7).unwrap(), Mesh1D::new(6, 2, 1.3).unwrap()];
        let mesh = TensorMesh::new(axes).unwrap();
        let solver = Solver::new(mesh.clone(), 0.5).unwrap();
        let f = rhs(&mesh.shape());
        let a = solver.solve(f.clone(), &SolveOptions::default()).unwrap();
        for opts in [
            SolveOptions { mass: MassHandling::Explicit, ..SolveOptions::default() },
            SolveOptions::with_algorithm(Algorithm::Partial),
            SolveOptions { algorithm: Algorithm::Partial, factor_budget: 0, ..SolveOptions::default() },
        ] {
            let b = solver.solve(f.clone(), &opts).unwrap();
            let scale = a.max_abs();
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-11 * scale, "{opts:?}");
            }
        }
        assert!(solver.relative_residual(&a, &f).unwrap() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_alpha_and_bad_shapes() {
        let mesh = TensorMesh::uniform(2, 4, 2, 1.0).unwrap();
        // Smallest continuous eigenvalue of -Δ on the unit square is 2π².
        assert!(matches!(Solver::new(mesh.clone(), -25.0), Err(Error::IndefiniteOperator { .. })));
        assert!(Solver::new(mesh.clone(), -15.0).is_ok());
        assert!(matches!(Solver::new(mesh.clone(), f64::NAN), Err(Error::InvalidProblem(_))));
        let solver = Solver::new(mesh, 0.0).unwrap();
        assert!(solver.solve(TensorField::zeros(&[7, 6]), &SolveOptions::default()).is_err());
    }

    #[test]
    fn symmetric_shifts_share_factors() {
        let mesh = TensorMesh::uniform(3, 4, 2, 1.0).unwrap();
        let solver = Solver::new(mesh, 0.0).unwrap();
        let shifts = solver.shifts();
        let d = 7;
        for i in 0..d {
            for j in 0..d {
                assert_eq!(shifts[i * d + j].to_bits(), shifts[j * d + i].to_bits());
            }
        }
    }
}
