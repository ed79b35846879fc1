//! One-dimensional spectral decomposition of the global scaled pencil
//! `𝒜v = λ𝒞v` on `K` elements of order `n`.
//!
//! For each `θ_k = cos(πk/K)`, `k = 1..K-1`, the `n` eigenvalues `λ_k^(l)`
//! are the roots of a rational secular function whose poles are the
//! interior eigenvalues `λ₀^(l)`. Between consecutive poles the function is
//! strictly decreasing, so each interval carries exactly one root.
//!
//! Indices `l` are 0-based throughout the API.

mod cache;

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dense;
use crate::element::{InteriorEigen, ReferenceElement};
use crate::error::{Error, Result};

pub use cache::{cache_path, load_or_build, read_cache, write_cache, CACHE_FORMAT_VERSION};

/// Relative residual target for polished roots.
const ROOT_RESIDUAL: f64 = 1e-13;

/// Secular function `ψ(λ; θ)` for one value of `θ`.
///
/// ```text
/// ψ(λ) = (a₀ + θaₙ) - λ(c₀ + θcₙ) + Σ_l (1 + θ s_l)(a⁽ˡ⁾ - λc⁽ˡ⁾)² / (λ - λ₀⁽ˡ⁾)
/// ```
///
/// with `s_l = ±1` the parity of `e^(l)`. It is evaluated in the equivalent
/// form `λ·T(λ) - (1-θ)·χ₀`, which uses `ψ(0; 1) = 0` (constants are in the
/// stiffness kernel) so that small roots near `θ = 1` keep full relative
/// accuracy.
#[derive(Debug, Clone)]
pub struct SecularFunction<'a> {
    element: &'a ReferenceElement,
    theta: f64,
    one_minus_theta: f64,
    one_plus_theta: f64,
}

impl<'a> SecularFunction<'a> {
    /// Requires `|θ| <= 1`.
    pub fn new(element: &'a ReferenceElement, theta: f64) -> Self {
        assert!(theta.abs() <= 1.0, "theta must lie in [-1, 1]");
        Self { element, theta, one_minus_theta: 1.0 - theta, one_plus_theta: 1.0 + theta }
    }

    /// `θ = cos(πk/K)` with `1 ∓ θ` formed from half-angle sines and cosines.
    pub fn for_mode(element: &'a ReferenceElement, k: usize, elements: usize) -> Self {
        let (theta, one_minus_theta, one_plus_theta) = theta_parts(k, elements);
        Self { element, theta, one_minus_theta, one_plus_theta }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn interior(&self) -> &InteriorEigen {
        &self.element.interior
    }

    /// `1 + θ s_l`.
    pub fn weight(&self, l: usize) -> f64 {
        match self.interior().parity[l] {
            crate::element::Parity::Even => self.one_plus_theta,
            crate::element::Parity::Odd => self.one_minus_theta,
        }
    }

    /// Residue of `ψ` at the pole `λ₀^(l)`: `(1 + θ s_l)(a⁽ˡ⁾ - λ₀⁽ˡ⁾c⁽ˡ⁾)²`.
    pub fn residue(&self, l: usize) -> f64 {
        let e = self.interior();
        let r = e.stiffness_coef[l] - e.values[l] * e.mass_coef[l];
        self.weight(l) * r * r
    }

    fn mass_corner(&self) -> f64 {
        let c = &self.element.pencil.mass_blocks;
        c.corner + self.theta * c.far_corner
    }

    fn chi0(&self) -> f64 {
        let e = self.interior();
        let mut s = dense::CompensatedSum::default();
        s.add(self.element.pencil.stiffness_blocks.far_corner);
        for l in 0..e.len() {
            s.add(-e.parity[l].sign() * e.stiffness_coef[l] * e.stiffness_coef[l] / e.values[l]);
        }
        s.value()
    }

    /// Value and derivative at `λ`, rejecting points on a pole.
    pub fn eval(&self, lambda: f64) -> Result<(f64, f64)> {
        for &pole in &self.interior().values {
            let distance = (lambda - pole).abs();
            if distance <= 1e-14 * pole {
                return Err(Error::PoleProximity { lambda, pole, distance });
            }
        }
        Ok(self.eval_unchecked(lambda))
    }

    fn eval_unchecked(&self, lambda: f64) -> (f64, f64) {
        let e = self.interior();
        let mut t = dense::CompensatedSum::default();
        t.add(-self.mass_corner());
        let mut d = dense::CompensatedSum::default();
        d.add(-self.mass_corner());
        for l in 0..e.len() {
            let (a, c, pole, w) = (e.stiffness_coef[l], e.mass_coef[l], e.values[l], self.weight(l));
            let shift = lambda - pole;
            let g = a - lambda * c;
            t.add(w * (a * a - 2.0 * pole * a * c + pole * lambda * c * c) / (pole * shift));
            d.add(w * (-2.0 * c * g * shift - g * g) / (shift * shift));
        }
        (lambda * t.value() - self.one_minus_theta * self.chi0(), d.value())
    }

    /// Sum of the magnitudes of the terms making up `ψ(λ)`.
    fn scale(&self, lambda: f64) -> f64 {
        let e = self.interior();
        let mut s = (lambda * self.mass_corner()).abs() + (self.one_minus_theta * self.chi0()).abs();
        for l in 0..e.len() {
            let g = e.stiffness_coef[l] - lambda * e.mass_coef[l];
            s += (self.weight(l) * g * g / (lambda - e.values[l])).abs();
        }
        s
    }

    /// The `n` roots, ascending, one per interval between consecutive poles.
    ///
    /// Falls back to the companion matrix of `ψ(λ)·Π(λ - λ₀⁽ˡ⁾)` when the
    /// bracket structure does not hold.
    pub fn solve_family(&self) -> Result<Vec<f64>> {
        match self.solve_bracketed() {
            Ok(roots) => Ok(roots),
            Err(reason) => {
                log::warn!("secular brackets failed for theta = {}: {reason}; using companion matrix", self.theta);
                self.solve_companion()
            }
        }
    }

    fn solve_bracketed(&self) -> std::result::Result<Vec<f64>, String> {
        let poles = &self.interior().values;
        let n = poles.len() + 1;
        if (0..poles.len()).any(|l| self.residue(l) <= 0.0) {
            return Err("a pole has a non-positive residue".into());
        }
        let psi0 = self.eval_unchecked(0.0).0;
        if psi0 < 0.0 {
            return Err(format!("ψ(0) = {psi0} is negative"));
        }
        let mut roots = Vec::with_capacity(n);
        if psi0 == 0.0 {
            roots.push(0.0);
        }
        for i in roots.len()..n {
            let lo = if i == 0 { 0.0 } else { poles[i - 1] };
            let hi = if i < poles.len() {
                poles[i]
            } else {
                let mut hi = poles.last().copied().unwrap_or(0.0) + 1.0;
                let mut found = false;
                for _ in 0..60 {
                    if self.eval_unchecked(hi).0 < 0.0 {
                        found = true;
                        break;
                    }
                    hi *= 2.0;
                }
                if !found {
                    return Err("no sign change above the last pole".into());
                }
                hi
            };
            let root = self.safeguarded_newton(lo, hi);
            if !(root > lo && root < hi) {
                return Err(format!("root {root} escaped its bracket ({lo}, {hi})"));
            }
            let (value, _) = self.eval_unchecked(root);
            if value.abs() > ROOT_RESIDUAL * self.scale(root) {
                let below = self.eval_unchecked(root.next_down()).0;
                let above = self.eval_unchecked(root.next_up()).0;
                if below.signum() == above.signum() {
                    return Err(format!("root {root} leaves residual {value:e}"));
                }
            }
            roots.push(root);
        }
        Ok(roots)
    }

    /// Newton iteration safeguarded by bisection on a decreasing function
    /// with `ψ(lo+) > 0 > ψ(hi-)`.
    fn safeguarded_newton(&self, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = 0.5 * (lo + hi);
        let mut dx_old = hi - lo;
        let mut dx = dx_old;
        let (mut f, mut df) = self.eval_unchecked(x);
        if f < 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        for _ in 0..400 {
            if f == 0.0 {
                return x;
            }
            let newton_out = ((x - hi) * df - f) * ((x - lo) * df - f) > 0.0;
            let too_slow = (2.0 * f).abs() > (dx_old * df).abs();
            if newton_out || too_slow || !df.is_finite() || df == 0.0 {
                dx_old = dx;
                dx = 0.5 * (hi - lo);
                let next = lo + dx;
                if next == x || next == lo || next == hi {
                    return x;
                }
                x = next;
            } else {
                dx_old = dx;
                dx = f / df;
                let next = x - dx;
                if next == x {
                    return x;
                }
                x = next;
            }
            (f, df) = self.eval_unchecked(x);
            if f < 0.0 {
                hi = x;
            } else {
                lo = x;
            }
        }
        x
    }

    /// Coefficients (ascending powers) of `ψ(λ)·Π_l(λ - λ₀⁽ˡ⁾)`.
    pub fn polynomial(&self) -> Vec<f64> {
        let e = self.interior();
        let a = &self.element.pencil.stiffness_blocks;
        let linear = [a.corner + self.theta * a.far_corner, -self.mass_corner()];
        let poles = &e.values;
        let product_except = |skip: Option<usize>| {
            let mut p = vec![1.0];
            for (m, &pole) in poles.iter().enumerate() {
                if Some(m) != skip {
                    p = poly_mul(&p, &[-pole, 1.0]);
                }
            }
            p
        };
        let mut q = poly_mul(&linear, &product_except(None));
        for l in 0..e.len() {
            let g = [e.stiffness_coef[l], -e.mass_coef[l]];
            let term = poly_mul(&poly_mul(&g, &g), &product_except(Some(l)));
            for (i, c) in term.iter().enumerate() {
                if i >= q.len() {
                    q.push(0.0);
                }
                q[i] += self.weight(l) * c;
            }
        }
        q
    }

    /// Roots through the eigenvalues of the companion matrix, Newton-polished.
    pub fn solve_companion(&self) -> Result<Vec<f64>> {
        let n = self.interior().len() + 1;
        let fail = |reason: String| Error::SecularSolveFailed { theta: self.theta, reason };
        let mut q = self.polynomial();
        while q.len() > 1 && q.last().is_some_and(|c| *c == 0.0) {
            q.pop();
        }
        let degree = q.len() - 1;
        if degree != n {
            return Err(fail(format!("polynomial degree {degree}, expected {n}")));
        }
        let lead = q[degree];
        let companion = DMatrix::from_fn(degree, degree, |i, j| {
            if j == degree - 1 {
                -q[i] / lead
            } else if i == j + 1 {
                1.0
            } else {
                0.0
            }
        });
        let mut roots: Vec<f64> = companion
            .complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-8 * z.re.abs().max(1.0))
            .map(|z| z.re)
            .collect();
        roots.sort_by(f64::total_cmp);
        if roots.len() != n {
            return Err(fail(format!("companion matrix has {} real roots, expected {n}", roots.len())));
        }
        for r in roots.iter_mut() {
            for _ in 0..8 {
                let (f, df) = self.eval_unchecked(*r);
                if !(f.is_finite() && df.is_finite()) || df == 0.0 {
                    break;
                }
                let next = *r - f / df;
                if (next - *r).abs() > 1e-6 * r.abs().max(1e-300) {
                    break;
                }
                *r = next;
            }
        }
        if roots.iter().any(|&r| r < 0.0) {
            return Err(fail("negative root".into()));
        }
        for w in roots.windows(2) {
            if w[1] - w[0] <= 1e-10 * w[1].abs() {
                return Err(fail(format!("roots {} and {} are not distinct", w[0], w[1])));
            }
        }
        Ok(roots)
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(cos(πk/K), 1 - cos(πk/K), 1 + cos(πk/K))` without cancellation.
pub fn theta_parts(k: usize, elements: usize) -> (f64, f64, f64) {
    let half = PI * k as f64 / (2 * elements) as f64;
    let (s, c) = half.sin_cos();
    let theta = (PI * k as f64 / elements as f64).cos();
    (theta, 2.0 * s * s, 2.0 * c * c)
}

/// Eigen-decomposition data of the 1D pencil for one `(K, n)`.
#[derive(Debug, Clone)]
pub struct SpectralBasis1D {
    elements: usize,
    order: usize,
    element: Arc<ReferenceElement>,
    /// Row `k-1`: `n` eigenvalues ascending.
    eigenvalues: Vec<f64>,
    /// Entry `((k-1)·n + l)·(n-1) + i`: component `i` of `p_k^(l)`.
    interior: Vec<f64>,
    norm_b0: Vec<f64>,
    norm_bn: Vec<f64>,
    norms: Vec<f64>,
}

impl SpectralBasis1D {
    pub fn new(elements: usize, order: usize) -> Result<Self> {
        let element = ReferenceElement::shared(order)?;
        Self::with_element(elements, element)
    }

    pub fn with_element(elements: usize, element: Arc<ReferenceElement>) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 elements, got {elements}")));
        }
        let n = element.order();
        let m = n - 1;
        let rows: Vec<Result<ModeRow>> =
            (1..elements).into_par_iter().map(|k| mode_row(&element, k, elements)).collect();
        let mut basis = Self {
            elements,
            order: n,
            eigenvalues: Vec::with_capacity((elements - 1) * n),
            interior: Vec::with_capacity((elements - 1) * n * m),
            norm_b0: Vec::with_capacity((elements - 1) * n),
            norm_bn: Vec::with_capacity((elements - 1) * n),
            norms: Vec::with_capacity((elements - 1) * n),
            element,
        };
        for row in rows {
            let row = row?;
            basis.eigenvalues.extend(row.eigenvalues);
            basis.interior.extend(row.interior);
            basis.norm_b0.extend(row.b0);
            basis.norm_bn.extend(row.bn);
            basis.norms.extend(row.norms);
        }
        Ok(basis)
    }

    pub(crate) fn from_parts(
        element: Arc<ReferenceElement>,
        elements: usize,
        eigenvalues: Vec<f64>,
        interior: Vec<f64>,
        norm_b0: Vec<f64>,
        norm_bn: Vec<f64>,
        norms: Vec<f64>,
    ) -> Self {
        Self { elements, order: element.order(), element, eigenvalues, interior, norm_b0, norm_bn, norms }
    }

    /// Element count `K`.
    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn element(&self) -> &Arc<ReferenceElement> {
        &self.element
    }

    /// `dim S_K^(n) = nK - 1`.
    pub fn dim(&self) -> usize {
        self.order * self.elements - 1
    }

    pub fn theta(&self, k: usize) -> f64 {
        theta_parts(k, self.elements).0
    }

    /// `λ_k^(l)` for `k = 1..K-1`, `l = 0..n`.
    pub fn eigenvalue(&self, k: usize, l: usize) -> f64 {
        self.eigenvalues[(k - 1) * self.order + l]
    }

    /// `λ₀^(l)` for `l = 0..n-1`.
    pub fn zero_mode_eigenvalue(&self, l: usize) -> f64 {
        self.element.interior.values[l]
    }

    /// `p_k^(l)`.
    pub fn interior_vector(&self, k: usize, l: usize) -> &[f64] {
        let m = self.order - 1;
        let start = ((k - 1) * self.order + l) * m;
        &self.interior[start..start + m]
    }

    pub fn norm_coefficients(&self, k: usize, l: usize) -> (f64, f64) {
        let i = (k - 1) * self.order + l;
        (self.norm_b0[i], self.norm_bn[i])
    }

    /// `‖s_k^(l)‖²_𝒞 = K(b_{kl,0} + b_{kl,n}θ_k)`.
    pub fn norm_sq(&self, k: usize, l: usize) -> f64 {
        self.norms[(k - 1) * self.order + l]
    }

    /// `‖s₀^(l)‖²_𝒞`.
    pub fn zero_mode_norm_sq(&self) -> f64 {
        self.elements as f64
    }

    /// Scaled eigenvalue of every basis vector, in coefficient order
    /// (`k = 0` block of `n-1`, then `k = 1..K-1` blocks of `n`).
    pub fn coefficient_eigenvalues(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.element.interior.values);
        out.extend_from_slice(&self.eigenvalues);
        out
    }

    pub(crate) fn raw_tables(&self) -> [&[f64]; 5] {
        [&self.eigenvalues, &self.interior, &self.norm_b0, &self.norm_bn, &self.norms]
    }
}

struct ModeRow {
    eigenvalues: Vec<f64>,
    interior: Vec<f64>,
    b0: Vec<f64>,
    bn: Vec<f64>,
    norms: Vec<f64>,
}

fn mode_row(element: &ReferenceElement, k: usize, elements: usize) -> Result<ModeRow> {
    let n = element.order();
    let m = n - 1;
    let (theta, one_minus, one_plus) = theta_parts(k, elements);
    let secular = SecularFunction::for_mode(element, k, elements);
    let eigenvalues = secular.solve_family()?;
    let c = &element.pencil.mass_blocks;
    let mut row = ModeRow {
        interior: Vec::with_capacity(n * m),
        b0: Vec::with_capacity(n),
        bn: Vec::with_capacity(n),
        norms: Vec::with_capacity(n),
        eigenvalues,
    };
    for &lambda in &row.eigenvalues {
        let p = crate::element::resolvent_interior(&element.interior, lambda)?;
        let p_rev: Vec<f64> = p.iter().rev().copied().collect();
        // q = C̃p + 2c
        let mut q = dense::mat_vec(&c.interior, m, &p);
        for (qi, ci) in q.iter_mut().zip(&c.edge) {
            *qi += 2.0 * ci;
        }
        let b0 = c.corner + dense::compensated_dot(&q, &p);
        let bn = c.far_corner + dense::compensated_dot(&q, &p_rev);
        // b0 + θ bn regrouped by parity: (1+θ) q·p_e + (1-θ) q·p_o.
        let p_even: Vec<f64> = p.iter().zip(&p_rev).map(|(x, y)| 0.5 * (x + y)).collect();
        let p_odd: Vec<f64> = p.iter().zip(&p_rev).map(|(x, y)| 0.5 * (x - y)).collect();
        let per_element = c.corner
            + theta * c.far_corner
            + one_plus * dense::compensated_dot(&q, &p_even)
            + one_minus * dense::compensated_dot(&q, &p_odd);
        let norm = elements as f64 * per_element;
        if !(norm > 0.0) {
            return Err(Error::SecularSolveFailed {
                theta,
                reason: format!("non-positive eigenvector norm {norm} at λ = {lambda}"),
            });
        }
        row.interior.extend_from_slice(&p);
        row.b0.push(b0);
        row.bn.push(bn);
        row.norms.push(norm);
    }
    Ok(row)
}
