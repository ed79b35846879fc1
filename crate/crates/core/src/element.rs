//! The order-`n` Lagrange reference element on [-1, 1].
//!
//! Builds the interpolation basis at equispaced nodes, the exact local
//! stiffness and mass matrices, their corner/edge/interior block split, and
//! the eigen-decomposition of the interior (bubble) pencil split by parity
//! under the index reversal `k -> n - k`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::dense::{self, CompensatedSum};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Largest supported element order.
pub const MAX_ORDER: usize = 16;

/// Relative gap below which two element eigenvalues are treated as coincident.
pub const SIMPLICITY_TOLERANCE: f64 = 1e-10;

/// Lagrange basis on equispaced nodes together with its values and first
/// derivatives at a Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub order: usize,
    /// Nodes `-1 + 2k/n`, `k = 0..=n`.
    pub nodes: Vec<f64>,
    /// Barycentric weights `(-1)^k binom(n, k)`.
    pub barycentric_weights: Vec<f64>,
    pub quadrature: GaussLegendre,
    values: Vec<f64>,
    derivatives: Vec<f64>,
}

impl BasisTable {
    /// Basis of order `n` evaluated at the `(n+1)`-point Gauss rule.
    pub fn new(order: usize) -> Result<Self> {
        Self::with_quadrature(order, order + 1)
    }

    pub fn with_quadrature(order: usize, points: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidOrder(order));
        }
        let n = order;
        let nodes: Vec<f64> = (0..=n).map(|k| -1.0 + 2.0 * k as f64 / n as f64).collect();
        let mut barycentric_weights = Vec::with_capacity(n + 1);
        let mut binom = 1.0_f64;
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            barycentric_weights.push(sign * binom);
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        let quadrature = GaussLegendre::new(points);
        let mut table =
            Self { order, nodes, barycentric_weights, quadrature, values: Vec::new(), derivatives: Vec::new() };
        let m = table.quadrature.len();
        let mut values = vec![0.0; m * (n + 1)];
        let mut derivatives = vec![0.0; m * (n + 1)];
        for q in 0..m {
            let x = table.quadrature.nodes[q];
            table.eval_all(x, &mut values[q * (n + 1)..(q + 1) * (n + 1)]);
            table.eval_derivative_all(x, &mut derivatives[q * (n + 1)..(q + 1) * (n + 1)]);
        }
        table.values = values;
        table.derivatives = derivatives;
        Ok(table)
    }

    /// `e_l` at quadrature point `q`.
    pub fn value(&self, q: usize, l: usize) -> f64 {
        self.values[q * (self.order + 1) + l]
    }

    /// `e_l'` at quadrature point `q`.
    pub fn derivative(&self, q: usize, l: usize) -> f64 {
        self.derivatives[q * (self.order + 1) + l]
    }

    /// Values of all basis functions at `x` (barycentric formula of the second kind).
    pub fn eval_all(&self, x: f64, out: &mut [f64]) {
        let n = self.order;
        if let Some(k) = self.nodes.iter().position(|&xi| xi == x) {
            out[..=n].iter_mut().for_each(|v| *v = 0.0);
            out[k] = 1.0;
            return;
        }
        let mut denom = 0.0;
        for k in 0..=n {
            let t = self.barycentric_weights[k] / (x - self.nodes[k]);
            out[k] = t;
            denom += t;
        }
        out[..=n].iter_mut().for_each(|v| *v /= denom);
    }

    pub fn eval(&self, l: usize, x: f64) -> f64 {
        let mut buf = vec![0.0; self.order + 1];
        self.eval_all(x, &mut buf);
        buf[l]
    }

    /// First derivatives of all basis functions at `x`, from the product form.
    pub fn eval_derivative_all(&self, x: f64, out: &mut [f64]) {
        let n = self.order;
        let xi = &self.nodes;
        for l in 0..=n {
            let mut total = 0.0;
            for m in 0..=n {
                if m == l {
                    continue;
                }
                let mut term = 1.0 / (xi[l] - xi[m]);
                for q in 0..=n {
                    if q != l && q != m {
                        term *= (x - xi[q]) / (xi[l] - xi[q]);
                    }
                }
                total += term;
            }
            out[l] = total;
        }
    }
}

/// One `(n+1) x (n+1)` local matrix and its block split.
///
/// ```text
///   [ corner     edge^T       far_corner ]
///   [ edge       interior     edge_rev   ]
///   [ far_corner edge_rev^T   corner     ]
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub corner: f64,
    pub far_corner: f64,
    pub edge: Vec<f64>,
    pub edge_rev: Vec<f64>,
    /// Row-major `(n-1) x (n-1)`.
    pub interior: Vec<f64>,
}

impl Blocks {
    fn split(full: &[f64], n: usize) -> Self {
        let dim = n + 1;
        let m = n.saturating_sub(1);
        let mut interior = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                interior[i * m + j] = full[(i + 1) * dim + j + 1];
            }
        }
        Self {
            corner: full[0],
            far_corner: full[n],
            edge: (1..n).map(|i| full[i * dim]).collect(),
            edge_rev: (1..n).map(|i| full[i * dim + n]).collect(),
            interior,
        }
    }

    pub fn interior_dim(&self) -> usize {
        self.edge.len()
    }
}

/// Local stiffness `A` and mass `C` on the reference element.
#[derive(Debug, Clone)]
pub struct LocalPencil {
    pub order: usize,
    /// Row-major `(n+1) x (n+1)`.
    pub stiffness: Vec<f64>,
    pub mass: Vec<f64>,
    pub stiffness_blocks: Blocks,
    pub mass_blocks: Blocks,
}

impl LocalPencil {
    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn stiffness_entry(&self, k: usize, l: usize) -> f64 {
        self.stiffness[k * self.dim() + l]
    }

    pub fn mass_entry(&self, k: usize, l: usize) -> f64 {
        self.mass[k * self.dim() + l]
    }
}

/// Integrates `A_kl = ∫ e_k' e_l'` and `C_kl = ∫ e_k e_l` with the rule carried by `basis`.
pub fn local_matrices(basis: &BasisTable) -> LocalPencil {
    let n = basis.order;
    let dim = n + 1;
    let rule = &basis.quadrature;
    let mut stiffness = vec![0.0; dim * dim];
    let mut mass = vec![0.0; dim * dim];
    for k in 0..dim {
        for l in k..dim {
            let mut sa = CompensatedSum::default();
            let mut sc = CompensatedSum::default();
            for (q, w) in rule.weights.iter().enumerate() {
                sa.add(w * basis.derivative(q, k) * basis.derivative(q, l));
                sc.add(w * basis.value(q, k) * basis.value(q, l));
            }
            stiffness[k * dim + l] = sa.value();
            mass[k * dim + l] = sc.value();
        }
    }
    // Exact symmetry and persymmetry of the integrals, up to rounding.
    for m in [&mut stiffness, &mut mass] {
        for k in 0..dim {
            for l in 0..k {
                m[k * dim + l] = m[l * dim + k];
            }
        }
        let orig = m.clone();
        for k in 0..dim {
            for l in 0..dim {
                let rev = orig[(n - k) * dim + (n - l)];
                m[k * dim + l] = 0.5 * (orig[k * dim + l] + rev);
            }
        }
    }
    // Constants lie in the kernel of the stiffness matrix.
    for k in 0..=n / 2 {
        let mut s = CompensatedSum::default();
        for l in (0..dim).filter(|&l| l != k) {
            s.add(-stiffness[k * dim + l]);
        }
        stiffness[k * dim + k] = s.value();
        stiffness[(n - k) * dim + (n - k)] = s.value();
    }
    LocalPencil {
        order: n,
        stiffness_blocks: Blocks::split(&stiffness, n),
        mass_blocks: Blocks::split(&mass, n),
        stiffness,
        mass,
    }
}

/// Behaviour of a vector under the interior index reversal `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// `+1` for even (`Pe = e`), `-1` for odd (`Pe = -e`).
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// Eigenpairs of the interior pencil `Ã e = λ C̃ e`, ascending, with
/// `C̃ e·e = 1` and exact parity.
#[derive(Debug, Clone)]
pub struct InteriorEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub parity: Vec<Parity>,
    /// `a·e^(l)` for the stiffness edge vector.
    pub stiffness_coef: Vec<f64>,
    /// `c·e^(l)` for the mass edge vector.
    pub mass_coef: Vec<f64>,
    /// `ǎ·e^(l)`.
    pub stiffness_coef_rev: Vec<f64>,
    /// `č·e^(l)`.
    pub mass_coef_rev: Vec<f64>,
}

impl InteriorEigen {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Orthonormal basis of the even or odd subspace of `R^(n-1)` as columns.
fn parity_basis(m: usize, parity: Parity) -> Vec<Vec<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for i in 0..m {
        let r = m - 1 - i;
        if i > r {
            break;
        }
        let mut v = vec![0.0; m];
        match (parity, i == r) {
            (Parity::Even, true) => v[i] = 1.0,
            (Parity::Even, false) => {
                v[i] = s;
                v[r] = s;
            }
            (Parity::Odd, true) => continue,
            (Parity::Odd, false) => {
                v[i] = s;
                v[r] = -s;
            }
        }
        out.push(v);
    }
    out
}

fn project(mat: &[f64], m: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let d = basis.len();
    let mut out = vec![0.0; d * d];
    for a in 0..d {
        let mv = dense::mat_vec(mat, m, &basis[a]);
        for b in 0..d {
            out[b * d + a] = dense::compensated_dot(&basis[b], &mv);
        }
    }
    for a in 0..d {
        for b in 0..a {
            let s = 0.5 * (out[a * d + b] + out[b * d + a]);
            out[a * d + b] = s;
            out[b * d + a] = s;
        }
    }
    out
}

fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

fn check_simple(sorted: &[f64]) -> Result<()> {
    for w in sorted.windows(2) {
        let scale = w[0].abs().max(w[1].abs()).max(f64::MIN_POSITIVE);
        let gap = (w[1] - w[0]) / scale;
        if gap <= SIMPLICITY_TOLERANCE {
            return Err(Error::NonSimpleSpectrum { lower: w[0], upper: w[1], rel_gap: gap });
        }
    }
    Ok(())
}

/// Parity-separated solve of the interior pencil. Empty for `n = 1`.
pub fn interior_eigen(pencil: &LocalPencil) -> Result<InteriorEigen> {
    let m = pencil.order - 1;
    let a_int = &pencil.stiffness_blocks.interior;
    let c_int = &pencil.mass_blocks.interior;
    let mut pairs: Vec<(f64, Vec<f64>, Parity)> = Vec::with_capacity(m);
    for parity in [Parity::Even, Parity::Odd] {
        let basis = parity_basis(m, parity);
        let d = basis.len();
        if d == 0 {
            continue;
        }
        let ra = project(a_int, m, &basis);
        let rc = project(c_int, m, &basis);
        let (vals, vecs) = dense::generalized_eigen(&ra, &rc, d).expect("interior mass block is positive definite");
        for (j, &val) in vals.iter().enumerate() {
            let mut e = vec![0.0; m];
            for (b, col) in basis.iter().enumerate() {
                let coef = vecs[b * d + j];
                for i in 0..m {
                    e[i] += coef * col[i];
                }
            }
            let ce = dense::mat_vec(c_int, m, &e);
            let scale = dense::compensated_dot(&ce, &e).sqrt();
            e.iter_mut().for_each(|x| *x /= scale);
            // Re-impose exact parity after the arithmetic above.
            for i in 0..m {
                let r = m - 1 - i;
                if i < r {
                    let (x, y) = (e[i], e[r]);
                    match parity {
                        Parity::Even => {
                            let s = 0.5 * (x + y);
                            e[i] = s;
                            e[r] = s;
                        }
                        Parity::Odd => {
                            let s = 0.5 * (x - y);
                            e[i] = s;
                            e[r] = -s;
                        }
                    }
                } else if i == r && parity == Parity::Odd {
                    e[i] = 0.0;
                }
            }
            fix_sign(&mut e);
            pairs.push((val, e, parity));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    check_simple(&values)?;
    let a = &pencil.stiffness_blocks;
    let c = &pencil.mass_blocks;
    let dot = |x: &[f64], y: &[f64]| dense::compensated_dot(x, y);
    Ok(InteriorEigen {
        stiffness_coef: pairs.iter().map(|p| dot(&a.edge, &p.1)).collect(),
        mass_coef: pairs.iter().map(|p| dot(&c.edge, &p.1)).collect(),
        stiffness_coef_rev: pairs.iter().map(|p| dot(&a.edge_rev, &p.1)).collect(),
        mass_coef_rev: pairs.iter().map(|p| dot(&c.edge_rev, &p.1)).collect(),
        parity: pairs.iter().map(|p| p.2).collect(),
        vectors: pairs.into_iter().map(|p| p.1).collect(),
        values,
    })
}

/// Generalized eigenvalues of the full local pencil `A e = λ C e`, ascending.
pub fn full_element_spectrum(pencil: &LocalPencil) -> Vec<f64> {
    let (vals, _) = dense::generalized_eigen(&pencil.stiffness, &pencil.mass, pencil.dim())
        .expect("local mass matrix is positive definite");
    vals
}

/// Solves `(Ã - λC̃) p = -(a - λc)` through the interior eigen-expansion.
pub fn resolvent_interior(eig: &InteriorEigen, lambda: f64) -> Result<Vec<f64>> {
    let m = eig.len();
    let mut p = vec![0.0; m];
    for l in 0..m {
        let pole = eig.values[l];
        let distance = (lambda - pole).abs();
        if distance <= 1e-12 * pole.abs() {
            return Err(Error::PoleProximity { lambda, pole, distance });
        }
        let coef = (eig.stiffness_coef[l] - lambda * eig.mass_coef[l]) / (lambda - pole);
        for (pi, ei) in p.iter_mut().zip(&eig.vectors[l]) {
            *pi += coef * ei;
        }
    }
    Ok(p)
}

/// Second form of the same resolvent: pole terms with residues taken at the
/// poles, minus `C̃⁻¹c`.
pub fn resolvent_interior_pole_form(eig: &InteriorEigen, lambda: f64) -> Result<Vec<f64>> {
    let m = eig.len();
    let mut p = vec![0.0; m];
    for l in 0..m {
        let pole = eig.values[l];
        let distance = (lambda - pole).abs();
        if distance <= 1e-12 * pole.abs() {
            return Err(Error::PoleProximity { lambda, pole, distance });
        }
        let coef = (eig.stiffness_coef[l] - pole * eig.mass_coef[l]) / (lambda - pole) - eig.mass_coef[l];
        for (pi, ei) in p.iter_mut().zip(&eig.vectors[l]) {
            *pi += coef * ei;
        }
    }
    Ok(p)
}

/// Everything the solver needs from one element order, computed once.
#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub basis: BasisTable,
    pub pencil: LocalPencil,
    pub interior: InteriorEigen,
    /// Spectrum of the full local pencil (diagnostic).
    pub full_spectrum: Vec<f64>,
}

impl ReferenceElement {
    pub fn new(order: usize) -> Result<Self> {
        let basis = BasisTable::new(order)?;
        let pencil = local_matrices(&basis);
        let interior = interior_eigen(&pencil)?;
        let full_spectrum = full_element_spectrum(&pencil);
        check_simple(&full_spectrum)?;
        Ok(Self { basis, pencil, interior, full_spectrum })
    }

    /// Process-wide cached instance for `order`.
    pub fn shared(order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<ReferenceElement>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("element cache poisoned");
        if let Some(e) = guard.get(&order) {
            return Ok(Arc::clone(e));
        }
        let element = Arc::new(Self::new(order)?);
        guard.insert(order, Arc::clone(&element));
        Ok(element)
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }
}
