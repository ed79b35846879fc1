//! Fast 1D eigen-transform `F_n` of the scaled pencil `(𝒜, 𝒞)`.
//!
//! `inverse` synthesizes a nodal vector from eigen-coefficients,
//! `x = S w`, where the columns of `S` are the eigenvectors `s_k^(l)`.
//! `direct` is its inverse, `w = N⁻¹ Sᵀ 𝒞 x` with `N` the diagonal of
//! squared `𝒞`-norms. Both cost `n` real trigonometric transforms of length
//! about `K` plus `O(n²K)` arithmetic.
//!
//! Coefficient order: the `n-1` modes with `k = 0` first, then blocks of `n`
//! modes for `k = 1..K-1`, each block ascending in eigenvalue.
//!
//! Eigenvector `s_k^(l)`, `k >= 1`, takes the value `sin(πkj/K)` at node `j`
//! and `sin(πk(j-1)/K) p + sin(πkj/K) Pp` on the interior of element `j`,
//! where `P` reverses the interior nodes. `s_0^(l)` vanishes at the nodes
//! and equals `(-P)^(j-1) e^(l)` on element `j`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dense;
use crate::error::{Error, Result};
use crate::grid::{SymBand, TensorField};
use crate::spectral::SpectralBasis1D;
use crate::trig::{TransformKind, TransformPlan, TransformScratch};

/// Precomputed data for `F_n` at one `(K, n)`.
#[derive(Debug)]
pub struct FnPlan {
    basis: Arc<SpectralBasis1D>,
    mass: SymBand,
    dst1: TransformPlan,
    dst3: TransformPlan,
    dct3: TransformPlan,
    dst3_adj: TransformPlan,
    dct3_adj: TransformPlan,
    /// `cos(πk/2K)(p_i + p_{n-i})`, `i = 1..=n/2`, per `(k, l)`.
    even: Vec<f64>,
    /// `-sin(πk/2K)(p_i - p_{n-i})`, `i = 1..=(n-1)/2`, per `(k, l)`.
    odd: Vec<f64>,
    /// Rows of `G_k⁻¹ [1 | even | odd]`, with `G_k` the mass Gram matrix of
    /// the `n` eigenvectors sharing frequency `k`.
    proj_node: Vec<f64>,
    proj_even: Vec<f64>,
    proj_odd: Vec<f64>,
    norms: Vec<f64>,
    transforms: AtomicU64,
}

/// Per-thread scratch for [`FnPlan`].
#[derive(Debug)]
pub struct FnWorkspace {
    line: Vec<f64>,
    node_in: Vec<f64>,
    node_out: Vec<f64>,
    even_in: Vec<f64>,
    even_out: Vec<f64>,
    odd_in: Vec<f64>,
    odd_out: Vec<f64>,
    zero: Vec<f64>,
    fft: TransformScratch,
}

impl FnPlan {
    pub fn new(elements: usize, order: usize) -> Result<Self> {
        Self::from_basis(Arc::new(SpectralBasis1D::new(elements, order)?))
    }

    pub fn from_basis(basis: Arc<SpectralBasis1D>) -> Result<Self> {
        Self::build(basis, false)
    }

    /// Same as [`FnPlan::from_basis`] but with `O(K²)` trigonometric sums.
    pub fn from_basis_naive(basis: Arc<SpectralBasis1D>) -> Result<Self> {
        Self::build(basis, true)
    }

    fn build(basis: Arc<SpectralBasis1D>, naive: bool) -> Result<Self> {
        let (k_el, n) = (basis.elements(), basis.order());
        let plan = |kind| {
            if naive {
                TransformPlan::naive(kind, k_el)
            } else {
                TransformPlan::new(kind, k_el)
            }
        };
        let (ne, no) = (n / 2, (n - 1) / 2);
        let mut even = Vec::with_capacity((k_el - 1) * n * ne);
        let mut odd = Vec::with_capacity((k_el - 1) * n * no);
        let mut norms = Vec::with_capacity((k_el - 1) * n);
        for k in 1..k_el {
            let half = std::f64::consts::PI * k as f64 / (2 * k_el) as f64;
            let (s, c) = half.sin_cos();
            for l in 0..n {
                let p = basis.interior_vector(k, l);
                // p has n-1 entries: p_i at index i-1.
                for i in 1..=ne {
                    even.push(c * (p[i - 1] + p[n - i - 1]));
                }
                for i in 1..=no {
                    odd.push(-s * (p[i - 1] - p[n - i - 1]));
                }
                norms.push(basis.norm_sq(k, l));
            }
        }
        let mut proj_node = Vec::with_capacity(norms.len());
        let mut proj_even = Vec::with_capacity(even.len());
        let mut proj_odd = Vec::with_capacity(odd.len());
        for k in 1..k_el {
            let ginv = inverse_gram(&basis, k, &even, &odd)?;
            let rows = (k - 1) * n..k * n;
            for a in 0..n {
                let g = &ginv[a * n..(a + 1) * n];
                proj_node.push(g.iter().sum());
                for c in 0..ne {
                    proj_even.push(rows.clone().zip(g).map(|(b, w)| w * even[b * ne + c]).sum());
                }
                for c in 0..no {
                    proj_odd.push(rows.clone().zip(g).map(|(b, w)| w * odd[b * no + c]).sum());
                }
            }
        }
        let mesh_mass = crate::grid::Mesh1D::new(k_el, n, 1.0)?.scaled_mass();
        Ok(Self {
            dst1: plan(TransformKind::Dst1)?,
            dst3: plan(TransformKind::Dst3Half)?,
            dct3: plan(TransformKind::Dct3Half)?,
            dst3_adj: plan(TransformKind::Dst3HalfAdjoint)?,
            dct3_adj: plan(TransformKind::Dct3HalfAdjoint)?,
            mass: mesh_mass,
            basis,
            even,
            odd,
            proj_node,
            proj_even,
            proj_odd,
            norms,
            transforms: AtomicU64::new(0),
        })
    }

    pub fn basis(&self) -> &Arc<SpectralBasis1D> {
        &self.basis
    }

    pub fn elements(&self) -> usize {
        self.basis.elements()
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Scaled mass matrix `𝒞` of the same mesh.
    pub fn mass(&self) -> &SymBand {
        &self.mass
    }

    /// Whether every trigonometric transform runs through the FFT.
    pub fn is_fast(&self) -> bool {
        self.dst1.is_fast()
    }

    /// Trigonometric transforms executed so far (`n` per line and direction).
    pub fn transform_count(&self) -> u64 {
        self.transforms.load(Ordering::Relaxed)
    }

    pub fn reset_transform_count(&self) {
        self.transforms.store(0, Ordering::Relaxed);
    }

    pub fn workspace(&self) -> FnWorkspace {
        let (k, n) = (self.elements(), self.order());
        let (ne, no) = (n / 2, (n - 1) / 2);
        FnWorkspace {
            line: vec![0.0; self.dim()],
            node_in: vec![0.0; k - 1],
            node_out: vec![0.0; k - 1],
            even_in: vec![0.0; ne * k],
            even_out: vec![0.0; ne * k],
            odd_in: vec![0.0; no * k],
            odd_out: vec![0.0; no * k],
            zero: vec![0.0; n - 1],
            fft: self.dst1.make_scratch(),
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), actual: len });
        }
        Ok(())
    }

    /// `out = S w`.
    pub fn inverse(&self, coef: &[f64], out: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        self.check_len(coef.len())?;
        self.check_len(out.len())?;
        let (k_el, n) = (self.elements(), self.order());
        let (ne, no) = (n / 2, (n - 1) / 2);
        ws.even_in.fill(0.0);
        ws.odd_in.fill(0.0);
        for k in 1..k_el {
            let row = (n - 1) + (k - 1) * n;
            let mut nodal = 0.0;
            for l in 0..n {
                let w = coef[row + l];
                nodal += w;
                let kl = (k - 1) * n + l;
                for c in 0..ne {
                    ws.even_in[c * k_el + k - 1] += w * self.even[kl * ne + c];
                }
                for c in 0..no {
                    ws.odd_in[c * k_el + k] += w * self.odd[kl * no + c];
                }
            }
            ws.node_in[k - 1] = nodal;
        }
        self.dst1.execute(&ws.node_in, &mut ws.node_out, &mut ws.fft)?;
        for c in 0..ne {
            let r = c * k_el..(c + 1) * k_el;
            self.dst3.execute(&ws.even_in[r.clone()], &mut ws.even_out[r], &mut ws.fft)?;
        }
        for c in 0..no {
            let r = c * k_el..(c + 1) * k_el;
            self.dct3.execute(&ws.odd_in[r.clone()], &mut ws.odd_out[r], &mut ws.fft)?;
        }
        self.transforms.fetch_add(n as u64, Ordering::Relaxed);

        for j in 1..k_el {
            out[j * n - 1] = ws.node_out[j - 1];
        }
        // k = 0 modes: E0 = Σ_l w_0l e^(l).
        let e0 = &mut ws.zero;
        e0.fill(0.0);
        for (l, e) in self.basis.element().interior.vectors.iter().enumerate() {
            for (acc, ei) in e0.iter_mut().zip(e) {
                *acc += coef[l] * ei;
            }
        }
        for t in 0..k_el {
            let base = t * n;
            for i in 1..=ne {
                let e = ws.even_out[(i - 1) * k_el + t];
                let o = if i <= no { ws.odd_out[(i - 1) * k_el + t] } else { 0.0 };
                out[base + i - 1] = e + o;
                if n - i != i {
                    out[base + n - i - 1] = e - o;
                }
            }
            for c in 0..n - 1 {
                out[base + c] += if t % 2 == 0 { e0[c] } else { -e0[n - 2 - c] };
            }
        }
        Ok(())
    }

    /// `coef = G⁻¹ Sᵀ y`, i.e. `F_n` applied to `𝒞⁻¹y`.
    pub fn direct_from_mass(&self, y: &[f64], coef: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        self.check_len(y.len())?;
        self.check_len(coef.len())?;
        let (k_el, n) = (self.elements(), self.order());
        let (ne, no) = (n / 2, (n - 1) / 2);
        for j in 1..k_el {
            ws.node_in[j - 1] = y[j * n - 1];
        }
        let v = &mut ws.zero;
        v.fill(0.0);
        for t in 0..k_el {
            let base = t * n;
            for i in 1..=ne {
                let a = y[base + i - 1];
                let (sum, diff) = if n - i != i {
                    let b = y[base + n - i - 1];
                    (a + b, a - b)
                } else {
                    (a, 0.0)
                };
                ws.even_in[(i - 1) * k_el + t] = sum;
                if i <= no {
                    ws.odd_in[(i - 1) * k_el + t] = diff;
                }
            }
            for c in 0..n - 1 {
                v[c] += if t % 2 == 0 { y[base + c] } else { -y[base + n - 2 - c] };
            }
        }
        self.dst1.execute(&ws.node_in, &mut ws.node_out, &mut ws.fft)?;
        for c in 0..ne {
            let r = c * k_el..(c + 1) * k_el;
            self.dst3_adj.execute(&ws.even_in[r.clone()], &mut ws.even_out[r], &mut ws.fft)?;
        }
        for c in 0..no {
            let r = c * k_el..(c + 1) * k_el;
            self.dct3_adj.execute(&ws.odd_in[r.clone()], &mut ws.odd_out[r], &mut ws.fft)?;
        }
        self.transforms.fetch_add(n as u64, Ordering::Relaxed);

        let inv_k = 1.0 / k_el as f64;
        for (l, e) in self.basis.element().interior.vectors.iter().enumerate() {
            coef[l] = e.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() * inv_k;
        }
        for k in 1..k_el {
            let row = (n - 1) + (k - 1) * n;
            for l in 0..n {
                let kl = (k - 1) * n + l;
                let mut s = self.proj_node[kl] * ws.node_out[k - 1];
                for c in 0..ne {
                    s += self.proj_even[kl * ne + c] * ws.even_out[c * k_el + k - 1];
                }
                for c in 0..no {
                    s += self.proj_odd[kl * no + c] * ws.odd_out[c * k_el + k];
                }
                coef[row + l] = s;
            }
        }
        Ok(())
    }

    /// `coef = S⁻¹ x`.
    pub fn direct(&self, x: &[f64], coef: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        self.check_len(x.len())?;
        let mut y = std::mem::take(&mut ws.line);
        self.mass.apply(x, &mut y);
        let r = self.direct_from_mass(&y, coef, ws);
        ws.line = y;
        r
    }

    /// In-place variants on one line.
    pub fn inverse_in_place(&self, line: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        let mut buf = std::mem::take(&mut ws.line);
        buf.copy_from_slice(line);
        let r = self.inverse(&buf, line, ws);
        ws.line = buf;
        r
    }

    pub fn direct_from_mass_in_place(&self, line: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        let mut buf = std::mem::take(&mut ws.line);
        buf.copy_from_slice(line);
        let r = self.direct_from_mass(&buf, line, ws);
        ws.line = buf;
        r
    }

    pub fn direct_in_place(&self, line: &mut [f64], ws: &mut FnWorkspace) -> Result<()> {
        let mut buf = std::mem::take(&mut ws.line);
        self.mass.apply(line, &mut buf);
        let r = self.direct_from_mass(&buf, line, ws);
        ws.line = buf;
        r
    }

    /// Scaled eigenvalue of each coefficient.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.basis.coefficient_eigenvalues()
    }

    /// Squared `𝒞`-norm of each coefficient's eigenvector.
    pub fn norms_sq(&self) -> Vec<f64> {
        let n = self.order();
        let mut out = vec![self.basis.zero_mode_norm_sq(); n - 1];
        out.extend_from_slice(&self.norms);
        out
    }

    /// Applies `S` along `axis` of a tensor.
    pub fn inverse_axis(&self, field: &mut TensorField, axis: usize) -> Result<()> {
        self.sweep(field, axis, Self::inverse_in_place)
    }

    /// Applies `N⁻¹Sᵀ` along `axis` of a tensor.
    pub fn direct_from_mass_axis(&self, field: &mut TensorField, axis: usize) -> Result<()> {
        self.sweep(field, axis, Self::direct_from_mass_in_place)
    }

    /// Applies `S⁻¹` along `axis` of a tensor.
    pub fn direct_axis(&self, field: &mut TensorField, axis: usize) -> Result<()> {
        self.sweep(field, axis, Self::direct_in_place)
    }

    fn sweep(
        &self,
        field: &mut TensorField,
        axis: usize,
        op: fn(&Self, &mut [f64], &mut FnWorkspace) -> Result<()>,
    ) -> Result<()> {
        let len = *field.shape().get(axis).ok_or_else(|| Error::ShapeMismatch(format!("axis {axis} out of range")))?;
        self.check_len(len)?;
        // Lengths are checked above, so the per-line calls cannot fail.
        field.for_each_line(
            axis,
            || self.workspace(),
            |ws, line| {
                op(self, line, ws).expect("line length was validated");
            },
        );
        Ok(())
    }
}

/// `G_k⁻¹` (row-major `n×n`) for the eigenvectors at frequency `k ≥ 1`,
/// built from the same even/odd tables the transforms use.
///
/// Eigenvectors next to an interior pole have norms many orders above their
/// neighbours, so dividing by the diagonal alone leaks their tiny residual
/// non-orthogonality into the small-norm coefficients. On element `t` a
/// column is `sin(πk(t+½)/K) V₊ + cos(πk(t+½)/K) V₋`, and the two profiles
/// are orthogonal over `t`, giving `G = (K/2)(V₊ᵀ𝒞V₊ + V₋ᵀ𝒞V₋)` per element.
fn inverse_gram(basis: &SpectralBasis1D, k: usize, even: &[f64], odd: &[f64]) -> Result<Vec<f64>> {
    let (k_el, n) = (basis.elements(), basis.order());
    let (ne, no) = (n / 2, (n - 1) / 2);
    let pencil = &basis.element().pencil;
    let c: Vec<f64> =
        (0..=n).flat_map(|i| (0..=n).map(move |j| (i, j))).map(|(i, j)| pencil.mass_entry(i, j)).collect();
    let half = std::f64::consts::PI * k as f64 / (2 * k_el) as f64;
    let (sn, cs) = half.sin_cos();
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for l in 0..n {
        let kl = (k - 1) * n + l;
        let mut vp = vec![0.0; n + 1];
        let mut vm = vec![0.0; n + 1];
        (vp[0], vp[n]) = (cs, cs);
        (vm[0], vm[n]) = (-sn, sn);
        for i in 1..=ne {
            vp[i] = even[kl * ne + i - 1];
            vp[n - i] = vp[i];
        }
        for i in 1..=no {
            vm[i] = odd[kl * no + i - 1];
            vm[n - i] = -vm[i];
        }
        plus.push(vp);
        minus.push(vm);
    }
    let cp: Vec<Vec<f64>> = plus.iter().map(|x| dense::mat_vec(&c, n + 1, x)).collect();
    let cm: Vec<Vec<f64>> = minus.iter().map(|x| dense::mat_vec(&c, n + 1, x)).collect();
    let scale = 0.5 * k_el as f64;
    let mut g = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let val = scale * (dense::compensated_dot(&plus[a], &cp[b]) + dense::compensated_dot(&minus[a], &cm[b]));
            g[a * n + b] = val;
            g[b * n + a] = val;
        }
    }
    let theta = basis.theta(k);
    let d: Vec<f64> = (0..n).map(|a| g[a * n + a].sqrt()).collect();
    for a in 0..n {
        for b in 0..n {
            g[a * n + b] /= d[a] * d[b];
        }
    }
    let l = dense::cholesky(&g, n).map_err(|row| Error::SecularSolveFailed {
        theta,
        reason: format!("eigenvector Gram matrix is not positive definite at row {row}"),
    })?;
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for b in 0..n {
        col.fill(0.0);
        col[b] = 1.0;
        dense::forward_substitute(&l, n, &mut col);
        dense::backward_substitute(&l, n, &mut col);
        for a in 0..n {
            inv[a * n + b] = col[a] / (d[a] * d[b]);
        }
    }
    Ok(inv)
}
