//! Tensor-product meshes, nodal fields and banded 1D operators.
//!
//! Degrees of freedom of one axis with `K` elements of order `n` are the
//! `nK - 1` interior nodes, ordered left to right. Element `j` (1-based),
//! local node `m` (`1 <= m <= n`) has flat index `(j-1)n + m - 1`. N-D
//! fields are stored row-major with the last axis contiguous.

use std::sync::Arc;

use rayon::prelude::*;

use crate::element::{LocalPencil, ReferenceElement};
use crate::error::{Error, Result};

/// Uniform mesh of `[0, X]` with `K` elements of order `n`.
#[derive(Debug, Clone)]
pub struct Mesh1D {
    elements: usize,
    length: f64,
    element: Arc<ReferenceElement>,
}

impl Mesh1D {
    pub fn new(elements: usize, order: usize, length: f64) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidMesh(format!("need at least 2 elements per axis, got {elements}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidMesh(format!("axis length must be positive and finite, got {length}")));
        }
        Ok(Self { elements, length, element: ReferenceElement::shared(order)? })
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn order(&self) -> usize {
        self.element.order()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn element(&self) -> &Arc<ReferenceElement> {
        &self.element
    }

    /// Element width `h = X/K`.
    pub fn h(&self) -> f64 {
        self.length / self.elements as f64
    }

    pub fn dim(&self) -> usize {
        self.order() * self.elements - 1
    }

    /// `(element, local node)`, both 0-based, of a degree of freedom.
    pub fn locate(&self, dof: usize) -> (usize, usize) {
        let n = self.order();
        (dof / n, dof % n + 1)
    }

    /// Coordinates of the degrees of freedom.
    pub fn coordinates(&self) -> Vec<f64> {
        let h = self.h();
        let nodes = &self.element.basis.nodes;
        (0..self.dim())
            .map(|dof| {
                let (e, m) = self.locate(dof);
                h * (e as f64 + 0.5 * (nodes[m] + 1.0))
            })
            .collect()
    }

    /// Scaled stiffness `𝒜`; the physical matrix is `(2/h)𝒜`.
    pub fn scaled_stiffness(&self) -> SymBand {
        assemble(&self.element.pencil, self.elements, |p, k, l| p.stiffness_entry(k, l))
    }

    /// Scaled mass `𝒞`; the physical matrix is `(h/2)𝒞`.
    pub fn scaled_mass(&self) -> SymBand {
        assemble(&self.element.pencil, self.elements, |p, k, l| p.mass_entry(k, l))
    }

    /// Factor of `4h⁻²𝒜 + μ𝒞`.
    pub fn shifted_factor(&self, mu: f64) -> Result<BandCholesky> {
        let s = 4.0 / (self.h() * self.h());
        let m = SymBand::combine(s, &self.scaled_stiffness(), mu, &self.scaled_mass());
        m.cholesky().map_err(|(row, pivot)| Error::IndefiniteShift { shift: mu, row, pivot })
    }
}

fn assemble(pencil: &LocalPencil, elements: usize, entry: impl Fn(&LocalPencil, usize, usize) -> f64) -> SymBand {
    let n = pencil.order;
    let dim = n * elements - 1;
    let mut band = SymBand::zeros(dim, n);
    for e in 0..elements {
        let global = |m: usize| (e * n + m).checked_sub(1).filter(|&g| g < dim);
        for k in 0..=n {
            let Some(gk) = global(k) else { continue };
            for l in 0..=k {
                let Some(gl) = global(l) else { continue };
                *band.entry_mut(gk, gl) += entry(pencil, k, l);
            }
        }
    }
    band
}

/// Symmetric banded matrix storing the lower band row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    dim: usize,
    bandwidth: usize,
    /// Row `i`, column `j` (`i - bw <= j <= i`) at `i(bw+1) + j + bw - i`.
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        Self { dim, bandwidth, data: vec![0.0; dim * (bandwidth + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    fn entry_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bandwidth, "entry outside the band");
        &mut self.data[i * (self.bandwidth + 1) + j + self.bandwidth - i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bandwidth {
            return 0.0;
        }
        self.data[i * (self.bandwidth + 1) + j + self.bandwidth - i]
    }

    /// `s·A + t·B` for matrices with equal shape.
    pub fn combine(s: f64, a: &SymBand, t: f64, b: &SymBand) -> SymBand {
        assert_eq!((a.dim, a.bandwidth), (b.dim, b.bandwidth));
        let data = a.data.iter().zip(&b.data).map(|(x, y)| s * x + t * y).collect();
        SymBand { dim: a.dim, bandwidth: a.bandwidth, data }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.get(i, j);
            }
        }
        out
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (d, w) = (self.dim, self.bandwidth);
        assert_eq!(x.len(), d);
        assert_eq!(y.len(), d);
        for i in 0..d {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(d - 1);
            let mut s = 0.0;
            for j in lo..=hi {
                s += self.get(i, j) * x[j];
            }
            y[i] = s;
        }
    }

    /// Banded Cholesky factor, or the failing `(row, pivot)`.
    pub fn cholesky(&self) -> std::result::Result<BandCholesky, (usize, f64)> {
        let (d, w) = (self.dim, self.bandwidth);
        let mut l = SymBand::zeros(d, w);
        for i in 0..d {
            let lo = i.saturating_sub(w);
            for j in lo..=i {
                let mut s = self.get(i, j);
                for k in i.saturating_sub(w).max(j.saturating_sub(w))..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err((i, s));
                    }
                    *l.entry_mut(i, i) = s.sqrt();
                } else {
                    *l.entry_mut(i, j) = s / l.get(j, j);
                }
            }
        }
        Ok(BandCholesky { lower: l })
    }
}

/// Lower Cholesky factor `L` of a [`SymBand`] matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    lower: SymBand,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.lower.dim
    }

    /// Overwrites `x` with `M⁻¹x`.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (d, w) = (self.lower.dim, self.lower.bandwidth);
        assert_eq!(x.len(), d);
        let l = &self.lower;
        for i in 0..d {
            let mut s = x[i];
            for k in i.saturating_sub(w)..i {
                s -= l.get(i, k) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        for i in (0..d).rev() {
            let mut s = x[i];
            for k in i + 1..(i + w + 1).min(d) {
                s -= l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
    }
}

/// Row-major N-D array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch { expected, actual: data.len() });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    /// Fills entry `idx` with `f(idx)`.
    pub fn from_fn(shape: &[usize], f: impl Fn(&[usize]) -> f64 + Sync) -> Self {
        let strides = strides(shape);
        let data = (0..shape.iter().product::<usize>())
            .into_par_iter()
            .map_init(
                || vec![0usize; shape.len()],
                |idx, flat| {
                    unravel(flat, shape, &strides, idx);
                    f(idx)
                },
            )
            .collect();
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[ravel(idx, &self.shape)]
    }

    pub fn dot(&self, other: &TensorField) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.par_iter().zip(&other.data).map(|(x, y)| x * y).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
    }

    /// `self += a·other`.
    pub fn axpy(&mut self, a: f64, other: &TensorField) {
        assert_eq!(self.shape, other.shape);
        self.data.par_iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
    }

    /// Runs `op` on every line along `axis`; see [`for_each_line`].
    pub fn for_each_line<S, I, F>(&mut self, axis: usize, init: I, op: F)
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, &mut [f64]) + Sync + Send,
    {
        for_each_line(&mut self.data, &self.shape, axis, init, |s, _, line| op(s, line));
    }

    /// Like [`TensorField::for_each_line`], also passing the line index.
    pub fn for_each_line_indexed<S, I, F>(&mut self, axis: usize, init: I, op: F)
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, usize, &mut [f64]) + Sync + Send,
    {
        for_each_line(&mut self.data, &self.shape, axis, init, op);
    }

    /// Applies a banded matrix along `axis`.
    pub fn apply_band(&mut self, axis: usize, m: &SymBand) {
        assert_eq!(self.shape[axis], m.dim());
        let d = m.dim();
        self.for_each_line(
            axis,
            || vec![0.0; d],
            |buf, line| {
                buf.copy_from_slice(line);
                m.apply(buf, line);
            },
        );
    }

    /// Solves with a factored banded matrix along `axis`.
    pub fn solve_band(&mut self, axis: usize, f: &BandCholesky) {
        assert_eq!(self.shape[axis], f.dim());
        self.for_each_line(axis, || (), |_, line| f.solve_in_place(line));
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn ravel(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (i, n)| acc * n + i)
}

pub fn unravel(mut flat: usize, shape: &[usize], strides: &[usize], out: &mut [usize]) {
    for a in 0..shape.len() {
        out[a] = flat / strides[a];
        flat %= strides[a];
    }
}

/// Number of lines gathered together when an axis is not contiguous.
const BLOCK_WIDTH: usize = 16;

#[derive(Clone, Copy)]
struct SharedMut(*mut f64);
// SAFETY: tasks built on this pointer touch pairwise disjoint index sets.
unsafe impl Send for SharedMut {}
unsafe impl Sync for SharedMut {}

/// Calls `op(state, index, line)` on every 1D line of `data` along `axis`.
///
/// The line index is the row-major flat index over the remaining axes.
///
/// Lines along the last axis are handed out in place. Along other axes,
/// blocks of adjacent lines are gathered into a contiguous buffer, processed
/// and scattered back, so each task streams whole cache lines. `init` builds
/// per-task scratch state.
pub fn for_each_line<S, I, F>(data: &mut [f64], shape: &[usize], axis: usize, init: I, op: F)
where
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [f64]) + Sync + Send,
{
    assert!(axis < shape.len(), "axis out of range");
    assert_eq!(data.len(), shape.iter().product::<usize>());
    let len = shape[axis];
    if len == 0 || data.is_empty() {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    if inner == 1 {
        let lines_per_task = (4096 / len).max(1);
        data.par_chunks_mut(len * lines_per_task).enumerate().for_each_init(&init, |s, (task, chunk)| {
            for (i, line) in chunk.chunks_exact_mut(len).enumerate() {
                op(s, task * lines_per_task + i, line);
            }
        });
        return;
    }
    let blocks = inner.div_ceil(BLOCK_WIDTH);
    let ptr = SharedMut(data.as_mut_ptr());
    (0..outer * blocks).into_par_iter().for_each_init(
        || (init(), vec![0.0; BLOCK_WIDTH * len]),
        |(s, buf), task| {
            // Capture the Send wrapper, not its raw pointer field.
            #[allow(clippy::redundant_locals)]
            let ptr = ptr;
            let (o, b) = (task / blocks, task % blocks);
            let c0 = b * BLOCK_WIDTH;
            let width = BLOCK_WIDTH.min(inner - c0);
            let base = o * len * inner + c0;
            // SAFETY: task (o, b) owns columns c0..c0+width of slab o, which
            // no other task touches; all offsets are below data.len().
            unsafe {
                for i in 0..len {
                    let row = ptr.0.add(base + i * inner);
                    for w in 0..width {
                        buf[w * len + i] = *row.add(w);
                    }
                }
            }
            for w in 0..width {
                op(s, o * inner + c0 + w, &mut buf[w * len..(w + 1) * len]);
            }
            unsafe {
                for i in 0..len {
                    let row = ptr.0.add(base + i * inner);
                    for w in 0..width {
                        *row.add(w) = buf[w * len + i];
                    }
                }
            }
        },
    );
}

/// Tensor-product mesh of a box `Π [0, X_i]`.
#[derive(Debug, Clone)]
pub struct TensorMesh {
    axes: Vec<Mesh1D>,
}

impl TensorMesh {
    pub fn new(axes: Vec<Mesh1D>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidMesh("need at least one axis".into()));
        }
        let n = axes[0].order();
        if axes.iter().any(|a| a.order() != n) {
            return Err(Error::InvalidMesh("all axes must share the element order".into()));
        }
        Ok(Self { axes })
    }

    /// `dims` identical axes.
    pub fn uniform(dims: usize, elements: usize, order: usize, length: f64) -> Result<Self> {
        let axis = Mesh1D::new(elements, order, length)?;
        Self::new(vec![axis; dims])
    }

    pub fn axes(&self) -> &[Mesh1D] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn order(&self) -> usize {
        self.axes[0].order()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Mesh1D::dim).collect()
    }

    pub fn unknowns(&self) -> usize {
        self.axes.iter().map(Mesh1D::dim).product()
    }
}
