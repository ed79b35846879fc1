//! Unnormalized real trigonometric transforms on interior nodes and on
//! element centers.
//!
//! All kinds are computed through a complex FFT of length `2K` (odd
//! extension for DST-I, a half-sample phase twiddle for the center
//! transforms). Lengths whose prime factors are not in {2, 3, 5} fall back
//! to the direct `O(K^2)` sums.
//!
//! | kind               | input index | output index | sum                                        |
//! |--------------------|-------------|--------------|--------------------------------------------|
//! | `Dst1`             | j = 1..K-1  | k = 1..K-1   | `Σ_j x_j sin(πjk/K)`                        |
//! | `Dst3Half`         | k = 1..K    | t = 0..K-1   | `Σ_k d_k sin(πk(t+1/2)/K)`                  |
//! | `Dct3Half`         | k = 0..K-1  | t = 0..K-1   | `Σ_k d_k cos(πk(t+1/2)/K)`                  |
//! | `Dst3HalfAdjoint`  | t = 0..K-1  | k = 1..K     | `Σ_t x_t sin(πk(t+1/2)/K)`                  |
//! | `Dct3HalfAdjoint`  | t = 0..K-1  | k = 0..K-1   | `Σ_t x_t cos(πk(t+1/2)/K)`                  |

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformKind {
    Dst1,
    Dst3Half,
    Dct3Half,
    Dst3HalfAdjoint,
    Dct3HalfAdjoint,
}

impl TransformKind {
    pub const ALL: [TransformKind; 5] = [
        TransformKind::Dst1,
        TransformKind::Dst3Half,
        TransformKind::Dct3Half,
        TransformKind::Dst3HalfAdjoint,
        TransformKind::Dct3HalfAdjoint,
    ];

    /// Sequence length for element count `k`.
    pub fn len(self, k: usize) -> usize {
        match self {
            TransformKind::Dst1 => k - 1,
            _ => k,
        }
    }

    fn min_elements(self) -> usize {
        match self {
            TransformKind::Dst1 => 2,
            _ => 1,
        }
    }
}

/// True when `m` factors over {2, 3, 5}.
pub fn is_fast_length(mut m: usize) -> bool {
    if m == 0 {
        return false;
    }
    for p in [2, 3, 5] {
        while m.is_multiple_of(p) {
            m /= p;
        }
    }
    m == 1
}

/// Reusable, input-independent transform plan for one kind and element count.
#[derive(Clone)]
pub struct TransformPlan {
    kind: TransformKind,
    elements: usize,
    fft: Option<Arc<dyn Fft<f64>>>,
    twiddles: Vec<Complex<f64>>,
}

impl std::fmt::Debug for TransformPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransformPlan")
            .field("kind", &self.kind)
            .field("elements", &self.elements)
            .field("fast", &self.is_fast())
            .finish()
    }
}

/// Per-call working memory for [`TransformPlan::execute`].
#[derive(Debug, Default, Clone)]
pub struct TransformScratch {
    buffer: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
}

impl TransformPlan {
    pub fn new(kind: TransformKind, elements: usize) -> Result<Self> {
        Self::build(kind, elements, false)
    }

    /// A plan that always evaluates the direct sums.
    pub fn naive(kind: TransformKind, elements: usize) -> Result<Self> {
        Self::build(kind, elements, true)
    }

    fn build(kind: TransformKind, elements: usize, force_naive: bool) -> Result<Self> {
        if elements < kind.min_elements() {
            return Err(Error::UnsupportedLength(elements));
        }
        let fast = !force_naive && is_fast_length(elements);
        if !fast && !force_naive {
            log::warn!("K = {elements} has prime factors other than 2, 3, 5; using O(K^2) {kind:?} sums");
        }
        let fft = fast.then(|| {
            let direction = match kind {
                TransformKind::Dst1 => rustfft::FftDirection::Forward,
                _ => rustfft::FftDirection::Inverse,
            };
            FftPlanner::new().plan_fft(2 * elements, direction)
        });
        let twiddles = match kind {
            TransformKind::Dst1 => Vec::new(),
            _ => (0..=elements).map(|k| Complex::from_polar(1.0, PI * k as f64 / (2 * elements) as f64)).collect(),
        };
        Ok(Self { kind, elements, fft, twiddles })
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    /// Element count `K`.
    pub fn elements(&self) -> usize {
        self.elements
    }

    /// Input and output length.
    pub fn len(&self) -> usize {
        self.kind.len(self.elements)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_fast(&self) -> bool {
        self.fft.is_some()
    }

    pub fn make_scratch(&self) -> TransformScratch {
        let mut s = TransformScratch::default();
        self.reserve(&mut s);
        s
    }

    fn reserve(&self, s: &mut TransformScratch) {
        if let Some(fft) = &self.fft {
            let m = 2 * self.elements;
            if s.buffer.len() < m {
                s.buffer.resize(m, Complex::default());
            }
            let need = fft.get_inplace_scratch_len();
            if s.fft.len() < need {
                s.fft.resize(need, Complex::default());
            }
        }
    }

    pub fn execute(&self, input: &[f64], output: &mut [f64], scratch: &mut TransformScratch) -> Result<()> {
        let len = self.len();
        for actual in [input.len(), output.len()] {
            if actual != len {
                return Err(Error::LengthMismatch { expected: len, actual });
            }
        }
        match &self.fft {
            None => naive(self.kind, self.elements, input, output),
            Some(fft) => {
                self.reserve(scratch);
                self.execute_fast(fft.as_ref(), input, output, scratch)
            }
        }
        Ok(())
    }

    fn execute_fast(&self, fft: &dyn Fft<f64>, input: &[f64], output: &mut [f64], s: &mut TransformScratch) {
        let k_count = self.elements;
        let m = 2 * k_count;
        let fft_scratch_len = fft.get_inplace_scratch_len();
        let buf = &mut s.buffer[..m];
        buf.iter_mut().for_each(|z| *z = Complex::default());
        let tw = &self.twiddles;
        match self.kind {
            TransformKind::Dst1 => {
                for (j, &x) in input.iter().enumerate() {
                    buf[j + 1] = Complex::new(x, 0.0);
                    buf[m - j - 1] = Complex::new(-x, 0.0);
                }
            }
            TransformKind::Dst3Half => {
                for (i, &d) in input.iter().enumerate() {
                    buf[i + 1] = tw[i + 1] * d;
                }
            }
            TransformKind::Dct3Half => {
                for (i, &d) in input.iter().enumerate() {
                    buf[i] = tw[i] * d;
                }
            }
            TransformKind::Dst3HalfAdjoint | TransformKind::Dct3HalfAdjoint => {
                for (t, &x) in input.iter().enumerate() {
                    buf[t] = Complex::new(x, 0.0);
                }
            }
        }
        fft.process_with_scratch(buf, &mut s.fft[..fft_scratch_len]);
        match self.kind {
            TransformKind::Dst1 => {
                for (k, out) in output.iter_mut().enumerate() {
                    *out = -0.5 * buf[k + 1].im;
                }
            }
            TransformKind::Dst3Half => {
                for (t, out) in output.iter_mut().enumerate() {
                    *out = buf[t].im;
                }
            }
            TransformKind::Dct3Half => {
                for (t, out) in output.iter_mut().enumerate() {
                    *out = buf[t].re;
                }
            }
            TransformKind::Dst3HalfAdjoint => {
                for (i, out) in output.iter_mut().enumerate() {
                    *out = (tw[i + 1] * buf[i + 1]).im;
                }
            }
            TransformKind::Dct3HalfAdjoint => {
                for (i, out) in output.iter_mut().enumerate() {
                    *out = (tw[i] * buf[i]).re;
                }
            }
        }
    }
}

/// Direct `O(K^2)` evaluation of the sums in the module table.
pub fn naive(kind: TransformKind, elements: usize, input: &[f64], output: &mut [f64]) {
    let kf = elements as f64;
    match kind {
        TransformKind::Dst1 => {
            for (ki, out) in output.iter_mut().enumerate() {
                let k = (ki + 1) as f64;
                *out = input.iter().enumerate().map(|(ji, x)| x * (PI * (ji + 1) as f64 * k / kf).sin()).sum();
            }
        }
        TransformKind::Dst3Half => {
            for (t, out) in output.iter_mut().enumerate() {
                let arg = PI * (t as f64 + 0.5) / kf;
                *out = input.iter().enumerate().map(|(i, d)| d * (arg * (i + 1) as f64).sin()).sum();
            }
        }
        TransformKind::Dct3Half => {
            for (t, out) in output.iter_mut().enumerate() {
                let arg = PI * (t as f64 + 0.5) / kf;
                *out = input.iter().enumerate().map(|(i, d)| d * (arg * i as f64).cos()).sum();
            }
        }
        TransformKind::Dst3HalfAdjoint => {
            for (i, out) in output.iter_mut().enumerate() {
                let k = (i + 1) as f64;
                *out = input.iter().enumerate().map(|(t, x)| x * (PI * k * (t as f64 + 0.5) / kf).sin()).sum();
            }
        }
        TransformKind::Dct3HalfAdjoint => {
            for (i, out) in output.iter_mut().enumerate() {
                let k = i as f64;
                *out = input.iter().enumerate().map(|(t, x)| x * (PI * k * (t as f64 + 0.5) / kf).cos()).sum();
            }
        }
    }
}
