//! Minimal deterministic tensor and gradient engine.
//!
//! There is no autodiff graph. Each layer has a hand-derived backward pass
//! that accumulates into its parameters' gradient buffers; the finite
//! difference checks in [`gradcheck`] validate every one of them.
//! All data is `f64`, row-major, batch-first.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

mod adam;
mod conv;
pub mod gradcheck;
mod linear;
mod loss;
mod lstm;

pub use adam::Adam;
pub use conv::{Conv2d, Conv2dCache};
pub use linear::Linear;
pub use loss::{cross_entropy, mse, softmax, softmax_cross_entropy, softmax_rows};
pub use lstm::{Lstm, LstmSeq, LstmStep};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
}

pub type Result<T> = core::result::Result<T, NnError>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(NnError::ShapeMismatch { what, expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &'static str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite(what))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_len("tensor data", shape.iter().product(), data.len())?;
        Ok(Tensor { shape: shape.to_vec(), data })
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        check_finite(what, &self.data)
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Param { value: Tensor::zeros(shape), grad: Tensor::zeros(shape) }
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut crate::rng::Rng) -> Self {
        use rand::Rng as _;
        let mut p = Param::zeros(shape);
        for v in p.value.data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        p
    }
}

/// Named parameter traversal; the order is fixed and defines checkpoint and
/// optimizer layout.
pub trait Parameters {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.grad.fill(0.0));
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.value.len());
        n
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Parameters> Parameters for Option<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        if let Some(m) = self {
            m.visit(prefix, f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some(m) = self {
            m.visit_mut(prefix, f);
        }
    }
}

/// `C = op(A)·op(B) + beta·C` for row-major matrices, `op(A)` being m×k and
/// `op(B)` k×n. `trans_a` means `A` is stored k×m; `trans_b` means `B` is
/// stored n×k.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides address exactly the m×k, k×n and m×n elements whose
    // presence the assert above guarantees, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn tanh_inplace(xs: &mut [f64]) {
    for x in xs {
        *x = libm::tanh(*x);
    }
}

/// Backward of `y = tanh(x)` given the outputs `y`, in place on `dy`.
pub fn tanh_backward(y: &[f64], dy: &mut [f64]) {
    for (d, y) in dy.iter_mut().zip(y) {
        *d *= 1.0 - y * y;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        let naive = |a_at: &dyn Fn(usize, usize) -> f64, b_at: &dyn Fn(usize, usize) -> f64| {
            let mut c = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    c[i * n + j] = (0..k).map(|p| a_at(i, p) * b_at(p, j)).sum();
                }
            }
            c
        };
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, false, &b, false, 0.0, &mut c);
        let want = naive(&|i, p| a[i * k + p], &|p, j| b[p * n + j]);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        // A stored k×m, B stored n×k
        let mut c2 = vec![1.0; m * n];
        gemm(m, k, n, &a, true, &b, true, 1.0, &mut c2);
        let want2 = naive(&|i, p| a[p * m + i], &|p, j| b[j * k + p]);
        for (x, y) in c2.iter().zip(&want2) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_shape_checked() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let mut t = Tensor::zeros(&[2, 2]);
        t.data_mut()[0] = f64::NAN;
        assert_eq!(t.ensure_finite("t"), Err(NnError::NonFinite("t")));
    }

    #[test]
    fn sigmoid_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
