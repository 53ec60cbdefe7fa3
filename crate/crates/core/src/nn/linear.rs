use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_finite, check_len, gemm, join, Param, Parameters, Result};
use crate::rng::Rng;

/// Fully connected layer `y = x·Wᵀ + b`, `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(input.max(1) as f64);
        Linear {
            w: Param::uniform(&[output, input], bound, rng),
            b: Param::uniform(&[output], bound, rng),
            input,
            output,
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { w: Param::zeros(&[output, input]), b: Param::zeros(&[output]), input, output }
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        check_len("linear input", batch * self.input, x.len())?;
        let mut y = vec![0.0; batch * self.output];
        for row in y.chunks_exact_mut(self.output) {
            row.copy_from_slice(self.b.value.data());
        }
        gemm(batch, self.input, self.output, x, false, self.w.value.data(), true, 1.0, &mut y);
        check_finite("linear output", &y)?;
        Ok(y)
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], batch: usize) -> Vec<f64> {
        self.accumulate(x, dy, batch);
        let mut dx = vec![0.0; batch * self.input];
        gemm(batch, self.output, self.input, dy, false, self.w.value.data(), false, 0.0, &mut dx);
        dx
    }

    /// Parameter gradients only.
    pub fn accumulate(&mut self, x: &[f64], dy: &[f64], batch: usize) {
        gemm(self.output, batch, self.input, dy, true, x, false, 1.0, self.w.grad.data_mut());
        let db = self.b.grad.data_mut();
        for row in dy.chunks_exact(self.output) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}
