use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, Parameters, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update of every parameter of `model` from its accumulated
    /// gradients. Non-finite gradients abort the step before anything moves.
    pub fn step<P: Parameters + ?Sized>(&mut self, model: &mut P) -> Result<()> {
        let mut finite = true;
        model.visit("", &mut |_, p| finite &= p.grad.data().iter().all(|g| g.is_finite()));
        if !finite {
            return Err(NnError::NonFinite("gradient"));
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        model.visit_mut("", &mut |_, p| {
            if ms.len() <= idx {
                ms.push(vec![0.0; p.value.len()]);
                vs.push(vec![0.0; p.value.len()]);
            }
            let (m, v) = (&mut ms[idx], &mut vs[idx]);
            let grads = p.grad.data().to_vec();
            for (((w, g), m), v) in p.value.data_mut().iter_mut().zip(&grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= lr * mh / (libm::sqrt(vh) + eps);
            }
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Param, Parameters};
    use alloc::string::String;

    struct Quad {
        p: Param,
    }

    impl Parameters for Quad {
        fn visit(&self, _: &str, f: &mut dyn FnMut(String, &Param)) {
            f("p".into(), &self.p);
        }
        fn visit_mut(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Param)) {
            f("p".into(), &mut self.p);
        }
    }

    fn quad(vals: &[f64]) -> Quad {
        let mut p = Param::zeros(&[vals.len()]);
        p.value.data_mut().copy_from_slice(vals);
        Quad { p }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut q = quad(&[1.0, -2.0, 0.5]);
        q.p.grad.data_mut().copy_from_slice(&[3.0, -0.01, 0.0]);
        let mut opt = Adam::new(0.001);
        opt.step(&mut q).unwrap();
        let w = q.p.value.data();
        // m̂/√v̂ = g/|g| on the first step
        assert!((w[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((w[1] - (-2.0 + 0.001)).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut q = quad(&[1.0, 2.0]);
        let mut opt = Adam::new(0.01);
        for _ in 0..5 {
            opt.step(&mut q).unwrap();
        }
        assert_eq!(q.p.value.data(), &[1.0, 2.0]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut q = quad(&[1.0]);
        q.p.grad.data_mut()[0] = f64::NAN;
        let mut opt = Adam::new(0.01);
        assert!(opt.step(&mut q).is_err());
        assert_eq!(q.p.value.data(), &[1.0]);
        assert_eq!(opt.t, 0);
    }

    #[test]
    fn descends_convex_quadratic() {
        // f(w) = Σ a_i (w_i - c_i)²
        let a = [1.0, 4.0, 0.25];
        let c = [0.5, -1.0, 2.0];
        let mut q = quad(&[3.0, 3.0, -3.0]);
        let mut opt = Adam::new(0.05);
        let loss = |w: &[f64]| w.iter().zip(&a).zip(&c).map(|((w, a), c)| a * (w - c) * (w - c)).sum::<f64>();
        let mut losses = Vec::new();
        for _ in 0..200 {
            let w = q.p.value.data().to_vec();
            losses.push(loss(&w));
            for (i, g) in q.p.grad.data_mut().iter_mut().enumerate() {
                *g = 2.0 * a[i] * (w[i] - c[i]);
            }
            opt.step(&mut q).unwrap();
        }
        // monotone after a short warmup
        for w in losses[10..100].windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} > {}", w[1], w[0]);
        }
        assert!(losses[199] < 1e-2 * losses[0]);
    }
}
