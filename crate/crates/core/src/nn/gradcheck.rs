//! Central finite-difference checks of the hand-written backward passes.
//!
//! Each layer check builds a small random instance, applies a random linear
//! functional `L = Σ rᵢ·yᵢ` to its outputs and compares analytic gradients of
//! every parameter and input entry against `(L(w+h) − L(w−h)) / 2h`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{mse, softmax_cross_entropy, Conv2d, Linear, Lstm, Parameters};
use crate::rng::{stream, Rng};

/// Step used by every check.
pub const STEP: f64 = 1e-5;

/// Gradients smaller than this in both estimates are compared absolutely.
pub const FLOOR: f64 = 1e-7;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(FLOOR);
    (analytic - numeric).abs() / scale
}

/// Outcome of one check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub entries: usize,
}

impl GradReport {
    fn merge(self, o: GradReport) -> GradReport {
        GradReport { max_rel_error: self.max_rel_error.max(o.max_rel_error), entries: self.entries + o.entries }
    }
}

fn random_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nudge<M: Parameters + ?Sized>(model: &mut M, index: usize, delta: f64) {
    let mut seen = 0;
    model.visit_mut("", &mut |_, p| {
        let n = p.value.len();
        if index >= seen && index < seen + n {
            p.value.data_mut()[index - seen] += delta;
        }
        seen += n;
    });
}

/// Checks every parameter of `model`. `loss(model, backward)` must return the
/// scalar loss and, when `backward` is set, accumulate its parameter
/// gradients.
pub fn check_params<M, F>(model: &mut M, loss: F) -> GradReport
where
    M: Parameters + ?Sized,
    F: FnMut(&mut M, bool) -> f64,
{
    check_params_strided(model, 1, loss)
}

/// [`check_params`] on every `stride`-th parameter entry only.
pub fn check_params_strided<M, F>(model: &mut M, stride: usize, mut loss: F) -> GradReport
where
    M: Parameters + ?Sized,
    F: FnMut(&mut M, bool) -> f64,
{
    model.zero_grad();
    loss(model, true);
    let mut analytic = Vec::new();
    model.visit("", &mut |_, p| analytic.extend_from_slice(p.grad.data()));
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, &a) in analytic.iter().enumerate().step_by(stride.max(1)) {
        checked += 1;
        nudge(model, i, STEP);
        let up = loss(model, false);
        nudge(model, i, -2.0 * STEP);
        let down = loss(model, false);
        nudge(model, i, STEP);
        worst = worst.max(rel_error(a, (up - down) / (2.0 * STEP)));
    }
    GradReport { max_rel_error: worst, entries: checked }
}

/// Checks an input gradient `analytic` of the scalar function `f` at `x`.
pub fn check_input<F: FnMut(&[f64]) -> f64>(x: &[f64], analytic: &[f64], mut f: F) -> GradReport {
    let mut xs = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        let orig = xs[i];
        xs[i] = orig + STEP;
        let up = f(&xs);
        xs[i] = orig - STEP;
        let down = f(&xs);
        xs[i] = orig;
        worst = worst.max(rel_error(analytic[i], (up - down) / (2.0 * STEP)));
    }
    GradReport { max_rel_error: worst, entries: xs.len() }
}

pub fn check_linear(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x11);
    let (batch, input, output) = (3, 5, 4);
    let mut layer = Linear::new(input, output, &mut rng);
    let x = random_vec(&mut rng, batch * input, 1.0);
    let r = random_vec(&mut rng, batch * output, 1.0);
    let params = check_params(&mut layer, |l, bw| {
        let y = l.forward(&x, batch).expect("linear");
        if bw {
            l.backward(&x, &r, batch);
        }
        dot(&y, &r)
    });
    let dx = layer.clone().backward(&x, &r, batch);
    let input_report = check_input(&x, &dx, |xs| dot(&layer.forward(xs, batch).expect("linear"), &r));
    params.merge(input_report)
}

pub fn check_lstm(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x12);
    let (steps, batch, input, hidden) = (4, 2, 3, 5);
    let mut lstm = Lstm::new(input, hidden, &mut rng);
    let xs = random_vec(&mut rng, steps * batch * input, 1.0);
    let h0 = random_vec(&mut rng, batch * hidden, 0.5);
    let c0 = random_vec(&mut rng, batch * hidden, 0.5);
    let rh = random_vec(&mut rng, steps * batch * hidden, 1.0);
    let rc = random_vec(&mut rng, batch * hidden, 1.0);
    let eval = |l: &Lstm, xs: &[f64], h0: &[f64], c0: &[f64]| {
        let seq = l.forward(xs, steps, batch, h0, c0).expect("lstm");
        let loss = dot(&seq.hidden_states(), &rh) + dot(seq.last_c(), &rc);
        (seq, loss)
    };
    let params = check_params(&mut lstm, |l, bw| {
        let (seq, loss) = eval(l, &xs, &h0, &c0);
        if bw {
            l.backward(&seq, Some(&rh), None, Some(&rc));
        }
        loss
    });
    let (seq, _) = eval(&lstm, &xs, &h0, &c0);
    let (dxs, dh0, dc0) = lstm.clone().backward(&seq, Some(&rh), None, Some(&rc));
    let a = check_input(&xs, &dxs, |v| eval(&lstm, v, &h0, &c0).1);
    let b = check_input(&h0, &dh0, |v| eval(&lstm, &xs, v, &c0).1);
    let c = check_input(&c0, &dc0, |v| eval(&lstm, &xs, &h0, v).1);
    params.merge(a).merge(b).merge(c)
}

pub fn check_conv(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x13);
    let batch = 2;
    let mut conv = Conv2d::new(2, 3, 3, 2, 1, 7, 6, &mut rng);
    let x = random_vec(&mut rng, batch * conv.in_size(), 1.0);
    let r = random_vec(&mut rng, batch * conv.out_size(), 1.0);
    let params = check_params(&mut conv, |c, bw| {
        let (y, cache) = c.forward(&x, batch).expect("conv");
        if bw {
            c.backward(&cache, &r, false);
        }
        dot(&y, &r)
    });
    let (_, cache) = conv.forward(&x, batch).expect("conv");
    let dx = conv.clone().backward(&cache, &r, true).expect("dx requested");
    let input_report = check_input(&x, &dx, |xs| dot(&conv.forward(xs, batch).expect("conv").0, &r));
    params.merge(input_report)
}

pub fn check_softmax_ce(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x14);
    let (batch, classes) = (4, 3);
    let logits = random_vec(&mut rng, batch * classes, 3.0);
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..classes)).collect();
    let (_, grad, _) = softmax_cross_entropy(&logits, &labels, classes).expect("ce");
    check_input(&logits, &grad, |z| softmax_cross_entropy(z, &labels, classes).expect("ce").0)
}

pub fn check_mse(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x15);
    let n = 12;
    let pred = random_vec(&mut rng, n, 2.0);
    let target = random_vec(&mut rng, n, 2.0);
    let (_, grad) = mse(&pred, &target).expect("mse");
    check_input(&pred, &grad, |p| mse(p, &target).expect("mse").0)
}

/// tanh as used between layers, checked through `tanh_backward`.
pub fn check_tanh(seed: u64) -> GradReport {
    let mut rng = stream(seed, 0x16);
    let x = random_vec(&mut rng, 10, 2.0);
    let r = random_vec(&mut rng, 10, 1.0);
    let mut y = x.clone();
    super::tanh_inplace(&mut y);
    let mut d = r.clone();
    super::tanh_backward(&y, &mut d);
    check_input(&x, &d, |v| {
        let mut t = v.to_vec();
        super::tanh_inplace(&mut t);
        dot(&t, &r)
    })
}

/// All layer checks over `seeds` seeds, returned as (layer, worst report).
pub fn check_all(seeds: u64) -> Vec<(&'static str, GradReport)> {
    type Check = fn(u64) -> GradReport;
    let checks: [(&'static str, Check); 6] = [
        ("lstm", check_lstm),
        ("fc", check_linear),
        ("conv", check_conv),
        ("softmax+ce", check_softmax_ce),
        ("mse", check_mse),
        ("tanh", check_tanh),
    ];
    let mut out = vec![];
    for (name, f) in checks {
        let mut worst = GradReport { max_rel_error: 0.0, entries: 0 };
        for s in 0..seeds {
            worst = worst.merge(f(s));
        }
        out.push((name, worst));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_passes_on_a_few_seeds() {
        for (name, r) in check_all(3) {
            assert!(r.max_rel_error < 1e-4, "{name}: {r:?}");
            assert!(r.entries > 0);
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = [0.3, -1.2];
        let r = check_input(&x, &[2.0 * 0.3, 0.0], |v| v[0] * v[0] + v[1] * v[1]);
        assert!(r.max_rel_error > 0.5);
    }
}
