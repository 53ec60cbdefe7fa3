use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_finite, check_len, gemm, join, sigmoid, Param, Parameters, Result};
use crate::rng::Rng;

/// LSTM layer. Gate blocks in the 4H dimension are ordered
/// (input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub input_w: Param,
    pub recurrent_w: Param,
    pub bias: Param,
    pub input: usize,
    pub hidden: usize,
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone)]
pub struct LstmStep {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Post-activation gates, batch × 4H.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Output of a full sequence pass.
#[derive(Debug, Clone)]
pub struct LstmSeq {
    pub steps: Vec<LstmStep>,
    pub batch: usize,
}

impl LstmSeq {
    pub fn last_h(&self) -> &[f64] {
        &self.steps.last().expect("empty sequence").h
    }

    pub fn last_c(&self) -> &[f64] {
        &self.steps.last().expect("empty sequence").c
    }

    /// Hidden states, time-major T × batch × H.
    pub fn hidden_states(&self) -> Vec<f64> {
        self.steps.iter().flat_map(|s| s.h.iter().copied()).collect()
    }
}

impl Lstm {
    /// Uniform ±1/√fan_in weights, zero bias except the forget gate at 1.
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut l = Lstm {
            input_w: Param::uniform(&[4 * hidden, input], 1.0 / libm::sqrt(input.max(1) as f64), rng),
            recurrent_w: Param::uniform(&[4 * hidden, hidden], 1.0 / libm::sqrt(hidden as f64), rng),
            bias: Param::zeros(&[4 * hidden]),
            input,
            hidden,
        };
        l.bias.value.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        l
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            input_w: Param::zeros(&[4 * hidden, input]),
            recurrent_w: Param::zeros(&[4 * hidden, hidden]),
            bias: Param::zeros(&[4 * hidden]),
            input,
            hidden,
        }
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], batch: usize) -> Result<LstmStep> {
        let hd = self.hidden;
        check_len("lstm input", batch * self.input, x.len())?;
        check_len("lstm hidden", batch * hd, h_prev.len())?;
        check_len("lstm cell", batch * hd, c_prev.len())?;
        let g4 = 4 * hd;
        let mut gates = vec![0.0; batch * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(batch, self.input, g4, x, false, self.input_w.value.data(), true, 1.0, &mut gates);
        gemm(batch, hd, g4, h_prev, false, self.recurrent_w.value.data(), true, 1.0, &mut gates);
        let mut c = vec![0.0; batch * hd];
        let mut tanh_c = vec![0.0; batch * hd];
        let mut h = vec![0.0; batch * hd];
        for b in 0..batch {
            let g = &mut gates[b * g4..(b + 1) * g4];
            for j in 0..hd {
                let i = sigmoid(g[j]);
                let f = sigmoid(g[hd + j]);
                let cc = libm::tanh(g[2 * hd + j]);
                let o = sigmoid(g[3 * hd + j]);
                g[j] = i;
                g[hd + j] = f;
                g[2 * hd + j] = cc;
                g[3 * hd + j] = o;
                let k = b * hd + j;
                c[k] = f * c_prev[k] + i * cc;
                tanh_c[k] = libm::tanh(c[k]);
                h[k] = o * tanh_c[k];
            }
        }
        check_finite("lstm state", &c)?;
        Ok(LstmStep { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, tanh_c, h, c })
    }

    /// Backward through one step. `dh`, `dc` are the gradients w.r.t. this
    /// step's outputs; returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &mut self,
        s: &LstmStep,
        dh: &[f64],
        dc: &[f64],
        batch: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let g4 = 4 * hd;
        let mut da = vec![0.0; batch * g4];
        let mut dc_prev = vec![0.0; batch * hd];
        for b in 0..batch {
            let g = &s.gates[b * g4..(b + 1) * g4];
            let d = &mut da[b * g4..(b + 1) * g4];
            for j in 0..hd {
                let k = b * hd + j;
                let (i, f, cc, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                let tc = s.tanh_c[k];
                let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
                d[j] = dct * cc * i * (1.0 - i);
                d[hd + j] = dct * s.c_prev[k] * f * (1.0 - f);
                d[2 * hd + j] = dct * i * (1.0 - cc * cc);
                d[3 * hd + j] = dh[k] * tc * o * (1.0 - o);
                dc_prev[k] = dct * f;
            }
        }
        gemm(g4, batch, self.input, &da, true, &s.x, false, 1.0, self.input_w.grad.data_mut());
        gemm(g4, batch, hd, &da, true, &s.h_prev, false, 1.0, self.recurrent_w.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in da.chunks_exact(g4) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = vec![0.0; batch * self.input];
        gemm(batch, g4, self.input, &da, false, self.input_w.value.data(), false, 0.0, &mut dx);
        let mut dh_prev = vec![0.0; batch * hd];
        gemm(batch, g4, hd, &da, false, self.recurrent_w.value.data(), false, 0.0, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }

    /// Runs a time-major `T × batch × I` sequence from `(h0, c0)`.
    pub fn forward(&self, xs: &[f64], steps: usize, batch: usize, h0: &[f64], c0: &[f64]) -> Result<LstmSeq> {
        check_len("lstm sequence", steps * batch * self.input, xs.len())?;
        let stride = batch * self.input;
        let mut out = Vec::with_capacity(steps);
        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        for t in 0..steps {
            let s = self.step(&xs[t * stride..(t + 1) * stride], &h, &c, batch)?;
            h.clone_from(&s.h);
            c.clone_from(&s.c);
            out.push(s);
        }
        Ok(LstmSeq { steps: out, batch })
    }

    /// Backpropagation through time. `dhs` optionally holds per-step hidden
    /// gradients (T × batch × H); `dh_last`/`dc_last` are added at the final
    /// step. Returns `(dxs, dh0, dc0)` with `dxs` time-major.
    pub fn backward(
        &mut self,
        seq: &LstmSeq,
        dhs: Option<&[f64]>,
        dh_last: Option<&[f64]>,
        dc_last: Option<&[f64]>,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let batch = seq.batch;
        let n = batch * self.hidden;
        let steps = seq.steps.len();
        let mut dxs = vec![0.0; steps * batch * self.input];
        let mut dh = dh_last.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        let mut dc = dc_last.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        for t in (0..steps).rev() {
            if let Some(d) = dhs {
                for (a, b) in dh.iter_mut().zip(&d[t * n..(t + 1) * n]) {
                    *a += b;
                }
            }
            let (dx, dhp, dcp) = self.step_backward(&seq.steps[t], &dh, &dc, batch);
            let w = batch * self.input;
            dxs[t * w..(t + 1) * w].copy_from_slice(&dx);
            dh = dhp;
            dc = dcp;
        }
        (dxs, dh, dc)
    }
}

impl Parameters for Lstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "input_w"), &self.input_w);
        f(join(prefix, "recurrent_w"), &self.recurrent_w);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "input_w"), &mut self.input_w);
        f(join(prefix, "recurrent_w"), &mut self.recurrent_w);
        f(join(prefix, "bias"), &mut self.bias);
    }
}
