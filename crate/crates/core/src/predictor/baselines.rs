//! Learned baselines: a single-mode decoder fed its own previous waypoint
//! (FF-LSTM) and a multimodal FC head trained winner-takes-all (MTP-LSTM).

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::features::{Batch, FeatureSet, TARGET_SCALE};
use super::models::{SeqEncoder, Trainable};
use super::{ModeSet, Result};
use crate::geometry::{Trajectory, Vec2};
use crate::nn::{
    join, softmax_cross_entropy, softmax_rows, tanh_backward, tanh_inplace, Linear, Lstm, LstmStep, Param, Parameters,
};
use crate::rng::Rng;
use crate::{NUM_MODES, PRED_DT, PRED_LEN};

/// Encoder → FC(dim→2H) → tanh → `(h₀, c₀)`; each decoder step takes the
/// previous predicted waypoint (the origin at the first step) and emits the
/// next through FC(H→2).
#[derive(Debug, Clone, PartialEq)]
pub struct FfLstm {
    pub features: FeatureSet,
    pub encoder: SeqEncoder,
    pub init: Linear,
    pub decoder: Lstm,
    pub out: Linear,
}

struct FfPass {
    enc: super::models::EncPass,
    init: Vec<f64>,
    steps: Vec<LstmStep>,
    /// Per step `B × 2`, scaled units.
    ys: Vec<Vec<f64>>,
}

impl FfLstm {
    pub fn new(features: FeatureSet, hidden: usize, rng: &mut Rng) -> Self {
        let encoder = SeqEncoder::new(features, hidden, rng);
        let init = Linear::new(encoder.dim(), 2 * hidden, rng);
        let decoder = Lstm::new(2, hidden, rng);
        let out = Linear::new(hidden, 2, rng);
        FfLstm { features, encoder, init, decoder, out }
    }

    pub fn zeroed(mut self) -> Self {
        self.visit_mut("", &mut |_, p| p.value.fill(0.0));
        self
    }

    fn pass(&self, batch: &Batch) -> Result<FfPass> {
        let b = batch.size;
        let hd = self.decoder.hidden;
        let enc = self.encoder.forward(batch)?;
        let mut init = self.init.forward(&enc.fused, b)?;
        tanh_inplace(&mut init);
        let (mut h, mut c) = (vec![0.0; b * hd], vec![0.0; b * hd]);
        for r in 0..b {
            h[r * hd..(r + 1) * hd].copy_from_slice(&init[r * 2 * hd..r * 2 * hd + hd]);
            c[r * hd..(r + 1) * hd].copy_from_slice(&init[r * 2 * hd + hd..(r + 1) * 2 * hd]);
        }
        let mut x = vec![0.0; b * 2];
        let mut steps = Vec::with_capacity(PRED_LEN);
        let mut ys = Vec::with_capacity(PRED_LEN);
        for _ in 0..PRED_LEN {
            let s = self.decoder.step(&x, &h, &c, b)?;
            let y = self.out.forward(&s.h, b)?;
            h.clone_from(&s.h);
            c.clone_from(&s.c);
            x.clone_from(&y);
            steps.push(s);
            ys.push(y);
        }
        Ok(FfPass { enc, init, steps, ys })
    }

    pub fn predict(&self, batch: &Batch) -> Result<Vec<Trajectory>> {
        let p = self.pass(batch)?;
        Ok((0..batch.size)
            .map(|r| {
                let pts =
                    p.ys.iter().map(|y| Vec2::new(y[2 * r] * TARGET_SCALE, y[2 * r + 1] * TARGET_SCALE)).collect();
                Trajectory::new(pts, PRED_DT)
            })
            .collect())
    }
}

impl Trainable for FfLstm {
    fn features(&self) -> FeatureSet {
        self.features
    }

    fn loss(&mut self, batch: &Batch, backward: bool) -> Result<f64> {
        let b = batch.size;
        let hd = self.decoder.hidden;
        let p = self.pass(batch)?;
        let n = (b * 2 * PRED_LEN) as f64;
        let mut loss = 0.0;
        let mut dys: Vec<Vec<f64>> = vec![vec![0.0; 2 * b]; PRED_LEN];
        for (t, y) in p.ys.iter().enumerate() {
            for r in 0..b {
                for a in 0..2 {
                    let d = y[2 * r + a] - batch.target[r * 2 * PRED_LEN + 2 * t + a];
                    loss += d * d;
                    dys[t][2 * r + a] = 2.0 * d / n;
                }
            }
        }
        if backward {
            let mut dh = vec![0.0; b * hd];
            let mut dc = vec![0.0; b * hd];
            // gradient reaching step t's output through step t+1's input
            let mut dfeed = vec![0.0; 2 * b];
            for t in (0..PRED_LEN).rev() {
                let dy: Vec<f64> = dys[t].iter().zip(&dfeed).map(|(a, b)| a + b).collect();
                let dh_out = self.out.backward(&p.steps[t].h, &dy, b);
                for (a, d) in dh.iter_mut().zip(&dh_out) {
                    *a += d;
                }
                let (dx, dhp, dcp) = self.decoder.step_backward(&p.steps[t], &dh, &dc, b);
                dfeed = dx;
                dh = dhp;
                dc = dcp;
            }
            let mut dinit = vec![0.0; b * 2 * hd];
            for r in 0..b {
                dinit[r * 2 * hd..r * 2 * hd + hd].copy_from_slice(&dh[r * hd..(r + 1) * hd]);
                dinit[r * 2 * hd + hd..(r + 1) * 2 * hd].copy_from_slice(&dc[r * hd..(r + 1) * hd]);
            }
            tanh_backward(&p.init, &mut dinit);
            let dfused = self.init.backward(&p.enc.fused, &dinit, b);
            self.encoder.backward(&p.enc, &dfused);
        }
        Ok(loss / n)
    }
}

impl Parameters for FfLstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.init.visit(&join(prefix, "init"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
        self.out.visit(&join(prefix, "out"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.init.visit_mut(&join(prefix, "init"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

/// Values per mode in the MTP head: `2·T_p` coordinates and one logit.
pub const MTP_MODE_WIDTH: usize = 2 * PRED_LEN + 1;
pub const MTP_OUTPUTS: usize = NUM_MODES * MTP_MODE_WIDTH;

/// Encoder → FC(dim→N(2T_p+1)); each mode block is `[x₁, y₁, …, x₁₀, y₁₀,
/// logit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MtpLstm {
    pub features: FeatureSet,
    pub encoder: SeqEncoder,
    pub head: Linear,
}

impl MtpLstm {
    /// The usual inputs without the gaze columns.
    pub fn default_features() -> FeatureSet {
        FeatureSet::SC
    }

    pub fn new(features: FeatureSet, hidden: usize, rng: &mut Rng) -> Self {
        let encoder = SeqEncoder::new(features, hidden, rng);
        let head = Linear::new(encoder.dim(), MTP_OUTPUTS, rng);
        MtpLstm { features, encoder, head }
    }

    pub fn zeroed(mut self) -> Self {
        self.visit_mut("", &mut |_, p| p.value.fill(0.0));
        self
    }

    pub fn predict(&self, batch: &Batch) -> Result<Vec<ModeSet>> {
        let pass = self.encoder.forward(batch)?;
        let out = self.head.forward(&pass.fused, batch.size)?;
        Ok(out.chunks_exact(MTP_OUTPUTS).map(split_mtp).collect())
    }
}

/// Splits one 63-wide output row into probabilities and trajectories (m).
pub fn split_mtp(row: &[f64]) -> ModeSet {
    let logits: Vec<f64> = (0..NUM_MODES).map(|m| row[m * MTP_MODE_WIDTH + 2 * PRED_LEN]).collect();
    let p = softmax_rows(&logits, NUM_MODES);
    ModeSet {
        probs: [p[0], p[1], p[2]],
        trajectories: core::array::from_fn(|m| {
            let block = &row[m * MTP_MODE_WIDTH..];
            let pts = (0..PRED_LEN)
                .map(|t| Vec2::new(block[2 * t] * TARGET_SCALE, block[2 * t + 1] * TARGET_SCALE))
                .collect();
            Trajectory::new(pts, PRED_DT)
        }),
    }
}

impl Trainable for MtpLstm {
    fn features(&self) -> FeatureSet {
        self.features
    }

    /// Squared error of the mode closest to the truth by ADE plus the
    /// cross-entropy of selecting that mode.
    fn loss(&mut self, batch: &Batch, backward: bool) -> Result<f64> {
        let b = batch.size;
        let pass = self.encoder.forward(batch)?;
        let out = self.head.forward(&pass.fused, b)?;
        let mut winners = Vec::with_capacity(b);
        let mut logits = Vec::with_capacity(b * NUM_MODES);
        for (r, row) in out.chunks_exact(MTP_OUTPUTS).enumerate() {
            let tgt = &batch.target[r * 2 * PRED_LEN..(r + 1) * 2 * PRED_LEN];
            let ade = |m: usize| -> f64 {
                let block = &row[m * MTP_MODE_WIDTH..];
                (0..PRED_LEN).map(|t| libm::hypot(block[2 * t] - tgt[2 * t], block[2 * t + 1] - tgt[2 * t + 1])).sum()
            };
            let mut best = 0;
            for m in 1..NUM_MODES {
                if ade(m) < ade(best) {
                    best = m;
                }
            }
            winners.push(best);
            logits.extend((0..NUM_MODES).map(|m| row[m * MTP_MODE_WIDTH + 2 * PRED_LEN]));
        }
        let (ce, dlogits, _) = softmax_cross_entropy(&logits, &winners, NUM_MODES)?;
        let n = (b * 2 * PRED_LEN) as f64;
        let mut sq = 0.0;
        let mut dout = vec![0.0; out.len()];
        for r in 0..b {
            let base = r * MTP_OUTPUTS + winners[r] * MTP_MODE_WIDTH;
            for j in 0..2 * PRED_LEN {
                let d = out[base + j] - batch.target[r * 2 * PRED_LEN + j];
                sq += d * d;
                dout[base + j] = 2.0 * d / n;
            }
            for m in 0..NUM_MODES {
                dout[r * MTP_OUTPUTS + m * MTP_MODE_WIDTH + 2 * PRED_LEN] = dlogits[r * NUM_MODES + m];
            }
        }
        if backward {
            let dfused = self.head.backward(&pass.fused, &dout, b);
            self.encoder.backward(&pass, &dfused);
        }
        Ok(sq / n + ce)
    }
}

impl Parameters for MtpLstm {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_params_strided;
    use crate::predictor::models::tests::random_batch;

    #[test]
    fn mtp_head_is_63_wide_and_sums_to_one() {
        assert_eq!(MTP_OUTPUTS, 63);
        let mut rng = crate::rng::stream(1, 0);
        let m = MtpLstm::new(MtpLstm::default_features(), 8, &mut rng);
        assert_eq!(m.head.output, 63);
        for ms in m.predict(&random_batch(m.features, 3, 1)).unwrap() {
            assert!((ms.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(ms.trajectories.iter().all(|t| t.len() == PRED_LEN));
        }
    }

    #[test]
    fn split_reads_mode_blocks() {
        let mut row = vec![0.0; MTP_OUTPUTS];
        row[MTP_MODE_WIDTH] = 0.5; // mode 1, x₁
        row[2 * MTP_MODE_WIDTH + 2 * PRED_LEN] = 10.0; // mode 2 logit
        let ms = split_mtp(&row);
        assert_eq!(ms.trajectories[1].waypoints[0], Vec2::new(5.0, 0.0));
        assert!(ms.probs[2] > 0.99);
    }

    #[test]
    fn ff_zero_bundle_predicts_origin() {
        let mut rng = crate::rng::stream(2, 0);
        let m = FfLstm::new(FeatureSet::SEC, 8, &mut rng).zeroed();
        for t in m.predict(&random_batch(FeatureSet::SEC, 2, 2)).unwrap() {
            assert_eq!(t.len(), PRED_LEN);
            assert!(t.waypoints.iter().all(|w| *w == Vec2::ZERO));
        }
    }

    #[test]
    fn ff_gradient_includes_the_feedback_path() {
        let mut rng = crate::rng::stream(3, 0);
        let mut m = FfLstm::new(FeatureSet::S, 5, &mut rng);
        let batch = random_batch(FeatureSet::S, 3, 3);
        let r = check_params_strided(&mut m, 1, |m, bw| m.loss(&batch, bw).unwrap());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn mtp_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream(4, 0);
        let mut m = MtpLstm::new(FeatureSet::S, 5, &mut rng);
        let batch = random_batch(FeatureSet::S, 3, 4);
        let r = check_params_strided(&mut m, 1, |m, bw| m.loss(&batch, bw).unwrap());
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
