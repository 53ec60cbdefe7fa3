//! The intention (DI) and multimodal trajectory (MT) networks and the
//! sequence-plus-context encoder they share in architecture.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::context::{ContextCache, ContextEncoder, CONTEXT_DIM};
use super::features::{Batch, FeatureSet, TARGET_SCALE};
use super::Result;
use crate::geometry::{Trajectory, Vec2};
use crate::nn::{
    join, softmax_cross_entropy, softmax_rows, tanh_backward, tanh_inplace, Linear, Lstm, LstmSeq, Param, Parameters,
};
use crate::rng::Rng;
use crate::{NUM_MODES, OBS_LEN, PRED_DT, PRED_LEN};

pub const HIDDEN: usize = 128;

/// LSTM over the observation window, optionally concatenated with the scene
/// context feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqEncoder {
    pub lstm: Lstm,
    pub context: Option<ContextEncoder>,
}

#[derive(Debug, Clone)]
pub struct EncPass {
    seq: LstmSeq,
    ctx: Option<ContextCache>,
    /// `B × dim`, rows `[h_T, context]`.
    pub fused: Vec<f64>,
}

impl SeqEncoder {
    pub fn new(features: FeatureSet, hidden: usize, rng: &mut Rng) -> Self {
        let lstm = Lstm::new(features.input_dim(), hidden, rng);
        let context = features.context.then(|| ContextEncoder::new(rng));
        SeqEncoder { lstm, context }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden
    }

    pub fn dim(&self) -> usize {
        self.lstm.hidden + if self.context.is_some() { CONTEXT_DIM } else { 0 }
    }

    pub fn forward(&self, batch: &Batch) -> Result<EncPass> {
        let b = batch.size;
        let hd = self.lstm.hidden;
        let zeros = vec![0.0; b * hd];
        let seq = self.lstm.forward(&batch.seq, OBS_LEN, b, &zeros, &zeros)?;
        let ctx = match &self.context {
            Some(c) => Some(c.forward(&batch.raster, b)?),
            None => None,
        };
        let dim = self.dim();
        let mut fused = vec![0.0; b * dim];
        let h = seq.last_h();
        for r in 0..b {
            fused[r * dim..r * dim + hd].copy_from_slice(&h[r * hd..(r + 1) * hd]);
            if let Some(c) = &ctx {
                fused[r * dim + hd..(r + 1) * dim].copy_from_slice(&c.feature[r * CONTEXT_DIM..(r + 1) * CONTEXT_DIM]);
            }
        }
        Ok(EncPass { seq, ctx, fused })
    }

    pub fn backward(&mut self, pass: &EncPass, dfused: &[f64]) {
        let b = pass.seq.batch;
        let hd = self.lstm.hidden;
        let dim = self.dim();
        let mut dh = vec![0.0; b * hd];
        let mut dctx = vec![0.0; b * CONTEXT_DIM];
        for r in 0..b {
            dh[r * hd..(r + 1) * hd].copy_from_slice(&dfused[r * dim..r * dim + hd]);
            if self.context.is_some() {
                dctx[r * CONTEXT_DIM..(r + 1) * CONTEXT_DIM].copy_from_slice(&dfused[r * dim + hd..(r + 1) * dim]);
            }
        }
        self.lstm.backward(&pass.seq, None, Some(&dh), None);
        if let (Some(c), Some(cache)) = (self.context.as_mut(), pass.ctx.as_ref()) {
            c.backward(cache, &dctx);
        }
    }
}

impl Parameters for SeqEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.lstm.visit(&join(prefix, "lstm"), f);
        self.context.visit(&join(prefix, "context"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.lstm.visit_mut(&join(prefix, "lstm"), f);
        self.context.visit_mut(&join(prefix, "context"), f);
    }
}

/// A model trainable by [`super::train::train`].
pub trait Trainable: Parameters + Clone {
    fn features(&self) -> FeatureSet;
    /// Mean loss over the batch; accumulates gradients when `backward`.
    fn loss(&mut self, batch: &Batch, backward: bool) -> Result<f64>;
}

/// Intention model: encoder → FC(dim→3) → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct DiModel {
    pub features: FeatureSet,
    pub encoder: SeqEncoder,
    pub head: Linear,
}

impl DiModel {
    pub fn new(features: FeatureSet, hidden: usize, rng: &mut Rng) -> Self {
        let encoder = SeqEncoder::new(features, hidden, rng);
        let head = Linear::new(encoder.dim(), NUM_MODES, rng);
        DiModel { features, encoder, head }
    }

    pub fn zeroed(mut self) -> Self {
        self.visit_mut("", &mut |_, p| p.value.fill(0.0));
        self
    }

    /// `B × 3` probabilities.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>> {
        let pass = self.encoder.forward(batch)?;
        let logits = self.head.forward(&pass.fused, batch.size)?;
        Ok(softmax_rows(&logits, NUM_MODES))
    }
}

impl Trainable for DiModel {
    fn features(&self) -> FeatureSet {
        self.features
    }

    fn loss(&mut self, batch: &Batch, backward: bool) -> Result<f64> {
        let pass = self.encoder.forward(batch)?;
        let logits = self.head.forward(&pass.fused, batch.size)?;
        let (loss, dlogits, _) = softmax_cross_entropy(&logits, &batch.labels, NUM_MODES)?;
        if backward {
            let dfused = self.head.backward(&pass.fused, &dlogits, batch.size);
            self.encoder.backward(&pass, &dfused);
        }
        Ok(loss)
    }
}

impl Parameters for DiModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.head.visit(&join(prefix, "head"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// Multimodal trajectory model: encoder → FC(dim→2H) → tanh → decoder
/// `(h₀, c₀)`; the decoder runs 10 steps without input and each hidden state
/// maps through FC(H→6) to one waypoint per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MtModel {
    pub features: FeatureSet,
    pub encoder: SeqEncoder,
    pub init: Linear,
    pub decoder: Lstm,
    pub out: Linear,
}

struct MtPass {
    enc: EncPass,
    init: Vec<f64>,
    dec: LstmSeq,
    /// `T × B × 2N`, scaled units.
    out: Vec<f64>,
}

impl MtModel {
    pub fn new(features: FeatureSet, hidden: usize, rng: &mut Rng) -> Self {
        let encoder = SeqEncoder::new(features, hidden, rng);
        let init = Linear::new(encoder.dim(), 2 * hidden, rng);
        let decoder = Lstm::new(0, hidden, rng);
        let out = Linear::new(hidden, 2 * NUM_MODES, rng);
        MtModel { features, encoder, init, decoder, out }
    }

    pub fn zeroed(mut self) -> Self {
        self.visit_mut("", &mut |_, p| p.value.fill(0.0));
        self
    }

    fn pass(&self, batch: &Batch) -> Result<MtPass> {
        let b = batch.size;
        let hd = self.decoder.hidden;
        let enc = self.encoder.forward(batch)?;
        let mut init = self.init.forward(&enc.fused, b)?;
        tanh_inplace(&mut init);
        let (mut h0, mut c0) = (vec![0.0; b * hd], vec![0.0; b * hd]);
        for r in 0..b {
            h0[r * hd..(r + 1) * hd].copy_from_slice(&init[r * 2 * hd..r * 2 * hd + hd]);
            c0[r * hd..(r + 1) * hd].copy_from_slice(&init[r * 2 * hd + hd..(r + 1) * 2 * hd]);
        }
        let dec = self.decoder.forward(&[], PRED_LEN, b, &h0, &c0)?;
        let out = self.out.forward(&dec.hidden_states(), PRED_LEN * b)?;
        Ok(MtPass { enc, init, dec, out })
    }

    /// Per record, `N` trajectories in metres.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<[Trajectory; NUM_MODES]>> {
        let p = self.pass(batch)?;
        let b = batch.size;
        Ok((0..b)
            .map(|r| {
                core::array::from_fn(|m| {
                    let pts = (0..PRED_LEN)
                        .map(|t| {
                            let o = &p.out[(t * b + r) * 2 * NUM_MODES..];
                            Vec2::new(o[2 * m] * TARGET_SCALE, o[2 * m + 1] * TARGET_SCALE)
                        })
                        .collect();
                    Trajectory::new(pts, PRED_DT)
                })
            })
            .collect())
    }
}

impl Trainable for MtModel {
    fn features(&self) -> FeatureSet {
        self.features
    }

    /// Squared error of the labelled mode only, averaged over records and
    /// coordinates.
    fn loss(&mut self, batch: &Batch, backward: bool) -> Result<f64> {
        let b = batch.size;
        let hd = self.decoder.hidden;
        let p = self.pass(batch)?;
        let w = 2 * NUM_MODES;
        let n = (b * 2 * PRED_LEN) as f64;
        let mut loss = 0.0;
        let mut dout = vec![0.0; p.out.len()];
        for r in 0..b {
            let m = batch.labels[r];
            for t in 0..PRED_LEN {
                for a in 0..2 {
                    let i = (t * b + r) * w + 2 * m + a;
                    let d = p.out[i] - batch.target[r * 2 * PRED_LEN + 2 * t + a];
                    loss += d * d;
                    dout[i] = 2.0 * d / n;
                }
            }
        }
        if backward {
            let dhs = self.out.backward(&p.dec.hidden_states(), &dout, PRED_LEN * b);
            let (_, dh0, dc0) = self.decoder.backward(&p.dec, Some(&dhs), None, None);
            let mut dinit = vec![0.0; b * 2 * hd];
            for r in 0..b {
                dinit[r * 2 * hd..r * 2 * hd + hd].copy_from_slice(&dh0[r * hd..(r + 1) * hd]);
                dinit[r * 2 * hd + hd..(r + 1) * 2 * hd].copy_from_slice(&dc0[r * hd..(r + 1) * hd]);
            }
            tanh_backward(&p.init, &mut dinit);
            let dfused = self.init.backward(&p.enc.fused, &dinit, b);
            self.encoder.backward(&p.enc, &dfused);
        }
        Ok(loss / n)
    }
}

impl Parameters for MtModel {
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
