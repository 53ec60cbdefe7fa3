//! Convolutional encoder of the scene raster.

use alloc::string::String;
use alloc::vec::Vec;

use crate::nn::{tanh_backward, tanh_inplace, Conv2d, Conv2dCache, Linear, Param, Parameters, Result};
use crate::rng::Rng;
use crate::scenegen::raster::{CHANNELS, GRID};

pub const CONTEXT_DIM: usize = 128;

/// conv(3→8, 3×3, stride 2) → tanh → conv(8→16, 3×3, stride 2) → tanh →
/// FC(1024→128) → tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc: Linear,
}

#[derive(Debug, Clone)]
pub struct ContextCache {
    c1: Conv2dCache,
    c2: Conv2dCache,
    a2: Vec<f64>,
    a1: Vec<f64>,
    pub feature: Vec<f64>,
    batch: usize,
}

impl ContextEncoder {
    pub fn new(rng: &mut Rng) -> Self {
        let conv1 = Conv2d::new(CHANNELS, 8, 3, 2, 1, GRID, GRID, rng);
        let conv2 = Conv2d::new(8, 16, 3, 2, 1, conv1.out_h(), conv1.out_w(), rng);
        let fc = Linear::new(conv2.out_size(), CONTEXT_DIM, rng);
        ContextEncoder { conv1, conv2, fc }
    }

    pub fn zeros() -> Self {
        let mut rng = crate::rng::stream(0, 0);
        let mut e = Self::new(&mut rng);
        e.visit_mut("", &mut |_, p| p.value.fill(0.0));
        e
    }

    /// `raster` is `B × 3 × 32 × 32`; returns the cache holding `B × 128`
    /// features.
    pub fn forward(&self, raster: &[f64], batch: usize) -> Result<ContextCache> {
        let (mut a1, c1) = self.conv1.forward(raster, batch)?;
        tanh_inplace(&mut a1);
        let (mut a2, c2) = self.conv2.forward(&a1, batch)?;
        tanh_inplace(&mut a2);
        let mut feature = self.fc.forward(&a2, batch)?;
        tanh_inplace(&mut feature);
        Ok(ContextCache { c1, c2, a2, a1, feature, batch })
    }

    /// Accumulates gradients given `dL/dfeature`.
    pub fn backward(&mut self, cache: &ContextCache, dfeature: &[f64]) {
        let mut d = dfeature.to_vec();
        tanh_backward(&cache.feature, &mut d);
        let mut da2 = self.fc.backward(&cache.a2, &d, cache.batch);
        tanh_backward(&cache.a2, &mut da2);
        let mut da1 = self.conv2.backward(&cache.c2, &da2, true).expect("dx requested");
        tanh_backward(&cache.a1, &mut da1);
        self.conv1.backward(&cache.c1, &da1, false);
    }
}

impl Parameters for ContextEncoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        self.conv1.visit(&crate::nn::join(prefix, "conv1"), f);
        self.conv2.visit(&crate::nn::join(prefix, "conv2"), f);
        self.fc.visit(&crate::nn::join(prefix, "fc"), f);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.conv1.visit_mut(&crate::nn::join(prefix, "conv1"), f);
        self.conv2.visit_mut(&crate::nn::join(prefix, "conv2"), f);
        self.fc.visit_mut(&crate::nn::join(prefix, "fc"), f);
    }
}
