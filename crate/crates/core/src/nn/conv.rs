use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_finite, check_len, gemm, join, Param, Parameters, Result};
use crate::rng::Rng;

/// 2-D convolution over channel-major `C × H × W` samples, lowered to a
/// matrix product through im2col.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `cout × (cin·k·k)`
    pub w: Param,
    pub b: Param,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
}

/// im2col buffers kept for the backward pass, `batch × K × P`.
#[derive(Debug, Clone)]
pub struct Conv2dCache {
    cols: Vec<f64>,
    batch: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        let bound = 1.0 / libm::sqrt(fan_in as f64);
        Conv2d {
            w: Param::uniform(&[cout, fan_in], bound, rng),
            b: Param::uniform(&[cout], bound, rng),
            cin,
            cout,
            kernel,
            stride,
            pad,
            in_h,
            in_w,
        }
    }

    pub fn zeroed(mut self) -> Self {
        self.w.value.fill(0.0);
        self.b.value.fill(0.0);
        self
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn in_size(&self) -> usize {
        self.cin * self.in_h * self.in_w
    }

    pub fn out_size(&self) -> usize {
        self.cout * self.out_h() * self.out_w()
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p = oh * ow;
        for ci in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * p;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            cols[row + oy * ow + ox] =
                                if iy >= 0 && (iy as usize) < self.in_h && ix >= 0 && (ix as usize) < self.in_w {
                                    x[(ci * self.in_h + iy as usize) * self.in_w + ix as usize]
                                } else {
                                    0.0
                                };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p = oh * ow;
        for ci in 0..self.cin {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * p;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy as usize >= self.in_h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && (ix as usize) < self.in_w {
                                dx[(ci * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                    cols[row + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Returns `batch × cout × oh × ow` outputs.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, Conv2dCache)> {
        check_len("conv input", batch * self.in_size(), x.len())?;
        let kk = self.patch_len();
        let p = self.out_h() * self.out_w();
        let mut cols = vec![0.0; batch * kk * p];
        let mut y = vec![0.0; batch * self.cout * p];
        for b in 0..batch {
            let c = &mut cols[b * kk * p..(b + 1) * kk * p];
            self.im2col(&x[b * self.in_size()..(b + 1) * self.in_size()], c);
            let yb = &mut y[b * self.cout * p..(b + 1) * self.cout * p];
            for (o, row) in yb.chunks_exact_mut(p).enumerate() {
                row.iter_mut().for_each(|v| *v = self.b.value.data()[o]);
            }
            gemm(self.cout, kk, p, self.w.value.data(), false, c, false, 1.0, yb);
        }
        check_finite("conv output", &y)?;
        Ok((y, Conv2dCache { cols, batch }))
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `want_dx`.
    pub fn backward(&mut self, cache: &Conv2dCache, dy: &[f64], want_dx: bool) -> Option<Vec<f64>> {
        let batch = cache.batch;
        let kk = self.patch_len();
        let p = self.out_h() * self.out_w();
        let mut dx = want_dx.then(|| vec![0.0; batch * self.in_size()]);
        let mut dcols = vec![0.0; kk * p];
        for b in 0..batch {
            let c = &cache.cols[b * kk * p..(b + 1) * kk * p];
            let d = &dy[b * self.cout * p..(b + 1) * self.cout * p];
            gemm(self.cout, p, kk, d, false, c, true, 1.0, self.w.grad.data_mut());
            for (o, row) in d.chunks_exact(p).enumerate() {
                self.b.grad.data_mut()[o] += row.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(kk, self.cout, p, self.w.value.data(), true, d, false, 0.0, &mut dcols);
                let n = self.in_size();
                self.col2im(&dcols, &mut dx[b * n..(b + 1) * n]);
            }
        }
        dx
    }
}

impl Parameters for Conv2d {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(join(prefix, "w"), &self.w);
        f(join(prefix, "b"), &self.b);
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(join(prefix, "w"), &mut self.w);
        f(join(prefix, "b"), &mut self.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_geometry() {
        let mut rng = crate::rng::stream(1, 1);
        let c = Conv2d::new(3, 8, 3, 2, 1, 32, 32, &mut rng);
        assert_eq!((c.out_h(), c.out_w()), (16, 16));
        let c2 = Conv2d::new(8, 16, 3, 2, 1, 16, 16, &mut rng);
        assert_eq!(c2.out_size(), 16 * 8 * 8);
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = crate::rng::stream(2, 2);
        let c = Conv2d::new(2, 3, 3, 2, 1, 5, 6, &mut rng);
        let x: Vec<f64> = (0..c.in_size()).map(|i| ((i * 7) % 11) as f64 * 0.1 - 0.5).collect();
        let (y, _) = c.forward(&x, 1).unwrap();
        let (oh, ow) = (c.out_h(), c.out_w());
        for o in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = c.b.value.data()[o];
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 5 || ix >= 6 {
                                    continue;
                                }
                                s += c.w.value.data()[o * 18 + ci * 9 + ky * 3 + kx]
                                    * x[(ci * 5 + iy as usize) * 6 + ix as usize];
                            }
                        }
                    }
                    assert!((y[(o * oh + oy) * ow + ox] - s).abs() < 1e-12);
                }
            }
        }
    }
}
