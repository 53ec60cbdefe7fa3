//! Per-step prediction error statistics: decomposition into the along/across
//! track frame, Gaussian step models, the confidence ellipse and a 2-D KDE.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Vec2;
use crate::nn::gemm;

/// Diagonal regularization added to every fitted covariance.
pub const COV_REG: f64 = 1e-9;
/// Minimum samples per prediction step for [`fit_step_models`].
pub const MIN_SAMPLES: usize = 30;
/// Side of the KDE grid.
pub const KDE_GRID: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("motion direction undefined at step {0}")]
    NoDirection(usize),
    #[error("step {step} has {n} samples, need {needed}")]
    TooFewSamples { step: usize, n: usize, needed: usize },
    #[error("covariance of step {0} is singular")]
    Singular(usize),
    #[error("confidence level {0} outside (0, 1)")]
    BadLevel(f64),
    #[error("degenerate sample set")]
    Degenerate,
}

pub type Result<T> = core::result::Result<T, StatsError>;

/// Prediction error at one step, `e_x` along the true motion direction and
/// `e_y` to its left.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorSample {
    /// 1-based prediction step.
    pub step: usize,
    pub e_x: f64,
    pub e_y: f64,
}

/// Rotates `pred − truth` into the frame whose x axis is `direction`.
pub fn decompose_error(pred: Vec2, truth: Vec2, direction: Vec2) -> Result<(f64, f64)> {
    let n = direction.norm();
    if !(n > 0.0) {
        return Err(StatsError::NoDirection(0));
    }
    let u = direction * (1.0 / n);
    let d = pred - truth;
    Ok((d.dot(u), u.cross(d)))
}

/// Motion directions of a ground-truth path starting at the origin. A step
/// that moves less than `min_disp` reuses the previous direction; before any
/// valid chord `initial` is used, and `None` there is an error.
pub fn motion_directions(truth: &[Vec2], initial: Option<Vec2>, min_disp: f64) -> Result<Vec<Vec2>> {
    let mut prev = initial;
    let mut out = Vec::with_capacity(truth.len());
    for (i, &p) in truth.iter().enumerate() {
        let from = if i == 0 { Vec2::ZERO } else { truth[i - 1] };
        let d = p - from;
        if d.norm() >= min_disp {
            prev = Some(d);
        }
        out.push(prev.ok_or(StatsError::NoDirection(i + 1))?);
    }
    Ok(out)
}

/// Error samples for one predicted/true trajectory pair (ego frame, origin at
/// the reference position, initial heading +x).
pub fn trajectory_errors(pred: &[Vec2], truth: &[Vec2], min_disp: f64) -> Result<Vec<ErrorSample>> {
    let dirs = motion_directions(truth, Some(Vec2::new(1.0, 0.0)), min_disp)?;
    pred.iter()
        .zip(truth)
        .zip(&dirs)
        .enumerate()
        .map(|(i, ((&p, &t), &d))| {
            let (e_x, e_y) = decompose_error(p, t, d)?;
            Ok(ErrorSample { step: i + 1, e_x, e_y })
        })
        .collect()
}

/// Gaussian model of the error at one prediction step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepErrorModel {
    pub step: usize,
    pub mean: Vec2,
    pub s_xx: f64,
    pub s_xy: f64,
    pub s_yy: f64,
    pub n: usize,
}

impl StepErrorModel {
    pub fn isotropic(step: usize, mean: Vec2, var: f64) -> Self {
        StepErrorModel { step, mean, s_xx: var, s_xy: 0.0, s_yy: var, n: 0 }
    }

    pub fn det(&self) -> f64 {
        self.s_xx * self.s_yy - self.s_xy * self.s_xy
    }

    /// Squared Mahalanobis distance of `p` from the mean.
    pub fn mahalanobis2(&self, p: Vec2) -> Result<f64> {
        let det = self.det();
        if !(det > 0.0) {
            return Err(StatsError::Singular(self.step));
        }
        let d = p - self.mean;
        Ok((self.s_yy * d.x * d.x - 2.0 * self.s_xy * d.x * d.y + self.s_xx * d.y * d.y) / det)
    }

    /// Lower Cholesky factor `[l11, l21, l22]`.
    pub fn cholesky(&self) -> Result<[f64; 3]> {
        if !(self.s_xx > 0.0) || !(self.det() > 0.0) {
            return Err(StatsError::Singular(self.step));
        }
        let l11 = libm::sqrt(self.s_xx);
        let l21 = self.s_xy / l11;
        let l22 = libm::sqrt(self.s_yy - l21 * l21);
        Ok([l11, l21, l22])
    }

    pub fn std(&self) -> (f64, f64) {
        (libm::sqrt(self.s_xx), libm::sqrt(self.s_yy))
    }

    /// Eigenvalues of the covariance, ascending.
    pub fn eigenvalues(&self) -> (f64, f64) {
        eig2(self.s_xx, self.s_xy, self.s_yy)
    }
}

fn eig2(a: f64, b: f64, d: f64) -> (f64, f64) {
    let m = 0.5 * (a + d);
    let r = libm::hypot(0.5 * (a - d), b);
    (m - r, m + r)
}

/// Sample mean and Bessel-corrected covariance per step, `steps` models for
/// steps `1..=steps`.
pub fn fit_step_models(samples: &[ErrorSample], steps: usize, min_samples: usize) -> Result<Vec<StepErrorModel>> {
    (1..=steps)
        .map(|step| {
            let xs: Vec<(f64, f64)> = samples.iter().filter(|s| s.step == step).map(|s| (s.e_x, s.e_y)).collect();
            let n = xs.len();
            if n < min_samples.max(2) {
                return Err(StatsError::TooFewSamples { step, n, needed: min_samples.max(2) });
            }
            let (mx, my, sxx, sxy, syy) = moments(&xs);
            debug_assert!(eig2(sxx, sxy, syy).0 >= -1e-12);
            Ok(StepErrorModel { step, mean: Vec2::new(mx, my), s_xx: sxx + COV_REG, s_xy: sxy, s_yy: syy + COV_REG, n })
        })
        .collect()
}

/// Mean and Bessel-corrected second moments `(mx, my, sxx, sxy, syy)`.
fn moments(xs: &[(f64, f64)]) -> (f64, f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in xs {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let k = n - 1.0;
    (mx, my, sxx / k, sxy / k, syy / k)
}

/// Bivariate normal density of the step model at `p`.
pub fn gaussian_pdf(model: &StepErrorModel, p: Vec2) -> Result<f64> {
    let m2 = model.mahalanobis2(p)?;
    Ok(libm::exp(-0.5 * m2) / (2.0 * core::f64::consts::PI * libm::sqrt(model.det())))
}

/// χ²(2) quantile at `level`: the squared Mahalanobis radius of the
/// confidence ellipse.
pub fn confidence_boundary(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    Ok(-2.0 * libm::log1p(-level))
}

pub fn inside_boundary(model: &StepErrorModel, p: Vec2, level: f64) -> Result<bool> {
    Ok(model.mahalanobis2(p)? <= confidence_boundary(level)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeSummary {
    pub mean_x: f64,
    pub mean_y: f64,
    pub x_std: f64,
    pub y_std: f64,
    pub corr: f64,
}

/// Density on a `KDE_GRID × KDE_GRID` lattice; `density[j * KDE_GRID + i]`
/// is the value at `(xs[i], ys[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde2d {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: (f64, f64),
    pub summary: KdeSummary,
}

impl Kde2d {
    pub fn cell_area(&self) -> f64 {
        (self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0])
    }

    /// Riemann sum of the grid.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area()
    }

    pub fn peak(&self) -> (f64, f64) {
        let (k, _) = self
            .density
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &d)| if d > acc.1 { (k, d) } else { acc });
        (self.xs[k % KDE_GRID], self.ys[k / KDE_GRID])
    }
}

/// Product-Gaussian KDE with Silverman bandwidths `h = σ·n^(−1/6)` on a grid
/// spanning ±4 sample standard deviations around the sample mean.
pub fn kde2d(samples: &[(f64, f64)]) -> Result<Kde2d> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::Degenerate);
    }
    let (mx, my, sxx, sxy, syy) = moments(samples);
    let (sx, sy) = (libm::sqrt(sxx), libm::sqrt(syy));
    if !(sx > 0.0 && sy > 0.0) {
        return Err(StatsError::Degenerate);
    }
    let summary = KdeSummary { mean_x: mx, mean_y: my, x_std: sx, y_std: sy, corr: sxy / (sx * sy) };
    let factor = libm::pow(n as f64, -1.0 / 6.0);
    let (hx, hy) = (sx * factor, sy * factor);
    let axis = |m: f64, s: f64| -> Vec<f64> {
        (0..KDE_GRID).map(|i| m - 4.0 * s + 8.0 * s * i as f64 / (KDE_GRID - 1) as f64).collect()
    };
    let xs = axis(mx, sx);
    let ys = axis(my, sy);
    let kernel = |grid: &[f64], h: f64, pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        let norm = 1.0 / (h * libm::sqrt(2.0 * core::f64::consts::PI));
        let mut k = vec![0.0; KDE_GRID * n];
        for (g, row) in grid.iter().zip(k.chunks_exact_mut(n)) {
            for (v, s) in row.iter_mut().zip(samples) {
                let z = (g - pick(s)) / h;
                *v = norm * libm::exp(-0.5 * z * z);
            }
        }
        k
    };
    let kx = kernel(&xs, hx, |s| s.0);
    let ky = kernel(&ys, hy, |s| s.1);
    let mut density = vec![0.0; KDE_GRID * KDE_GRID];
    // density[j][i] = Σ_k ky[j][k]·kx[i][k] / n
    gemm(KDE_GRID, n, KDE_GRID, &ky, false, &kx, true, 0.0, &mut density);
    let inv = 1.0 / n as f64;
    density.iter_mut().for_each(|d| *d *= inv);
    Ok(Kde2d { xs, ys, density, bandwidth: (hx, hy), summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn model(sxx: f64, sxy: f64, syy: f64) -> StepErrorModel {
        StepErrorModel { step: 1, mean: Vec2::ZERO, s_xx: sxx, s_xy: sxy, s_yy: syy, n: 0 }
    }

    #[test]
    fn decompose_examples() {
        let p = Vec2::new(3.0, -1.0);
        assert_eq!(decompose_error(p, p, Vec2::new(1.0, 2.0)).unwrap(), (0.0, 0.0));
        let (ex, ey) = decompose_error(Vec2::new(1.0, 0.0), Vec2::ZERO, Vec2::new(0.0, 2.0)).unwrap();
        assert!(ex.abs() < 1e-15 && (ey + 1.0).abs() < 1e-15);
        assert!(decompose_error(p, p, Vec2::ZERO).is_err());
    }

    #[test]
    fn decompose_matches_rotation_matrix() {
        let mut rng = crate::rng::stream(5, 0);
        for _ in 0..200 {
            let p = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let t = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let a: f64 = rng.random_range(-3.1..3.1);
            let d = Vec2::new(a.cos(), a.sin()) * rng.random_range(0.1..20.0);
            let (ex, ey) = decompose_error(p, t, d).unwrap();
            // R(−a)·(p − t)
            let (c, s) = (a.cos(), a.sin());
            let (dx, dy) = (p.x - t.x, p.y - t.y);
            assert!((ex - (c * dx + s * dy)).abs() < 1e-12);
            assert!((ey - (-s * dx + c * dy)).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_direction_fallbacks() {
        let truth = [Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)];
        let d = motion_directions(&truth, Some(Vec2::new(1.0, 0.0)), 0.03).unwrap();
        assert_eq!(d[0], Vec2::new(1.0, 0.0));
        assert_eq!(d[1], Vec2::new(1.0, 0.0));
        assert_eq!(d[2], Vec2::new(1.0, 1.0));
        assert_eq!(motion_directions(&truth, None, 0.03), Err(StatsError::NoDirection(1)));
    }

    #[test]
    fn constant_error_gives_regularized_zero() {
        let s: Vec<ErrorSample> = (0..40).map(|_| ErrorSample { step: 1, e_x: 1.0, e_y: 2.0 }).collect();
        let m = fit_step_models(&s, 1, MIN_SAMPLES).unwrap()[0];
        assert_eq!(m.mean, Vec2::new(1.0, 2.0));
        assert_eq!((m.s_xx, m.s_xy, m.s_yy), (COV_REG, 0.0, COV_REG));
        assert!(fit_step_models(&s[..10], 1, MIN_SAMPLES).is_err());
    }

    #[test]
    fn covariance_recovered_from_known_gaussian() {
        let truth = model(2.0, 0.6, 0.5);
        let [l11, l21, l22] = truth.cholesky().unwrap();
        let mut rng = crate::rng::stream(9, 9);
        let s: Vec<ErrorSample> = (0..10_000)
            .map(|_| {
                let (z1, z2): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                ErrorSample { step: 1, e_x: 0.3 + l11 * z1, e_y: -0.2 + l21 * z1 + l22 * z2 }
            })
            .collect();
        let m = fit_step_models(&s, 1, MIN_SAMPLES).unwrap()[0];
        let frob = ((m.s_xx - 2.0).powi(2) + 2.0 * (m.s_xy - 0.6).powi(2) + (m.s_yy - 0.5).powi(2)).sqrt();
        assert!(frob < 0.1, "{frob}");
    }

    #[test]
    fn pdf_closed_form_and_quadrature() {
        let id = model(1.0, 0.0, 1.0);
        let p0 = gaussian_pdf(&id, Vec2::ZERO).unwrap();
        assert!((p0 - 1.0 / (2.0 * core::f64::consts::PI)).abs() < 1e-15);
        let m = model(1.5, -0.4, 0.7);
        let (h, r) = (0.02, 8.0);
        let k = (2.0 * r / h) as i32;
        let mut mass = 0.0;
        for i in 0..=k {
            for j in 0..=k {
                let p = Vec2::new(-r + i as f64 * h, -r + j as f64 * h);
                mass += gaussian_pdf(&m, p).unwrap() * h * h;
            }
        }
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let d = model(2.0, 0.0, 0.5);
        let a = gaussian_pdf(&d, Vec2::new(0.7, -0.3)).unwrap();
        let b = gaussian_pdf(&d, Vec2::new(-0.7, 0.3)).unwrap();
        let c = gaussian_pdf(&d, Vec2::new(0.7, 0.3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(gaussian_pdf(&model(1.0, 1.0, 1.0), Vec2::ZERO).is_err());
    }

    #[test]
    fn boundary_matches_chi_square_quantile() {
        let chi = ChiSquared::new(2.0).unwrap();
        for level in [0.5, 0.9, 0.95, 0.99] {
            let t = confidence_boundary(level).unwrap();
            assert!((t - chi.inverse_cdf(level)).abs() < 1e-9);
        }
        assert!((confidence_boundary(0.95).unwrap() - 5.991).abs() < 1e-3);
        assert!((confidence_boundary(0.95).unwrap().sqrt() - 2.4477).abs() < 1e-4);
        assert!(confidence_boundary(1.0).is_err());
        assert!(confidence_boundary(0.0).is_err());
    }

    #[test]
    fn boundary_coverage() {
        let m = StepErrorModel { step: 1, mean: Vec2::new(0.5, -1.0), s_xx: 3.0, s_xy: 1.0, s_yy: 1.0, n: 0 };
        let [l11, l21, l22] = m.cholesky().unwrap();
        let mut rng = crate::rng::stream(11, 0);
        let n = 100_000;
        let inside = (0..n)
            .filter(|_| {
                let (z1, z2): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                let p = m.mean + Vec2::new(l11 * z1, l21 * z1 + l22 * z2);
                inside_boundary(&m, p, 0.95).unwrap()
            })
            .count();
        let frac = inside as f64 / n as f64;
        assert!((frac - 0.95).abs() < 0.01, "{frac}");
    }

    #[test]
    fn kde_mass_peak_and_summary() {
        let mut rng = crate::rng::stream(13, 0);
        let s: Vec<(f64, f64)> = (0..500)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                (1.0 + 0.5 * z1, -2.0 + 0.2 * z1 + 0.3 * z2)
            })
            .collect();
        let k = kde2d(&s).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-2, "{}", k.mass());
        let (px, py) = k.peak();
        assert!((px - 1.0).abs() < 0.25 && (py + 2.0).abs() < 0.2, "{px} {py}");
        // textbook sample statistics
        let n = s.len() as f64;
        let mx = s.iter().map(|p| p.0).sum::<f64>() / n;
        let my = s.iter().map(|p| p.1).sum::<f64>() / n;
        let vx = s.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>() / (n - 1.0);
        let vy = s.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>() / (n - 1.0);
        let cxy = s.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / (n - 1.0);
        assert!((k.summary.x_std - vx.sqrt()).abs() < 1e-12);
        assert!((k.summary.y_std - vy.sqrt()).abs() < 1e-12);
        assert!((k.summary.corr - cxy / (vx.sqrt() * vy.sqrt())).abs() < 1e-12);
        assert!(kde2d(&[(1.0, 1.0); 5]).is_err());
    }

    proptest! {
        #[test]
        fn decompose_preserves_norm(px in -50.0..50.0f64, py in -50.0..50.0f64, tx in -50.0..50.0f64,
                                    ty in -50.0..50.0f64, a in -3.2..3.2f64) {
            let (p, t) = (Vec2::new(px, py), Vec2::new(tx, ty));
            let (ex, ey) = decompose_error(p, t, Vec2::from_angle(a)).unwrap();
            prop_assert!(((ex * ex + ey * ey).sqrt() - (p - t).norm()).abs() < 1e-12);
        }

        #[test]
        fn fitted_covariance_is_psd(pts in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 30..80)) {
            let s: Vec<ErrorSample> = pts.iter().map(|&(x, y)| ErrorSample { step: 1, e_x: x, e_y: y }).collect();
            let m = fit_step_models(&s, 1, MIN_SAMPLES).unwrap()[0];
            let (lo, _) = eig2(m.s_xx - COV_REG, m.s_xy, m.s_yy - COV_REG);
            prop_assert!(lo >= -1e-12);
            prop_assert!(m.s_xx >= COV_REG && m.s_yy >= COV_REG);
        }
    }
}
