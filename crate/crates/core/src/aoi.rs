//! Visual area of interest: a bivariate Gaussian fitted to the gaze samples of
//! each video frame, plus onset detection for AOI shifts and steering.

use alloc::vec::Vec;

use crate::{GAZE_PER_FRAME, OBS_DT};

/// Lower bound on fitted standard deviations, in pixels.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GazeSample {
    pub u: f64,
    pub v: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AoiGaussian {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl AoiGaussian {
    /// Screen-centred AOI with floor-level spread.
    pub fn centered(width: f64, height: f64) -> Self {
        AoiGaussian { mu_x: width * 0.5, mu_y: height * 0.5, sigma_x: SIGMA_FLOOR, sigma_y: SIGMA_FLOOR, rho: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AoiError {
    #[error("need at least two gaze samples, got {0}")]
    FewerThanTwoSamples(usize),
    #[error("series has {len} samples, baseline needs {needed}")]
    SeriesTooShort { len: usize, needed: usize },
}

/// Sample mean, Bessel-corrected standard deviations and correlation.
///
/// A standard deviation under [`SIGMA_FLOOR`] is clamped to it, and the
/// correlation is then reported as 0.
pub fn fit_aoi(samples: &[GazeSample]) -> Result<AoiGaussian, AoiError> {
    let n = samples.len();
    if n < 2 {
        return Err(AoiError::FewerThanTwoSamples(n));
    }
    let nf = n as f64;
    let mu_x = samples.iter().map(|s| s.u).sum::<f64>() / nf;
    let mu_y = samples.iter().map(|s| s.v).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for s in samples {
        let dx = s.u - mu_x;
        let dy = s.v - mu_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let sigma_x = libm::sqrt(sxx / (nf - 1.0));
    let sigma_y = libm::sqrt(syy / (nf - 1.0));
    if sigma_x < SIGMA_FLOOR || sigma_y < SIGMA_FLOOR {
        return Ok(AoiGaussian {
            mu_x,
            mu_y,
            sigma_x: sigma_x.max(SIGMA_FLOOR),
            sigma_y: sigma_y.max(SIGMA_FLOOR),
            rho: 0.0,
        });
    }
    let rho = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    Ok(AoiGaussian { mu_x, mu_y, sigma_x, sigma_y, rho })
}

/// Groups gaze samples into `n_frames` trailing bins `((k−1)·dt, k·dt]`, so
/// frame `k` only sees gaze up to its own timestamp, and fits one AOI per
/// frame. A frame with fewer than two samples repeats the previous
/// frame's AOI (or `initial` for the first frame).
pub fn aoi_per_frame(gaze: &[GazeSample], n_frames: usize, dt: f64, initial: AoiGaussian) -> Vec<AoiGaussian> {
    let mut bins: Vec<Vec<GazeSample>> = (0..n_frames).map(|_| Vec::with_capacity(GAZE_PER_FRAME)).collect();
    for g in gaze {
        let k = libm::ceil(g.t / dt - 1e-6);
        if k >= 0.0 && (k as usize) < n_frames {
            bins[k as usize].push(*g);
        }
    }
    let mut prev = initial;
    bins.iter()
        .map(|b| {
            if let Ok(a) = fit_aoi(b) {
                prev = a;
            }
            prev
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiOnsetParams {
    /// Baseline and rolling-median window, in frames.
    pub baseline: usize,
    /// Threshold multiplier on the baseline deviation.
    pub k: f64,
    /// Consecutive exceedances needed to confirm an onset.
    pub confirm: usize,
    /// Baseline deviation override; `None` uses the std of the first window.
    pub sigma_base: Option<f64>,
    pub dt: f64,
}

impl Default for AoiOnsetParams {
    fn default() -> Self {
        AoiOnsetParams { baseline: 10, k: 2.0, confirm: 3, sigma_base: None, dt: OBS_DT }
    }
}

fn median(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        0.5 * (buf[n / 2 - 1] + buf[n / 2])
    }
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// Time of the first frame of the first run of `confirm` frames whose
/// horizontal AOI centre deviates from the median of the preceding
/// `baseline` frames by more than `k·σ_base`.
pub fn detect_aoi_onset(mu_x: &[f64], params: &AoiOnsetParams) -> Result<Option<f64>, AoiError> {
    let w = params.baseline;
    if mu_x.len() < w || w < 2 {
        return Err(AoiError::SeriesTooShort { len: mu_x.len(), needed: w.max(2) });
    }
    let sigma = params.sigma_base.unwrap_or_else(|| sample_std(&mu_x[..w]));
    let thresh = params.k * sigma;
    let mut buf = Vec::with_capacity(w);
    let mut run = 0usize;
    for i in w..mu_x.len() {
        buf.clear();
        buf.extend_from_slice(&mu_x[i - w..i]);
        let med = median(&mut buf);
        if libm::fabs(mu_x[i] - med) > thresh {
            run += 1;
            if run >= params.confirm {
                let first = i + 1 - params.confirm;
                return Ok(Some(first as f64 * params.dt));
            }
        } else {
            run = 0;
        }
    }
    Ok(None)
}

/// Baseline deviation of the per-frame AOI centre, estimated from the gaze
/// scatter inside the first `frames` fits: `sqrt(mean(σ_x²) / n)` for `n`
/// samples per frame. This pools about `frames·(n − 1)` degrees of freedom,
/// where the std of the `frames` centres themselves has `frames − 1`.
pub fn scatter_sigma_base(aois: &[AoiGaussian], frames: usize, samples_per_frame: usize) -> Option<f64> {
    if frames == 0 || aois.len() < frames || samples_per_frame == 0 {
        return None;
    }
    let var = aois[..frames].iter().map(|a| a.sigma_x * a.sigma_x).sum::<f64>() / frames as f64;
    Some(libm::sqrt(var / samples_per_frame as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerOnsetParams {
    /// Steering magnitude threshold, radians.
    pub threshold: f64,
    /// Required quiet period below the threshold before an onset, seconds.
    pub quiet: f64,
    pub dt: f64,
}

impl Default for SteerOnsetParams {
    fn default() -> Self {
        SteerOnsetParams { threshold: 5.0_f64.to_radians(), quiet: 1.0, dt: OBS_DT }
    }
}

/// First time `|steer|` exceeds the threshold after staying at or below it
/// for the whole quiet period.
pub fn detect_steer_onset(steer: &[f64], params: &SteerOnsetParams) -> Option<f64> {
    let quiet = libm::round(params.quiet / params.dt) as usize;
    let mut below = 0usize;
    for (i, s) in steer.iter().enumerate() {
        if libm::fabs(*s) > params.threshold {
            if below >= quiet {
                return Some(i as f64 * params.dt);
            }
            below = 0;
        } else {
            below += 1;
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OnsetReport {
    pub aoi_onset: Option<f64>,
    pub steer_onset: Option<f64>,
}

impl OnsetReport {
    pub fn leading_time(&self) -> Option<f64> {
        Some(self.steer_onset? - self.aoi_onset?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadSummary {
    pub leads: Vec<f64>,
    /// Turns dropped because an onset was missing.
    pub excluded: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistBin>,
}

/// Width of the leading-time histogram bins, seconds.
pub const LEAD_BIN: f64 = 0.3;

pub fn leading_time_distribution(reports: &[OnsetReport]) -> LeadSummary {
    let leads: Vec<f64> = reports.iter().filter_map(OnsetReport::leading_time).collect();
    let excluded = reports.len() - leads.len();
    if leads.is_empty() {
        return LeadSummary {
            leads,
            excluded,
            mean: f64::NAN,
            std: f64::NAN,
            min: f64::NAN,
            max: f64::NAN,
            histogram: Vec::new(),
        };
    }
    let n = leads.len() as f64;
    let mean = leads.iter().sum::<f64>() / n;
    let std = if leads.len() > 1 { sample_std(&leads) } else { 0.0 };
    let min = leads.iter().copied().fold(f64::INFINITY, f64::min);
    let max = leads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = libm::floor(min / LEAD_BIN + 1e-9) as i64;
    let last = libm::floor(max / LEAD_BIN + 1e-9) as i64;
    let mut histogram: Vec<HistBin> =
        (first..=last).map(|k| HistBin { lo: k as f64 * LEAD_BIN, hi: (k + 1) as f64 * LEAD_BIN, count: 0 }).collect();
    for l in &leads {
        let k = libm::floor(l / LEAD_BIN + 1e-9) as i64 - first;
        histogram[k as usize].count += 1;
    }
    LeadSummary { leads, excluded, mean, std, min, max, histogram }
}
