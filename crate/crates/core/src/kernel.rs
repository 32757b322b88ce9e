//! Gaussian-kernel smoothing primitives.
//!
//! Nadaraya-Watson regression of a response on a scalar confounder, kernel
//! density estimation of the confounder (full and leave-one-out), and the
//! least-squares cross-validation criterion used to pick the bandwidth.
//!
//! The leave-one-out density keeps the `1/(n h)` normalisation of the full
//! estimate rather than `1/((n - 1) h)`, so `kde(U_i) - kde_loo(i)` is exactly
//! `K(0)/(n h)`.

use thiserror::Error;

use crate::numeric::{sample_sd, CompensatedSum};

/// `1/sqrt(2π)`, the Gaussian kernel at zero.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Nadaraya-Watson denominators below this are treated as extrapolation.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("empty sample (need at least {needed} point(s))")]
    EmptySample { needed: usize },
    #[error("kernel weights underflow at u = {u}: evaluation point is far outside the data")]
    DegenerateWeight { u: f64 },
    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("invalid bandwidth grid: {0}")]
    InvalidGrid(&'static str),
    #[error("non-finite input value {0}")]
    NonFinite(f64),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[inline]
pub fn gaussian_kernel(t: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * t * t).exp()
}

/// One `(U_i, X̃_i)` pair fed to the regression smoother.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSample {
    pub u: f64,
    pub w: f64,
}

impl KernelSample {
    pub fn new(u: f64, w: f64) -> Result<Self> {
        for v in [u, w] {
            if !v.is_finite() {
                return Err(KernelError::NonFinite(v));
            }
        }
        Ok(Self { u, w })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(KernelError::InvalidBandwidth(h))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Strictly increasing, nonempty set of candidate bandwidths.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthGrid(Vec<Bandwidth>);

impl BandwidthGrid {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(KernelError::InvalidGrid("grid is empty"));
        }
        let grid = values
            .iter()
            .map(|&h| Bandwidth::new(h))
            .collect::<Result<Vec<_>>>()?;
        if grid.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(KernelError::InvalidGrid("grid must be strictly increasing"));
        }
        Ok(Self(grid))
    }

    /// `count` log-spaced points from `lo` to `hi` inclusive.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        Bandwidth::new(lo)?;
        Bandwidth::new(hi)?;
        match count {
            0 => Err(KernelError::InvalidGrid("grid is empty")),
            1 => Self::new(&[lo]),
            _ => {
                if lo >= hi {
                    return Err(KernelError::InvalidGrid("lower bound must be below upper bound"));
                }
                let (a, b) = (lo.ln(), hi.ln());
                let step = (b - a) / (count - 1) as f64;
                let mut values: Vec<f64> = (0..count).map(|k| (a + step * k as f64).exp()).collect();
                values[0] = lo;
                values[count - 1] = hi;
                Self::new(&values)
            }
        }
    }

    /// Default search space: 40 log-spaced points on `[h_S/10, 10 h_S]`
    /// around the Silverman reference bandwidth of `points`.
    pub fn around_silverman(points: &[f64]) -> Result<Self> {
        let h_s = silverman_bandwidth(points)?;
        Self::log_spaced(h_s.value() / 10.0, h_s.value() * 10.0, 40)
    }

    pub fn values(&self) -> &[Bandwidth] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Silverman's reference rule `1.06 · sd · n^(-1/5)`.
pub fn silverman_bandwidth(points: &[f64]) -> Result<Bandwidth> {
    let sd = sample_sd(points).ok_or(KernelError::EmptySample { needed: 2 })?;
    Bandwidth::new(1.06 * sd * (points.len() as f64).powf(-0.2))
}

/// Nadaraya-Watson estimate of `E(w | u)` at `u`.
pub fn nw_regress(u: f64, samples: &[KernelSample], h: Bandwidth) -> Result<f64> {
    if samples.is_empty() {
        return Err(KernelError::EmptySample { needed: 1 });
    }
    let h = h.value();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for s in samples {
        let k = gaussian_kernel((u - s.u) / h);
        num.add(k * s.w);
        den.add(k);
    }
    let den = den.value();
    if !(den > WEIGHT_FLOOR) {
        return Err(KernelError::DegenerateWeight { u });
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.w), hi.max(s.w)));
    // rounding can push the ratio a hair outside the response range
    Ok((num.value() / den).clamp(lo, hi))
}

/// Kernel density estimate `(1/(n h)) Σ K((u - U_i)/h)`.
pub fn kde(u: f64, points: &[f64], h: Bandwidth) -> Result<f64> {
    if points.is_empty() {
        return Err(KernelError::EmptySample { needed: 1 });
    }
    let h = h.value();
    let total: CompensatedSum = points.iter().map(|&p| gaussian_kernel((u - p) / h)).collect();
    Ok(total.value() / (points.len() as f64 * h))
}

/// Leave-one-out density at `U_i`, normalised by `n h`.
pub fn kde_loo(i: usize, points: &[f64], h: Bandwidth) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(KernelError::EmptySample { needed: 2 });
    }
    if i >= n {
        return Err(KernelError::IndexOutOfRange { index: i, len: n });
    }
    let h = h.value();
    let ui = points[i];
    let total: CompensatedSum = points
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &p)| gaussian_kernel((ui - p) / h))
        .collect();
    Ok(total.value() / (n as f64 * h))
}

/// Least-squares cross-validation criterion
/// `∫ p̂² du - (2/n) Σ_i p̂_(-i)(U_i)`.
///
/// The integral uses the Gaussian self-convolution `K⋆K = N(0, 2)`:
/// `∫ p̂² = (1/(n² h √(4π))) Σ_i Σ_j exp(-(U_i - U_j)²/(4h²))`.
pub fn cv_score(h: Bandwidth, points: &[f64]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(KernelError::EmptySample { needed: 2 });
    }
    let hv = h.value();
    let inv_4h2 = 1.0 / (4.0 * hv * hv);

    // e = exp(-d²/(4h²)) and e² = exp(-d²/(2h²)), so one exp per pair
    let mut conv = CompensatedSum::new();
    let mut loo = CompensatedSum::new();
    for i in 0..n {
        let ui = points[i];
        for &uj in &points[i + 1..] {
            let d = ui - uj;
            let e = (-d * d * inv_4h2).exp();
            conv.add(e);
            loo.add(e * e);
        }
    }
    let nf = n as f64;
    let conv_total = nf + 2.0 * conv.value();
    let integral_sq = conv_total / (nf * nf * hv * (4.0 * std::f64::consts::PI).sqrt());
    let loo_total = 2.0 * loo.value() * FRAC_1_SQRT_2PI / (nf * hv);
    Ok(integral_sq - 2.0 * loo_total / nf)
}

/// Grid point minimising [`cv_score`]; ties go to the smaller bandwidth.
pub fn select_bandwidth(points: &[f64], grid: &BandwidthGrid) -> Result<Bandwidth> {
    Ok(cv_curve(points, grid)?.selected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvCurve {
    pub bandwidths: Vec<Bandwidth>,
    pub scores: Vec<f64>,
    pub selected: Bandwidth,
    pub selected_index: usize,
}

/// Evaluates the criterion over the whole grid and records the minimiser.
pub fn cv_curve(points: &[f64], grid: &BandwidthGrid) -> Result<CvCurve> {
    let scores = grid
        .values()
        .iter()
        .map(|&h| cv_score(h, points))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = k;
        }
    }
    Ok(CvCurve {
        bandwidths: grid.values().to_vec(),
        scores,
        selected: grid.values()[best],
        selected_index: best,
    })
}
