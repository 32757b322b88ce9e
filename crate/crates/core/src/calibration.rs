//! Covariate calibration for a multiplicatively distorted covariate.
//!
//! With `X̃ = φ(U)·X` and `E φ(U) = 1`, the distortion is recovered as
//! `φ̂(u) = ψ̂(u) / mean(X̃)` where `ψ̂` is the Nadaraya-Watson regression of
//! `X̃` on `U`, and the calibrated covariate is `X̂_i = X̃_i / φ̂(U_i)`.
//! `φ̂` is only ever evaluated at the observed `U_i`.

use thiserror::Error;

use crate::kernel::{self, Bandwidth, KernelError, KernelSample};
use crate::numeric::{mean, sample_sd};

/// Default lower bound on `|φ̂(U_i)|`.
pub const PHI_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("confounder and covariate lengths differ ({u} vs {x})")]
    LengthMismatch { u: usize, x: usize },
    #[error("calibration needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("mean of the distorted covariate ({mean}) is numerically zero; the distortion is not identifiable")]
    MeanNearZero { mean: f64 },
    #[error("estimated distortion at subject {index} is {value}, below the floor {floor}")]
    PhiNearZero { index: usize, value: f64, floor: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// `ψ̂` and `φ̂` at the observed confounder values.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiEstimate {
    pub psi_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub bandwidth: Bandwidth,
    pub xtilde_mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub psi_hat: Vec<f64>,
    pub phi_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub bandwidth: Bandwidth,
    pub xtilde_mean: f64,
}

/// Mean of `xtilde`, rejecting a mean that is zero relative to its spread.
pub(crate) fn identifiable_mean(xtilde: &[f64]) -> Result<f64> {
    let m = mean(xtilde);
    let sd = sample_sd(xtilde).unwrap_or(0.0);
    if !m.is_finite() || m.abs() <= 1e-8 * sd || m == 0.0 {
        return Err(CalibrationError::MeanNearZero { mean: m });
    }
    Ok(m)
}

pub fn estimate_phi(u_values: &[f64], xtilde: &[f64], h: Bandwidth) -> Result<PhiEstimate> {
    if u_values.len() != xtilde.len() {
        return Err(CalibrationError::LengthMismatch { u: u_values.len(), x: xtilde.len() });
    }
    if xtilde.len() < 2 {
        return Err(CalibrationError::TooFewSubjects(xtilde.len()));
    }
    let xtilde_mean = identifiable_mean(xtilde)?;
    let samples = u_values
        .iter()
        .zip(xtilde)
        .map(|(&u, &w)| KernelSample::new(u, w))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let psi_hat = u_values
        .iter()
        .map(|&u| kernel::nw_regress(u, &samples, h))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let phi_hat = psi_hat.iter().map(|p| p / xtilde_mean).collect();
    Ok(PhiEstimate { psi_hat, phi_hat, bandwidth: h, xtilde_mean })
}

pub fn calibrate(u_values: &[f64], xtilde: &[f64], h: Bandwidth) -> Result<CalibrationResult> {
    calibrate_with_floor(u_values, xtilde, h, PHI_FLOOR)
}

pub fn calibrate_with_floor(
    u_values: &[f64],
    xtilde: &[f64],
    h: Bandwidth,
    phi_floor: f64,
) -> Result<CalibrationResult> {
    let PhiEstimate { psi_hat, phi_hat, bandwidth, xtilde_mean } = estimate_phi(u_values, xtilde, h)?;
    if let Some((index, &value)) = phi_hat.iter().enumerate().find(|(_, v)| !(v.abs() >= phi_floor)) {
        return Err(CalibrationError::PhiNearZero { index, value, floor: phi_floor });
    }
    let x_hat = xtilde.iter().zip(&phi_hat).map(|(x, p)| x / p).collect();
    Ok(CalibrationResult { psi_hat, phi_hat, x_hat, bandwidth, xtilde_mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bw(h: f64) -> Bandwidth {
        Bandwidth::new(h).unwrap()
    }

    #[test]
    fn constant_covariate_is_untouched() {
        let u = [2.0, 3.0, 5.5, 4.0];
        let x = [1.7; 4];
        let r = calibrate(&u, &x, bw(0.5)).unwrap();
        assert!(r.phi_hat.iter().all(|&p| p == 1.0));
        assert_eq!(r.x_hat, x.to_vec());
    }

    #[test]
    fn two_point_example() {
        let r = calibrate(&[0.0, 2.0], &[1.0, 3.0], bw(1.0)).unwrap();
        assert_eq!(r.xtilde_mean, 2.0);
        assert_abs_diff_eq!(r.phi_hat[0], 0.6192, epsilon = 1e-4);
        assert_abs_diff_eq!(r.x_hat[0], 1.6150, epsilon = 1e-4);
        // by symmetry the second subject mirrors the first
        assert_abs_diff_eq!(r.psi_hat[0] + r.psi_hat[1], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_mean_is_rejected() {
        assert!(matches!(
            estimate_phi(&[0.0, 1.0], &[-1.0, 1.0], bw(1.0)),
            Err(CalibrationError::MeanNearZero { .. })
        ));
        assert!(matches!(
            estimate_phi(&[0.0, 1.0], &[0.0, 0.0], bw(1.0)),
            Err(CalibrationError::MeanNearZero { .. })
        ));
    }

    #[test]
    fn sign_change_hits_the_floor() {
        // ψ̂ changes sign between the clusters at u = 0 and u = 10; the middle
        // value is chosen so that ψ̂(5) cancels to rounding level
        let h = bw(5.0);
        let w = (-0.5f64).exp();
        let u = [0.0, 0.0, 10.0, 10.0, 5.0];
        let x = [-3.0, -3.0, 1.0, 1.0, 4.0 * w];
        let est = estimate_phi(&u, &x, h).unwrap();
        assert!(est.phi_hat[4].abs() < 1e-12);
        assert!(est.phi_hat[0] * est.phi_hat[2] < 0.0);
        assert!(matches!(calibrate(&u, &x, h), Err(CalibrationError::PhiNearZero { index: 4, .. })));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            calibrate(&[0.0], &[1.0, 2.0], bw(1.0)),
            Err(CalibrationError::LengthMismatch { .. })
        ));
        assert_eq!(calibrate(&[0.0], &[1.0], bw(1.0)), Err(CalibrationError::TooFewSubjects(1)));
    }

    proptest! {
        #[test]
        fn reconstruction_and_scale_equivariance(
            rows in prop::collection::vec((2.0f64..6.0, 0.2f64..3.0), 2..40),
            h in 0.2f64..2.0,
            c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0],
        ) {
            let u: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let x: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let r = calibrate(&u, &x, bw(h)).unwrap();
            for i in 0..x.len() {
                let back = r.x_hat[i] * r.phi_hat[i];
                let ulps = (back.to_bits() as i64 - x[i].to_bits() as i64).abs();
                prop_assert!(ulps <= 4, "subject {} off by {} ulps", i, ulps);
            }
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let rs = calibrate(&u, &scaled, bw(h)).unwrap();
            for i in 0..x.len() {
                prop_assert!((rs.phi_hat[i] - r.phi_hat[i]).abs() < 1e-12 * (1.0 + r.phi_hat[i].abs()));
                prop_assert!((rs.x_hat[i] - c * r.x_hat[i]).abs() < 1e-11 * (1.0 + (c * r.x_hat[i]).abs()));
            }
        }
    }
}
