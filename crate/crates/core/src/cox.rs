//! Cox proportional-hazards engine.
//!
//! The log partial likelihood, its score and the observed information are all
//! produced by one reverse-time sweep over the subjects that accumulates the
//! risk-set sums
//!
//! ```text
//! S0(θ,t) = Σ_j Y_j(t) exp(V_jᵀθ)
//! S1(θ,t) = Σ_j Y_j(t) exp(V_jᵀθ) V_j
//! S2(θ,t) = Σ_j Y_j(t) exp(V_jᵀθ) V_j V_jᵀ
//! ```
//!
//! with `Y_j(t) = 1{T̃_j ≥ t}`. Tied event times share one denominator
//! (Breslow), and subjects censored at an event time stay in that risk set.
//! The exponentials are rescaled against a running maximum of the linear
//! predictor so large `θ` does not overflow.
//!
//! [`sandwich_variance`] implements the covariance of the calibrated
//! estimator, `Σ⁻¹(Σ + Ω)Σ⁻¹ / n`, with `Ω = c ζζᵀ`,
//! `c = (Var X̃ - Var X) / (E X)²` and `ζ = -γ̂ (Σ_12, Σ_22)`. Because `ζ` is
//! `-γ̂` times the last column of `Σ`, the correction only touches the
//! `(γ, γ)` entry.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::calibration::{identifiable_mean, CalibrationError};
use crate::numeric::sample_variance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoxError {
    #[error("invalid Cox data: {0}")]
    InvalidData(String),
    #[error("partial likelihood is not finite at the current coefficients")]
    NonFiniteLikelihood,
    #[error("monotone partial likelihood (separation): |θ|∞ = {max_abs_coef:.3e} after {iterations} iterations")]
    SeparationDetected { iterations: usize, max_abs_coef: f64 },
    #[error("information matrix is singular")]
    SingularInformation,
    #[error("Newton-Raphson did not converge in {0} iterations")]
    MaxIterations(usize),
    #[error("step halving failed to increase the partial likelihood at iteration {0}")]
    LineSearchFailed(usize),
    #[error("mean of the distorted covariate ({0}) is numerically zero")]
    MeanNearZero(f64),
}

pub type Result<T> = std::result::Result<T, CoxError>;

/// Times, event indicators and the covariate matrix whose rows are
/// `V_i = (Z_iᵀ, x_i)`; the distorted covariate is the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxData {
    times: Vec<f64>,
    events: Vec<bool>,
    covariates: DMatrix<f64>,
    /// subject indices by decreasing time
    order: Vec<usize>,
}

impl CoxData {
    pub fn new(times: Vec<f64>, events: Vec<bool>, covariates: DMatrix<f64>) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return Err(CoxError::InvalidData("no subjects".into()));
        }
        if events.len() != n || covariates.nrows() != n {
            return Err(CoxError::InvalidData(format!(
                "length mismatch: {} times, {} events, {} covariate rows",
                n,
                events.len(),
                covariates.nrows()
            )));
        }
        if covariates.ncols() == 0 {
            return Err(CoxError::InvalidData("no covariate columns".into()));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(CoxError::InvalidData(format!("time of subject {i} is {}", times[i])));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(CoxError::InvalidData("non-finite covariate value".into()));
        }
        if !events.iter().any(|&e| e) {
            return Err(CoxError::InvalidData("no events".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]).then(a.cmp(&b)));
        Ok(Self { times, events, covariates, order })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    /// Number of coefficients, `p + 1`.
    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn events(&self) -> &[bool] {
        &self.events
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }
}

/// Risk-set sums at one event time, stored relative to `exp(log_scale)`.
///
/// The ratios `E = S1/S0` and `V = S2/S0 - E Eᵀ` do not depend on the scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskSetAggregates {
    pub time: f64,
    pub log_scale: f64,
    pub s0: f64,
    pub s1: DVector<f64>,
    pub s2: DMatrix<f64>,
}

impl RiskSetAggregates {
    pub fn mean(&self) -> DVector<f64> {
        &self.s1 / self.s0
    }

    pub fn variance(&self) -> DMatrix<f64> {
        let e = self.mean();
        &self.s2 / self.s0 - &e * e.transpose()
    }
}

struct Sweep {
    loglik: f64,
    score: DVector<f64>,
    information: DMatrix<f64>,
    aggregates: Vec<RiskSetAggregates>,
}

#[derive(Clone, Copy, PartialEq)]
enum Want {
    LogLik,
    Score,
    All,
    Aggregates,
}

fn sweep(theta: &DVector<f64>, data: &CoxData, want: Want) -> Result<Sweep> {
    let p = data.dim();
    assert_eq!(theta.len(), p, "coefficient vector has the wrong length");
    let need_score = want != Want::LogLik;
    let need_info = matches!(want, Want::All | Want::Aggregates);

    let eta: Vec<f64> = (0..data.n()).map(|i| data.covariates.row(i).dot(&theta.transpose())).collect();
    if eta.iter().any(|e| !e.is_finite()) {
        return Err(CoxError::NonFiniteLikelihood);
    }

    let mut shift = f64::NEG_INFINITY;
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);

    let mut loglik = 0.0;
    let mut score = DVector::zeros(p);
    let mut information = DMatrix::zeros(p, p);
    let mut aggregates = Vec::new();

    let order = &data.order;
    let mut start = 0;
    while start < order.len() {
        let t = data.times[order[start]];
        let mut end = start;
        while end < order.len() && data.times[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if eta[i] > shift {
                let rescale = (shift - eta[i]).exp();
                s0 *= rescale;
                if need_score {
                    s1 *= rescale;
                }
                if need_info {
                    s2 *= rescale;
                }
                shift = eta[i];
            }
            let w = (eta[i] - shift).exp();
            s0 += w;
            if need_score {
                let v = data.covariates.row(i).transpose();
                if need_info {
                    s2.ger(w, &v, &v, 1.0);
                }
                s1.axpy(w, &v, 1.0);
            }
        }
        let deaths: Vec<usize> = order[start..end].iter().copied().filter(|&i| data.events[i]).collect();
        if !deaths.is_empty() {
            let log_s0 = shift + s0.ln();
            let d = deaths.len() as f64;
            for &i in &deaths {
                loglik += eta[i];
            }
            loglik -= d * log_s0;
            if need_score {
                let e = &s1 / s0;
                for &i in &deaths {
                    score += data.covariates.row(i).transpose();
                }
                score.axpy(-d, &e, 1.0);
                if need_info {
                    let v = &s2 / s0 - &e * e.transpose();
                    information += &v * d;
                }
            }
            if want == Want::Aggregates {
                aggregates.push(RiskSetAggregates {
                    time: t,
                    log_scale: shift,
                    s0,
                    s1: s1.clone(),
                    s2: s2.clone(),
                });
            }
        }
        start = end;
    }
    if !loglik.is_finite() {
        return Err(CoxError::NonFiniteLikelihood);
    }
    // symmetrise against accumulated rounding
    let information = (&information + information.transpose()) * 0.5;
    Ok(Sweep { loglik, score, information, aggregates })
}

/// `Σ_{i: Δ_i = 1} [V_iᵀθ - log Σ_{j: T̃_j ≥ T̃_i} exp(V_jᵀθ)]`.
pub fn log_partial_likelihood(theta: &DVector<f64>, data: &CoxData) -> Result<f64> {
    Ok(sweep(theta, data, Want::LogLik)?.loglik)
}

pub fn score(theta: &DVector<f64>, data: &CoxData) -> Result<DVector<f64>> {
    Ok(sweep(theta, data, Want::Score)?.score)
}

/// Observed information `Σ_events V(θ, T̃_i)`, i.e. minus the Hessian.
pub fn information(theta: &DVector<f64>, data: &CoxData) -> Result<DMatrix<f64>> {
    Ok(sweep(theta, data, Want::All)?.information)
}

/// Risk-set sums at each distinct event time, in decreasing time order.
pub fn risk_set_aggregates(theta: &DVector<f64>, data: &CoxData) -> Result<Vec<RiskSetAggregates>> {
    Ok(sweep(theta, data, Want::Aggregates)?.aggregates)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// converged once `|score|∞ < score_tolerance · n` ...
    pub score_tolerance: f64,
    /// ... the last step changed the log-likelihood by less than
    /// `loglik_tolerance · max(1, |loglik|)` (relative, since rounding in a
    /// sum of n terms grows with n) ...
    pub loglik_tolerance: f64,
    pub max_halvings: usize,
    /// `|θ|∞` beyond this is treated as divergence to infinity
    pub max_abs_coefficient: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            score_tolerance: 1e-9,
            loglik_tolerance: 1e-12,
            max_halvings: 30,
            max_abs_coefficient: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxFit {
    pub theta_hat: DVector<f64>,
    pub loglik: f64,
    pub information: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_score_norm: f64,
}

impl CoxFit {
    pub fn gamma_hat(&self) -> f64 {
        self.theta_hat[self.theta_hat.len() - 1]
    }
}

fn newton_step(information: &DMatrix<f64>, score: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(chol) = information.clone().cholesky() {
        return Ok(chol.solve(score));
    }
    information
        .clone()
        .lu()
        .solve(score)
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(CoxError::SingularInformation)
}

/// Damped Newton-Raphson from `θ = 0`.
pub fn fit(data: &CoxData, options: &FitOptions) -> Result<CoxFit> {
    let n = data.n() as f64;
    let score_tol = options.score_tolerance * n;
    let mut theta = DVector::zeros(data.dim());
    let mut current = sweep(&theta, data, Want::All)?;

    for iteration in 1..=options.max_iterations {
        let step = newton_step(&current.information, &current.score)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_halvings {
            let candidate = &theta + &step * scale;
            if let Ok(ll) = log_partial_likelihood(&candidate, data) {
                if ll >= current.loglik - 1e-12 * (1.0 + current.loglik.abs()) {
                    accepted = Some(candidate);
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some(candidate) = accepted else {
            if current.score.amax() < score_tol {
                return Ok(finish(theta, current, iteration - 1, true));
            }
            return Err(CoxError::LineSearchFailed(iteration));
        };

        let next = sweep(&candidate, data, Want::All)?;
        let delta = (next.loglik - current.loglik).abs();
        theta = candidate;
        current = next;

        let max_abs = theta.amax();
        if max_abs > options.max_abs_coefficient {
            return Err(CoxError::SeparationDetected { iterations: iteration, max_abs_coef: max_abs });
        }
        // the step size matters too: under monotone likelihood the score and
        // Δll vanish while the Newton step stays O(1)
        let step_size = (&step * scale).amax();
        let ll_tol = options.loglik_tolerance * current.loglik.abs().max(1.0);
        if current.score.amax() < score_tol && delta < ll_tol && step_size < 1e-6 * (1.0 + max_abs) {
            return Ok(finish(theta, current, iteration, true));
        }
    }
    Err(CoxError::MaxIterations(options.max_iterations))
}

fn finish(theta: DVector<f64>, state: Sweep, iterations: usize, converged: bool) -> CoxFit {
    CoxFit {
        max_score_norm: state.score.amax(),
        theta_hat: theta,
        loglik: state.loglik,
        information: state.information,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    /// information / n
    pub sigma_hat: DMatrix<f64>,
    pub omega_hat: DMatrix<f64>,
    /// covariance of θ̂ (already divided by n)
    pub covariance: DMatrix<f64>,
    pub std_errors: DVector<f64>,
}

fn invert_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = match m.clone().cholesky() {
        Some(chol) => chol.inverse(),
        None => m.clone().try_inverse().ok_or(CoxError::SingularInformation)?,
    };
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(CoxError::SingularInformation);
    }
    Ok((&inv + inv.transpose()) * 0.5)
}

fn assemble(sigma_hat: DMatrix<f64>, omega_hat: DMatrix<f64>, n: usize) -> Result<VarianceEstimate> {
    let sigma_inv = invert_spd(&sigma_hat)?;
    let middle = &sigma_hat + &omega_hat;
    let mut covariance = &sigma_inv * middle * &sigma_inv / n as f64;
    covariance = (&covariance + covariance.transpose()) * 0.5;
    let std_errors = covariance.diagonal().map(|v| v.max(0.0).sqrt());
    Ok(VarianceEstimate { sigma_hat, omega_hat, covariance, std_errors })
}

/// Model-based covariance `Σ̂⁻¹ / n` (no calibration correction).
pub fn model_variance(fit: &CoxFit, n: usize) -> Result<VarianceEstimate> {
    if n < 2 {
        return Err(CoxError::InvalidData("variance needs n >= 2".into()));
    }
    let sigma_hat = &fit.information / n as f64;
    let p = sigma_hat.nrows();
    assemble(sigma_hat, DMatrix::zeros(p, p), n)
}

/// Plug-in sandwich covariance of the calibrated estimator.
///
/// `Var X̃` and `Var X` are the sample variances of `xtilde` and `x_hat`,
/// `E X` is estimated by `mean(xtilde)`, and a negative variance difference
/// is clamped to zero.
pub fn sandwich_variance(fit: &CoxFit, xtilde: &[f64], x_hat: &[f64], n: usize) -> Result<VarianceEstimate> {
    if n < 2 || xtilde.len() < 2 || x_hat.len() < 2 {
        return Err(CoxError::InvalidData("variance needs n >= 2".into()));
    }
    let mean_x = identifiable_mean(xtilde).map_err(|e| match e {
        CalibrationError::MeanNearZero { mean } => CoxError::MeanNearZero(mean),
        other => CoxError::InvalidData(other.to_string()),
    })?;
    let var_tilde = sample_variance(xtilde).unwrap_or(0.0);
    let var_hat = sample_variance(x_hat).unwrap_or(0.0);
    let inflation = (var_tilde - var_hat).max(0.0) / (mean_x * mean_x);

    let sigma_hat = &fit.information / n as f64;
    let last = sigma_hat.ncols() - 1;
    let zeta: DVector<f64> = sigma_hat.column(last) * -fit.gamma_hat();
    let omega_hat = &zeta * zeta.transpose() * inflation;
    assemble(sigma_hat, omega_hat, n)
}
