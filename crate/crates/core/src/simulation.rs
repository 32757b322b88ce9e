//! Monte Carlo harness comparing the calibrated ("proposed"), naive and
//! oracle Cox fits under a multiplicatively distorted covariate.
//!
//! Data follow `λ(t | Z, X) = exp(βᵀZ + γX)` with unit baseline hazard,
//! `Z ~ N(0, (ρ^|j-k|))`, `X ~ N(μ_X, σ_X²)`, `U ~ Unif[u_lo, u_hi]`,
//! censoring `C = min(Unif(0, τ + 2), τ)`, and `X̃ = φ(U)·X`. The study
//! duration `τ` is calibrated to a target censoring rate on a pilot sample.
//!
//! Replication `r` draws from its own stream (see [`crate::rng`]) and the
//! per-replication results are reduced in index order, so a summary is
//! bit-identical for a given seed no matter how many threads run it.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::calibration::{self, CalibrationError};
use crate::cox::{self, CoxError, FitOptions};
use crate::data::{Dataset, SurvivalRecord};
use crate::kernel::{self, Bandwidth, BandwidthGrid, KernelError};
use crate::numeric::{normal_quantile, CompensatedSum};
use crate::rng::{StreamRng, PILOT_STREAM};

/// Subjects in the censoring-rate pilot sample.
pub const PILOT_SIZE: usize = 50_000;
/// Acceptable gap between pilot and target censoring rate.
pub const CR_TOLERANCE: f64 = 0.005;
pub const TAU_BRACKET: (f64, f64) = (1e-4, 1e4);
/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("distortion has mean {mean} under the confounder law, expected 1")]
    DistortionNotMeanOne { mean: f64 },
    #[error("censoring rate {target} unattainable: pilot rate is {at_lo} at τ={lo} and {at_hi} at τ={hi}")]
    BracketFailure { target: f64, lo: f64, hi: f64, at_lo: f64, at_hi: f64 },
    #[error("{failures} of {replications} replications failed (first: {first})")]
    TooManyFailures { failures: usize, replications: usize, first: String },
}

pub type Result<T> = std::result::Result<T, SimulationError>;

/// Distortion function `φ(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DistortionSpec {
    Identity,
    /// `(u + shift) / scale`
    LinearShift { shift: f64, scale: f64 },
    /// `coef · (u + shift)²`
    Quadratic { coef: f64, shift: f64 },
    /// piecewise-linear through `(u, φ)` knots, constant beyond the ends
    Table { knots: Vec<(f64, f64)> },
}

impl DistortionSpec {
    /// `(u + 3) / 7`, mean one over Unif[2, 6].
    pub fn linear_paper() -> Self {
        Self::LinearShift { shift: 3.0, scale: 7.0 }
    }

    /// `3 (u + 1)² / 79`, mean one over Unif[2, 6].
    pub fn quadratic_paper() -> Self {
        Self::Quadratic { coef: 3.0 / 79.0, shift: 1.0 }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::LinearShift { shift, scale } => (u + shift) / scale,
            Self::Quadratic { coef, shift } => coef * (u + shift) * (u + shift),
            Self::Table { knots } => {
                let k = knots.partition_point(|&(x, _)| x <= u);
                if k == 0 {
                    knots[0].1
                } else if k == knots.len() {
                    knots[k - 1].1
                } else {
                    let (x0, y0) = knots[k - 1];
                    let (x1, y1) = knots[k];
                    y0 + (y1 - y0) * (u - x0) / (x1 - x0)
                }
            }
        }
    }

    /// `E φ(U)` for `U ~ Unif[lo, hi]`, in closed form.
    pub fn mean_over_uniform(&self, lo: f64, hi: f64) -> f64 {
        let width = hi - lo;
        match self {
            Self::Identity => 1.0,
            Self::LinearShift { shift, scale } => (0.5 * (lo + hi) + shift) / scale,
            Self::Quadratic { coef, shift } => {
                let (a, b) = (lo + shift, hi + shift);
                coef * (b * b * b - a * a * a) / (3.0 * width)
            }
            Self::Table { knots } => {
                // φ is linear between consecutive breakpoints, so trapezoids are exact
                let mut xs = vec![lo, hi];
                xs.extend(knots.iter().map(|k| k.0).filter(|&x| x > lo && x < hi));
                xs.sort_by(f64::total_cmp);
                let area: CompensatedSum =
                    xs.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1]))).collect();
                area.value() / width
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::LinearShift { .. } => "linear_shift",
            Self::Quadratic { .. } => "quadratic",
            Self::Table { .. } => "table",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::LinearShift { scale, .. } if *scale == 0.0 => {
                Err(SimulationError::InvalidConfig("linear distortion scale must be nonzero".into()))
            }
            Self::Table { knots } if knots.is_empty() || knots.windows(2).any(|w| w[0].0 >= w[1].0) => Err(
                SimulationError::InvalidConfig("distortion table needs strictly increasing knots".into()),
            ),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for DistortionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "phi(u) = 1"),
            Self::LinearShift { shift, scale } => write!(f, "phi(u) = (u + {shift}) / {scale}"),
            Self::Quadratic { coef, shift } => write!(f, "phi(u) = {coef} * (u + {shift})^2"),
            Self::Table { knots } => write!(f, "phi(u) = piecewise linear through {} knots", knots.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// cross-validated bandwidth chosen afresh in each replication
    CvPerReplication,
    Fixed(Bandwidth),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub beta0: Vec<f64>,
    pub gamma0: f64,
    pub z_corr: f64,
    pub x_mean: f64,
    pub x_sd: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub distortion: DistortionSpec,
    pub target_cr: f64,
    pub replications: usize,
    pub seed: u64,
    pub ci_level: f64,
    pub bandwidth_policy: BandwidthPolicy,
}

impl SimulationConfig {
    /// The published design: β = (1, 0.5), γ = 1.5, ρ = 0.8, X ~ N(1, 0.5²),
    /// U ~ Unif[2, 6], 1000 replications.
    pub fn paper(n: usize, target_cr: f64, distortion: DistortionSpec) -> Self {
        Self {
            n,
            beta0: vec![1.0, 0.5],
            gamma0: 1.5,
            z_corr: 0.8,
            x_mean: 1.0,
            x_sd: 0.5,
            u_lo: 2.0,
            u_hi: 6.0,
            distortion,
            target_cr,
            replications: 1000,
            seed: 20_240_601,
            ci_level: 0.95,
            bandwidth_policy: BandwidthPolicy::CvPerReplication,
        }
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    pub fn truth(&self) -> Vec<f64> {
        let mut t = self.beta0.clone();
        t.push(self.gamma0);
        t
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.p()).map(|k| format!("beta{k}")).collect();
        names.push("gamma".into());
        names
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimulationError::InvalidConfig(msg.to_string()));
        if self.n < 10 {
            return bad("n must be at least 10");
        }
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if !(self.target_cr > 0.0 && self.target_cr < 1.0) {
            return bad("target censoring rate must lie in (0, 1)");
        }
        if self.beta0.is_empty() {
            return bad("beta0 must have at least one entry");
        }
        if !(self.z_corr.abs() < 1.0) {
            return bad("z_corr must lie in (-1, 1)");
        }
        if !(self.x_sd > 0.0) {
            return bad("x_sd must be positive");
        }
        if !(self.u_lo < self.u_hi) {
            return bad("u_lo must be below u_hi");
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad("ci_level must lie in (0, 1)");
        }
        let all_finite = self.beta0.iter().chain([&self.gamma0, &self.x_mean, &self.u_lo, &self.u_hi]).all(|v| v.is_finite());
        if !all_finite {
            return bad("design parameters must be finite");
        }
        self.distortion.validate()?;
        let mean = self.distortion.mean_over_uniform(self.u_lo, self.u_hi);
        if !((mean - 1.0).abs() <= 1e-10) {
            return Err(SimulationError::DistortionNotMeanOne { mean });
        }
        Ok(())
    }
}

/// Draws of one subject before censoring is applied.
struct Latent {
    z: Vec<f64>,
    x: f64,
    u: f64,
    event_time: f64,
    censor_uniform: f64,
}

fn draw_latent(config: &SimulationConfig, rng: &mut StreamRng) -> Latent {
    let p = config.p();
    let rho = config.z_corr;
    let innovation_sd = (1.0 - rho * rho).sqrt();
    // AR(1) recursion = lower-triangular factor of (ρ^|j-k|)
    let mut z = Vec::with_capacity(p);
    for k in 0..p {
        let g = rng.standard_normal();
        z.push(if k == 0 { g } else { rho * z[k - 1] + innovation_sd * g });
    }
    let x = rng.normal(config.x_mean, config.x_sd);
    let u = rng.uniform_range(config.u_lo, config.u_hi);
    let e = rng.standard_exponential();
    let censor_uniform = rng.uniform();
    let eta: f64 = config.beta0.iter().zip(&z).map(|(b, z)| b * z).sum::<f64>() + config.gamma0 * x;
    Latent { z, x, u, event_time: e / libm::exp(eta), censor_uniform }
}

#[inline]
fn censor_time(v: f64, tau: f64) -> f64 {
    (v * (tau + 2.0)).min(tau)
}

/// One simulated sample with the true covariate retained.
pub fn generate_dataset(config: &SimulationConfig, tau: f64, rng: &mut StreamRng) -> Dataset {
    let records = (0..config.n)
        .map(|_| {
            let l = draw_latent(config, rng);
            let c = censor_time(l.censor_uniform, tau);
            SurvivalRecord {
                time: l.event_time.min(c),
                event: l.event_time <= c,
                x_tilde: config.distortion.eval(l.u) * l.x,
                z: l.z,
                u: l.u,
                x_true: Some(l.x),
            }
        })
        .collect();
    Dataset {
        records,
        z_names: (1..=config.p()).map(|k| format!("z{k}")).collect(),
        covariate_name: "x".into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauCalibration {
    pub tau: f64,
    /// censoring rate of the pilot sample at `tau`
    pub pilot_cr: f64,
    /// `(τ, pilot censoring rate)` at every evaluation, in order
    pub trace: Vec<(f64, f64)>,
}

/// Pilot sample of `(event time, censoring uniform)` pairs; common random
/// numbers make the estimated censoring rate monotone in `τ`.
pub struct CensoringPilot {
    draws: Vec<(f64, f64)>,
}

impl CensoringPilot {
    pub fn new(config: &SimulationConfig, size: usize, stream: u64) -> Self {
        let mut rng = StreamRng::new(config.seed, stream);
        let draws = (0..size)
            .map(|_| {
                let l = draw_latent(config, &mut rng);
                (l.event_time, l.censor_uniform)
            })
            .collect();
        Self { draws }
    }

    pub fn censoring_rate(&self, tau: f64) -> f64 {
        let censored = self.draws.iter().filter(|&&(t, v)| t > censor_time(v, tau)).count();
        censored as f64 / self.draws.len() as f64
    }
}

/// Geometric bisection of `τ` over [`TAU_BRACKET`] until the pilot censoring
/// rate is within [`CR_TOLERANCE`] of the target.
pub fn calibrate_tau(config: &SimulationConfig) -> Result<TauCalibration> {
    if !(config.target_cr > 0.0 && config.target_cr < 1.0) {
        return Err(SimulationError::InvalidConfig("target censoring rate must lie in (0, 1)".into()));
    }
    let pilot = CensoringPilot::new(config, PILOT_SIZE, PILOT_STREAM);
    let target = config.target_cr;
    let (mut lo, mut hi) = TAU_BRACKET;
    let mut trace = Vec::new();
    let eval = |tau: f64, trace: &mut Vec<(f64, f64)>| {
        let cr = pilot.censoring_rate(tau);
        trace.push((tau, cr));
        cr
    };
    let at_lo = eval(lo, &mut trace);
    let at_hi = eval(hi, &mut trace);
    let bracket_err = SimulationError::BracketFailure { target, lo, hi, at_lo, at_hi };
    if !(at_lo >= target - CR_TOLERANCE && at_hi <= target + CR_TOLERANCE) {
        return Err(bracket_err);
    }
    for &(tau, cr) in &[(lo, at_lo), (hi, at_hi)] {
        if (cr - target).abs() < CR_TOLERANCE {
            return Ok(TauCalibration { tau, pilot_cr: cr, trace });
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let cr = eval(mid, &mut trace);
        if (cr - target).abs() < CR_TOLERANCE {
            return Ok(TauCalibration { tau: mid, pilot_cr: cr, trace });
        }
        if cr > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(bracket_err)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Proposed,
    Naive,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Naive, Method::Oracle];

    pub fn label(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Naive => "naive",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum ReplicationError {
    #[error("bandwidth selection: {0}")]
    Bandwidth(#[from] KernelError),
    #[error("calibration: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("{method} fit: {source}")]
    Fit { method: Method, source: CoxError },
}

/// Estimates and standard errors of one method in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub censoring_rate: f64,
    pub bandwidth: f64,
    /// indexed like [`Method::ALL`]
    pub methods: [MethodEstimate; 3],
}

impl ReplicationOutcome {
    pub fn get(&self, method: Method) -> &MethodEstimate {
        &self.methods[method as usize]
    }
}

/// Replication `index`: fresh data, then the three fits on the same sample.
pub fn run_replication(
    config: &SimulationConfig,
    tau: f64,
    index: usize,
) -> (f64, std::result::Result<ReplicationOutcome, ReplicationError>) {
    let mut rng = StreamRng::new(config.seed, index as u64);
    let data = generate_dataset(config, tau, &mut rng);
    let cr = data.censoring_rate();
    (cr, fit_three(config, &data).map(|(bandwidth, methods)| ReplicationOutcome { index, censoring_rate: cr, bandwidth, methods }))
}

fn fit_three(
    config: &SimulationConfig,
    data: &Dataset,
) -> std::result::Result<(f64, [MethodEstimate; 3]), ReplicationError> {
    let n = data.n();
    let options = FitOptions::default();
    let u = data.u();
    let x_tilde = data.x_tilde();
    let x_true = data.x_true().expect("simulated data retain the true covariate");

    let h = match config.bandwidth_policy {
        BandwidthPolicy::Fixed(h) => h,
        BandwidthPolicy::CvPerReplication => kernel::select_bandwidth(&u, &BandwidthGrid::around_silverman(&u)?)?,
    };
    let cal = calibration::calibrate(&u, &x_tilde, h)?;

    let run = |method: Method, x: &[f64]| -> std::result::Result<MethodEstimate, ReplicationError> {
        let wrap = |source| ReplicationError::Fit { method, source };
        let cox_data = data.cox_data(x).map_err(wrap)?;
        let fit = cox::fit(&cox_data, &options).map_err(wrap)?;
        let var = match method {
            Method::Proposed => cox::sandwich_variance(&fit, &x_tilde, &cal.x_hat, n),
            _ => cox::model_variance(&fit, n),
        }
        .map_err(wrap)?;
        Ok(MethodEstimate { estimate: fit.theta_hat.iter().copied().collect(), std_error: var.std_errors.iter().copied().collect() })
    };
    Ok((
        h.value(),
        [run(Method::Proposed, &cal.x_hat)?, run(Method::Naive, &x_tilde)?, run(Method::Oracle, &x_true)?],
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub parameter: String,
    pub bias: f64,
    /// `None` with a single successful replication
    pub sd: Option<f64>,
    pub se: f64,
    pub mse: f64,
    pub cp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub rows: Vec<SummaryRow>,
    pub achieved_cr: f64,
    pub tau_used: f64,
    pub replications: usize,
    pub replication_failures: usize,
    pub mean_bandwidth: f64,
}

impl SimulationSummary {
    pub fn successful(&self) -> usize {
        self.replications - self.replication_failures
    }

    pub fn row(&self, method: Method, parameter: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.parameter == parameter)
    }
}

/// Bias, SD, SE, MSE and Wald coverage of one method/parameter cell.
pub fn summarize_cell(estimates: &[f64], std_errors: &[f64], truth: f64, z_crit: f64) -> (f64, Option<f64>, f64, f64, f64) {
    let m = estimates.len() as f64;
    let mean_est = estimates.iter().copied().collect::<CompensatedSum>().value() / m;
    let bias = mean_est - truth;
    let sd = (estimates.len() > 1).then(|| {
        let ss: CompensatedSum = estimates.iter().map(|e| (e - mean_est) * (e - mean_est)).collect();
        (ss.value() / (m - 1.0)).sqrt()
    });
    let se = std_errors.iter().copied().collect::<CompensatedSum>().value() / m;
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).collect::<CompensatedSum>().value() / m;
    let covered = estimates.iter().zip(std_errors).filter(|(e, s)| (*e - truth).abs() <= z_crit * *s).count();
    (bias, sd, se, mse, covered as f64 / m)
}

/// All replications of a study with a given `τ`, in index order.
pub fn run_replications(
    config: &SimulationConfig,
    tau: f64,
) -> Vec<(f64, std::result::Result<ReplicationOutcome, ReplicationError>)> {
    (0..config.replications).into_par_iter().map(|r| run_replication(config, tau, r)).collect()
}

pub fn run_study(config: &SimulationConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let tau = calibrate_tau(config)?.tau;
    run_study_with_tau(config, tau)
}

pub fn run_study_with_tau(config: &SimulationConfig, tau: f64) -> Result<SimulationSummary> {
    config.validate()?;
    let results = run_replications(config, tau);
    summarize(config, tau, &results)
}

pub fn summarize(
    config: &SimulationConfig,
    tau: f64,
    results: &[(f64, std::result::Result<ReplicationOutcome, ReplicationError>)],
) -> Result<SimulationSummary> {
    let replications = results.len();
    let failures = results.iter().filter(|r| r.1.is_err()).count();
    let ok: Vec<&ReplicationOutcome> = results.iter().filter_map(|r| r.1.as_ref().ok()).collect();
    if ok.is_empty() || failures as f64 > MAX_FAILURE_SHARE * replications as f64 {
        let first = results.iter().find_map(|r| r.1.as_ref().err()).map(|e| e.to_string()).unwrap_or_default();
        return Err(SimulationError::TooManyFailures { failures, replications, first });
    }
    let z_crit = normal_quantile(0.5 + 0.5 * config.ci_level);
    let truth = config.truth();
    let names = config.parameter_names();
    let mut rows = Vec::with_capacity(3 * truth.len());
    for method in Method::ALL {
        for (k, name) in names.iter().enumerate() {
            let est: Vec<f64> = ok.iter().map(|o| o.get(method).estimate[k]).collect();
            let se: Vec<f64> = ok.iter().map(|o| o.get(method).std_error[k]).collect();
            let (bias, sd, se, mse, cp) = summarize_cell(&est, &se, truth[k], z_crit);
            rows.push(SummaryRow { method, parameter: name.clone(), bias, sd, se, mse, cp });
        }
    }
    let achieved_cr = results.iter().map(|r| r.0).collect::<CompensatedSum>().value() / replications as f64;
    let mean_bandwidth = ok.iter().map(|o| o.bandwidth).collect::<CompensatedSum>().value() / ok.len() as f64;
    Ok(SimulationSummary { rows, achieved_cr, tau_used: tau, replications, replication_failures: failures, mean_bandwidth })
}
