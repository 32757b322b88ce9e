//! Data-generating process, censoring calibration and study summaries.

use distortcox::rng::StreamRng;
use distortcox::simulation::{
    self, calibrate_tau, generate_dataset, run_replication, run_replications, summarize, CensoringPilot, DistortionSpec,
    Method, SimulationConfig,
};

#[test]
fn null_model_event_times_are_standard_exponential() {
    let mut config = SimulationConfig::paper(100_000, 0.2, DistortionSpec::Identity);
    config.beta0 = vec![0.0, 0.0];
    config.gamma0 = 0.0;
    // with τ this large, censoring before the event has probability about 1/τ
    let data = generate_dataset(&config, 1e12, &mut StreamRng::new(5, 0));
    let mut t = data.times();
    t.sort_by(f64::total_cmp);
    let n = t.len() as f64;
    let ks = t
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS distance {ks}");
}

#[test]
fn identity_distortion_leaves_covariate_untouched() {
    let config = SimulationConfig::paper(200, 0.2, DistortionSpec::Identity);
    let data = generate_dataset(&config, 1.0, &mut StreamRng::new(9, 3));
    for r in &data.records {
        assert_eq!(Some(r.x_tilde), r.x_true);
    }
}

/// Bit-level fingerprint of a dataset, pinned below.
fn fingerprint(data: &distortcox::Dataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |v: u64| {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for r in &data.records {
        mix(r.time.to_bits());
        mix(u64::from(r.event));
        r.z.iter().for_each(|z| mix(z.to_bits()));
        mix(r.u.to_bits());
        mix(r.x_tilde.to_bits());
    }
    h
}

#[test]
fn seed_123_dataset_is_pinned() {
    let config = SimulationConfig::paper(100, 0.2, DistortionSpec::linear_paper());
    let a = generate_dataset(&config, 1.5, &mut StreamRng::new(123, 0));
    let b = generate_dataset(&config, 1.5, &mut StreamRng::new(123, 0));
    assert_eq!(a, b);
    assert_eq!(fingerprint(&a), SEED_123_FINGERPRINT);
}

const SEED_123_FINGERPRINT: u64 = 10_144_244_901_588_163_057;

#[test]
fn censoring_calibration() {
    let config = SimulationConfig::paper(100, 0.2, DistortionSpec::linear_paper());
    let pilot = CensoringPilot::new(&config, 20_000, 17);
    assert!(pilot.censoring_rate(1e-4) > 0.99);

    let cal = calibrate_tau(&config).unwrap();
    assert!((cal.pilot_cr - 0.2).abs() < simulation::CR_TOLERANCE);
    let mut by_tau = cal.trace.clone();
    by_tau.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(by_tau.windows(2).all(|w| w[1].1 <= w[0].1), "trace not monotone: {by_tau:?}");

    // independent check on fresh subjects
    let mut fresh = SimulationConfig::paper(100_000, 0.2, DistortionSpec::linear_paper());
    fresh.seed = 991;
    let data = generate_dataset(&fresh, cal.tau, &mut StreamRng::new(991, 0));
    let cr = data.censoring_rate();
    assert!((0.18..=0.22).contains(&cr), "achieved {cr}");
}

/// Mean absolute proposed-minus-naive gap per coordinate under no distortion.
fn identity_gap(n: usize, reps: usize) -> [f64; 3] {
    let mut config = SimulationConfig::paper(n, 0.2, DistortionSpec::Identity);
    config.replications = reps;
    let mut gap = [0.0; 3];
    for r in 0..reps {
        let outcome = run_replication(&config, 1.0, r).1.unwrap();
        let (p, nv, o) = (outcome.get(Method::Proposed), outcome.get(Method::Naive), outcome.get(Method::Oracle));
        // X̃ = X, so these two fits see identical data
        assert_eq!(nv, o);
        for k in 0..3 {
            gap[k] += (p.estimate[k] - nv.estimate[k]).abs() / reps as f64;
        }
    }
    gap
}

#[test]
fn identity_distortion_methods_agree() {
    // with nothing to correct, the proposed fit differs from the naive one only
    // through the noise in φ̂, which fades as n grows
    let small = identity_gap(200, 20);
    let large = identity_gap(1000, 20);
    for k in 0..3 {
        assert!(small[k] < 0.1, "{small:?}");
        assert!(large[k] < small[k], "{small:?} -> {large:?}");
    }
    assert!(large.iter().all(|&g| g < 0.03), "{large:?}");
}

#[test]
fn summaries_are_identical_across_thread_counts() {
    let mut config = SimulationConfig::paper(80, 0.3, DistortionSpec::quadratic_paper());
    config.replications = 24;
    let tau = calibrate_tau(&config).unwrap().tau;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| summarize(&config, tau, &run_replications(&config, tau)).unwrap())
    };
    let one = run(1);
    for threads in [2, 4, 7] {
        assert_eq!(run(threads), one);
    }
}

#[test]
fn mse_decomposes_into_bias_and_spread() {
    let mut config = SimulationConfig::paper(60, 0.2, DistortionSpec::linear_paper());
    config.replications = 30;
    let summary = simulation::run_study(&config).unwrap();
    let m = summary.successful() as f64;
    for row in &summary.rows {
        let sd = row.sd.unwrap();
        let rebuilt = row.bias * row.bias + sd * sd * (m - 1.0) / m;
        assert!((row.mse - rebuilt).abs() < 1e-12, "{row:?}");
    }
}
