//! Kaplan-Meier product-limit estimator.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KmError {
    #[error("no observations")]
    EmptySample,
    #[error("times and events differ in length ({times} vs {events})")]
    LengthMismatch { times: usize, events: usize },
    #[error("time of observation {index} is {value}; times must be finite and non-negative")]
    InvalidTime { index: usize, value: f64 },
}

/// Survival curve listed at the distinct event times.
///
/// Before the first listed time the curve is 1; censoring times do not add
/// steps.
#[derive(Debug, Clone, PartialEq)]
pub struct KMCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n_events: Vec<usize>,
    /// total number of observations
    pub n: usize,
}

impl KMCurve {
    /// `S(t)` for the right-continuous step function.
    pub fn survival_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn km_estimate(times: &[f64], events: &[bool]) -> Result<KMCurve, KmError> {
    if times.len() != events.len() {
        return Err(KmError::LengthMismatch { times: times.len(), events: events.len() });
    }
    if times.is_empty() {
        return Err(KmError::EmptySample);
    }
    if let Some((index, &value)) = times.iter().enumerate().find(|(_, t)| !t.is_finite() || **t < 0.0) {
        return Err(KmError::InvalidTime { index, value });
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curve = KMCurve {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        n_events: Vec::new(),
        n: times.len(),
    };
    let mut remaining = times.len();
    let mut s = 1.0;
    let mut k = 0;
    while k < order.len() {
        let t = times[order[k]];
        let mut end = k;
        let mut deaths = 0;
        while end < order.len() && times[order[end]] == t {
            deaths += usize::from(events[order[end]]);
            end += 1;
        }
        if deaths > 0 {
            s *= (remaining - deaths) as f64 / remaining as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(remaining);
            curve.n_events.push(deaths);
        }
        remaining -= end - k;
        k = end;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_censored_is_flat() {
        let c = km_estimate(&[1.0, 2.0, 3.0], &[false, false, false]).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.survival_at(10.0), 1.0);
    }

    #[test]
    fn full_follow_up() {
        let c = km_estimate(&[1.0, 2.0], &[true, true]).unwrap();
        assert_eq!(c.times, vec![1.0, 2.0]);
        assert_eq!(c.survival, vec![0.5, 0.0]);
        assert_eq!(c.survival_at(1.5), 0.5);
        assert_eq!(c.survival_at(0.5), 1.0);
    }

    #[test]
    fn censored_middle_subject() {
        let c = km_estimate(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(c.times, vec![1.0, 3.0]);
        assert_eq!(c.survival, vec![2.0 / 3.0, 0.0]);
        assert_eq!(c.at_risk, vec![3, 1]);
        assert_eq!(c.n_events, vec![1, 1]);
    }

    #[test]
    fn censoring_tied_with_event_stays_at_risk() {
        let c = km_estimate(&[2.0, 2.0, 5.0], &[true, false, true]).unwrap();
        assert_eq!(c.at_risk, vec![3, 1]);
        assert_eq!(c.survival[0], 2.0 / 3.0);
    }

    #[test]
    fn errors() {
        assert_eq!(km_estimate(&[], &[]), Err(KmError::EmptySample));
        assert!(matches!(km_estimate(&[1.0], &[]), Err(KmError::LengthMismatch { .. })));
        assert!(matches!(km_estimate(&[-1.0], &[true]), Err(KmError::InvalidTime { index: 0, .. })));
    }

    proptest! {
        #[test]
        fn monotone_bounded_and_permutation_invariant(
            obs in prop::collection::vec((0u8..20, any::<bool>()), 1..60),
        ) {
            let times: Vec<f64> = obs.iter().map(|o| o.0 as f64).collect();
            let events: Vec<bool> = obs.iter().map(|o| o.1).collect();
            let c = km_estimate(&times, &events).unwrap();
            let mut prev = 1.0;
            for &s in &c.survival {
                prop_assert!((0.0..=1.0).contains(&s) && s <= prev);
                prev = s;
            }
            prop_assert!(c.at_risk.windows(2).all(|w| w[0] > w[1]));
            let mut rev_t = times.clone();
            let mut rev_e = events.clone();
            rev_t.reverse();
            rev_e.reverse();
            prop_assert_eq!(km_estimate(&rev_t, &rev_e).unwrap(), c);
        }

        #[test]
        fn uncensored_matches_empirical_survival(times in prop::collection::vec(0u8..30, 1..50)) {
            let t: Vec<f64> = times.iter().map(|&v| v as f64).collect();
            let c = km_estimate(&t, &vec![true; t.len()]).unwrap();
            let n = t.len() as f64;
            for (k, &tk) in c.times.iter().enumerate() {
                let ecdf = t.iter().filter(|&&v| v <= tk).count() as f64 / n;
                prop_assert!((c.survival[k] - (1.0 - ecdf)).abs() < 1e-12);
            }
        }
    }
}
