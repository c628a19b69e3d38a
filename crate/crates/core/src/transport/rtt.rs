use thiserror::Error;

use crate::simclock::SimTime;

pub const DEFAULT_MIN_RTO: SimTime = SimTime::from_millis(200);
pub const DEFAULT_MAX_RTO: SimTime = SimTime::from_secs(60);
/// Stand-in RTT before the first sample (pacing, probe timers).
pub const DEFAULT_INITIAL_RTT: SimTime = SimTime::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("RTT sample must be positive")]
pub struct NonPositiveSample;

/// SRTT/RTTVAR estimator with exponential timeout backoff.
///
/// All arithmetic is in integer microseconds with floor division:
///
/// ```text
/// first sample:  srtt = s, rttvar = s / 2
/// later:         rttvar = (3 * rttvar + |srtt - s|) / 4
///                srtt   = (7 * srtt + s) / 8
/// rto = clamp(srtt + 4 * rttvar, min_rto, max_rto)
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RttEstimator {
    srtt: SimTime,
    rttvar: SimTime,
    rto: SimTime,
    min_rto: SimTime,
    max_rto: SimTime,
    has_sample: bool,
    backoff: u32,
}

impl Default for RttEstimator {
    fn default() -> Self {
        Self::new(DEFAULT_MIN_RTO, DEFAULT_MAX_RTO)
    }
}

impl RttEstimator {
    /// Before any sample the RTO equals `min_rto`.
    pub fn new(min_rto: SimTime, max_rto: SimTime) -> Self {
        assert!(min_rto <= max_rto);
        RttEstimator {
            srtt: SimTime::ZERO,
            rttvar: SimTime::ZERO,
            rto: min_rto,
            min_rto,
            max_rto,
            has_sample: false,
            backoff: 0,
        }
    }

    pub fn update(&mut self, sample: SimTime) -> Result<(), NonPositiveSample> {
        if sample == SimTime::ZERO {
            return Err(NonPositiveSample);
        }
        let s = sample.as_micros();
        if self.has_sample {
            let srtt = self.srtt.as_micros();
            let rttvar = self.rttvar.as_micros();
            self.rttvar = SimTime::from_micros((3 * rttvar + srtt.abs_diff(s)) / 4);
            self.srtt = SimTime::from_micros((7 * srtt + s) / 8);
        } else {
            self.srtt = sample;
            self.rttvar = SimTime::from_micros(s / 2);
            self.has_sample = true;
        }
        self.rto = (self.srtt + self.rttvar * 4).clamp(self.min_rto, self.max_rto);
        Ok(())
    }

    pub fn srtt(&self) -> SimTime {
        self.srtt
    }

    /// Smoothed RTT, or [`DEFAULT_INITIAL_RTT`] before the first sample.
    pub fn srtt_or_default(&self) -> SimTime {
        if self.has_sample {
            self.srtt
        } else {
            DEFAULT_INITIAL_RTT
        }
    }

    pub fn rttvar(&self) -> SimTime {
        self.rttvar
    }

    pub fn rto(&self) -> SimTime {
        self.rto
    }

    pub fn min_rto(&self) -> SimTime {
        self.min_rto
    }

    pub fn max_rto(&self) -> SimTime {
        self.max_rto
    }

    pub fn has_sample(&self) -> bool {
        self.has_sample
    }

    pub fn backoff(&self) -> u32 {
        self.backoff
    }

    /// Overrides the RTO while no sample exists. Connections whose handshake
    /// timed out fall back to a conservative 3 s before data flows.
    pub fn set_unsampled_rto(&mut self, rto: SimTime) {
        if !self.has_sample {
            self.rto = rto.clamp(self.min_rto, self.max_rto);
        }
    }

    /// The timer value to arm: `rto * 2^backoff`, capped at `max_rto`.
    pub fn backed_off_rto(&self) -> SimTime {
        let factor = 1u64.checked_shl(self.backoff).unwrap_or(u64::MAX);
        (self.rto * factor).min(self.max_rto)
    }

    /// Record a consecutive timeout.
    pub fn on_timeout(&mut self) {
        self.backoff = self.backoff.saturating_add(1);
    }

    /// A new acknowledgment ends the run of consecutive timeouts.
    pub fn reset_backoff(&mut self) {
        self.backoff = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    #[test]
    fn first_sample() {
        let mut est = RttEstimator::default();
        est.update(ms(100)).unwrap();
        assert_eq!((est.srtt(), est.rttvar(), est.rto()), (ms(100), ms(50), ms(300)));
    }

    #[test]
    fn second_sample() {
        let mut est = RttEstimator::default();
        est.update(ms(100)).unwrap();
        est.update(ms(200)).unwrap();
        assert_eq!(est.rttvar(), SimTime::from_micros(62_500));
        assert_eq!(est.srtt(), SimTime::from_micros(112_500));
        assert_eq!(est.rto(), SimTime::from_micros(362_500));
    }

    #[test]
    fn small_sample_clamps_to_min() {
        let mut est = RttEstimator::default();
        est.update(ms(10)).unwrap();
        assert_eq!(est.rto(), ms(200));
    }

    #[test]
    fn large_sample_clamps_to_max() {
        let mut est = RttEstimator::default();
        est.update(ms(30_000)).unwrap();
        assert_eq!(est.rto(), ms(60_000));
    }

    #[test]
    fn zero_sample_is_rejected() {
        let mut est = RttEstimator::default();
        assert_eq!(est.update(SimTime::ZERO), Err(NonPositiveSample));
        assert!(!est.has_sample());
    }

    #[test]
    fn backoff_doubles_and_resets() {
        let mut est = RttEstimator::default();
        est.update(ms(100)).unwrap();
        est.on_timeout();
        est.on_timeout();
        assert_eq!(est.backed_off_rto(), ms(1_200));
        for _ in 0..20 {
            est.on_timeout();
        }
        assert_eq!(est.backed_off_rto(), ms(60_000));
        est.reset_backoff();
        assert_eq!(est.backed_off_rto(), ms(300));
    }

    #[test]
    fn unsampled_rto_override_only_applies_before_samples() {
        let mut est = RttEstimator::default();
        est.set_unsampled_rto(SimTime::from_secs(3));
        assert_eq!(est.rto(), SimTime::from_secs(3));
        est.update(ms(100)).unwrap();
        est.set_unsampled_rto(SimTime::from_secs(3));
        assert_eq!(est.rto(), ms(300));
    }

    /// Straight-line recurrence over u128, independent of the estimator.
    fn reference(samples: &[u64]) -> (u64, u64, u64) {
        let (mut srtt, mut var) = (0u128, 0u128);
        for (i, &s) in samples.iter().enumerate() {
            let s = s as u128;
            if i == 0 {
                srtt = s;
                var = s / 2;
            } else {
                let d = srtt.abs_diff(s);
                var = (var * 3 + d) / 4;
                srtt = (srtt * 7 + s) / 8;
            }
        }
        let rto = (srtt + 4 * var).clamp(200_000, 60_000_000);
        (srtt as u64, var as u64, rto as u64)
    }

    proptest! {
        #[test]
        fn matches_reference_recurrence(samples in prop::collection::vec(1u64..5_000_000, 1..40)) {
            let mut est = RttEstimator::default();
            for &s in &samples {
                est.update(SimTime::from_micros(s)).unwrap();
                prop_assert!(est.rto() >= est.min_rto() && est.rto() <= est.max_rto());
            }
            let (srtt, var, rto) = reference(&samples);
            prop_assert_eq!(est.srtt().as_micros(), srtt);
            prop_assert_eq!(est.rttvar().as_micros(), var);
            prop_assert_eq!(est.rto().as_micros(), rto);
        }
    }
}
