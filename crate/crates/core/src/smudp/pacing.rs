use crate::simclock::SimTime;
use crate::transport::{CongestionController, RttEstimator};

/// Pacing rate is this multiple of cwnd / srtt, as a ratio.
pub const PACING_GAIN: (u64, u64) = (5, 4);
/// Packets sent back-to-back at the start of a transfer.
pub const BURST_ALLOWANCE: u32 = 10;

/// Gap after a packet of `wire` bytes: `wire / (1.25 * cwnd / srtt)`,
/// floored to whole microseconds and never below one.
pub fn pacing_gap(cc: &CongestionController, est: &RttEstimator, wire: u32) -> SimTime {
    let srtt = u128::from(est.srtt_or_default().as_micros());
    let (num, den) = PACING_GAIN;
    let gap = u128::from(wire) * srtt * u128::from(den) / (u128::from(num) * u128::from(cc.cwnd().max(1)));
    SimTime::from_micros((gap as u64).max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(ms: u64) -> RttEstimator {
        let mut e = RttEstimator::default();
        e.update(SimTime::from_millis(ms)).unwrap();
        e
    }

    #[test]
    fn spec_example() {
        let cc = CongestionController::with_state(1200, 1 << 20, 125_000, 1 << 20);
        assert_eq!(pacing_gap(&cc, &est(100), 1250), SimTime::from_micros(800));
    }

    #[test]
    fn floored_at_one_microsecond() {
        let cc = CongestionController::with_state(1200, 1 << 20, 1 << 20, 1 << 20);
        let mut e = RttEstimator::default();
        e.update(SimTime::from_micros(1)).unwrap();
        assert_eq!(pacing_gap(&cc, &e, 40), SimTime::from_micros(1));
    }

    #[test]
    fn default_rtt_before_sample() {
        let cc = CongestionController::with_state(1200, 1 << 20, 125_000, 1 << 20);
        assert_eq!(
            pacing_gap(&cc, &RttEstimator::default(), 1250),
            SimTime::from_micros(800)
        );
    }
}
