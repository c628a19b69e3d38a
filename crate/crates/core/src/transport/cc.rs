/// Slow start / additive-increase multiplicative-decrease window, in bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CongestionController {
    cwnd: u64,
    ssthresh: u64,
    cwnd_cap: u64,
    mtu: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    SlowStart,
    Avoidance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    FastRecovery,
    Timeout,
}

impl CongestionController {
    /// Starts at `10 * mtu` (capped) with `ssthresh = cwnd_cap`.
    pub fn new(mtu: u32, cwnd_cap: u64) -> Self {
        let mtu = u64::from(mtu);
        assert!(cwnd_cap >= mtu, "cwnd cap must hold at least one packet");
        CongestionController {
            cwnd: (10 * mtu).min(cwnd_cap),
            ssthresh: cwnd_cap,
            cwnd_cap,
            mtu,
        }
    }

    /// Explicit state, mostly for tests.
    pub fn with_state(mtu: u32, cwnd_cap: u64, cwnd: u64, ssthresh: u64) -> Self {
        let mut cc = Self::new(mtu, cwnd_cap);
        cc.cwnd = cwnd.clamp(cc.mtu, cwnd_cap);
        cc.ssthresh = ssthresh;
        cc
    }

    pub fn cwnd(&self) -> u64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> u64 {
        self.ssthresh
    }

    pub fn cwnd_cap(&self) -> u64 {
        self.cwnd_cap
    }

    pub fn initial_window(&self) -> u64 {
        (10 * self.mtu).min(self.cwnd_cap)
    }

    pub fn phase(&self) -> Phase {
        if self.cwnd < self.ssthresh {
            Phase::SlowStart
        } else {
            Phase::Avoidance
        }
    }

    pub fn on_ack(&mut self, newly_acked: u64) {
        if newly_acked == 0 {
            return;
        }
        let grown = match self.phase() {
            Phase::SlowStart => self.cwnd + newly_acked,
            Phase::Avoidance => self.cwnd + self.mtu * newly_acked / self.cwnd,
        };
        self.cwnd = grown.min(self.cwnd_cap);
    }

    /// Leave slow start at the current window without shrinking it.
    pub fn exit_slow_start(&mut self) {
        self.ssthresh = self.ssthresh.min(self.cwnd);
    }

    pub fn on_loss(&mut self, kind: LossKind) {
        self.ssthresh = (self.cwnd / 2).max(2 * self.mtu);
        self.cwnd = match kind {
            LossKind::FastRecovery => self.ssthresh,
            LossKind::Timeout => self.initial_window(),
        }
        .clamp(self.mtu, self.cwnd_cap);
    }
}
