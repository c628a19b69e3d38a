//! Transport machinery shared by every protocol: RTO estimation, the
//! congestion controller, the flow window, and the transfer configuration
//! and result types.

mod cc;
mod flow;
mod ranges;
mod rtt;
pub(crate) mod wire;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use cc::{CongestionController, LossKind, Phase};
pub use flow::{can_send, FlowWindow};
pub use ranges::RangeSet;
pub use rtt::{NonPositiveSample, RttEstimator, DEFAULT_INITIAL_RTT, DEFAULT_MAX_RTO, DEFAULT_MIN_RTO};

use crate::linknet::{Direction, DropReason, ImpairmentProfile, Link, LossStats, PacketKind, ProfileError};
use crate::simclock::{SimError, SimTime, DEFAULT_EVENT_CAP};

pub const MIB: u64 = 1 << 20;
pub const DEFAULT_CWND_CAP: u64 = MIB;
pub const DEFAULT_RECV_WINDOW: u64 = MIB;
pub const DEFAULT_FEC_GROUP: usize = 10;
/// Payload bytes of a file request.
pub const REQUEST_LEN: u32 = 64;
/// Give up after this many consecutive timer backoffs without progress.
pub const MAX_BACKOFFS: u32 = 8;

/// Everything one simulated transfer depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub profile: ImpairmentProfile,
    pub file_size: u64,
    pub cwnd_cap: u64,
    pub recv_window: u64,
    pub seed: u64,
    /// smUDP only: send XOR parity per group.
    pub fec: bool,
    pub fec_group_size: usize,
    /// Extra deterministic drops: `(direction, offer ordinal)`.
    pub scripted_drops: Vec<(Direction, u64)>,
    pub record_trace: bool,
    pub event_cap: u64,
}

impl TransferConfig {
    pub fn new(profile: ImpairmentProfile, file_size: u64, seed: u64) -> Self {
        TransferConfig {
            profile,
            file_size,
            cwnd_cap: DEFAULT_CWND_CAP,
            recv_window: DEFAULT_RECV_WINDOW,
            seed,
            fec: true,
            fec_group_size: DEFAULT_FEC_GROUP,
            scripted_drops: Vec::new(),
            record_trace: false,
            event_cap: DEFAULT_EVENT_CAP,
        }
    }

    pub fn with_cwnd_cap(mut self, cap: u64) -> Self {
        self.cwnd_cap = cap;
        self
    }

    pub fn with_fec(mut self, fec: bool) -> Self {
        self.fec = fec;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn with_drop(mut self, direction: Direction, ordinal: u64) -> Self {
        self.scripted_drops.push((direction, ordinal));
        self
    }

    pub(crate) fn validate(&self) -> Result<(), TransferError> {
        if self.file_size == 0 {
            return Err(TransferError::EmptyFile);
        }
        self.profile.validate()?;
        if self.cwnd_cap < u64::from(self.profile.mtu) {
            return Err(TransferError::InvalidConfig(format!(
                "cwnd cap {} is smaller than one packet",
                self.cwnd_cap
            )));
        }
        if self.recv_window < u64::from(self.profile.mtu) {
            return Err(TransferError::InvalidConfig(format!(
                "receive window {} is smaller than one packet",
                self.recv_window
            )));
        }
        if self.fec_group_size == 0 {
            return Err(TransferError::InvalidConfig("FEC group size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn build_link(&self) -> Result<Link, TransferError> {
        let mut link = Link::new(self.profile.clone(), self.seed)?;
        for &(direction, ordinal) in &self.scripted_drops {
            link.script_drops(direction, [ordinal]);
        }
        Ok(link)
    }
}

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("file size must be positive")]
    EmptyFile,
    #[error("invalid profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("invalid transfer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("received bytes differ from the source file")]
    Integrity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortReason {
    HandshakeRetries,
    RequestRetries,
    Timeouts,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::HandshakeRetries => "handshake retry cap exceeded",
            AbortReason::RequestRetries => "request retry cap exceeded",
            AbortReason::Timeouts => "too many consecutive timeouts",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Virtual time at which the client held every byte.
    Completed(SimTime),
    Aborted {
        at: SimTime,
        reason: AbortReason,
    },
}

/// One packet handed to the link, recorded when tracing is on.
#[derive(Debug, Clone, PartialEq)]
pub struct SendRecord {
    pub at: SimTime,
    pub direction: Direction,
    pub kind: PacketKind,
    pub wire: u32,
    pub seq: u64,
    pub number: u64,
    /// Sender congestion window at send time (0 for the client side).
    pub cwnd: u64,
    pub srtt: SimTime,
    pub dropped: Option<DropReason>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferResult {
    pub outcome: Outcome,
    /// Data packets sent again (including TLP and RTO probes of old data).
    pub retransmits: u64,
    pub timeouts: u64,
    pub tlps: u64,
    pub max_tlps_between_acks: u32,
    pub fec_recoveries: u64,
    pub cc_loss_events: u64,
    pub first_data_sent_at: Option<SimTime>,
    pub max_cwnd: u64,
    /// Sender accounting once the run has drained.
    pub final_bytes_in_flight: u64,
    pub down: LossStats,
    pub up: LossStats,
    pub trace: Vec<SendRecord>,
}

impl TransferResult {
    pub(crate) fn new() -> Self {
        TransferResult {
            outcome: Outcome::Aborted {
                at: SimTime::ZERO,
                reason: AbortReason::Timeouts,
            },
            retransmits: 0,
            timeouts: 0,
            tlps: 0,
            max_tlps_between_acks: 0,
            fec_recoveries: 0,
            cc_loss_events: 0,
            first_data_sent_at: None,
            max_cwnd: 0,
            final_bytes_in_flight: 0,
            down: LossStats::default(),
            up: LossStats::default(),
            trace: Vec::new(),
        }
    }

    pub fn completion(&self) -> Option<SimTime> {
        match self.outcome {
            Outcome::Completed(t) => Some(t),
            Outcome::Aborted { .. } => None,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.completion().is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Tcp,
    Quic,
    Smudp,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Tcp, Protocol::Quic, Protocol::Smudp];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Tcp => "tcp",
            Protocol::Quic => "quic",
            Protocol::Smudp => "smudp",
        }
    }

    pub fn run(self, cfg: &TransferConfig) -> Result<TransferResult, TransferError> {
        match self {
            Protocol::Tcp => crate::tcp::transfer(cfg),
            Protocol::Quic => crate::quic::transfer(cfg),
            Protocol::Smudp => crate::smudp::transfer(cfg),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?} (expected tcp, quic or smudp)")]
pub struct UnknownProtocol(pub String);

impl FromStr for Protocol {
    type Err = UnknownProtocol;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" => Ok(Protocol::Tcp),
            "quic" => Ok(Protocol::Quic),
            "smudp" => Ok(Protocol::Smudp),
            _ => Err(UnknownProtocol(s.to_owned())),
        }
    }
}
