use thiserror::Error;

use super::Direction;
use crate::simclock::SimTime;

/// Default payload bytes per packet, shared by all protocols.
pub const DEFAULT_MTU: u32 = 1200;
/// Default tail-drop budget per direction.
pub const DEFAULT_QUEUE_CAPACITY: u64 = 64 * 1024;
pub const DEFAULT_UP_DOWN_RATIO: f64 = 0.7;
/// IPv4 + TCP header bytes.
pub const TCP_HEADER_LEN: u32 = 40;
/// IPv4 + UDP + 8-byte protocol header bytes.
pub const UDP_HEADER_LEN: u32 = 36;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("loss percentage {0} is outside [0, 100]")]
    Loss(f64),
    #[error("downlink bandwidth must be positive")]
    Bandwidth,
    #[error("up/down ratio {0} is outside (0, 1]")]
    Ratio(f64),
    #[error("mtu must be positive")]
    Mtu,
    #[error("queue capacity {capacity} is smaller than one packet ({packet} bytes)")]
    Queue { capacity: u64, packet: u64 },
}

/// Channel parameters for one simulated link.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpairmentProfile {
    /// Round-trip propagation delay, split evenly between directions.
    pub rtt: SimTime,
    /// Per-packet drop probability in percent.
    pub loss_pct: f64,
    /// Downlink (server to client) rate in bits per second.
    pub bandwidth_down: u64,
    /// Uplink rate divided by downlink rate.
    pub up_down_ratio: f64,
    /// Tail-drop budget per direction, in bytes.
    pub queue_capacity: u64,
    /// Payload bytes per packet.
    pub mtu: u32,
}

impl ImpairmentProfile {
    pub fn new(rtt: SimTime, loss_pct: f64, bandwidth_down: u64) -> Self {
        ImpairmentProfile {
            rtt,
            loss_pct,
            bandwidth_down,
            up_down_ratio: DEFAULT_UP_DOWN_RATIO,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            mtu: DEFAULT_MTU,
        }
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(0.0..=100.0).contains(&self.loss_pct) {
            return Err(ProfileError::Loss(self.loss_pct));
        }
        if self.bandwidth_down == 0 {
            return Err(ProfileError::Bandwidth);
        }
        if !(self.up_down_ratio > 0.0 && self.up_down_ratio <= 1.0) {
            return Err(ProfileError::Ratio(self.up_down_ratio));
        }
        if self.mtu == 0 {
            return Err(ProfileError::Mtu);
        }
        let packet = u64::from(self.mtu + TCP_HEADER_LEN.max(UDP_HEADER_LEN));
        if self.queue_capacity < packet {
            return Err(ProfileError::Queue {
                capacity: self.queue_capacity,
                packet,
            });
        }
        Ok(())
    }

    /// Shaping rate of a direction in bits per second.
    pub fn rate(&self, direction: Direction) -> u64 {
        match direction {
            Direction::Down => self.bandwidth_down,
            Direction::Up => ((self.bandwidth_down as f64 * self.up_down_ratio).round() as u64).max(1),
        }
    }

    /// Time to clock `wire_bytes` onto the link, rounded up to a microsecond.
    pub fn serialization(&self, direction: Direction, wire_bytes: u32) -> SimTime {
        let bits = u128::from(wire_bytes) * 8 * 1_000_000;
        let rate = u128::from(self.rate(direction));
        SimTime::from_micros(bits.div_ceil(rate) as u64)
    }

    /// One-way propagation delay. The two legs always sum to `rtt`.
    pub fn propagation(&self, direction: Direction) -> SimTime {
        let down = self.rtt / 2;
        match direction {
            Direction::Down => down,
            Direction::Up => self.rtt - down,
        }
    }
}
