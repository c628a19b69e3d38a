use std::collections::{BTreeSet, VecDeque};

use super::{Direction, ImpairmentProfile, Packet, ProfileError};
use crate::simclock::{RngStream, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DropReason {
    Loss,
    QueueFull,
}

/// Outcome of offering a packet to the link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transmit {
    Delivered { arrives_at: SimTime },
    Dropped(DropReason),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LossStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_queue: u64,
    pub delivered_bytes: u64,
}

impl LossStats {
    pub fn is_consistent(&self) -> bool {
        self.offered == self.delivered + self.dropped_loss + self.dropped_queue
    }

    pub fn loss_rate_pct(&self) -> f64 {
        if self.offered == 0 {
            0.0
        } else {
            100.0 * self.dropped_loss as f64 / self.offered as f64
        }
    }
}

#[derive(Debug)]
struct DirectionState {
    busy_until: SimTime,
    // (serialization finishes, wire bytes) for packets still occupying the buffer
    backlog: VecDeque<(SimTime, u64)>,
    queued_bytes: u64,
    stats: LossStats,
    rng: RngStream,
    scripted: BTreeSet<u64>,
}

impl DirectionState {
    fn new(seed: u64, direction: Direction) -> Self {
        DirectionState {
            busy_until: SimTime::ZERO,
            backlog: VecDeque::new(),
            queued_bytes: 0,
            stats: LossStats::default(),
            rng: RngStream::new(seed, direction.stream_id()),
            scripted: BTreeSet::new(),
        }
    }

    fn drain(&mut self, now: SimTime) {
        while let Some(&(done, bytes)) = self.backlog.front() {
            if done > now {
                break;
            }
            self.queued_bytes -= bytes;
            self.backlog.pop_front();
        }
    }
}

/// Both directions of a simulated link.
#[derive(Debug)]
pub struct Link {
    profile: ImpairmentProfile,
    down: DirectionState,
    up: DirectionState,
}

impl Link {
    pub fn new(profile: ImpairmentProfile, seed: u64) -> Result<Self, ProfileError> {
        profile.validate()?;
        Ok(Link {
            profile,
            down: DirectionState::new(seed, Direction::Down),
            up: DirectionState::new(seed, Direction::Up),
        })
    }

    /// Force-drop the packets with these 0-based offer ordinals in
    /// `direction`, on top of random loss. Used to construct exact loss
    /// patterns in tests.
    pub fn script_drops(&mut self, direction: Direction, ordinals: impl IntoIterator<Item = u64>) {
        self.state_mut(direction).scripted.extend(ordinals);
    }

    pub fn profile(&self) -> &ImpairmentProfile {
        &self.profile
    }

    fn state(&self, direction: Direction) -> &DirectionState {
        match direction {
            Direction::Down => &self.down,
            Direction::Up => &self.up,
        }
    }

    fn state_mut(&mut self, direction: Direction) -> &mut DirectionState {
        match direction {
            Direction::Down => &mut self.down,
            Direction::Up => &mut self.up,
        }
    }

    /// Offer `pkt` at `now`. The loss draw is taken first and always
    /// consumed, then the buffer budget is checked.
    pub fn transmit(&mut self, pkt: &Packet, now: SimTime) -> Transmit {
        let direction = pkt.direction;
        let wire = pkt.wire_size();
        let serialization = self.profile.serialization(direction, wire);
        let propagation = self.profile.propagation(direction);
        let loss_p = self.profile.loss_pct / 100.0;
        let capacity = self.profile.queue_capacity;

        let st = self.state_mut(direction);
        let ordinal = st.stats.offered;
        st.stats.offered += 1;
        let lost = st.rng.uniform() < loss_p;
        if lost || st.scripted.remove(&ordinal) {
            st.stats.dropped_loss += 1;
            return Transmit::Dropped(DropReason::Loss);
        }
        st.drain(now);
        if st.queued_bytes + u64::from(wire) > capacity {
            st.stats.dropped_queue += 1;
            return Transmit::Dropped(DropReason::QueueFull);
        }
        let done = st.busy_until.max(now) + serialization;
        st.busy_until = done;
        st.queued_bytes += u64::from(wire);
        st.backlog.push_back((done, u64::from(wire)));
        st.stats.delivered += 1;
        st.stats.delivered_bytes += u64::from(wire);
        Transmit::Delivered {
            arrives_at: done + propagation,
        }
    }

    /// Bytes still buffered or being serialized in `direction` at `now`.
    pub fn queued_bytes(&mut self, direction: Direction, now: SimTime) -> u64 {
        let st = self.state_mut(direction);
        st.drain(now);
        st.queued_bytes
    }

    pub fn loss_stats(&self, direction: Direction) -> LossStats {
        self.state(direction).stats
    }
}
