use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use thiserror::Error;

use super::SimTime;

/// Firing cap for [`EventQueue::run_until_idle`]; exceeding it means livelock.
pub const DEFAULT_EVENT_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("event scheduled in the past: at {at}, now {now}")]
    ScheduledInPast { at: SimTime, now: SimTime },
    #[error("event cap of {cap} firings exceeded at {now}; the simulation is livelocked")]
    EventCapExceeded { cap: u64, now: SimTime },
}

/// Handle to a scheduled event, usable for cancellation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(u64);

impl EventId {
    pub fn seq_no(self) -> u64 {
        self.0
    }
}

/// What a handler wants the run loop to do next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// A fired event handed to the handler.
#[derive(Debug)]
pub struct Event<E> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub action: E,
}

struct Scheduled<E> {
    fire_at: SimTime,
    seq: u64,
    action: E,
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_at, self.seq) == (other.fire_at, other.seq)
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// Priority queue of pending events ordered by `(fire_at, seq_no)`.
pub struct EventQueue<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Scheduled<E>>>,
    cancelled: HashSet<u64>,
    fired: u64,
    event_cap: u64,
    trace: Option<Vec<(SimTime, u64)>>,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            fired: 0,
            event_cap: DEFAULT_EVENT_CAP,
            trace: None,
        }
    }

    pub fn with_event_cap(mut self, cap: u64) -> Self {
        self.event_cap = cap;
        self
    }

    /// Record `(fire_at, seq_no)` of every fired event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn trace(&self) -> Option<&[(SimTime, u64)]> {
        self.trace.as_deref()
    }

    /// Number of scheduled, not yet cancelled events.
    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_idle(&self) -> bool {
        self.pending() == 0
    }

    pub fn schedule(&mut self, at: SimTime, action: E) -> Result<EventId, SimError> {
        if at < self.now {
            return Err(SimError::ScheduledInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Scheduled {
            fire_at: at,
            seq,
            action,
        }));
        Ok(EventId(seq))
    }

    /// Schedule `delay` after the current time; never fails.
    pub fn schedule_in(&mut self, delay: SimTime, action: E) -> EventId {
        let at = self.now + delay;
        self.schedule(at, action).expect("now + delay is never in the past")
    }

    /// Cancel a pending event. Ids of events that already fired must not be
    /// passed here.
    pub fn cancel(&mut self, id: EventId) {
        debug_assert!(id.0 < self.next_seq);
        self.cancelled.insert(id.0);
    }

    /// Pop the next live event and advance the clock to it.
    pub fn pop(&mut self) -> Option<Event<E>> {
        while let Some(Reverse(next)) = self.heap.pop() {
            if self.cancelled.remove(&next.seq) {
                continue;
            }
            debug_assert!(next.fire_at >= self.now);
            self.now = next.fire_at;
            self.fired += 1;
            if let Some(trace) = self.trace.as_mut() {
                trace.push((next.fire_at, next.seq));
            }
            return Some(Event {
                id: EventId(next.seq),
                fire_at: next.fire_at,
                action: next.action,
            });
        }
        None
    }

    /// Fire events until the queue is empty or the handler returns
    /// [`Flow::Stop`]. Returns the time of the last fired event.
    pub fn run_until_idle<F>(&mut self, mut handler: F) -> Result<SimTime, SimError>
    where
        F: FnMut(&mut EventQueue<E>, Event<E>) -> Flow,
    {
        let mut last = SimTime::ZERO;
        loop {
            if self.fired >= self.event_cap && !self.is_idle() {
                return Err(SimError::EventCapExceeded {
                    cap: self.event_cap,
                    now: self.now,
                });
            }
            let Some(event) = self.pop() else {
                return Ok(last);
            };
            last = event.fire_at;
            if handler(self, event) == Flow::Stop {
                return Ok(last);
            }
        }
    }
}
