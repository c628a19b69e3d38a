//! Deterministic discrete-event engine.
//!
//! Virtual time ([`SimTime`]) has microsecond resolution. Events fire in
//! `(fire_at, seq_no)` order, so two events scheduled for the same instant
//! fire in insertion order. Randomness comes from [`RngStream`], a SplitMix64
//! generator keyed by `(seed, stream_id)`, which makes every run a pure
//! function of its inputs.

mod queue;
mod rng;
mod time;

pub use queue::{Event, EventId, EventQueue, Flow, SimError, DEFAULT_EVENT_CAP};
pub use rng::{fnv1a64, mix64, RngStream};
pub use time::SimTime;
