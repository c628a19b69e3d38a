//! The impaired bidirectional link.
//!
//! Each direction is a FIFO with a tail-drop byte budget, a serializing
//! shaper and a fixed propagation delay of half the round-trip time. Loss is
//! i.i.d. Bernoulli per packet with an independent random stream per
//! direction.

mod link;
mod packet;
mod profile;

pub use link::{DropReason, Link, LossStats, Transmit};
pub use packet::{AckEcho, AckInfo, Direction, Packet, PacketError, PacketIds, PacketKind};
pub use profile::{
    ImpairmentProfile, ProfileError, DEFAULT_MTU, DEFAULT_QUEUE_CAPACITY, DEFAULT_UP_DOWN_RATIO, TCP_HEADER_LEN,
    UDP_HEADER_LEN,
};
