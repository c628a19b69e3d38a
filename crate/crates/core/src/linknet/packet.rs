use std::ops::Range;

use thiserror::Error;

use crate::simclock::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    /// Server to client.
    Down,
    /// Client to server.
    Up,
}

impl Direction {
    pub fn stream_id(self) -> &'static str {
        match self {
            Direction::Down => "loss.down",
            Direction::Up => "loss.up",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Syn,
    SynAck,
    Ack,
    Data,
    Nack,
    Fec,
    Probe,
    Request,
}

/// Echo of the most recent arrival, so the sender can take an RTT sample
/// net of the receiver's feedback delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckEcho {
    pub number: u64,
    /// Sender timestamp of the echoed transmission.
    pub sent_at: SimTime,
    pub delay: SimTime,
}

/// Acknowledgment content. Units are protocol specific: TCP acknowledges
/// bytes, QUIC packet numbers, smUDP data-packet indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AckInfo {
    /// Everything below this value has been received.
    pub cumulative: u64,
    /// Selectively received ranges, most recent first.
    pub ranges: Vec<Range<u64>>,
    /// Explicitly missing items (NACK list).
    pub missing: Vec<u64>,
    pub echo: Option<AckEcho>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PacketError {
    #[error("zero-sized packet")]
    Empty,
    #[error("wire size {wire} exceeds mtu {mtu} plus header {header}")]
    TooLarge { wire: u32, mtu: u32, header: u32 },
    #[error("{0:?} packet must carry a payload")]
    MissingPayload(PacketKind),
    #[error("{0:?} packet must not carry a payload")]
    UnexpectedPayload(PacketKind),
}

/// The simulated wire unit.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub direction: Direction,
    pub kind: PacketKind,
    /// Byte offset of the first payload byte (DATA/FEC), otherwise 0.
    pub seq: u64,
    /// Protocol packet number: QUIC packet number, smUDP data index or FEC
    /// group id.
    pub number: u64,
    pub ack: Option<AckInfo>,
    pub payload_len: u32,
    pub header_len: u32,
    pub sent_at: SimTime,
    /// Payload bytes, carried only where the receiver needs them (smUDP).
    pub payload: Vec<u8>,
}

impl Packet {
    pub fn new(id: u64, direction: Direction, kind: PacketKind, header_len: u32) -> Self {
        Packet {
            id,
            direction,
            kind,
            seq: 0,
            number: 0,
            ack: None,
            payload_len: 0,
            header_len,
            sent_at: SimTime::ZERO,
            payload: Vec::new(),
        }
    }

    pub fn wire_size(&self) -> u32 {
        self.payload_len + self.header_len
    }

    pub fn validate(&self, mtu: u32) -> Result<(), PacketError> {
        let wire = self.wire_size();
        if wire == 0 {
            return Err(PacketError::Empty);
        }
        if wire > mtu + self.header_len {
            return Err(PacketError::TooLarge {
                wire,
                mtu,
                header: self.header_len,
            });
        }
        match self.kind {
            PacketKind::Data if self.payload_len == 0 => Err(PacketError::MissingPayload(self.kind)),
            PacketKind::Ack | PacketKind::Nack if self.payload_len > 0 => {
                Err(PacketError::UnexpectedPayload(self.kind))
            }
            _ => Ok(()),
        }
    }
}

/// Monotone packet id allocator for one simulation.
#[derive(Debug, Default)]
pub struct PacketIds(u64);

impl PacketIds {
    pub fn next_id(&mut self) -> u64 {
        let id = self.0;
        self.0 += 1;
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_specific_validation() {
        let mut data = Packet::new(0, Direction::Down, PacketKind::Data, 40);
        assert_eq!(data.validate(1200), Err(PacketError::MissingPayload(PacketKind::Data)));
        data.payload_len = 1200;
        assert_eq!(data.validate(1200), Ok(()));
        data.payload_len = 1201;
        assert!(matches!(data.validate(1200), Err(PacketError::TooLarge { .. })));

        let mut ack = Packet::new(1, Direction::Up, PacketKind::Ack, 40);
        assert_eq!(ack.validate(1200), Ok(()));
        ack.payload_len = 1;
        assert_eq!(ack.validate(1200), Err(PacketError::UnexpectedPayload(PacketKind::Ack)));
        assert_eq!(
            Packet::new(2, Direction::Up, PacketKind::Syn, 0).validate(1200),
            Err(PacketError::Empty)
        );
    }

    #[test]
    fn ids_are_unique_and_increasing() {
        let mut ids = PacketIds::default();
        assert_eq!((ids.next_id(), ids.next_id(), ids.next_id()), (0, 1, 2));
    }
}
