use super::SendRecord;
use crate::linknet::{Direction, Link, LossStats, Packet, PacketIds, Transmit};
use crate::simclock::{EventQueue, SimTime};

/// Link plus id allocation and optional send tracing, shared by the three
/// protocol simulations.
pub(crate) struct Wire {
    link: Link,
    ids: PacketIds,
    record: bool,
    trace: Vec<SendRecord>,
}

impl Wire {
    pub fn new(link: Link, record: bool) -> Self {
        Wire {
            link,
            ids: PacketIds::default(),
            record,
            trace: Vec::new(),
        }
    }

    pub fn mtu(&self) -> u32 {
        self.link.profile().mtu
    }

    /// Offer `pkt` to the link and schedule its arrival as `wrap(pkt)`.
    pub fn send<E>(
        &mut self,
        queue: &mut EventQueue<E>,
        mut pkt: Packet,
        cwnd: u64,
        srtt: SimTime,
        wrap: impl FnOnce(Packet) -> E,
    ) -> Transmit {
        let now = queue.now();
        pkt.id = self.ids.next_id();
        pkt.sent_at = now;
        debug_assert_eq!(pkt.validate(self.mtu()), Ok(()));
        let outcome = self.link.transmit(&pkt, now);
        if self.record {
            self.trace.push(SendRecord {
                at: now,
                direction: pkt.direction,
                kind: pkt.kind,
                wire: pkt.wire_size(),
                seq: pkt.seq,
                number: pkt.number,
                cwnd,
                srtt,
                dropped: match outcome {
                    Transmit::Dropped(reason) => Some(reason),
                    Transmit::Delivered { .. } => None,
                },
            });
        }
        if let Transmit::Delivered { arrives_at } = outcome {
            queue
                .schedule(arrives_at, wrap(pkt))
                .expect("arrival is never before now");
        }
        outcome
    }

    pub fn stats(&self, direction: Direction) -> LossStats {
        self.link.loss_stats(direction)
    }

    pub fn take_trace(&mut self) -> Vec<SendRecord> {
        std::mem::take(&mut self.trace)
    }
}
