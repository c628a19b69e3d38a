//! Simplified TCP: three-way handshake, an ACK for every data segment,
//! cumulative acknowledgments only, go-back-N retransmission on RTO and
//! fast retransmit after three duplicate ACKs.
//!
//! The file request rides on the final handshake ACK, so a lossless
//! single-segment transfer completes after exactly two round trips plus the
//! serialization of SYN, SYN-ACK, request and data.

use std::collections::BTreeMap;

use crate::linknet::{AckInfo, Direction, Packet, PacketKind, TCP_HEADER_LEN};
use crate::simclock::{Event, EventId, EventQueue, Flow, SimTime};
use crate::transport::wire::Wire;
use crate::transport::{
    can_send, AbortReason, CongestionController, FlowWindow, LossKind, Outcome, RangeSet, RttEstimator, TransferConfig,
    TransferError, TransferResult, MAX_BACKOFFS, REQUEST_LEN,
};

/// RTO used for data when the handshake produced no clean RTT sample.
const HANDSHAKE_FALLBACK_RTO: SimTime = SimTime::from_secs(3);
const DUPACK_THRESHOLD: u32 = 3;
const ABC_LIMIT: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpState {
    Closed,
    SynSent,
    SynReceived,
    Established,
    Done,
}

#[derive(Debug)]
enum Ev {
    ToClient(Packet),
    ToServer(Packet),
    ClientTimer,
    ServerTimer,
}

#[derive(Debug)]
struct Segment {
    sent_at: SimTime,
    retransmitted: bool,
}

struct Client {
    state: TcpState,
    est: RttEstimator,
    syn_sent_at: SimTime,
    syn_retries: u32,
    timer: Option<EventId>,
    received: RangeSet,
}

struct Server {
    state: TcpState,
    est: RttEstimator,
    cc: CongestionController,
    fw: FlowWindow,
    synack_sent_at: SimTime,
    synack_retries: u32,
    timer: Option<EventId>,
    send_next: u64,
    acked_upto: u64,
    high_sent: u64,
    segments: BTreeMap<u64, Segment>,
    dupacks: u32,
    // highest byte sent when the last loss reaction began; duplicate ACKs
    // below it belong to the same window and are not a new loss
    recover: u64,
    consecutive_timeouts: u32,
}

struct TcpSim<'a> {
    cfg: &'a TransferConfig,
    mss: u64,
    wire: Wire,
    client: Client,
    server: Server,
    result: TransferResult,
    finished: bool,
}

/// Run one TCP file transfer.
pub fn transfer(cfg: &TransferConfig) -> Result<TransferResult, TransferError> {
    cfg.validate()?;
    let mut sim = TcpSim::new(cfg)?;
    let mut queue = EventQueue::new().with_event_cap(cfg.event_cap);
    sim.start(&mut queue);
    queue.run_until_idle(|q, ev| sim.handle(q, ev))?;
    Ok(sim.finish())
}

impl<'a> TcpSim<'a> {
    fn new(cfg: &'a TransferConfig) -> Result<Self, TransferError> {
        let mtu = cfg.profile.mtu;
        Ok(TcpSim {
            cfg,
            mss: u64::from(mtu),
            wire: Wire::new(cfg.build_link()?, cfg.record_trace),
            client: Client {
                state: TcpState::Closed,
                est: RttEstimator::default(),
                syn_sent_at: SimTime::ZERO,
                syn_retries: 0,
                timer: None,
                received: RangeSet::new(),
            },
            server: Server {
                state: TcpState::Closed,
                est: RttEstimator::default(),
                cc: CongestionController::new(mtu, cfg.cwnd_cap),
                fw: FlowWindow::new(cfg.recv_window),
                synack_sent_at: SimTime::ZERO,
                synack_retries: 0,
                timer: None,
                send_next: 0,
                acked_upto: 0,
                high_sent: 0,
                segments: BTreeMap::new(),
                dupacks: 0,
                recover: 0,
                consecutive_timeouts: 0,
            },
            result: TransferResult::new(),
            finished: false,
        })
    }

    fn start(&mut self, q: &mut EventQueue<Ev>) {
        self.client.state = TcpState::SynSent;
        self.client.syn_sent_at = q.now();
        self.send_up(q, PacketKind::Syn, 0);
        self.arm_client_timer(q);
    }

    fn handle(&mut self, q: &mut EventQueue<Ev>, ev: Event<Ev>) -> Flow {
        match ev.action {
            Ev::ToClient(pkt) => self.client_receive(q, pkt),
            Ev::ToServer(pkt) => self.server_receive(q, pkt),
            Ev::ClientTimer => {
                self.client.timer = None;
                self.client_timer(q);
            }
            Ev::ServerTimer => {
                self.server.timer = None;
                self.server_timer(q);
            }
        }
        let s = &self.server;
        debug_assert!(s.acked_upto <= s.send_next);
        debug_assert!(s.cc.cwnd() <= s.cc.cwnd_cap());
        self.result.max_cwnd = self.result.max_cwnd.max(s.cc.cwnd());
        let done = self.result.completion().is_some() && s.state == TcpState::Done;
        if self.finished || done {
            Flow::Stop
        } else {
            Flow::Continue
        }
    }

    fn abort(&mut self, now: SimTime, reason: AbortReason) {
        if self.result.completion().is_none() {
            self.result.outcome = Outcome::Aborted { at: now, reason };
        }
        self.finished = true;
    }

    // ---- client ----

    fn send_up(&mut self, q: &mut EventQueue<Ev>, kind: PacketKind, cumulative: u64) {
        let mut pkt = Packet::new(0, Direction::Up, kind, TCP_HEADER_LEN);
        match kind {
            PacketKind::Request => pkt.payload_len = REQUEST_LEN,
            PacketKind::Ack => {
                pkt.ack = Some(AckInfo {
                    cumulative,
                    ..AckInfo::default()
                })
            }
            _ => {}
        }
        self.wire.send(q, pkt, 0, self.client.est.srtt(), Ev::ToServer);
    }

    fn arm_client_timer(&mut self, q: &mut EventQueue<Ev>) {
        if let Some(id) = self.client.timer.take() {
            q.cancel(id);
        }
        self.client.timer = Some(q.schedule_in(self.client.est.backed_off_rto(), Ev::ClientTimer));
    }

    fn client_timer(&mut self, q: &mut EventQueue<Ev>) {
        if self.client.state != TcpState::SynSent {
            return;
        }
        if self.client.syn_retries >= MAX_BACKOFFS {
            self.abort(q.now(), AbortReason::HandshakeRetries);
            return;
        }
        self.client.syn_retries += 1;
        self.client.est.on_timeout();
        self.send_up(q, PacketKind::Syn, 0);
        self.arm_client_timer(q);
    }

    fn client_receive(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        match pkt.kind {
            PacketKind::SynAck => match self.client.state {
                TcpState::SynSent => {
                    if self.client.syn_retries == 0 {
                        let sample = q.now() - self.client.syn_sent_at;
                        let _ = self.client.est.update(sample);
                    }
                    if let Some(id) = self.client.timer.take() {
                        q.cancel(id);
                    }
                    self.client.state = TcpState::Established;
                    self.send_up(q, PacketKind::Request, 0);
                }
                // the request was lost; the server is still waiting for it
                TcpState::Established => self.send_up(q, PacketKind::Request, 0),
                _ => {}
            },
            PacketKind::Data => {
                self.client
                    .received
                    .insert(pkt.seq..pkt.seq + u64::from(pkt.payload_len));
                let cumulative = self.client.received.prefix_end();
                self.send_up(q, PacketKind::Ack, cumulative);
                if cumulative >= self.cfg.file_size && self.result.completion().is_none() {
                    self.client.state = TcpState::Done;
                    self.result.outcome = Outcome::Completed(q.now());
                }
            }
            _ => {}
        }
    }

    // ---- server ----

    fn arm_server_timer(&mut self, q: &mut EventQueue<Ev>) {
        if let Some(id) = self.server.timer.take() {
            q.cancel(id);
        }
        self.server.timer = Some(q.schedule_in(self.server.est.backed_off_rto(), Ev::ServerTimer));
    }

    fn cancel_server_timer(&mut self, q: &mut EventQueue<Ev>) {
        if let Some(id) = self.server.timer.take() {
            q.cancel(id);
        }
    }

    fn send_synack(&mut self, q: &mut EventQueue<Ev>) {
        let pkt = Packet::new(0, Direction::Down, PacketKind::SynAck, TCP_HEADER_LEN);
        self.server.synack_sent_at = q.now();
        let cwnd = self.server.cc.cwnd();
        self.wire.send(q, pkt, cwnd, self.server.est.srtt(), Ev::ToClient);
    }

    fn server_receive(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        match (pkt.kind, self.server.state) {
            (PacketKind::Syn, TcpState::Closed) => {
                self.server.state = TcpState::SynReceived;
                self.send_synack(q);
                self.arm_server_timer(q);
            }
            (PacketKind::Syn, TcpState::SynReceived) => {
                // duplicate SYN: answer again, which makes the RTT ambiguous
                self.server.synack_retries = self.server.synack_retries.max(1);
                self.send_synack(q);
            }
            (PacketKind::Request, TcpState::SynReceived) => {
                let s = &mut self.server;
                if s.synack_retries == 0 {
                    let _ = s.est.update(q.now() - s.synack_sent_at);
                } else {
                    s.est.set_unsampled_rto(HANDSHAKE_FALLBACK_RTO);
                }
                s.est.reset_backoff();
                s.state = TcpState::Established;
                self.cancel_server_timer(q);
                self.try_send(q);
            }
            (PacketKind::Ack, TcpState::Established) => {
                if let Some(ack) = pkt.ack {
                    self.on_ack(q, ack.cumulative);
                }
            }
            _ => {}
        }
    }

    fn server_timer(&mut self, q: &mut EventQueue<Ev>) {
        match self.server.state {
            TcpState::SynReceived => {
                if self.server.synack_retries >= MAX_BACKOFFS {
                    self.abort(q.now(), AbortReason::HandshakeRetries);
                    return;
                }
                self.server.synack_retries += 1;
                self.server.est.on_timeout();
                self.send_synack(q);
                self.arm_server_timer(q);
            }
            TcpState::Established => self.on_rto(q),
            _ => {}
        }
    }

    fn on_rto(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        if s.consecutive_timeouts >= MAX_BACKOFFS {
            self.abort(q.now(), AbortReason::Timeouts);
            return;
        }
        s.consecutive_timeouts += 1;
        self.result.timeouts += 1;
        self.result.cc_loss_events += 1;
        s.cc.on_loss(LossKind::Timeout);
        s.est.on_timeout();
        // go back N
        s.send_next = s.acked_upto;
        s.fw.set_in_flight(0);
        s.dupacks = 0;
        s.recover = s.high_sent;
        self.try_send(q);
        self.arm_server_timer(q);
    }

    fn on_ack(&mut self, q: &mut EventQueue<Ev>, ack: u64) {
        let now = q.now();
        let s = &mut self.server;
        if ack > s.acked_upto {
            let newly = ack - s.acked_upto;
            let mut sample = None;
            while let Some(entry) = s.segments.first_entry() {
                let start = *entry.key();
                if start + self.mss.min(self.cfg.file_size - start) > ack {
                    break;
                }
                let seg = entry.remove();
                sample = (!seg.retransmitted).then(|| now - seg.sent_at);
            }
            s.acked_upto = ack;
            s.send_next = s.send_next.max(ack);
            s.fw.set_in_flight(s.send_next - s.acked_upto);
            // at most one segment of growth per ACK, so a cumulative jump
            // after a repaired hole does not release a line-rate burst
            s.cc.on_ack(newly.min(ABC_LIMIT * self.mss));
            s.dupacks = 0;
            s.consecutive_timeouts = 0;
            s.est.reset_backoff();
            if let Some(sample) = sample.filter(|t| *t > SimTime::ZERO) {
                let _ = s.est.update(sample);
            }
            if s.acked_upto >= self.cfg.file_size {
                s.state = TcpState::Done;
                self.cancel_server_timer(q);
                return;
            }
            if s.fw.bytes_in_flight() > 0 {
                self.arm_server_timer(q);
            } else {
                self.cancel_server_timer(q);
            }
            self.try_send(q);
        } else if ack == s.acked_upto && s.high_sent > s.acked_upto {
            s.dupacks += 1;
            if s.dupacks == DUPACK_THRESHOLD && s.acked_upto >= s.recover {
                s.recover = s.high_sent;
                s.cc.on_loss(LossKind::FastRecovery);
                self.result.cc_loss_events += 1;
                let start = s.acked_upto;
                self.send_segment(q, start);
                self.arm_server_timer(q);
            }
        }
    }

    fn try_send(&mut self, q: &mut EventQueue<Ev>) {
        loop {
            let s = &self.server;
            if s.send_next >= self.cfg.file_size {
                break;
            }
            let len = self.mss.min(self.cfg.file_size - s.send_next);
            if can_send(&s.cc, &s.fw) < len {
                break;
            }
            let start = s.send_next;
            self.send_segment(q, start);
            let s = &mut self.server;
            s.send_next = start + len;
            s.fw.set_in_flight(s.send_next - s.acked_upto);
        }
        if self.server.fw.bytes_in_flight() > 0 && self.server.timer.is_none() {
            self.arm_server_timer(q);
        }
    }

    fn send_segment(&mut self, q: &mut EventQueue<Ev>, start: u64) {
        let now = q.now();
        let len = self.mss.min(self.cfg.file_size - start);
        let s = &mut self.server;
        let retransmission = start < s.high_sent;
        s.segments
            .entry(start)
            .and_modify(|seg| {
                seg.sent_at = now;
                seg.retransmitted = true;
            })
            .or_insert(Segment {
                sent_at: now,
                retransmitted: false,
            });
        s.high_sent = s.high_sent.max(start + len);
        if retransmission {
            self.result.retransmits += 1;
        }
        self.result.first_data_sent_at.get_or_insert(now);
        let mut pkt = Packet::new(0, Direction::Down, PacketKind::Data, TCP_HEADER_LEN);
        pkt.seq = start;
        pkt.payload_len = len as u32;
        let (cwnd, srtt) = (s.cc.cwnd(), s.est.srtt());
        self.wire.send(q, pkt, cwnd, srtt, Ev::ToClient);
    }

    fn finish(mut self) -> TransferResult {
        self.result.final_bytes_in_flight = self.server.fw.bytes_in_flight();
        self.result.down = self.wire.stats(Direction::Down);
        self.result.up = self.wire.stats(Direction::Up);
        self.result.trace = self.wire.take_trace();
        self.result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linknet::{Direction, ImpairmentProfile};

    fn profile(rtt_ms: u64, loss: f64, bw: u64) -> ImpairmentProfile {
        ImpairmentProfile::new(SimTime::from_millis(rtt_ms), loss, bw)
    }

    /// Ample bandwidth: 10 Gbit/s keeps serialization under a microsecond
    /// per small packet.
    const FAST: u64 = 10_000_000_000;

    #[test]
    fn handshake_lossless_takes_one_rtt() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1).with_trace();
        let r = transfer(&cfg).unwrap();
        let request = r.trace.iter().find(|s| s.kind == PacketKind::Request).unwrap();
        let p = &cfg.profile;
        let ser = p.serialization(Direction::Up, TCP_HEADER_LEN) + p.serialization(Direction::Down, TCP_HEADER_LEN);
        assert_eq!(request.at, SimTime::from_millis(100) + ser);
        assert_eq!(r.retransmits, 0);
    }

    #[test]
    fn lost_syn_costs_one_min_rto() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1)
            .with_trace()
            .with_drop(Direction::Up, 0);
        let r = transfer(&cfg).unwrap();
        let request = r.trace.iter().find(|s| s.kind == PacketKind::Request).unwrap();
        let p = &cfg.profile;
        let ser = p.serialization(Direction::Up, TCP_HEADER_LEN) + p.serialization(Direction::Down, TCP_HEADER_LEN);
        assert_eq!(request.at, SimTime::from_millis(300) + ser);
    }

    #[test]
    fn total_loss_aborts_after_eight_backoffs() {
        let cfg = TransferConfig::new(profile(100, 100.0, FAST), 1000, 1).with_trace();
        let r = transfer(&cfg).unwrap();
        // 200 ms * (1 + 2 + ... + 2^8)
        assert_eq!(
            r.outcome,
            Outcome::Aborted {
                at: SimTime::from_millis(200 * 511),
                reason: AbortReason::HandshakeRetries
            }
        );
        let syns = r.trace.iter().filter(|s| s.kind == PacketKind::Syn).count();
        assert_eq!(syns, 9);
    }

    #[test]
    fn single_segment_is_two_round_trips() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1);
        let r = transfer(&cfg).unwrap();
        let p = &cfg.profile;
        let ser = p.serialization(Direction::Up, 40)
            + p.serialization(Direction::Down, 40)
            + p.serialization(Direction::Up, 40 + REQUEST_LEN)
            + p.serialization(Direction::Down, 40 + 1000);
        assert_eq!(r.completion(), Some(SimTime::from_millis(200) + ser));
    }

    #[test]
    fn empty_file_is_rejected() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 0, 1);
        assert!(matches!(transfer(&cfg), Err(TransferError::EmptyFile)));
    }

    #[test]
    fn lossless_transfer_never_retransmits() {
        let mut p = profile(50, 0.0, 100_000_000);
        p.queue_capacity = 16 << 20;
        let r = transfer(&TransferConfig::new(p, 2 << 20, 3)).unwrap();
        assert!(r.completion().is_some());
        assert_eq!((r.retransmits, r.timeouts), (0, 0));
        assert_eq!(r.final_bytes_in_flight, 0);
    }

    #[test]
    fn lost_data_is_recovered() {
        let p = profile(100, 0.0, 2_200_000);
        // drop the 4th packet the server sends (SYN-ACK is ordinal 0)
        let cfg = TransferConfig::new(p, 100 * 1024, 1).with_drop(Direction::Down, 4);
        let r = transfer(&cfg).unwrap();
        assert!(r.completion().is_some());
        assert!(r.retransmits >= 1);
        assert_eq!(r.final_bytes_in_flight, 0);
    }

    #[test]
    fn lossy_transfer_completes_and_drains() {
        for seed in 0..5 {
            let cfg = TransferConfig::new(profile(110, 2.5, 2_200_000), 250 * 1024, seed);
            let r = transfer(&cfg).unwrap();
            assert!(r.completion().is_some(), "seed {seed}: {:?}", r.outcome);
            assert_eq!(r.final_bytes_in_flight, 0);
            assert!(r.max_cwnd <= cfg.cwnd_cap);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = TransferConfig::new(profile(250, 0.7, 2_000_000), 500 * 1024, 77);
        assert_eq!(transfer(&cfg).unwrap(), transfer(&cfg).unwrap());
    }
}
