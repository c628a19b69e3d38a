//! QUIC-like transport: the request travels in the first datagram (0-RTT),
//! every data packet gets a fresh packet number, ACKs carry packet-number
//! ranges, and tail losses are probed twice before the RTO fires.
//!
//! Loss detection declares a packet lost once a packet numbered at least
//! three higher has been acknowledged. One congestion reaction is taken per
//! recovery period: losses of packets sent before the current period began
//! do not shrink the window again.

use std::collections::{BTreeMap, VecDeque};
use std::ops::Range;

use crate::linknet::{AckEcho, AckInfo, Direction, Packet, PacketKind, UDP_HEADER_LEN};
use crate::simclock::{Event, EventId, EventQueue, Flow, SimTime};
use crate::transport::wire::Wire;
use crate::transport::{
    can_send, AbortReason, CongestionController, FlowWindow, LossKind, Outcome, RangeSet, RttEstimator, TransferConfig,
    TransferError, TransferResult, MAX_BACKOFFS, REQUEST_LEN,
};

/// Packet-number distance after which an unacknowledged packet is lost.
pub const REORDERING_THRESHOLD: u64 = 3;
/// Tail loss probes sent before falling back to the RTO.
pub const MAX_TLPS: u32 = 2;
pub const MIN_TLP_TIMEOUT: SimTime = SimTime::from_millis(10);
/// ACK frames list at most this many packet-number ranges.
const MAX_ACK_RANGES: usize = 32;

/// Probe timeout: `max(2 * srtt, 10 ms)`, with the default RTT before the
/// first sample.
pub fn tlp_timeout(est: &RttEstimator) -> SimTime {
    (est.srtt_or_default() * 2).max(MIN_TLP_TIMEOUT)
}

#[derive(Debug)]
enum Ev {
    ToClient(Packet),
    ToServer(Packet),
    ClientTimer,
    LossTimer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimerMode {
    Tlp,
    Rto,
}

#[derive(Debug, Clone)]
struct SentPacket {
    range: Range<u64>,
    sent_at: SimTime,
}

struct Client {
    est: RttEstimator,
    retries: u32,
    timer: Option<EventId>,
    got_data: bool,
    packets: RangeSet,
    bytes: RangeSet,
}

struct Server {
    started: bool,
    done: bool,
    est: RttEstimator,
    cc: CongestionController,
    fw: FlowWindow,
    next_pn: u64,
    next_offset: u64,
    sent: BTreeMap<u64, SentPacket>,
    retransmit: VecDeque<Range<u64>>,
    acked: RangeSet,
    largest_acked: Option<u64>,
    recovery_start: Option<SimTime>,
    tlp_count: u32,
    timer: Option<(EventId, TimerMode)>,
    consecutive_rtos: u32,
    // first unverified RTO: the next ACK decides whether it was spurious
    rto_at: Option<SimTime>,
}

struct QuicSim<'a> {
    cfg: &'a TransferConfig,
    mss: u64,
    wire: Wire,
    client: Client,
    server: Server,
    result: TransferResult,
    tlps_since_ack: u32,
    finished: bool,
}

/// Run one QUIC-like file transfer.
pub fn transfer(cfg: &TransferConfig) -> Result<TransferResult, TransferError> {
    cfg.validate()?;
    let mut sim = QuicSim::new(cfg)?;
    let mut queue = EventQueue::new().with_event_cap(cfg.event_cap);
    sim.send_request(&mut queue);
    queue.run_until_idle(|q, ev| sim.handle(q, ev))?;
    Ok(sim.finish())
}

impl<'a> QuicSim<'a> {
    fn new(cfg: &'a TransferConfig) -> Result<Self, TransferError> {
        let mtu = cfg.profile.mtu;
        Ok(QuicSim {
            cfg,
            mss: u64::from(mtu),
            wire: Wire::new(cfg.build_link()?, cfg.record_trace),
            client: Client {
                est: RttEstimator::default(),
                retries: 0,
                timer: None,
                got_data: false,
                packets: RangeSet::new(),
                bytes: RangeSet::new(),
            },
            server: Server {
                started: false,
                done: false,
                est: RttEstimator::default(),
                cc: CongestionController::new(mtu, cfg.cwnd_cap),
                fw: FlowWindow::new(cfg.recv_window),
                next_pn: 0,
                next_offset: 0,
                sent: BTreeMap::new(),
                retransmit: VecDeque::new(),
                acked: RangeSet::new(),
                largest_acked: None,
                recovery_start: None,
                tlp_count: 0,
                timer: None,
                consecutive_rtos: 0,
                rto_at: None,
            },
            result: TransferResult::new(),
            tlps_since_ack: 0,
            finished: false,
        })
    }

    fn handle(&mut self, q: &mut EventQueue<Ev>, ev: Event<Ev>) -> Flow {
        match ev.action {
            Ev::ToClient(pkt) => self.client_receive(q, pkt),
            Ev::ToServer(pkt) => self.server_receive(q, pkt),
            Ev::ClientTimer => {
                self.client.timer = None;
                self.client_timer(q);
            }
            Ev::LossTimer => {
                if let Some((_, mode)) = self.server.timer.take() {
                    self.loss_timer(q, mode);
                }
            }
        }
        let s = &self.server;
        debug_assert!(s.cc.cwnd() <= s.cc.cwnd_cap());
        debug_assert!(s.tlp_count <= MAX_TLPS);
        self.result.max_cwnd = self.result.max_cwnd.max(s.cc.cwnd());
        if self.finished || (self.result.completion().is_some() && s.done) {
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

    fn send_request(&mut self, q: &mut EventQueue<Ev>) {
        let mut pkt = Packet::new(0, Direction::Up, PacketKind::Request, UDP_HEADER_LEN);
        pkt.payload_len = REQUEST_LEN;
        self.wire.send(q, pkt, 0, self.client.est.srtt(), Ev::ToServer);
        self.client.timer = Some(q.schedule_in(self.client.est.backed_off_rto(), Ev::ClientTimer));
    }

    fn client_timer(&mut self, q: &mut EventQueue<Ev>) {
        if self.client.got_data {
            return;
        }
        if self.client.retries >= MAX_BACKOFFS {
            self.abort(q.now(), AbortReason::RequestRetries);
            return;
        }
        self.client.retries += 1;
        self.client.est.on_timeout();
        self.send_request(q);
    }

    fn client_receive(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        if !matches!(pkt.kind, PacketKind::Data | PacketKind::Probe) {
            return;
        }
        if !self.client.got_data {
            self.client.got_data = true;
            if let Some(id) = self.client.timer.take() {
                q.cancel(id);
            }
        }
        let c = &mut self.client;
        c.packets.insert(pkt.number..pkt.number + 1);
        c.bytes.insert(pkt.seq..pkt.seq + u64::from(pkt.payload_len));
        let ack = AckInfo {
            cumulative: c.packets.prefix_end(),
            ranges: c.packets.iter_rev().take(MAX_ACK_RANGES).collect(),
            missing: Vec::new(),
            echo: Some(AckEcho {
                number: pkt.number,
                sent_at: pkt.sent_at,
                delay: SimTime::ZERO,
            }),
        };
        let complete = c.bytes.prefix_end() >= self.cfg.file_size;
        let mut reply = Packet::new(0, Direction::Up, PacketKind::Ack, UDP_HEADER_LEN);
        reply.ack = Some(ack);
        self.wire.send(q, reply, 0, c.est.srtt(), Ev::ToServer);
        if complete && self.result.completion().is_none() {
            self.result.outcome = Outcome::Completed(q.now());
        }
    }

    // ---- server ----

    fn server_receive(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        match pkt.kind {
            PacketKind::Request if !self.server.started => {
                self.server.started = true;
                self.try_send(q);
            }
            PacketKind::Ack if self.server.started && !self.server.done => {
                if let Some(ack) = pkt.ack {
                    self.on_ack(q, ack);
                }
            }
            _ => {}
        }
    }

    fn on_ack(&mut self, q: &mut EventQueue<Ev>, ack: AckInfo) {
        let now = q.now();
        self.tlps_since_ack = 0;
        let s = &mut self.server;
        s.tlp_count = 0;

        let mut newly: Vec<(u64, SentPacket)> = Vec::new();
        for r in &ack.ranges {
            let pns: Vec<u64> = s.sent.range(r.clone()).map(|(&pn, _)| pn).collect();
            for pn in pns {
                let p = s.sent.remove(&pn).unwrap();
                newly.push((pn, p));
            }
        }
        if let Some(largest) = ack.ranges.first().map(|r| r.end - 1) {
            if let Some((_, p)) = newly.iter().find(|(pn, _)| *pn == largest) {
                let sample = now - p.sent_at;
                if sample > SimTime::ZERO {
                    let _ = s.est.update(sample);
                }
            }
            s.largest_acked = Some(s.largest_acked.map_or(largest, |l| l.max(largest)));
        }
        for (_, p) in &newly {
            let len = p.range.end - p.range.start;
            s.fw.on_removed(len);
            s.acked.insert(p.range.clone());
            if s.recovery_start.is_none_or(|rs| p.sent_at > rs) {
                s.cc.on_ack(len);
            }
        }
        if !newly.is_empty() {
            s.est.reset_backoff();
            s.consecutive_rtos = 0;
            if let Some(rto_at) = s.rto_at.take() {
                // only post-timeout packets got through: the RTO was real
                if newly.iter().all(|(_, p)| p.sent_at >= rto_at) {
                    s.cc.on_loss(LossKind::Timeout);
                    s.recovery_start = Some(now);
                    self.result.cc_loss_events += 1;
                }
            }
        }
        self.detect_losses(now);
        if self.server.acked.contains_range(0..self.cfg.file_size) {
            self.server_done(q);
            return;
        }
        self.try_send(q);
        self.rearm_timer(q);
    }

    fn detect_losses(&mut self, now: SimTime) {
        let s = &mut self.server;
        let Some(largest) = s.largest_acked else {
            return;
        };
        let Some(limit) = largest.checked_sub(REORDERING_THRESHOLD - 1) else {
            return;
        };
        let lost: Vec<u64> = s.sent.range(..limit).map(|(&pn, _)| pn).collect();
        for pn in lost {
            let p = s.sent.remove(&pn).unwrap();
            s.fw.on_removed(p.range.end - p.range.start);
            if s.recovery_start.is_none_or(|rs| p.sent_at > rs) {
                s.cc.on_loss(LossKind::FastRecovery);
                s.recovery_start = Some(now);
                self.result.cc_loss_events += 1;
            }
            s.retransmit.push_back(p.range);
        }
    }

    fn server_done(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        s.done = true;
        // outstanding packets only duplicate acknowledged bytes
        for (_, p) in std::mem::take(&mut s.sent) {
            s.fw.on_removed(p.range.end - p.range.start);
        }
        s.retransmit.clear();
        if let Some((id, _)) = s.timer.take() {
            q.cancel(id);
        }
    }

    /// Next chunk to send: pending retransmissions first, then new data.
    fn next_chunk(&mut self) -> Option<(Range<u64>, bool)> {
        let s = &mut self.server;
        while let Some(front) = s.retransmit.pop_front() {
            let gaps = s.acked.gaps_within(front);
            if let Some(first) = gaps.first().cloned() {
                for g in gaps.into_iter().skip(1).rev() {
                    s.retransmit.push_front(g);
                }
                s.retransmit.push_front(first.clone());
                return Some((first, true));
            }
        }
        if s.next_offset < self.cfg.file_size {
            let end = (s.next_offset + self.mss).min(self.cfg.file_size);
            return Some((s.next_offset..end, false));
        }
        None
    }

    fn try_send(&mut self, q: &mut EventQueue<Ev>) {
        let mut sent_any = false;
        while let Some((range, retransmission)) = self.next_chunk() {
            if can_send(&self.server.cc, &self.server.fw) < range.end - range.start {
                break;
            }
            if retransmission {
                self.server.retransmit.pop_front();
            } else {
                self.server.next_offset = range.end;
            }
            self.send_packet(q, range, retransmission, PacketKind::Data);
            sent_any = true;
        }
        if sent_any || self.server.timer.is_none() {
            self.rearm_timer(q);
        }
    }

    fn send_packet(&mut self, q: &mut EventQueue<Ev>, range: Range<u64>, retransmission: bool, kind: PacketKind) {
        let now = q.now();
        let s = &mut self.server;
        let pn = s.next_pn;
        s.next_pn += 1;
        let len = range.end - range.start;
        s.fw.on_sent(len);
        let mut pkt = Packet::new(0, Direction::Down, kind, UDP_HEADER_LEN);
        pkt.seq = range.start;
        pkt.number = pn;
        pkt.payload_len = len as u32;
        s.sent.insert(pn, SentPacket { range, sent_at: now });
        if retransmission {
            self.result.retransmits += 1;
        }
        self.result.first_data_sent_at.get_or_insert(now);
        let (cwnd, srtt) = (s.cc.cwnd(), s.est.srtt());
        self.wire.send(q, pkt, cwnd, srtt, Ev::ToClient);
    }

    fn rearm_timer(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        if let Some((id, _)) = s.timer.take() {
            q.cancel(id);
        }
        if s.sent.is_empty() || s.done {
            return;
        }
        let (delay, mode) = if s.tlp_count < MAX_TLPS {
            (tlp_timeout(&s.est), TimerMode::Tlp)
        } else {
            (s.est.backed_off_rto(), TimerMode::Rto)
        };
        s.timer = Some((q.schedule_in(delay, Ev::LossTimer), mode));
    }

    fn loss_timer(&mut self, q: &mut EventQueue<Ev>, mode: TimerMode) {
        match mode {
            TimerMode::Tlp => {
                self.server.tlp_count += 1;
                self.tlps_since_ack += 1;
                self.result.tlps += 1;
                self.result.max_tlps_between_acks = self.result.max_tlps_between_acks.max(self.tlps_since_ack);
                let s = &mut self.server;
                if s.next_offset < self.cfg.file_size {
                    let end = (s.next_offset + self.mss).min(self.cfg.file_size);
                    let range = s.next_offset..end;
                    s.next_offset = end;
                    self.send_packet(q, range, false, PacketKind::Probe);
                } else if let Some((_, last)) = s.sent.last_key_value() {
                    let range = last.range.clone();
                    self.send_packet(q, range, true, PacketKind::Probe);
                }
            }
            TimerMode::Rto => {
                let s = &mut self.server;
                if s.consecutive_rtos >= MAX_BACKOFFS {
                    self.abort(q.now(), AbortReason::Timeouts);
                    return;
                }
                s.consecutive_rtos += 1;
                s.est.on_timeout();
                s.rto_at.get_or_insert(q.now());
                self.result.timeouts += 1;
                if let Some((_, first)) = s.sent.first_key_value() {
                    let range = first.range.clone();
                    self.send_packet(q, range, true, PacketKind::Probe);
                }
            }
        }
        self.rearm_timer(q);
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
    use crate::linknet::ImpairmentProfile;

    const FAST: u64 = 10_000_000_000;

    fn profile(rtt_ms: u64, loss: f64, bw: u64) -> ImpairmentProfile {
        ImpairmentProfile::new(SimTime::from_millis(rtt_ms), loss, bw)
    }

    #[test]
    fn single_packet_is_one_round_trip() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1);
        let r = transfer(&cfg).unwrap();
        let p = &cfg.profile;
        let ser = p.serialization(Direction::Up, UDP_HEADER_LEN + REQUEST_LEN)
            + p.serialization(Direction::Down, UDP_HEADER_LEN + 1000);
        assert_eq!(r.completion(), Some(SimTime::from_millis(100) + ser));
        assert_eq!((r.tlps, r.retransmits), (0, 0));
    }

    #[test]
    fn first_data_leaves_after_half_rtt() {
        let cfg = TransferConfig::new(profile(100, 0.0, 2_200_000), 50_000, 1);
        let r = transfer(&cfg).unwrap();
        let req = cfg.profile.serialization(Direction::Up, UDP_HEADER_LEN + REQUEST_LEN);
        assert_eq!(r.first_data_sent_at, Some(SimTime::from_millis(50) + req));
    }

    #[test]
    fn lossless_transfers_never_probe() {
        for size in [1_000, 10_000, 100_000, 1 << 20] {
            let mut p = profile(100, 0.0, 50_000_000);
            p.queue_capacity = 16 << 20;
            let r = transfer(&TransferConfig::new(p, size, 2)).unwrap();
            assert!(r.completion().is_some());
            assert_eq!((r.tlps, r.retransmits, r.timeouts), (0, 0, 0), "size {size}");
            assert_eq!(r.final_bytes_in_flight, 0);
        }
    }

    #[test]
    fn tlp_timer_arithmetic() {
        let mut est = RttEstimator::default();
        assert_eq!(tlp_timeout(&est), SimTime::from_millis(200));
        est.update(SimTime::from_millis(100)).unwrap();
        assert_eq!(tlp_timeout(&est), SimTime::from_millis(200));
        let mut tiny = RttEstimator::default();
        tiny.update(SimTime::from_millis(1)).unwrap();
        assert_eq!(tlp_timeout(&tiny), SimTime::from_millis(10));
    }

    #[test]
    fn tlp_and_rto_schedule() {
        // every server packet after the first lost: probes at +200 and +400,
        // then the RTO at +400 + rto
        let mut cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1).with_trace();
        for ordinal in 0..3 {
            cfg = cfg.with_drop(Direction::Down, ordinal);
        }
        let r = transfer(&cfg).unwrap();
        let sends: Vec<_> = r
            .trace
            .iter()
            .filter(|s| s.direction == Direction::Down)
            .map(|s| (s.at, s.kind))
            .collect();
        let first = sends[0].0;
        assert_eq!(sends[1], (first + SimTime::from_millis(200), PacketKind::Probe));
        assert_eq!(sends[2], (first + SimTime::from_millis(400), PacketKind::Probe));
        assert_eq!(sends[3], (first + SimTime::from_millis(600), PacketKind::Probe));
        assert_eq!((r.tlps, r.timeouts), (2, 1));
        assert_eq!(r.max_tlps_between_acks, 2);
        assert!(r.completion().is_some());
    }

    #[test]
    fn tail_loss_recovers_via_probe_before_rto() {
        let p = profile(100, 0.0, 2_200_000);
        let size = 20 * 1200;
        // the last data packet of the flight is lost; in the paired run both
        // probes are lost too, leaving recovery to the RTO
        let tail = TransferConfig::new(p.clone(), size, 1)
            .with_trace()
            .with_drop(Direction::Down, 19);
        let timeout = tail
            .clone()
            .with_drop(Direction::Down, 20)
            .with_drop(Direction::Down, 21);
        let clean = transfer(&TransferConfig::new(p, size, 1))
            .unwrap()
            .completion()
            .unwrap();
        let by_tlp = transfer(&tail).unwrap();
        let by_rto = transfer(&timeout).unwrap();
        assert_eq!((by_tlp.tlps, by_tlp.timeouts), (1, 0));
        assert_eq!((by_rto.tlps, by_rto.timeouts), (2, 1));
        assert!(by_tlp.completion().unwrap() - clean < by_rto.completion().unwrap() - clean);

        // the probe timer runs from the last ACK to reach the server
        let probe = by_tlp.trace.iter().find(|s| s.kind == PacketKind::Probe).unwrap();
        let last_ack = by_tlp
            .trace
            .iter()
            .rfind(|s| s.kind == PacketKind::Ack && s.at < probe.at)
            .unwrap();
        let ack_arrival = last_ack.at
            + tail.profile.propagation(Direction::Up)
            + tail.profile.serialization(Direction::Up, last_ack.wire);
        let mut est = RttEstimator::default();
        est.update(probe.srtt).unwrap();
        assert_eq!(probe.at - ack_arrival, tlp_timeout(&est));
    }

    #[test]
    fn lossy_transfers_complete_and_drain() {
        for seed in 0..5 {
            let cfg = TransferConfig::new(profile(250, 2.5, 2_000_000), 500 * 1024, seed);
            let r = transfer(&cfg).unwrap();
            assert!(r.completion().is_some());
            assert_eq!(r.final_bytes_in_flight, 0);
            assert!(r.max_tlps_between_acks <= 2);
            assert!(r.max_cwnd <= cfg.cwnd_cap);
        }
    }

    #[test]
    fn packet_numbers_strictly_increase() {
        let cfg = TransferConfig::new(profile(100, 2.0, 2_200_000), 200 * 1024, 9).with_trace();
        let r = transfer(&cfg).unwrap();
        let pns: Vec<u64> = r
            .trace
            .iter()
            .filter(|s| s.direction == Direction::Down)
            .map(|s| s.number)
            .collect();
        assert!(pns.windows(2).all(|w| w[0] < w[1]));
        assert!(r.retransmits > 0);
    }

    #[test]
    fn deterministic() {
        let cfg = TransferConfig::new(profile(110, 1.0, 2_200_000), 300 * 1024, 5);
        assert_eq!(transfer(&cfg).unwrap(), transfer(&cfg).unwrap());
    }
}
