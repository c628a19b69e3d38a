//! smUDP: a NACK-based reliable UDP transfer with XOR parity per group of
//! data packets, paced sending and the shared AIMD controller.
//!
//! The request goes out at t=0 and the server starts sending as soon as it
//! arrives. The receiver reports back every `max(srtt/4, 5 ms)` with its
//! cumulative position, recent received ranges, the packets it cannot
//! rebuild from parity, and an echo of the newest packet for RTT sampling.
//! Losses repaired by parity never reach the congestion controller.

pub mod fec;
pub mod pacing;

use std::collections::VecDeque;

use crate::linknet::{AckEcho, AckInfo, Direction, Packet, PacketKind, UDP_HEADER_LEN};
use crate::simclock::{Event, EventId, EventQueue, Flow, RngStream, SimTime};
use crate::transport::wire::Wire;
use crate::transport::{
    can_send, AbortReason, CongestionController, FlowWindow, LossKind, Outcome, Phase, RangeSet, RttEstimator,
    TransferConfig, TransferError, TransferResult, MAX_BACKOFFS, REQUEST_LEN,
};

pub use fec::{Decoded, FecError, FecGroup};
pub use pacing::{pacing_gap, BURST_ALLOWANCE, PACING_GAIN};

pub const MIN_FEEDBACK_INTERVAL: SimTime = SimTime::from_millis(5);
const MAX_FEEDBACK_RANGES: usize = 64;
const MAX_NACKS: usize = 256;
const DELAY_THRESHOLD_MIN: SimTime = SimTime::from_millis(4);
const DELAY_THRESHOLD_MAX: SimTime = SimTime::from_millis(16);
const DELAYED_SAMPLES_TO_EXIT: u32 = 4;
/// Sender RTO before its first RTT sample.
pub const INITIAL_RTO: SimTime = SimTime::from_secs(1);

/// Receiver feedback period for a given RTT estimate.
pub fn feedback_interval(est: &RttEstimator) -> SimTime {
    (est.srtt_or_default() / 4).max(MIN_FEEDBACK_INTERVAL)
}

/// The deterministic file contents served for `seed`.
pub fn file_contents(seed: u64, len: u64) -> Vec<u8> {
    let mut rng = RngStream::new(seed, "smudp.payload");
    let mut out = Vec::with_capacity(len as usize + 8);
    while (out.len() as u64) < len {
        out.extend_from_slice(&rng.next_u64().to_le_bytes());
    }
    out.truncate(len as usize);
    out
}

#[derive(Debug)]
enum Ev {
    ToClient(Packet),
    ToServer(Packet),
    RequestTimer,
    FeedbackTimer,
    SendTick,
    Rto,
}

#[derive(Debug, Clone, Copy, Default)]
struct Slot {
    tx_count: u32,
    first_tx: SimTime,
    last_tx: SimTime,
    acked: bool,
    in_flight: bool,
    queued: bool,
}

struct Client {
    est: RttEstimator,
    request_sent_at: SimTime,
    retries: u32,
    retry_timer: Option<EventId>,
    feedback_timer: Option<EventId>,
    got_data: bool,
    data: Vec<u8>,
    have: Vec<bool>,
    got: RangeSet,
    held: u64,
    group_held: Vec<u64>,
    parity: Vec<Option<Vec<u8>>>,
    highest_seen: Option<u64>,
    highest_parity: Option<u64>,
    last_arrival: Option<(u64, SimTime, SimTime)>,
    last_arrival_at: Option<SimTime>,
    complete: bool,
}

struct Server {
    started: bool,
    done: bool,
    est: RttEstimator,
    cc: CongestionController,
    fw: FlowWindow,
    slots: Vec<Slot>,
    next_new: u64,
    retransmit: VecDeque<u64>,
    pending_fec: VecDeque<u64>,
    burst_left: u32,
    next_send_at: SimTime,
    tick: Option<EventId>,
    rto_timer: Option<EventId>,
    consecutive_rtos: u32,
    rto_at: Option<SimTime>,
    last_reduction: Option<SimTime>,
    // send time of the newest transmission known to have arrived
    delivered_tx: SimTime,
    min_rtt: Option<SimTime>,
    delayed_samples: u32,
    ack_cursor: u64,
    acked_count: u64,
}

impl Server {
    /// Slow start ends once queueing delay builds: several consecutive
    /// samples exceed the minimum RTT by `clamp(min_rtt / 8, 4 ms, 16 ms)`.
    /// Samples from the initial burst only seed the minimum when they come
    /// from its first packet.
    fn observe_delay(&mut self, sample: SimTime, eligible: bool) {
        if !eligible {
            return;
        }
        let min = *self.min_rtt.get_or_insert(sample);
        self.min_rtt = Some(min.min(sample));
        if self.cc.phase() != Phase::SlowStart {
            return;
        }
        let eta = (min / 8).clamp(DELAY_THRESHOLD_MIN, DELAY_THRESHOLD_MAX);
        if sample >= min + eta {
            self.delayed_samples += 1;
            if self.delayed_samples >= DELAYED_SAMPLES_TO_EXIT {
                self.cc.exit_slow_start();
            }
        } else {
            self.delayed_samples = 0;
        }
    }
}

struct SmudpSim<'a> {
    cfg: &'a TransferConfig,
    mss: u64,
    packets: u64,
    group: u64,
    file: Vec<u8>,
    wire: Wire,
    client: Client,
    server: Server,
    result: TransferResult,
    finished: bool,
}

/// Run one smUDP file transfer.
pub fn transfer(cfg: &TransferConfig) -> Result<TransferResult, TransferError> {
    cfg.validate()?;
    let mut sim = SmudpSim::new(cfg)?;
    let mut queue = EventQueue::new().with_event_cap(cfg.event_cap);
    sim.send_request(&mut queue);
    queue.run_until_idle(|q, ev| sim.handle(q, ev))?;
    sim.finish()
}

impl<'a> SmudpSim<'a> {
    fn new(cfg: &'a TransferConfig) -> Result<Self, TransferError> {
        let mtu = cfg.profile.mtu;
        let mss = u64::from(mtu);
        let packets = cfg.file_size.div_ceil(mss);
        let group = cfg.fec_group_size as u64;
        let groups = packets.div_ceil(group) as usize;
        let mut est = RttEstimator::default();
        // nothing has been measured when the first data leaves
        est.set_unsampled_rto(INITIAL_RTO);
        Ok(SmudpSim {
            cfg,
            mss,
            packets,
            group,
            file: file_contents(cfg.seed, cfg.file_size),
            wire: Wire::new(cfg.build_link()?, cfg.record_trace),
            client: Client {
                est: RttEstimator::default(),
                request_sent_at: SimTime::ZERO,
                retries: 0,
                retry_timer: None,
                feedback_timer: None,
                got_data: false,
                data: vec![0; cfg.file_size as usize],
                have: vec![false; packets as usize],
                got: RangeSet::new(),
                held: 0,
                group_held: vec![0; groups],
                parity: vec![None; groups],
                highest_seen: None,
                highest_parity: None,
                last_arrival: None,
                last_arrival_at: None,
                complete: false,
            },
            server: Server {
                started: false,
                done: false,
                est,
                cc: CongestionController::new(mtu, cfg.cwnd_cap),
                fw: FlowWindow::new(cfg.recv_window),
                slots: vec![Slot::default(); packets as usize],
                next_new: 0,
                retransmit: VecDeque::new(),
                pending_fec: VecDeque::new(),
                burst_left: BURST_ALLOWANCE,
                next_send_at: SimTime::ZERO,
                tick: None,
                rto_timer: None,
                consecutive_rtos: 0,
                rto_at: None,
                last_reduction: None,
                delivered_tx: SimTime::ZERO,
                min_rtt: None,
                delayed_samples: 0,
                ack_cursor: 0,
                acked_count: 0,
            },
            result: TransferResult::new(),
            finished: false,
        })
    }

    fn packet_range(&self, index: u64) -> std::ops::Range<usize> {
        let start = index * self.mss;
        let end = (start + self.mss).min(self.cfg.file_size);
        start as usize..end as usize
    }

    fn packet_len(&self, index: u64) -> u64 {
        let r = self.packet_range(index);
        (r.end - r.start) as u64
    }

    fn group_members(&self, group: u64) -> std::ops::Range<u64> {
        group * self.group..((group + 1) * self.group).min(self.packets)
    }

    fn handle(&mut self, q: &mut EventQueue<Ev>, ev: Event<Ev>) -> Flow {
        match ev.action {
            Ev::ToClient(pkt) => self.client_receive(q, pkt),
            Ev::ToServer(pkt) => self.server_receive(q, pkt),
            Ev::RequestTimer => {
                self.client.retry_timer = None;
                self.request_timer(q);
            }
            Ev::FeedbackTimer => {
                self.client.feedback_timer = None;
                if !self.client.complete {
                    self.send_feedback(q);
                    let delay = feedback_interval(&self.client.est);
                    self.client.feedback_timer = Some(q.schedule_in(delay, Ev::FeedbackTimer));
                }
            }
            Ev::SendTick => {
                self.server.tick = None;
                self.send_tick(q);
            }
            Ev::Rto => {
                self.server.rto_timer = None;
                self.on_rto(q);
            }
        }
        let s = &self.server;
        debug_assert!(s.cc.cwnd() <= s.cc.cwnd_cap());
        self.result.max_cwnd = self.result.max_cwnd.max(s.cc.cwnd());
        if self.finished || (self.client.complete && s.done) {
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
        self.client.request_sent_at = q.now();
        self.wire.send(q, pkt, 0, self.client.est.srtt(), Ev::ToServer);
        self.client.retry_timer = Some(q.schedule_in(self.client.est.backed_off_rto(), Ev::RequestTimer));
    }

    fn request_timer(&mut self, q: &mut EventQueue<Ev>) {
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
        let now = q.now();
        match pkt.kind {
            PacketKind::Data | PacketKind::Probe => {
                let c = &mut self.client;
                let first = !c.got_data;
                if first {
                    c.got_data = true;
                    if let Some(id) = c.retry_timer.take() {
                        q.cancel(id);
                    }
                    if c.retries == 0 {
                        let _ = c.est.update(now - c.request_sent_at);
                    }
                    let delay = feedback_interval(&c.est);
                    c.feedback_timer = Some(q.schedule_in(delay, Ev::FeedbackTimer));
                }
                let i = pkt.number;
                c.highest_seen = Some(c.highest_seen.map_or(i, |h| h.max(i)));
                c.last_arrival_at = Some(now);
                c.last_arrival = Some((i, pkt.sent_at, now));
                if self.store(i, &pkt.payload) && self.cfg.fec {
                    self.try_recover(i / self.group);
                }
                if first && !self.client.complete && self.client.held < self.packets {
                    // an early report gives the sender its first RTT sample
                    self.send_feedback(q);
                }
            }
            PacketKind::Fec if self.cfg.fec => {
                let g = pkt.number;
                let c = &mut self.client;
                c.last_arrival_at = Some(now);
                c.highest_parity = Some(c.highest_parity.map_or(g, |h| h.max(g)));
                c.parity[g as usize] = Some(pkt.payload);
                self.try_recover(g);
            }
            _ => return,
        }
        if self.client.complete {
            // duplicates after completion: tell the sender again
            self.send_feedback(q);
        } else if self.client.held == self.packets {
            self.client.complete = true;
            if self.result.completion().is_none() {
                self.result.outcome = Outcome::Completed(now);
            }
            if let Some(id) = self.client.feedback_timer.take() {
                q.cancel(id);
            }
            self.send_feedback(q);
        }
    }

    fn store(&mut self, index: u64, payload: &[u8]) -> bool {
        let range = self.packet_range(index);
        let c = &mut self.client;
        if c.have[index as usize] {
            return false;
        }
        c.data[range].copy_from_slice(payload);
        c.have[index as usize] = true;
        c.got.insert(index..index + 1);
        c.held += 1;
        c.group_held[(index / self.group) as usize] += 1;
        true
    }

    fn try_recover(&mut self, group: u64) {
        let members = self.group_members(group);
        let c = &self.client;
        let Some(parity) = &c.parity[group as usize] else {
            return;
        };
        if c.group_held[group as usize] + 1 != members.end - members.start {
            return;
        }
        let received: Vec<(u64, &[u8])> = members
            .clone()
            .filter(|&i| c.have[i as usize])
            .map(|i| (i, &c.data[self.packet_range(i)]))
            .collect();
        let fg = FecGroup {
            group_id: group,
            members: members.collect(),
            parity: parity.clone(),
        };
        let missing = fg.members.iter().copied().find(|&i| !c.have[i as usize]).unwrap();
        let decoded = fec::decode(&fg, &received, Some(self.packet_len(missing) as usize));
        if let Ok(Decoded::Recovered { index, payload }) = decoded {
            self.store(index, &payload);
            self.result.fec_recoveries += 1;
        }
    }

    /// A missing packet is reported once parity cannot repair it: its
    /// group's parity arrived with two or more members absent, or
    /// something sent after the parity arrived (so the parity was lost).
    fn nackable(&self, index: u64, now: SimTime) -> bool {
        if !self.cfg.fec {
            return true;
        }
        let g = index / self.group;
        let c = &self.client;
        let end = self.group_members(g).end;
        c.parity[g as usize].is_some()
            || c.highest_seen.is_some_and(|h| h >= end)
            || (end == self.packets && self.tail_quiet(now))
    }

    /// The final group has no successor to reveal its losses. Once the
    /// stream has reached it and then gone quiet for a feedback interval,
    /// whatever is still missing there was lost.
    fn tail_quiet(&self, now: SimTime) -> bool {
        let c = &self.client;
        let tail_start = (self.packets - 1) / self.group * self.group;
        c.highest_seen.is_some_and(|h| h >= tail_start)
            && c.last_arrival_at.is_some_and(|t| now - t >= feedback_interval(&c.est))
    }

    fn send_feedback(&mut self, q: &mut EventQueue<Ev>) {
        let now = q.now();
        let c = &self.client;
        let cumulative = c.got.prefix_end();
        let mut missing = Vec::new();
        if let Some(h) = c.highest_seen {
            let mut upper = h + 1;
            if let Some(g) = c.highest_parity {
                upper = upper.max(self.group_members(g).end);
            }
            if self.tail_quiet(now) {
                // the end of the file may have been lost outright
                upper = self.packets;
            }
            'outer: for gap in c.got.gaps_within(cumulative..upper) {
                for i in gap {
                    if self.nackable(i, now) {
                        missing.push(i);
                        if missing.len() >= MAX_NACKS {
                            break 'outer;
                        }
                    }
                }
            }
        }
        let kind = if missing.is_empty() {
            PacketKind::Ack
        } else {
            PacketKind::Nack
        };
        let ack = AckInfo {
            cumulative,
            ranges: c.got.iter_rev().take(MAX_FEEDBACK_RANGES).collect(),
            missing,
            echo: c.last_arrival.map(|(number, sent_at, at)| AckEcho {
                number,
                sent_at,
                delay: now - at,
            }),
        };
        let mut pkt = Packet::new(0, Direction::Up, kind, UDP_HEADER_LEN);
        pkt.ack = Some(ack);
        let srtt = c.est.srtt();
        self.wire.send(q, pkt, 0, srtt, Ev::ToServer);
    }

    // ---- server ----

    fn server_receive(&mut self, q: &mut EventQueue<Ev>, pkt: Packet) {
        match pkt.kind {
            PacketKind::Request if !self.server.started => {
                self.server.started = true;
                self.server.next_send_at = q.now();
                self.kick(q);
            }
            PacketKind::Ack | PacketKind::Nack if self.server.started && !self.server.done => {
                if let Some(ack) = pkt.ack {
                    self.on_feedback(q, ack);
                }
            }
            _ => {}
        }
    }

    fn mark_acked(&mut self, index: u64) -> Option<(u64, SimTime)> {
        let len = self.packet_len(index);
        let s = &mut self.server;
        let slot = &mut s.slots[index as usize];
        if slot.acked {
            return None;
        }
        slot.acked = true;
        s.acked_count += 1;
        if slot.in_flight {
            slot.in_flight = false;
            s.fw.on_removed(len);
        }
        Some((len, slot.last_tx))
    }

    fn queue_loss(&mut self, index: u64) {
        let len = self.packet_len(index);
        let s = &mut self.server;
        let slot = &mut s.slots[index as usize];
        slot.queued = true;
        if slot.in_flight {
            slot.in_flight = false;
            s.fw.on_removed(len);
        }
        s.retransmit.push_back(index);
    }

    fn on_feedback(&mut self, q: &mut EventQueue<Ev>, ack: AckInfo) {
        let now = q.now();
        self.server.consecutive_rtos = 0;

        let mut newly_bytes = 0;
        let mut earliest_tx: Option<SimTime> = None;
        let mut acked = |sim: &mut Self, i: u64| {
            if let Some((len, last_tx)) = sim.mark_acked(i) {
                newly_bytes += len;
                // the echo says which transmission of its packet arrived
                let tx = match ack.echo {
                    Some(echo) if echo.number == i => echo.sent_at,
                    _ => last_tx,
                };
                earliest_tx = Some(earliest_tx.map_or(tx, |t: SimTime| t.min(tx)));
            }
        };
        let cumulative = ack.cumulative.min(self.packets);
        for i in self.server.ack_cursor..cumulative {
            acked(self, i);
        }
        self.server.ack_cursor = self.server.ack_cursor.max(cumulative);
        for r in &ack.ranges {
            for i in r.start..r.end.min(self.packets) {
                acked(self, i);
            }
        }

        let s = &mut self.server;
        if let Some(echo) = ack.echo {
            // the link is FIFO, so every transmission older than the echoed
            // one has reached the receiver or been dropped
            let fresh = echo.sent_at > s.delivered_tx;
            s.delivered_tx = s.delivered_tx.max(echo.sent_at);
            // the timestamp names the transmission, so retransmissions
            // sample cleanly too; repeated echoes are not new samples
            if fresh {
                if let Some(sample) = (now - echo.sent_at).checked_sub(echo.delay) {
                    if sample > SimTime::ZERO {
                        let _ = s.est.update(sample);
                        let paced = echo.number >= u64::from(BURST_ALLOWANCE);
                        s.observe_delay(sample, echo.number == 0 || paced);
                    }
                }
            }
        }
        let progress = newly_bytes > 0;
        if progress {
            s.est.reset_backoff();
            s.cc.on_ack(newly_bytes);
            if let (Some(rto_at), Some(tx)) = (s.rto_at, earliest_tx) {
                s.rto_at = None;
                if tx >= rto_at {
                    s.cc.on_loss(LossKind::Timeout);
                    s.last_reduction = Some(now);
                    self.result.cc_loss_events += 1;
                }
            }
        }

        if self.server.acked_count == self.packets {
            self.server_done(q);
            return;
        }

        let srtt = self.server.est.srtt_or_default();
        let mut lost = false;
        for &i in &ack.missing {
            if i >= self.packets {
                continue;
            }
            let slot = self.server.slots[i as usize];
            if slot.acked || slot.queued || slot.tx_count == 0 {
                continue;
            }
            // a retransmission may still be on its way
            if slot.tx_count > 1 && slot.last_tx >= self.server.delivered_tx {
                continue;
            }
            self.queue_loss(i);
            lost = true;
        }
        let s = &mut self.server;
        if lost && s.last_reduction.is_none_or(|t| now - t >= srtt) {
            s.cc.on_loss(LossKind::FastRecovery);
            s.last_reduction = Some(now);
            self.result.cc_loss_events += 1;
        }
        if progress {
            self.arm_rto(q);
        }
        self.kick(q);
    }

    fn server_done(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        s.done = true;
        s.retransmit.clear();
        s.pending_fec.clear();
        for id in [s.tick.take(), s.rto_timer.take()].into_iter().flatten() {
            q.cancel(id);
        }
    }

    fn arm_rto(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        if let Some(id) = s.rto_timer.take() {
            q.cancel(id);
        }
        if !s.done {
            s.rto_timer = Some(q.schedule_in(s.est.backed_off_rto(), Ev::Rto));
        }
    }

    fn kick(&mut self, q: &mut EventQueue<Ev>) {
        let s = &mut self.server;
        if s.tick.is_none() && !s.done {
            let at = s.next_send_at.max(q.now());
            s.tick = Some(q.schedule(at, Ev::SendTick).expect("not in the past"));
        }
    }

    fn send_tick(&mut self, q: &mut EventQueue<Ev>) {
        if self.server.done {
            return;
        }
        let wire = if let Some(g) = self.server.pending_fec.pop_front() {
            self.send_parity(q, g)
        } else {
            while let Some(&i) = self.server.retransmit.front() {
                if self.server.slots[i as usize].acked {
                    self.server.slots[i as usize].queued = false;
                    self.server.retransmit.pop_front();
                } else {
                    break;
                }
            }
            let window = can_send(&self.server.cc, &self.server.fw);
            if let Some(&i) = self.server.retransmit.front() {
                if window < self.packet_len(i) {
                    return;
                }
                self.server.retransmit.pop_front();
                self.send_data(q, i, PacketKind::Data)
            } else if self.server.next_new < self.packets {
                let i = self.server.next_new;
                if window < self.packet_len(i) {
                    return;
                }
                self.server.next_new += 1;
                let wire = self.send_data(q, i, PacketKind::Data);
                if self.cfg.fec && ((i + 1).is_multiple_of(self.group) || i + 1 == self.packets) {
                    self.server.pending_fec.push_back(i / self.group);
                }
                wire
            } else {
                return;
            }
        };
        let s = &mut self.server;
        s.burst_left = s.burst_left.saturating_sub(1);
        let gap = if s.burst_left > 0 {
            SimTime::ZERO
        } else {
            pacing_gap(&s.cc, &s.est, wire)
        };
        s.next_send_at = q.now() + gap;
        self.kick(q);
    }

    fn send_data(&mut self, q: &mut EventQueue<Ev>, index: u64, kind: PacketKind) -> u32 {
        let now = q.now();
        let range = self.packet_range(index);
        let len = (range.end - range.start) as u64;
        let s = &mut self.server;
        let slot = &mut s.slots[index as usize];
        if slot.tx_count == 0 {
            slot.first_tx = now;
        }
        slot.tx_count += 1;
        slot.last_tx = now;
        slot.queued = false;
        if !slot.in_flight {
            slot.in_flight = true;
            s.fw.on_sent(len);
        }
        if slot.tx_count > 1 {
            self.result.retransmits += 1;
        }
        self.result.first_data_sent_at.get_or_insert(now);
        let mut pkt = Packet::new(0, Direction::Down, kind, UDP_HEADER_LEN);
        pkt.seq = range.start as u64;
        pkt.number = index;
        pkt.payload_len = len as u32;
        pkt.payload = self.file[range].to_vec();
        let wire = pkt.wire_size();
        let (cwnd, srtt) = (s.cc.cwnd(), s.est.srtt());
        if s.rto_timer.is_none() {
            s.rto_timer = Some(q.schedule_in(s.est.backed_off_rto(), Ev::Rto));
        }
        self.wire.send(q, pkt, cwnd, srtt, Ev::ToClient);
        wire
    }

    fn send_parity(&mut self, q: &mut EventQueue<Ev>, group: u64) -> u32 {
        let members = self.group_members(group);
        let payloads: Vec<(u64, &[u8])> = members.clone().map(|i| (i, &self.file[self.packet_range(i)])).collect();
        let fg = fec::encode(group, &payloads).expect("groups are never empty");
        let mut pkt = Packet::new(0, Direction::Down, PacketKind::Fec, UDP_HEADER_LEN);
        pkt.seq = members.start * self.mss;
        pkt.number = group;
        pkt.payload_len = fg.parity.len() as u32;
        pkt.payload = fg.parity;
        let wire = pkt.wire_size();
        let s = &self.server;
        self.wire.send(q, pkt, s.cc.cwnd(), s.est.srtt(), Ev::ToClient);
        wire
    }

    fn on_rto(&mut self, q: &mut EventQueue<Ev>) {
        if self.server.done {
            return;
        }
        let now = q.now();
        let s = &mut self.server;
        if s.consecutive_rtos >= MAX_BACKOFFS {
            self.abort(now, AbortReason::Timeouts);
            return;
        }
        s.consecutive_rtos += 1;
        s.est.on_timeout();
        s.rto_at.get_or_insert(now);
        self.result.timeouts += 1;
        let probe = (s.ack_cursor..s.next_new).find(|&i| {
            let slot = &s.slots[i as usize];
            !slot.acked && slot.tx_count > 0
        });
        if let Some(i) = probe {
            if self.server.slots[i as usize].queued {
                self.server.retransmit.retain(|&j| j != i);
            }
            self.send_data(q, i, PacketKind::Probe);
        }
        self.arm_rto(q);
        self.kick(q);
    }

    fn finish(mut self) -> Result<TransferResult, TransferError> {
        if self.client.complete && self.client.data != self.file {
            return Err(TransferError::Integrity);
        }
        self.result.final_bytes_in_flight = self.server.fw.bytes_in_flight();
        self.result.down = self.wire.stats(Direction::Down);
        self.result.up = self.wire.stats(Direction::Up);
        self.result.trace = self.wire.take_trace();
        Ok(self.result)
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

    fn down_sends(r: &TransferResult) -> Vec<&crate::transport::SendRecord> {
        r.trace.iter().filter(|s| s.direction == Direction::Down).collect()
    }

    #[test]
    fn single_packet_is_one_round_trip() {
        let cfg = TransferConfig::new(profile(100, 0.0, FAST), 1000, 1);
        let r = transfer(&cfg).unwrap();
        let p = &cfg.profile;
        let ser = p.serialization(Direction::Up, UDP_HEADER_LEN + REQUEST_LEN)
            + p.serialization(Direction::Down, UDP_HEADER_LEN + 1000);
        assert_eq!(r.completion(), Some(SimTime::from_millis(100) + ser));
    }

    #[test]
    fn lossless_runs_have_no_repairs() {
        for fec in [true, false] {
            for size in [1, 1200, 12_000, 12_001, 300_000] {
                let mut p = profile(100, 0.0, 2_200_000);
                p.queue_capacity = 16 << 20;
                let cfg = TransferConfig::new(p, size, 3).with_fec(fec);
                let r = transfer(&cfg).unwrap();
                assert!(r.completion().is_some(), "size {size}");
                assert_eq!((r.retransmits, r.fec_recoveries, r.timeouts), (0, 0, 0), "size {size}");
                assert_eq!(r.final_bytes_in_flight, 0);
            }
        }
    }

    #[test]
    fn parity_follows_each_group() {
        let cfg = TransferConfig::new(profile(100, 0.0, 2_200_000), 25 * 1200 + 5, 3).with_trace();
        let r = transfer(&cfg).unwrap();
        let kinds: Vec<(PacketKind, u64)> = down_sends(&r).iter().map(|s| (s.kind, s.number)).collect();
        let fec_at: Vec<usize> = kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| k.0 == PacketKind::Fec)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(fec_at, vec![10, 21, 28]);
        assert_eq!(kinds[28], (PacketKind::Fec, 2));
        let parity = r
            .trace
            .iter()
            .filter(|s| s.kind == PacketKind::Fec)
            .map(|s| s.wire)
            .collect::<Vec<_>>();
        assert_eq!(parity, vec![1236, 1236, 1236]);
    }

    #[test]
    fn single_loss_in_group_needs_no_retransmission() {
        let size = 40 * 1200;
        let clean = transfer(&TransferConfig::new(profile(100, 0.0, 2_200_000), size, 3)).unwrap();
        for ordinal in [0, 4, 9, 13, 30] {
            let cfg = TransferConfig::new(profile(100, 0.0, 2_200_000), size, 3).with_drop(Direction::Down, ordinal);
            let r = transfer(&cfg).unwrap();
            assert_eq!(r.retransmits, 0, "drop {ordinal}");
            assert_eq!(r.fec_recoveries, 1);
            assert_eq!(r.cc_loss_events, 0);
            assert!(r.completion().unwrap() < clean.completion().unwrap() + SimTime::from_millis(20));
        }
    }

    #[test]
    fn double_loss_falls_back_to_nack() {
        let cfg = TransferConfig::new(profile(100, 0.0, 2_200_000), 40 * 1200, 3)
            .with_drop(Direction::Down, 2)
            .with_drop(Direction::Down, 3);
        let r = transfer(&cfg).unwrap();
        assert!(r.completion().is_some());
        assert_eq!(r.retransmits, 2);
        assert_eq!(r.cc_loss_events, 1);
    }

    #[test]
    fn without_fec_every_loss_is_retransmitted() {
        let cfg = TransferConfig::new(profile(100, 0.0, 2_200_000), 40 * 1200, 3)
            .with_fec(false)
            .with_drop(Direction::Down, 5);
        let r = transfer(&cfg).unwrap();
        assert_eq!((r.retransmits, r.fec_recoveries), (1, 0));
        assert!(r.completion().is_some());
    }

    #[test]
    fn sends_respect_pacing() {
        let cfg = TransferConfig::new(profile(100, 1.0, 2_200_000), 500 * 1024, 11).with_trace();
        let r = transfer(&cfg).unwrap();
        let paced: Vec<_> = down_sends(&r)
            .into_iter()
            .filter(|s| s.kind != PacketKind::Probe)
            .collect();
        let burst = paced.iter().take_while(|s| s.at == paced[0].at).count();
        assert_eq!(burst, BURST_ALLOWANCE as usize);
        let mtu = cfg.profile.mtu;
        for w in paced.windows(2).skip(BURST_ALLOWANCE as usize - 1) {
            let cc = CongestionController::with_state(mtu, cfg.cwnd_cap, w[0].cwnd, cfg.cwnd_cap);
            let mut est = RttEstimator::default();
            if w[0].srtt > SimTime::ZERO {
                est.update(w[0].srtt).unwrap();
            }
            assert!(w[1].at - w[0].at >= pacing_gap(&cc, &est, w[0].wire), "{:?}", w);
        }
    }

    #[test]
    fn lossy_transfers_complete_intact() {
        for seed in 0..6 {
            let cfg = TransferConfig::new(profile(900, 2.5, 200_000), 250 * 1024, seed);
            let r = transfer(&cfg).unwrap();
            assert!(r.completion().is_some(), "seed {seed}");
            assert_eq!(r.final_bytes_in_flight, 0);
            assert!(r.fec_recoveries > 0);
        }
    }

    #[test]
    fn total_loss_aborts() {
        let cfg = TransferConfig::new(profile(100, 100.0, 2_200_000), 10_000, 1);
        let r = transfer(&cfg).unwrap();
        assert!(matches!(
            r.outcome,
            Outcome::Aborted {
                reason: AbortReason::RequestRetries,
                ..
            }
        ));
    }

    #[test]
    fn file_contents_are_seeded() {
        assert_eq!(file_contents(1, 100), file_contents(1, 100));
        assert_ne!(file_contents(1, 100), file_contents(2, 100));
        assert_eq!(file_contents(1, 13).len(), 13);
    }

    #[test]
    fn deterministic() {
        let cfg = TransferConfig::new(profile(250, 0.7, 2_000_000), 300 * 1024, 5);
        assert_eq!(transfer(&cfg).unwrap(), transfer(&cfg).unwrap());
    }
}
