//! The acceptance suite behind `netlab check` and the `acceptance`
//! integration test. Benchmark-level criteria read one full matrix run,
//! computed once per [`Suite`].

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use crate::linknet::{
    Direction, ImpairmentProfile, Link, Packet, PacketKind, Transmit, TCP_HEADER_LEN, UDP_HEADER_LEN,
};
use crate::scenario::{emit_csv, run_scenario, BenchError, BenchRecord, RunOptions, ScenarioSpec, KIB};
use crate::simclock::{RngStream, SimTime};
use crate::smudp::fec::{self, Decoded};
use crate::transport::{Protocol, RttEstimator, TransferConfig, REQUEST_LEN};

/// Hand-worked RTO recurrence: `sample_ms srtt_us rttvar_us rto_us`.
pub const RTO_ORACLE: &str = include_str!("../data/rto_oracle.txt");

const ACCESS_PROFILES: [&str; 4] = ["wifi", "lte", "3g", "2g"];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        CheckOutcome { name, pass, detail }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<18} {}", self.name, self.detail)
    }
}

/// Records and CSV text of every built-in scenario, keyed by name.
#[derive(Debug, Clone)]
pub struct Matrix {
    pub records: BTreeMap<String, Vec<BenchRecord>>,
    pub csv: BTreeMap<String, String>,
}

impl Matrix {
    pub fn run(seed: u64, opts: &RunOptions) -> Result<Self, BenchError> {
        let mut records = BTreeMap::new();
        let mut csv = BTreeMap::new();
        for spec in ScenarioSpec::all_builtins() {
            let spec = spec.with_seed(seed);
            let recs = run_scenario(&spec, opts)?;
            csv.insert(spec.name.clone(), emit_csv(&recs));
            records.insert(spec.name, recs);
        }
        Ok(Matrix { records, csv })
    }

    pub fn record(&self, scenario: &str, protocol: Protocol, value: f64) -> Option<&BenchRecord> {
        self.records
            .get(scenario)?
            .iter()
            .find(|r| r.protocol == protocol && r.sweep_value == value)
    }

    /// The mean in ms, or `None` if any repetition failed.
    pub fn mean(&self, scenario: &str, protocol: Protocol, value: f64) -> Option<f64> {
        let r = self.record(scenario, protocol, value)?;
        if r.failures() > 0 {
            return None;
        }
        r.mean_ms()
    }

    fn values(&self, scenario: &str) -> Vec<f64> {
        let mut v: Vec<f64> = self.records[scenario].iter().map(|r| r.sweep_value).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

fn fmt_mean(m: Option<f64>) -> String {
    m.map_or_else(|| "fail".to_owned(), |m| format!("{m:.0}"))
}

/// Least-squares line through `points`: `(slope, intercept, r_squared)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    (slope, intercept, r2)
}

pub struct Suite {
    seed: u64,
    matrix: OnceLock<Result<Matrix, String>>,
}

impl Suite {
    pub fn new(seed: u64) -> Self {
        Suite {
            seed,
            matrix: OnceLock::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> Result<&Matrix, String> {
        self.matrix
            .get_or_init(|| Matrix::run(self.seed, &RunOptions::default()).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn with_matrix(&self, name: &'static str, f: impl FnOnce(&Matrix) -> CheckOutcome) -> CheckOutcome {
        match self.matrix() {
            Ok(m) => f(m),
            Err(e) => CheckOutcome::new(name, false, format!("matrix run failed: {e}")),
        }
    }

    pub fn run_all(&self) -> Vec<CheckOutcome> {
        vec![
            self.protocol_ordering(),
            self.loss_sensitivity(),
            zero_rtt(),
            self.rtt_scaling(),
            self.bandwidth_floor(),
            self.bandwidth_plateau(),
            link_units(),
            rto_oracle(),
            fec_oracle(),
            self.determinism(),
        ]
    }

    /// smUDP < QUIC < TCP on the mean, for every access profile and every
    /// file size of at least 250 KiB.
    pub fn protocol_ordering(&self) -> CheckOutcome {
        const NAME: &str = "protocol-ordering";
        self.with_matrix(NAME, |m| {
            let mut bad = Vec::new();
            let mut cells = 0;
            for scenario in ACCESS_PROFILES {
                for kib in m.values(scenario).into_iter().filter(|&k| k >= 250.0) {
                    cells += 1;
                    let [s, q, t] = [Protocol::Smudp, Protocol::Quic, Protocol::Tcp].map(|p| m.mean(scenario, p, kib));
                    let ordered = matches!((s, q, t), (Some(s), Some(q), Some(t)) if s < q && q < t);
                    if !ordered {
                        bad.push(format!(
                            "{scenario}/{kib}KiB smudp {} quic {} tcp {}",
                            fmt_mean(s),
                            fmt_mean(q),
                            fmt_mean(t)
                        ));
                    }
                }
            }
            let detail = if bad.is_empty() {
                format!("{cells}/{cells} cells ordered smudp < quic < tcp")
            } else {
                format!(
                    "{}/{cells} cells ordered; out of order: {}",
                    cells - bad.len(),
                    bad.join("; ")
                )
            };
            CheckOutcome::new(NAME, bad.is_empty(), detail)
        })
    }

    /// completion(2.5%) / completion(0.5%): TCP at least 1.8, QUIC and
    /// smUDP at most 1.5.
    pub fn loss_sensitivity(&self) -> CheckOutcome {
        const NAME: &str = "loss-sensitivity";
        self.with_matrix(NAME, |m| {
            let mut pass = true;
            let mut parts = Vec::new();
            for (p, ok) in [
                (Protocol::Tcp, (|r: f64| r >= 1.8) as fn(f64) -> bool),
                (Protocol::Quic, |r| r <= 1.5),
                (Protocol::Smudp, |r| r <= 1.5),
            ] {
                let ratio = match (m.mean("loss", p, 2.5), m.mean("loss", p, 0.5)) {
                    (Some(hi), Some(lo)) => Some(hi / lo),
                    _ => None,
                };
                let good = ratio.is_some_and(ok);
                pass &= good;
                let bound = if p == Protocol::Tcp { ">= 1.8" } else { "<= 1.5" };
                let shown = ratio.map_or_else(|| "fail".to_owned(), |r| format!("{r:.3}"));
                parts.push(format!("{p} {shown} (need {bound})"));
            }
            CheckOutcome::new(NAME, pass, parts.join(", "))
        })
    }

    /// Linear fit of mean completion against RTT: R^2 >= 0.95 for every
    /// protocol and a steeper TCP slope than smUDP's.
    pub fn rtt_scaling(&self) -> CheckOutcome {
        const NAME: &str = "rtt-scaling";
        self.with_matrix(NAME, |m| {
            let mut pass = true;
            let mut parts = Vec::new();
            let mut slopes = BTreeMap::new();
            for p in Protocol::ALL {
                let points: Option<Vec<(f64, f64)>> = m
                    .values("rtt")
                    .into_iter()
                    .map(|v| m.mean("rtt", p, v).map(|t| (v, t)))
                    .collect();
                let Some(points) = points else {
                    pass = false;
                    parts.push(format!("{p} has failed runs"));
                    continue;
                };
                let (slope, _, r2) = linear_fit(&points);
                pass &= r2 >= 0.95;
                slopes.insert(p, slope);
                parts.push(format!("{p} R2 {r2:.4} slope {slope:.3}"));
            }
            let steeper =
                matches!((slopes.get(&Protocol::Tcp), slopes.get(&Protocol::Smudp)), (Some(t), Some(s)) if t > s);
            pass &= steeper;
            parts.push(format!("tcp slope {} smudp", if steeper { ">" } else { "<=" }));
            CheckOutcome::new(NAME, pass, parts.join(", "))
        })
    }

    /// At 0.2 Mbit/s with 4 MiB all three finish within 10% of each other
    /// and none beats the serialization floor.
    pub fn bandwidth_floor(&self) -> CheckOutcome {
        const NAME: &str = "bandwidth-floor";
        self.with_matrix(NAME, |m| {
            let floor_ms = (4096 * KIB * 8) as f64 / 200_000.0 * 1000.0;
            let means: Option<Vec<f64>> = Protocol::ALL.iter().map(|&p| m.mean("bandwidth", p, 0.2)).collect();
            let Some(means) = means else {
                return CheckOutcome::new(NAME, false, "failed runs at 0.2 Mbit/s".into());
            };
            let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = means.iter().copied().fold(0.0, f64::max);
            let spread = (hi - lo) / lo;
            let pass = spread <= 0.10 && lo >= floor_ms;
            let shown: Vec<String> = Protocol::ALL
                .iter()
                .zip(&means)
                .map(|(p, t)| format!("{p} {t:.0}"))
                .collect();
            let detail = format!(
                "{} ms, spread {:.2}% (need <= 10%), floor {floor_ms:.0} ms",
                shown.join(" "),
                spread * 100.0
            );
            CheckOutcome::new(NAME, pass, detail)
        })
    }

    /// Between 1.4 and 2.2 Mbit/s TCP moves by under 15% while smUDP
    /// speeds up by over 20%.
    pub fn bandwidth_plateau(&self) -> CheckOutcome {
        const NAME: &str = "bandwidth-plateau";
        self.with_matrix(NAME, |m| {
            let change = |p| match (m.mean("bandwidth", p, 1.4), m.mean("bandwidth", p, 2.2)) {
                (Some(a), Some(b)) => Some((b - a) / a),
                _ => None,
            };
            let (tcp, smudp) = (change(Protocol::Tcp), change(Protocol::Smudp));
            let pass = tcp.is_some_and(|c| c.abs() < 0.15) && smudp.is_some_and(|c| c < -0.20);
            let pct = |c: Option<f64>| c.map_or_else(|| "fail".to_owned(), |c| format!("{:+.1}%", c * 100.0));
            let detail = format!(
                "tcp {} (need |change| < 15%), smudp {} (need < -20%)",
                pct(tcp),
                pct(smudp)
            );
            CheckOutcome::new(NAME, pass, detail)
        })
    }

    /// A second full matrix run gives byte-identical CSV text.
    pub fn determinism(&self) -> CheckOutcome {
        const NAME: &str = "determinism";
        self.with_matrix(NAME, |first| match Matrix::run(self.seed, &RunOptions::default()) {
            Ok(second) => {
                let same = first.csv == second.csv;
                let bytes: usize = first.csv.values().map(String::len).sum();
                let detail = format!(
                    "seed {}: {} CSVs, {bytes} bytes, {}",
                    self.seed,
                    first.csv.len(),
                    if same { "identical" } else { "differ" }
                );
                CheckOutcome::new(NAME, same, detail)
            }
            Err(e) => CheckOutcome::new(NAME, false, format!("second run failed: {e}")),
        })
    }
}

/// Lossless single-packet transfers finish after exactly two round trips
/// (TCP) or one (QUIC, smUDP) plus the serialization of every leg.
pub fn zero_rtt() -> CheckOutcome {
    const NAME: &str = "zero-rtt";
    let mut bad = Vec::new();
    let mut runs = 0;
    for rtt_ms in [10, 100, 1000] {
        for bw in [200_000, 2_200_000] {
            let profile = ImpairmentProfile::new(SimTime::from_millis(rtt_ms), 0.0, bw);
            let payload = profile.mtu;
            let rtt = profile.rtt;
            let up = |bytes| profile.serialization(Direction::Up, bytes);
            let down = |bytes| profile.serialization(Direction::Down, bytes);
            let tcp = rtt * 2
                + up(TCP_HEADER_LEN)
                + down(TCP_HEADER_LEN)
                + up(TCP_HEADER_LEN + REQUEST_LEN)
                + down(TCP_HEADER_LEN + payload);
            let udp = rtt + up(UDP_HEADER_LEN + REQUEST_LEN) + down(UDP_HEADER_LEN + payload);
            for (p, expect) in [(Protocol::Tcp, tcp), (Protocol::Quic, udp), (Protocol::Smudp, udp)] {
                runs += 1;
                let cfg = TransferConfig::new(profile.clone(), u64::from(payload), 1);
                let got = p.run(&cfg).ok().and_then(|r| r.completion());
                if got != Some(expect) {
                    bad.push(format!("{p} rtt {rtt_ms} ms bw {bw}: got {got:?}, want {expect:?}"));
                }
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{runs}/{runs} exact (tcp 2 RTT, quic and smudp 1 RTT, plus serialization)")
    } else {
        bad.join("; ")
    };
    CheckOutcome::new(NAME, bad.is_empty(), detail)
}

/// Empirical loss within 0.2 points of the setting over 10^5 packets,
/// shaped throughput at most 1.001 times the rate, exact empty-queue delay.
pub fn link_units() -> CheckOutcome {
    const NAME: &str = "link-units";
    const N: u64 = 100_000;
    let mut parts = Vec::new();
    let mut pass = true;

    let packet = |direction| {
        let mut p = Packet::new(0, direction, PacketKind::Data, UDP_HEADER_LEN);
        p.payload_len = 1200;
        p
    };
    let mut worst: f64 = 0.0;
    for loss in [0.5, 2.5, 10.0] {
        let mut profile = ImpairmentProfile::new(SimTime::from_millis(100), loss, 2_200_000);
        profile.queue_capacity = u64::MAX;
        let mut link = Link::new(profile, 7).expect("valid profile");
        for dir in [Direction::Down, Direction::Up] {
            for _ in 0..N {
                link.transmit(&packet(dir), SimTime::ZERO);
            }
            let stats = link.loss_stats(dir);
            let dev = (stats.loss_rate_pct() - loss).abs();
            worst = worst.max(dev);
            pass &= dev <= 0.2 && stats.is_consistent();
        }
    }
    parts.push(format!("loss deviation {worst:.3} pp (need <= 0.2)"));

    let mut profile = ImpairmentProfile::new(SimTime::from_millis(100), 0.0, 1_000_000);
    profile.queue_capacity = u64::MAX;
    let mut link = Link::new(profile.clone(), 1).expect("valid profile");
    let mut last = SimTime::ZERO;
    let mut bits = 0u64;
    for _ in 0..10_000 {
        let pkt = packet(Direction::Down);
        bits += u64::from(pkt.wire_size()) * 8;
        if let Transmit::Delivered { arrives_at } = link.transmit(&pkt, SimTime::ZERO) {
            last = arrives_at;
        }
    }
    let busy = (last - profile.propagation(Direction::Down)).as_secs_f64();
    let ratio = bits as f64 / busy / profile.bandwidth_down as f64;
    pass &= ratio <= 1.001;
    parts.push(format!("throughput {ratio:.5} of rate"));

    let mut exact = true;
    for (rtt_us, bw) in [(100_000, 1_000_000), (110_001, 2_200_000), (900_000, 200_000)] {
        let profile = ImpairmentProfile::new(SimTime::from_micros(rtt_us), 0.0, bw);
        for dir in [Direction::Down, Direction::Up] {
            let mut link = Link::new(profile.clone(), 3).expect("valid profile");
            let pkt = packet(dir);
            let sent = SimTime::from_millis(5);
            let want = sent + profile.propagation(dir) + profile.serialization(dir, pkt.wire_size());
            exact &= link.transmit(&pkt, sent) == Transmit::Delivered { arrives_at: want };
        }
    }
    pass &= exact;
    parts.push(format!(
        "empty-queue delay {}",
        if exact { "exact" } else { "mismatch" }
    ));
    CheckOutcome::new(NAME, pass, parts.join(", "))
}

/// Oracle rows as `(sample, srtt, rttvar, rto)`.
pub fn rto_oracle_rows() -> Vec<(SimTime, SimTime, SimTime, SimTime)> {
    RTO_ORACLE
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let v: Vec<u64> = l
                .split_whitespace()
                .map(|x| x.parse().expect("numeric oracle row"))
                .collect();
            let us = SimTime::from_micros;
            (SimTime::from_millis(v[0]), us(v[1]), us(v[2]), us(v[3]))
        })
        .collect()
}

pub fn rto_oracle() -> CheckOutcome {
    const NAME: &str = "rto-oracle";
    let rows = rto_oracle_rows();
    let mut est = RttEstimator::default();
    let mut bad = Vec::new();
    for (i, (sample, srtt, rttvar, rto)) in rows.iter().enumerate() {
        let _ = est.update(*sample);
        let got = (est.srtt(), est.rttvar(), est.rto());
        if got != (*srtt, *rttvar, *rto) {
            bad.push(format!("row {}: got {got:?}", i + 1));
        }
    }
    let pass = bad.is_empty() && rows.len() == 4;
    let detail = if pass {
        format!("{} rows exact", rows.len())
    } else {
        format!("{} rows; {}", rows.len(), bad.join("; "))
    };
    CheckOutcome::new(NAME, pass, detail)
}

/// Every single-drop position of every group size 1 to 10 decodes
/// byte-exactly.
pub fn fec_oracle() -> CheckOutcome {
    const NAME: &str = "fec-oracle";
    let mut rng = RngStream::new(11, "acceptance.fec");
    let mut cases = 0;
    let mut bad = Vec::new();
    for size in 1..=10usize {
        for last_len in [1200usize, 777, 1] {
            let payloads: Vec<Vec<u8>> = (0..size)
                .map(|i| {
                    let len = if i + 1 == size { last_len } else { 1200 };
                    (0..len).map(|_| rng.next_u64() as u8).collect()
                })
                .collect();
            let members: Vec<(u64, &[u8])> = payloads
                .iter()
                .enumerate()
                .map(|(i, p)| (i as u64, p.as_slice()))
                .collect();
            let group = fec::encode(0, &members).expect("non-empty group");
            for (drop, lost) in payloads.iter().enumerate() {
                cases += 1;
                let received: Vec<(u64, &[u8])> = members.iter().copied().filter(|(i, _)| *i != drop as u64).collect();
                let got = fec::decode(&group, &received, Some(lost.len()));
                let want = Decoded::Recovered {
                    index: drop as u64,
                    payload: lost.clone(),
                };
                if got != Ok(want) {
                    bad.push(format!("size {size} drop {drop} last {last_len}"));
                }
            }
        }
    }
    let detail = if bad.is_empty() {
        format!("{cases}/{cases} single drops rebuilt exactly")
    } else {
        format!("{} of {cases} wrong: {}", bad.len(), bad.join("; "))
    };
    CheckOutcome::new(NAME, bad.is_empty(), detail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_a_line_is_exact() {
        let (slope, intercept, r2) = linear_fit(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        assert!((slope - 2.0).abs() < 1e-12 && (intercept - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        let (_, _, r2) = linear_fit(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)]);
        assert!(r2 < 0.1);
    }

    #[test]
    fn oracle_file_has_four_rows() {
        let rows = rto_oracle_rows();
        assert_eq!(rows.len(), 4);
        assert_eq!(
            rows[0],
            (
                SimTime::from_millis(100),
                SimTime::from_millis(100),
                SimTime::from_millis(50),
                SimTime::from_millis(300)
            )
        );
    }

    #[test]
    fn standalone_checks_pass() {
        for c in [zero_rtt(), link_units(), rto_oracle(), fec_oracle()] {
            assert!(c.pass, "{c}");
        }
    }
}
