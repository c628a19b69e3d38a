use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use super::{ScenarioSpec, SpecError, DEFAULT_REPS};
use crate::simclock::{fnv1a64, mix64, SimTime};
use crate::transport::{Protocol, TransferConfig, TransferError};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub protocols: Vec<Protocol>,
    /// smUDP parity on or off.
    pub fec: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            protocols: Protocol::ALL.to_vec(),
            fec: true,
        }
    }
}

/// Repetitions of one protocol at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub scenario: String,
    pub protocol: Protocol,
    pub sweep_param: &'static str,
    pub sweep_value: f64,
    pub file_size: u64,
    /// Completion time per repetition; `None` marks a failed transfer.
    pub rep_times: Vec<Option<SimTime>>,
    pub retransmits: u64,
    pub timeouts: u64,
}

impl BenchRecord {
    pub fn failures(&self) -> usize {
        self.rep_times.iter().filter(|t| t.is_none()).count()
    }

    /// Mean over the successful repetitions, in milliseconds.
    pub fn mean_ms(&self) -> Option<f64> {
        let ok: Vec<u64> = self.rep_times.iter().flatten().map(|t| t.as_micros()).collect();
        if ok.is_empty() {
            return None;
        }
        Some(ok.iter().sum::<u64>() as f64 / ok.len() as f64 / 1000.0)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario {name}: {source}")]
    Spec { name: String, source: SpecError },
    #[error("{scenario} {protocol} at {param}={value}: {source}")]
    Transfer {
        scenario: String,
        protocol: Protocol,
        param: &'static str,
        value: f64,
        source: TransferError,
    },
}

/// Seed of one repetition: the FNV-1a hash of
/// `"{seed_base}/{protocol}/{param}={value}/{rep}"` through the SplitMix64
/// finalizer. `rep` counts from 1.
pub fn cell_seed(seed_base: u64, protocol: Protocol, param: &str, value: f64, rep: u32) -> u64 {
    let key = format!("{seed_base}/{protocol}/{param}={value}/{rep}");
    mix64(fnv1a64(key.as_bytes()))
}

/// Run every protocol, sweep point and repetition of `spec`. Simulations
/// run in parallel; the result does not depend on the thread count.
pub fn run_scenario(spec: &ScenarioSpec, opts: &RunOptions) -> Result<Vec<BenchRecord>, BenchError> {
    spec.validate().map_err(|source| BenchError::Spec {
        name: spec.name.clone(),
        source,
    })?;
    let cells = spec.cells();
    let param = spec.sweep.param();
    let reps = spec.repetitions;
    let jobs: Vec<(usize, usize, u32)> = (0..opts.protocols.len())
        .flat_map(|p| (0..cells.len()).flat_map(move |c| (1..=reps).map(move |r| (p, c, r))))
        .collect();
    let outcomes: Vec<_> = jobs
        .par_iter()
        .map(|&(p, c, rep)| {
            let protocol = opts.protocols[p];
            let cell = &cells[c];
            let seed = cell_seed(spec.seed_base, protocol, param, cell.value, rep);
            let mut cfg = TransferConfig::new(cell.profile.clone(), cell.file_size, seed).with_fec(opts.fec);
            cfg.cwnd_cap = spec.cwnd_cap;
            cfg.recv_window = spec.recv_window;
            protocol.run(&cfg).map_err(|source| BenchError::Transfer {
                scenario: spec.name.clone(),
                protocol,
                param,
                value: cell.value,
                source,
            })
        })
        .collect();

    let mut records: Vec<BenchRecord> = Vec::with_capacity(opts.protocols.len() * cells.len());
    let mut outcomes = outcomes.into_iter();
    for &protocol in &opts.protocols {
        for cell in &cells {
            let mut rec = BenchRecord {
                scenario: spec.name.clone(),
                protocol,
                sweep_param: param,
                sweep_value: cell.value,
                file_size: cell.file_size,
                rep_times: Vec::with_capacity(reps as usize),
                retransmits: 0,
                timeouts: 0,
            };
            for _ in 0..reps {
                let r = outcomes.next().expect("one outcome per job")?;
                rec.rep_times.push(r.completion());
                rec.retransmits += r.retransmits;
                rec.timeouts += r.timeouts;
            }
            records.push(rec);
        }
    }
    Ok(records)
}

fn fmt_ms(t: SimTime) -> String {
    let us = t.as_micros();
    format!("{}.{:03}", us / 1000, us % 1000)
}

/// CSV text, one row per record, sorted by scenario, sweep value and
/// protocol name. Failed repetitions print as `fail` and are left out of
/// the mean.
pub fn emit_csv(records: &[BenchRecord]) -> String {
    let reps = records
        .iter()
        .map(|r| r.rep_times.len())
        .max()
        .unwrap_or(DEFAULT_REPS as usize);
    let mut out = String::from("scenario,protocol,sweep_param,sweep_value,file_size_bytes,mean_ms");
    for i in 1..=reps {
        let _ = write!(out, ",rep{i}_ms");
    }
    out.push_str(",failures\n");

    let mut sorted: Vec<&BenchRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.sweep_value.total_cmp(&b.sweep_value))
            .then(a.protocol.name().cmp(b.protocol.name()))
    });
    for r in sorted {
        let mean = r.mean_ms().map_or_else(|| "fail".to_owned(), |m| format!("{m:.3}"));
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.scenario, r.protocol, r.sweep_param, r.sweep_value, r.file_size, mean
        );
        for i in 0..reps {
            out.push(',');
            match r.rep_times.get(i) {
                Some(Some(t)) => out.push_str(&fmt_ms(*t)),
                Some(None) => out.push_str("fail"),
                None => {}
            }
        }
        let _ = writeln!(out, ",{}", r.failures());
    }
    out
}
