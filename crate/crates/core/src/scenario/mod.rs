//! Scenario catalog: a base link profile, one swept parameter, the file
//! size and repetition count. The seven built-ins cover four access
//! networks (file-size sweeps) and three single-parameter sweeps.

mod bench;
mod file;

use std::fmt;

use thiserror::Error;

use crate::linknet::{ImpairmentProfile, ProfileError};
use crate::simclock::SimTime;
use crate::transport::MIB;

pub use bench::{cell_seed, emit_csv, run_scenario, BenchError, BenchRecord, RunOptions};
pub use file::{emit_scenario, parse_scenario, ParseError};

pub const KIB: u64 = 1024;
pub const DEFAULT_REPS: u32 = 5;
pub const DEFAULT_SEED: u64 = 42;
/// Names of the built-in scenarios, in catalog order.
pub const BUILTIN_NAMES: [&str; 7] = ["wifi", "lte", "3g", "2g", "rtt", "loss", "bandwidth"];

/// The one parameter a scenario varies, with its values.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// File sizes in bytes.
    FileSize(Vec<u64>),
    Rtt(Vec<SimTime>),
    /// Loss percentages.
    Loss(Vec<f64>),
    /// Downlink rates in bits per second.
    Bandwidth(Vec<u64>),
}

impl Sweep {
    /// Column label used in CSV output and seed derivation.
    pub fn param(&self) -> &'static str {
        match self {
            Sweep::FileSize(_) => "file_size_kib",
            Sweep::Rtt(_) => "rtt_ms",
            Sweep::Loss(_) => "loss_pct",
            Sweep::Bandwidth(_) => "bandwidth_mbit",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::FileSize(v) => v.len(),
            Sweep::Rtt(v) => v.len(),
            Sweep::Loss(v) => v.len(),
            Sweep::Bandwidth(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th value in the sweep's CSV unit.
    pub fn value(&self, i: usize) -> f64 {
        match self {
            Sweep::FileSize(v) => v[i] as f64 / KIB as f64,
            Sweep::Rtt(v) => v[i].as_millis_f64(),
            Sweep::Loss(v) => v[i],
            Sweep::Bandwidth(v) => v[i] as f64 / 1e6,
        }
    }
}

/// One benchmark scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    /// Base link parameters; the swept one is overridden per cell.
    pub profile: ImpairmentProfile,
    pub cwnd_cap: u64,
    pub recv_window: u64,
    pub sweep: Sweep,
    /// Transfer size for the sweeps that do not vary it.
    pub file_size: Option<u64>,
    pub repetitions: u32,
    pub seed_base: u64,
}

/// Link profile and transfer size of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub value: f64,
    pub profile: ImpairmentProfile,
    pub file_size: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("scenario name must be a non-empty word of letters, digits, '-' or '_'")]
    Name,
    #[error("sweep has no values")]
    EmptySweep,
    #[error("sweep values must be positive")]
    NonPositive,
    #[error("a {0} sweep needs a file size")]
    MissingFileSize(&'static str),
    #[error("repetitions must be positive")]
    Repetitions,
    #[error("windows must hold at least one packet")]
    Window,
    #[error("sweep point {index}: {source}")]
    Profile { index: usize, source: ProfileError },
}

impl ScenarioSpec {
    fn access(name: &str, rtt_ms: u64, loss: f64, bw: u64) -> Self {
        let sizes = [50, 100, 250, 500, 1000].iter().map(|k| k * KIB).collect();
        Self::with_sweep(name, rtt_ms, loss, bw, Sweep::FileSize(sizes), None)
    }

    fn with_sweep(name: &str, rtt_ms: u64, loss: f64, bw: u64, sweep: Sweep, size: Option<u64>) -> Self {
        ScenarioSpec {
            name: name.to_owned(),
            profile: ImpairmentProfile::new(SimTime::from_millis(rtt_ms), loss, bw),
            cwnd_cap: MIB,
            recv_window: MIB,
            sweep,
            file_size: size,
            repetitions: DEFAULT_REPS,
            seed_base: DEFAULT_SEED,
        }
    }

    /// A built-in scenario by name.
    pub fn builtin(name: &str) -> Option<Self> {
        let spec = match name {
            "wifi" => Self::access("wifi", 110, 0.5, 2_200_000),
            "lte" => Self::access("lte", 250, 0.7, 2_000_000),
            "3g" => Self::access("3g", 550, 0.5, 1_000_000),
            "2g" => Self::access("2g", 900, 2.5, 200_000),
            "rtt" => {
                let rtts = [10, 50, 100, 250, 500, 750, 1000].map(SimTime::from_millis).to_vec();
                Self::with_sweep("rtt", 100, 0.5, 2_200_000, Sweep::Rtt(rtts), Some(250 * KIB))
            }
            "loss" => {
                let losses = vec![0.5, 1.0, 1.5, 2.0, 2.5];
                Self::with_sweep("loss", 100, 0.5, 2_200_000, Sweep::Loss(losses), Some(250 * KIB))
            }
            "bandwidth" => {
                let rates = vec![200_000, 600_000, 1_000_000, 1_400_000, 1_800_000, 2_200_000];
                Self::with_sweep(
                    "bandwidth",
                    100,
                    0.5,
                    2_200_000,
                    Sweep::Bandwidth(rates),
                    Some(4096 * KIB),
                )
            }
            _ => return None,
        };
        Some(spec)
    }

    pub fn all_builtins() -> Vec<Self> {
        BUILTIN_NAMES
            .iter()
            .map(|n| Self::builtin(n).expect("listed"))
            .collect()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed_base = seed;
        self
    }

    pub fn with_reps(mut self, reps: u32) -> Self {
        self.repetitions = reps;
        self
    }

    /// Every sweep point with its concrete profile.
    pub fn cells(&self) -> Vec<Cell> {
        (0..self.sweep.len())
            .map(|i| {
                let mut profile = self.profile.clone();
                let mut file_size = self.file_size.unwrap_or(0);
                match &self.sweep {
                    Sweep::FileSize(v) => file_size = v[i],
                    Sweep::Rtt(v) => profile.rtt = v[i],
                    Sweep::Loss(v) => profile.loss_pct = v[i],
                    Sweep::Bandwidth(v) => profile.bandwidth_down = v[i],
                }
                Cell {
                    index: i,
                    value: self.sweep.value(i),
                    profile,
                    file_size,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let word = |c: char| c.is_ascii_alphanumeric() || c == '-' || c == '_';
        if self.name.is_empty() || !self.name.chars().all(word) {
            return Err(SpecError::Name);
        }
        if self.sweep.is_empty() {
            return Err(SpecError::EmptySweep);
        }
        let positive = match &self.sweep {
            Sweep::FileSize(v) => v.iter().all(|&x| x > 0),
            Sweep::Rtt(v) => v.iter().all(|&x| x > SimTime::ZERO),
            Sweep::Loss(v) => v.iter().all(|&x| x > 0.0),
            Sweep::Bandwidth(v) => v.iter().all(|&x| x > 0),
        };
        if !positive {
            return Err(SpecError::NonPositive);
        }
        if !matches!(self.sweep, Sweep::FileSize(_)) && self.file_size.is_none_or(|s| s == 0) {
            return Err(SpecError::MissingFileSize(self.sweep.param()));
        }
        if self.repetitions == 0 {
            return Err(SpecError::Repetitions);
        }
        let mtu = u64::from(self.profile.mtu);
        if self.cwnd_cap < mtu || self.recv_window < mtu {
            return Err(SpecError::Window);
        }
        for cell in self.cells() {
            cell.profile.validate().map_err(|source| SpecError::Profile {
                index: cell.index,
                source,
            })?;
        }
        Ok(())
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_scenario(self))
    }
}
