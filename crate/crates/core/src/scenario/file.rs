//! Plain-text scenario files: one `key = value` per line, `#` comments,
//! units written after the number (`rtt = 110ms`, `bandwidth = 2.2Mbit`).

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{ScenarioSpec, SpecError, Sweep, DEFAULT_REPS, DEFAULT_SEED, KIB};
use crate::linknet::{ImpairmentProfile, DEFAULT_MTU, DEFAULT_QUEUE_CAPACITY, DEFAULT_UP_DOWN_RATIO};
use crate::simclock::SimTime;
use crate::transport::MIB;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error(transparent)]
    Invalid(#[from] SpecError),
}

const KEYS: [&str; 13] = [
    "name",
    "rtt",
    "loss",
    "bandwidth",
    "up_down_ratio",
    "queue",
    "mtu",
    "cwnd_cap",
    "recv_window",
    "file_size",
    "sweep",
    "reps",
    "seed",
];

/// Parse a scenario file. Unknown or repeated keys are errors.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ParseError> {
    let mut entries: HashMap<&'static str, (usize, &str)> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |msg: String| ParseError::Line { line, msg };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got {content:?}")))?;
        let key = key.trim();
        let known = KEYS
            .iter()
            .find(|k| **k == key)
            .ok_or_else(|| err(format!("unknown key `{key}`")))?;
        if entries.insert(known, (line, value.trim())).is_some() {
            return Err(err(format!("duplicate key `{key}`")));
        }
    }

    let get = |key: &'static str| entries.get(key).copied();
    let required = |key: &'static str| get(key).ok_or(ParseError::MissingKey(key));
    fn at<T>((line, v): (usize, &str), parse: impl Fn(&str) -> Result<T, String>) -> Result<T, ParseError> {
        parse(v).map_err(|msg| ParseError::Line { line, msg })
    }
    fn field<T>(
        entry: Option<(usize, &str)>,
        parse: impl Fn(&str) -> Result<T, String>,
        default: T,
    ) -> Result<T, ParseError> {
        entry.map_or(Ok(default), |e| at(e, parse))
    }

    let name = required("name")?.1.to_owned();
    let rtt = at(required("rtt")?, parse_duration)?;
    let loss = at(required("loss")?, parse_loss)?;
    let bandwidth = at(required("bandwidth")?, parse_rate)?;
    let mut profile = ImpairmentProfile::new(rtt, loss, bandwidth);
    profile.up_down_ratio = field(get("up_down_ratio"), parse_f64, DEFAULT_UP_DOWN_RATIO)?;
    profile.queue_capacity = field(get("queue"), parse_size, DEFAULT_QUEUE_CAPACITY)?;
    profile.mtu = field(get("mtu"), parse_mtu, DEFAULT_MTU)?;
    let sweep = at(required("sweep")?, parse_sweep)?;
    let spec = ScenarioSpec {
        name,
        profile,
        cwnd_cap: field(get("cwnd_cap"), parse_size, MIB)?,
        recv_window: field(get("recv_window"), parse_size, MIB)?,
        sweep,
        file_size: field(get("file_size"), |v| parse_size(v).map(Some), None)?,
        repetitions: field(get("reps"), parse_int, DEFAULT_REPS)?,
        seed_base: field(get("seed"), parse_int, DEFAULT_SEED)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Render a scenario in the file format; `parse_scenario` reads it back
/// to an equal value.
pub fn emit_scenario(spec: &ScenarioSpec) -> String {
    let p = &spec.profile;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("name", spec.name.clone());
    line("rtt", fmt_duration(p.rtt));
    line("loss", format!("{}%", p.loss_pct));
    line("bandwidth", fmt_rate(p.bandwidth_down));
    line("up_down_ratio", format!("{}", p.up_down_ratio));
    line("queue", fmt_size(p.queue_capacity));
    line("mtu", p.mtu.to_string());
    line("cwnd_cap", fmt_size(spec.cwnd_cap));
    line("recv_window", fmt_size(spec.recv_window));
    if let Some(size) = spec.file_size {
        line("file_size", fmt_size(size));
    }
    let values: Vec<String> = match &spec.sweep {
        Sweep::FileSize(v) => v.iter().map(|&x| fmt_size(x)).collect(),
        Sweep::Rtt(v) => v.iter().map(|&x| fmt_duration(x)).collect(),
        Sweep::Loss(v) => v.iter().map(|x| format!("{x}%")).collect(),
        Sweep::Bandwidth(v) => v.iter().map(|&x| fmt_rate(x)).collect(),
    };
    line("sweep", format!("{}: {}", sweep_axis(&spec.sweep), values.join(", ")));
    line("reps", spec.repetitions.to_string());
    line("seed", spec.seed_base.to_string());
    out
}

fn sweep_axis(sweep: &Sweep) -> &'static str {
    match sweep {
        Sweep::FileSize(_) => "file_size",
        Sweep::Rtt(_) => "rtt",
        Sweep::Loss(_) => "loss",
        Sweep::Bandwidth(_) => "bandwidth",
    }
}

fn parse_sweep(v: &str) -> Result<Sweep, String> {
    let (axis, list) = v
        .split_once(':')
        .ok_or_else(|| format!("expected `<axis>: <v1>, <v2>, ...`, got {v:?}"))?;
    let items: Vec<&str> = list.split(',').map(str::trim).collect();
    fn all<T>(items: &[&str], f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
        items.iter().map(|s| f(s)).collect()
    }
    match axis.trim() {
        "file_size" => all(&items, parse_size).map(Sweep::FileSize),
        "rtt" => all(&items, parse_duration).map(Sweep::Rtt),
        "loss" => all(&items, parse_loss).map(Sweep::Loss),
        "bandwidth" => all(&items, parse_rate).map(Sweep::Bandwidth),
        other => Err(format!(
            "unknown sweep axis `{other}` (file_size, rtt, loss or bandwidth)"
        )),
    }
}

fn split_unit(v: &str) -> (&str, &str) {
    let end = v.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(v.len());
    (&v[..end], v[end..].trim())
}

/// `number * multiplier` for a plain decimal, exact or an error.
fn scaled(number: &str, multiplier: u128) -> Result<u64, String> {
    let (int, frac) = number.split_once('.').unwrap_or((number, ""));
    let digits_ok = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    if int.is_empty() || !digits_ok(int) || !digits_ok(frac) || frac.len() > 18 {
        return Err(format!("bad number {number:?}"));
    }
    let denom = 10u128.pow(frac.len() as u32);
    let numer: u128 = format!("{int}{frac}")
        .parse()
        .map_err(|_| format!("number {number:?} is too large"))?;
    let total = numer
        .checked_mul(multiplier)
        .ok_or_else(|| format!("number {number:?} is too large"))?;
    if total % denom != 0 {
        return Err(format!("{number:?} is not a whole number of base units"));
    }
    u64::try_from(total / denom).map_err(|_| format!("number {number:?} is too large"))
}

fn parse_duration(v: &str) -> Result<SimTime, String> {
    let (n, unit) = split_unit(v);
    let mult = match unit {
        "us" => 1,
        "ms" => 1_000,
        "s" => 1_000_000,
        _ => return Err(format!("duration {v:?} needs a unit: us, ms or s")),
    };
    scaled(n, mult).map(SimTime::from_micros)
}

fn parse_size(v: &str) -> Result<u64, String> {
    let (n, unit) = split_unit(v);
    let mult = match unit {
        "B" => 1,
        "KiB" => u128::from(KIB),
        "MiB" => u128::from(MIB),
        _ => return Err(format!("size {v:?} needs a unit: B, KiB or MiB")),
    };
    scaled(n, mult)
}

fn parse_rate(v: &str) -> Result<u64, String> {
    let (n, unit) = split_unit(v);
    let mult = match unit.strip_suffix("/s").unwrap_or(unit) {
        "bit" => 1,
        "kbit" => 1_000,
        "Mbit" => 1_000_000,
        _ => return Err(format!("rate {v:?} needs a unit: bit, kbit or Mbit")),
    };
    scaled(n, mult)
}

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("bad number {v:?}"))
}

fn parse_loss(v: &str) -> Result<f64, String> {
    parse_f64(v.strip_suffix('%').unwrap_or(v).trim())
}

fn parse_mtu(v: &str) -> Result<u32, String> {
    let (n, unit) = split_unit(v);
    if !(unit.is_empty() || unit == "B") {
        return Err(format!("mtu {v:?} is a byte count"));
    }
    parse_int(n)
}

fn parse_int<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad integer {v:?}"))
}

fn fmt_duration(t: SimTime) -> String {
    let us = t.as_micros();
    if us.is_multiple_of(1_000) {
        format!("{}ms", us / 1_000)
    } else {
        format!("{us}us")
    }
}

fn fmt_size(bytes: u64) -> String {
    if bytes.is_multiple_of(MIB) {
        format!("{}MiB", bytes / MIB)
    } else if bytes.is_multiple_of(KIB) {
        format!("{}KiB", bytes / KIB)
    } else {
        format!("{bytes}B")
    }
}

fn fmt_rate(bits: u64) -> String {
    let (whole, frac) = (bits / 1_000_000, bits % 1_000_000);
    if frac == 0 {
        return format!("{whole}Mbit");
    }
    let frac = format!("{frac:06}");
    format!("{whole}.{}Mbit", frac.trim_end_matches('0'))
}
