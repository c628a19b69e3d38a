//! Command-line front end. Exit codes: 0 success, 1 usage or input error,
//! 2 acceptance failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::acceptance::Suite;
use crate::scenario::{emit_csv, parse_scenario, run_scenario, RunOptions, ScenarioSpec, BUILTIN_NAMES, DEFAULT_SEED};
use crate::transport::Protocol;

pub const SEED_ENV: &str = "NETLAB_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "netlab",
    version,
    about = "Simulated TCP, QUIC and smUDP transfers over an impaired link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its CSV.
    Run(RunArgs),
    /// Run every built-in scenario, one CSV per scenario.
    Matrix(MatrixArgs),
    /// Run the acceptance suite.
    Check {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Built-in scenario name or path to a scenario file.
    #[arg(long)]
    scenario: String,
    #[arg(long, value_delimiter = ',', default_value = "tcp,quic,smudp")]
    protocols: Vec<Protocol>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's repetition count.
    #[arg(long)]
    reps: Option<u32>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    fec: Switch,
}

#[derive(Debug, Args)]
struct MatrixArgs {
    /// All seven built-ins (the only supported selection).
    #[arg(long, required = true)]
    all: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Matrix(a) => cmd_matrix(a, out),
        Command::Check { seed } => cmd_check(seed, out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "netlab: {msg}");
            EXIT_USAGE
        }
    }
}

fn seed_or_env(flag: Option<u64>) -> Result<u64, String> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{SEED_ENV} must be an unsigned integer, got {v:?}")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec, String> {
    if let Some(spec) = ScenarioSpec::builtin(arg) {
        return Ok(spec);
    }
    let path = Path::new(arg);
    if !path.is_file() {
        return Err(format!(
            "unknown scenario {arg:?}; built-ins are {} (or give a scenario file path)",
            BUILTIN_NAMES.join(", ")
        ));
    }
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_scenario(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> Result<i32, String> {
    let mut spec = load_scenario(&a.scenario)?.with_seed(seed_or_env(a.seed)?);
    if let Some(r) = a.reps {
        spec = spec.with_reps(r);
    }
    let mut protocols = a.protocols;
    protocols.dedup();
    let opts = RunOptions {
        protocols,
        fec: a.fec == Switch::On,
    };
    let records = run_scenario(&spec, &opts).map_err(|e| e.to_string())?;
    write_output(a.out.as_deref(), &emit_csv(&records), out)?;
    Ok(EXIT_OK)
}

fn cmd_matrix(a: MatrixArgs, out: &mut dyn Write) -> Result<i32, String> {
    debug_assert!(a.all);
    let seed = seed_or_env(a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    for spec in ScenarioSpec::all_builtins() {
        let mut spec = spec.with_seed(seed);
        if let Some(r) = a.reps {
            spec = spec.with_reps(r);
        }
        let records = run_scenario(&spec, &RunOptions::default()).map_err(|e| e.to_string())?;
        let path = a.out.join(format!("{}.csv", spec.name));
        write_output(Some(&path), &emit_csv(&records), out)?;
        let _ = writeln!(out, "wrote {} ({} rows)", path.display(), records.len());
    }
    Ok(EXIT_OK)
}

fn cmd_check(seed: Option<u64>, out: &mut dyn Write) -> Result<i32, String> {
    let suite = Suite::new(seed_or_env(seed)?);
    let outcomes = suite.run_all();
    for o in &outcomes {
        let _ = writeln!(out, "{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    let _ = writeln!(out, "{} passed, {failed} failed", outcomes.len() - failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("netlab").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(call(&[]).0, EXIT_USAGE);
        assert_eq!(call(&["run"]).0, EXIT_USAGE);
        assert_eq!(
            call(&["run", "--scenario", "wifi", "--protocols", "sctp"]).0,
            EXIT_USAGE
        );
        assert_eq!(call(&["run", "--scenario", "wifi", "--fec", "maybe"]).0, EXIT_USAGE);
        assert_eq!(call(&["matrix", "--out", "x"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("matrix"));
    }

    #[test]
    fn unknown_scenario_lists_builtins() {
        let (code, _, err) = call(&["run", "--scenario", "nope"]);
        assert_eq!(code, EXIT_USAGE);
        for name in BUILTIN_NAMES {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn scenario_file_runs_to_stdout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.scn");
        fs::write(
            &path,
            "name = tiny\nrtt = 20ms\nloss = 0\nbandwidth = 10Mbit\nsweep = file_size: 1KiB, 2KiB\nreps = 2\n",
        )
        .unwrap();
        let (code, out, err) = call(&[
            "run",
            "--scenario",
            path.to_str().unwrap(),
            "--protocols",
            "quic,smudp",
            "--fec",
            "off",
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].ends_with("rep1_ms,rep2_ms,failures"));
        assert!(lines[1].starts_with("tiny,quic,file_size_kib,1,1024,"));
    }

    #[test]
    fn bad_scenario_file_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.scn");
        fs::write(&path, "name = bad\nrtt = fast\n").unwrap();
        let (code, _, err) = call(&["run", "--scenario", path.to_str().unwrap()]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("line 2"), "{err}");
    }
}
