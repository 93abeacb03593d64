//! The `garde` command-line tool: run streams, score trigger logs, sweep
//! thresholds, compute rewards, benchmark tick latency and generate
//! synthetic timelines.
//!
//! Every command writes its outputs and a `<command>.manifest.json` into the
//! output directory. `garde rerun <manifest>` repeats a recorded invocation.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{use_replay, GlobalArgs, Settings};
use crate::error::CliError;
use crate::manifest::{Job, RunManifest};

pub const DEFAULT_OUT_DIR: &str = "garde-out";

#[derive(Debug, Parser)]
#[command(name = "garde", version, about = "Propose-and-match streaming trigger engine")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stream every timeline in a corpus and write triggers, traces and counters.
    Run {
        timeline: PathBuf,
        /// Proposer fixture file (JSON array) for the mock proposer.
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Serve all provider calls from a recorded replay log.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Record all provider calls to replay.jsonl in the output directory.
        #[arg(long)]
        record: bool,
    },
    /// Score a trigger log against a corpus's ground truth.
    Eval { triggers: PathBuf, timeline: PathBuf },
    /// Re-trigger a recorded score trace over a grid of thresholds.
    Sweep {
        trace: PathBuf,
        timeline: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta_min: f64,
        #[arg(long, default_value_t = 0.2)]
        theta_max: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
    /// Episode reward of a trigger log.
    Reward { triggers: PathBuf, timeline: PathBuf },
    /// Per-tick latency at several stream lengths, cache on and off.
    Bench {
        /// Base stream length in frames.
        #[arg(long, default_value_t = 1000)]
        frames: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,10")]
        lengths: Vec<usize>,
    },
    /// Generate a timeline with planted surges from a TOML spec.
    Synth {
        spec: PathBuf,
        /// Timeline output path; overrides --out-dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat the invocation recorded in a manifest.
    Rerun { manifest: PathBuf },
}

fn canonical(p: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
}

/// Turns parsed arguments into settings, a job and an output directory.
fn plan(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(Settings, Job, PathBuf), CliError> {
    let g = &cli.global;
    if let Command::Rerun { manifest } = &cli.command {
        let m = RunManifest::load(manifest)?;
        let out_dir = g.out_dir.clone().unwrap_or(m.out_dir);
        return Ok((m.settings, m.job, out_dir));
    }
    let mut settings = g.resolve(env)?;
    let mut out_dir = g.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let mut job = match cli.command {
        Command::Run {
            timeline,
            proposals,
            replay,
            record,
        } => {
            if let Some(p) = proposals {
                settings.providers.proposals = Some(canonical(&p)?);
            }
            if let Some(p) = replay {
                use_replay(&mut settings.providers, canonical(&p)?);
            }
            Job::Run { timeline, record }
        }
        Command::Eval { triggers, timeline } => Job::Eval { triggers, timeline },
        Command::Sweep {
            trace,
            timeline,
            theta_min,
            theta_max,
            steps,
        } => Job::Sweep {
            trace,
            timeline,
            theta_min,
            theta_max,
            steps,
        },
        Command::Reward { triggers, timeline } => Job::Reward { triggers, timeline },
        Command::Bench { frames, lengths } => Job::Bench { frames, lengths },
        Command::Synth { spec, out } => {
            let mut out_name = None;
            if let Some(out) = out {
                let name = out
                    .file_name()
                    .ok_or_else(|| CliError::Usage(format!("--out {} is not a file path", out.display())))?;
                out_name = Some(name.to_string_lossy().into_owned());
                out_dir = match out.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                    _ => PathBuf::from("."),
                };
            }
            Job::Synth {
                spec,
                seed: g.seed,
                out_name,
            }
        }
        Command::Rerun { .. } => unreachable!("handled above"),
    };
    job.absolutize()?;
    Ok((settings, job, out_dir))
}

fn execute(cli: Cli, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let (settings, job, out_dir) = plan(cli, env)?;
    let outcome = commands::execute(&job, &settings, &out_dir)?;

    let manifest_path = out_dir.join(RunManifest::file_name(&job));
    let mut outputs = outcome.outputs;
    outputs.insert("manifest".into(), manifest_path.clone());
    let mut seeds = BTreeMap::from([("providers".to_string(), settings.providers.seed)]);
    if let Job::Synth { seed: Some(s), .. } = &job {
        seeds.insert("synth".into(), *s);
    }
    let manifest = RunManifest {
        tool: "garde".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        inputs: job.inputs(),
        settings,
        seeds,
        job,
        out_dir,
        outputs,
    };
    manifest.save(&manifest_path)?;

    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", outcome.report);
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported as one JSON line on stderr.
pub fn main_with<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.kind().to_string();
            let detail = e.to_string();
            let first = detail
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or(&msg)
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("{}", CliError::Usage(first).to_json_line());
            return 2;
        }
    };
    match execute(cli, env) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.code()
        }
    }
}
