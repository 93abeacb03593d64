//! Run manifests: everything needed to repeat a command invocation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::error::CliError;

/// A fully resolved command invocation. Output locations are file names
/// inside the output directory so a rerun can be redirected elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Job {
    Run {
        timeline: PathBuf,
        /// Record every provider call to `replay.jsonl`.
        #[serde(default)]
        record: bool,
    },
    Eval {
        triggers: PathBuf,
        timeline: PathBuf,
    },
    Sweep {
        trace: PathBuf,
        timeline: PathBuf,
        theta_min: f64,
        theta_max: f64,
        steps: usize,
    },
    Reward {
        triggers: PathBuf,
        timeline: PathBuf,
    },
    Bench {
        frames: usize,
        lengths: Vec<usize>,
    },
    Synth {
        spec: PathBuf,
        seed: Option<u64>,
        /// Timeline file name; defaults to `<id>.timeline.jsonl`.
        out_name: Option<String>,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Run { .. } => "run",
            Job::Eval { .. } => "eval",
            Job::Sweep { .. } => "sweep",
            Job::Reward { .. } => "reward",
            Job::Bench { .. } => "bench",
            Job::Synth { .. } => "synth",
        }
    }

    /// Input files, keyed by role.
    pub fn inputs(&self) -> BTreeMap<String, PathBuf> {
        let pairs: Vec<(&str, &PathBuf)> = match self {
            Job::Run { timeline, .. } => vec![("timeline", timeline)],
            Job::Eval { triggers, timeline } | Job::Reward { triggers, timeline } => {
                vec![("triggers", triggers), ("timeline", timeline)]
            }
            Job::Sweep { trace, timeline, .. } => vec![("trace", trace), ("timeline", timeline)],
            Job::Bench { .. } => vec![],
            Job::Synth { spec, .. } => vec![("spec", spec)],
        };
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    /// Rewrites input paths to absolute ones so the job can run from anywhere.
    pub fn absolutize(&mut self) -> Result<(), CliError> {
        let fix = |p: &mut PathBuf| -> Result<(), CliError> {
            *p = std::fs::canonicalize(&*p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            Ok(())
        };
        match self {
            Job::Run { timeline, .. } => fix(timeline),
            Job::Eval { triggers, timeline } | Job::Reward { triggers, timeline } => {
                fix(triggers)?;
                fix(timeline)
            }
            Job::Sweep { trace, timeline, .. } => {
                fix(trace)?;
                fix(timeline)
            }
            Job::Bench { .. } => Ok(()),
            Job::Synth { spec, .. } => fix(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Wall-clock start, RFC 3339.
    pub started_at: String,
    pub settings: Settings,
    pub seeds: BTreeMap<String, u64>,
    pub job: Job,
    pub out_dir: PathBuf,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn file_name(job: &Job) -> String {
        format!("{}.manifest.json", job.name())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}
