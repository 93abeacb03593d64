//! Layered settings: built-in defaults, then a TOML file, then `GARDE_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use garde_core::providers::{ProviderKind, ProviderSettings};
use garde_core::EngineConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Matching window in seconds; commands fall back to their own default.
    pub tolerance: Option<f64>,
    pub lambda: f64,
    pub accepted_only: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            tolerance: None,
            lambda: garde_core::eval::DEFAULT_LAMBDA,
            accepted_only: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub engine: EngineConfig,
    pub providers: ProviderSettings,
    pub eval: EvalSettings,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

/// Flags accepted by every command. Each engine field has a flag of the
/// same name; absent flags leave the file and default values alone.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML settings file with [engine], [providers] and [eval] tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the mock providers (and synth, overriding the spec).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub cache: Option<Toggle>,
    /// Surge threshold.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    /// Matching window in seconds (default 2, or 4 for reward).
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// False-trigger penalty weight for the reward.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Minimum spacing between triggers, in seconds.
    #[arg(long, global = true, alias = "cooldown-seconds")]
    pub cooldown: Option<f64>,
    /// Only count triggers the responder accepted.
    #[arg(long, global = true)]
    pub accepted_only: bool,
    #[arg(long, global = true)]
    pub smoothing_window: Option<usize>,
    #[arg(long, global = true)]
    pub window_seconds: Option<f64>,
    #[arg(long, global = true)]
    pub segment_fps: Option<f64>,
    #[arg(long, global = true)]
    pub process_rate_hz: Option<f64>,
    #[arg(long, global = true)]
    pub context_seconds: Option<f64>,
    #[arg(long, global = true)]
    pub context_fps: Option<f64>,
    #[arg(long, global = true)]
    pub responder_deadline_seconds: Option<f64>,
}

fn set<T: Copy>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl GlobalArgs {
    /// Resolves the full settings stack. `env` is consulted for provider URLs.
    pub fn resolve(&self, env: impl Fn(&str) -> Option<String>) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.providers.apply_env(env);

        let e = &mut s.engine;
        set(&mut e.threshold, self.threshold);
        set(&mut e.cooldown_seconds, self.cooldown);
        set(&mut e.smoothing_window, self.smoothing_window);
        set(&mut e.window_seconds, self.window_seconds);
        set(&mut e.segment_fps, self.segment_fps);
        set(&mut e.process_rate_hz, self.process_rate_hz);
        set(&mut e.context_seconds, self.context_seconds);
        set(&mut e.context_fps, self.context_fps);
        set(&mut e.responder_deadline_seconds, self.responder_deadline_seconds);
        if let Some(c) = self.cache {
            e.cache = c == Toggle::On;
        }
        set(&mut s.providers.seed, self.seed);
        if self.tolerance.is_some() {
            s.eval.tolerance = self.tolerance;
        }
        set(&mut s.eval.lambda, self.lambda);
        s.eval.accepted_only |= self.accepted_only;

        s.engine
            .validate()
            .and_then(|_| s.engine.window_frames().map(|_| ()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(s)
    }
}

/// Points every provider at a replay log; the responder is only replayed
/// when one is configured.
pub fn use_replay(p: &mut ProviderSettings, path: PathBuf) {
    p.embedder = ProviderKind::Replay;
    p.proposer = ProviderKind::Replay;
    if p.responder != ProviderKind::None {
        p.responder = ProviderKind::Replay;
    }
    p.replay_path = Some(path);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("garde.toml");
        std::fs::write(
            &path,
            "[engine]\nthreshold = 0.1\ncache = false\n\n[providers]\nseed = 7\nembedder_url = \"http://file\"\n",
        )
        .unwrap();
        let args = GlobalArgs {
            config: Some(path),
            threshold: Some(0.2),
            ..GlobalArgs::default()
        };
        let env = |k: &str| (k == "GARDE_EMBEDDER_URL").then(|| "http://env".to_string());
        let s = args.resolve(env).unwrap();
        assert_eq!(s.engine.threshold, 0.2);
        assert!(!s.engine.cache);
        assert_eq!(s.providers.seed, 7);
        assert_eq!(s.providers.embedder_url.as_deref(), Some("http://env"));
        assert_eq!(s.engine.window_seconds, 2.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Settings::from_toml("[engine]\nthreshhold = 0.1\n").is_err());
    }

    #[test]
    fn bad_engine_values_are_usage_errors() {
        let args = GlobalArgs {
            window_seconds: Some(0.75),
            ..GlobalArgs::default()
        };
        assert_eq!(args.resolve(|_| None).unwrap_err().code(), 2);
    }
}
