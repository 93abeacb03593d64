//! Command bodies. Each takes resolved settings and an output directory
//! and reports the files it wrote.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use garde_core::eval::{
    aggregate_metrics, compute_reward, match_triggers, theta_grid, threshold_sweep, Matching,
    SweepEpisode, EVAL_TOLERANCE_SECONDS, REWARD_TOLERANCE_SECONDS,
};
use garde_core::io::{
    group_by_timeline, load_corpus, read_jsonl, save_timeline, write_jsonl, TraceLine, TriggerLine,
};
use garde_core::providers::ReplayLog;
use garde_core::synth::{synthesize, SynthSpec};
use garde_core::{run_stream, ScoreTrace, Timeline, TriggerEvent, Verdict};
use serde::Serialize;
use serde_json::json;

use crate::bench::bench;
use crate::config::Settings;
use crate::error::CliError;
use crate::manifest::Job;

/// What a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub outputs: BTreeMap<String, PathBuf>,
    /// Text for stdout.
    pub report: String,
    /// Non-fatal notes for stderr.
    pub warnings: Vec<String>,
}

pub fn execute(job: &Job, settings: &Settings, out_dir: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
    match job {
        Job::Run { timeline, record } => run(settings, timeline, *record, out_dir),
        Job::Eval { triggers, timeline } => eval(settings, triggers, timeline, out_dir),
        Job::Sweep {
            trace,
            timeline,
            theta_min,
            theta_max,
            steps,
        } => sweep(settings, trace, timeline, (*theta_min, *theta_max, *steps), out_dir),
        Job::Reward { triggers, timeline } => reward(settings, triggers, timeline, out_dir),
        Job::Bench { frames, lengths } => run_bench(settings, *frames, lengths, out_dir),
        Job::Synth {
            spec,
            seed,
            out_name,
        } => synth(spec, *seed, out_name.as_deref(), out_dir),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable") + "\n"
}

fn run(settings: &Settings, timeline: &Path, record: bool, out_dir: &Path) -> Result<Outcome, CliError> {
    let corpus = load_corpus(timeline)?;
    let mut providers = settings.providers.build()?;
    let log = ReplayLog::new();
    if record {
        providers = providers.recording(&log);
    }
    let tag = |t: &Timeline| (corpus.len() > 1).then(|| t.id.clone());

    let mut triggers = Vec::new();
    let mut trace = Vec::new();
    let mut counters = Vec::new();
    for t in &corpus {
        let report = run_stream(&settings.engine, t, &providers)?;
        triggers.extend(report.trigger_log.into_iter().map(|event| TriggerLine {
            timeline_id: tag(t),
            event,
        }));
        trace.extend(report.score_trace.into_records().into_iter().map(|record| TraceLine {
            timeline_id: tag(t),
            record,
        }));
        counters.push(json!({
            "timeline_id": t.id,
            "counters": report.counters,
            "cache_active": report.cache_active,
            "smoothing_window": report.smoothing_window,
        }));
    }

    let mut outputs = BTreeMap::new();
    let triggers_path = out_dir.join("triggers.jsonl");
    write_jsonl(&triggers_path, &triggers)?;
    outputs.insert("triggers".into(), triggers_path);
    let trace_path = out_dir.join("trace.jsonl");
    write_jsonl(&trace_path, &trace)?;
    outputs.insert("trace".into(), trace_path);
    let counters_path = out_dir.join("counters.jsonl");
    write_jsonl(&counters_path, &counters)?;
    outputs.insert("counters".into(), counters_path);
    if record {
        let path = out_dir.join("replay.jsonl");
        log.save(&path)?;
        outputs.insert("replay".into(), path);
    }

    let mut warnings = Vec::new();
    if settings.engine.smoothing_window > 1 {
        warnings.push(format!(
            "scores smoothed over {} ticks; trigger behavior differs from the unsmoothed rule",
            settings.engine.smoothing_window
        ));
    }
    let report = json_line(&json!({
        "timelines": corpus.len(),
        "triggers": triggers.len(),
        "ticks": trace.len(),
    }));
    Ok(Outcome {
        outputs,
        report,
        warnings,
    })
}

/// Trigger times per timeline, in corpus order. Lines without a timeline id
/// are only accepted for single-timeline corpora.
fn triggers_by_timeline(
    corpus: &[Timeline],
    lines: Vec<TriggerLine>,
    accepted_only: bool,
) -> Result<Vec<Vec<f64>>, CliError> {
    let index: HashMap<&str, usize> = corpus.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
    let mut out = vec![Vec::new(); corpus.len()];
    let keep = |e: &TriggerEvent| !accepted_only || e.verdict == Verdict::Accepted;
    for (id, events) in group_by_timeline(lines, |l| (l.timeline_id, l.event)) {
        let slot = match id {
            Some(id) => *index
                .get(id.as_str())
                .ok_or_else(|| CliError::Input(format!("triggers name unknown timeline {id:?}")))?,
            None if corpus.len() == 1 => 0,
            None => {
                return Err(CliError::Input(
                    "trigger lines need a timeline_id when the corpus has several timelines".into(),
                ))
            }
        };
        out[slot].extend(events.iter().filter(|e| keep(e)).map(|e| e.time));
    }
    Ok(out)
}

fn eval(settings: &Settings, triggers: &Path, timeline: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let corpus = load_corpus(timeline)?;
    let times = triggers_by_timeline(&corpus, read_jsonl(triggers)?, settings.eval.accepted_only)?;
    let tol = settings.eval.tolerance.unwrap_or(EVAL_TOLERANCE_SECONDS);
    let matchings = corpus
        .iter()
        .zip(&times)
        .map(|(t, trig)| match_triggers(trig, &t.ground_truth_times, tol))
        .collect::<Result<Vec<Matching>, _>>()?;
    let report = aggregate_metrics(corpus.iter().zip(&matchings).map(|(t, m)| (t.task_tag.as_deref(), m)));

    let path = out_dir.join("metrics.json");
    let text = json_line(&report);
    write_text(&path, &text)?;
    Ok(Outcome {
        outputs: BTreeMap::from([("metrics".into(), path)]),
        report: text,
        warnings: Vec::new(),
    })
}

fn sweep(
    settings: &Settings,
    trace: &Path,
    timeline: &Path,
    (theta_min, theta_max, steps): (f64, f64, usize),
    out_dir: &Path,
) -> Result<Outcome, CliError> {
    if steps < 2 {
        return Err(CliError::Usage(format!("--steps must be at least 2, got {steps}")));
    }
    let grid = theta_grid(theta_min, theta_max, steps)?;
    let corpus = load_corpus(timeline)?;
    let lines: Vec<TraceLine> = read_jsonl(trace)?;
    let mut traces: Vec<Option<ScoreTrace>> = vec![None; corpus.len()];
    for (id, records) in group_by_timeline(lines, |l| (l.timeline_id, l.record)) {
        let slot = match &id {
            Some(id) => corpus
                .iter()
                .position(|t| &t.id == id)
                .ok_or_else(|| CliError::Input(format!("trace names unknown timeline {id:?}")))?,
            None if corpus.len() == 1 => 0,
            None => return Err(CliError::Input("trace lines need a timeline_id for a multi-timeline corpus".into())),
        };
        traces[slot] = Some(ScoreTrace::new(records).map_err(|e| CliError::Input(e.to_string()))?);
    }
    let episodes: Vec<SweepEpisode> = corpus
        .iter()
        .zip(traces)
        .map(|(t, trace)| SweepEpisode {
            trace: trace.unwrap_or_default(),
            ground_truth: t.ground_truth_times.clone(),
            task_tag: t.task_tag.clone(),
        })
        .collect();
    let tol = settings.eval.tolerance.unwrap_or(EVAL_TOLERANCE_SECONDS);
    let points = threshold_sweep(&episodes, &grid, tol, settings.engine.cooldown_seconds)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta", "recall", "precision", "f1", "n_triggers", "n_correct"])
        .expect("in-memory write");
    for p in &points {
        let m = &p.report.overall;
        w.write_record([
            p.theta.to_string(),
            m.recall.to_string(),
            m.precision.to_string(),
            m.f1.to_string(),
            m.n_triggers.to_string(),
            m.n_correct.to_string(),
        ])
        .expect("in-memory write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8");
    let path = out_dir.join("sweep.csv");
    write_text(&path, &text)?;
    let mut warnings = Vec::new();
    if settings.engine.cooldown_seconds > 0.0 {
        warnings.push("with a cooldown, recall is not guaranteed to fall monotonically with the threshold".into());
    }
    Ok(Outcome {
        outputs: BTreeMap::from([("sweep".into(), path)]),
        report: text,
        warnings,
    })
}

fn reward(settings: &Settings, triggers: &Path, timeline: &Path, out_dir: &Path) -> Result<Outcome, CliError> {
    let corpus = load_corpus(timeline)?;
    let times = triggers_by_timeline(&corpus, read_jsonl(triggers)?, settings.eval.accepted_only)?;
    let tol = settings.eval.tolerance.unwrap_or(REWARD_TOLERANCE_SECONDS);
    let mut text = String::new();
    for (t, trig) in corpus.iter().zip(&times) {
        let r = compute_reward(trig, &t.ground_truth_times, tol, settings.eval.lambda)
            .map_err(|e| match CliError::from(e) {
                CliError::Domain(m) => CliError::Domain(format!("timeline {:?}: {m}", t.id)),
                other => other,
            })?;
        let mut v = serde_json::to_value(r).expect("serializable");
        v["timeline_id"] = json!(t.id);
        v["tolerance"] = json!(tol);
        text.push_str(&json_line(&v));
    }
    let path = out_dir.join("reward.jsonl");
    write_text(&path, &text)?;
    Ok(Outcome {
        outputs: BTreeMap::from([("reward".into(), path)]),
        report: text,
        warnings: Vec::new(),
    })
}

fn run_bench(settings: &Settings, frames: usize, lengths: &[usize], out_dir: &Path) -> Result<Outcome, CliError> {
    if lengths.is_empty() {
        return Err(CliError::Usage("--lengths needs at least one multiplier".into()));
    }
    let (rows, warnings) = bench(
        &settings.engine,
        frames,
        lengths,
        settings.providers.seed,
        settings.providers.embedding_dim,
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "multiplier",
        "cache",
        "frames",
        "ticks",
        "p50_us",
        "p90_us",
        "p99_us",
        "mean_us",
        "slope_rel_per_1000_ticks",
        "encode_calls",
    ])
    .expect("in-memory write");
    for r in &rows {
        w.write_record([
            r.multiplier.to_string(),
            if r.cache { "on" } else { "off" }.to_string(),
            r.frames.to_string(),
            r.ticks.to_string(),
            format!("{:.3}", r.p50_us),
            format!("{:.3}", r.p90_us),
            format!("{:.3}", r.p99_us),
            format!("{:.3}", r.mean_us),
            r.slope_rel_per_1000_ticks.map_or(String::new(), |s| format!("{s:.6}")),
            r.encode_calls.to_string(),
        ])
        .expect("in-memory write");
    }
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8");
    let path = out_dir.join("bench.csv");
    write_text(&path, &text)?;
    Ok(Outcome {
        outputs: BTreeMap::from([("bench".into(), path)]),
        report: text,
        warnings,
    })
}

/// `q1.timeline.jsonl` -> `q1.proposals.json`.
fn proposals_name(timeline_name: &str) -> String {
    let stem = timeline_name
        .strip_suffix(".timeline.jsonl")
        .or_else(|| timeline_name.strip_suffix(".jsonl"))
        .unwrap_or(timeline_name);
    format!("{stem}.proposals.json")
}

fn synth(spec_path: &Path, seed: Option<u64>, out_name: Option<&str>, out_dir: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", spec_path.display())))?;
    let mut spec: SynthSpec =
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (timeline, fixture) = synthesize(&spec)?;
    let name = out_name.map_or_else(|| format!("{}.timeline.jsonl", spec.id), str::to_string);
    let timeline_path = out_dir.join(&name);
    save_timeline(&timeline_path, &timeline)?;
    let proposals_path = out_dir.join(proposals_name(&name));
    let fixture_text = serde_json::to_string(&[fixture]).expect("serializable") + "\n";
    write_text(&proposals_path, &fixture_text)?;
    let report = json_line(&json!({
        "timeline": timeline_path,
        "proposals": proposals_path,
        "frames": timeline.frames.len(),
        "ground_truth_times": timeline.ground_truth_times,
    }));
    Ok(Outcome {
        outputs: BTreeMap::from([("timeline".into(), timeline_path), ("proposals".into(), proposals_path)]),
        report,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposals_file_sits_next_to_the_timeline() {
        assert_eq!(proposals_name("q1.timeline.jsonl"), "q1.proposals.json");
        assert_eq!(proposals_name("x.jsonl"), "x.proposals.json");
        assert_eq!(proposals_name("raw"), "raw.proposals.json");
    }
}
