//! Line-oriented file formats: timelines, trigger logs and score traces.
//!
//! Every format is JSONL, one object per line. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_timeline, SimilarityRecord, Timeline, TriggerEvent, Violation};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: timeline {id:?} is invalid: {}", join(.violations))]
    Validation {
        path: PathBuf,
        id: String,
        violations: Vec<Violation>,
    },
    #[error("{path}: expected exactly one timeline, found {found}")]
    NotSingle { path: PathBuf, found: usize },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IoError::Io {
            path: path.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), IoError> {
    let wrap = |source| IoError::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(wrap)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| wrap(e.into()))?;
        w.write_all(b"\n").map_err(wrap)?;
    }
    w.flush().map_err(wrap)
}

/// Loads every timeline in a corpus file and validates each one.
pub fn load_corpus(path: &Path) -> Result<Vec<Timeline>, IoError> {
    let timelines: Vec<Timeline> = read_jsonl(path)?;
    for t in &timelines {
        let violations = validate_timeline(t);
        if !violations.is_empty() {
            return Err(IoError::Validation {
                path: path.to_owned(),
                id: t.id.clone(),
                violations,
            });
        }
    }
    Ok(timelines)
}

/// Loads a file holding a single timeline.
pub fn load_timeline(path: &Path) -> Result<Timeline, IoError> {
    let mut all = load_corpus(path)?;
    if all.len() != 1 {
        return Err(IoError::NotSingle {
            path: path.to_owned(),
            found: all.len(),
        });
    }
    Ok(all.remove(0))
}

pub fn save_timeline(path: &Path, timeline: &Timeline) -> Result<(), IoError> {
    write_jsonl(path, [timeline])
}

pub fn save_corpus(path: &Path, timelines: &[Timeline]) -> Result<(), IoError> {
    write_jsonl(path, timelines)
}

/// A trigger log line; `timeline_id` is present when the log covers a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline_id: Option<String>,
    #[serde(flatten)]
    pub event: TriggerEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeline_id: Option<String>,
    #[serde(flatten)]
    pub record: SimilarityRecord,
}

/// Splits tagged lines into per-timeline groups, keeping first-seen order.
pub fn group_by_timeline<T, L>(
    lines: impl IntoIterator<Item = L>,
    split: impl Fn(L) -> (Option<String>, T),
) -> Vec<(Option<String>, Vec<T>)> {
    let mut groups: Vec<(Option<String>, Vec<T>)> = Vec::new();
    for line in lines {
        let (id, item) = split(line);
        match groups.iter_mut().find(|(g, _)| *g == id) {
            Some((_, items)) => items.push(item),
            None => groups.push((id, vec![item])),
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Frame, Instruction, Verdict};

    #[test]
    fn trigger_line_layout_is_flat() {
        let line = TriggerLine {
            timeline_id: None,
            event: TriggerEvent::new(12.0, 1, 0.25),
        };
        let s = serde_json::to_string(&line).unwrap();
        assert_eq!(
            s,
            r#"{"time":12.0,"best_proposal_index":1,"surge":0.25,"verdict":"pending"}"#
        );
        let back: TriggerLine = serde_json::from_str(&s).unwrap();
        assert_eq!(back.event.verdict, Verdict::Pending);
    }

    #[test]
    fn trace_line_omits_absent_surge() {
        let line = TraceLine {
            timeline_id: Some("a".into()),
            record: SimilarityRecord {
                tick_time: 2.0,
                scores: vec![0.1, 0.2],
                max_surge: None,
            },
        };
        assert_eq!(
            serde_json::to_string(&line).unwrap(),
            r#"{"timeline_id":"a","tick_time":2.0,"scores":[0.1,0.2]}"#
        );
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        std::fs::write(&p, r#"{"id":"x","instruction":{"text":"q","issued_at":0"#).unwrap();
        assert!(matches!(load_timeline(&p), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn single_loader_rejects_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let t = Timeline {
            id: "x".into(),
            instruction: Instruction::new("q", 0.0).unwrap(),
            ground_truth_times: vec![],
            task_tag: None,
            frames: vec![Frame::with_encoding(0.0, vec![1.0])],
        };
        save_corpus(&p, &[t.clone(), t]).unwrap();
        assert!(matches!(load_timeline(&p), Err(IoError::NotSingle { found: 2, .. })));
        assert_eq!(load_corpus(&p).unwrap().len(), 2);
    }

    #[test]
    fn grouping_keeps_order() {
        let g = group_by_timeline(
            vec![("b", 1), ("a", 2), ("b", 3)],
            |(id, v)| (Some(id.to_string()), v),
        );
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1, vec![1, 3]);
        assert_eq!(g[1].0.as_deref(), Some("a"));
    }
}
