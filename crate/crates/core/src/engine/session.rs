use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use super::dispatch::{Dispatcher, Job, Outcome};
use super::trigger::TriggerRule;
use super::window::{RateGate, WindowEntry, WindowState};
use super::{Counters, EngineError, EngineReport};
use crate::matching::{normalize, score_segment, ScoreTrace};
use crate::model::{
    EmbeddingVector, EngineConfig, Frame, Instruction, ProposalSet, SimilarityRecord,
    TriggerEvent, Verdict,
};
use crate::providers::{Embedder, Proposer, ProviderCapabilities, Responder};

const GRID_EPS: f64 = 1e-9;

/// Default number of responder worker threads.
pub const DEFAULT_RESPONDER_WORKERS: usize = 2;

/// Picks the proposer's context: frames in `[t0 - context_seconds, t0]`,
/// one per `1/context_fps` grid point, nearest to it.
pub fn context_frames(history: &[Frame], issued_at: f64, cfg: &EngineConfig) -> Vec<Frame> {
    let start = issued_at - cfg.context_seconds;
    let step = 1.0 / cfg.context_fps;
    let points = (cfg.context_seconds * cfg.context_fps + GRID_EPS).floor() as usize;
    let in_range: Vec<&Frame> = history
        .iter()
        .filter(|f| f.timestamp >= start - GRID_EPS && f.timestamp <= issued_at + GRID_EPS)
        .collect();

    let mut chosen: Vec<Frame> = Vec::new();
    for j in 0..=points {
        let target = start + j as f64 / cfg.context_fps;
        let best = in_range
            .iter()
            .filter(|f| {
                let d = f.timestamp - target;
                d >= -step / 2.0 - GRID_EPS && d < step / 2.0 - GRID_EPS
            })
            .min_by(|a, b| {
                let da = (a.timestamp - target).abs();
                let db = (b.timestamp - target).abs();
                da.total_cmp(&db)
            });
        if let Some(f) = best {
            if chosen.last().is_none_or(|c| c.timestamp < f.timestamp) {
                chosen.push((*f).clone());
            }
        }
    }
    chosen
}

/// Parses the instruction once and embeds the resulting proposals.
pub fn start_session(
    cfg: EngineConfig,
    instruction: Instruction,
    history: &[Frame],
    proposer: &dyn Proposer,
    embedder: Arc<dyn Embedder>,
) -> Result<Session, EngineError> {
    cfg.validate().map_err(EngineError::Config)?;
    let capacity = cfg.window_frames().map_err(EngineError::Config)?;
    let context = context_frames(history, instruction.issued_at, &cfg);
    let raw = proposer
        .propose(&instruction, &context)
        .map_err(EngineError::Proposer)?;

    let embeddings = raw
        .cues()
        .map(|cue| {
            let e = embedder.embed_text(cue).map_err(EngineError::Embedder)?;
            normalize(&e).map_err(|e| EngineError::Embedder(e.into()))
        })
        .collect::<Result<Vec<EmbeddingVector>, _>>()?;
    let proposals = raw
        .with_embeddings(embeddings)
        .map_err(EngineError::Proposals)?;

    let capabilities = embedder.capabilities();
    Ok(Session {
        rule: TriggerRule::new(cfg.threshold, cfg.cooldown_seconds),
        use_cache: cfg.cache && capabilities.supports_frame_encoding,
        segment_gate: RateGate::new(cfg.segment_fps),
        tick_gate: RateGate::new(cfg.process_rate_hz),
        smoother: (cfg.smoothing_window > 1).then(|| Smoother::new(cfg.smoothing_window)),
        window: WindowState::new(capacity),
        config: cfg,
        instruction,
        proposals,
        embedder,
        capabilities,
        last_timestamp: None,
        trace: ScoreTrace::default(),
        triggers: Vec::new(),
        counters: Counters::default(),
        dispatcher: None,
    })
}

struct Smoother {
    width: usize,
    history: VecDeque<Vec<f64>>,
}

impl Smoother {
    fn new(width: usize) -> Self {
        Self {
            width,
            history: VecDeque::with_capacity(width),
        }
    }

    fn push(&mut self, scores: Vec<f64>) -> Vec<f64> {
        if self.history.len() == self.width {
            self.history.pop_front();
        }
        self.history.push_back(scores);
        let n = self.history.len() as f64;
        let mut sum = vec![0.0; self.history[0].len()];
        for row in &self.history {
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
        }
        sum.into_iter().map(|s| s / n).collect()
    }
}

/// Result of feeding one frame through [`Session::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub record: Option<SimilarityRecord>,
    pub trigger: Option<TriggerEvent>,
}

/// One streaming session: owns the window, the score history and the
/// trigger log. Not shareable across threads; responder work runs on
/// separate workers and is folded back in at tick boundaries.
pub struct Session {
    config: EngineConfig,
    rule: TriggerRule,
    instruction: Instruction,
    proposals: ProposalSet,
    embedder: Arc<dyn Embedder>,
    capabilities: ProviderCapabilities,
    use_cache: bool,
    window: WindowState,
    segment_gate: RateGate,
    tick_gate: RateGate,
    smoother: Option<Smoother>,
    last_timestamp: Option<f64>,
    trace: ScoreTrace,
    triggers: Vec<TriggerEvent>,
    counters: Counters,
    dispatcher: Option<Dispatcher>,
}

impl Session {
    /// Attaches a responder; triggers can then be verified off-loop.
    pub fn with_responder(mut self, responder: Arc<dyn Responder>, workers: usize) -> Self {
        let deadline = Duration::from_secs_f64(self.config.responder_deadline_seconds);
        self.dispatcher = Some(Dispatcher::new(responder, deadline, workers));
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn instruction(&self) -> &Instruction {
        &self.instruction
    }

    pub fn proposals(&self) -> &ProposalSet {
        &self.proposals
    }

    pub fn window(&self) -> &WindowState {
        &self.window
    }

    pub fn trace(&self) -> &ScoreTrace {
        &self.trace
    }

    pub fn trigger_log(&self) -> &[TriggerEvent] {
        &self.triggers
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn cache_active(&self) -> bool {
        self.use_cache
    }

    pub fn pending_responses(&self) -> usize {
        self.dispatcher.as_ref().map_or(0, Dispatcher::pending)
    }

    /// Adds a frame to the window and scores it when it lands on a
    /// process-rate tick with a full window.
    pub fn ingest_frame(&mut self, frame: Frame) -> Result<Option<SimilarityRecord>, EngineError> {
        self.poll_responses();

        let t = frame.timestamp;
        if !t.is_finite() {
            return Err(EngineError::BadTimestamp(t));
        }
        if let Some(prev) = self.last_timestamp {
            if t <= prev {
                return Err(EngineError::OutOfOrder { prev, next: t });
            }
        }
        if t < self.instruction.issued_at {
            return Err(EngineError::BeforeQuery {
                timestamp: t,
                issued_at: self.instruction.issued_at,
            });
        }
        self.last_timestamp = Some(t);

        if !self.segment_gate.admit(t) {
            self.counters.frames_dropped += 1;
            return Ok(None);
        }
        self.counters.frames_ingested += 1;

        let encoding = if self.use_cache {
            self.counters.encode_calls += 1;
            Some(
                self.embedder
                    .encode_frame(&frame)
                    .map_err(EngineError::Embedder)?,
            )
        } else {
            None
        };
        self.window.push(WindowEntry { frame, encoding });

        if !self.tick_gate.admit(t) || !self.window.is_full() {
            return Ok(None);
        }

        let segment = self.segment_embedding()?;
        let raw = score_segment(&segment, &self.proposals, t, self.trace.records().last())
            .map_err(EngineError::Match)?;
        let record = match &mut self.smoother {
            None => raw,
            Some(s) => {
                let smoothed = s.push(raw.scores);
                SimilarityRecord::from_scores(t, smoothed, self.trace.records().last())
                    .map_err(EngineError::Match)?
            }
        };
        self.trace.push(record.clone()).map_err(EngineError::Match)?;
        self.counters.ticks += 1;
        Ok(Some(record))
    }

    fn segment_embedding(&mut self) -> Result<EmbeddingVector, EngineError> {
        if self.use_cache {
            let encodings = self
                .window
                .cached_encodings()
                .expect("every resident frame is encoded on ingest");
            self.counters.cache_hits += encodings.len() as u64 - 1;
            return self.embedder.pool(&encodings).map_err(EngineError::Embedder);
        }
        let frames = self.window.frames();
        if self.capabilities.supports_frame_encoding {
            let encodings = frames
                .iter()
                .map(|f| {
                    self.counters.encode_calls += 1;
                    self.embedder.encode_frame(f)
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(EngineError::Embedder)?;
            self.embedder.pool(&encodings).map_err(EngineError::Embedder)
        } else {
            self.embedder
                .embed_segment(&frames)
                .map_err(EngineError::Embedder)
        }
    }

    /// Applies the surge rule to a record produced by this session and
    /// appends the resulting event, if any, to the trigger log.
    pub fn check_trigger(&mut self, record: &SimilarityRecord) -> Option<TriggerEvent> {
        if let Some(last) = self.triggers.last() {
            if record.tick_time <= last.time {
                return None;
            }
        }
        let records = self.trace.records();
        let previous = records
            .iter()
            .rposition(|r| r.tick_time == record.tick_time)
            .and_then(|i| i.checked_sub(1))
            .map(|i| &records[i]);
        let last_time = self.triggers.last().map(|e| e.time);
        let (index, surge) = self.rule.evaluate(previous, record, last_time)?;
        let event = TriggerEvent::new(record.tick_time, index, surge);
        self.triggers.push(event.clone());
        Some(event)
    }

    /// Hands a logged trigger to the responder without waiting for it.
    pub fn dispatch_response(&mut self, event_index: usize) -> Result<(), EngineError> {
        let trigger = self
            .triggers
            .get(event_index)
            .cloned()
            .ok_or(EngineError::UnknownEvent(event_index))?;
        let recent = self.window.frames();
        let instruction = self.instruction.clone();
        let dispatcher = self.dispatcher.as_mut().ok_or(EngineError::NoResponder)?;
        dispatcher.submit(Job {
            event_index,
            instruction,
            recent,
            trigger,
        });
        Ok(())
    }

    /// Ingest, trigger check and dispatch for one frame.
    pub fn step(&mut self, frame: Frame) -> Result<StepOutcome, EngineError> {
        let Some(record) = self.ingest_frame(frame)? else {
            return Ok(StepOutcome {
                record: None,
                trigger: None,
            });
        };
        let trigger = self.check_trigger(&record);
        if trigger.is_some() && self.dispatcher.is_some() {
            self.dispatch_response(self.triggers.len() - 1)?;
        }
        Ok(StepOutcome {
            record: Some(record),
            trigger,
        })
    }

    /// Folds finished (or overdue) responder calls into the trigger log.
    pub fn poll_responses(&mut self) {
        let outcomes = match &mut self.dispatcher {
            Some(d) => d.poll(),
            None => return,
        };
        self.apply(outcomes);
    }

    fn apply(&mut self, outcomes: Vec<(usize, Outcome)>) {
        for (i, outcome) in outcomes {
            let Some(event) = self.triggers.get_mut(i) else {
                continue;
            };
            match outcome {
                Outcome::Verdict(v) => {
                    event.verdict = if v.accepted {
                        Verdict::Accepted
                    } else {
                        Verdict::Rejected
                    };
                }
                Outcome::Failed(msg) => {
                    event.verdict = Verdict::Rejected;
                    event.error = Some(msg);
                }
                Outcome::Expired => {
                    event.verdict = Verdict::Rejected;
                    event.error = Some("responder deadline exceeded".into());
                }
            }
        }
    }

    /// Waits for outstanding responder calls (bounded by their deadlines)
    /// and returns the final report.
    pub fn finish(mut self) -> EngineReport {
        if let Some(d) = &mut self.dispatcher {
            let outcomes = d.wait_all();
            self.apply(outcomes);
        }
        EngineReport {
            trigger_log: self.triggers,
            score_trace: self.trace,
            counters: self.counters,
            smoothing_window: self.config.smoothing_window,
            cache_active: self.use_cache,
        }
    }
}
