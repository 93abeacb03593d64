//! Off-loop responder calls.
//!
//! Jobs go to a small pool of worker threads; completions come back on a
//! channel that the session drains at tick boundaries. The ingest path never
//! waits on a responder.

use std::collections::HashMap;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::model::{Frame, Instruction, TriggerEvent};
use crate::providers::{ProviderError, Responder, ResponderVerdict};

pub(crate) struct Job {
    pub event_index: usize,
    pub instruction: Instruction,
    pub recent: Vec<Frame>,
    pub trigger: TriggerEvent,
}

struct Completion {
    event_index: usize,
    result: Result<ResponderVerdict, ProviderError>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Outcome {
    Verdict(ResponderVerdict),
    Failed(String),
    Expired,
}

pub(crate) struct Dispatcher {
    jobs: Sender<Job>,
    completions: Receiver<Completion>,
    pending: HashMap<usize, Instant>,
    deadline: Duration,
}

impl Dispatcher {
    pub(crate) fn new(responder: Arc<dyn Responder>, deadline: Duration, workers: usize) -> Self {
        let (job_tx, job_rx) = unbounded::<Job>();
        let (done_tx, done_rx) = unbounded::<Completion>();
        for n in 0..workers.max(1) {
            let jobs = job_rx.clone();
            let done = done_tx.clone();
            let responder = Arc::clone(&responder);
            thread::Builder::new()
                .name(format!("garde-responder-{n}"))
                .spawn(move || {
                    for job in jobs.iter() {
                        let result = responder.respond(&job.instruction, &job.recent, &job.trigger);
                        let sent = done.send(Completion {
                            event_index: job.event_index,
                            result,
                        });
                        if sent.is_err() {
                            break;
                        }
                    }
                })
                .expect("spawn responder worker");
        }
        Self {
            jobs: job_tx,
            completions: done_rx,
            pending: HashMap::new(),
            deadline,
        }
    }

    pub(crate) fn submit(&mut self, job: Job) {
        self.pending
            .insert(job.event_index, Instant::now() + self.deadline);
        // workers only exit once this sender is dropped
        let _ = self.jobs.send(job);
    }

    pub(crate) fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Drains finished calls and expires overdue ones without blocking.
    pub(crate) fn poll(&mut self) -> Vec<(usize, Outcome)> {
        let mut out = Vec::new();
        while let Ok(c) = self.completions.try_recv() {
            self.complete(c, &mut out);
        }
        self.expire(Instant::now(), &mut out);
        out
    }

    /// Blocks until every pending call has completed or hit its deadline.
    pub(crate) fn wait_all(&mut self) -> Vec<(usize, Outcome)> {
        let mut out = Vec::new();
        while let Some(&next_deadline) = self.pending.values().min() {
            let now = Instant::now();
            if next_deadline <= now {
                self.expire(now, &mut out);
                continue;
            }
            match self.completions.recv_timeout(next_deadline - now) {
                Ok(c) => self.complete(c, &mut out),
                Err(RecvTimeoutError::Timeout) => self.expire(Instant::now(), &mut out),
                Err(RecvTimeoutError::Disconnected) => {
                    let ids: Vec<usize> = self.pending.drain().map(|(i, _)| i).collect();
                    out.extend(ids.into_iter().map(|i| (i, Outcome::Expired)));
                }
            }
        }
        out
    }

    fn complete(&mut self, c: Completion, out: &mut Vec<(usize, Outcome)>) {
        // late answers for already-expired events are dropped
        if self.pending.remove(&c.event_index).is_none() {
            return;
        }
        let outcome = match c.result {
            Ok(v) => Outcome::Verdict(v),
            Err(e) => Outcome::Failed(e.to_string()),
        };
        out.push((c.event_index, outcome));
    }

    fn expire(&mut self, now: Instant, out: &mut Vec<(usize, Outcome)>) {
        let mut expired: Vec<usize> = self
            .pending
            .iter()
            .filter(|(_, d)| **d <= now)
            .map(|(i, _)| *i)
            .collect();
        expired.sort_unstable();
        for i in expired {
            self.pending.remove(&i);
            out.push((i, Outcome::Expired));
        }
    }
}
