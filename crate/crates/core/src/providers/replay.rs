//! Record/replay of provider calls.
//!
//! A [`ReplayLog`] is a JSONL file of `{"digest", "op", "response"}` lines.
//! The digest is a SHA-256 over the operation name and every request input,
//! so replaying the same stream looks up exactly the responses recorded for
//! it. Floats are stored with round-trip precision, which makes replayed
//! runs bit-identical to the recorded ones.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{
    Embedder, FrameEncoding, Proposer, ProviderCapabilities, ProviderError, Responder,
    ResponderVerdict,
};
use crate::io::{read_jsonl, write_jsonl};
use crate::model::{EmbeddingVector, Frame, FramePayload, Instruction, ProposalSet, TriggerEvent};

const CAPABILITIES: &str = "capabilities";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplayEntry {
    digest: String,
    op: String,
    response: Value,
}

#[derive(Debug, Default)]
struct LogState {
    entries: Vec<ReplayEntry>,
    index: HashMap<String, usize>,
}

/// Shared, thread-safe store of recorded provider responses.
#[derive(Debug, Clone, Default)]
pub struct ReplayLog {
    state: Arc<Mutex<LogState>>,
}

impl ReplayLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let entries: Vec<ReplayEntry> =
            read_jsonl(path).map_err(|e| ProviderError::Io(e.to_string()))?;
        let log = Self::new();
        for e in entries {
            log.insert(e);
        }
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        let state = self.state.lock().expect("replay log poisoned");
        write_jsonl(path, &state.entries).map_err(|e| ProviderError::Io(e.to_string()))
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("replay log poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn insert(&self, entry: ReplayEntry) {
        let mut state = self.state.lock().expect("replay log poisoned");
        if state.index.contains_key(&entry.digest) {
            return;
        }
        let at = state.entries.len();
        state.index.insert(entry.digest.clone(), at);
        state.entries.push(entry);
    }

    fn record<T: Serialize>(&self, op: &str, digest: String, response: &T) {
        let response = serde_json::to_value(response).expect("provider responses serialize");
        self.insert(ReplayEntry {
            digest,
            op: op.to_string(),
            response,
        });
    }

    fn lookup<T: DeserializeOwned>(&self, op: &str, digest: String) -> Result<T, ProviderError> {
        let state = self.state.lock().expect("replay log poisoned");
        let value = state
            .index
            .get(&digest)
            .map(|&i| state.entries[i].response.clone())
            .ok_or_else(|| ProviderError::ReplayMiss {
                op: op.to_string(),
                digest: digest.clone(),
            })?;
        drop(state);
        serde_json::from_value(value)
            .map_err(|e| ProviderError::Malformed(format!("replayed {op}: {e}")))
    }
}

/// Incremental request digest.
struct RequestDigest(Sha256);

impl RequestDigest {
    fn new(op: &str) -> Self {
        let mut d = Self(Sha256::new());
        d.bytes(op.as_bytes());
        d
    }

    fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    fn num(&mut self, x: f64) -> &mut Self {
        self.0.update(x.to_bits().to_le_bytes());
        self
    }

    fn floats(&mut self, xs: &[f64]) -> &mut Self {
        self.0.update((xs.len() as u64).to_le_bytes());
        for x in xs {
            self.num(*x);
        }
        self
    }

    fn frame(&mut self, f: &Frame) -> &mut Self {
        self.num(f.timestamp);
        match &f.payload {
            FramePayload::ImagePath(p) => self.bytes(b"path").bytes(p.to_string_lossy().as_bytes()),
            FramePayload::ImageBytes(b) => self.bytes(b"bytes").bytes(b),
            FramePayload::Encoding(e) => self.bytes(b"encoding").floats(e),
        }
    }

    fn frames(&mut self, fs: &[Frame]) -> &mut Self {
        self.0.update((fs.len() as u64).to_le_bytes());
        for f in fs {
            self.frame(f);
        }
        self
    }

    fn instruction(&mut self, i: &Instruction) -> &mut Self {
        self.bytes(i.text.as_bytes()).num(i.issued_at)
    }

    fn finish(&mut self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

fn encode_frame_digest(f: &Frame) -> String {
    RequestDigest::new("encode_frame").frame(f).finish()
}

fn pool_digest(encodings: &[FrameEncoding]) -> String {
    let mut d = RequestDigest::new("pool");
    for e in encodings {
        d.num(e.frame_timestamp).floats(&e.values);
    }
    d.finish()
}

fn text_digest(cue: &str) -> String {
    RequestDigest::new("embed_text").bytes(cue.as_bytes()).finish()
}

fn segment_digest(frames: &[Frame]) -> String {
    RequestDigest::new("embed_segment").frames(frames).finish()
}

fn propose_digest(i: &Instruction, context: &[Frame]) -> String {
    RequestDigest::new("propose").instruction(i).frames(context).finish()
}

fn respond_digest(i: &Instruction, recent: &[Frame], t: &TriggerEvent) -> String {
    RequestDigest::new("respond")
        .instruction(i)
        .frames(recent)
        .num(t.time)
        .bytes(&(t.best_proposal_index as u64).to_le_bytes())
        .num(t.surge)
        .finish()
}

#[derive(Serialize, Deserialize)]
struct ProposalsResponse {
    proposals: Vec<String>,
    created_at: f64,
}

fn to_embedding(values: Vec<f64>) -> Result<EmbeddingVector, ProviderError> {
    EmbeddingVector::new(values).map_err(|e| ProviderError::Malformed(e.to_string()))
}

pub struct RecordingEmbedder {
    inner: Arc<dyn Embedder>,
    log: ReplayLog,
}

impl RecordingEmbedder {
    pub fn new(inner: Arc<dyn Embedder>, log: ReplayLog) -> Self {
        log.record(CAPABILITIES, CAPABILITIES.to_string(), &inner.capabilities());
        Self { inner, log }
    }
}

impl Embedder for RecordingEmbedder {
    fn capabilities(&self) -> ProviderCapabilities {
        self.inner.capabilities()
    }

    fn encode_frame(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError> {
        let out = self.inner.encode_frame(frame)?;
        self.log.record("encode_frame", encode_frame_digest(frame), &out);
        Ok(out)
    }

    fn pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError> {
        let out = self.inner.pool(encodings)?;
        self.log.record("pool", pool_digest(encodings), &out);
        Ok(out)
    }

    fn embed_text(&self, cue: &str) -> Result<EmbeddingVector, ProviderError> {
        let out = self.inner.embed_text(cue)?;
        self.log.record("embed_text", text_digest(cue), &out);
        Ok(out)
    }

    fn embed_segment(&self, frames: &[Frame]) -> Result<EmbeddingVector, ProviderError> {
        let out = self.inner.embed_segment(frames)?;
        self.log.record("embed_segment", segment_digest(frames), &out);
        Ok(out)
    }
}

pub struct ReplayEmbedder {
    log: ReplayLog,
    capabilities: ProviderCapabilities,
}

impl ReplayEmbedder {
    pub fn new(log: ReplayLog) -> Result<Self, ProviderError> {
        let capabilities = log.lookup(CAPABILITIES, CAPABILITIES.to_string())?;
        Ok(Self { log, capabilities })
    }
}

impl Embedder for ReplayEmbedder {
    fn capabilities(&self) -> ProviderCapabilities {
        self.capabilities
    }

    fn encode_frame(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError> {
        self.log.lookup("encode_frame", encode_frame_digest(frame))
    }

    fn pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError> {
        to_embedding(self.log.lookup("pool", pool_digest(encodings))?)
    }

    fn embed_text(&self, cue: &str) -> Result<EmbeddingVector, ProviderError> {
        to_embedding(self.log.lookup("embed_text", text_digest(cue))?)
    }

    fn embed_segment(&self, frames: &[Frame]) -> Result<EmbeddingVector, ProviderError> {
        to_embedding(self.log.lookup("embed_segment", segment_digest(frames))?)
    }
}

pub struct RecordingProposer {
    inner: Arc<dyn Proposer>,
    log: ReplayLog,
}

impl RecordingProposer {
    pub fn new(inner: Arc<dyn Proposer>, log: ReplayLog) -> Self {
        Self { inner, log }
    }
}

impl Proposer for RecordingProposer {
    fn propose(
        &self,
        instruction: &Instruction,
        context: &[Frame],
    ) -> Result<ProposalSet, ProviderError> {
        let out = self.inner.propose(instruction, context)?;
        let response = ProposalsResponse {
            proposals: out.cues().map(str::to_string).collect(),
            created_at: out.created_at(),
        };
        self.log
            .record("propose", propose_digest(instruction, context), &response);
        Ok(out)
    }
}

pub struct ReplayProposer {
    log: ReplayLog,
}

impl ReplayProposer {
    pub fn new(log: ReplayLog) -> Self {
        Self { log }
    }
}

impl Proposer for ReplayProposer {
    fn propose(
        &self,
        instruction: &Instruction,
        context: &[Frame],
    ) -> Result<ProposalSet, ProviderError> {
        let r: ProposalsResponse = self
            .log
            .lookup("propose", propose_digest(instruction, context))?;
        if r.proposals.is_empty() {
            return Err(ProviderError::EmptyProposals);
        }
        ProposalSet::from_cues(r.proposals, instruction.clone(), r.created_at)
            .map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

pub struct RecordingResponder {
    inner: Arc<dyn Responder>,
    log: ReplayLog,
}

impl RecordingResponder {
    pub fn new(inner: Arc<dyn Responder>, log: ReplayLog) -> Self {
        Self { inner, log }
    }
}

impl Responder for RecordingResponder {
    fn respond(
        &self,
        instruction: &Instruction,
        recent: &[Frame],
        trigger: &TriggerEvent,
    ) -> Result<ResponderVerdict, ProviderError> {
        let out = self.inner.respond(instruction, recent, trigger)?;
        self.log.record(
            "respond",
            respond_digest(instruction, recent, trigger),
            &json!({"text": out.text, "accepted": out.accepted}),
        );
        Ok(out)
    }
}

pub struct ReplayResponder {
    log: ReplayLog,
}

impl ReplayResponder {
    pub fn new(log: ReplayLog) -> Self {
        Self { log }
    }
}

impl Responder for ReplayResponder {
    fn respond(
        &self,
        instruction: &Instruction,
        recent: &[Frame],
        trigger: &TriggerEvent,
    ) -> Result<ResponderVerdict, ProviderError> {
        self.log
            .lookup("respond", respond_digest(instruction, recent, trigger))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{MockEmbedder, MockProposer, MockResponder};

    #[test]
    fn recorded_calls_replay_exactly() {
        let log = ReplayLog::new();
        let rec = RecordingEmbedder::new(Arc::new(MockEmbedder::new(4, 8)), log.clone());
        let f = Frame::with_bytes(1.0, b"x".to_vec());
        let enc = rec.encode_frame(&f).unwrap();
        let pooled = rec.pool(std::slice::from_ref(&enc)).unwrap();
        let text = rec.embed_text("steam").unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        log.save(&path).unwrap();
        let replay = ReplayEmbedder::new(ReplayLog::load(&path).unwrap()).unwrap();
        assert_eq!(replay.capabilities().embedding_dim, 8);
        assert_eq!(replay.encode_frame(&f).unwrap(), enc);
        assert_eq!(replay.pool(&[enc]).unwrap(), pooled);
        assert_eq!(replay.embed_text("steam").unwrap(), text);
        assert!(matches!(
            replay.embed_text("smoke"),
            Err(ProviderError::ReplayMiss { .. })
        ));
    }

    #[test]
    fn proposer_and_responder_replay() {
        let log = ReplayLog::new();
        let i = Instruction::new("tell me when the water boils", 5.0).unwrap();
        let ctx = vec![Frame::with_bytes(5.0, b"c".to_vec())];
        let set = RecordingProposer::new(Arc::new(MockProposer::builtin()), log.clone())
            .propose(&i, &ctx)
            .unwrap();
        let t = TriggerEvent::new(11.0, 0, 0.2);
        let v = RecordingResponder::new(Arc::new(MockResponder::new(Some((10.0, 14.0)))), log.clone())
            .respond(&i, &ctx, &t)
            .unwrap();

        assert_eq!(ReplayProposer::new(log.clone()).propose(&i, &ctx).unwrap(), set);
        assert_eq!(ReplayResponder::new(log.clone()).respond(&i, &ctx, &t).unwrap(), v);
        // a different context is a different request
        assert!(ReplayProposer::new(log).propose(&i, &[]).is_err());
    }

    #[test]
    fn duplicate_requests_are_stored_once() {
        let log = ReplayLog::new();
        let rec = RecordingEmbedder::new(Arc::new(MockEmbedder::new(0, 4)), log.clone());
        rec.embed_text("a").unwrap();
        rec.embed_text("a").unwrap();
        // capabilities + one text embedding
        assert_eq!(log.len(), 2);
    }
}
