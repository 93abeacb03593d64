//! HTTP/JSON providers.
//!
//! Endpoints (all `POST`, JSON in and out):
//!
//! | path            | request                                              | response                   |
//! |-----------------|------------------------------------------------------|----------------------------|
//! | `/embed_text`   | `{"text"}`                                           | `{"embedding": [..]}`      |
//! | `/encode_frame` | `{"image_b64"}`                                      | `{"encoding": [..]}`       |
//! | `/pool`         | `{"encodings": [[..], ..]}`                          | `{"embedding": [..]}`      |
//! | `/propose`      | `{"instruction", "context_images_b64": [..]}`        | `{"proposals": ["cue"]}`   |
//! | `/respond`      | `{"instruction", "trigger_time", "context_images_b64"}` | `{"text", "accepted"}`  |
//!
//! A non-2xx status or an unparseable body is a transport error. Failed
//! requests are retried up to `max_attempts` times with a short linear backoff.

use std::time::Duration;

use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    Embedder, FrameEncoding, Proposer, ProviderCapabilities, ProviderError, Responder,
    ResponderVerdict,
};
use crate::matching::normalize;
use crate::model::{EmbeddingVector, Frame, FramePayload, Instruction, ProposalSet, TriggerEvent};

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    pub base_url: String,
    pub timeout: Duration,
    pub max_attempts: u32,
}

#[derive(Clone)]
struct JsonClient {
    settings: RemoteSettings,
    agent: ureq::Agent,
}

impl JsonClient {
    fn new(settings: RemoteSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { settings, agent }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &Value) -> Result<T, ProviderError> {
        let endpoint = format!("{}{}", self.settings.base_url.trim_end_matches('/'), path);
        let attempts = self.settings.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.try_post(&endpoint, body) {
                Ok(v) => return Ok(v),
                Err(message) => last = message,
            }
            if attempt < attempts {
                std::thread::sleep(Duration::from_millis(50 * attempt as u64));
            }
        }
        Err(ProviderError::Transport {
            endpoint,
            attempts,
            message: last,
        })
    }

    fn try_post<T: DeserializeOwned>(&self, endpoint: &str, body: &Value) -> Result<T, String> {
        let mut resp = self
            .agent
            .post(endpoint)
            .send_json(body)
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("http status {}", status.as_u16()));
        }
        resp.body_mut()
            .read_json::<T>()
            .map_err(|e| format!("malformed body: {e}"))
    }
}

fn image_b64(frame: &Frame) -> Result<Option<String>, ProviderError> {
    let engine = &base64::engine::general_purpose::STANDARD;
    Ok(match &frame.payload {
        FramePayload::ImageBytes(b) => Some(engine.encode(b)),
        FramePayload::ImagePath(p) => {
            let bytes =
                std::fs::read(p).map_err(|e| ProviderError::Io(format!("{}: {e}", p.display())))?;
            Some(engine.encode(bytes))
        }
        FramePayload::Encoding(_) => None,
    })
}

/// Images of every frame that carries one; precomputed encodings are skipped.
fn context_images(frames: &[Frame]) -> Result<Vec<String>, ProviderError> {
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        if let Some(b) = image_b64(f)? {
            out.push(b);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct EmbeddingBody {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EncodingBody {
    encoding: Vec<f64>,
}

#[derive(Deserialize)]
struct ProposalsBody {
    proposals: Vec<String>,
}

#[derive(Deserialize)]
struct VerdictBody {
    text: String,
    accepted: bool,
}

pub struct RemoteEmbedder {
    client: JsonClient,
    capabilities: ProviderCapabilities,
}

impl RemoteEmbedder {
    pub fn new(settings: RemoteSettings, capabilities: ProviderCapabilities) -> Self {
        Self {
            client: JsonClient::new(settings),
            capabilities,
        }
    }

    fn check_dim(&self, found: usize) -> Result<(), ProviderError> {
        if found != self.capabilities.embedding_dim {
            return Err(ProviderError::DimensionMismatch {
                expected: self.capabilities.embedding_dim,
                found,
            });
        }
        Ok(())
    }

    fn unit(&self, values: Vec<f64>) -> Result<EmbeddingVector, ProviderError> {
        self.check_dim(values.len())?;
        let v = EmbeddingVector::new(values).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(normalize(&v)?)
    }
}

impl Embedder for RemoteEmbedder {
    fn capabilities(&self) -> ProviderCapabilities {
        self.capabilities
    }

    fn encode_frame(&self, frame: &Frame) -> Result<FrameEncoding, ProviderError> {
        if !self.capabilities.supports_frame_encoding {
            return Err(ProviderError::Unsupported(
                "remote embedder configured without frame encodings".into(),
            ));
        }
        let Some(image) = image_b64(frame)? else {
            let e = frame.encoding().expect("non-image frames carry encodings");
            self.check_dim(e.len())?;
            return FrameEncoding::new(e.to_vec(), frame.timestamp);
        };
        let body: EncodingBody = self
            .client
            .post("/encode_frame", &json!({ "image_b64": image }))?;
        self.check_dim(body.encoding.len())?;
        FrameEncoding::new(body.encoding, frame.timestamp)
    }

    fn pool(&self, encodings: &[FrameEncoding]) -> Result<EmbeddingVector, ProviderError> {
        if encodings.is_empty() {
            return Err(ProviderError::EmptyWindow);
        }
        let rows: Vec<&[f64]> = encodings.iter().map(|e| &*e.values).collect();
        let body: EmbeddingBody = self.client.post("/pool", &json!({ "encodings": rows }))?;
        self.unit(body.embedding)
    }

    fn embed_text(&self, cue: &str) -> Result<EmbeddingVector, ProviderError> {
        if cue.trim().is_empty() {
            return Err(ProviderError::Precondition("cue must be non-empty".into()));
        }
        let body: EmbeddingBody = self.client.post("/embed_text", &json!({ "text": cue }))?;
        self.unit(body.embedding)
    }
}

pub struct RemoteProposer {
    client: JsonClient,
}

impl RemoteProposer {
    pub fn new(settings: RemoteSettings) -> Self {
        Self {
            client: JsonClient::new(settings),
        }
    }
}

impl Proposer for RemoteProposer {
    fn propose(
        &self,
        instruction: &Instruction,
        context: &[Frame],
    ) -> Result<ProposalSet, ProviderError> {
        let body: ProposalsBody = self.client.post(
            "/propose",
            &json!({
                "instruction": instruction.text,
                "context_images_b64": context_images(context)?,
            }),
        )?;
        let cues: Vec<String> = body
            .proposals
            .into_iter()
            .filter(|c| !c.trim().is_empty())
            .collect();
        if cues.is_empty() {
            return Err(ProviderError::EmptyProposals);
        }
        ProposalSet::from_cues(cues, instruction.clone(), instruction.issued_at)
            .map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

pub struct RemoteResponder {
    client: JsonClient,
}

impl RemoteResponder {
    pub fn new(settings: RemoteSettings) -> Self {
        Self {
            client: JsonClient::new(settings),
        }
    }
}

impl Responder for RemoteResponder {
    fn respond(
        &self,
        instruction: &Instruction,
        recent: &[Frame],
        trigger: &TriggerEvent,
    ) -> Result<ResponderVerdict, ProviderError> {
        let body: VerdictBody = self.client.post(
            "/respond",
            &json!({
                "instruction": instruction.text,
                "trigger_time": trigger.time,
                "context_images_b64": context_images(recent)?,
            }),
        )?;
        ResponderVerdict::new(body.text, body.accepted)
    }
}
