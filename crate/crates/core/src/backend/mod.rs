//! Text-generation backends, the inference driver and reasoning distillation.

mod distill;
mod http;
mod inference;
mod mock;

use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::promptkit::{PromptError, GUIDED_PREFIX};

pub use distill::{
    distill_reasoning, explanation_prompt, reasoned_prediction_prompt, replay_reasoning,
    DistillationStats, EXPLANATION_INSTRUCTION, TEACHER_TEMPERATURE,
};
pub use http::{HttpCompletion, HttpConfig, ReplayCache};
pub use inference::run_inference;
pub use mock::{canned_justification, MockFixed, MockNoisy, MockOracle, PolicyBackend, RandomGuess};

/// Characters of a failing response body kept in error messages.
const BODY_EXCERPT: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0} needs the example attached to the request")]
    MissingExample(&'static str),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no cached response for request {0} in replay-only mode")]
    NotCached(String),
    #[error("replay cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl BackendError {
    pub(crate) fn http(status: u16, body: &str) -> Self {
        let body = match body.char_indices().nth(BODY_EXCERPT) {
            Some((cut, _)) => format!("{}...", &body[..cut]),
            None => body.to_string(),
        };
        BackendError::Http { status, body }
    }
}

/// Which prompt shape a request carries. Mocks use it to decide what to say.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Predict,
    /// Reveal-the-truth prompt asking why it fits the user.
    Explain,
    /// Prediction prompt with a justification appended.
    PredictWithReason,
}

impl Purpose {
    fn as_str(self) -> &'static str {
        match self {
            Purpose::Predict => "predict",
            Purpose::Explain => "explain",
            Purpose::PredictWithReason => "predict_with_reason",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub prefix: String,
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub purpose: Purpose,
    /// Ground truth for mock backends; never sent over the wire.
    pub example: Option<Example>,
}

impl GenerationRequest {
    pub const DEFAULT_MAX_NEW_TOKENS: usize = 320;

    pub fn predict(prompt_text: String, example: Option<Example>) -> Self {
        Self {
            prompt_text,
            prefix: GUIDED_PREFIX.to_string(),
            max_new_tokens: Self::DEFAULT_MAX_NEW_TOKENS,
            temperature: 0.0,
            purpose: Purpose::Predict,
            example,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_new_tokens must be >= 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    /// Bytes that identify the request for seeding and caching.
    pub(crate) fn fingerprint(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.prompt_text.len() + self.prefix.len() + 32);
        bytes.extend_from_slice(self.purpose.as_str().as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(self.prompt_text.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(self.prefix.as_bytes());
        bytes
    }
}

/// A text generator. Mocks are pure functions of `(request, seed)`.
pub trait Backend: Send + Sync {
    fn name(&self) -> String;

    /// Continuation of `request.prompt_text + request.prefix`.
    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError> {
        (**self).generate(request, seed)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError> {
        (**self).generate(request, seed)
    }
}
