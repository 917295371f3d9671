//! Deterministic stand-in generators.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Backend, BackendError, GenerationRequest, Purpose};
use crate::corpus::{Example, OPTION_CLOSE};
use crate::policylab::{predict, Featurizer, PolicyParams};
use crate::seeds;

fn request_rng(request: &GenerationRequest, seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seeds::derive_from_bytes(seed, &request.fingerprint()))
}

fn example<'a>(request: &'a GenerationRequest, who: &'static str) -> Result<&'a Example, BackendError> {
    request.validate()?;
    request.example.as_ref().ok_or(BackendError::MissingExample(who))
}

fn answer(caption: &str) -> String {
    format!(" {caption} {OPTION_CLOSE}")
}

/// A short justification built from the user's history; contains no captions.
pub fn canned_justification(example: &Example) -> String {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for i in &example.user.interactions {
        for g in i.genres.split(',').map(str::trim).filter(|g| !g.is_empty()) {
            match counts.iter_mut().find(|(name, _)| name == g) {
                Some((_, c)) => *c += 1,
                None => counts.push((g.to_string(), 1)),
            }
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let top: Vec<&str> = counts.iter().take(2).map(|(g, _)| g.as_str()).collect();
    let taste = match top.as_slice() {
        [] => "a broad mix of titles".to_string(),
        [one] => format!("{one} titles"),
        [a, b, ..] => format!("{a} and {b} titles"),
    };
    format!(
        "The user's history leans toward {taste}. This artwork puts that mood up front for {}. \
         It is the option most in line with what the user finished and liked.",
        example.title.name
    )
}

/// Answers with the truth caption; with probability `error_rate` a uniformly
/// drawn wrong caption instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockOracle {
    pub error_rate: f64,
}

impl Backend for MockOracle {
    fn name(&self) -> String {
        format!("mock-oracle:{}", self.error_rate)
    }

    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError> {
        let ex = example(request, "mock-oracle")?;
        if request.purpose == Purpose::Explain {
            return Ok(format!(" {}", canned_justification(ex)));
        }
        let mut rng = request_rng(request, seed);
        let m = ex.option_count() as u32;
        let mut pick = ex.truth_index;
        if m > 1 && rng.random_bool(self.error_rate.clamp(0.0, 1.0)) {
            pick = rng.random_range(1..m);
            if pick >= ex.truth_index {
                pick += 1;
            }
        }
        Ok(answer(ex.title.caption(pick).unwrap_or_default()))
    }
}

/// Always answers with the first listed caption.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockFixed;

impl Backend for MockFixed {
    fn name(&self) -> String {
        "mock-fixed".into()
    }

    fn generate(&self, request: &GenerationRequest, _seed: u64) -> Result<String, BackendError> {
        let ex = example(request, "mock-fixed")?;
        if request.purpose == Purpose::Explain {
            return Ok(format!(" {}", canned_justification(ex)));
        }
        Ok(answer(ex.title.caption(1).unwrap_or_default()))
    }
}

/// Truth caption with each word dropped independently with probability `dropout`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockNoisy {
    pub dropout: f64,
}

impl Backend for MockNoisy {
    fn name(&self) -> String {
        format!("mock-noisy:{}", self.dropout)
    }

    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError> {
        let ex = example(request, "mock-noisy")?;
        if request.purpose == Purpose::Explain {
            return Ok(format!(" {}", canned_justification(ex)));
        }
        let mut rng = request_rng(request, seed);
        let p = self.dropout.clamp(0.0, 1.0);
        let kept: Vec<&str> = ex
            .truth_caption()
            .split_whitespace()
            .filter(|_| !rng.random_bool(p))
            .collect();
        Ok(answer(&kept.join(" ")))
    }
}

/// Uniformly random caption.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomGuess;

impl Backend for RandomGuess {
    fn name(&self) -> String {
        "random".into()
    }

    fn generate(&self, request: &GenerationRequest, seed: u64) -> Result<String, BackendError> {
        let ex = example(request, "random")?;
        let mut rng = request_rng(request, seed);
        let caption = ex
            .title
            .options
            .choose(&mut rng)
            .map(|o| o.caption.as_str())
            .unwrap_or_default();
        Ok(answer(caption))
    }
}

/// Greedy answers from a trained option policy.
#[derive(Debug, Clone)]
pub struct PolicyBackend {
    pub label: String,
    pub params: PolicyParams,
    featurizer: Featurizer,
}

impl PolicyBackend {
    pub fn new(label: impl Into<String>, params: PolicyParams) -> Self {
        Self {
            label: label.into(),
            params,
            featurizer: Featurizer::new(),
        }
    }
}

impl Backend for PolicyBackend {
    fn name(&self) -> String {
        format!("policy:{}", self.label)
    }

    fn generate(&self, request: &GenerationRequest, _seed: u64) -> Result<String, BackendError> {
        let ex = example(request, "policy")?;
        if request.purpose == Purpose::Explain {
            return Ok(format!(" {}", canned_justification(ex)));
        }
        let x = self.featurizer.featurize(ex);
        if x.dim() != self.params.weights.len() {
            return Err(BackendError::InvalidRequest(format!(
                "checkpoint has {} weights, features have {}",
                self.params.weights.len(),
                x.dim()
            )));
        }
        let pick = predict(&self.params, &x);
        Ok(answer(ex.title.caption(pick).unwrap_or_default()))
    }
}
