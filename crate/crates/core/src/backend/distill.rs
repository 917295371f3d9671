//! Reveal-then-justify reasoning distillation with a single-shot consistency filter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, GenerationRequest, Purpose};
use crate::corpus::{Example, ExampleKey, OPTION_CLOSE, OPTION_OPEN};
use crate::exec::ordered_map;
use crate::extract::{extract_prediction, ExtractionResult, DEFAULT_NGRAM};
use crate::promptkit::{render_prompt, GUIDED_PREFIX, REASON_PREFIX};
use crate::seeds;

pub const EXPLANATION_INSTRUCTION: &str =
    "Explain in 3-5 sentences why this artwork best matches this user's tastes.";
/// Decoding temperature for the teacher. Not given upstream; chosen arbitrarily.
pub const TEACHER_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillationStats {
    pub requested: usize,
    pub accepted: usize,
    /// Rejected by the filter, including backend failures.
    pub filtered: usize,
    pub filter_rate: f64,
    pub backend_errors: usize,
}

/// Prompt that reveals the ground truth and asks for a justification.
pub fn explanation_prompt(example: &Example) -> Result<String, BackendError> {
    let prompt = render_prompt(example)?;
    Ok(format!(
        "{}\nThe correct artwork is: {OPTION_OPEN} {} {OPTION_CLOSE}. {EXPLANATION_INSTRUCTION}\n",
        prompt.prompt_text,
        example.truth_caption()
    ))
}

/// Prediction prompt with the justification appended.
pub fn reasoned_prediction_prompt(example: &Example, reasoning: &str) -> Result<String, BackendError> {
    let prompt = render_prompt(example)?;
    Ok(format!("{}\n{REASON_PREFIX} {reasoning}\n", prompt.prompt_text))
}

fn example_seed(seed: u64, example: &Example) -> u64 {
    seeds::derive_from_bytes(seed, example.key().to_string().as_bytes())
}

/// Runs the reasoned prediction for one example and extracts the answer.
pub fn replay_reasoning<B: Backend + ?Sized>(
    teacher: &B,
    example: &Example,
    reasoning: &str,
    seed: u64,
) -> Result<ExtractionResult, BackendError> {
    let request = GenerationRequest {
        prompt_text: reasoned_prediction_prompt(example, reasoning)?,
        prefix: GUIDED_PREFIX.to_string(),
        max_new_tokens: GenerationRequest::DEFAULT_MAX_NEW_TOKENS,
        temperature: TEACHER_TEMPERATURE,
        purpose: Purpose::PredictWithReason,
        example: Some(example.clone()),
    };
    let text = teacher.generate(&request, example_seed(seed, example))?;
    let generation = format!("{}{}", request.prefix, text);
    Ok(extract_prediction(&generation, &example.title.captions(), DEFAULT_NGRAM))
}

fn distill_one<B: Backend + ?Sized>(
    teacher: &B,
    example: &Example,
    seed: u64,
) -> Result<Option<String>, BackendError> {
    let request = GenerationRequest {
        prompt_text: explanation_prompt(example)?,
        prefix: format!("{REASON_PREFIX} "),
        max_new_tokens: GenerationRequest::DEFAULT_MAX_NEW_TOKENS,
        temperature: TEACHER_TEMPERATURE,
        purpose: Purpose::Explain,
        example: Some(example.clone()),
    };
    let reasoning = teacher.generate(&request, example_seed(seed, example))?;
    let reasoning = reasoning.split_whitespace().collect::<Vec<_>>().join(" ");
    if reasoning.is_empty() {
        return Ok(None);
    }
    let result = replay_reasoning(teacher, example, &reasoning, seed)?;
    Ok((result.option_id == example.truth_index).then_some(reasoning))
}

/// Generates a justification per example and keeps those whose reasoned
/// re-prediction lands on the ground truth. No resampling on failure.
pub fn distill_reasoning<B: Backend + ?Sized>(
    examples: &[Example],
    teacher: &B,
    seed: u64,
) -> (HashMap<ExampleKey, String>, DistillationStats) {
    let outcomes = ordered_map(examples, |_, ex| distill_one(teacher, ex, seed));
    let mut kept = HashMap::new();
    let mut stats = DistillationStats {
        requested: examples.len(),
        ..DistillationStats::default()
    };
    for (ex, outcome) in examples.iter().zip(outcomes) {
        match outcome {
            Ok(Some(reasoning)) => {
                stats.accepted += 1;
                kept.insert(ex.key(), reasoning);
            }
            Ok(None) => stats.filtered += 1,
            Err(_) => {
                stats.filtered += 1;
                stats.backend_errors += 1;
            }
        }
    }
    if stats.requested > 0 {
        stats.filter_rate = stats.filtered as f64 / stats.requested as f64;
    }
    (kept, stats)
}
