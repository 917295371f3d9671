use super::{Backend, BackendError, GenerationRequest};
use crate::corpus::Example;
use crate::exec;
use crate::extract::{CandidateIndex, DEFAULT_NGRAM};
use crate::metrics::{PredictionLog, PredictionRow};
use crate::promptkit::render_prompt;
use crate::seeds;

fn predict_one<B: Backend + ?Sized>(
    backend: &B,
    example: &Example,
    seed: u64,
) -> Result<PredictionRow, BackendError> {
    let prompt = render_prompt(example)?;
    let request = GenerationRequest::predict(prompt.prompt_text, Some(example.clone()));
    let text = backend.generate(&request, seed)?;
    let generation = format!("{}{}", request.prefix, text);
    let captions = example.title.captions();
    let result = CandidateIndex::new(&captions, DEFAULT_NGRAM).extract(&generation);
    let mut row = PredictionRow::for_example(example, result.option_id);
    row.score = Some(result.score);
    row.tie = result.tie;
    Ok(row)
}

/// Predicts every example with `backend` on a pool of `parallelism` workers.
///
/// Rows come back in input order. A failing example yields a row with no
/// prediction and the error message instead of aborting the run.
pub fn run_inference<B: Backend + ?Sized>(
    backend: &B,
    examples: &[Example],
    seed: u64,
    parallelism: usize,
) -> Result<PredictionLog, BackendError> {
    if parallelism == 0 {
        return Err(BackendError::InvalidRequest("parallelism must be >= 1".into()));
    }
    let rows = exec::with_threads(parallelism, || {
        exec::ordered_map(examples, |_, ex| {
            let key = ex.key().to_string();
            let example_seed = seeds::derive_from_bytes(seed, key.as_bytes());
            predict_one(backend, ex, example_seed).unwrap_or_else(|e| PredictionRow {
                example_key: key,
                predicted_id: None,
                score: None,
                tie: false,
                truth_index: ex.truth_index,
                m: ex.option_count() as u32,
                error: Some(e.to_string()),
            })
        })
    });
    Ok(PredictionLog::new(rows))
}
