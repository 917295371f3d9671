//! Prompt rendering and fine-tuning record exports.
//!
//! Prompts list every candidate caption between `<option>` and `</option>`
//! literals, one per line. Targets always carry the chosen caption verbatim:
//! `Prediction: <option> {caption} </option>`, optionally preceded by
//! `Reason: {text} `.

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Example, ExampleKey, OPTION_CLOSE, OPTION_OPEN};
use crate::{exec, seeds};

pub const SYSTEM_FRAMING: &str = "You are an expert in movies and shows. I want you to predict which of the available artworks the user would like the most based on their past watch history.";
pub const OPTIONS_INTRO: &str = "Here are the artwork options:";
pub const CLOSING_INSTRUCTION: &str = "Output the best artwork in text.";
pub const REASON_PREFIX: &str = "Reason:";
/// Generation prefix that steers output into the extractable format.
pub const GUIDED_PREFIX: &str = "Prediction: <option>";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{field} contains an option delimiter literal")]
    DelimiterInText { field: String },
    #[error("unbalanced delimiter at byte {offset}")]
    Unbalanced { offset: usize },
    #[error("prompt contains no options")]
    NoOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub example: Example,
    pub prompt_text: String,
    /// (option_id, byte range of the caption inside `prompt_text`).
    pub option_spans: Vec<(u32, Range<usize>)>,
}

impl PromptRecord {
    pub fn caption_at(&self, index: usize) -> &str {
        &self.prompt_text[self.option_spans[index].1.clone()]
    }
}

fn has_delimiter(text: &str) -> bool {
    text.contains(OPTION_OPEN) || text.contains(OPTION_CLOSE)
}

/// Renders the instruction prompt for one example.
pub fn render_prompt(example: &Example) -> Result<PromptRecord, PromptError> {
    let history = example.user.render_history();
    if has_delimiter(&history) {
        return Err(PromptError::DelimiterInText {
            field: "history".into(),
        });
    }
    if has_delimiter(&example.title.name) {
        return Err(PromptError::DelimiterInText {
            field: "title_name".into(),
        });
    }
    let mut text = String::with_capacity(
        512 + example
            .title
            .options
            .iter()
            .map(|o| o.caption.len() + 24)
            .sum::<usize>(),
    );
    text.push_str(SYSTEM_FRAMING);
    text.push_str("\nThe user's past interactions: ");
    text.push_str(&history);
    text.push_str(".\nThe user's new title is: ");
    text.push_str(&example.title.name);
    text.push_str(".\n");
    text.push_str(OPTIONS_INTRO);
    text.push('\n');
    let mut spans = Vec::with_capacity(example.title.options.len());
    for o in &example.title.options {
        if has_delimiter(&o.caption) {
            return Err(PromptError::DelimiterInText {
                field: format!("option {} caption", o.option_id),
            });
        }
        text.push_str(OPTION_OPEN);
        text.push(' ');
        let start = text.len();
        text.push_str(&o.caption);
        spans.push((o.option_id, start..text.len()));
        text.push(' ');
        text.push_str(OPTION_CLOSE);
        text.push('\n');
    }
    text.push_str(CLOSING_INSTRUCTION);
    Ok(PromptRecord {
        example: example.clone(),
        prompt_text: text,
        option_spans: spans,
    })
}

/// Recovers the ordered captions from a rendered prompt.
///
/// One space of padding inside each delimiter pair is stripped.
pub fn parse_prompt(text: &str) -> Result<Vec<(u32, String)>, PromptError> {
    let mut out = Vec::new();
    let mut pos = 0;
    let mut open: Option<usize> = None;
    while pos < text.len() {
        let rest = &text[pos..];
        if rest.starts_with(OPTION_OPEN) {
            if open.is_some() {
                return Err(PromptError::Unbalanced { offset: pos });
            }
            pos += OPTION_OPEN.len();
            open = Some(pos);
        } else if rest.starts_with(OPTION_CLOSE) {
            let start = open.take().ok_or(PromptError::Unbalanced { offset: pos })?;
            let inner = &text[start..pos];
            let inner = inner.strip_prefix(' ').unwrap_or(inner);
            let inner = inner.strip_suffix(' ').unwrap_or(inner);
            out.push((out.len() as u32 + 1, inner.to_string()));
            pos += OPTION_CLOSE.len();
        } else {
            pos += rest.chars().next().map_or(1, char::len_utf8);
        }
    }
    if let Some(start) = open {
        return Err(PromptError::Unbalanced {
            offset: start - OPTION_OPEN.len(),
        });
    }
    if out.is_empty() {
        return Err(PromptError::NoOptions);
    }
    Ok(out)
}

/// `Prediction: <option> {caption} </option>`
pub fn prediction_target(caption: &str) -> String {
    format!("Prediction: {OPTION_OPEN} {caption} {OPTION_CLOSE}")
}

/// `Reason: {reasoning} Prediction: <option> {caption} </option>`
pub fn reasoning_target(reasoning: &str, caption: &str) -> String {
    format!("{REASON_PREFIX} {reasoning} {}", prediction_target(caption))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Sft,
    SftReasoning,
    Dpo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingTarget {
    Completion(String),
    Preference { chosen: String, rejected: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub key: ExampleKey,
    pub prompt_text: String,
    pub kind: RecordKind,
    pub target: TrainingTarget,
    pub reasoning: Option<String>,
    /// Rejected option id for preference records.
    pub rejected_id: Option<u32>,
}

#[derive(Serialize)]
struct CompletionLine<'a> {
    prompt: &'a str,
    completion: &'a str,
}

#[derive(Serialize)]
struct PreferenceLine<'a> {
    prompt: &'a str,
    chosen: &'a str,
    rejected: &'a str,
}

impl TrainingRecord {
    /// One JSONL line (without trailing newline).
    pub fn to_json_line(&self) -> String {
        let line = match &self.target {
            TrainingTarget::Completion(c) => serde_json::to_string(&CompletionLine {
                prompt: &self.prompt_text,
                completion: c,
            }),
            TrainingTarget::Preference { chosen, rejected } => {
                serde_json::to_string(&PreferenceLine {
                    prompt: &self.prompt_text,
                    chosen,
                    rejected,
                })
            }
        };
        line.expect("string fields always serialize")
    }

    pub fn completion(&self) -> Option<&str> {
        match &self.target {
            TrainingTarget::Completion(c) => Some(c),
            TrainingTarget::Preference { .. } => None,
        }
    }
}

pub fn write_jsonl<W: Write>(mut writer: W, records: &[TrainingRecord]) -> std::io::Result<()> {
    for r in records {
        writer.write_all(r.to_json_line().as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportStats {
    pub emitted: usize,
    /// No accepted reasoning, or too few options for a pair.
    pub skipped_missing: usize,
    /// Reasoning text contained an option delimiter.
    pub skipped_invalid: usize,
}

pub fn export_sft(examples: &[Example]) -> Result<Vec<TrainingRecord>, PromptError> {
    exec::ordered_map(examples, |_, e| {
        let prompt = render_prompt(e)?;
        Ok(TrainingRecord {
            key: e.key(),
            prompt_text: prompt.prompt_text,
            kind: RecordKind::Sft,
            target: TrainingTarget::Completion(prediction_target(e.truth_caption())),
            reasoning: None,
            rejected_id: None,
        })
    })
    .into_iter()
    .collect()
}

/// Reasoning-augmented SFT records; examples lacking an accepted reasoning are
/// counted and omitted.
pub fn export_sft_reasoning(
    examples: &[Example],
    reasonings: &HashMap<ExampleKey, String>,
) -> Result<(Vec<TrainingRecord>, ExportStats), PromptError> {
    enum Outcome {
        Record(TrainingRecord),
        Missing,
        Invalid,
    }
    let outcomes = exec::ordered_map(examples, |_, e| -> Result<Outcome, PromptError> {
        let key = e.key();
        let Some(reason) = reasonings.get(&key) else {
            return Ok(Outcome::Missing);
        };
        if has_delimiter(reason) {
            return Ok(Outcome::Invalid);
        }
        let prompt = render_prompt(e)?;
        Ok(Outcome::Record(TrainingRecord {
            key,
            prompt_text: prompt.prompt_text,
            kind: RecordKind::SftReasoning,
            target: TrainingTarget::Completion(reasoning_target(reason, e.truth_caption())),
            reasoning: Some(reason.clone()),
            rejected_id: None,
        }))
    });
    let mut stats = ExportStats::default();
    let mut records = Vec::new();
    for o in outcomes {
        match o? {
            Outcome::Record(r) => {
                stats.emitted += 1;
                records.push(r);
            }
            Outcome::Missing => stats.skipped_missing += 1,
            Outcome::Invalid => stats.skipped_invalid += 1,
        }
    }
    Ok((records, stats))
}

/// Uniformly chosen non-truth option id for `example` under `seed`.
pub fn draw_rejected(example: &Example, seed: u64) -> Option<u32> {
    let m = example.option_count() as u32;
    if m < 2 {
        return None;
    }
    let key = example.key().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_from_bytes(seed, key.as_bytes()));
    let k = rng.random_range(1..m);
    Some(if k >= example.truth_index { k + 1 } else { k })
}

/// Chosen/rejected preference records; rejected is uniform over non-truth options.
pub fn export_dpo(
    examples: &[Example],
    seed: u64,
) -> Result<(Vec<TrainingRecord>, ExportStats), PromptError> {
    let outcomes = exec::ordered_map(examples, |_, e| -> Result<Option<TrainingRecord>, PromptError> {
        let Some(rejected_id) = draw_rejected(e, seed) else {
            return Ok(None);
        };
        let prompt = render_prompt(e)?;
        let rejected = e
            .title
            .caption(rejected_id)
            .expect("rejected id addresses an option");
        Ok(Some(TrainingRecord {
            key: e.key(),
            prompt_text: prompt.prompt_text,
            kind: RecordKind::Dpo,
            target: TrainingTarget::Preference {
                chosen: prediction_target(e.truth_caption()),
                rejected: prediction_target(rejected),
            },
            reasoning: None,
            rejected_id: Some(rejected_id),
        }))
    });
    let mut stats = ExportStats::default();
    let mut records = Vec::new();
    for o in outcomes {
        match o? {
            Some(r) => {
                stats.emitted += 1;
                records.push(r);
            }
            None => stats.skipped_missing += 1,
        }
    }
    Ok((records, stats))
}

/// Splits a target into its optional reasoning and the predicted caption.
/// Returns `None` when the text does not match the target grammar.
pub fn parse_target(target: &str) -> Option<(Option<&str>, &str)> {
    let (reason, prediction) = match target.strip_prefix(REASON_PREFIX) {
        Some(rest) => {
            let pos = rest.rfind(" Prediction: ")?;
            (Some(rest[..pos].trim_start()), &rest[pos + 1..])
        }
        None => (None, target),
    };
    let inner = prediction
        .strip_prefix("Prediction: ")?
        .strip_prefix(OPTION_OPEN)?
        .strip_prefix(' ')?
        .strip_suffix(OPTION_CLOSE)?
        .strip_suffix(' ')?;
    Some((reason, inner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, CorpusConfig, UserProfile};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn corpus(m: u32, n: usize) -> Vec<Example> {
        let config = CorpusConfig {
            n_users: 20,
            n_titles: 20,
            n_examples: n,
            m_distribution: BTreeMap::from([(m, 1.0)]),
            seed: 21,
            ..CorpusConfig::default()
        };
        synth_corpus(&config).unwrap().examples
    }

    #[test]
    fn two_options_two_delimiters() {
        let e = &corpus(2, 1)[0];
        let p = render_prompt(e).unwrap();
        assert_eq!(p.prompt_text.matches(OPTION_OPEN).count(), 2);
        assert_eq!(p.prompt_text.matches(OPTION_CLOSE).count(), 2);
        assert!(p.prompt_text.starts_with(SYSTEM_FRAMING));
        assert!(p.prompt_text.ends_with(CLOSING_INSTRUCTION));
        assert!(p.prompt_text.contains(&format!("The user's new title is: {}.", e.title.name)));
        for (i, o) in e.title.options.iter().enumerate() {
            assert_eq!(p.caption_at(i), o.caption);
        }
    }

    #[test]
    fn empty_history_still_renders() {
        let mut e = corpus(3, 1).remove(0);
        e.user = Arc::new(UserProfile {
            user_id: "u".into(),
            interactions: vec![],
            latent: vec![],
        });
        let p = render_prompt(&e).unwrap();
        assert!(p.prompt_text.contains("no prior interactions"));
        assert_eq!(parse_prompt(&p.prompt_text).unwrap().len(), 3);
    }

    #[test]
    fn refuses_delimiter_captions() {
        let mut e = corpus(3, 1).remove(0);
        let mut t = (*e.title).clone();
        t.options[1].caption.push_str(" <option>");
        e.title = Arc::new(t);
        assert!(matches!(render_prompt(&e), Err(PromptError::DelimiterInText { .. })));
    }

    #[test]
    fn render_parse_round_trip_41_options() {
        let e = &corpus(41, 1)[0];
        let parsed = parse_prompt(&render_prompt(e).unwrap().prompt_text).unwrap();
        assert_eq!(parsed.len(), 41);
        for ((id, cap), o) in parsed.iter().zip(&e.title.options) {
            assert_eq!((*id, cap.as_str()), (o.option_id, o.caption.as_str()));
        }
    }

    #[test]
    fn parse_minimal_and_malformed() {
        assert_eq!(
            parse_prompt("x <option>A</option><option>B</option> y").unwrap(),
            vec![(1, "A".to_string()), (2, "B".to_string())]
        );
        assert_eq!(
            parse_prompt("<option><option>"),
            Err(PromptError::Unbalanced { offset: 8 })
        );
        assert_eq!(parse_prompt("a </option>"), Err(PromptError::Unbalanced { offset: 2 }));
        assert_eq!(parse_prompt("<option> a"), Err(PromptError::Unbalanced { offset: 0 }));
        assert_eq!(parse_prompt("nothing"), Err(PromptError::NoOptions));
        assert_eq!(
            PromptError::Unbalanced { offset: 8 }.to_string(),
            "unbalanced delimiter at byte 8"
        );
    }

    #[test]
    fn sft_target_carries_truth_caption() {
        let examples = corpus(5, 10);
        let records = export_sft(&examples).unwrap();
        assert_eq!(records.len(), 10);
        for (r, e) in records.iter().zip(&examples) {
            let (reason, caption) = parse_target(r.completion().unwrap()).unwrap();
            assert!(reason.is_none());
            assert_eq!(caption, e.truth_caption());
        }
        assert_eq!(export_sft(&examples).unwrap(), records);
    }

    #[test]
    fn reasoning_export_counts_skips() {
        let examples = corpus(4, 100);
        let mut map: HashMap<ExampleKey, String> = examples
            .iter()
            .take(98)
            .map(|e| (e.key(), format!("Because {} fits.", e.title.name)))
            .collect();
        let (records, stats) = export_sft_reasoning(&examples, &map).unwrap();
        assert_eq!((records.len(), stats.skipped_missing), (98, 2));

        let plain = export_sft(&examples).unwrap();
        for r in &records {
            let reason = r.reasoning.as_deref().unwrap();
            let stripped = r
                .completion()
                .unwrap()
                .strip_prefix(&format!("{REASON_PREFIX} {reason} "))
                .unwrap();
            let p = plain.iter().find(|p| p.key == r.key).unwrap();
            assert_eq!(stripped, p.completion().unwrap());
        }

        map.insert(examples[0].key(), "bad </option> text".into());
        let (_, stats) = export_sft_reasoning(&examples, &map).unwrap();
        assert_eq!(stats.skipped_invalid, 1);

        let (none, stats) = export_sft_reasoning(&examples, &HashMap::new()).unwrap();
        assert!(none.is_empty());
        assert_eq!(stats.skipped_missing, 100);
    }

    #[test]
    fn dpo_pairs_are_valid_and_deterministic() {
        let examples = corpus(2, 20);
        let (records, _) = export_dpo(&examples, 3).unwrap();
        for (r, e) in records.iter().zip(&examples) {
            assert_eq!(r.rejected_id, Some(3 - e.truth_index));
            let TrainingTarget::Preference { chosen, rejected } = &r.target else {
                panic!()
            };
            assert_eq!(parse_target(chosen).unwrap().1, e.truth_caption());
            assert_ne!(chosen, rejected);
        }
        assert_eq!(export_dpo(&examples, 3).unwrap().0, records);
    }

    #[test]
    fn json_lines_have_expected_fields() {
        let examples = corpus(3, 2);
        let sft = export_sft(&examples).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sft[0].to_json_line()).unwrap();
        assert!(v.get("prompt").is_some() && v.get("completion").is_some());
        let (dpo, _) = export_dpo(&examples, 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&dpo[0].to_json_line()).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 3);
        assert!(v.get("chosen").is_some() && v.get("rejected").is_some());
    }
}
