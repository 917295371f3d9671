//! Maps a free-text generation back to one candidate option by word n-gram overlap.

use std::hash::Hash;

use rustc_hash::FxHashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{OPTION_CLOSE, OPTION_OPEN};

pub const PREDICTION_PREFIX: &str = "Prediction:";
/// Word n-gram order used when none is given.
pub const DEFAULT_NGRAM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub option_id: u32,
    /// Fraction of the winner's n-grams found in the generation.
    pub score: f64,
    /// At least two candidates share the maximum score (includes the all-zero case).
    pub tie: bool,
    pub matched_ngrams: usize,
}

impl ExtractionResult {
    /// No candidate matched at all; callers may treat this as an abstention.
    pub fn is_abstention(&self) -> bool {
        self.score == 0.0
    }
}

/// Calls `emit` with each lowercase word token of `text`, skipping option
/// delimiters and the prediction prefix.
pub(crate) fn for_each_token(text: &str, mut emit: impl FnMut(&str)) {
    let mut token = String::new();
    let mut rest = text;
    while let Some(ch) = rest.chars().next() {
        if ch == '<' || ch == 'P' {
            let skip = [OPTION_CLOSE, OPTION_OPEN, PREDICTION_PREFIX]
                .into_iter()
                .find(|p| rest.starts_with(p));
            if let Some(p) = skip {
                if !token.is_empty() {
                    emit(&token);
                    token.clear();
                }
                rest = &rest[p.len()..];
                continue;
            }
        }
        rest = &rest[ch.len_utf8()..];
        if ch.is_ascii() {
            if ch.is_ascii_alphanumeric() {
                token.push(ch.to_ascii_lowercase());
            } else if !token.is_empty() {
                emit(&token);
                token.clear();
            }
            continue;
        }
        for lc in ch.to_lowercase() {
            if lc.is_alphanumeric() {
                token.push(lc);
            } else if !token.is_empty() {
                emit(&token);
                token.clear();
            }
        }
    }
    if !token.is_empty() {
        emit(&token);
    }
}

/// Lowercase word tokens with punctuation, delimiters and the prediction prefix removed.
pub fn normalize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for_each_token(text, |t| out.push(t.to_string()));
    out
}

type Counts<'a, T> = FxHashMap<&'a [T], u32>;

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> Counts<'_, T> {
    let mut counts = Counts::default();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Matched and total n-gram counts of `candidate` against `generation`.
///
/// `gen` holds the generation's n-gram counts for every order in use and
/// `used` is scratch space.
fn overlap<'a, T: Hash + Eq>(
    candidate: &'a [T],
    gen: &mut dyn FnMut(usize) -> &'a Counts<'a, T>,
    used: &mut Counts<'a, T>,
    n: usize,
) -> (usize, usize) {
    let n = n.min(candidate.len()).max(1);
    let gen = gen(n);
    used.clear();
    let mut matched = 0;
    for w in candidate.windows(n) {
        let available = gen.get(w).copied().unwrap_or(0);
        let u = used.entry(w).or_insert(0);
        if *u < available {
            *u += 1;
            matched += 1;
        }
    }
    (matched, candidate.len() + 1 - n)
}

/// Multiset n-gram recall of `candidate` inside `generation`, in `[0, 1]`.
///
/// Candidates shorter than `n` tokens are scored at their own length.
pub fn ngram_score(candidate: &[String], generation: &[String], n: usize) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let order = n.min(candidate.len()).max(1);
    let counts = ngram_counts(generation, order);
    let mut used = Counts::default();
    let (matched, total) = overlap(candidate, &mut |_| &counts, &mut used, n);
    matched as f64 / total as f64
}

/// The part of a generation that follows the last `Prediction:` marker, or
/// the whole text when there is none.
pub fn prediction_span(generation: &str) -> &str {
    match generation.rfind(PREDICTION_PREFIX) {
        Some(pos) => &generation[pos + PREDICTION_PREFIX.len()..],
        None => generation,
    }
}

/// Candidate captions as interned token ids, reusable across many generations.
#[derive(Debug, Clone)]
pub struct CandidateIndex {
    vocab: FxHashMap<String, u32>,
    tokens: Vec<Vec<u32>>,
    n: usize,
}

/// Id for generation tokens that no candidate contains.
const UNKNOWN: u32 = u32::MAX;

impl CandidateIndex {
    pub fn new<S: AsRef<str>>(captions: &[S], n: usize) -> Self {
        let mut vocab: FxHashMap<String, u32> = FxHashMap::default();
        let tokens = captions
            .iter()
            .map(|c| {
                let mut ids = Vec::new();
                for_each_token(c.as_ref(), |t| {
                    let next = vocab.len() as u32;
                    let id = match vocab.get(t) {
                        Some(&id) => id,
                        None => {
                            vocab.insert(t.to_string(), next);
                            next
                        }
                    };
                    ids.push(id);
                });
                ids
            })
            .collect();
        Self {
            vocab,
            tokens,
            n: n.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Highest-scoring option (1-based); ties go to the lowest id and are flagged.
    pub fn extract(&self, generation: &str) -> ExtractionResult {
        assert!(!self.tokens.is_empty(), "extraction needs at least one candidate");
        let mut gen_ids = Vec::new();
        for_each_token(prediction_span(generation), |t| {
            gen_ids.push(self.vocab.get(t).copied().unwrap_or(UNKNOWN));
        });
        // one count table per n-gram order; short candidates need lower orders
        let tables: Vec<Counts<'_, u32>> = (1..=self.n).map(|k| ngram_counts(&gen_ids, k)).collect();
        let mut used = Counts::default();
        let mut best = ExtractionResult {
            option_id: 1,
            score: f64::NEG_INFINITY,
            tie: false,
            matched_ngrams: 0,
        };
        for (i, cand) in self.tokens.iter().enumerate() {
            let (matched, total) = if cand.is_empty() {
                (0, 1)
            } else {
                overlap(cand, &mut |k| &tables[k - 1], &mut used, self.n)
            };
            let score = matched as f64 / total as f64;
            if score > best.score {
                best = ExtractionResult {
                    option_id: i as u32 + 1,
                    score,
                    tie: false,
                    matched_ngrams: matched,
                };
            } else if score == best.score {
                best.tie = true;
            }
        }
        best
    }
}

/// Scores every candidate caption against `generation` with word `n`-grams.
pub fn extract_prediction<S: AsRef<str>>(
    generation: &str,
    candidates: &[S],
    n: usize,
) -> ExtractionResult {
    CandidateIndex::new(candidates, n).extract(generation)
}
