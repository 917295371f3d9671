//! Text features for (user history, candidate caption) pairs.
//!
//! Layout, in order:
//! - one user-theme x caption-theme interaction per lexicon theme
//! - token overlap between history text and caption
//! - share of caption tokens naming a genre the user has watched
//! - caption length bucket (one-hot)
//! - option position (one-hot, last slot collects positions past the limit)
//!
//! Position slots are deliberate: a policy that learns to favor early options
//! shows up in the per-label breakdown.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::lexicon::THEMES;
use crate::corpus::Example;
use crate::extract::for_each_token;

pub const THEME_FEATURES: usize = THEMES.len();
pub const OVERLAP_FEATURE: usize = THEME_FEATURES;
pub const GENRE_MATCH_FEATURE: usize = THEME_FEATURES + 1;
pub const LENGTH_OFFSET: usize = THEME_FEATURES + 2;
/// Upper token-count bounds of the first three length buckets.
pub const LENGTH_BOUNDS: [usize; 3] = [175, 200, 225];
pub const POSITION_OFFSET: usize = LENGTH_OFFSET + LENGTH_BOUNDS.len() + 1;
/// Positions 1..=16 get their own slot, the rest share one.
pub const POSITION_SLOTS: usize = 17;
pub const FEATURE_DIM: usize = POSITION_OFFSET + POSITION_SLOTS;

// Scales bring each real-valued feature to roughly unit spread on the
// synthetic corpus; plain gradient descent is badly conditioned otherwise.
const THEME_SCALE: f64 = 200.0;
const OVERLAP_SCALE: f64 = 50.0;
const GENRE_SCALE: f64 = 100.0;

fn engagement_weight(e: crate::corpus::Engagement) -> f64 {
    use crate::corpus::Engagement::*;
    match e {
        Liked => 1.0,
        Watched => 0.6,
        Abandoned => -0.4,
    }
}

/// Features for every option of one example, row-major `m x FEATURE_DIM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleFeatures {
    pub m: usize,
    /// 0-based ground-truth option.
    pub truth: usize,
    pub values: Vec<f64>,
}

impl ExampleFeatures {
    pub fn dim(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn row(&self, option: usize) -> &[f64] {
        let d = self.dim();
        &self.values[option * d..(option + 1) * d]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Maps words to lexicon themes; shared by every featurization.
#[derive(Debug, Clone)]
pub struct Featurizer {
    word_theme: FxHashMap<&'static str, usize>,
    genre_theme: FxHashMap<&'static str, usize>,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Featurizer {
    pub fn new() -> Self {
        let mut word_theme = FxHashMap::default();
        let mut genre_theme = FxHashMap::default();
        for (i, t) in THEMES.iter().enumerate() {
            genre_theme.insert(t.genre, i);
            for w in t.words() {
                word_theme.insert(w, i);
            }
        }
        Self {
            word_theme,
            genre_theme,
        }
    }

    pub fn feature_names() -> Vec<String> {
        let mut names: Vec<String> = THEMES.iter().map(|t| format!("theme:{}", t.genre)).collect();
        names.push("history_overlap".into());
        names.push("genre_match".into());
        names.push(format!("length:<{}", LENGTH_BOUNDS[0]));
        names.push(format!("length:<{}", LENGTH_BOUNDS[1]));
        names.push(format!("length:<{}", LENGTH_BOUNDS[2]));
        names.push(format!("length:>={}", LENGTH_BOUNDS[2]));
        for p in 1..POSITION_SLOTS {
            names.push(format!("position:{p}"));
        }
        names.push(format!("position:>{}", POSITION_SLOTS - 1));
        names
    }

    pub fn featurize(&self, example: &Example) -> ExampleFeatures {
        let user = &example.user;
        let mut theme_share = [0.0; THEME_FEATURES];
        let mut history_genres = [false; THEME_FEATURES];
        let mut tokens = Interner::default();
        let mut in_history: Vec<bool> = Vec::new();
        for i in &user.interactions {
            let tags: Vec<usize> = i
                .genres
                .split(',')
                .filter_map(|g| self.genre_theme.get(g.trim()).copied())
                .collect();
            let w = engagement_weight(i.engagement);
            for &g in &tags {
                theme_share[g] += w / tags.len() as f64;
                history_genres[g] = true;
            }
            let mut mark = |t: &str| {
                let id = tokens.id(self, t);
                if in_history.len() <= id {
                    in_history.resize(id + 1, false);
                }
                in_history[id] = true;
            };
            for_each_token(&i.title, &mut mark);
            for_each_token(&i.genres, &mut mark);
        }
        let k = user.interactions.len().max(1) as f64;
        theme_share.iter_mut().for_each(|s| *s /= k);

        let m = example.title.options.len();
        let mut values = vec![0.0; m * FEATURE_DIM];
        let mut seen_in: Vec<usize> = Vec::new();
        for (j, option) in example.title.options.iter().enumerate() {
            let row = &mut values[j * FEATURE_DIM..(j + 1) * FEATURE_DIM];
            let mut theme_counts = [0usize; THEME_FEATURES];
            let (mut len, mut genre_hits, mut distinct, mut shared) = (0usize, 0usize, 0usize, 0usize);
            for_each_token(&option.caption, |t| {
                let id = tokens.id(self, t);
                len += 1;
                if let Some(g) = tokens.word_theme[id] {
                    theme_counts[g] += 1;
                }
                if tokens.genre_theme[id].is_some_and(|g| history_genres[g]) {
                    genre_hits += 1;
                }
                if seen_in.len() <= id {
                    seen_in.resize(id + 1, 0);
                }
                if seen_in[id] != j + 1 {
                    seen_in[id] = j + 1;
                    distinct += 1;
                    shared += in_history.get(id).copied().unwrap_or(false) as usize;
                }
            });
            let denom = len.max(1) as f64;
            for g in 0..THEME_FEATURES {
                row[g] = THEME_SCALE * theme_share[g] * theme_counts[g] as f64 / denom;
            }
            row[OVERLAP_FEATURE] = OVERLAP_SCALE * shared as f64 / distinct.max(1) as f64;
            row[GENRE_MATCH_FEATURE] = GENRE_SCALE * genre_hits as f64 / denom;
            let bucket = LENGTH_BOUNDS
                .iter()
                .position(|&b| len < b)
                .unwrap_or(LENGTH_BOUNDS.len());
            row[LENGTH_OFFSET + bucket] = 1.0;
            row[POSITION_OFFSET + j.min(POSITION_SLOTS - 1)] = 1.0;
        }
        ExampleFeatures {
            m,
            truth: example.truth_index as usize - 1,
            values,
        }
    }

    pub fn featurize_all(&self, examples: &[Example]) -> Vec<ExampleFeatures> {
        crate::exec::ordered_map(examples, |_, e| self.featurize(e))
    }
}


/// Per-example token ids; `word_theme` and `genre_theme` are indexed by id.
#[derive(Default)]
struct Interner {
    vocab: FxHashMap<String, usize>,
    word_theme: Vec<Option<usize>>,
    genre_theme: Vec<Option<usize>>,
}

impl Interner {
    fn id(&mut self, f: &Featurizer, t: &str) -> usize {
        if let Some(&id) = self.vocab.get(t) {
            return id;
        }
        let id = self.vocab.len();
        self.vocab.insert(t.to_string(), id);
        self.word_theme.push(f.word_theme.get(t).copied());
        self.genre_theme.push(f.genre_theme.get(t).copied());
        id
    }
}
