//! Users, titles, artwork options and the examples that tie them together.
//!
//! Synthetic corpora carry hidden latent vectors on users and options. The
//! ground-truth artwork for a (user, title) pair is drawn from a softmax over
//! their dot-product affinities, so the Bayes-optimal choice is always
//! recoverable from the latents.

mod io;
pub mod lexicon;
mod split;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use io::{
    load_examples, load_oracle, read_examples, read_oracle, save_examples, save_oracle,
    write_examples, write_oracle, ExampleRecord, OracleSidecar,
};
pub use split::split;
pub use synth::{synth_catalog, synth_corpus, synth_examples, synth_users, SynthStats, SyntheticCorpus};

/// Literal delimiters that may never appear inside a caption.
pub const OPTION_OPEN: &str = "<option>";
pub const OPTION_CLOSE: &str = "</option>";

pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("line {line}: field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate (user, title) tuple {0}")]
    DuplicateTuple(String),
    #[error("cannot split {examples} examples into {splits} non-empty splits")]
    TooFewExamples { examples: usize, splits: usize },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    Fractions([f64; 3]),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct ArtworkOption {
    /// 1-based position within the title's candidate list.
    pub option_id: u32,
    pub caption: String,
    /// Hidden generator state; never rendered into prompts.
    pub latent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TitleCard {
    pub title_id: String,
    pub name: String,
    pub genres: Vec<String>,
    pub options: Vec<ArtworkOption>,
}

impl TitleCard {
    pub fn option_count(&self) -> usize {
        self.options.len()
    }

    pub fn caption(&self, option_id: u32) -> Option<&str> {
        self.options
            .get((option_id as usize).checked_sub(1)?)
            .map(|o| o.caption.as_str())
    }

    pub fn captions(&self) -> Vec<&str> {
        self.options.iter().map(|o| o.caption.as_str()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engagement {
    Watched,
    Liked,
    Abandoned,
}

impl Engagement {
    pub fn as_str(self) -> &'static str {
        match self {
            Engagement::Watched => "watched",
            Engagement::Liked => "liked",
            Engagement::Abandoned => "abandoned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "watched" => Some(Engagement::Watched),
            "liked" => Some(Engagement::Liked),
            "abandoned" => Some(Engagement::Abandoned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub ts: i64,
    pub title: String,
    /// Comma-separated genre tags as rendered text.
    pub genres: String,
    pub engagement: Engagement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    /// Ascending by timestamp, at most `history_len` entries.
    pub interactions: Vec<Interaction>,
    pub latent: Vec<f64>,
}

impl UserProfile {
    /// Verbalized history, one clause per interaction.
    pub fn render_history(&self) -> String {
        if self.interactions.is_empty() {
            return "no prior interactions".to_string();
        }
        self.interactions
            .iter()
            .map(|i| {
                format!(
                    "watched {} ({}) at {}, {}",
                    i.title,
                    i.genres,
                    i.ts,
                    i.engagement.as_str()
                )
            })
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Identifier of a (user, title) tuple, rendered as `user_id:title_id`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExampleKey {
    pub user_id: String,
    pub title_id: String,
}

impl fmt::Display for ExampleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.user_id, self.title_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub user: Arc<UserProfile>,
    pub title: Arc<TitleCard>,
    /// 1-based id of the ground-truth artwork; every other option is a negative.
    pub truth_index: u32,
}

impl Example {
    pub fn key(&self) -> ExampleKey {
        ExampleKey {
            user_id: self.user.user_id.clone(),
            title_id: self.title.title_id.clone(),
        }
    }

    pub fn option_count(&self) -> usize {
        self.title.options.len()
    }

    pub fn truth_caption(&self) -> &str {
        &self.title.options[self.truth_index as usize - 1].caption
    }

    /// Latent affinities `user . option` for every option; empty latents give zeros.
    pub fn affinities(&self) -> Vec<f64> {
        self.title
            .options
            .iter()
            .map(|o| {
                self.user
                    .latent
                    .iter()
                    .zip(&o.latent)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Ground-truth sampling distribution at temperature `noise`.
    pub fn truth_distribution(&self, noise: f64) -> Vec<f64> {
        preference_distribution(&self.affinities(), noise)
    }

    /// Option with the highest affinity; ties go to the lowest id.
    pub fn oracle_choice(&self) -> u32 {
        argmax_lowest(&self.affinities()) as u32 + 1
    }

    pub fn has_latents(&self) -> bool {
        !self.user.latent.is_empty() && self.title.options.iter().all(|o| !o.latent.is_empty())
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), (String, String)> {
        let m = self.title.options.len();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&m) {
            return Err((
                "options".into(),
                format!("option count {m} outside [{MIN_OPTIONS}, {MAX_OPTIONS}]"),
            ));
        }
        if self.truth_index < 1 || self.truth_index as usize > m {
            return Err(("truth_index".into(), "truth_index out of range".into()));
        }
        for (i, o) in self.title.options.iter().enumerate() {
            if o.option_id as usize != i + 1 {
                return Err((format!("options[{i}].id"), "option ids must be 1..m in order".into()));
            }
            if o.caption.trim().is_empty() {
                return Err((format!("options[{i}].caption"), "caption is empty".into()));
            }
            if o.caption.contains(OPTION_OPEN) || o.caption.contains(OPTION_CLOSE) {
                return Err((
                    format!("options[{i}].caption"),
                    "caption contains an option delimiter".into(),
                ));
            }
        }
        if self
            .user
            .interactions
            .windows(2)
            .any(|w| w[0].ts > w[1].ts)
        {
            return Err(("history".into(), "interactions not sorted by timestamp".into()));
        }
        Ok(())
    }
}

/// Softmax over `affinities / noise`. Zero noise puts all mass on the
/// lowest-id argmax; infinite noise is uniform.
pub fn preference_distribution(affinities: &[f64], noise: f64) -> Vec<f64> {
    let m = affinities.len();
    if noise == 0.0 {
        let mut p = vec![0.0; m];
        p[argmax_lowest(affinities)] = 1.0;
        return p;
    }
    if noise.is_infinite() {
        return vec![1.0 / m as f64; m];
    }
    let max = affinities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = affinities.iter().map(|a| ((a - max) / noise).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Train,
    Val,
    Test,
}

impl SplitLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitLabel::Train => "train",
            SplitLabel::Val => "val",
            SplitLabel::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(SplitLabel::Train),
            "val" => Ok(SplitLabel::Val),
            "test" => Ok(SplitLabel::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub examples: Vec<Example>,
    pub split: SplitLabel,
}

impl ExampleSet {
    pub fn new(examples: Vec<Example>, split: SplitLabel) -> Self {
        Self { examples, split }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Example> {
        self.examples.iter()
    }

    /// Fraction of examples whose truth equals the highest-probability option.
    /// This is the accuracy ceiling of any policy.
    pub fn bayes_accuracy(&self, noise: f64) -> f64 {
        crate::numeric::mean(self.examples.iter().map(|e| {
            e.truth_distribution(noise)
                .into_iter()
                .fold(0.0, f64::max)
        }))
        .unwrap_or(0.0)
    }
}

/// Generator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub n_users: usize,
    pub n_titles: usize,
    pub n_examples: usize,
    /// Most recent interactions kept per user.
    pub history_len: usize,
    /// Latent dimension; each dimension is one theme of the lexicon.
    pub latent_dim: usize,
    /// Histogram over candidate-set sizes (weights, normalized on use).
    pub m_distribution: BTreeMap<u32, f64>,
    /// Temperature of the ground-truth sampler.
    pub preference_noise: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_users: 2_000,
            n_titles: 600,
            n_examples: 12_000,
            history_len: 20,
            latent_dim: lexicon::THEMES.len(),
            m_distribution: default_m_distribution(),
            preference_noise: DESK_SCALE_NOISE,
            seed: 0,
        }
    }
}

/// Temperature at which the default generator's Bayes-optimal accuracy sits near 0.8.
pub const DESK_SCALE_NOISE: f64 = 0.27;

/// Candidate-set sizes spanning four to more than forty options.
pub fn default_m_distribution() -> BTreeMap<u32, f64> {
    [
        (4, 0.20),
        (5, 0.10),
        (6, 0.12),
        (8, 0.12),
        (10, 0.10),
        (12, 0.08),
        (16, 0.07),
        (20, 0.06),
        (30, 0.05),
        (40, 0.06),
        (48, 0.04),
    ]
    .into_iter()
    .collect()
}

/// Named dataset sizings: (train, val, test).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    DeskScale,
    PaperScale,
}

impl Preset {
    pub fn sizes(self) -> (usize, usize, usize) {
        match self {
            Preset::DeskScale => (10_000, 1_000, 1_000),
            Preset::PaperScale => (110_000, 1_000, 5_000),
        }
    }

    pub fn total(self) -> usize {
        let (a, b, c) = self.sizes();
        a + b + c
    }

    /// Split fractions matching the preset sizes exactly.
    pub fn fractions(self) -> [f64; 3] {
        let (a, b, c) = self.sizes();
        let n = self.total() as f64;
        [a as f64 / n, b as f64 / n, c as f64 / n]
    }

    pub fn config(self, seed: u64) -> CorpusConfig {
        let n_examples = self.total();
        let (n_users, n_titles) = match self {
            Preset::DeskScale => (2_000, 600),
            Preset::PaperScale => (20_000, 3_000),
        };
        CorpusConfig {
            n_users,
            n_titles,
            n_examples,
            seed,
            ..CorpusConfig::default()
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk-scale" => Ok(Preset::DeskScale),
            "paper-scale" => Ok(Preset::PaperScale),
            other => Err(format!("unknown preset `{other}`")),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |field, reason: &str| CorpusError::Config {
            field,
            reason: reason.to_string(),
        };
        if self.n_users == 0 {
            return Err(cfg("n_users", "must be positive"));
        }
        if self.n_titles == 0 {
            return Err(cfg("n_titles", "must be positive"));
        }
        if self.n_examples == 0 {
            return Err(cfg("n_examples", "must be positive"));
        }
        if self.history_len == 0 {
            return Err(cfg("history_len", "must be positive"));
        }
        if self.latent_dim == 0 || self.latent_dim > lexicon::THEMES.len() {
            return Err(cfg(
                "latent_dim",
                &format!("must be in 1..={}", lexicon::THEMES.len()),
            ));
        }
        if self.m_distribution.is_empty() {
            return Err(cfg("m_distribution", "must not be empty"));
        }
        for (&m, &w) in &self.m_distribution {
            if !(MIN_OPTIONS as u32..=MAX_OPTIONS as u32).contains(&m) {
                return Err(cfg(
                    "m_distribution",
                    &format!("size {m} outside [{MIN_OPTIONS}, {MAX_OPTIONS}]"),
                ));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(cfg("m_distribution", &format!("weight for {m} is {w}")));
            }
        }
        if self.m_distribution.values().sum::<f64>() <= 0.0 {
            return Err(cfg("m_distribution", "total weight must be positive"));
        }
        if self.preference_noise.is_nan() || self.preference_noise < 0.0 {
            return Err(cfg("preference_noise", "must be >= 0"));
        }
        if (self.n_users as u128) * (self.n_titles as u128) < self.n_examples as u128 {
            return Err(cfg(
                "n_examples",
                "exceeds the number of distinct (user, title) pairs",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_lowest_argmax() {
        assert_eq!(preference_distribution(&[1.0, 3.0, 3.0], 0.0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn infinite_noise_is_uniform() {
        let p = preference_distribution(&[5.0, -2.0, 0.1, 9.0], f64::INFINITY);
        assert!(p.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn config_errors_name_the_field() {
        let c = CorpusConfig {
            m_distribution: [(1, 1.0)].into_iter().collect(),
            ..CorpusConfig::default()
        };
        match c.validate() {
            Err(CorpusError::Config { field, .. }) => assert_eq!(field, "m_distribution"),
            other => panic!("{other:?}"),
        }
        let c = CorpusConfig {
            n_titles: 0,
            ..CorpusConfig::default()
        };
        assert!(matches!(c.validate(), Err(CorpusError::Config { field: "n_titles", .. })));
    }

    #[test]
    fn presets_match_named_sizes() {
        assert_eq!(Preset::PaperScale.sizes(), (110_000, 1_000, 5_000));
        assert_eq!(Preset::DeskScale.sizes(), (10_000, 1_000, 1_000));
        assert!(Preset::PaperScale.config(1).validate().is_ok());
    }
}
