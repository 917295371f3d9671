//! Personalized artwork selection toolkit.
//!
//! The crate covers the full offline loop for choosing which artwork to show a
//! user for a given title:
//!
//! - [`corpus`]: synthetic users, titles and artwork captions with a latent
//!   preference oracle, unique-tuple splits and JSONL persistence.
//! - [`promptkit`]: prompt rendering and SFT / reasoning / DPO training exports.
//! - [`extract`]: n-gram matching of free-text generations back to an option.
//! - [`metrics`]: accuracy, inverse propensity score and breakdown reports.
//! - [`policylab`]: a log-linear option policy trained with the SFT and DPO
//!   objectives, with finite-difference gradient checks.
//! - [`backend`]: pluggable generation backends, inference and reasoning
//!   distillation.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise.

pub mod backend;
pub mod corpus;
pub mod exec;
pub mod extract;
pub mod metrics;
pub mod numeric;
pub mod policylab;
pub mod promptkit;
pub mod seeds;

pub use corpus::{
    ArtworkOption, CorpusConfig, Engagement, Example, ExampleSet, Interaction, SplitLabel,
    TitleCard, UserProfile,
};
pub use extract::{extract_prediction, ExtractionResult};
pub use metrics::{EvalReport, PredictionLog, PredictionRow, PropensityModel};
pub use policylab::PolicyParams;
pub use promptkit::{PromptRecord, TrainingRecord};
