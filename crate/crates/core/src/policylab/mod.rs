//! Log-linear option policy trained with the SFT and DPO objectives.
//!
//! The policy scores each candidate by `w . phi(user, option)` and normalizes
//! with a softmax over the candidate set, so `pi(a | x, u)` is a distribution
//! over the m options rather than over tokens.

pub mod features;
mod gradcheck;
mod loss;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use features::{ExampleFeatures, Featurizer, FEATURE_DIM};
pub use gradcheck::grad_check;
pub use loss::{dpo_loss, sft_loss, DpoConfig, PreferencePair};
pub use train::{
    train, val_ips, LrRun, RunStatus, TrainData, TrainOptions, TrainOutcome, DEFAULT_LR_GRID,
};

use crate::corpus::Example;
use crate::numeric;
use crate::promptkit::draw_rejected;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("non-finite feature value")]
    NonFiniteFeature,
    #[error("feature dimension {features} does not match weight dimension {weights}")]
    DimensionMismatch { features: usize, weights: usize },
    #[error("invalid DPO config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("learning-rate grid is empty")]
    EmptyGrid,
    #[error("every learning rate diverged")]
    AllDiverged,
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PolicyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Sft,
    Dpo,
}

/// Policy weights plus where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub weights: Vec<f64>,
    pub objective: Option<Objective>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub parent_checkpoint: Option<String>,
}

impl PolicyParams {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        Self {
            weights,
            objective: None,
            lr: None,
            seed: None,
            parent_checkpoint: None,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_weights(vec![0.0; dim])
    }

    /// Hand-set genre-affinity scorer used as the non-learned baseline.
    pub fn heuristic() -> Self {
        let mut w = vec![0.0; FEATURE_DIM];
        w[..features::THEME_FEATURES].iter_mut().for_each(|x| *x = 1.0);
        w[features::GENRE_MATCH_FEATURE] = 0.5;
        Self::from_weights(w)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let err = |message: String| PolicyError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = serde_json::to_string_pretty(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| err(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let err = |message: String| PolicyError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let params: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if !params.is_finite() {
            return Err(err("non-finite weights".into()));
        }
        Ok(params)
    }
}

fn check_dims(params: &PolicyParams, x: &ExampleFeatures) -> Result<()> {
    if x.dim() != params.weights.len() {
        return Err(PolicyError::DimensionMismatch {
            features: x.dim(),
            weights: params.weights.len(),
        });
    }
    Ok(())
}

pub(crate) fn scores(weights: &[f64], x: &ExampleFeatures) -> Vec<f64> {
    (0..x.m)
        .map(|j| x.row(j).iter().zip(weights).map(|(a, b)| a * b).sum())
        .collect()
}

/// Log-probabilities of every option under the policy.
pub fn policy_logprobs(params: &PolicyParams, x: &ExampleFeatures) -> Result<Vec<f64>> {
    check_dims(params, x)?;
    if !x.all_finite() {
        return Err(PolicyError::NonFiniteFeature);
    }
    let mut s = scores(&params.weights, x);
    numeric::log_softmax_in_place(&mut s);
    Ok(s)
}

/// Highest-scoring option (1-based); ties go to the lowest id.
pub fn predict(params: &PolicyParams, x: &ExampleFeatures) -> u32 {
    let s = scores(&params.weights, x);
    crate::corpus::argmax_lowest(&s) as u32 + 1
}

/// Preference pairs whose rejected option matches the DPO export for `seed`.
pub fn preference_pairs(
    examples: &[Example],
    features: &[ExampleFeatures],
    seed: u64,
) -> Vec<PreferencePair> {
    examples
        .iter()
        .zip(features)
        .filter_map(|(e, x)| {
            let rejected = draw_rejected(e, seed)? as usize - 1;
            Some(PreferencePair {
                features: std::sync::Arc::new(x.clone()),
                chosen: x.truth,
                rejected,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(rows: &[&[f64]]) -> ExampleFeatures {
        ExampleFeatures {
            m: rows.len(),
            truth: 0,
            values: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let x = feats(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0], &[0.0, 0.0]]);
        let lp = policy_logprobs(&PolicyParams::zeros(2), &x).unwrap();
        for v in lp {
            assert!((v + 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance() {
        // the third feature is constant across options, so its weight shifts every score equally
        let x = feats(&[&[1.0, 2.0, 1.0], &[0.5, -1.0, 1.0], &[3.0, 0.0, 1.0]]);
        let a = policy_logprobs(&PolicyParams::from_weights(vec![0.3, -0.2, 0.0]), &x).unwrap();
        let b = policy_logprobs(&PolicyParams::from_weights(vec![0.3, -0.2, 7.5]), &x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        let total: f64 = a.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_options_logistic() {
        let x = feats(&[&[1.0], &[0.0]]);
        let delta = 1.7;
        let lp = policy_logprobs(&PolicyParams::from_weights(vec![delta]), &x).unwrap();
        assert!((lp[0].exp() - numeric::sigmoid(delta)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = feats(&[&[f64::NAN], &[0.0]]);
        assert!(matches!(
            policy_logprobs(&PolicyParams::zeros(1), &x),
            Err(PolicyError::NonFiniteFeature)
        ));
    }

    #[test]
    fn checkpoint_round_trip_has_expected_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let mut p = PolicyParams::heuristic();
        p.objective = Some(Objective::Dpo);
        p.lr = Some(0.5);
        p.seed = Some(3);
        p.parent_checkpoint = Some("sft.json".into());
        p.save(&path).unwrap();
        assert_eq!(PolicyParams::load(&path).unwrap(), p);
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for k in ["weights", "objective", "lr", "seed", "parent_checkpoint"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
