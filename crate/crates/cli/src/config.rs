//! Run configuration: TOML file, flag overrides, and the config hash.

use std::path::Path;

use anyhow::{bail, Context, Result};
use artrec_core::backend::HttpConfig;
use artrec_core::corpus::{CorpusConfig, Preset};
use artrec_core::policylab::DEFAULT_LR_GRID;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    /// Train/val/test fractions; defaults to the preset's sizes.
    pub fractions: Option<[f64; 3]>,
    /// Generator overrides applied on top of the preset.
    pub corpus: Option<toml::Table>,
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub http: HttpSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub lr_grid: Vec<f64>,
    pub beta: f64,
    pub epochs: usize,
    pub patience: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lr_grid: DEFAULT_LR_GRID.to_vec(),
            beta: 0.1,
            epochs: 200,
            patience: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropensityKind {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub propensity: PropensityKind,
    /// Gate only; never changes an output, so it stays out of the hash.
    #[serde(skip_serializing)]
    pub allow_partial: bool,
}

/// Completion endpoint settings. The replay cache always lives in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    pub url: String,
    pub auth_env: Option<String>,
    pub timeout_ms: u64,
    pub attempts: u32,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub replay_only: bool,
}

impl Default for HttpSection {
    fn default() -> Self {
        let d = HttpConfig::default();
        Self {
            url: d.url,
            auth_env: d.auth_env,
            timeout_ms: d.timeout_ms,
            attempts: d.attempts,
            backoff_base_ms: d.backoff_base_ms,
            backoff_cap_ms: d.backoff_cap_ms,
            replay_only: d.replay_only,
        }
    }
}

impl HttpSection {
    pub fn to_config(&self, cache_dir: &Path) -> HttpConfig {
        HttpConfig {
            url: self.url.clone(),
            auth_env: self.auth_env.clone(),
            timeout_ms: self.timeout_ms,
            attempts: self.attempts,
            backoff_base_ms: self.backoff_base_ms,
            backoff_cap_ms: self.backoff_cap_ms,
            cache_dir: Some(cache_dir.to_path_buf()),
            replay_only: self.replay_only,
        }
    }
}

/// Fully resolved configuration. Its canonical JSON is what gets hashed.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub corpus: CorpusConfig,
    pub fractions: [f64; 3],
    pub trainer: TrainerConfig,
    pub eval: EvalConfig,
    pub http: HttpSection,
}

/// Command-line values that override the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub preset: Option<Preset>,
    pub allow_partial: bool,
}

impl RunConfig {
    pub fn resolve(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<ConfigFile>(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => ConfigFile::default(),
        };
        let seed = flags.seed.or(file.seed);
        let preset = flags.preset.or(file.preset);

        let base = preset.map(|p| p.config(0)).unwrap_or_default();
        let mut corpus_json = serde_json::to_value(&base)?;
        if let Some(table) = &file.corpus {
            let Value::Object(over) = serde_json::to_value(table)? else {
                unreachable!("a TOML table is a JSON object")
            };
            if over.contains_key("seed") {
                bail!("set the seed at the top level of the config, not under [corpus]");
            }
            let target = corpus_json.as_object_mut().expect("config serializes to an object");
            target.extend(over);
        }
        let mut corpus: CorpusConfig =
            serde_json::from_value(corpus_json).context("invalid [corpus] section")?;
        corpus.seed = seed.unwrap_or(0);
        corpus.validate()?;

        let fractions = file
            .fractions
            .or(preset.map(Preset::fractions))
            .unwrap_or([0.8, 0.1, 0.1]);
        if file.trainer.lr_grid.is_empty() || file.trainer.lr_grid.iter().any(|lr| !lr.is_finite() || *lr < 0.0) {
            bail!("trainer.lr_grid must be a non-empty list of non-negative numbers");
        }
        if !(file.trainer.beta > 0.0 && file.trainer.beta.is_finite()) {
            bail!("trainer.beta must be positive and finite");
        }

        let mut eval = file.eval;
        eval.allow_partial |= flags.allow_partial;
        Ok(Self {
            seed,
            preset,
            corpus,
            fractions,
            trainer: file.trainer,
            eval,
            http: file.http,
        })
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_value(self).expect("config serializes");
        artrec_core::seeds::sha256_hex(canonical.to_string().as_bytes())
    }

    pub fn require_seed(&self, command: &str) -> Result<u64> {
        self.seed.with_context(|| {
            format!("`{command}` is stochastic and needs a seed: pass --seed or set `seed` in the config")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), text).unwrap();
        f
    }

    #[test]
    fn flags_override_file_and_change_hash() {
        let f = write("seed = 3\n[corpus]\nn_examples = 500\n");
        let a = RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!((a.seed, a.corpus.seed, a.corpus.n_examples), (Some(3), 3, 500));
        let b = RunConfig::resolve(Some(f.path()), &Overrides { seed: Some(4), ..Default::default() }).unwrap();
        assert_eq!(b.corpus.seed, 4);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap().hash());
    }

    #[test]
    fn allow_partial_does_not_move_the_run() {
        let plain = RunConfig::resolve(None, &Overrides::default()).unwrap();
        let partial = RunConfig::resolve(None, &Overrides { allow_partial: true, ..Default::default() }).unwrap();
        assert!(partial.eval.allow_partial);
        assert_eq!(plain.hash(), partial.hash());
    }

    #[test]
    fn preset_sets_sizes() {
        let f = write("preset = \"desk-scale\"\n");
        let c = RunConfig::resolve(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!(c.corpus.n_examples, 12_000);
        assert_eq!(c.fractions, Preset::DeskScale.fractions());
    }

    #[test]
    fn bad_configs_are_rejected() {
        for text in [
            "bogus = 1\n",
            "[corpus]\nseed = 1\n",
            "[corpus]\nn_titles = 0\n",
            "[trainer]\nlr_grid = []\n",
            "[trainer]\nbeta = 0.0\n",
        ] {
            assert!(RunConfig::resolve(Some(write(text).path()), &Overrides::default()).is_err(), "{text}");
        }
        let c = RunConfig::resolve(None, &Overrides::default()).unwrap();
        assert!(c.require_seed("synth").is_err());
    }
}
