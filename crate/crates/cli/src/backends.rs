use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use artrec_core::backend::{
    Backend, HttpCompletion, MockFixed, MockNoisy, MockOracle, PolicyBackend, RandomGuess,
};
use artrec_core::policylab::{PolicyParams, FEATURE_DIM};

use crate::artifact::{Input, Run};
use crate::config::RunConfig;

/// Parsed `--backend` value.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Oracle(f64),
    Fixed,
    Noisy(f64),
    Random,
    Heuristic,
    Policy(PathBuf),
    Http,
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let rate = |default: f64| -> Result<f64, String> {
            let v = arg.map_or(Ok(default), |a| a.parse::<f64>().map_err(|e| format!("`{a}`: {e}")))?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(format!("rate {v} outside [0, 1]"))
            }
        };
        match (name, arg) {
            ("mock-oracle", _) => rate(0.0).map(BackendSpec::Oracle),
            ("mock-noisy", _) => rate(0.1).map(BackendSpec::Noisy),
            ("mock-fixed", None) => Ok(BackendSpec::Fixed),
            ("random", None) => Ok(BackendSpec::Random),
            ("http", None) => Ok(BackendSpec::Http),
            ("policy", Some("heuristic")) => Ok(BackendSpec::Heuristic),
            ("policy", Some(path)) if !path.is_empty() => Ok(BackendSpec::Policy(path.into())),
            _ => Err(format!(
                "unknown backend `{s}` (expected mock-oracle[:rate], mock-fixed, mock-noisy[:dropout], \
                 random, policy:heuristic, policy:<checkpoint>, http)"
            )),
        }
    }
}

impl BackendSpec {
    /// File-name friendly identifier.
    pub fn slug(&self) -> String {
        match self {
            BackendSpec::Oracle(e) => format!("mock-oracle-{e}"),
            BackendSpec::Fixed => "mock-fixed".into(),
            BackendSpec::Noisy(d) => format!("mock-noisy-{d}"),
            BackendSpec::Random => "random".into(),
            BackendSpec::Heuristic => "heuristic".into(),
            BackendSpec::Policy(p) => format!("policy-{}", stem(p)),
            BackendSpec::Http => "http".into(),
        }
    }

    /// The backend plus any file it was built from.
    pub fn build(&self, run: &Run, config: &RunConfig) -> Result<(Box<dyn Backend>, Option<Input>)> {
        Ok(match self {
            BackendSpec::Oracle(e) => (Box::new(MockOracle { error_rate: *e }), None),
            BackendSpec::Fixed => (Box::new(MockFixed), None),
            BackendSpec::Noisy(d) => (Box::new(MockNoisy { dropout: *d }), None),
            BackendSpec::Random => (Box::new(RandomGuess), None),
            BackendSpec::Heuristic => (
                Box::new(PolicyBackend::new("heuristic", PolicyParams::heuristic())),
                None,
            ),
            BackendSpec::Policy(path) => {
                let (params, input) = load_checkpoint(run, &run.locate(path))?;
                (Box::new(PolicyBackend::new(stem(path), params)), Some(input))
            }
            BackendSpec::Http => (
                Box::new(HttpCompletion::new(config.http.to_config(&run.path("cache")))?),
                None,
            ),
        })
    }
}

fn stem(path: &std::path::Path) -> String {
    path.file_stem().map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_checkpoint(run: &Run, path: &std::path::Path) -> Result<(PolicyParams, Input)> {
    let input = run.read(path, "checkpoint")?;
    let params: PolicyParams = serde_json::from_slice(&input.body)
        .with_context(|| format!("{}: malformed checkpoint", input.name))?;
    if !params.is_finite() || params.weights.len() != FEATURE_DIM {
        anyhow::bail!(
            "{}: expected {FEATURE_DIM} finite weights, found {}",
            input.name,
            params.weights.len()
        );
    }
    Ok((params, input))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!("mock-oracle".parse(), Ok(BackendSpec::Oracle(0.0)));
        assert_eq!("mock-oracle:0.02".parse(), Ok(BackendSpec::Oracle(0.02)));
        assert_eq!("mock-noisy".parse(), Ok(BackendSpec::Noisy(0.1)));
        assert_eq!("mock-fixed".parse(), Ok(BackendSpec::Fixed));
        assert_eq!("random".parse(), Ok(BackendSpec::Random));
        assert_eq!("policy:heuristic".parse(), Ok(BackendSpec::Heuristic));
        assert_eq!("policy:ck/sft.json".parse(), Ok(BackendSpec::Policy("ck/sft.json".into())));
        assert_eq!("http".parse(), Ok(BackendSpec::Http));
        for bad in ["mock-oracle:2", "mock-noisy:x", "random:1", "policy:", "gpt"] {
            assert!(bad.parse::<BackendSpec>().is_err(), "{bad}");
        }
        assert_eq!(BackendSpec::Policy("a/dpo.json".into()).slug(), "policy-dpo");
    }
}
