//! SFT and DPO objectives over option-level policies, with analytic gradients.

use std::sync::Arc;

use super::{check_dims, scores, ExampleFeatures, PolicyError, PolicyParams, Result};
use crate::exec::ordered_map;
use crate::numeric::{self, NeumaierSum};

#[derive(Debug, Clone)]
pub struct DpoConfig {
    pub beta: f64,
    /// Frozen reference policy.
    pub reference: PolicyParams,
}

impl DpoConfig {
    pub fn new(beta: f64, reference: PolicyParams) -> Result<Self> {
        let config = Self { beta, reference };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(PolicyError::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !self.reference.is_finite() {
            return Err(PolicyError::Config("reference weights are not finite".into()));
        }
        Ok(())
    }
}

/// Chosen and rejected options (0-based) over one candidate set.
#[derive(Debug, Clone)]
pub struct PreferencePair {
    pub features: Arc<ExampleFeatures>,
    pub chosen: usize,
    pub rejected: usize,
}

/// Rows per reduction chunk. Fixed so results do not depend on thread count.
const CHUNK: usize = 256;

/// Mean loss and gradient over `batch`, where `row` returns one row's loss and
/// adds that row's gradient into the buffer it is given.
fn reduce<T, F>(batch: &[T], dim: usize, row: F) -> Result<(f64, Vec<f64>)>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) -> Result<f64> + Sync + Send,
{
    let chunks: Vec<&[T]> = batch.chunks(CHUNK).collect();
    let partial = ordered_map(&chunks, |_, chunk| {
        let mut loss = NeumaierSum::new();
        let mut grad = vec![NeumaierSum::new(); dim];
        let mut g = vec![0.0; dim];
        for x in chunk.iter() {
            g.iter_mut().for_each(|v| *v = 0.0);
            loss.add(row(x, &mut g)?);
            for (acc, v) in grad.iter_mut().zip(&g) {
                acc.add(*v);
            }
        }
        Ok((loss.total(), grad.iter().map(NeumaierSum::total).collect::<Vec<_>>()))
    });
    let mut loss = NeumaierSum::new();
    let mut grad = vec![NeumaierSum::new(); dim];
    for p in partial {
        let (l, g): (f64, Vec<f64>) = p?;
        loss.add(l);
        for (acc, v) in grad.iter_mut().zip(g) {
            acc.add(v);
        }
    }
    let n = batch.len() as f64;
    Ok((loss.total() / n, grad.iter().map(|g| g.total() / n).collect()))
}

fn check_row(params: &PolicyParams, x: &ExampleFeatures) -> Result<()> {
    check_dims(params, x)?;
    if !x.all_finite() {
        return Err(PolicyError::NonFiniteFeature);
    }
    Ok(())
}

/// Negative mean log-likelihood of the ground-truth option.
pub fn sft_loss(params: &PolicyParams, batch: &[ExampleFeatures]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let dim = params.weights.len();
    reduce(batch, dim, |x, g| {
        check_row(params, x)?;
        let mut lp = scores(&params.weights, x);
        numeric::log_softmax_in_place(&mut lp);
        for (j, l) in lp.iter().enumerate() {
            let residual = l.exp() - if j == x.truth { 1.0 } else { 0.0 };
            for (gk, phi) in g.iter_mut().zip(x.row(j)) {
                *gk += residual * phi;
            }
        }
        Ok(-lp[x.truth])
    })
}

/// Mean of `-log sigmoid(z)` where `z` is the beta-scaled log-ratio margin of
/// chosen over rejected relative to the reference policy.
pub fn dpo_loss(
    params: &PolicyParams,
    config: &DpoConfig,
    batch: &[PreferencePair],
) -> Result<(f64, Vec<f64>)> {
    config.validate()?;
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let dim = params.weights.len();
    let beta = config.beta;
    reduce(batch, dim, |pair, g| {
        let x = pair.features.as_ref();
        check_row(params, x)?;
        check_dims(&config.reference, x)?;
        let (c, r) = (pair.chosen, pair.rejected);
        // log-partition terms cancel inside each log-ratio difference
        let s = scores(&params.weights, x);
        let s_ref = scores(&config.reference.weights, x);
        let z = beta * ((s[c] - s[r]) - (s_ref[c] - s_ref[r]));
        let coeff = -numeric::sigmoid(-z) * beta;
        for ((gk, pc), pr) in g.iter_mut().zip(x.row(c)).zip(x.row(r)) {
            *gk += coeff * (pc - pr);
        }
        Ok(numeric::softplus(-z))
    })
}
