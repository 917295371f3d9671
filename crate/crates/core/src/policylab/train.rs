//! Full-batch gradient descent with a learning-rate grid and validation-IPS
//! model selection.

use serde::{Deserialize, Serialize};

use super::{
    dpo_loss, predict, sft_loss, DpoConfig, ExampleFeatures, Objective, PolicyError,
    PolicyParams, PreferencePair, Result,
};
use crate::exec::ordered_map;
use crate::numeric;

/// Grid used when none is configured. Option-level weights need far larger
/// steps than LoRA adapters.
pub const DEFAULT_LR_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0];

#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Sft(&'a [ExampleFeatures]),
    Dpo {
        pairs: &'a [PreferencePair],
        config: &'a DpoConfig,
    },
}

impl TrainData<'_> {
    pub fn objective(&self) -> Objective {
        match self {
            TrainData::Sft(_) => Objective::Sft,
            TrainData::Dpo { .. } => Objective::Dpo,
        }
    }

    fn loss(&self, params: &PolicyParams) -> Result<(f64, Vec<f64>)> {
        match *self {
            TrainData::Sft(batch) => sft_loss(params, batch),
            TrainData::Dpo { pairs, config } => dpo_loss(params, config, pairs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Stop a run after this many epochs without a validation improvement.
    pub patience: usize,
    pub seed: u64,
    pub parent_checkpoint: Option<String>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            patience: 20,
            seed: 0,
            parent_checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged { epoch: usize },
}

/// One learning rate's outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrRun {
    pub lr: f64,
    pub status: RunStatus,
    pub best_val_ips: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub final_train_loss: f64,
    #[serde(skip)]
    best_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub runs: Vec<LrRun>,
    /// Index into `runs` of the selected learning rate.
    pub selected: usize,
}

impl TrainOutcome {
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:>10}  {:>10}  {:>12}  {:>10}  {:>8}  {}\n",
            "lr", "status", "best_val_ips", "best_epoch", "epochs", "train_loss"
        );
        for (i, r) in self.runs.iter().enumerate() {
            let status = match r.status {
                RunStatus::Completed => "ok".to_string(),
                RunStatus::Diverged { epoch } => format!("nan@{epoch}"),
            };
            out.push_str(&format!(
                "{:>10}  {:>10}  {:>12.4}  {:>10}  {:>8}  {:.6}{}\n",
                r.lr,
                status,
                r.best_val_ips,
                r.best_epoch,
                r.epochs_run,
                r.final_train_loss,
                if i == self.selected { "  *" } else { "" }
            ));
        }
        out
    }
}

/// IPS of greedy predictions on `val` under uniform propensity.
pub fn val_ips(params: &PolicyParams, val: &[ExampleFeatures]) -> f64 {
    let hits = ordered_map(val, |_, x| {
        if predict(params, x) as usize == x.truth + 1 {
            x.m as f64
        } else {
            0.0
        }
    });
    numeric::mean(hits).unwrap_or(0.0)
}

fn run_one(
    data: TrainData<'_>,
    val: &[ExampleFeatures],
    init: &PolicyParams,
    lr: f64,
    opts: &TrainOptions,
) -> LrRun {
    let mut params = init.clone();
    let mut run = LrRun {
        lr,
        status: RunStatus::Completed,
        best_val_ips: val_ips(&params, val),
        best_epoch: 0,
        epochs_run: 0,
        final_train_loss: f64::NAN,
        best_weights: params.weights.clone(),
    };
    let mut stale = 0;
    for epoch in 1..=opts.epochs {
        let step = data.loss(&params);
        let (loss, grad) = match step {
            Ok((l, g)) if l.is_finite() && g.iter().all(|v| v.is_finite()) => (l, g),
            _ => {
                run.status = RunStatus::Diverged { epoch };
                return run;
            }
        };
        run.final_train_loss = loss;
        for (w, g) in params.weights.iter_mut().zip(&grad) {
            *w -= lr * g;
        }
        run.epochs_run = epoch;
        if !params.is_finite() {
            run.status = RunStatus::Diverged { epoch };
            return run;
        }
        let ips = val_ips(&params, val);
        if ips > run.best_val_ips {
            run.best_val_ips = ips;
            run.best_epoch = epoch;
            run.best_weights.clone_from(&params.weights);
            stale = 0;
        } else {
            stale += 1;
            if stale >= opts.patience {
                break;
            }
        }
    }
    run
}

/// Trains one run per learning rate and keeps the weights with the best
/// validation IPS. Ties go to the earlier grid entry.
pub fn train(
    data: TrainData<'_>,
    val: &[ExampleFeatures],
    lr_grid: &[f64],
    init: &PolicyParams,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if lr_grid.is_empty() {
        return Err(PolicyError::EmptyGrid);
    }
    if !init.is_finite() {
        return Err(PolicyError::Config("init weights are not finite".into()));
    }
    let runs = ordered_map(lr_grid, |_, &lr| run_one(data, val, init, lr, opts));
    let mut selected: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if r.status != RunStatus::Completed {
            continue;
        }
        if selected.is_none_or(|s| r.best_val_ips > runs[s].best_val_ips) {
            selected = Some(i);
        }
    }
    let selected = selected.ok_or(PolicyError::AllDiverged)?;
    let params = PolicyParams {
        weights: runs[selected].best_weights.clone(),
        objective: Some(data.objective()),
        lr: Some(runs[selected].lr),
        seed: Some(opts.seed),
        parent_checkpoint: opts.parent_checkpoint.clone(),
    };
    Ok(TrainOutcome {
        params,
        runs,
        selected,
    })
}
