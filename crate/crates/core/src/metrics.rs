//! Accuracy and inverse propensity score over prediction logs.
//!
//! Accuracy is the mean of `1{predicted == truth}`. IPS weights each correct
//! row by the inverse probability that the ground-truth artwork would have
//! been shown; with a uniform propensity over `m` candidates a correct row
//! contributes exactly `m`, so a uniform-random policy scores 1 in expectation.
//!
//! Per-row terms are computed in parallel and reduced in input order with
//! compensated summation, so results do not depend on thread count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::{exec, numeric, seeds};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no predictions")]
    Empty,
    #[error("zero propensity for {0}")]
    ZeroPropensity(String),
    #[error("no logged propensity for {0}")]
    MissingPropensity(String),
    #[error("row {index} ({key}): {reason}")]
    InvalidRow {
        index: usize,
        key: String,
        reason: String,
    },
    #[error("reports cover different example keys")]
    KeyMismatch,
    #[error("baseline {0} is zero")]
    ZeroBaseline(&'static str),
    #[error("{failed} of {total} rows failed (limit 1%); rerun with partial results allowed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Maximum share of failed rows accepted without an explicit override.
pub const MAX_FAILURE_RATE: f64 = 0.01;
/// Expected number of chance hits in a zero-accuracy label tail before the
/// tail is reported as position bias (P(0 hits | random) <= e^-5).
pub const POSITION_BIAS_MIN_EXPECTED_HITS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub example_key: String,
    /// `None` when inference failed for this row.
    pub predicted_id: Option<u32>,
    pub score: Option<f64>,
    #[serde(default)]
    pub tie: bool,
    pub truth_index: u32,
    pub m: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRow {
    pub fn new(example_key: impl Into<String>, predicted_id: u32, truth_index: u32, m: u32) -> Self {
        Self {
            example_key: example_key.into(),
            predicted_id: Some(predicted_id),
            score: None,
            tie: false,
            truth_index,
            m,
            error: None,
        }
    }

    pub fn for_example(example: &Example, predicted_id: u32) -> Self {
        Self::new(
            example.key().to_string(),
            predicted_id,
            example.truth_index,
            example.option_count() as u32,
        )
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_id == Some(self.truth_index)
    }

    pub fn failed(&self) -> bool {
        self.predicted_id.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub rows: Vec<PredictionRow>,
}

impl PredictionLog {
    pub fn new(rows: Vec<PredictionRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn validate(&self) -> Result<()> {
        for (index, r) in self.rows.iter().enumerate() {
            let bad = |reason: String| MetricsError::InvalidRow {
                index,
                key: r.example_key.clone(),
                reason,
            };
            if r.m < 2 {
                return Err(bad(format!("m = {} < 2", r.m)));
            }
            if r.truth_index < 1 || r.truth_index > r.m {
                return Err(bad(format!("truth_index {} outside 1..={}", r.truth_index, r.m)));
            }
            if let Some(p) = r.predicted_id {
                if p < 1 || p > r.m {
                    return Err(bad(format!("predicted_id {p} outside 1..={}", r.m)));
                }
            }
        }
        Ok(())
    }

    /// Refuses logs with more than 1% failed rows unless `allow_partial`.
    pub fn check_failures(&self, allow_partial: bool) -> Result<()> {
        let failed = self.failures();
        if !allow_partial && failed as f64 > MAX_FAILURE_RATE * self.rows.len() as f64 {
            return Err(MetricsError::TooManyFailures {
                failed,
                total: self.rows.len(),
            });
        }
        Ok(())
    }

    pub fn key_set(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.example_key.as_str()).collect()
    }

    /// SHA-256 over the sorted example keys.
    pub fn keys_digest(&self) -> String {
        let joined = self.key_set().into_iter().collect::<Vec<_>>().join("\n");
        seeds::sha256_hex(joined.as_bytes())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&serde_json::to_string(r).expect("row serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> std::result::Result<Self, String> {
        let rows = text
            .lines()
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropensityModel {
    /// Every candidate equally likely to be shown: pi(a | m) = 1/m.
    #[default]
    Uniform,
    /// Per-row display probability of the ground-truth artwork, keyed by example key.
    Logged { probabilities: HashMap<String, f64> },
}

impl PropensityModel {
    /// Probability that the ground-truth artwork of `row` was shown.
    pub fn probability(&self, row: &PredictionRow) -> Result<f64> {
        match self {
            PropensityModel::Uniform => {
                if row.m == 0 {
                    Err(MetricsError::ZeroPropensity(row.example_key.clone()))
                } else {
                    Ok(1.0 / row.m as f64)
                }
            }
            PropensityModel::Logged { probabilities } => {
                let p = *probabilities
                    .get(&row.example_key)
                    .ok_or_else(|| MetricsError::MissingPropensity(row.example_key.clone()))?;
                if p > 0.0 {
                    Ok(p)
                } else {
                    Err(MetricsError::ZeroPropensity(row.example_key.clone()))
                }
            }
        }
    }

    /// `1 / pi(truth)`. Exact (`m`) for the uniform model.
    pub fn inverse(&self, row: &PredictionRow) -> Result<f64> {
        match self {
            PropensityModel::Uniform => {
                self.probability(row)?;
                Ok(row.m as f64)
            }
            PropensityModel::Logged { .. } => Ok(1.0 / self.probability(row)?),
        }
    }
}

pub fn accuracy(log: &PredictionLog) -> Result<f64> {
    let hits = exec::ordered_map(&log.rows, |_, r| if r.is_correct() { 1.0 } else { 0.0 });
    numeric::mean(hits).ok_or(MetricsError::Empty)
}

pub fn ips(log: &PredictionLog, propensity: &PropensityModel) -> Result<f64> {
    if log.is_empty() {
        return Err(MetricsError::Empty);
    }
    let terms = exec::ordered_map(&log.rows, |_, r| {
        let w = propensity.inverse(r)?;
        Ok(if r.is_correct() { w } else { 0.0 })
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(numeric::mean(terms).expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelStat {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeStat {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub ips: f64,
}

/// Accuracy grouped by ground-truth option id; empty groups are omitted.
pub fn breakdown_by_label(log: &PredictionLog) -> BTreeMap<u32, LabelStat> {
    let mut groups: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for r in &log.rows {
        let g = groups.entry(r.truth_index).or_default();
        g.0 += 1;
        g.1 += r.is_correct() as usize;
    }
    groups
        .into_iter()
        .map(|(label, (count, correct))| {
            (
                label,
                LabelStat {
                    count,
                    correct,
                    accuracy: correct as f64 / count as f64,
                },
            )
        })
        .collect()
}

/// Accuracy and IPS grouped by candidate-set size.
pub fn breakdown_by_m(log: &PredictionLog, propensity: &PropensityModel) -> Result<BTreeMap<u32, SizeStat>> {
    let mut groups: BTreeMap<u32, Vec<&PredictionRow>> = BTreeMap::new();
    for r in &log.rows {
        groups.entry(r.m).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(m, rows)| {
            let count = rows.len();
            let correct = rows.iter().filter(|r| r.is_correct()).count();
            let mut ips_sum = numeric::NeumaierSum::new();
            for r in &rows {
                if r.is_correct() {
                    ips_sum.add(propensity.inverse(r)?);
                }
            }
            Ok((
                m,
                SizeStat {
                    count,
                    correct,
                    accuracy: correct as f64 / count as f64,
                    ips: ips_sum.total() / count as f64,
                },
            ))
        })
        .collect()
}

/// Closed-form expectations of a uniform-random picker: accuracy = mean(1/m),
/// IPS = 1 under uniform propensity.
pub fn expected_random_baseline(examples: &[Example]) -> (f64, f64) {
    let sizes: Vec<u32> = examples.iter().map(|e| e.option_count() as u32).collect();
    expected_random_baseline_for_sizes(&sizes)
}

pub fn expected_random_baseline_for_sizes(sizes: &[u32]) -> (f64, f64) {
    let acc = numeric::mean(sizes.iter().map(|&m| 1.0 / m as f64)).unwrap_or(0.0);
    (acc, if sizes.is_empty() { 0.0 } else { 1.0 })
}

/// A label tail where the policy never hits although chance alone would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionBias {
    /// Every ground-truth label above this one has zero accuracy.
    pub cutoff_label: u32,
    pub tail_rows: usize,
    /// Hits a uniform-random picker would expect on the tail.
    pub expected_random_hits: f64,
}

impl PositionBias {
    pub fn describe(&self) -> String {
        format!(
            "position bias: 0% accuracy on all {} examples with ground-truth label > {} \
             (a random picker would expect {:.1} hits)",
            self.tail_rows, self.cutoff_label, self.expected_random_hits
        )
    }
}

/// Finds the smallest label `L` such that rows with truth > `L` have no hits,
/// rows with truth <= `L` have some, and chance would expect at least
/// [`POSITION_BIAS_MIN_EXPECTED_HITS`] hits in the tail.
pub fn detect_position_bias(log: &PredictionLog) -> Option<PositionBias> {
    let mut groups: BTreeMap<u32, (usize, usize, f64)> = BTreeMap::new();
    for r in &log.rows {
        let g = groups.entry(r.truth_index).or_default();
        g.0 += 1;
        g.1 += r.is_correct() as usize;
        g.2 += 1.0 / r.m.max(1) as f64;
    }
    let labels: Vec<(u32, (usize, usize, f64))> = groups.into_iter().collect();
    let mut head_correct = 0usize;
    for (i, (label, (_, correct, _))) in labels.iter().enumerate() {
        head_correct += correct;
        let tail = &labels[i + 1..];
        if tail.is_empty() {
            break;
        }
        let tail_correct: usize = tail.iter().map(|(_, g)| g.1).sum();
        let tail_rows: usize = tail.iter().map(|(_, g)| g.0).sum();
        let expected = numeric::sum(tail.iter().map(|(_, g)| g.2));
        if head_correct > 0 && tail_correct == 0 && expected >= POSITION_BIAS_MIN_EXPECTED_HITS {
            return Some(PositionBias {
                cutoff_label: *label,
                tail_rows,
                expected_random_hits: expected,
            });
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: Option<String>,
    pub n: usize,
    pub failures: usize,
    pub accuracy: f64,
    pub ips: f64,
    pub per_label_accuracy: BTreeMap<u32, LabelStat>,
    pub per_m_accuracy: BTreeMap<u32, SizeStat>,
    pub position_bias: Option<PositionBias>,
    pub keys_digest: String,
    pub baseline_name: Option<String>,
    pub rel_accuracy_pct: Option<f64>,
    pub rel_ips_pct: Option<f64>,
}

pub fn evaluate(log: &PredictionLog, propensity: &PropensityModel, label: Option<&str>) -> Result<EvalReport> {
    log.validate()?;
    Ok(EvalReport {
        label: label.map(str::to_string),
        n: log.len(),
        failures: log.failures(),
        accuracy: accuracy(log)?,
        ips: ips(log, propensity)?,
        per_label_accuracy: breakdown_by_label(log),
        per_m_accuracy: breakdown_by_m(log, propensity)?,
        position_bias: detect_position_bias(log),
        keys_digest: log.keys_digest(),
        baseline_name: None,
        rel_accuracy_pct: None,
        rel_ips_pct: None,
    })
}

/// Relative change in percent: `100 * (candidate - baseline) / baseline`.
pub fn relative_improvement(candidate: &EvalReport, baseline: &EvalReport) -> Result<(f64, f64)> {
    if candidate.keys_digest != baseline.keys_digest || candidate.n != baseline.n {
        return Err(MetricsError::KeyMismatch);
    }
    if baseline.accuracy == 0.0 {
        return Err(MetricsError::ZeroBaseline("accuracy"));
    }
    if baseline.ips == 0.0 {
        return Err(MetricsError::ZeroBaseline("ips"));
    }
    Ok((
        100.0 * (candidate.accuracy - baseline.accuracy) / baseline.accuracy,
        100.0 * (candidate.ips - baseline.ips) / baseline.ips,
    ))
}

impl EvalReport {
    pub fn with_baseline(mut self, baseline: &EvalReport) -> Result<Self> {
        let (acc, ips) = relative_improvement(&self, baseline)?;
        self.baseline_name = Some(baseline.label.clone().unwrap_or_else(|| "baseline".into()));
        self.rel_accuracy_pct = Some(acc);
        self.rel_ips_pct = Some(ips);
        Ok(self)
    }

    /// `label,count,accuracy` rows, one per ground-truth label.
    pub fn label_breakdown_csv(&self) -> String {
        let mut out = String::from("label,count,accuracy\n");
        for (label, s) in &self.per_label_accuracy {
            let _ = writeln!(out, "{label},{},{:.6}", s.count, s.accuracy);
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let name = self.label.as_deref().unwrap_or("predictions");
        let _ = writeln!(out, "report: {name}  (n = {}, failed = {})", self.n, self.failures);
        let _ = writeln!(out, "  accuracy  {:.4}", self.accuracy);
        let _ = writeln!(out, "  ips       {:.4}", self.ips);
        if let (Some(b), Some(a), Some(i)) = (&self.baseline_name, self.rel_accuracy_pct, self.rel_ips_pct) {
            let _ = writeln!(out, "  vs {b}: accuracy {a:+.2}%, ips {i:+.2}%");
        }
        let _ = writeln!(out, "\n  {:>4} {:>7} {:>9} {:>8}", "m", "count", "accuracy", "ips");
        for (m, s) in &self.per_m_accuracy {
            let _ = writeln!(out, "  {m:>4} {:>7} {:>9.4} {:>8.4}", s.count, s.accuracy, s.ips);
        }
        let _ = writeln!(out, "\n  {:>5} {:>7} {:>9}", "label", "count", "accuracy");
        for (l, s) in &self.per_label_accuracy {
            let _ = writeln!(out, "  {l:>5} {:>7} {:>9.4}", s.count, s.accuracy);
        }
        if let Some(bias) = &self.position_bias {
            let _ = writeln!(out, "\n  WARNING {}", bias.describe());
        }
        out
    }
}

/// Keys present in only one of two logs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyDiff {
    pub only_in_candidate: Vec<String>,
    pub only_in_baseline: Vec<String>,
}

impl KeyDiff {
    pub fn is_empty(&self) -> bool {
        self.only_in_candidate.is_empty() && self.only_in_baseline.is_empty()
    }

    pub fn summary(&self) -> String {
        let sample = |v: &[String]| v.iter().take(5).cloned().collect::<Vec<_>>().join(", ");
        format!(
            "{} keys only in candidate [{}]; {} keys only in baseline [{}]",
            self.only_in_candidate.len(),
            sample(&self.only_in_candidate),
            self.only_in_baseline.len(),
            sample(&self.only_in_baseline)
        )
    }
}

pub fn key_diff(candidate: &PredictionLog, baseline: &PredictionLog) -> KeyDiff {
    let a = candidate.key_set();
    let b = baseline.key_set();
    KeyDiff {
        only_in_candidate: a.difference(&b).map(|s| s.to_string()).collect(),
        only_in_baseline: b.difference(&a).map(|s| s.to_string()).collect(),
    }
}

/// Method / accuracy / IPS table with changes relative to `reports[baseline]`.
pub fn comparison_table(reports: &[EvalReport], baseline: usize) -> Result<String> {
    let base = &reports[baseline];
    let base_name = base.label.as_deref().unwrap_or("baseline");
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:>9} {:>8} {:>12} {:>10}",
        "Method",
        "Accuracy",
        "IPS",
        "Accuracy %",
        "IPS %"
    );
    for r in reports {
        let (acc, ips) = relative_improvement(r, base)?;
        let _ = writeln!(
            out,
            "{:<28} {:>9.4} {:>8.4} {:>+11.2}% {:>+9.2}%",
            r.label.as_deref().unwrap_or("?"),
            r.accuracy,
            r.ips,
            acc,
            ips
        );
    }
    let _ = writeln!(out, "(relative changes vs. {base_name})");
    Ok(out)
}
