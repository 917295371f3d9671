use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use artrec_core::backend::distill_reasoning;
use artrec_core::corpus::{read_examples, split, synth_corpus, write_examples, write_oracle, OracleSidecar, SplitLabel};
use artrec_core::exec::with_threads;
use artrec_core::metrics::{self, comparison_table, evaluate, key_diff, EvalReport, PredictionLog, PropensityModel};
use artrec_core::policylab::{
    preference_pairs, train, DpoConfig, Featurizer, Objective, PolicyParams, TrainData, TrainOptions, FEATURE_DIM,
};
use artrec_core::promptkit::{export_dpo, export_sft, export_sft_reasoning, write_jsonl};
use artrec_core::Example;
use serde_json::{json, Value};

use crate::artifact::{Input, Run};
use crate::backends::{load_checkpoint, BackendSpec};
use crate::config::{PropensityKind, RunConfig};
use crate::BackendFailure;

pub struct Ctx {
    pub config: RunConfig,
    pub run: Run,
    pub parallelism: usize,
}

impl Ctx {
    fn examples(&self, split: SplitLabel) -> Result<(Vec<Example>, Input)> {
        let input = self.run.read(&self.corpus_path(split), "examples")?;
        let set = read_examples(input.body.as_slice(), split)
            .with_context(|| format!("loading {}", input.name))?;
        Ok((set.examples, input))
    }

    fn corpus_path(&self, split: SplitLabel) -> PathBuf {
        self.run.path(&format!("corpus/{}.jsonl", split.as_str()))
    }

    fn propensity(&self) -> PropensityModel {
        match self.config.eval.propensity {
            PropensityKind::Uniform => PropensityModel::Uniform,
        }
    }

    fn wrote(&self, path: &Path) {
        println!("wrote {}", path.display());
    }
}

pub fn synth(ctx: &Ctx) -> Result<()> {
    let seed = ctx.config.require_seed("synth")?;
    let corpus = synth_corpus(&ctx.config.corpus)?;
    let (train, val, test) = split(&corpus.examples, ctx.config.fractions, seed)?;
    let mut counts = serde_json::Map::new();
    let mut bayes = serde_json::Map::new();
    for set in [&train, &val, &test] {
        let mut body = Vec::new();
        write_examples(&mut body, &set.examples)?;
        let rel = format!("corpus/{}.jsonl", set.split.as_str());
        ctx.wrote(&ctx.run.write_jsonl(&rel, "examples", &[], &body)?);
        counts.insert(set.split.as_str().into(), set.len().into());
        bayes.insert(set.split.as_str().into(), set.bayes_accuracy(ctx.config.corpus.preference_noise).into());
    }
    let sidecar = OracleSidecar::from_examples(&corpus.examples, ctx.config.corpus.preference_noise);
    let mut body = Vec::new();
    write_oracle(&sidecar, &mut body)?;
    ctx.wrote(&ctx.run.write_jsonl("corpus/corpus.oracle", "oracle", &[], &body)?);
    let stats = json!({
        "examples": counts,
        "duplicates_skipped": corpus.stats.duplicates_skipped,
        "bayes_accuracy": bayes,
        "random_baseline_accuracy": metrics::expected_random_baseline(&test.examples).0,
    });
    println!("corpus: {} train / {} val / {} test", train.len(), val.len(), test.len());
    println!("bayes-optimal test accuracy {:.4}", stats["bayes_accuracy"]["test"].as_f64().unwrap_or(0.0));
    ctx.wrote(&ctx.run.write_json("corpus/stats.json", "synth-stats", &[], stats)?);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportKind {
    Sft,
    SftReason,
    Dpo,
}

pub fn export(ctx: &Ctx, kind: ExportKind, split: SplitLabel) -> Result<()> {
    let (examples, corpus) = ctx.examples(split)?;
    let mut inputs = vec![corpus];
    let (name, records, stats) = match kind {
        ExportKind::Sft => ("sft", export_sft(&examples)?, None),
        ExportKind::SftReason => {
            let reasoning = ctx.run.read(&ctx.run.path("distill/reasoning.jsonl"), "reasoning")?;
            let by_key = parse_reasoning(&reasoning.body)?;
            inputs.push(reasoning);
            let map = examples
                .iter()
                .filter_map(|e| by_key.get(&e.key().to_string()).map(|r| (e.key(), r.clone())))
                .collect();
            let (records, s) = export_sft_reasoning(&examples, &map)?;
            ("sft-reason", records, Some(s))
        }
        ExportKind::Dpo => {
            let seed = ctx.config.require_seed("export --kind dpo")?;
            let (records, s) = export_dpo(&examples, seed)?;
            ("dpo", records, Some(s))
        }
    };
    let mut body = Vec::new();
    write_jsonl(&mut body, &records)?;
    let inputs: Vec<&Input> = inputs.iter().collect();
    let rel = format!("exports/{name}-{}.jsonl", split.as_str());
    ctx.wrote(&ctx.run.write_jsonl(&rel, &format!("export-{name}"), &inputs, &body)?);
    println!("emitted {} records", records.len());
    if let Some(s) = stats {
        println!("skipped {} missing, {} invalid", s.skipped_missing, s.skipped_invalid);
        let rel = format!("exports/{name}-{}.stats.json", split.as_str());
        ctx.wrote(&ctx.run.write_json(&rel, "export-stats", &inputs, serde_json::to_value(s)?)?);
    }
    Ok(())
}

fn parse_reasoning(body: &[u8]) -> Result<HashMap<String, String>> {
    let text = std::str::from_utf8(body)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let v: Value = serde_json::from_str(line).with_context(|| format!("reasoning line {}", i + 2))?;
        let (Some(k), Some(r)) = (v["example_key"].as_str(), v["reasoning"].as_str()) else {
            bail!("reasoning line {}: needs example_key and reasoning", i + 2);
        };
        out.insert(k.to_string(), r.to_string());
    }
    Ok(out)
}

pub fn distill(ctx: &Ctx, spec: &BackendSpec, split: SplitLabel) -> Result<()> {
    let seed = ctx.config.require_seed("distill")?;
    let (examples, corpus) = ctx.examples(split)?;
    let (teacher, source) = spec.build(&ctx.run, &ctx.config)?;
    let (kept, stats) = with_threads(ctx.parallelism, || distill_reasoning(&examples, teacher.as_ref(), seed));
    let mut body = String::new();
    for e in &examples {
        if let Some(r) = kept.get(&e.key()) {
            body.push_str(&json!({"example_key": e.key().to_string(), "reasoning": r}).to_string());
            body.push('\n');
        }
    }
    let inputs: Vec<&Input> = std::iter::once(&corpus).chain(source.as_ref()).collect();
    ctx.wrote(&ctx.run.write_jsonl("distill/reasoning.jsonl", "reasoning", &inputs, body.as_bytes())?);
    let mut report = serde_json::to_value(stats)?;
    report["teacher"] = teacher.name().into();
    ctx.wrote(&ctx.run.write_json("distill/stats.json", "distill-stats", &inputs, report)?);
    println!(
        "teacher {}: {} requested, {} accepted, {} filtered (rate {:.4}), {} backend errors",
        teacher.name(),
        stats.requested,
        stats.accepted,
        stats.filtered,
        stats.filter_rate,
        stats.backend_errors
    );
    if stats.requested > 0 && stats.backend_errors == stats.requested {
        return Err(BackendFailure("the teacher failed on every request".into()).into());
    }
    Ok(())
}

pub fn infer(ctx: &Ctx, spec: &BackendSpec, split: SplitLabel) -> Result<()> {
    let seed = ctx.config.require_seed("infer")?;
    let (examples, corpus) = ctx.examples(split)?;
    let (backend, source) = spec.build(&ctx.run, &ctx.config)?;
    let log = artrec_core::backend::run_inference(backend.as_ref(), &examples, seed, ctx.parallelism)?;
    let inputs: Vec<&Input> = std::iter::once(&corpus).chain(source.as_ref()).collect();
    let rel = format!("logs/{}-{}.jsonl", split.as_str(), spec.slug());
    ctx.wrote(&ctx.run.write_jsonl(&rel, "predictions", &inputs, log.to_jsonl().as_bytes())?);
    println!(
        "{}: {} rows, {} failed, accuracy {:.4}",
        backend.name(),
        log.len(),
        log.failures(),
        metrics::accuracy(&log).unwrap_or(0.0)
    );
    log.check_failures(ctx.config.eval.allow_partial)
        .map_err(|e| BackendFailure(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ObjectiveArg {
    Sft,
    Dpo,
}

pub fn train_cmd(ctx: &Ctx, objective: ObjectiveArg, init: Option<&Path>) -> Result<()> {
    let seed = ctx.config.require_seed("train")?;
    let (train_set, train_in) = ctx.examples(SplitLabel::Train)?;
    let (val_set, val_in) = ctx.examples(SplitLabel::Val)?;
    let init_path = match (init, objective) {
        (Some(p), _) => Some(ctx.run.locate(p)),
        (None, ObjectiveArg::Dpo) => Some(ctx.run.path("checkpoints/sft.json")),
        (None, ObjectiveArg::Sft) => None,
    };
    let (init_params, init_in) = match &init_path {
        Some(p) => {
            let (params, input) = load_checkpoint(&ctx.run, p)?;
            (params, Some(input))
        }
        None => (PolicyParams::zeros(FEATURE_DIM), None),
    };
    let trainer = &ctx.config.trainer;
    let opts = TrainOptions {
        epochs: trainer.epochs,
        patience: trainer.patience,
        seed,
        parent_checkpoint: init_in.as_ref().map(|i| i.name.clone()),
    };
    let outcome = with_threads(ctx.parallelism, || {
        let featurizer = Featurizer::new();
        let tx = featurizer.featurize_all(&train_set);
        let vx = featurizer.featurize_all(&val_set);
        match objective {
            ObjectiveArg::Sft => train(TrainData::Sft(&tx), &vx, &trainer.lr_grid, &init_params, &opts),
            ObjectiveArg::Dpo => {
                let config = DpoConfig::new(trainer.beta, init_params.clone())?;
                let pairs = preference_pairs(&train_set, &tx, seed);
                train(TrainData::Dpo { pairs: &pairs, config: &config }, &vx, &trainer.lr_grid, &init_params, &opts)
            }
        }
    })?;
    let name = match outcome.params.objective {
        Some(Objective::Dpo) => "dpo",
        _ => "sft",
    };
    let inputs: Vec<&Input> = [&train_in, &val_in].into_iter().chain(init_in.as_ref()).collect();
    let table = outcome.render_table();
    print!("{table}");
    let checkpoint = serde_json::to_value(&outcome.params)?;
    ctx.wrote(&ctx.run.write_json(&format!("checkpoints/{name}.json"), "checkpoint", &inputs, checkpoint)?);
    ctx.wrote(&ctx.run.write_text(&format!("checkpoints/{name}.lr-grid.txt"), "lr-grid", &inputs, &table)?);
    Ok(())
}

pub fn eval(ctx: &Ctx, log_path: &Path, baseline: Option<&Path>, label: Option<&str>) -> Result<()> {
    let (log, log_in) = read_log(ctx, log_path)?;
    let label = label.map(str::to_string).unwrap_or_else(|| stem(log_path));
    log.check_failures(ctx.config.eval.allow_partial)?;
    let mut report = evaluate(&log, &ctx.propensity(), Some(&label))?;
    let mut inputs = vec![&log_in];
    let base_in;
    if let Some(b) = baseline {
        let (base_log, input) = read_log(ctx, b)?;
        let diff = key_diff(&log, &base_log);
        if !diff.is_empty() {
            bail!("example keys differ from the baseline: {}", diff.summary());
        }
        base_in = input;
        inputs.push(&base_in);
        let base_report = evaluate(&base_log, &ctx.propensity(), Some(&stem(b)))?;
        report = report.with_baseline(&base_report)?;
    }
    let table = report.render_table();
    print!("{table}");
    let slug = label.replace(['/', ' ', ':'], "-");
    ctx.wrote(&ctx.run.write_json(&format!("reports/{slug}.eval.json"), "eval", &inputs, serde_json::to_value(&report)?)?);
    ctx.wrote(&ctx.run.write_text(&format!("reports/{slug}.eval.txt"), "eval-table", &inputs, &table)?);
    ctx.wrote(&ctx.run.write_text(&format!("reports/{slug}.labels.csv"), "label-breakdown", &inputs, &report.label_breakdown_csv())?);
    Ok(())
}

fn read_log(ctx: &Ctx, path: &Path) -> Result<(PredictionLog, Input)> {
    let input = ctx.run.read(&ctx.run.locate(path), "predictions")?;
    let text = std::str::from_utf8(&input.body)?;
    let log = PredictionLog::from_jsonl(text).map_err(|e| anyhow::anyhow!("{}: {e}", input.name))?;
    log.validate().with_context(|| input.name.clone())?;
    Ok((log, input))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned())
}

pub fn report(ctx: &Ctx, paths: &[PathBuf], baseline: Option<&str>) -> Result<()> {
    let mut inputs = Vec::new();
    let mut reports = Vec::new();
    for p in paths {
        let input = ctx.run.read(&ctx.run.locate(p), "eval")?;
        let r: EvalReport = serde_json::from_slice(&input.body).with_context(|| format!("{}: malformed report", input.name))?;
        reports.push(r);
        inputs.push(input);
    }
    let base = match baseline {
        None => 0,
        Some(name) => reports
            .iter()
            .position(|r| r.label.as_deref() == Some(name))
            .with_context(|| format!("no report labelled `{name}`"))?,
    };
    let table = comparison_table(&reports, base).context("reports are not comparable")?;
    print!("{table}");
    let runs: std::collections::BTreeSet<&str> = inputs.iter().map(|i| i.provenance.config_hash.as_str()).collect();
    if runs.len() > 1 {
        println!("note: reports come from {} different runs", runs.len());
    }
    let refs: Vec<&Input> = inputs.iter().collect();
    ctx.wrote(&ctx.run.write_text("reports/comparison.txt", "comparison", &refs, &table)?);
    Ok(())
}
