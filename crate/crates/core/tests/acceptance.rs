//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use artrec_core::backend::{
    distill_reasoning, replay_reasoning, run_inference, MockFixed, MockNoisy, MockOracle,
    PolicyBackend,
};
use artrec_core::corpus::{
    read_examples, split, synth_corpus, write_examples, CorpusConfig, ExampleSet, Preset,
    SplitLabel,
};
use artrec_core::extract::{extract_prediction, CandidateIndex, DEFAULT_NGRAM};
use artrec_core::metrics::{self, PredictionLog, PredictionRow, PropensityModel};
use artrec_core::policylab::{
    dpo_loss, grad_check, preference_pairs, sft_loss, train, DpoConfig, ExampleFeatures,
    Featurizer, PolicyParams, PreferencePair, TrainData, TrainOptions, DEFAULT_LR_GRID,
    FEATURE_DIM,
};
use artrec_core::promptkit::{self, parse_prompt, render_prompt};
use artrec_core::{numeric, Example};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus(n_examples: usize, seed: u64) -> Vec<Example> {
    let config = CorpusConfig {
        n_examples,
        seed,
        ..CorpusConfig::default()
    };
    synth_corpus(&config).expect("synthetic corpus").examples
}

fn metric_identities() -> Outcome {
    // the +-0.05 IPS band is about one standard error at N = 5,000 for this
    // size mix, so the sample is made large enough for it to be a real test
    let examples = corpus(100_000, SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let random = PredictionLog::new(
        examples
            .iter()
            .map(|e| PredictionRow::for_example(e, rng.random_range(1..=e.option_count() as u32)))
            .collect(),
    );
    let perfect = PredictionLog::new(
        examples
            .iter()
            .map(|e| PredictionRow::for_example(e, e.truth_index))
            .collect(),
    );
    let uniform = PropensityModel::Uniform;
    let r_ips = metrics::ips(&random, &uniform).map_err(|e| e.to_string())?;
    let r_acc = metrics::accuracy(&random).map_err(|e| e.to_string())?;
    let (expected_acc, _) = metrics::expected_random_baseline(&examples);
    let p_ips = metrics::ips(&perfect, &uniform).map_err(|e| e.to_string())?;
    let mean_m = numeric::mean(examples.iter().map(|e| e.option_count() as f64)).unwrap();
    ensure((r_ips - 1.0).abs() <= 0.05, || format!("random IPS {r_ips:.4} outside 1 +- 0.05"))?;
    ensure((r_acc - expected_acc).abs() <= 0.02, || {
        format!("random accuracy {r_acc:.4} vs mean(1/m) {expected_acc:.4}")
    })?;
    ensure(p_ips == mean_m, || format!("perfect IPS {p_ips} != mean(m) {mean_m}"))?;
    Ok(format!(
        "N={} random IPS {r_ips:.4}, random acc {r_acc:.4} (mean 1/m {expected_acc:.4}), perfect IPS {p_ips} = mean(m)",
        examples.len()
    ))
}

fn ips_weighting() -> Outcome {
    let uniform = PropensityModel::Uniform;
    let one = |m: u32| {
        let log = PredictionLog::new(vec![PredictionRow::new("u:t", 1, 1, m)]);
        metrics::ips(&log, &uniform).unwrap()
    };
    let (big, small) = (one(40), one(2));
    ensure(big == 20.0 * small, || format!("m=40 contributes {big}, m=2 contributes {small}"))?;
    Ok(format!("m=40 hit = {big}, m=2 hit = {small}, ratio exactly 20"))
}

fn random_features(rng: &mut ChaCha8Rng, dim: usize) -> ExampleFeatures {
    let m = rng.random_range(2..=12);
    ExampleFeatures {
        m,
        truth: rng.random_range(0..m),
        values: (0..m * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn random_params(rng: &mut ChaCha8Rng, dim: usize) -> PolicyParams {
    PolicyParams::from_weights((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_pairs(rng: &mut ChaCha8Rng, dim: usize) -> Vec<PreferencePair> {
    (0..rng.random_range(1..=16))
        .map(|_| {
            let x = random_features(rng, dim);
            let rejected = (x.truth + rng.random_range(1..x.m)) % x.m;
            PreferencePair {
                chosen: x.truth,
                rejected,
                features: std::sync::Arc::new(x),
            }
        })
        .collect()
}

fn loss_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let eps = 1e-5;
    let mut worst_sft: f64 = 0.0;
    let mut worst_dpo: f64 = 0.0;
    for _ in 0..100 {
        let dim = rng.random_range(2..=FEATURE_DIM);
        let batch: Vec<_> = (0..rng.random_range(1..=16))
            .map(|_| random_features(&mut rng, dim))
            .collect();
        let params = random_params(&mut rng, dim);
        let f = |w: &[f64]| sft_loss(&PolicyParams::from_weights(w.to_vec()), &batch).unwrap();
        worst_sft = worst_sft.max(grad_check(f, &params.weights, eps));
    }
    for _ in 0..100 {
        let dim = rng.random_range(2..=FEATURE_DIM);
        let pairs = random_pairs(&mut rng, dim);
        let config = DpoConfig::new(rng.random_range(0.05..2.0), random_params(&mut rng, dim)).unwrap();
        let params = random_params(&mut rng, dim);
        let f = |w: &[f64]| dpo_loss(&PolicyParams::from_weights(w.to_vec()), &config, &pairs).unwrap();
        worst_dpo = worst_dpo.max(grad_check(f, &params.weights, eps));
    }
    let mut worst_anchor: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.random_range(2..=FEATURE_DIM);
        let pairs = random_pairs(&mut rng, dim);
        let reference = random_params(&mut rng, dim);
        let beta = 10f64.powf(rng.random_range(-3.0..1.5));
        let config = DpoConfig::new(beta, reference.clone()).unwrap();
        let (loss, _) = dpo_loss(&reference, &config, &pairs).unwrap();
        worst_anchor = worst_anchor.max((loss - std::f64::consts::LN_2).abs());
    }
    ensure(worst_sft < 1e-5, || format!("SFT gradient max rel error {worst_sft:.2e}"))?;
    ensure(worst_dpo < 1e-5, || format!("DPO gradient max rel error {worst_dpo:.2e}"))?;
    ensure(worst_anchor <= 1e-12, || format!("DPO anchor off by {worst_anchor:.2e}"))?;
    Ok(format!(
        "max rel error SFT {worst_sft:.2e}, DPO {worst_dpo:.2e}; |loss(ref) - ln 2| <= {worst_anchor:.1e}"
    ))
}

fn policy_ips(label: &str, params: &PolicyParams, test: &[Example]) -> Result<f64, String> {
    let log = run_inference(&PolicyBackend::new(label, params.clone()), test, SEED, 1)
        .map_err(|e| e.to_string())?;
    ensure(log.failures() == 0, || format!("{label}: {} failed rows", log.failures()))?;
    metrics::ips(&log, &PropensityModel::Uniform).map_err(|e| e.to_string())
}

fn training_direction() -> Outcome {
    let preset = Preset::DeskScale;
    let config = preset.config(SEED);
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let bayes = ExampleSet::new(corpus.examples.clone(), SplitLabel::Train)
        .bayes_accuracy(config.preference_noise);
    ensure((bayes - 0.8).abs() <= 0.02, || format!("Bayes accuracy {bayes:.4} not ~0.8"))?;
    let (train_set, val_set, test_set) =
        split(&corpus.examples, preset.fractions(), SEED).map_err(|e| e.to_string())?;
    let featurizer = Featurizer::new();
    let train_x = featurizer.featurize_all(&train_set.examples);
    let val_x = featurizer.featurize_all(&val_set.examples);
    let opts = TrainOptions {
        seed: SEED,
        ..TrainOptions::default()
    };
    let init = PolicyParams::zeros(FEATURE_DIM);
    let sft = train(TrainData::Sft(&train_x), &val_x, &DEFAULT_LR_GRID, &init, &opts)
        .map_err(|e| e.to_string())?;
    let sft_ips = policy_ips("sft", &sft.params, &test_set.examples)?;
    let (_, random_ips) = metrics::expected_random_baseline(&test_set.examples);
    let sft_gain = 100.0 * (sft_ips - random_ips) / random_ips;

    let pairs = preference_pairs(&train_set.examples, &train_x, SEED);
    let dpo_config = DpoConfig::new(0.1, sft.params.clone()).map_err(|e| e.to_string())?;
    let dpo_opts = TrainOptions {
        parent_checkpoint: Some("sft".into()),
        ..opts
    };
    let dpo = train(
        TrainData::Dpo {
            pairs: &pairs,
            config: &dpo_config,
        },
        &val_x,
        &DEFAULT_LR_GRID,
        &sft.params,
        &dpo_opts,
    )
    .map_err(|e| e.to_string())?;
    let dpo_ips = policy_ips("dpo", &dpo.params, &test_set.examples)?;
    let dpo_change = 100.0 * (dpo_ips - sft_ips) / sft_ips;
    ensure(sft_gain >= 20.0, || format!("SFT test IPS {sft_ips:.4} only {sft_gain:+.1}% over random"))?;
    ensure(dpo_change >= -1.0, || {
        format!("DPO test IPS {dpo_ips:.4} is {dpo_change:+.2}% vs SFT {sft_ips:.4}")
    })?;
    Ok(format!(
        "Bayes acc {bayes:.3}; test IPS random {random_ips:.3}, SFT {sft_ips:.3} ({sft_gain:+.1}%, lr {}), DPO {dpo_ips:.3} ({dpo_change:+.2}% vs SFT, lr {})",
        sft.params.lr.unwrap(),
        dpo.params.lr.unwrap()
    ))
}

fn extraction_robustness() -> Outcome {
    let config = CorpusConfig {
        n_examples: 10_000,
        seed: SEED,
        ..CorpusConfig::default()
    };
    let corpus = synth_corpus(&config).map_err(|e| e.to_string())?;
    let mut exact = 0usize;
    let mut total = 0usize;
    for title in &corpus.catalog {
        let captions = title.captions();
        let index = CandidateIndex::new(&captions, DEFAULT_NGRAM);
        for o in &title.options {
            total += 1;
            let r = index.extract(&promptkit::prediction_target(&o.caption));
            exact += (r.option_id == o.option_id && !r.tie) as usize;
        }
    }
    ensure(exact == total, || format!("exact captions recovered {exact}/{total}"))?;

    let log = run_inference(&MockNoisy { dropout: 0.1 }, &corpus.examples, SEED, 1)
        .map_err(|e| e.to_string())?;
    let noisy = metrics::accuracy(&log).map_err(|e| e.to_string())?;
    ensure(log.len() == 10_000, || format!("{} trials", log.len()))?;
    ensure(noisy >= 0.99, || format!("10% dropout recovered {noisy:.4}"))?;

    let tie = extract_prediction(
        "Prediction: <option> same words here </option>",
        &["other caption text", "same words here", "same words here"],
        DEFAULT_NGRAM,
    );
    ensure(tie.option_id == 2 && tie.tie, || format!("tie case gave {tie:?}"))?;
    Ok(format!(
        "exact {exact}/{total}, 10% dropout {:.2}% of {} trials, tie -> option 2 flagged",
        100.0 * noisy,
        log.len()
    ))
}

fn position_bias() -> Outcome {
    let examples = corpus(1_000, SEED);
    let log = run_inference(&MockFixed, &examples, SEED, 1).map_err(|e| e.to_string())?;
    let report = metrics::evaluate(&log, &PropensityModel::Uniform, Some("mock-fixed"))
        .map_err(|e| e.to_string())?;
    for (label, stat) in &report.per_label_accuracy {
        let want = if *label == 1 { 1.0 } else { 0.0 };
        ensure(stat.accuracy == want, || format!("label {label} accuracy {}", stat.accuracy))?;
    }
    let bias = report.position_bias.clone().ok_or("detector did not flag MockFixed")?;
    ensure(bias.cutoff_label == 1, || format!("cutoff at label {}", bias.cutoff_label))?;
    ensure(report.render_table().contains("position bias"), || "report omits the flag".into())?;
    let labels = report.per_label_accuracy.len();
    Ok(format!("{labels} labels, all > 1 at 0%; flagged: {}", bias.describe()))
}

fn distillation_filter() -> Outcome {
    let examples = corpus(10_000, SEED);
    let teacher = MockOracle { error_rate: 0.02 };
    let (kept, stats) = distill_reasoning(&examples, &teacher, SEED);
    ensure(stats.requested == stats.accepted + stats.filtered, || format!("{stats:?}"))?;
    ensure(stats.backend_errors == 0, || format!("{} backend errors", stats.backend_errors))?;
    ensure((stats.filter_rate - 0.02).abs() <= 0.005, || {
        format!("filter rate {:.4}", stats.filter_rate)
    })?;
    let mut replay_misses = 0usize;
    for e in &examples {
        if let Some(reasoning) = kept.get(&e.key()) {
            let r = replay_reasoning(&teacher, e, reasoning, SEED).map_err(|e| e.to_string())?;
            replay_misses += (r.option_id != e.truth_index) as usize;
        }
    }
    ensure(replay_misses == 0, || format!("{replay_misses} accepted reasonings fail replay"))?;
    Ok(format!(
        "filter rate {:.4} ({} of {}), {} accepted reasonings all replay to the truth",
        stats.filter_rate, stats.filtered, stats.requested, stats.accepted
    ))
}

fn jsonl(records: &[artrec_core::TrainingRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    promptkit::write_jsonl(&mut buf, records).unwrap();
    buf
}

fn data_discipline() -> Outcome {
    let preset = Preset::DeskScale;
    let examples = synth_corpus(&preset.config(SEED)).map_err(|e| e.to_string())?.examples;
    for seed in 0..100u64 {
        let (a, b, c) = split(&examples, preset.fractions(), seed).map_err(|e| e.to_string())?;
        let mut seen = HashSet::new();
        for e in a.iter().chain(b.iter()).chain(c.iter()) {
            ensure(seen.insert(e.key()), || format!("seed {seed}: {} in two splits", e.key()))?;
        }
        ensure(seen.len() == examples.len(), || format!("seed {seed}: lost rows"))?;
    }

    let mut first = Vec::new();
    write_examples(&mut first, &examples).map_err(|e| e.to_string())?;
    let reloaded = read_examples(first.as_slice(), SplitLabel::Train).map_err(|e| e.to_string())?;
    let mut second = Vec::new();
    write_examples(&mut second, &reloaded.examples).map_err(|e| e.to_string())?;
    ensure(first == second, || "example JSONL changed after a round trip".into())?;
    let sft = |xs: &[Example]| jsonl(&promptkit::export_sft(xs).unwrap());
    let dpo = |xs: &[Example]| jsonl(&promptkit::export_dpo(xs, SEED).unwrap().0);
    ensure(sft(&examples) == sft(&reloaded.examples), || "SFT export not byte-stable".into())?;
    ensure(dpo(&examples) == dpo(&reloaded.examples), || "DPO export not byte-stable".into())?;

    let render_set = corpus(10_000, SEED + 1);
    let mut ok = 0usize;
    for e in &render_set {
        let prompt = render_prompt(e).map_err(|e| e.to_string())?;
        let parsed = parse_prompt(&prompt.prompt_text).map_err(|e| e.to_string())?;
        let expected: Vec<(u32, String)> = e
            .title
            .options
            .iter()
            .map(|o| (o.option_id, o.caption.clone()))
            .collect();
        ok += (parsed == expected) as usize;
    }
    ensure(ok == render_set.len(), || format!("render/parse {ok}/{}", render_set.len()))?;
    Ok(format!(
        "100 split seeds disjoint; examples/SFT/DPO JSONL byte-stable ({} bytes); render/parse {ok}/{}",
        first.len(),
        render_set.len()
    ))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric identities", Duration::from_secs(10), metric_identities),
        ("IPS weighting", Duration::from_secs(10), ips_weighting),
        ("loss correctness", Duration::from_secs(30), loss_correctness),
        ("training direction", Duration::from_secs(300), training_direction),
        ("extraction robustness", Duration::from_secs(30), extraction_robustness),
        ("position-bias detector", Duration::from_secs(10), position_bias),
        ("distillation filter", Duration::from_secs(60), distillation_filter),
        ("data discipline", Duration::from_secs(60), data_discipline),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| Err("panicked".to_string()))
            .and_then(|detail| {
                let took = start.elapsed();
                if took > *budget {
                    Err(format!("{detail}; took {took:.1?}, budget {budget:?}"))
                } else {
                    Ok(detail)
                }
            });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name} [{took:.1?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name} [{took:.1?}]: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
