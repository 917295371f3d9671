use std::collections::HashMap;

use artrec_core::corpus::{synth_corpus, CorpusConfig};
use artrec_core::promptkit::{
    draw_rejected, export_dpo, export_sft, export_sft_reasoning, parse_prompt, parse_target,
    render_prompt, TrainingTarget,
};
use artrec_core::Example;
use proptest::prelude::*;

fn corpus(seed: u64, m: Option<u32>) -> Vec<Example> {
    let mut config = CorpusConfig {
        n_users: 50,
        n_titles: 30,
        n_examples: 200,
        seed,
        ..CorpusConfig::default()
    };
    if let Some(m) = m {
        config.m_distribution = [(m, 1.0)].into_iter().collect();
    }
    synth_corpus(&config).unwrap().examples
}

#[test]
fn rejected_option_is_uniform_over_siblings() {
    let examples = corpus(1, Some(5));
    let e = &examples[0];
    let trials = 10_000;
    let mut counts = [0usize; 6];
    for seed in 0..trials {
        counts[draw_rejected(e, seed).unwrap() as usize] += 1;
    }
    assert_eq!(counts[e.truth_index as usize], 0);
    for (id, &count) in counts.iter().enumerate().skip(1) {
        if id != e.truth_index as usize {
            let f = count as f64 / trials as f64;
            assert!((f - 0.25).abs() <= 0.02, "option {id}: {f}");
        }
    }
}

fn check_target(target: &str, e: &Example, want: &str) -> Result<(), TestCaseError> {
    let (_, caption) = parse_target(target).ok_or_else(|| TestCaseError::fail(target.to_string()))?;
    prop_assert!(e.title.options.iter().any(|o| o.caption == caption));
    prop_assert_eq!(caption, want);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn render_then_parse_recovers_captions(seed in any::<u64>()) {
        for e in corpus(seed, None) {
            let prompt = render_prompt(&e).unwrap();
            let parsed = parse_prompt(&prompt.prompt_text).unwrap();
            prop_assert_eq!(parsed.len(), e.option_count());
            for (i, (id, caption)) in parsed.iter().enumerate() {
                prop_assert_eq!(*id, i as u32 + 1);
                prop_assert_eq!(caption, &e.title.options[i].caption);
                prop_assert_eq!(prompt.caption_at(i), caption.as_str());
            }
        }
    }

    #[test]
    fn exported_targets_follow_the_grammar(seed in any::<u64>()) {
        let examples = corpus(seed, None);
        for (r, e) in export_sft(&examples).unwrap().iter().zip(&examples) {
            let TrainingTarget::Completion(t) = &r.target else { panic!("sft record is a completion") };
            check_target(t, e, e.truth_caption())?;
        }
        let reasons: HashMap<_, _> = examples
            .iter()
            .step_by(2)
            .map(|e| (e.key(), format!("Because {} fits.", e.user.user_id)))
            .collect();
        let (records, stats) = export_sft_reasoning(&examples, &reasons).unwrap();
        prop_assert_eq!(stats.emitted, reasons.len());
        for r in &records {
            let e = examples.iter().find(|e| e.key() == r.key).unwrap();
            let TrainingTarget::Completion(t) = &r.target else { panic!("reasoning record is a completion") };
            let (reason, _) = parse_target(t).unwrap();
            prop_assert_eq!(reason, Some(reasons[&r.key].as_str()));
            check_target(t, e, e.truth_caption())?;
        }
        let (pairs, _) = export_dpo(&examples, seed).unwrap();
        for (r, e) in pairs.iter().zip(&examples) {
            let TrainingTarget::Preference { chosen, rejected } = &r.target else { panic!("dpo record is a preference") };
            let rid = r.rejected_id.unwrap();
            prop_assert_ne!(rid, e.truth_index);
            check_target(chosen, e, e.truth_caption())?;
            check_target(rejected, e, e.title.caption(rid).unwrap())?;
        }
    }
}
