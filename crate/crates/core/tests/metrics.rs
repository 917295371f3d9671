use artrec_core::metrics::{
    accuracy, breakdown_by_label, breakdown_by_m, evaluate, ips, PredictionLog, PredictionRow,
    PropensityModel,
};
use proptest::prelude::*;

fn rows() -> impl Strategy<Value = Vec<PredictionRow>> {
    prop::collection::vec(
        (2u32..=48).prop_flat_map(|m| (Just(m), 1..=m, 1..=m)),
        1..200,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (m, truth, pred))| PredictionRow::new(format!("u{i}:t{i}"), pred, truth, m))
            .collect()
    })
}

proptest! {
    #[test]
    fn bounds_and_ordering(rows in rows()) {
        let log = PredictionLog::new(rows);
        let acc = accuracy(&log).unwrap();
        let v = ips(&log, &PropensityModel::Uniform).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert!(v >= 0.0);
        prop_assert!(v >= acc);
    }

    #[test]
    fn label_breakdown_is_consistent(rows in rows()) {
        let log = PredictionLog::new(rows);
        let by_label = breakdown_by_label(&log);
        let correct: usize = by_label.values().map(|s| s.correct).sum();
        let count: usize = by_label.values().map(|s| s.count).sum();
        prop_assert_eq!(count, log.len());
        prop_assert_eq!(correct, log.rows.iter().filter(|r| r.is_correct()).count());
        let weighted: f64 = by_label.values().map(|s| s.count as f64 * s.accuracy).sum::<f64>() / count as f64;
        prop_assert!((weighted - accuracy(&log).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn size_breakdown_recomposes_ips(rows in rows()) {
        let log = PredictionLog::new(rows);
        let by_m = breakdown_by_m(&log, &PropensityModel::Uniform).unwrap();
        let total: f64 = by_m.values().map(|s| s.count as f64 * s.ips).sum::<f64>() / log.len() as f64;
        prop_assert!((total - ips(&log, &PropensityModel::Uniform).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn perfect_predictor_scores_mean_m(rows in rows()) {
        let rows: Vec<_> = rows.into_iter().map(|mut r| { r.predicted_id = Some(r.truth_index); r }).collect();
        let mean_m = rows.iter().map(|r| r.m as f64).sum::<f64>() / rows.len() as f64;
        let log = PredictionLog::new(rows);
        let v = ips(&log, &PropensityModel::Uniform).unwrap();
        prop_assert!((v - mean_m).abs() <= 1e-12 * mean_m);
        prop_assert_eq!(accuracy(&log).unwrap(), 1.0);
    }

    #[test]
    fn jsonl_round_trip(rows in rows()) {
        let log = PredictionLog::new(rows);
        let text = log.to_jsonl();
        let back = PredictionLog::from_jsonl(&text).unwrap();
        prop_assert_eq!(back.to_jsonl(), text);
        prop_assert_eq!(evaluate(&back, &PropensityModel::Uniform, None).unwrap().keys_digest, log.keys_digest());
    }
}
