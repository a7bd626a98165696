mod common;

use std::collections::BTreeMap;

use engage_core::featurizer::{build_dataset, EmitPolicy, FeaturizerConfig, Normalizer};
use engage_core::ingest::validate_log;
use engage_core::sessionizer::{sessionize_log, SessionizerConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn raw_y_counts_down_to_zero(events in common::log_events(4, 60), m in 1usize..8, gamma in 1u32..10) {
        let log = validate_log(events);
        let scfg = SessionizerConfig::default();
        for policy in [EmitPolicy::RequireFullWindow, EmitPolicy::PadShortWindows] {
            let fcfg = FeaturizerConfig::new(m, gamma).unwrap().with_policy(policy);
            let ds = build_dataset(&log, &scfg, &fcfg).unwrap();
            let mut runs: BTreeMap<(String, usize), Vec<(usize, usize)>> = BTreeMap::new();
            for item in &ds.items {
                prop_assert_eq!(item.label, item.raw_y > gamma as usize);
                runs.entry((item.user_id.clone(), item.session_index)).or_default().push((item.position, item.raw_y));
            }
            for run in runs.values() {
                for w in run.windows(2) {
                    prop_assert_eq!(w[1].0, w[0].0 + 1);
                    prop_assert_eq!(w[1].1 + 1, w[0].1);
                }
                prop_assert_eq!(run.last().unwrap().1, 0);
            }
        }
    }

    #[test]
    fn item_counts_match_recount(events in common::log_events(5, 60), m in 1usize..10) {
        let log = validate_log(events);
        let scfg = SessionizerConfig::default();
        let sessions = sessionize_log(&log, &scfg).unwrap();

        let mut full = 0;
        for user in &sessions {
            let mut seen = 0;
            for s in user {
                for _ in &s.events {
                    if seen >= m {
                        full += 1;
                    }
                    seen += 1;
                }
            }
        }

        let fcfg = FeaturizerConfig::new(m, 3).unwrap();
        let strict = build_dataset(&log, &scfg, &fcfg).unwrap();
        let padded = build_dataset(&log, &scfg, &fcfg.with_policy(EmitPolicy::PadShortWindows)).unwrap();
        prop_assert_eq!(strict.len(), full);
        prop_assert_eq!(padded.len(), log.event_count());
    }

    #[test]
    fn history_counters_behave(events in common::log_events(4, 60), m in 1usize..6) {
        let log = validate_log(events);
        let fcfg = FeaturizerConfig::new(m, 2).unwrap().with_policy(EmitPolicy::PadShortWindows);
        let ds = build_dataset(&log, &SessionizerConfig::default(), &fcfg).unwrap();
        for w in ds.items.windows(2) {
            prop_assert!(w[0].timestamp <= w[1].timestamp);
        }
        let mut last: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for item in &ds.items {
            prop_assert_eq!(item.engineered[5], (item.position + 1) as f64);
            if let Some(&(f5, session)) = last.get(item.user_id.as_str()) {
                prop_assert!(item.engineered[4] >= f5);
                if item.session_index != session {
                    prop_assert_eq!(item.position, 0);
                }
            }
            last.insert(&item.user_id, (item.engineered[4], item.session_index));
        }
    }

    #[test]
    fn normalizer_standardizes_fit_slice(events in common::log_events(5, 80), m in 1usize..6) {
        let log = validate_log(events);
        let fcfg = FeaturizerConfig::new(m, 2).unwrap().with_policy(EmitPolicy::PadShortWindows);
        let ds = build_dataset(&log, &SessionizerConfig::default(), &fcfg).unwrap();
        let norm = Normalizer::fit(&ds.items).unwrap();
        let rows = norm.apply_all(&ds.items).unwrap();
        let width = fcfg.width();
        let n = ds.len() as f64;
        for d in 0..width {
            let col: Vec<f64> = rows.iter().skip(d).step_by(width).copied().collect();
            prop_assert!(norm.std[d] >= 0.0);
            if !norm.constant[d] {
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9, "dim {} mean {}", d, mean);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-9, "dim {} std {}", d, var.sqrt());
            }
        }
        let mut f7: Vec<f64> = rows.iter().skip(width - 1).step_by(width).copied().collect();
        f7.sort_by(f64::total_cmp);
        f7.dedup();
        prop_assert!(f7.len() <= 2);
    }

    #[test]
    fn relabel_matches_fresh_build(events in common::log_events(4, 60), m in 1usize..6, g1 in 1u32..12, g2 in 1u32..12) {
        let log = validate_log(events);
        let scfg = SessionizerConfig::default();
        let a = build_dataset(&log, &scfg, &FeaturizerConfig::new(m, g1).unwrap()).unwrap();
        let b = build_dataset(&log, &scfg, &FeaturizerConfig::new(m, g2).unwrap()).unwrap();
        prop_assert_eq!(a.relabel(g2).unwrap(), b);
    }
}
