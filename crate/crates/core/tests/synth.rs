use engage_core::featurizer::{build_dataset, EmitPolicy, FeaturizerConfig};
use engage_core::ingest::{descriptive_stats, validate_log, write_event_log};
use engage_core::sessionizer::{sessionize_log, SessionizerConfig};
use engage_core::synth::{generate_log, SynthConfig};

fn csv(config: &SynthConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_event_log(&generate_log(config).unwrap(), &mut buf).unwrap();
    buf
}

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        user_count: 60,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(csv(&small(1)), csv(&small(1)));
    assert_ne!(csv(&small(1)), csv(&small(2)));
}

#[test]
fn output_needs_no_correction() {
    let events = generate_log(&small(3)).unwrap();
    let log = validate_log(events.clone());
    assert_eq!(log.event_count(), events.len());
    let mut a: Vec<_> = log.events().cloned().collect();
    let mut b = events;
    a.sort_by(|x, y| (&x.user_id, x.timestamp).cmp(&(&y.user_id, y.timestamp)));
    b.sort_by(|x, y| (&x.user_id, x.timestamp).cmp(&(&y.user_id, y.timestamp)));
    assert_eq!(a, b);
}

#[test]
fn defaults_match_the_calibration_targets() {
    let log = validate_log(generate_log(&SynthConfig::default()).unwrap());
    assert_eq!(log.user_count(), 2000);
    let s = descriptive_stats(&log, 20).unwrap();
    let ratio = s.mean_annotations_logged_in.unwrap() / s.mean_annotations_anonymous.unwrap();
    let target = 20.99 / 10.53;
    assert!((ratio / target - 1.0).abs() <= 0.15, "ratio {ratio}");
    assert!(
        (0.15..=0.25).contains(&s.top_k_share),
        "top-20 share {}",
        s.top_k_share
    );
    assert!(s.welch_t.unwrap() > 0.0 && s.welch_p.unwrap() < 0.01);
}

#[test]
fn forced_single_session_stays_together() {
    let config = SynthConfig {
        user_count: 1,
        logged_in_fraction: 0.0,
        mean_annotations_anonymous: 30.0,
        mean_session_length: 30.0,
        ..SynthConfig::default()
    };
    let log = validate_log(generate_log(&config).unwrap());
    let sessions = sessionize_log(&log, &SessionizerConfig::default()).unwrap();
    assert_eq!(sessions[0].len(), 1);
    assert!(sessions[0][0].gaps().all(|g| g < 1800.0));
}

/// Pearson correlation of the latest log gap with the remaining count.
fn gap_outcome_correlation(signal: f64) -> f64 {
    let config = SynthConfig {
        user_count: 3000,
        session_length_sigma: 0.0,
        signal_strength: signal,
        seed: 11,
        ..SynthConfig::default()
    };
    let log = validate_log(generate_log(&config).unwrap());
    let fcfg = FeaturizerConfig::new(1, 1)
        .unwrap()
        .with_policy(EmitPolicy::PadShortWindows);
    let ds = build_dataset(&log, &SessionizerConfig::default(), &fcfg).unwrap();
    let pairs: Vec<(f64, f64)> = ds
        .items
        .iter()
        .filter(|i| i.position >= 2)
        .map(|i| (i.deltas[0].ln(), i.raw_y as f64))
        .collect();
    let n = pairs.len() as f64;
    let (mx, my) = (
        pairs.iter().map(|p| p.0).sum::<f64>() / n,
        pairs.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn no_signal_means_gaps_carry_no_information() {
    assert!(gap_outcome_correlation(0.0).abs() < 0.03);
    assert!(gap_outcome_correlation(1.0) < -0.1);
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        SynthConfig {
            signal_strength: 1.5,
            ..SynthConfig::default()
        },
        SynthConfig {
            logged_in_fraction: -0.1,
            ..SynthConfig::default()
        },
        SynthConfig {
            user_count: 0,
            ..SynthConfig::default()
        },
        SynthConfig {
            gap_median_seconds: 0.0,
            ..SynthConfig::default()
        },
    ] {
        assert!(generate_log(&bad).is_err());
    }
}
