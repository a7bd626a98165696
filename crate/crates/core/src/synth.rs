//! Seeded synthetic annotation logs.
//!
//! Each user is logged in with probability `logged_in_fraction` and has a
//! log-normal activity factor. The number of sessions is `1 + Poisson(λ)`
//! with `λ` set so that the expected total per user matches
//! `mean_annotations_anonymous`, multiplied by `logged_in_multiplier` for
//! logged-in users. Sessions end after each annotation with a per-user
//! hazard (geometric lengths). Gaps inside a session are log-normal around
//! `gap_median_seconds` and drift by a per-session trend.
//!
//! With `signal_strength > 0` the hazard is scaled by
//! `(last gap / mean gap so far)^(2 * signal_strength)`: a slowing user is
//! more likely to stop, which is visible in the delta window.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnnotationEvent, ANONYMOUS_PREFIX};
use crate::seed::derive_seed;

/// Longest within-session gap; one second below the default session cut.
pub const MAX_SESSION_GAP_SECONDS: i64 = 1799;
/// Shortest break between sessions.
pub const MIN_BREAK_SECONDS: i64 = 1800;
const MAX_HAZARD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub user_count: usize,
    pub logged_in_fraction: f64,
    pub mean_annotations_anonymous: f64,
    pub logged_in_multiplier: f64,
    /// Log-space spread of the per-user activity factor (mean 1).
    pub activity_sigma: f64,
    pub mean_session_length: f64,
    /// Log-space spread of each user's mean session length.
    pub session_length_sigma: f64,
    pub mean_break_hours: f64,
    /// Users start uniformly within this many days of `start`.
    pub arrival_days: f64,
    pub gap_median_seconds: f64,
    pub gap_sigma: f64,
    /// Standard deviation of the per-session drift of log gaps per step.
    pub gap_trend_sd: f64,
    pub signal_strength: f64,
    pub start: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            user_count: 2000,
            logged_in_fraction: 0.63,
            mean_annotations_anonymous: 10.53,
            logged_in_multiplier: 20.99 / 10.53,
            activity_sigma: 1.6,
            mean_session_length: 8.0,
            session_length_sigma: 0.3,
            mean_break_hours: 48.0,
            arrival_days: 90.0,
            gap_median_seconds: 45.0,
            gap_sigma: 0.6,
            gap_trend_sd: 0.15,
            signal_strength: 0.5,
            start: Utc.with_ymd_and_hms(2019, 10, 1, 0, 0, 0).unwrap(),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("logged_in_multiplier", self.logged_in_multiplier),
            ("mean_session_length", self.mean_session_length),
            ("mean_break_hours", self.mean_break_hours),
            ("gap_median_seconds", self.gap_median_seconds),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("activity_sigma", self.activity_sigma),
            ("session_length_sigma", self.session_length_sigma),
            ("arrival_days", self.arrival_days),
            ("gap_sigma", self.gap_sigma),
            ("gap_trend_sd", self.gap_trend_sd),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.logged_in_fraction) {
            return Err(Error::invalid("logged_in_fraction must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::invalid("signal_strength must lie in [0, 1]"));
        }
        if self.user_count == 0 {
            return Err(Error::invalid("user_count must be at least 1"));
        }
        if self.mean_annotations_anonymous.is_nan()
            || self.mean_annotations_anonymous < self.mean_session_length
        {
            return Err(Error::invalid(
                "mean_annotations_anonymous must be at least mean_session_length (every user has one session)",
            ));
        }
        Ok(())
    }

    /// Expected extra sessions beyond the first, before the activity factor.
    fn extra_sessions(&self, logged_in: bool) -> f64 {
        let anonymous = self.mean_annotations_anonymous / self.mean_session_length;
        let sessions = if logged_in {
            anonymous * self.logged_in_multiplier
        } else {
            anonymous
        };
        (sessions - 1.0).max(0.0)
    }
}

/// Log-normal with mean 1.
fn unit_mean_lognormal(sigma: f64) -> LogNormal<f64> {
    LogNormal::new(-0.5 * sigma * sigma, sigma).expect("finite sigma")
}

fn user_id(index: usize, logged_in: bool) -> String {
    if logged_in {
        format!("volunteer-{index:05}")
    } else {
        format!("{ANONYMOUS_PREFIX}{index:05}")
    }
}

fn generate_user(config: &SynthConfig, index: usize) -> Vec<AnnotationEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &format!("user/{index}")));
    let logged_in = rng.random_bool(config.logged_in_fraction);
    let id = user_id(index, logged_in);

    let activity = unit_mean_lognormal(config.activity_sigma).sample(&mut rng);
    let lambda = config.extra_sessions(logged_in) * activity;
    let sessions = 1 + if lambda > 0.0 {
        Poisson::new(lambda)
            .expect("positive rate")
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mean_length = config.mean_session_length
        * unit_mean_lognormal(config.session_length_sigma).sample(&mut rng);
    let base_hazard = (1.0 / mean_length).min(1.0);

    let noise = Normal::new(0.0, config.gap_sigma).expect("finite sigma");
    let trend = Normal::new(0.0, config.gap_trend_sd).expect("finite sd");
    let breaks = Exp::new(1.0 / (config.mean_break_hours * 3600.0)).expect("positive rate");
    let log_median = config.gap_median_seconds.ln();
    let exponent = 2.0 * config.signal_strength;

    let arrival = rng.random_range(0.0..=config.arrival_days * 86_400.0);
    let mut t = config.start.timestamp() + arrival as i64;
    let mut events = Vec::new();
    for s in 0..sessions {
        if s > 0 {
            t += MIN_BREAK_SECONDS + breaks.sample(&mut rng) as i64;
        }
        let tau = trend.sample(&mut rng);
        let mut gap_sum = 0.0;
        let mut step = 0usize;
        loop {
            events.push(
                AnnotationEvent::new(id.clone(), logged_in, Utc.timestamp_opt(t, 0).unwrap())
                    .with_annotation_id(format!("{index:05}-{:06}", events.len())),
            );
            let hazard = if step == 0 || exponent == 0.0 {
                base_hazard
            } else {
                let last = (events[events.len() - 1].epoch_seconds()
                    - events[events.len() - 2].epoch_seconds()) as f64;
                let ratio = last / (gap_sum / step as f64);
                (base_hazard * ratio.powf(exponent)).min(MAX_HAZARD)
            };
            if rng.random_bool(hazard.clamp(0.0, 1.0)) {
                break;
            }
            step += 1;
            let log_gap = log_median + tau * step as f64 + noise.sample(&mut rng);
            let gap = (log_gap.exp().round() as i64).clamp(1, MAX_SESSION_GAP_SECONDS);
            gap_sum += gap as f64;
            t += gap;
        }
    }
    events
}

/// All events of all users, sorted by timestamp (ties by user, then
/// annotation id). Identical configs give identical logs.
pub fn generate_log(config: &SynthConfig) -> Result<Vec<AnnotationEvent>> {
    config.validate()?;
    let mut events: Vec<AnnotationEvent> = (0..config.user_count)
        .flat_map(|i| generate_user(config, i))
        .collect();
    events.sort_by(|a, b| {
        (a.timestamp, &a.user_id, &a.annotation_id).cmp(&(
            b.timestamp,
            &b.user_id,
            &b.annotation_id,
        ))
    });
    Ok(events)
}
