//! Splitting a user's annotation history into sessions.
//!
//! A new session starts whenever the gap to the previous annotation is at
//! least the configured threshold (30 minutes by default). Gaps of exactly the
//! threshold therefore break the session; simultaneous annotations never do.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{AnnotationEvent, ValidatedLog};

pub const DEFAULT_GAP_MINUTES: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionizerConfig {
    pub gap_threshold_seconds: i64,
}

impl Default for SessionizerConfig {
    fn default() -> Self {
        SessionizerConfig {
            gap_threshold_seconds: DEFAULT_GAP_MINUTES * 60,
        }
    }
}

impl SessionizerConfig {
    pub fn from_minutes(minutes: i64) -> Result<Self> {
        Self::from_seconds(minutes.saturating_mul(60))
    }

    pub fn from_seconds(seconds: i64) -> Result<Self> {
        if seconds <= 0 {
            return Err(Error::invalid("session gap threshold must be positive"));
        }
        Ok(SessionizerConfig {
            gap_threshold_seconds: seconds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub session_index: usize,
    pub events: Vec<AnnotationEvent>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Session {
    fn new(user_id: &str, session_index: usize, events: Vec<AnnotationEvent>) -> Self {
        let start = events[0].timestamp;
        let end = events[events.len() - 1].timestamp;
        Session {
            user_id: user_id.to_string(),
            session_index,
            events,
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Gaps between consecutive annotations, in seconds.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.events
            .windows(2)
            .map(|w| (w[1].epoch_seconds() - w[0].epoch_seconds()) as f64)
    }
}

/// Splits one user's time-ordered events into sessions.
pub fn sessionize(
    user_events: &[AnnotationEvent],
    config: &SessionizerConfig,
) -> Result<Vec<Session>> {
    let Some(first) = user_events.first() else {
        return Ok(Vec::new());
    };
    let user_id = first.user_id.as_str();

    let mut sessions = Vec::new();
    let mut current = vec![first.clone()];
    for pair in user_events.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.user_id != user_id {
            return Err(Error::invalid(format!(
                "sessionize expects one user, found `{user_id}` and `{}`",
                next.user_id
            )));
        }
        let gap = next.epoch_seconds() - prev.epoch_seconds();
        if gap < 0 {
            return Err(Error::invalid(format!(
                "events of `{user_id}` are not sorted by timestamp"
            )));
        }
        if gap >= config.gap_threshold_seconds {
            let done = std::mem::take(&mut current);
            sessions.push(Session::new(user_id, sessions.len(), done));
        }
        current.push(next.clone());
    }
    sessions.push(Session::new(user_id, sessions.len(), current));
    Ok(sessions)
}

/// Sessionizes every user of a validated log, in the log's user order.
pub fn sessionize_log(log: &ValidatedLog, config: &SessionizerConfig) -> Result<Vec<Vec<Session>>> {
    log.users()
        .iter()
        .map(|u| sessionize(&u.events, config))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub session_count: usize,
    pub annotation_counts: Vec<usize>,
    /// Mean gap in seconds per session; `None` for single-annotation sessions.
    pub mean_gaps: Vec<Option<f64>>,
}

pub fn session_stats(sessions: &[Session]) -> SessionStats {
    SessionStats {
        session_count: sessions.len(),
        annotation_counts: sessions.iter().map(Session::len).collect(),
        mean_gaps: sessions
            .iter()
            .map(|s| (s.len() > 1).then(|| s.gaps().sum::<f64>() / (s.len() - 1) as f64))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn events_at(user: &str, seconds: &[i64]) -> Vec<AnnotationEvent> {
        seconds
            .iter()
            .map(|&s| {
                AnnotationEvent::new(user, true, Utc.timestamp_opt(1_600_000_000 + s, 0).unwrap())
            })
            .collect()
    }

    fn sizes(sessions: &[Session]) -> Vec<usize> {
        sessions.iter().map(Session::len).collect()
    }

    #[test]
    fn splits_on_long_gap() {
        let s = sessionize(
            &events_at("u", &[0, 600, 2700]),
            &SessionizerConfig::default(),
        )
        .unwrap();
        assert_eq!(sizes(&s), vec![2, 1]);
        assert_eq!(s[1].session_index, 1);
    }

    #[test]
    fn exact_threshold_starts_new_session() {
        let s = sessionize(&events_at("u", &[0, 1800]), &SessionizerConfig::default()).unwrap();
        assert_eq!(sizes(&s), vec![1, 1]);
        let s = sessionize(&events_at("u", &[0, 1799]), &SessionizerConfig::default()).unwrap();
        assert_eq!(sizes(&s), vec![2]);
    }

    #[test]
    fn single_event_session() {
        let s = sessionize(&events_at("u", &[42]), &SessionizerConfig::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].start, s[0].end);
    }

    #[test]
    fn simultaneous_events_stay_together() {
        let s = sessionize(&events_at("u", &[5, 5, 5]), &SessionizerConfig::default()).unwrap();
        assert_eq!(sizes(&s), vec![3]);
    }

    #[test]
    fn rejects_unsorted_and_mixed_users() {
        let cfg = SessionizerConfig::default();
        assert!(sessionize(&events_at("u", &[10, 0]), &cfg).is_err());
        let mut mixed = events_at("u", &[0]);
        mixed.extend(events_at("v", &[10]));
        assert!(sessionize(&mixed, &cfg).is_err());
    }

    #[test]
    fn rejects_non_positive_threshold() {
        assert!(SessionizerConfig::from_minutes(0).is_err());
        assert!(SessionizerConfig::from_seconds(-5).is_err());
    }

    #[test]
    fn stats_per_session() {
        let cfg = SessionizerConfig::default();
        let s = sessionize(&events_at("u", &[0, 60, 120]), &cfg).unwrap();
        let st = session_stats(&s);
        assert_eq!(st.annotation_counts, vec![3]);
        assert_eq!(st.mean_gaps, vec![Some(60.0)]);

        let s = sessionize(&events_at("u", &[0, 1, 2, 3, 10_000, 10_001]), &cfg).unwrap();
        assert_eq!(session_stats(&s).annotation_counts, vec![4, 2]);

        let s = sessionize(&events_at("u", &[0]), &cfg).unwrap();
        assert_eq!(session_stats(&s).mean_gaps, vec![None]);
    }
}
