//! Sliding-window dataset construction.
//!
//! Every annotation of every session yields (policy permitting) one item whose
//! feature vector is the `M` most recent inter-annotation time deltas followed
//! by seven engineered features:
//!
//! | idx | feature |
//! |-----|---------|
//! | f1 | mean annotations per past session |
//! | f2 | mean annotations over the five most recent past sessions |
//! | f3 | mean gap between annotations, pooled over past sessions (s) |
//! | f4 | mean gap between annotations so far in the current session (s) |
//! | f5 | annotations completed in the whole history, current included |
//! | f6 | annotations completed in the current session, current included |
//! | f7 | logged-in flag |
//!
//! The target is the number of annotations still to come in the current
//! session; the label is whether that count exceeds `gamma`.

mod io;
mod normalize;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ValidatedLog;
use crate::sessionizer::{sessionize, Session, SessionizerConfig};

pub use io::{read_dataset_csv, write_dataset_csv};
pub use normalize::Normalizer;

pub const ENGINEERED_FEATURES: usize = 7;
/// Past sessions averaged by f2.
pub const RECENT_SESSIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitPolicy {
    /// Skip items until the user has `M + 1` annotations of history.
    RequireFullWindow,
    /// Emit every annotation, zero-padding missing deltas at the front.
    PadShortWindows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    #[serde(rename = "M")]
    pub window: usize,
    pub gamma: u32,
    pub emit_policy: EmitPolicy,
}

impl FeaturizerConfig {
    pub fn new(window: usize, gamma: u32) -> Result<Self> {
        let config = FeaturizerConfig {
            window,
            gamma,
            emit_policy: EmitPolicy::RequireFullWindow,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_policy(mut self, emit_policy: EmitPolicy) -> Self {
        self.emit_policy = emit_policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        if self.gamma == 0 {
            return Err(Error::invalid("gamma must be at least 1"));
        }
        Ok(())
    }

    /// Width of the model input, `M + 7`.
    pub fn width(&self) -> usize {
        self.window + ENGINEERED_FEATURES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// Oldest delta first; zero-padded at the front when history is short.
    pub deltas: Vec<f64>,
    pub engineered: [f64; ENGINEERED_FEATURES],
    /// Number of deltas backed by real annotations (`<= M`).
    pub available_deltas: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub deltas: Vec<f64>,
    pub engineered: [f64; ENGINEERED_FEATURES],
    pub raw_y: usize,
    pub label: bool,
    pub timestamp: DateTime<Utc>,
    pub user_id: String,
    pub session_index: usize,
    pub position: usize,
}

impl DatasetItem {
    /// The model input: deltas followed by the engineered features.
    pub fn feature_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.deltas.len() + ENGINEERED_FEATURES);
        v.extend_from_slice(&self.deltas);
        v.extend_from_slice(&self.engineered);
        v
    }

    pub fn width(&self) -> usize {
        self.deltas.len() + ENGINEERED_FEATURES
    }

    fn sort_key(&self) -> (DateTime<Utc>, &str, usize, usize) {
        (
            self.timestamp,
            &self.user_id,
            self.session_index,
            self.position,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
    pub config: FeaturizerConfig,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Same items and features, labels recomputed for another threshold.
    pub fn relabel(&self, gamma: u32) -> Result<Dataset> {
        let config = FeaturizerConfig {
            gamma,
            ..self.config
        };
        config.validate()?;
        let items = self
            .items
            .iter()
            .map(|item| DatasetItem {
                label: item.raw_y > gamma as usize,
                ..item.clone()
            })
            .collect();
        Ok(Dataset { items, config })
    }

    pub fn positive_count(&self) -> usize {
        self.items.iter().filter(|i| i.label).count()
    }
}

fn mean_or_zero(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Features of annotation `position` of session `session_index`.
///
/// `user_sessions` must be one user's sessions in order. Missing history is
/// filled with zeros (f1–f4) or zero deltas.
pub fn compute_features(
    user_sessions: &[Session],
    session_index: usize,
    position: usize,
    window: usize,
) -> Result<Features> {
    let session = user_sessions
        .get(session_index)
        .ok_or_else(|| Error::invalid(format!("session index {session_index} out of range")))?;
    if position >= session.len() {
        return Err(Error::invalid(format!(
            "position {position} out of range for session of {} annotations",
            session.len()
        )));
    }

    let past = &user_sessions[..session_index];
    let past_counts: usize = past.iter().map(Session::len).sum();
    let f1 = mean_or_zero(past_counts as f64, past.len());

    let recent = &past[past.len().saturating_sub(RECENT_SESSIONS)..];
    let f2 = mean_or_zero(
        recent.iter().map(Session::len).sum::<usize>() as f64,
        recent.len(),
    );

    let past_gap_sum: f64 = past.iter().flat_map(Session::gaps).sum();
    let past_gap_count: usize = past.iter().map(|s| s.len() - 1).sum();
    let f3 = mean_or_zero(past_gap_sum, past_gap_count);

    let current = &session.events[..=position];
    let current_gap_sum = (current[position].epoch_seconds() - current[0].epoch_seconds()) as f64;
    let f4 = mean_or_zero(current_gap_sum, position);

    let f5 = (past_counts + position + 1) as f64;
    let f6 = (position + 1) as f64;
    let f7 = if session.events[position].logged_in {
        1.0
    } else {
        0.0
    };

    // Walk the user's full history backwards from the current annotation.
    let mut times = Vec::with_capacity(window + 1);
    'collect: for s in user_sessions[..=session_index].iter().rev() {
        let end = if s.session_index == session_index {
            position + 1
        } else {
            s.len()
        };
        for e in s.events[..end].iter().rev() {
            times.push(e.epoch_seconds());
            if times.len() == window + 1 {
                break 'collect;
            }
        }
    }
    times.reverse();
    let available = times.len().saturating_sub(1);
    let mut deltas = vec![0.0; window - available];
    deltas.extend(times.windows(2).map(|w| (w[1] - w[0]) as f64));

    Ok(Features {
        deltas,
        engineered: [f1, f2, f3, f4, f5, f6, f7],
        available_deltas: available,
    })
}

/// Annotations still to come in the session, and whether they exceed `gamma`.
pub fn label_item(session: &Session, position: usize, gamma: u32) -> Result<(usize, bool)> {
    if position >= session.len() {
        return Err(Error::invalid(format!(
            "position {position} out of range for session of {} annotations",
            session.len()
        )));
    }
    let raw_y = session.len() - 1 - position;
    Ok((raw_y, raw_y > gamma as usize))
}

fn user_items(
    sessions: &[Session],
    fconfig: &FeaturizerConfig,
    out: &mut Vec<DatasetItem>,
) -> Result<()> {
    for session in sessions {
        for position in 0..session.len() {
            let features =
                compute_features(sessions, session.session_index, position, fconfig.window)?;
            if fconfig.emit_policy == EmitPolicy::RequireFullWindow
                && features.available_deltas < fconfig.window
            {
                continue;
            }
            let (raw_y, label) = label_item(session, position, fconfig.gamma)?;
            out.push(DatasetItem {
                deltas: features.deltas,
                engineered: features.engineered,
                raw_y,
                label,
                timestamp: session.events[position].timestamp,
                user_id: session.user_id.clone(),
                session_index: session.session_index,
                position,
            });
        }
    }
    Ok(())
}

/// Builds the time-ordered dataset for a whole log.
pub fn build_dataset(
    log: &ValidatedLog,
    sconfig: &SessionizerConfig,
    fconfig: &FeaturizerConfig,
) -> Result<Dataset> {
    fconfig.validate()?;
    let mut items = Vec::new();
    for user in log.users() {
        let sessions = sessionize(&user.events, sconfig)?;
        user_items(&sessions, fconfig, &mut items)?;
    }
    items.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(Dataset {
        items,
        config: *fconfig,
    })
}
