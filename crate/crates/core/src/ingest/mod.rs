//! Annotation event logs: parsing, validation and summary statistics.
//!
//! Two input formats are supported. The native format is a four-column CSV
//!
//! ```text
//! user_id,logged_in,timestamp,annotation_id
//! u1,1,2019-10-01T12:00:05Z,a1
//! ```
//!
//! with RFC 3339 timestamps (converted to UTC, truncated to whole seconds) and
//! an optional `annotation_id`. The second is a Zooniverse classification
//! export, where anonymous volunteers appear with a `not-logged-in-` user name.

mod stats;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stats::{descriptive_stats, welch_t_test, LogSummary, WelchTest};

pub const NATIVE_HEADER: [&str; 4] = ["user_id", "logged_in", "timestamp", "annotation_id"];

/// User name prefix Zooniverse assigns to volunteers tracked only by cookie.
pub const ANONYMOUS_PREFIX: &str = "not-logged-in-";

/// One timestamped annotation made by one volunteer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub user_id: String,
    pub logged_in: bool,
    pub timestamp: DateTime<Utc>,
    pub annotation_id: Option<String>,
}

impl AnnotationEvent {
    pub fn new(user_id: impl Into<String>, logged_in: bool, timestamp: DateTime<Utc>) -> Self {
        AnnotationEvent {
            user_id: user_id.into(),
            logged_in,
            timestamp,
            annotation_id: None,
        }
    }

    pub fn with_annotation_id(mut self, id: impl Into<String>) -> Self {
        self.annotation_id = Some(id.into());
        self
    }

    /// Seconds since the Unix epoch.
    pub fn epoch_seconds(&self) -> i64 {
        self.timestamp.timestamp()
    }
}

/// All events of one user, ascending by timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserLog {
    pub user_id: String,
    pub events: Vec<AnnotationEvent>,
}

impl UserLog {
    /// A user counts as logged in if any of their events was made while logged in.
    pub fn logged_in(&self) -> bool {
        self.events.iter().any(|e| e.logged_in)
    }
}

/// Events grouped per user (users in lexicographic order), sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidatedLog {
    users: Vec<UserLog>,
    event_count: usize,
}

impl ValidatedLog {
    pub fn users(&self) -> &[UserLog] {
        &self.users
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    pub fn event_count(&self) -> usize {
        self.event_count
    }

    pub fn is_empty(&self) -> bool {
        self.event_count == 0
    }

    /// All events, user by user.
    pub fn events(&self) -> impl Iterator<Item = &AnnotationEvent> {
        self.users.iter().flat_map(|u| u.events.iter())
    }
}

fn parse_rfc3339(raw: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .ok()
        .and_then(|t| t.with_timezone(&Utc).with_nanosecond(0))
}

fn parse_zooniverse_time(raw: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S UTC")
        .ok()
        .map(|t| t.and_utc())
        .or_else(|| parse_rfc3339(raw))
}

fn position_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Parses the native event-log CSV. Rows are returned in file order.
pub fn parse_event_log<R: Read>(source: R) -> Result<Vec<AnnotationEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::EmptyLog);
    }
    if headers.len() != NATIVE_HEADER.len()
        || headers.iter().zip(NATIVE_HEADER).any(|(h, want)| h != want)
    {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                NATIVE_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = position_line(&record);
        if record.len() != NATIVE_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", record.len()),
            });
        }
        let user_id = &record[0];
        if user_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty user_id".into(),
            });
        }
        let logged_in = match &record[1] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("logged_in must be 0 or 1, found `{other}`"),
                })
            }
        };
        let timestamp = parse_rfc3339(&record[2]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", &record[2]),
        })?;
        let annotation_id = match &record[3] {
            "" => None,
            id => Some(id.to_string()),
        };
        events.push(AnnotationEvent {
            user_id: user_id.to_string(),
            logged_in,
            timestamp,
            annotation_id,
        });
    }

    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(events)
}

/// Writes events in the native CSV format, `Z`-suffixed UTC timestamps, LF line endings.
pub fn write_event_log<W: Write>(events: &[AnnotationEvent], sink: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(NATIVE_HEADER)?;
    for e in events {
        writer.write_record([
            e.user_id.as_str(),
            if e.logged_in { "1" } else { "0" },
            &e.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            e.annotation_id.as_deref().unwrap_or(""),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses a Zooniverse classification export.
///
/// Requires `user_name`, `user_id` and `created_at`; `classification_id`, when
/// present, becomes the annotation id. Other columns are ignored.
pub fn parse_zooniverse_export<R: Read>(source: R) -> Result<Vec<AnnotationEvent>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = |name: &str| column(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let user_name_col = required("user_name")?;
    let user_id_col = required("user_id")?;
    let created_col = required("created_at")?;
    let classification_col = column("classification_id");

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = position_line(&record);
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");

        let user_name = field(user_name_col);
        let (user_id, logged_in) = if user_name.starts_with(ANONYMOUS_PREFIX) {
            (user_name.to_string(), false)
        } else {
            let id = match field(user_id_col) {
                "" => user_name,
                id => id,
            };
            (id.to_string(), true)
        };
        if user_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "row has neither user_name nor user_id".into(),
            });
        }
        let raw_time = field(created_col);
        let timestamp = parse_zooniverse_time(raw_time).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable created_at `{raw_time}`"),
        })?;
        let annotation_id = classification_col
            .map(field)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        events.push(AnnotationEvent {
            user_id,
            logged_in,
            timestamp,
            annotation_id,
        });
    }

    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(events)
}

/// Groups events by user, sorts each group by timestamp and drops exact
/// `(user_id, timestamp, annotation_id)` duplicates.
pub fn validate_log(events: impl IntoIterator<Item = AnnotationEvent>) -> ValidatedLog {
    let mut groups: BTreeMap<String, Vec<AnnotationEvent>> = BTreeMap::new();
    for e in events {
        groups.entry(e.user_id.clone()).or_default().push(e);
    }

    let mut event_count = 0;
    let users = groups
        .into_iter()
        .map(|(user_id, mut events)| {
            // stable: equal keys keep their input order, so the first copy wins
            events.sort_by(|a, b| {
                a.timestamp
                    .cmp(&b.timestamp)
                    .then_with(|| a.annotation_id.cmp(&b.annotation_id))
            });
            events
                .dedup_by(|b, a| a.timestamp == b.timestamp && a.annotation_id == b.annotation_id);
            event_count += events.len();
            UserLog { user_id, events }
        })
        .collect();

    ValidatedLog { users, event_count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_569_931_200 + s, 0).unwrap()
    }

    #[test]
    fn parses_native_row() {
        let csv = "user_id,logged_in,timestamp,annotation_id\nu1,1,2019-10-01T12:00:05Z,a1\n";
        let events = parse_event_log(csv.as_bytes()).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!(e.user_id, "u1");
        assert!(e.logged_in);
        assert_eq!(
            e.timestamp,
            Utc.with_ymd_and_hms(2019, 10, 1, 12, 0, 5).unwrap()
        );
        assert_eq!(e.annotation_id.as_deref(), Some("a1"));
    }

    #[test]
    fn accepts_crlf_and_offsets() {
        let csv =
            "user_id,logged_in,timestamp,annotation_id\r\nu1,0,2019-10-01T14:00:05+02:00,\r\n";
        let events = parse_event_log(csv.as_bytes()).unwrap();
        assert_eq!(
            events[0].timestamp,
            Utc.with_ymd_and_hms(2019, 10, 1, 12, 0, 5).unwrap()
        );
        assert!(!events[0].logged_in);
        assert_eq!(events[0].annotation_id, None);
    }

    #[test]
    fn header_only_is_empty_log() {
        let csv = "user_id,logged_in,timestamp,annotation_id\n";
        assert!(matches!(
            parse_event_log(csv.as_bytes()),
            Err(Error::EmptyLog)
        ));
        assert!(matches!(
            parse_event_log("".as_bytes()),
            Err(Error::EmptyLog)
        ));
    }

    #[test]
    fn bad_rows_report_line_numbers() {
        let csv = "user_id,logged_in,timestamp,annotation_id\nu1,1,2019-10-01T12:00:05Z,a\nu1,1,notatime,b\n";
        match parse_event_log(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "user_id,logged_in,timestamp,annotation_id\nu1,yes,2019-10-01T12:00:05Z,a\n";
        assert!(matches!(
            parse_event_log(csv.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let csv = "user_id,logged_in,timestamp,annotation_id\nu1,1,2019-10-01T12:00:05Z\n";
        assert!(matches!(
            parse_event_log(csv.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn zooniverse_mapping() {
        let csv = "classification_id,user_name,user_id,workflow_id,created_at,annotations\n\
                   1,alice,42,7,2020-01-01 00:00:00 UTC,[]\n\
                   2,not-logged-in-abc123,,7,2020-01-01 00:05:00 UTC,[]\n";
        let events = parse_zooniverse_export(csv.as_bytes()).unwrap();
        assert_eq!(events[0].user_id, "42");
        assert!(events[0].logged_in);
        assert_eq!(events[0].annotation_id.as_deref(), Some("1"));
        assert_eq!(
            events[0].timestamp,
            Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
        );
        assert_eq!(events[1].user_id, "not-logged-in-abc123");
        assert!(!events[1].logged_in);
    }

    #[test]
    fn zooniverse_missing_column() {
        let csv = "classification_id,user_name,user_id,workflow_id\n1,alice,42,7\n";
        match parse_zooniverse_export(csv.as_bytes()) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "created_at"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn native_file_is_not_a_zooniverse_export() {
        let csv = "user_id,logged_in,timestamp,annotation_id\nu1,1,2019-10-01T12:00:05Z,a1\n";
        assert!(matches!(
            parse_zooniverse_export(csv.as_bytes()),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn validate_dedups_and_sorts() {
        let e = AnnotationEvent::new("u", true, at(10)).with_annotation_id("x");
        let log = validate_log(vec![e.clone(), e.clone()]);
        assert_eq!(log.event_count(), 1);

        let log = validate_log(vec![
            AnnotationEvent::new("u", true, at(30)),
            AnnotationEvent::new("u", true, at(10)),
            AnnotationEvent::new("u", true, at(20)),
        ]);
        let times: Vec<_> = log.events().map(|e| e.timestamp).collect();
        assert_eq!(times, vec![at(10), at(20), at(30)]);

        // same second, distinct annotation ids are kept
        let log = validate_log(vec![
            AnnotationEvent::new("u", true, at(10)).with_annotation_id("a"),
            AnnotationEvent::new("u", true, at(10)).with_annotation_id("b"),
        ]);
        assert_eq!(log.event_count(), 2);
    }

    #[test]
    fn validate_counts() {
        let events = (0..3).flat_map(|u| {
            (0..2).map(move |k| AnnotationEvent::new(format!("u{u}"), true, at(k * 100)))
        });
        let log = validate_log(events);
        assert_eq!(log.user_count(), 3);
        assert_eq!(log.event_count(), 6);
        assert!(validate_log(Vec::new()).is_empty());
    }

    #[test]
    fn write_then_parse_round_trip() {
        let events = vec![
            AnnotationEvent::new("u,1", true, at(0)).with_annotation_id("a\"1"),
            AnnotationEvent::new("u2", false, at(5)),
        ];
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        assert_eq!(parse_event_log(buf.as_slice()).unwrap(), events);
    }
}
