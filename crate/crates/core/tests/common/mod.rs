#![allow(dead_code)]

use chrono::{DateTime, TimeZone, Utc};
use engage_core::ingest::AnnotationEvent;
use proptest::prelude::*;

pub const ORIGIN: i64 = 1_569_888_000;

pub fn at(seconds: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(ORIGIN + seconds, 0).unwrap()
}

/// Gaps mixing short in-session pauses, values around the 30-minute
/// boundary and long breaks.
pub fn gap() -> impl Strategy<Value = i64> {
    prop_oneof![
        6 => 0i64..300,
        2 => 1790i64..1810,
        2 => 1810i64..200_000,
    ]
}

/// One user's time-ordered stream.
pub fn user_stream(
    user: &'static str,
    max_len: usize,
) -> impl Strategy<Value = Vec<AnnotationEvent>> {
    (
        any::<bool>(),
        0i64..10_000,
        prop::collection::vec(gap(), 0..max_len),
    )
        .prop_map(move |(logged_in, start, gaps)| {
            let mut t = start;
            let mut out = vec![AnnotationEvent::new(user, logged_in, at(t))];
            for g in gaps {
                t += g;
                out.push(AnnotationEvent::new(user, logged_in, at(t)));
            }
            out
        })
}

/// Several users with unique timestamps per user.
pub fn log_events(max_users: usize, max_len: usize) -> impl Strategy<Value = Vec<AnnotationEvent>> {
    const NAMES: [&str; 6] = ["ann", "bob", "cy", "dee", "eve", "not-logged-in-7f"];
    prop::collection::vec(0..NAMES.len(), 1..=max_users).prop_flat_map(move |mut idx| {
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter()
            .map(|i| {
                user_stream(NAMES[i], max_len).prop_map(|evs| {
                    evs.into_iter()
                        .enumerate()
                        .map(|(k, e)| e.with_annotation_id(format!("a{k}")))
                        .collect::<Vec<_>>()
                })
            })
            .collect::<Vec<_>>()
            .prop_map(|users| users.into_iter().flatten().collect())
    })
}
