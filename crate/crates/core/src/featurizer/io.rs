use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};

use super::{Dataset, DatasetItem, FeaturizerConfig, ENGINEERED_FEATURES};
use crate::error::{Error, Result};

const KEY_COLUMNS: [&str; 5] = ["user_id", "timestamp", "session_index", "raw_y", "label"];

fn header(window: usize) -> Vec<String> {
    KEY_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=window).map(|k| format!("d{k}")))
        .chain((1..=ENGINEERED_FEATURES).map(|k| format!("f{k}")))
        .collect()
}

// 17 significant digits always round-trip an f64
fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes one row per item; the header is written even for an empty dataset.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, sink: W) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(header(dataset.config.window))?;
    for item in &dataset.items {
        let mut row = vec![
            item.user_id.clone(),
            item.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            item.session_index.to_string(),
            item.raw_y.to_string(),
            u8::from(item.label).to_string(),
        ];
        row.extend(item.deltas.iter().copied().map(fmt_real));
        row.extend(item.engineered.iter().copied().map(fmt_real));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_csv`]; `config` comes from the
/// JSON sidecar.
pub fn read_dataset_csv<R: Read>(source: R, config: FeaturizerConfig) -> Result<Dataset> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let expected = header(config.window);
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("dataset header does not match M = {}", config.window),
        });
    }

    let mut items = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("invalid {what}"),
        };
        let real = |i: usize| record[i].parse::<f64>().map_err(|_| bad(&expected[i]));

        let timestamp = DateTime::parse_from_rfc3339(&record[1])
            .map_err(|_| bad("timestamp"))?
            .with_timezone(&Utc);
        let session_index = record[2].parse().map_err(|_| bad("session_index"))?;
        let raw_y = record[3].parse().map_err(|_| bad("raw_y"))?;
        let label = match &record[4] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("label")),
        };
        let offset = KEY_COLUMNS.len();
        let deltas = (0..config.window)
            .map(|k| real(offset + k))
            .collect::<Result<Vec<_>>>()?;
        let mut engineered = [0.0; ENGINEERED_FEATURES];
        for (k, slot) in engineered.iter_mut().enumerate() {
            *slot = real(offset + config.window + k)?;
        }
        // f6 is the 1-based position within the session
        let position = (engineered[5] as usize).saturating_sub(1);
        items.push(DatasetItem {
            deltas,
            engineered,
            raw_y,
            label,
            timestamp,
            user_id: record[0].to_string(),
            session_index,
            position,
        });
    }
    Ok(Dataset { items, config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurizer::{build_dataset, EmitPolicy};
    use crate::ingest::{validate_log, AnnotationEvent};
    use crate::sessionizer::SessionizerConfig;
    use chrono::TimeZone;

    #[test]
    fn round_trip_is_bit_exact() {
        let secs = [0, 7, 19, 5000, 5003, 5011, 9999, 20_000];
        let events = secs.iter().map(|&s| {
            AnnotationEvent::new("u", true, Utc.timestamp_opt(1_600_000_000 + s, 0).unwrap())
        });
        let log = validate_log(events);
        let cfg = FeaturizerConfig::new(3, 1)
            .unwrap()
            .with_policy(EmitPolicy::PadShortWindows);
        let mut ds =
            build_dataset(&log, &SessionizerConfig::from_seconds(1000).unwrap(), &cfg).unwrap();
        // values that need all 17 digits
        ds.items[0].engineered[2] = 0.1 + 0.2;
        ds.items[1].engineered[3] = std::f64::consts::PI * 1e7;

        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice(), cfg).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_dataset_has_header() {
        let cfg = FeaturizerConfig::new(5, 2).unwrap();
        let ds = Dataset {
            items: Vec::new(),
            config: cfg,
        };
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end().split(',').count(), 5 + 5 + 7);
    }
}
