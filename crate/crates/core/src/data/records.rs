use std::io::Read;
use std::path::Path;

use chrono::NaiveDateTime;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

/// One timestamped attempt of a student at an exercise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub student_id: String,
    pub exercise_id: String,
    pub concept_id: String,
    pub correct: bool,
    /// Duration of the attempt in seconds.
    pub answer_time: f64,
    /// Epoch seconds.
    pub timestamp: f64,
}

/// Source column for each record field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub student: String,
    pub exercise: String,
    pub concept: String,
    pub correct: String,
    pub answer_time: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            student: "student".into(),
            exercise: "exercise".into(),
            concept: "concept".into(),
            correct: "correct".into(),
            answer_time: "answer_time".into(),
            timestamp: "timestamp".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub columns: ColumnMap,
    /// Multiplier converting the answer-time column to seconds (0.001 for ms).
    pub answer_time_scale: f64,
    /// chrono format used when a timestamp is not numeric.
    pub timestamp_format: String,
    /// Characters separating multiple concepts; only the first is kept.
    pub concept_separators: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            answer_time_scale: 1.0,
            timestamp_format: "%Y-%m-%d %H:%M:%S%.f".into(),
            concept_separators: ";,|".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub records: Vec<InteractionRecord>,
    pub dropped: usize,
}

pub fn parse_interactions(path: &Path, config: &IngestConfig) -> Result<ParsedLog> {
    let file = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    parse_interactions_from_reader(file, config)
}

/// Reads a headered CSV. Rows with missing, malformed or negative fields are
/// dropped and counted; the result is sorted by `(student_id, timestamp)`.
pub fn parse_interactions_from_reader<R: Read>(
    reader: R,
    config: &IngestConfig,
) -> Result<ParsedLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CoreError::Config(format!("unknown column `{name}` in CSV header")))
    };
    let c = &config.columns;
    let idx = [
        col(&c.student)?,
        col(&c.exercise)?,
        col(&c.concept)?,
        col(&c.correct)?,
        col(&c.answer_time)?,
        col(&c.timestamp)?,
    ];

    let mut log = ParsedLog::default();
    for (line, row) in rdr.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                warn!("skipping unreadable row {}: {e}", line + 2);
                log.dropped += 1;
                continue;
            }
        };
        match parse_row(&row, &idx, config) {
            Some(rec) => log.records.push(rec),
            None => {
                debug!("dropping row {}", line + 2);
                log.dropped += 1;
            }
        }
    }
    sort_records(&mut log.records);
    Ok(log)
}

fn parse_row(row: &csv::StringRecord, idx: &[usize; 6], config: &IngestConfig) -> Option<InteractionRecord> {
    let field = |i: usize| row.get(idx[i]).map(str::trim).filter(|s| !s.is_empty());
    let student_id = field(0)?.to_string();
    let exercise_id = field(1)?.to_string();
    let concept_id = field(2)?
        .split(|ch| config.concept_separators.contains(ch))
        .map(str::trim)
        .find(|s| !s.is_empty())?
        .to_string();
    let correct = match field(3)?.parse::<f64>().ok()? {
        x if x == 0.0 => false,
        x if x == 1.0 => true,
        _ => return None,
    };
    let answer_time = field(4)?.parse::<f64>().ok()? * config.answer_time_scale;
    let timestamp = parse_timestamp(field(5)?, &config.timestamp_format)?;
    if !(answer_time.is_finite() && answer_time >= 0.0 && timestamp.is_finite() && timestamp >= 0.0) {
        return None;
    }
    Some(InteractionRecord {
        student_id,
        exercise_id,
        concept_id,
        correct,
        answer_time,
        timestamp,
    })
}

fn parse_timestamp(s: &str, format: &str) -> Option<f64> {
    if let Ok(x) = s.parse::<f64>() {
        return Some(x);
    }
    let dt = NaiveDateTime::parse_from_str(s, format).ok()?;
    Some(dt.and_utc().timestamp_millis() as f64 / 1000.0)
}

/// Stable sort by student, then timestamp.
pub fn sort_records(records: &mut [InteractionRecord]) {
    records.sort_by(|a, b| {
        a.student_id
            .cmp(&b.student_id)
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
}

/// Splits sorted records into per-student slices.
pub fn group_by_student(records: &[InteractionRecord]) -> Vec<&[InteractionRecord]> {
    records
        .chunk_by(|a, b| a.student_id == b.student_id)
        .collect()
}

/// Writes records with the canonical column names.
pub fn write_interactions<W: std::io::Write>(writer: W, records: &[InteractionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["student", "exercise", "concept", "correct", "answer_time", "timestamp"])?;
    for r in records {
        w.write_record([
            r.student_id.as_str(),
            r.exercise_id.as_str(),
            r.concept_id.as_str(),
            if r.correct { "1" } else { "0" },
            &r.answer_time.to_string(),
            &r.timestamp.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CoreError::io("<csv writer>", e))?;
    Ok(())
}
