//! CSV readers and writers for response and exclusion files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::domain::{validate_judged, validate_true_proportion, ExclusionReport, ResponseRecord, VisType};
use crate::error::{Error, Result};

pub const RESPONSE_HEADER: [&str; 7] = [
    "participant_id",
    "trial_index",
    "vis",
    "true_proportion",
    "judged_percent",
    "response_time_ms",
    "submitted_at",
];

pub const EXCLUSION_HEADER: [&str; 4] = [
    "participant_id",
    "extreme_count_p5",
    "extreme_count_p99",
    "excluded",
];

/// Canonical timestamp form: RFC-3339, UTC, millisecond precision.
pub fn format_timestamp(at: &DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn write_responses<W: Write>(records: &[ResponseRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESPONSE_HEADER)?;
    for r in records {
        w.write_record([
            r.participant_id.as_str(),
            &r.trial_index.to_string(),
            r.vis.as_str(),
            &r.true_proportion.to_string(),
            &r.judged_percent.to_string(),
            &r.response_time_ms.to_string(),
            &format_timestamp(&r.submitted_at),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn responses_to_string(records: &[ResponseRecord]) -> String {
    let mut buf = Vec::new();
    write_responses(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Parses a responses CSV. Row numbers in errors are file line numbers, so
/// the first data row is row 2.
pub fn read_responses<R: Read>(input: R) -> Result<Vec<ResponseRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(RESPONSE_HEADER) {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`", RESPONSE_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() != RESPONSE_HEADER.len() {
            return Err(Error::Parse {
                row,
                column: "*".into(),
                message: format!("expected {} fields, found {}", RESPONSE_HEADER.len(), rec.len()),
            });
        }
        let field = |col: usize| rec.get(col).unwrap_or("").trim();
        let bad = |col: usize, message: String| Error::Parse {
            row,
            column: RESPONSE_HEADER[col].into(),
            message,
        };

        let participant_id = field(0).to_string();
        if participant_id.is_empty() {
            return Err(bad(0, "empty participant id".into()));
        }
        let trial_index = field(1).parse::<usize>().map_err(|e| bad(1, e.to_string()))?;
        let vis = field(2).parse::<VisType>().map_err(|e| bad(2, e.to_string()))?;
        let true_proportion = field(3).parse::<u8>().map_err(|e| bad(3, e.to_string()))?;
        validate_true_proportion(true_proportion).map_err(|e| bad(3, e.to_string()))?;
        let judged_percent = field(4).parse::<u8>().map_err(|e| bad(4, e.to_string()))?;
        validate_judged(judged_percent).map_err(|e| bad(4, e.to_string()))?;
        let response_time_ms = field(5).parse::<u64>().map_err(|e| bad(5, e.to_string()))?;
        let submitted_at = DateTime::parse_from_rfc3339(field(6))
            .map_err(|e| bad(6, e.to_string()))?
            .with_timezone(&Utc);

        out.push(ResponseRecord {
            participant_id,
            trial_index,
            vis,
            true_proportion,
            judged_percent,
            response_time_ms,
            submitted_at,
        });
    }
    Ok(out)
}

pub fn load_responses(path: impl AsRef<Path>) -> Result<Vec<ResponseRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_responses(std::io::BufReader::new(file))
}

pub fn save_responses(records: &[ResponseRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_responses(records, std::io::BufWriter::new(file))
}

pub fn write_exclusions<W: Write>(reports: &[ExclusionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXCLUSION_HEADER)?;
    for r in reports {
        w.write_record([
            r.participant_id.as_str(),
            &r.extreme_count_p5.to_string(),
            &r.extreme_count_p99.to_string(),
            if r.excluded { "true" } else { "false" },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}
