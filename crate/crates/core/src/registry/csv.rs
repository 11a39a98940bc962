//! CSV ingestion of index values: header `index_id,period,value`, one row per value.

use std::io::Read;

use thiserror::Error;

use super::{IndexValue, PeriodKey};

pub const HEADER: [&str; 3] = ["index_id", "period", "value"];

#[derive(Debug, Clone, PartialEq, Error)]
#[error("csv line {line}: {message}")]
pub struct CsvError {
    pub line: u64,
    pub message: String,
}

/// Parse every row; the first malformed row aborts with its line number.
pub fn read_values<R: Read>(reader: R) -> Result<Vec<IndexValue>, CsvError> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| CsvError {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(CsvError {
            line: 1,
            message: format!("expected header '{}'", HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CsvError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| CsvError { line, message };
        let period: PeriodKey = record[1].parse().map_err(|e| fail(format!("{e}")))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| fail(format!("invalid number '{}'", &record[2])))?;
        if !value.is_finite() {
            return Err(fail(format!("value '{}' is not finite", &record[2])));
        }
        out.push(IndexValue {
            index_id: record[0].to_string(),
            period,
            value,
        });
    }
    Ok(out)
}
