//! Session and price files.
//!
//! Sessions come as CSV or JSON. Column names follow this crate's own
//! export (`session_id, arrival, departure, requested_kwh,
//! stated_departure`) or the ACN-Data export (`sessionID, connectionTime,
//! disconnectTime, kWhDelivered`, with `userInputs` in JSON).

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime};
use evcharge_core::economic::PricingSchedule;
use evcharge_core::sessions::{ChargingSession, DayIndex, Timestamp};
use serde_json::Value;

use crate::error::{CliError, CliResult};

const ID: &[&str] = &["session_id", "sessionID", "id"];
const ARRIVAL: &[&str] = &["arrival", "connectionTime", "connection_time"];
const DEPARTURE: &[&str] = &["departure", "disconnectTime", "disconnect_time"];
const ENERGY: &[&str] = &[
    "requested_kwh",
    "kWhRequested",
    "energy_kwh",
    "kWhDelivered",
];
const STATED: &[&str] = &[
    "stated_departure",
    "user_stated_departure",
    "requestedDeparture",
];

const NAIVE_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date")
}

pub fn day_of_date(date: NaiveDate) -> DayIndex {
    DayIndex((date - epoch()).num_days())
}

pub fn date_of_day(day: DayIndex) -> NaiveDate {
    epoch() + Duration::days(day.0)
}

/// Parses a wall-clock time. Zoned inputs are shifted to `utc_offset_min`
/// when it is given and keep their own local time otherwise; bare numbers
/// are Unix seconds.
pub fn parse_time(text: &str, utc_offset_min: Option<i32>) -> Result<Timestamp, String> {
    let text = text.trim();
    let shift = |utc: NaiveDateTime, own: NaiveDateTime| match utc_offset_min {
        Some(m) => utc + Duration::minutes(m as i64),
        None => own,
    };
    let local = if let Ok(secs) = text.parse::<i64>() {
        let utc = DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| format!("timestamp {secs} out of range"))?
            .naive_utc();
        shift(utc, utc)
    } else if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        shift(t.naive_utc(), t.naive_local())
    } else if let Ok(t) = DateTime::parse_from_rfc2822(text) {
        shift(t.naive_utc(), t.naive_local())
    } else {
        NAIVE_FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(text, f).ok())
            .ok_or_else(|| format!("unrecognised time {text:?}"))?
    };
    Ok(Timestamp::from_seconds(local.and_utc().timestamp()))
}

pub fn format_time(t: Timestamp) -> String {
    DateTime::from_timestamp(t.seconds(), 0)
        .map(|d| d.naive_utc().format("%Y-%m-%d %H:%M:%S").to_string())
        .unwrap_or_else(|| t.seconds().to_string())
}

/// Sessions read from a file plus the rows that were dropped and why.
#[derive(Debug, Default)]
pub struct SessionFile {
    pub sessions: Vec<ChargingSession>,
    pub skipped: Vec<String>,
}

pub fn read_sessions(path: &Path, utc_offset_min: Option<i32>) -> CliResult<SessionFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let rows = if is_json {
        json_rows(&text).map_err(|m| CliError::input(path, m))?
    } else {
        csv_rows(&text).map_err(|m| CliError::input(path, m))?
    };
    let mut out = SessionFile::default();
    for (line, row) in rows.into_iter().enumerate() {
        let session = build_session(row, utc_offset_min)
            .map_err(|m| CliError::input(path, format!("record {}: {m}", line + 1)))?;
        match session.validate() {
            Ok(()) => out.sessions.push(session),
            Err(e) => out.skipped.push(e.to_string()),
        }
    }
    out.sessions.sort_by(|a, b| {
        a.arrival
            .cmp(&b.arrival)
            .then_with(|| a.session_id.cmp(&b.session_id))
    });
    Ok(out)
}

#[derive(Debug, Default)]
struct RawSession {
    id: String,
    arrival: String,
    departure: String,
    energy: String,
    stated: Option<String>,
}

fn build_session(row: RawSession, offset: Option<i32>) -> Result<ChargingSession, String> {
    let energy = row
        .energy
        .trim()
        .parse::<f64>()
        .map_err(|_| format!("energy {:?} is not a number", row.energy))?;
    let stated = match row.stated.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(t) => Some(parse_time(t, offset)?),
    };
    Ok(ChargingSession {
        session_id: row.id,
        arrival: parse_time(&row.arrival, offset)?,
        departure: parse_time(&row.departure, offset)?,
        requested_kwh: energy,
        user_stated_departure: stated,
    })
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    names.iter().find_map(|n| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(n))
    })
}

fn csv_rows(text: &str) -> Result<Vec<RawSession>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let need = |names: &[&str]| {
        column(&headers, names).ok_or_else(|| format!("no column named any of {names:?}"))
    };
    let (id, arr, dep, kwh) = (need(ID)?, need(ARRIVAL)?, need(DEPARTURE)?, need(ENERGY)?);
    let stated = column(&headers, STATED);
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| e.to_string())?;
        let get = |i: usize| r.get(i).unwrap_or_default().to_string();
        rows.push(RawSession {
            id: get(id),
            arrival: get(arr),
            departure: get(dep),
            energy: get(kwh),
            stated: stated.map(get),
        });
    }
    Ok(rows)
}

fn json_rows(text: &str) -> Result<Vec<RawSession>, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let items = match &doc {
        Value::Array(v) => v,
        Value::Object(m) => match m.get("_items") {
            Some(Value::Array(v)) => v,
            _ => return Err("expected an array or an object with `_items`".into()),
        },
        _ => return Err("expected an array of sessions".into()),
    };
    items.iter().map(json_row).collect()
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn lookup(item: &Value, names: &[&str]) -> Option<String> {
    names.iter().find_map(|n| item.get(*n).and_then(scalar))
}

fn json_row(item: &Value) -> Result<RawSession, String> {
    let need = |names: &[&str]| {
        lookup(item, names).ok_or_else(|| format!("missing field, expected one of {names:?}"))
    };
    // the last user input is the one in force when the EV leaves
    let input = item
        .get("userInputs")
        .and_then(Value::as_array)
        .and_then(|v| v.last());
    let from_input = |names: &[&str]| input.and_then(|i| lookup(i, names));
    Ok(RawSession {
        id: need(ID)?,
        arrival: need(ARRIVAL)?,
        departure: need(DEPARTURE)?,
        energy: from_input(ENERGY).map_or_else(|| need(ENERGY), Ok)?,
        stated: from_input(STATED).or_else(|| lookup(item, STATED)),
    })
}

/// 24 hourly prices: a JSON array, or CSV with the price in the last
/// column (an optional header row is skipped).
pub fn read_prices(path: &Path) -> CliResult<PricingSchedule> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let values: Vec<f64> = if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::input(path, e))?
    } else {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let r = record.map_err(|e| CliError::input(path, e))?;
            let last = r.iter().next_back().unwrap_or_default();
            match last.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => {}
                Err(_) => {
                    return Err(CliError::input(
                        path,
                        format!("row {}: {last:?} is not a price", i + 1),
                    ))
                }
            }
        }
        values
    };
    PricingSchedule::new(&values).map_err(|e| CliError::input(path, e))
}

/// Sessions grouped by arrival day, every calendar day from the first to
/// the last included even when nobody came.
pub fn group_by_day(sessions: &[ChargingSession]) -> Vec<(DayIndex, Vec<ChargingSession>)> {
    let (Some(first), Some(last)) = (sessions.first(), sessions.last()) else {
        return Vec::new();
    };
    let (start, end) = (first.day(), last.day());
    let mut days: Vec<(DayIndex, Vec<ChargingSession>)> = (start.0..=end.0)
        .map(|d| (DayIndex(d), Vec::new()))
        .collect();
    for s in sessions {
        days[(s.day().0 - start.0) as usize].1.push(s.clone());
    }
    days
}
