use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, NaiveTime};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Trading sessions as `[open, close]` intervals in epoch seconds.
///
/// All instants share one clock: calendar entries and naive timestamps are
/// both read as UTC.
#[derive(Debug, Clone, PartialEq)]
pub struct TradingCalendar {
    sessions: Vec<(f64, f64)>,
    /// Trading seconds elapsed before each session opens.
    before: Vec<f64>,
    continuous: bool,
}

/// Trading time between two instants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Elapsed {
    pub seconds: f64,
    /// An endpoint fell outside every session and was moved to the nearest
    /// session boundary.
    pub clamped: bool,
}

#[derive(Deserialize)]
struct SessionEntry {
    date: String,
    open: String,
    close: String,
}

fn parse_clock(s: &str) -> Result<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M:%S%.f")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|e| Error::Parse(format!("bad time of day `{s}`: {e}")))
}

/// Seconds since the epoch for a date and a time of day.
pub(crate) fn epoch_seconds(dt: NaiveDateTime) -> f64 {
    let utc = dt.and_utc();
    utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
}

/// Parse an ISO-8601 timestamp, with or without fractional seconds and
/// offset.
pub(crate) fn parse_timestamp(s: &str) -> Result<f64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(epoch_seconds(dt.naive_utc()));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(epoch_seconds(dt));
        }
    }
    Err(Error::Parse(format!("unparseable timestamp `{s}`")))
}

/// UTC calendar date of an epoch-seconds instant.
pub fn date_of(t: f64) -> NaiveDate {
    let secs = t.floor() as i64;
    DateTime::from_timestamp(secs, 0)
        .map(|d| d.date_naive())
        .unwrap_or(NaiveDate::MIN)
}

/// Calendar year of an epoch-seconds instant.
pub fn year_of(t: f64) -> i32 {
    date_of(t).year()
}

impl TradingCalendar {
    pub fn new(mut sessions: Vec<(f64, f64)>) -> Result<Self> {
        sessions.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(open, close)) in sessions.iter().enumerate() {
            if !(open < close) {
                return Err(Error::InvalidArgument(format!("session {i} has open >= close")));
            }
            if i > 0 && sessions[i - 1].1 > open {
                return Err(Error::InvalidArgument(format!("sessions {} and {i} overlap", i - 1)));
            }
        }
        let mut before = Vec::with_capacity(sessions.len());
        let mut acc = 0.0;
        for &(open, close) in &sessions {
            before.push(acc);
            acc += close - open;
        }
        Ok(Self {
            sessions,
            before,
            continuous: false,
        })
    }

    /// A market that never closes: trading time equals wall time.
    pub fn continuous() -> Self {
        Self {
            sessions: Vec::new(),
            before: Vec::new(),
            continuous: true,
        }
    }

    /// Parse the JSON list of `{"date", "open", "close"}` entries.
    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<SessionEntry> = serde_json::from_str(text)?;
        let sessions = entries
            .iter()
            .map(|e| {
                let date = NaiveDate::parse_from_str(&e.date, "%Y-%m-%d")
                    .map_err(|err| Error::Parse(format!("bad date `{}`: {err}", e.date)))?;
                let open = epoch_seconds(date.and_time(parse_clock(&e.open)?));
                let close = epoch_seconds(date.and_time(parse_clock(&e.close)?));
                Ok((open, close))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(sessions)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn sessions(&self) -> &[(f64, f64)] {
        &self.sessions
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    /// Whether `t` lies in a session. A trade stamped exactly at the close
    /// still belongs to that session.
    pub fn contains(&self, t: f64) -> bool {
        if self.continuous {
            return true;
        }
        let idx = self.sessions.partition_point(|s| s.0 <= t);
        idx > 0 && t <= self.sessions[idx - 1].1
    }

    /// Trading seconds before `t`, and whether `t` had to be clamped.
    fn position(&self, t: f64) -> (f64, bool) {
        let idx = self.sessions.partition_point(|s| s.0 <= t);
        if idx == 0 {
            return (0.0, true);
        }
        let (open, close) = self.sessions[idx - 1];
        if t <= close {
            (self.before[idx - 1] + (t - open), false)
        } else {
            (self.before[idx - 1] + (close - open), true)
        }
    }

    /// Within-session seconds between `start` and `end`.
    pub fn trading_time_elapsed(&self, start: f64, end: f64) -> Result<Elapsed> {
        if start > end {
            return Err(Error::InvalidArgument(format!("start {start} is after end {end}")));
        }
        if self.continuous {
            return Ok(Elapsed {
                seconds: end - start,
                clamped: false,
            });
        }
        let (a, ca) = self.position(start);
        let (b, cb) = self.position(end);
        Ok(Elapsed {
            seconds: b - a,
            clamped: ca || cb,
        })
    }
}
