//! UTC datestamps with one-second granularity.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Datestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a datestamp (expected YYYY-MM-DD or YYYY-MM-DDThh:mm:ssZ)")]
pub struct BadDatestamp(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Day,
    Second,
}

impl Datestamp {
    pub const EPOCH: Datestamp = Datestamp(0);

    pub fn from_unix(seconds: i64) -> Self {
        Datestamp(seconds)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Datestamp(Utc::now().timestamp())
    }

    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Datestamp(dt.timestamp())
    }

    pub fn plus_seconds(self, seconds: i64) -> Self {
        Datestamp(self.0 + seconds)
    }

    /// Last second of the day this datestamp falls on.
    pub fn end_of_day(self) -> Self {
        Datestamp(self.0 - self.0.rem_euclid(86_400) + 86_399)
    }

    /// Parses either granularity and reports which one was used. Date-only
    /// values denote midnight.
    pub fn parse_with_granularity(s: &str) -> Result<(Self, Granularity), BadDatestamp> {
        let bad = || BadDatestamp(s.to_string());
        if s.len() == 10 {
            let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| bad())?;
            let dt = date.and_hms_opt(0, 0, 0).ok_or_else(bad)?;
            return Ok((Datestamp(Utc.from_utc_datetime(&dt).timestamp()), Granularity::Day));
        }
        if s.len() != 20 || !s.ends_with('Z') {
            return Err(bad());
        }
        let dt = NaiveDateTime::parse_from_str(&s[..19], "%Y-%m-%dT%H:%M:%S").map_err(|_| bad())?;
        Ok((Datestamp(Utc.from_utc_datetime(&dt).timestamp()), Granularity::Second))
    }
}

impl FromStr for Datestamp {
    type Err = BadDatestamp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Datestamp::parse_with_granularity(s).map(|(d, _)| d)
    }
}

impl fmt::Display for Datestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match Utc.timestamp_opt(self.0, 0).single() {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "@{}", self.0),
        }
    }
}
