use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodKind {
    Day,
    Decade,
    Month,
}

impl fmt::Display for PeriodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeriodKind::Day => "day",
            PeriodKind::Decade => "decade",
            PeriodKind::Month => "month",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid period '{0}' (expected YYYY-MM-DD, YYYY-MM-D1|D2|D3 or YYYY-MM)")]
pub struct PeriodError(pub String);

/// A day (`2024-03-15`), a ten-day decade (`2024-03-D2`) or a month (`2024-03`).
///
/// Keys of the same kind order chronologically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeriodKey {
    kind: PeriodKind,
    label: String,
}

impl PeriodKey {
    pub fn kind(&self) -> PeriodKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// True when `self` has the same kind as the bounds and lies within them (inclusive).
    pub fn within(&self, from: &PeriodKey, to: &PeriodKey) -> bool {
        self.kind == from.kind && self.kind == to.kind && *from <= *self && *self <= *to
    }
}

fn year_month(s: &str) -> Option<()> {
    let b = s.as_bytes();
    if b.len() != 7 || b[4] != b'-' || !b[..4].iter().chain(&b[5..]).all(u8::is_ascii_digit) {
        return None;
    }
    let month: u32 = s[5..].parse().ok()?;
    (1..=12).contains(&month).then_some(())
}

impl FromStr for PeriodKey {
    type Err = PeriodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PeriodError(s.to_string());
        if !s.is_ascii() {
            return Err(err());
        }
        let kind = match s.len() {
            7 => {
                year_month(s).ok_or_else(err)?;
                PeriodKind::Month
            }
            10 if s.as_bytes()[8] == b'D' => {
                year_month(&s[..7]).ok_or_else(err)?;
                if s.as_bytes()[7] != b'-' || !matches!(&s[9..], "1" | "2" | "3") {
                    return Err(err());
                }
                PeriodKind::Decade
            }
            10 => {
                if !s.bytes().enumerate().all(|(i, c)| match i {
                    4 | 7 => c == b'-',
                    _ => c.is_ascii_digit(),
                }) {
                    return Err(err());
                }
                NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| err())?;
                PeriodKind::Day
            }
            _ => return Err(err()),
        };
        Ok(PeriodKey {
            kind,
            label: s.to_string(),
        })
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl Serialize for PeriodKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label)
    }
}

impl<'de> Deserialize<'de> for PeriodKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
