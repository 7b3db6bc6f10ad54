//! Interaction units: one user–assistant exchange plus its timestamp.

use std::fmt;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A UTC instant with a canonical RFC 3339 rendering.
///
/// Rendering is stable across parse/format round trips (subseconds are
/// printed only when nonzero), which keeps snapshots byte-identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn from_datetime(dt: DateTime<Utc>) -> Self {
        Timestamp(dt)
    }

    /// Parse an ISO-8601/RFC 3339 instant, with fallbacks for the date
    /// styles used by the supported benchmark dumps.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp(dt.with_timezone(&Utc)));
        }
        // "2023-05-01 10:00:00" (naive, treated as UTC)
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S") {
            return Ok(Timestamp(Utc.from_utc_datetime(&naive)));
        }
        // "2023/05/20 (Sat) 02:21"
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%Y/%m/%d (%a) %H:%M") {
            return Ok(Timestamp(Utc.from_utc_datetime(&naive)));
        }
        // "1:56 pm on 8 May, 2023"
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, "%I:%M %p on %d %B, %Y") {
            return Ok(Timestamp(Utc.from_utc_datetime(&naive)));
        }
        Err(Error::parse(
            "timestamp",
            format!("unrecognized timestamp: {s:?}"),
        ))
    }

    pub fn datetime(&self) -> DateTime<Utc> {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::AutoSi, true))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// One user–assistant turn, the atomic ingestion unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionUnit {
    /// Unique per conversation.
    pub turn_id: String,
    #[serde(rename = "user")]
    pub user_message: String,
    #[serde(rename = "assistant")]
    pub assistant_message: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

impl InteractionUnit {
    pub fn new(
        turn_id: impl Into<String>,
        user_message: impl Into<String>,
        assistant_message: impl Into<String>,
        timestamp: Timestamp,
    ) -> Self {
        InteractionUnit {
            turn_id: turn_id.into(),
            user_message: user_message.into(),
            assistant_message: assistant_message.into(),
            timestamp,
            session_id: None,
        }
    }

    pub fn with_session(mut self, session_id: impl Into<String>) -> Self {
        self.session_id = Some(session_id.into());
        self
    }

    /// True when both messages are empty or whitespace-only.
    pub fn is_blank(&self) -> bool {
        self.user_message.trim().is_empty() && self.assistant_message.trim().is_empty()
    }

    /// Canonical text fed to the encoder. Excludes the timestamp so that
    /// identical exchanges embed identically regardless of when they happen.
    pub fn canonical_text(&self) -> String {
        format!(
            "USER: {}\nASSISTANT: {}",
            self.user_message, self.assistant_message
        )
    }
}
