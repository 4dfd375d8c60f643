//! UTC timestamps at millisecond precision, serialized as RFC 3339.

use chrono::{DateTime, SecondsFormat, SubsecRound, Utc};
use serde::{Deserialize, Deserializer, Serializer};

pub type Timestamp = DateTime<Utc>;

pub fn now() -> Timestamp {
    Utc::now().trunc_subsecs(3)
}

pub fn format(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(ts))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
    let raw = String::deserialize(d)?;
    DateTime::parse_from_rfc3339(&raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(serde::de::Error::custom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn millisecond_rfc3339() {
        let t = DateTime::parse_from_rfc3339("2026-10-15T08:30:00.123456Z")
            .unwrap()
            .with_timezone(&Utc)
            .trunc_subsecs(3);
        assert_eq!(format(&t), "2026-10-15T08:30:00.123Z");
        assert_eq!(now().timestamp_subsec_nanos() % 1_000_000, 0);
    }
}
