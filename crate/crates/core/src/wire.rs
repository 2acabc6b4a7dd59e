//! Line protocol between collectors and the detection server.
//!
//! Every message is one newline-terminated line of space-separated fields:
//!
//! ```text
//! HELLO v1
//! A <tick> <antigen_type>
//! S <tick> <pamp> <danger> <safe> <inflammation>
//! BYE
//! ```
//!
//! The server answers `HELLO v1` with `OK v1`, `BYE` with `BYE`, and any
//! malformed line with `ERR <reason>`. Data messages get no reply.

use std::fmt;

use thiserror::Error;

use crate::tissue::{AntigenEvent, SignalSample};
use crate::trace::TraceRecord;

pub const PROTOCOL_VERSION: &str = "v1";

/// Longest accepted line, excluding the newline.
pub const MAX_LINE_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Hello(String),
    Bye,
    Antigen(AntigenEvent),
    Signal(SignalSample),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("empty line")]
    Empty,
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("{tag} expects {expected} fields, got {got}")]
    FieldCount {
        tag: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("field {field} is not a valid number")]
    BadNumber { field: usize },
    #[error("unsupported protocol version '{0}'")]
    UnsupportedVersion(String),
    #[error("line is not valid UTF-8")]
    Encoding,
    #[error("line longer than {MAX_LINE_LEN} bytes")]
    LineTooLong,
}

impl ProtocolError {
    /// Short token sent back to the client after `ERR `.
    pub fn reason(&self) -> &'static str {
        match self {
            ProtocolError::Empty => "empty",
            ProtocolError::UnknownTag(_) => "unknown-tag",
            ProtocolError::FieldCount { .. } => "field-count",
            ProtocolError::BadNumber { .. } => "bad-number",
            ProtocolError::UnsupportedVersion(_) => "unsupported-version",
            ProtocolError::Encoding => "encoding",
            ProtocolError::LineTooLong => "line-too-long",
        }
    }
}

fn expect_fields(tag: &'static str, fields: &[&str], expected: usize) -> Result<(), ProtocolError> {
    if fields.len() != expected {
        return Err(ProtocolError::FieldCount {
            tag,
            expected,
            got: fields.len(),
        });
    }
    Ok(())
}

fn parse_u<T: std::str::FromStr>(s: &str, field: usize) -> Result<T, ProtocolError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ProtocolError::BadNumber { field });
    }
    s.parse().map_err(|_| ProtocolError::BadNumber { field })
}

fn parse_f(s: &str, field: usize) -> Result<f64, ProtocolError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(ProtocolError::BadNumber { field }),
    }
}

/// Parses the fields of an `A` record (tag already removed).
pub(crate) fn parse_antigen_fields(fields: &[&str]) -> Result<AntigenEvent, ProtocolError> {
    expect_fields("A", fields, 2)?;
    Ok(AntigenEvent {
        tick: parse_u(fields[0], 1)?,
        antigen_type: parse_u(fields[1], 2)?,
    })
}

/// Parses the fields of an `S` record (tag already removed).
pub(crate) fn parse_signal_fields(fields: &[&str]) -> Result<SignalSample, ProtocolError> {
    expect_fields("S", fields, 5)?;
    Ok(SignalSample {
        tick: parse_u(fields[0], 1)?,
        pamp: parse_f(fields[1], 2)?,
        danger: parse_f(fields[2], 3)?,
        safe: parse_f(fields[3], 4)?,
        inflammation: parse_f(fields[4], 5)?,
    })
}

pub(crate) fn render_antigen_fields(e: &AntigenEvent) -> String {
    format!("{} {}", e.tick, e.antigen_type)
}

pub(crate) fn render_signal_fields(s: &SignalSample) -> String {
    format!(
        "{} {} {} {} {}",
        s.tick, s.pamp, s.danger, s.safe, s.inflammation
    )
}

impl WireMessage {
    /// Parses one line without its terminator. A trailing `\r` is ignored.
    pub fn parse(line: &str) -> Result<Self, ProtocolError> {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.len() > MAX_LINE_LEN {
            return Err(ProtocolError::LineTooLong);
        }
        if line.is_empty() {
            return Err(ProtocolError::Empty);
        }
        let mut fields = line.split(' ');
        let tag = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        match tag {
            "HELLO" => {
                expect_fields("HELLO", &rest, 1)?;
                if rest[0] != PROTOCOL_VERSION {
                    return Err(ProtocolError::UnsupportedVersion(rest[0].to_string()));
                }
                Ok(WireMessage::Hello(rest[0].to_string()))
            }
            "BYE" => {
                expect_fields("BYE", &rest, 0)?;
                Ok(WireMessage::Bye)
            }
            "A" => parse_antigen_fields(&rest).map(WireMessage::Antigen),
            "S" => parse_signal_fields(&rest).map(WireMessage::Signal),
            other => Err(ProtocolError::UnknownTag(other.chars().take(32).collect())),
        }
    }

    /// Parses raw bytes, rejecting invalid UTF-8.
    pub fn parse_bytes(line: &[u8]) -> Result<Self, ProtocolError> {
        if line.len() > MAX_LINE_LEN + 1 {
            return Err(ProtocolError::LineTooLong);
        }
        let text = std::str::from_utf8(line).map_err(|_| ProtocolError::Encoding)?;
        Self::parse(text)
    }

    /// The data record carried by an `A` or `S` message.
    pub fn record(&self) -> Option<TraceRecord> {
        match self {
            WireMessage::Antigen(e) => Some(TraceRecord::Antigen(*e)),
            WireMessage::Signal(s) => Some(TraceRecord::Signal(*s)),
            _ => None,
        }
    }
}

impl From<TraceRecord> for WireMessage {
    fn from(r: TraceRecord) -> Self {
        match r {
            TraceRecord::Antigen(e) => WireMessage::Antigen(e),
            TraceRecord::Signal(s) => WireMessage::Signal(s),
        }
    }
}

impl fmt::Display for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WireMessage::Hello(v) => write!(f, "HELLO {v}"),
            WireMessage::Bye => f.write_str("BYE"),
            WireMessage::Antigen(e) => write!(f, "A {}", render_antigen_fields(e)),
            WireMessage::Signal(s) => write!(f, "S {}", render_signal_fields(s)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_examples() {
        assert_eq!(WireMessage::parse("HELLO v1").unwrap(), WireMessage::Hello("v1".into()));
        assert_eq!(
            WireMessage::parse("S 5 10 2 0 0").unwrap(),
            WireMessage::Signal(SignalSample::new(10.0, 2.0, 0.0, 0.0, 5))
        );
        assert_eq!(
            WireMessage::parse("A 3 17").unwrap(),
            WireMessage::Antigen(AntigenEvent::new(17, 3))
        );
        assert_eq!(WireMessage::parse("BYE\r").unwrap(), WireMessage::Bye);
    }

    #[test]
    fn rejects_bad_lines() {
        let cases = [
            ("X 1 2", "unknown-tag"),
            ("", "empty"),
            ("A 1", "field-count"),
            ("A 1 2 3", "field-count"),
            ("A  1 2", "field-count"),
            ("S 1 2 3 4", "field-count"),
            ("A -1 2", "bad-number"),
            ("A +1 2", "bad-number"),
            ("S 1 NaN 0 0 0", "bad-number"),
            ("S 1 inf 0 0 0", "bad-number"),
            ("A 1 99999999999", "bad-number"),
            ("HELLO v2", "unsupported-version"),
            ("BYE now", "field-count"),
            ("a 1 2", "unknown-tag"),
        ];
        for (line, reason) in cases {
            let err = WireMessage::parse(line).unwrap_err();
            assert_eq!(err.reason(), reason, "{line:?}");
        }
        assert_eq!(WireMessage::parse_bytes(&[0xff, 0xfe]).unwrap_err().reason(), "encoding");
        let long = "A ".to_string() + &"1".repeat(MAX_LINE_LEN);
        assert_eq!(WireMessage::parse(&long).unwrap_err().reason(), "line-too-long");
    }

    #[test]
    fn canonical_lines_render_back() {
        for line in ["HELLO v1", "BYE", "A 3 17", "S 5 10 2 0 0", "S 0 0.5 99.25 1e-7 100"] {
            let m = WireMessage::parse(line).unwrap();
            let again = WireMessage::parse(&m.to_string()).unwrap();
            assert_eq!(m, again);
        }
        assert_eq!(WireMessage::parse("S 5 10 2 0 0").unwrap().to_string(), "S 5 10 2 0 0");
    }

    fn message() -> impl Strategy<Value = WireMessage> {
        let finite = prop::num::f64::POSITIVE | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL;
        prop_oneof![
            Just(WireMessage::Hello(PROTOCOL_VERSION.into())),
            Just(WireMessage::Bye),
            (any::<u64>(), any::<u32>())
                .prop_map(|(t, a)| WireMessage::Antigen(AntigenEvent::new(a, t))),
            (any::<u64>(), finite, finite, finite, finite)
                .prop_map(|(t, p, d, s, i)| WireMessage::Signal(SignalSample::new(p, d, s, i, t))),
        ]
    }

    proptest! {
        #[test]
        fn parse_inverts_render(m in message()) {
            let line = m.to_string();
            prop_assert_eq!(WireMessage::parse(&line).unwrap(), m);
            // canonical output renders identically
            prop_assert_eq!(WireMessage::parse(&line).unwrap().to_string(), line);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..80)) {
            let _ = WireMessage::parse_bytes(&bytes);
        }
    }
}
