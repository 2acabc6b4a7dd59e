//! Trace files for antigen and signal streams.
//!
//! A trace file starts with a header naming its kind and version:
//!
//! ```text
//! immunet-trace antigen v1
//! 3 17
//! 4 2
//! ```
//!
//! Antigen files hold `<tick> <type>` lines and signal files hold
//! `<tick> <pamp> <danger> <safe> <inflammation>` lines. Single-kind files
//! also accept the line with its wire tag (`A 3 17`). Mixed replay files
//! (`immunet-trace mixed v1`) require the tag on every line and preserve the
//! interleaving of both streams.
//!
//! Ticks must be non-decreasing within each stream. Blank lines are ignored.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::tissue::{AntigenEvent, SignalSample, Tick};
use crate::wire::{
    parse_antigen_fields, parse_signal_fields, render_antigen_fields, render_signal_fields,
};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("bad trace header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: tick {tick} goes back from {previous}")]
    Order { line: usize, tick: Tick, previous: Tick },
    #[error("line {line}: {msg}")]
    Domain { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Antigen,
    Signal,
    Mixed,
}

impl TraceKind {
    pub fn header(self) -> &'static str {
        match self {
            TraceKind::Antigen => "immunet-trace antigen v1",
            TraceKind::Signal => "immunet-trace signal v1",
            TraceKind::Mixed => "immunet-trace mixed v1",
        }
    }

    fn from_header(line: &str) -> Option<Self> {
        [TraceKind::Antigen, TraceKind::Signal, TraceKind::Mixed]
            .into_iter()
            .find(|k| k.header() == line)
    }
}

/// One data record, as stored in a file or carried by a wire message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceRecord {
    Antigen(AntigenEvent),
    Signal(SignalSample),
}

impl TraceRecord {
    pub fn tick(&self) -> Tick {
        match self {
            TraceRecord::Antigen(e) => e.tick,
            TraceRecord::Signal(s) => s.tick,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub kind: TraceKind,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn antigen(events: impl IntoIterator<Item = AntigenEvent>) -> Self {
        Self {
            kind: TraceKind::Antigen,
            records: events.into_iter().map(TraceRecord::Antigen).collect(),
        }
    }

    pub fn signal(samples: impl IntoIterator<Item = SignalSample>) -> Self {
        Self {
            kind: TraceKind::Signal,
            records: samples.into_iter().map(TraceRecord::Signal).collect(),
        }
    }

    pub fn mixed(records: Vec<TraceRecord>) -> Self {
        Self {
            kind: TraceKind::Mixed,
            records,
        }
    }

    pub fn antigen_events(&self) -> Vec<AntigenEvent> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Antigen(e) => Some(*e),
                _ => None,
            })
            .collect()
    }

    pub fn signal_samples(&self) -> Vec<SignalSample> {
        self.records
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Signal(s) => Some(*s),
                _ => None,
            })
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(self.kind.header());
        out.push('\n');
        for r in &self.records {
            let line = match (self.kind, r) {
                (TraceKind::Mixed, TraceRecord::Antigen(e)) => format!("A {}", render_antigen_fields(e)),
                (TraceKind::Mixed, TraceRecord::Signal(s)) => format!("S {}", render_signal_fields(s)),
                (_, TraceRecord::Antigen(e)) => render_antigen_fields(e),
                (_, TraceRecord::Signal(s)) => render_signal_fields(s),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parses file contents, checking per-stream tick order.
    pub fn parse(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l.strip_suffix('\r').unwrap_or(l))
            .ok_or_else(|| TraceError::Header("empty file".into()))?;
        let kind = TraceKind::from_header(header)
            .ok_or_else(|| TraceError::Header(format!("unrecognised header '{header}'")))?;

        let mut records = Vec::new();
        let mut last_antigen: Option<Tick> = None;
        let mut last_signal: Option<Tick> = None;
        for (i, raw) in lines {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let (tag, rest) = match fields[0] {
                "A" | "S" => (Some(fields[0]), &fields[1..]),
                _ => (None, &fields[..]),
            };
            let is_antigen = match (kind, tag) {
                (TraceKind::Mixed, None) => {
                    return Err(TraceError::Parse {
                        line: line_no,
                        msg: "mixed trace lines need an A or S tag".into(),
                    })
                }
                (TraceKind::Mixed, Some(t)) => t == "A",
                (TraceKind::Antigen, None | Some("A")) => true,
                (TraceKind::Signal, None | Some("S")) => false,
                (_, Some(t)) => {
                    return Err(TraceError::Parse {
                        line: line_no,
                        msg: format!("tag {t} does not match a {kind:?} trace"),
                    })
                }
            };
            let perr = |e: crate::wire::ProtocolError| TraceError::Parse {
                line: line_no,
                msg: e.to_string(),
            };
            let (record, last) = if is_antigen {
                (TraceRecord::Antigen(parse_antigen_fields(rest).map_err(perr)?), &mut last_antigen)
            } else {
                (TraceRecord::Signal(parse_signal_fields(rest).map_err(perr)?), &mut last_signal)
            };
            let tick = record.tick();
            if let Some(previous) = *last {
                if tick < previous {
                    return Err(TraceError::Order {
                        line: line_no,
                        tick,
                        previous,
                    });
                }
            }
            *last = Some(tick);
            records.push(record);
        }
        Ok(Self { kind, records })
    }

    /// Checks antigen types against `antigen_domain` and signal values
    /// against `[0, signal_max]`. Reported line numbers assume the file had
    /// no blank lines.
    pub fn validate(&self, antigen_domain: u32, signal_max: f64) -> Result<(), TraceError> {
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 2;
            match r {
                TraceRecord::Antigen(e) if e.antigen_type >= antigen_domain => {
                    return Err(TraceError::Domain {
                        line,
                        msg: format!(
                            "antigen type {} outside [0, {antigen_domain})",
                            e.antigen_type
                        ),
                    })
                }
                TraceRecord::Signal(s) => s.validate(signal_max).map_err(|e| TraceError::Domain {
                    line,
                    msg: e.to_string(),
                })?,
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceFile, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    TraceFile::parse(&text)
}

pub fn write_trace(path: impl AsRef<Path>, trace: &TraceFile) -> Result<(), TraceError> {
    let path = path.as_ref();
    fs::write(path, trace.render()).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}
