//! Detection runs and their CSV reports.
//!
//! Reports start with `#` metadata lines followed by a CSV table:
//!
//! ```text
//! # engine: dca
//! # seed: 7
//! # config-hash: 3f0c9a1d2b4e5f60
//! # ticks: 1000
//! # unsampled-antigen: 2
//! antigen_type,total_count,mature_count,mcav,label
//! 0,611,574,0.939444,anomalous
//! ```
//!
//! Nothing time- or host-dependent goes into a report, so identical runs
//! produce identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use immunet::dca::{compute_mcav_over, DcaPopulation, DcaStats, McavReport};
use immunet::scenario::{read_session_dir, Session};
use immunet::tissue::{run_ticks_observed, AntigenEvent, SignalSample, Tick, TissueCompartment};
use immunet::tlr::{session_length, SessionVerdict, TlrDetector, TlrModel};
use immunet::trace::{read_trace, TraceFile, TraceKind};
use rayon::prelude::*;

use crate::config::{Engine, RunConfig};
use crate::CliError;

pub const MCAV_FILE: &str = "mcav.csv";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const VERDICTS_HEADER: &str = "session,label,activated_count,mature_dcs,triggering_antigen";

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn read_kind(path: &Path, want: TraceKind) -> Result<TraceFile, CliError> {
    let trace = read_trace(path).map_err(usage)?;
    if trace.kind != want {
        return Err(CliError::Usage(format!(
            "{} is a {:?} trace, expected {:?}",
            path.display(),
            trace.kind,
            want
        )));
    }
    Ok(trace)
}

/// Reads and domain-checks the antigen and signal traces of a DCA run.
pub fn load_traces(
    config: &RunConfig,
    antigen: &Path,
    signals: &Path,
) -> Result<(Vec<AntigenEvent>, Vec<SignalSample>), CliError> {
    let a = read_kind(antigen, TraceKind::Antigen)?;
    let s = read_kind(signals, TraceKind::Signal)?;
    a.validate(config.antigen_domain, config.signal_max)
        .map_err(|e| usage(format!("{}: {e}", antigen.display())))?;
    s.validate(config.antigen_domain, config.signal_max)
        .map_err(|e| usage(format!("{}: {e}", signals.display())))?;
    Ok((a.antigen_events(), s.signal_samples()))
}

/// Reads TLR training traces, checked against the model domains.
pub fn load_training(
    config: &RunConfig,
    antigen: &Path,
    signals: &Path,
) -> Result<(Vec<AntigenEvent>, Vec<SignalSample>), CliError> {
    let domains = config.tlr_domains()?;
    let bounds = RunConfig {
        antigen_domain: domains.antigen,
        signal_max: domains.signal_max(),
        ..config.clone()
    };
    load_traces(&bounds, antigen, signals)
}

#[derive(Debug, Clone)]
pub struct DcaRun {
    pub report: McavReport,
    pub ticks: Tick,
    /// Antigen left in the store at the end of the run.
    pub unsampled: usize,
    /// Antigen held by cells that had not migrated when the run ended.
    pub held: u64,
    pub stats: DcaStats,
}

/// Runs the DCA for `last tick + 1` ticks. Every antigen type in the trace
/// gets a report row, scored or not.
pub fn run_dca(
    config: &RunConfig,
    antigen: &[AntigenEvent],
    signals: &[SignalSample],
) -> Result<DcaRun, CliError> {
    let dca = config.dca()?;
    let population = config.population();
    let mut tissue = TissueCompartment::new(config.tissue()).map_err(usage)?;
    let mut cells = DcaPopulation::new(dca, &population).map_err(usage)?;
    let ticks = session_length(antigen, signals);
    let log = run_ticks_observed(
        &mut tissue,
        &mut cells,
        &population,
        antigen,
        signals,
        ticks,
        |_, _, _| {},
    )
    .map_err(runtime)?;
    let known: BTreeSet<_> = antigen.iter().map(|e| e.antigen_type).collect();
    Ok(DcaRun {
        report: compute_mcav_over(&log, known, config.mcav_threshold),
        ticks,
        unsampled: tissue.unsampled_count(),
        held: cells.held_antigen(),
        stats: cells.stats(),
    })
}

fn meta_header(config: &RunConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: &str| {
        writeln!(out, "# {k}: {v}").expect("writing to a String cannot fail");
    };
    line("engine", config.engine.as_str());
    line("seed", &config.seed.to_string());
    line("config-hash", &config.hash());
    for (k, v) in extra {
        line(k, v);
    }
    out
}

pub fn dca_report(config: &RunConfig, run: &DcaRun) -> String {
    dca_report_with(config, run, &[])
}

pub(crate) fn dca_report_with(config: &RunConfig, run: &DcaRun, extra: &[(&str, String)]) -> String {
    let mut meta = vec![
        ("ticks", run.ticks.to_string()),
        ("unsampled-antigen", run.unsampled.to_string()),
    ];
    meta.extend(extra.iter().cloned());
    meta_header(config, &meta) + &run.report.to_csv()
}

pub fn load_model(config: &RunConfig, path: &Path) -> Result<TlrModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read model {}: {e}", path.display())))?;
    TlrModel::from_text(&text, config.tlr_domains()?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Reads a session directory and checks every trace against the model
/// domains.
pub fn load_sessions(config: &RunConfig, dir: &Path) -> Result<Vec<(String, Session)>, CliError> {
    let sessions = read_session_dir(dir).map_err(usage)?;
    if sessions.is_empty() {
        return Err(CliError::Usage(format!("no sessions found in {}", dir.display())));
    }
    let domains = config.tlr_domains()?;
    for (name, s) in &sessions {
        TraceFile::antigen(s.antigen.iter().copied())
            .validate(domains.antigen, domains.signal_max())
            .and_then(|_| {
                TraceFile::signal(s.signals.iter().copied()).validate(domains.antigen, domains.signal_max())
            })
            .map_err(|e| usage(format!("session {name}: {e}")))?;
        for x in &s.signals {
            domains.discretize(x).map_err(|e| usage(format!("session {name}: {e}")))?;
        }
    }
    Ok(sessions)
}

/// Classifies each session independently with the configured seed.
pub fn run_tlr(
    config: &RunConfig,
    model: &TlrModel,
    sessions: &[(String, Session)],
) -> Result<Vec<(String, SessionVerdict)>, CliError> {
    let detector = TlrDetector::with_model(config.tlr()?, model.clone()).map_err(usage)?;
    sessions
        .par_iter()
        .map(|(name, s)| {
            detector
                .classify_session(&s.antigen, &s.signals)
                .map(|v| (name.clone(), v))
                .map_err(runtime)
        })
        .collect()
}

pub fn verdict_row(name: &str, v: &SessionVerdict) -> String {
    let label = if v.anomalous { "anomalous" } else { "normal" };
    let triggering: Vec<String> = v.triggering_antigen.iter().map(u32::to_string).collect();
    format!(
        "{name},{label},{},{},{}",
        v.activated_count,
        v.stats.mature_dcs,
        triggering.join(";")
    )
}

pub fn tlr_report(config: &RunConfig, ticks: Tick, verdicts: &[(String, SessionVerdict)]) -> String {
    tlr_report_with(config, ticks, verdicts, &[])
}

pub(crate) fn tlr_report_with(
    config: &RunConfig,
    ticks: Tick,
    verdicts: &[(String, SessionVerdict)],
    extra: &[(&str, String)],
) -> String {
    let mut meta = vec![
        ("ticks", ticks.to_string()),
        ("sessions", verdicts.len().to_string()),
    ];
    meta.extend(extra.iter().cloned());
    let mut out = meta_header(config, &meta);
    out.push_str(VERDICTS_HEADER);
    out.push('\n');
    for (name, v) in verdicts {
        out.push_str(&verdict_row(name, v));
        out.push('\n');
    }
    out
}

/// Total ticks over a set of sessions.
pub fn total_ticks(sessions: &[(String, Session)]) -> Tick {
    sessions
        .iter()
        .map(|(_, s)| session_length(&s.antigen, &s.signals))
        .sum()
}

/// Report file name for an engine.
pub fn report_file(engine: Engine) -> &'static str {
    match engine {
        Engine::Dca => MCAV_FILE,
        Engine::Tlr => VERDICTS_FILE,
    }
}
