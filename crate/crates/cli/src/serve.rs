//! Live runs fed by the ingestion server.
//!
//! Items are consumed in queue order. An item for tick `t` first advances the
//! loop through every tick before `t`, then waits for tick `t` to execute.
//! Items for a tick that has already executed are dropped and counted as
//! late, as are items outside the configured domains. After the requested
//! number of clients have disconnected the remaining buffered ticks run and
//! the report is written exactly as `run` would write it.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::sync::mpsc::Receiver;

use immunet::dca::{compute_mcav_over, DcaPopulation};
use immunet::server::{serve, ServerEvent};
use immunet::tissue::{
    AntigenEvent, CellPopulation, PopulationConfig, SignalSample, Tick, TickLoop, TissueCompartment,
};
use immunet::tlr::{TlrModel, TlrPopulation};
use immunet::trace::TraceRecord;

use crate::config::{Engine, RunConfig};
use crate::run::{self, runtime, usage, DcaRun};
use crate::CliError;

/// Counters of one live ingestion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiveStats {
    pub accepted: u64,
    /// Items whose tick had already executed.
    pub late: u64,
    /// Items outside the antigen or signal domain.
    pub rejected: u64,
    pub ticks: Tick,
    pub antigen_types: BTreeSet<u32>,
}

impl LiveStats {
    fn meta(&self) -> Vec<(&'static str, String)> {
        vec![
            ("accepted-items", self.accepted.to_string()),
            ("late-items", self.late.to_string()),
            ("rejected-items", self.rejected.to_string()),
        ]
    }
}

fn in_domain(record: &TraceRecord, tissue: &TissueCompartment) -> bool {
    match record {
        TraceRecord::Antigen(e) => e.antigen_type < tissue.config().antigen_domain,
        TraceRecord::Signal(s) => s.validate(tissue.signal_max()).is_ok(),
    }
}

/// Feeds queue events into a tick loop until `clients` disconnections.
/// Returns the presentation log and ingestion counters.
pub fn drive<P: CellPopulation>(
    tissue: &mut TissueCompartment,
    population: &mut P,
    config: &PopulationConfig,
    events: &Receiver<ServerEvent>,
    clients: usize,
) -> Result<(Vec<immunet::PresentationRecord>, LiveStats), CliError> {
    let mut stats = LiveStats::default();
    let mut tick_loop = TickLoop::new(tissue, population, config).map_err(usage)?;
    let mut antigen: Vec<AntigenEvent> = Vec::new();
    let mut signals: Vec<SignalSample> = Vec::new();
    let mut last: Option<Tick> = None;
    let mut disconnected = 0;
    while disconnected < clients {
        let Ok(event) = events.recv() else { break };
        let item = match event {
            ServerEvent::Disconnected { .. } => {
                disconnected += 1;
                continue;
            }
            ServerEvent::Record(item) => item,
        };
        let t = item.record.tick();
        if t < tick_loop.next_tick() {
            stats.late += 1;
            continue;
        }
        if !in_domain(&item.record, tick_loop.tissue()) {
            stats.rejected += 1;
            continue;
        }
        while tick_loop.next_tick() < t {
            tick_loop.step(&antigen, &signals).map_err(runtime)?;
            antigen.clear();
            signals.clear();
        }
        match item.record {
            TraceRecord::Antigen(e) => {
                stats.antigen_types.insert(e.antigen_type);
                antigen.push(e);
            }
            TraceRecord::Signal(s) => signals.push(s),
        }
        stats.accepted += 1;
        last = Some(last.map_or(t, |m: Tick| m.max(t)));
    }
    if let Some(m) = last {
        while tick_loop.next_tick() <= m {
            tick_loop.step(&antigen, &signals).map_err(runtime)?;
            antigen.clear();
            signals.clear();
        }
    }
    stats.ticks = tick_loop.next_tick();
    Ok((tick_loop.into_log(), stats))
}

/// Runs the configured engine over everything received on `events` and
/// renders the report.
pub fn live_report(
    config: &RunConfig,
    model: Option<&TlrModel>,
    events: &Receiver<ServerEvent>,
    clients: usize,
) -> Result<(String, LiveStats), CliError> {
    match config.engine {
        Engine::Dca => {
            let population = config.population();
            let mut tissue = TissueCompartment::new(config.tissue()).map_err(usage)?;
            let mut cells = DcaPopulation::new(config.dca()?, &population).map_err(usage)?;
            let (log, stats) = drive(&mut tissue, &mut cells, &population, events, clients)?;
            let result = DcaRun {
                report: compute_mcav_over(&log, stats.antigen_types.iter().copied(), config.mcav_threshold),
                ticks: stats.ticks,
                unsampled: tissue.unsampled_count(),
                held: cells.held_antigen(),
                stats: cells.stats(),
            };
            Ok((run::dca_report_with(config, &result, &stats.meta()), stats))
        }
        Engine::Tlr => {
            let model = model.ok_or_else(|| CliError::Usage("the tlr engine needs --model".into()))?;
            let tlr = config.tlr()?;
            let population = tlr.population_config();
            let mut tissue =
                TissueCompartment::new(model.domains().tissue_config(tlr.store_capacity)).map_err(usage)?;
            let mut cells = TlrPopulation::new(model.clone(), tlr).map_err(usage)?;
            let (_, stats) = drive(&mut tissue, &mut cells, &population, events, clients)?;
            let verdicts = [("live".to_string(), cells.verdict())];
            Ok((run::tlr_report_with(config, stats.ticks, &verdicts, &stats.meta()), stats))
        }
    }
}

/// Binds `addr`, reports the bound address through `on_bound`, and serves
/// until `clients` connections have closed.
pub fn serve_live(
    config: &RunConfig,
    model: Option<&TlrModel>,
    addr: &str,
    clients: usize,
    on_bound: impl FnOnce(SocketAddr),
) -> Result<(String, LiveStats), CliError> {
    config.validate()?;
    if config.engine == Engine::Tlr && model.is_none() {
        return Err(CliError::Usage("the tlr engine needs --model".into()));
    }
    if clients == 0 {
        return Err(CliError::Usage("--clients must be >= 1".into()));
    }
    let (handle, events) = serve(addr).map_err(runtime)?;
    on_bound(handle.local_addr());
    let result = live_report(config, model, &events, clients);
    handle.shutdown();
    result
}
