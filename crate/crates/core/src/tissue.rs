//! Tissue compartment and tick scheduler shared by both detection engines.
//!
//! The compartment holds two inputs: a bounded FIFO store of antigen (the
//! "suspects") and a signal matrix carrying the most recent reading of the
//! four signal categories. A [`TickLoop`] advances abstract time one tick at a
//! time. Within a tick, antigen stamped at that tick are stored first, then
//! the signal matrix is refreshed (on signal ticks), then every live cell is
//! updated (on cell ticks).
//!
//! Cell populations plug in through [`CellPopulation`]. A population is
//! responsible for replacing migrated cells within the same update so that the
//! live count never changes.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

/// Categorical antigen identifier (a process ID, a syscall number, ...).
pub type AntigenType = u32;

/// Abstract simulation time.
pub type Tick = u64;

pub const DEFAULT_STORE_CAPACITY: usize = 500;
pub const DEFAULT_SIGNAL_MAX: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TissueError {
    #[error("antigen type {antigen_type} outside declared domain [0, {domain_size})")]
    DomainViolation {
        antigen_type: AntigenType,
        domain_size: u32,
    },
    #[error("signal channel {channel} value {value} outside [0, {max}]")]
    SignalOutOfRange {
        channel: SignalChannel,
        value: f64,
        max: f64,
    },
    #[error("{stream} trace out of order at record {index}: tick {tick} after tick {previous}")]
    OutOfOrder {
        stream: &'static str,
        index: usize,
        tick: Tick,
        previous: Tick,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One antigen observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntigenEvent {
    pub antigen_type: AntigenType,
    pub tick: Tick,
}

impl AntigenEvent {
    pub fn new(antigen_type: AntigenType, tick: Tick) -> Self {
        Self { antigen_type, tick }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalChannel {
    Pamp,
    Danger,
    Safe,
    Inflammation,
}

impl SignalChannel {
    pub const ALL: [SignalChannel; 4] = [
        SignalChannel::Pamp,
        SignalChannel::Danger,
        SignalChannel::Safe,
        SignalChannel::Inflammation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SignalChannel::Pamp => "pamp",
            SignalChannel::Danger => "danger",
            SignalChannel::Safe => "safe",
            SignalChannel::Inflammation => "inflammation",
        }
    }
}

impl fmt::Display for SignalChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One tick's reading of the four signal categories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSample {
    pub pamp: f64,
    pub danger: f64,
    pub safe: f64,
    pub inflammation: f64,
    pub tick: Tick,
}

impl SignalSample {
    pub fn new(pamp: f64, danger: f64, safe: f64, inflammation: f64, tick: Tick) -> Self {
        Self {
            pamp,
            danger,
            safe,
            inflammation,
            tick,
        }
    }

    pub fn zero(tick: Tick) -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, tick)
    }

    pub fn get(&self, channel: SignalChannel) -> f64 {
        match channel {
            SignalChannel::Pamp => self.pamp,
            SignalChannel::Danger => self.danger,
            SignalChannel::Safe => self.safe,
            SignalChannel::Inflammation => self.inflammation,
        }
    }

    /// Checks every channel lies in `[0, signal_max]`. NaN is out of range.
    pub fn validate(&self, signal_max: f64) -> Result<(), TissueError> {
        for channel in SignalChannel::ALL {
            let value = self.get(channel);
            if !(0.0..=signal_max).contains(&value) {
                return Err(TissueError::SignalOutOfRange {
                    channel,
                    value,
                    max: signal_max,
                });
            }
        }
        Ok(())
    }
}

/// Static parameters of a compartment.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueConfig {
    /// Antigen types must lie in `[0, antigen_domain)`.
    pub antigen_domain: u32,
    pub store_capacity: usize,
    pub signal_max: f64,
}

impl Default for TissueConfig {
    fn default() -> Self {
        Self {
            antigen_domain: 256,
            store_capacity: DEFAULT_STORE_CAPACITY,
            signal_max: DEFAULT_SIGNAL_MAX,
        }
    }
}

impl TissueConfig {
    pub fn validate(&self) -> Result<(), TissueError> {
        if self.antigen_domain == 0 {
            return Err(TissueError::Config("antigen_domain must be >= 1".into()));
        }
        if self.store_capacity == 0 {
            return Err(TissueError::Config("store_capacity must be >= 1".into()));
        }
        if !(self.signal_max.is_finite() && self.signal_max > 0.0) {
            return Err(TissueError::Config("signal_max must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Antigen store plus signal matrix.
#[derive(Debug, Clone)]
pub struct TissueCompartment {
    config: TissueConfig,
    store: VecDeque<AntigenEvent>,
    signals: SignalSample,
    tick: Tick,
    evicted: u64,
}

impl TissueCompartment {
    pub fn new(config: TissueConfig) -> Result<Self, TissueError> {
        config.validate()?;
        Ok(Self {
            store: VecDeque::with_capacity(config.store_capacity),
            config,
            signals: SignalSample::zero(0),
            tick: 0,
            evicted: 0,
        })
    }

    pub fn config(&self) -> &TissueConfig {
        &self.config
    }

    pub fn signal_max(&self) -> f64 {
        self.config.signal_max
    }

    /// Appends an event, evicting the oldest stored event when full.
    pub fn push_antigen(&mut self, event: AntigenEvent) -> Result<(), TissueError> {
        if event.antigen_type >= self.config.antigen_domain {
            return Err(TissueError::DomainViolation {
                antigen_type: event.antigen_type,
                domain_size: self.config.antigen_domain,
            });
        }
        if self.store.len() == self.config.store_capacity {
            self.store.pop_front();
            self.evicted += 1;
        }
        self.store.push_back(event);
        Ok(())
    }

    /// Replaces the signal matrix with `sample` (last writer wins).
    pub fn update_signals(&mut self, sample: SignalSample) -> Result<(), TissueError> {
        sample.validate(self.config.signal_max)?;
        self.signals = sample;
        Ok(())
    }

    /// Removes and returns the oldest stored antigen.
    pub fn take_antigen(&mut self) -> Option<AntigenEvent> {
        self.store.pop_front()
    }

    pub fn antigen_store(&self) -> &VecDeque<AntigenEvent> {
        &self.store
    }

    pub fn signal_matrix(&self) -> &SignalSample {
        &self.signals
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    /// Number of antigen dropped by FIFO eviction so far.
    pub fn evicted_count(&self) -> u64 {
        self.evicted
    }

    /// Antigen still waiting in the store (never sampled by any cell).
    pub fn unsampled_count(&self) -> usize {
        self.store.len()
    }
}

/// Scheduling and population parameters of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationConfig {
    pub population_size: usize,
    pub cell_update_period: u64,
    pub signal_update_period: u64,
    pub rng_seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            cell_update_period: 1,
            signal_update_period: 1,
            rng_seed: 0,
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), TissueError> {
        if self.population_size == 0 {
            return Err(TissueError::Config("population_size must be >= 1".into()));
        }
        if self.cell_update_period == 0 || self.signal_update_period == 0 {
            return Err(TissueError::Config("update periods must be >= 1".into()));
        }
        Ok(())
    }
}

/// Lifecycle state shared by the dendritic cells of both engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Immature,
    SemiMature,
    Mature,
}

/// Context an antigen was presented in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Context {
    SemiMature = 0,
    Mature = 1,
}

impl Context {
    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Context::SemiMature),
            1 => Some(Context::Mature),
            _ => None,
        }
    }
}

/// One antigen presented by a migrated cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PresentationRecord {
    pub antigen_type: AntigenType,
    pub context: Context,
    pub tick: Tick,
}

/// A fixed-size population of cells driven by the tick loop.
pub trait CellPopulation {
    /// Cells currently alive. Must equal the configured size between ticks.
    fn live_count(&self) -> usize;

    /// Performs one update step for every live cell, appending any
    /// presentations to `log`.
    fn update(
        &mut self,
        tick: Tick,
        tissue: &mut TissueCompartment,
        log: &mut Vec<PresentationRecord>,
    );
}

/// Incremental driver for one run.
///
/// Use [`run_ticks`] for file replay; the live server drives a `TickLoop`
/// directly as messages arrive.
pub struct TickLoop<'a, P: CellPopulation> {
    tissue: &'a mut TissueCompartment,
    population: &'a mut P,
    cell_period: u64,
    signal_period: u64,
    next_tick: Tick,
    pending_signal: Option<SignalSample>,
    log: Vec<PresentationRecord>,
}

impl<'a, P: CellPopulation> TickLoop<'a, P> {
    pub fn new(
        tissue: &'a mut TissueCompartment,
        population: &'a mut P,
        config: &PopulationConfig,
    ) -> Result<Self, TissueError> {
        config.validate()?;
        Ok(Self {
            tissue,
            population,
            cell_period: config.cell_update_period,
            signal_period: config.signal_update_period,
            next_tick: 0,
            pending_signal: None,
            log: Vec::new(),
        })
    }

    /// The tick the next call to [`TickLoop::step`] will execute.
    pub fn next_tick(&self) -> Tick {
        self.next_tick
    }

    pub fn tissue(&self) -> &TissueCompartment {
        self.tissue
    }

    pub fn population(&self) -> &P {
        self.population
    }

    pub fn log(&self) -> &[PresentationRecord] {
        &self.log
    }

    /// Executes one tick with the antigen and signal samples delivered for it.
    ///
    /// Signal samples are buffered and the newest one is applied on the next
    /// signal tick, so samples arriving between refreshes are overwritten.
    pub fn step(
        &mut self,
        antigen: &[AntigenEvent],
        signals: &[SignalSample],
    ) -> Result<(), TissueError> {
        let t = self.next_tick;
        self.tissue.tick = t;
        for &event in antigen {
            self.tissue.push_antigen(event)?;
        }
        if let Some(&last) = signals.last() {
            last.validate(self.tissue.signal_max())?;
            self.pending_signal = Some(last);
        }
        if t.is_multiple_of(self.signal_period) {
            if let Some(sample) = self.pending_signal.take() {
                self.tissue.update_signals(sample)?;
            }
        }
        if t.is_multiple_of(self.cell_period) {
            self.population.update(t, self.tissue, &mut self.log);
        }
        self.next_tick += 1;
        Ok(())
    }

    pub fn into_log(self) -> Vec<PresentationRecord> {
        self.log
    }
}

fn check_sorted<T>(
    stream: &'static str,
    items: &[T],
    tick_of: impl Fn(&T) -> Tick,
) -> Result<(), TissueError> {
    for (index, pair) in items.windows(2).enumerate() {
        let (previous, tick) = (tick_of(&pair[0]), tick_of(&pair[1]));
        if tick < previous {
            return Err(TissueError::OutOfOrder {
                stream,
                index: index + 1,
                tick,
                previous,
            });
        }
    }
    Ok(())
}

/// Replays tick-sorted traces for `n` ticks and returns the presentation log.
pub fn run_ticks<P: CellPopulation>(
    tissue: &mut TissueCompartment,
    population: &mut P,
    config: &PopulationConfig,
    antigen: &[AntigenEvent],
    signals: &[SignalSample],
    n: Tick,
) -> Result<Vec<PresentationRecord>, TissueError> {
    run_ticks_observed(tissue, population, config, antigen, signals, n, |_, _, _| {})
}

/// [`run_ticks`] with a callback invoked after every completed tick.
pub fn run_ticks_observed<P: CellPopulation>(
    tissue: &mut TissueCompartment,
    population: &mut P,
    config: &PopulationConfig,
    antigen: &[AntigenEvent],
    signals: &[SignalSample],
    n: Tick,
    mut observer: impl FnMut(Tick, &TissueCompartment, &P),
) -> Result<Vec<PresentationRecord>, TissueError> {
    check_sorted("antigen", antigen, |e| e.tick)?;
    check_sorted("signal", signals, |s| s.tick)?;

    let mut tick_loop = TickLoop::new(tissue, population, config)?;
    let (mut a, mut s) = (0usize, 0usize);
    for t in 0..n {
        let a_end = a + antigen[a..].partition_point(|e| e.tick <= t);
        let s_end = s + signals[s..].partition_point(|x| x.tick <= t);
        tick_loop.step(&antigen[a..a_end], &signals[s..s_end])?;
        a = a_end;
        s = s_end;
        observer(t, tick_loop.tissue(), tick_loop.population());
    }
    Ok(tick_loop.into_log())
}
