//! The TLR algorithm: dendritic cells and T-cells tuned by negative selection.
//!
//! Training records every signal value and antigen value seen in normal
//! data. Their complements become the "infectious signal list" (per channel)
//! and the set of T-cell receptors. During detection, an immature DC that
//! observes an infectious signal value matures and migrates immediately; one
//! that reaches the end of its lifespan migrates semi-mature. In the lymph
//! node a mature DC activates every naive T-cell whose receptor equals an
//! antigen it carries, while a semi-mature DC deletes such T-cells. One
//! activated T-cell marks the session anomalous.
//!
//! Signals are discretised by flooring each of the first three channels
//! (pamp, danger, safe) into its integer domain. Inflammation is unused.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tissue::{
    run_ticks_observed, AntigenEvent, AntigenType, CellPopulation, CellState, Context,
    PopulationConfig, PresentationRecord, SignalSample, Tick, TissueCompartment, TissueConfig,
    TissueError,
};

/// Number of signal channels the TLR engine reads.
pub const CHANNELS: usize = 3;

pub const MODEL_HEADER: &str = "tlr-model v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TlrError {
    #[error("untrainable model: {0}")]
    Untrainable(String),
    #[error("{what} value {value} outside domain [0, {domain})")]
    Domain {
        what: String,
        value: u64,
        domain: u32,
    },
    #[error("invalid TLR configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("model file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Tissue(#[from] TissueError),
}

/// Finite value ranges for antigen and each signal channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TlrDomains {
    pub antigen: u32,
    pub signal: [u32; CHANNELS],
}

impl Default for TlrDomains {
    fn default() -> Self {
        Self {
            antigen: 256,
            signal: [256; CHANNELS],
        }
    }
}

impl TlrDomains {
    pub fn validate(&self) -> Result<(), TlrError> {
        if self.antigen == 0 || self.signal.iter().any(|&d| d < 2) {
            return Err(TlrError::Config(
                "antigen domain must be >= 1 and signal domains >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Largest admissible raw signal value across channels.
    pub fn signal_max(&self) -> f64 {
        f64::from(self.signal.iter().copied().max().unwrap_or(2) - 1)
    }

    /// Compartment settings matching these domains.
    pub fn tissue_config(&self, store_capacity: usize) -> TissueConfig {
        TissueConfig {
            antigen_domain: self.antigen,
            store_capacity,
            signal_max: self.signal_max(),
        }
    }

    /// Discretises a sample into per-channel integer values.
    pub fn discretize(&self, sample: &SignalSample) -> Result<[u32; CHANNELS], TlrError> {
        let raw = [sample.pamp, sample.danger, sample.safe];
        let mut out = [0u32; CHANNELS];
        for c in 0..CHANNELS {
            let v = raw[c];
            if !(v >= 0.0 && v.is_finite()) || v.floor() >= f64::from(self.signal[c]) {
                return Err(TlrError::Domain {
                    what: format!("signal channel {c}"),
                    value: if v.is_finite() && v >= 0.0 { v.floor() as u64 } else { u64::MAX },
                    domain: self.signal[c],
                });
            }
            out[c] = v.floor() as u32;
        }
        Ok(out)
    }
}

/// How an observed signal value is matched against the infectious lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchScope {
    /// A value on channel `c` matches only `infectious[c]`.
    #[default]
    PerChannel,
    /// A value on any channel matches the union of all lists.
    Global,
}

/// Which receptors a DC uses to detect infectious signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReceptorMode {
    /// Any value on the infectious list matures the DC.
    #[default]
    AnyInfectious,
    /// Only the receptors drawn for the DC at spawn time are checked.
    Carried,
}

/// Complement sets produced by training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlrModel {
    domains: TlrDomains,
    antigen_complement: BTreeSet<AntigenType>,
    infectious: [BTreeSet<u32>; CHANNELS],
    infectious_union: BTreeSet<u32>,
}

impl TlrModel {
    fn from_sets(
        domains: TlrDomains,
        antigen_complement: BTreeSet<AntigenType>,
        infectious: [BTreeSet<u32>; CHANNELS],
    ) -> Result<Self, TlrError> {
        if antigen_complement.is_empty() {
            return Err(TlrError::Untrainable(
                "training antigen cover the whole antigen domain".into(),
            ));
        }
        if infectious.iter().all(BTreeSet::is_empty) {
            return Err(TlrError::Untrainable(
                "training signals cover every signal domain".into(),
            ));
        }
        let infectious_union = infectious.iter().flatten().copied().collect();
        Ok(Self {
            domains,
            antigen_complement,
            infectious,
            infectious_union,
        })
    }

    pub fn domains(&self) -> &TlrDomains {
        &self.domains
    }

    pub fn antigen_complement(&self) -> &BTreeSet<AntigenType> {
        &self.antigen_complement
    }

    pub fn infectious(&self, channel: usize) -> &BTreeSet<u32> {
        &self.infectious[channel]
    }

    /// Whether `value` observed on `channel` is nonself.
    pub fn is_infectious(&self, channel: usize, value: u32, scope: MatchScope) -> bool {
        match scope {
            MatchScope::PerChannel => self.infectious[channel].contains(&value),
            MatchScope::Global => self.infectious_union.contains(&value),
        }
    }

    /// Renders the versioned model file.
    pub fn to_text(&self) -> String {
        fn line(out: &mut String, key: &str, values: &BTreeSet<u32>) {
            out.push_str(key);
            out.push(':');
            for v in values {
                write!(out, " {v}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        let mut out = String::new();
        out.push_str(MODEL_HEADER);
        out.push('\n');
        line(&mut out, "antigen_complement", &self.antigen_complement);
        for (c, set) in self.infectious.iter().enumerate() {
            line(&mut out, &format!("infectious[{c}]"), set);
        }
        out
    }

    /// Parses a model file. The domains are not stored in the file and must
    /// be supplied; every listed value is checked against them.
    pub fn from_text(text: &str, domains: TlrDomains) -> Result<Self, TlrError> {
        domains.validate()?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, MODEL_HEADER)) => {}
            _ => {
                return Err(TlrError::Parse {
                    line: 1,
                    msg: format!("expected header '{MODEL_HEADER}'"),
                })
            }
        }
        let mut keys = vec!["antigen_complement".to_string()];
        keys.extend((0..CHANNELS).map(|c| format!("infectious[{c}]")));
        let mut sets: Vec<BTreeSet<u32>> = Vec::with_capacity(keys.len());
        for key in &keys {
            let (i, raw) = lines.next().ok_or_else(|| TlrError::Parse {
                line: sets.len() + 2,
                msg: format!("missing '{key}' line"),
            })?;
            let lineno = i + 1;
            let rest = raw
                .strip_prefix(key.as_str())
                .and_then(|r| r.strip_prefix(':'))
                .ok_or_else(|| TlrError::Parse {
                    line: lineno,
                    msg: format!("expected '{key}:'"),
                })?;
            let domain = if sets.is_empty() {
                domains.antigen
            } else {
                domains.signal[sets.len() - 1]
            };
            let mut set = BTreeSet::new();
            for tok in rest.split_whitespace() {
                let v: u32 = tok.parse().map_err(|_| TlrError::Parse {
                    line: lineno,
                    msg: format!("bad value '{tok}'"),
                })?;
                if v >= domain {
                    return Err(TlrError::Domain {
                        what: key.clone(),
                        value: u64::from(v),
                        domain,
                    });
                }
                set.insert(v);
            }
            sets.push(set);
        }
        if let Some((i, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(TlrError::Parse {
                line: i + 1,
                msg: format!("unexpected trailing line '{extra}'"),
            });
        }
        let mut it = sets.into_iter();
        let antigen = it.next().expect("four sets parsed");
        let infectious = [
            it.next().expect("four sets parsed"),
            it.next().expect("four sets parsed"),
            it.next().expect("four sets parsed"),
        ];
        Self::from_sets(domains, antigen, infectious)
    }
}

/// Negative selection over normal antigen and signal traces.
pub fn train(
    normal_antigen: &[AntigenEvent],
    normal_signals: &[SignalSample],
    domains: TlrDomains,
) -> Result<TlrModel, TlrError> {
    domains.validate()?;
    let mut seen_antigen = BTreeSet::new();
    for event in normal_antigen {
        if event.antigen_type >= domains.antigen {
            return Err(TlrError::Domain {
                what: "training antigen".into(),
                value: u64::from(event.antigen_type),
                domain: domains.antigen,
            });
        }
        seen_antigen.insert(event.antigen_type);
    }
    let mut seen_signal: [BTreeSet<u32>; CHANNELS] = Default::default();
    for sample in normal_signals {
        let values = domains.discretize(sample)?;
        for (set, v) in seen_signal.iter_mut().zip(values) {
            set.insert(v);
        }
    }
    let antigen_complement = (0..domains.antigen)
        .filter(|a| !seen_antigen.contains(a))
        .collect();
    let infectious = std::array::from_fn(|c| {
        (0..domains.signal[c])
            .filter(|v| !seen_signal[c].contains(v))
            .collect()
    });
    TlrModel::from_sets(domains, antigen_complement, infectious)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlrConfig {
    pub dc_population: usize,
    pub tcell_population: usize,
    pub dc_lifespan: u32,
    pub receptors_per_dc: usize,
    pub rng_seed: u64,
    pub match_scope: MatchScope,
    pub receptor_mode: ReceptorMode,
    pub store_capacity: usize,
}

impl Default for TlrConfig {
    fn default() -> Self {
        Self {
            dc_population: 50,
            tcell_population: 100,
            dc_lifespan: 20,
            receptors_per_dc: 1,
            rng_seed: 0,
            match_scope: MatchScope::PerChannel,
            receptor_mode: ReceptorMode::AnyInfectious,
            store_capacity: crate::tissue::DEFAULT_STORE_CAPACITY,
        }
    }
}

impl TlrConfig {
    pub fn validate(&self) -> Result<(), TlrError> {
        if self.dc_population == 0
            || self.tcell_population == 0
            || self.dc_lifespan == 0
            || self.receptors_per_dc == 0
            || self.store_capacity == 0
        {
            return Err(TlrError::Config(
                "populations, lifespan, receptors_per_dc and store_capacity must be positive"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn population_config(&self) -> PopulationConfig {
        PopulationConfig {
            population_size: self.dc_population,
            cell_update_period: 1,
            signal_update_period: 1,
            rng_seed: self.rng_seed,
        }
    }
}

/// A signal receptor: one infectious value on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignalReceptor {
    pub channel: usize,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlrDc {
    state: CellState,
    lifespan_remaining: u32,
    collected: Vec<AntigenType>,
    receptors: Vec<SignalReceptor>,
}

impl TlrDc {
    pub fn new(lifespan: u32, receptors: Vec<SignalReceptor>) -> Self {
        Self {
            state: CellState::Immature,
            lifespan_remaining: lifespan,
            collected: Vec::new(),
            receptors,
        }
    }

    pub fn state(&self) -> CellState {
        self.state
    }

    pub fn lifespan_remaining(&self) -> u32 {
        self.lifespan_remaining
    }

    pub fn collected(&self) -> &[AntigenType] {
        &self.collected
    }

    pub fn receptors(&self) -> &[SignalReceptor] {
        &self.receptors
    }

    fn matches(&self, observed: &[u32; CHANNELS], model: &TlrModel, config: &TlrConfig) -> bool {
        match config.receptor_mode {
            ReceptorMode::AnyInfectious => observed
                .iter()
                .enumerate()
                .any(|(c, &v)| model.is_infectious(c, v, config.match_scope)),
            ReceptorMode::Carried => self.receptors.iter().any(|r| match config.match_scope {
                MatchScope::PerChannel => observed[r.channel] == r.value,
                MatchScope::Global => observed.contains(&r.value),
            }),
        }
    }

    /// One update of an immature DC. Returns the migration state, if any.
    /// Calling this on a migrated DC does nothing.
    pub fn step(
        &mut self,
        observed: &[u32; CHANNELS],
        tissue: &mut TissueCompartment,
        model: &TlrModel,
        config: &TlrConfig,
    ) -> Option<CellState> {
        if self.state != CellState::Immature {
            return None;
        }
        if let Some(event) = tissue.take_antigen() {
            self.collected.push(event.antigen_type);
        }
        if self.matches(observed, model, config) {
            self.state = CellState::Mature;
            return Some(self.state);
        }
        self.lifespan_remaining = self.lifespan_remaining.saturating_sub(1);
        if self.lifespan_remaining == 0 {
            self.state = CellState::SemiMature;
            return Some(self.state);
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TCellState {
    Naive,
    Activated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TCell {
    pub receptor: AntigenType,
    pub state: TCellState,
}

impl TCell {
    pub fn naive(receptor: AntigenType) -> Self {
        Self {
            receptor,
            state: TCellState::Naive,
        }
    }
}

fn draw_dc<R: Rng>(config: &TlrConfig, pool: &[SignalReceptor], rng: &mut R) -> TlrDc {
    let receptors = index::sample(rng, pool.len(), config.receptors_per_dc)
        .into_iter()
        .map(|i| pool[i])
        .collect();
    TlrDc::new(config.dc_lifespan, receptors)
}

fn receptor_pool(model: &TlrModel) -> Vec<SignalReceptor> {
    model
        .infectious
        .iter()
        .enumerate()
        .flat_map(|(channel, set)| set.iter().map(move |&value| SignalReceptor { channel, value }))
        .collect()
}

/// Creates the initial DC and naive T-cell populations.
///
/// When the T-cell population is at least as large as the antigen
/// complement, every complement value receives at least one T-cell.
pub fn spawn_populations<R: Rng>(
    model: &TlrModel,
    config: &TlrConfig,
    rng: &mut R,
) -> Result<(Vec<TlrDc>, Vec<TCell>), TlrError> {
    config.validate()?;
    let pool = receptor_pool(model);
    if config.receptors_per_dc > pool.len() {
        return Err(TlrError::Config(format!(
            "receptors_per_dc {} exceeds infectious list size {}",
            config.receptors_per_dc,
            pool.len()
        )));
    }
    let dcs = (0..config.dc_population)
        .map(|_| draw_dc(config, &pool, rng))
        .collect();

    let complement: Vec<AntigenType> = model.antigen_complement.iter().copied().collect();
    let mut receptors: Vec<AntigenType> = if config.tcell_population >= complement.len() {
        let mut r = complement.clone();
        r.extend((complement.len()..config.tcell_population).map(|_| complement[rng.random_range(0..complement.len())]));
        r
    } else {
        index::sample(rng, complement.len(), config.tcell_population)
            .into_iter()
            .map(|i| complement[i])
            .collect()
    };
    receptors.shuffle(rng);
    let tcells = receptors.into_iter().map(TCell::naive).collect();
    Ok((dcs, tcells))
}

/// Outcome of presenting one migrated DC in the lymph node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LymphOutcome {
    pub activated: usize,
    pub killed: usize,
}

/// Presents a migrated DC's antigen to the T-cells. Killed naive T-cells
/// are replaced in place by new naive cells drawn from the complement.
pub fn lymph_interact<R: Rng>(
    dc: &TlrDc,
    tcells: &mut [TCell],
    model: &TlrModel,
    rng: &mut R,
) -> LymphOutcome {
    let carried: BTreeSet<AntigenType> = dc.collected.iter().copied().collect();
    let mut outcome = LymphOutcome::default();
    if carried.is_empty() {
        return outcome;
    }
    let complement: Vec<AntigenType> = match dc.state {
        CellState::SemiMature => model.antigen_complement.iter().copied().collect(),
        _ => Vec::new(),
    };
    for tcell in tcells.iter_mut() {
        if tcell.state != TCellState::Naive || !carried.contains(&tcell.receptor) {
            continue;
        }
        match dc.state {
            CellState::Mature => {
                tcell.state = TCellState::Activated;
                outcome.activated += 1;
            }
            CellState::SemiMature => {
                *tcell = TCell::naive(complement[rng.random_range(0..complement.len())]);
                outcome.killed += 1;
            }
            CellState::Immature => {}
        }
    }
    outcome
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TlrStats {
    pub sampled: u64,
    pub presented: u64,
    pub mature_dcs: u64,
    pub semi_mature_dcs: u64,
    pub activations: u64,
    pub kills: u64,
}

/// DCs and T-cells for one run, with the run's seeded generator.
#[derive(Debug, Clone)]
pub struct TlrPopulation {
    model: TlrModel,
    config: TlrConfig,
    pool: Vec<SignalReceptor>,
    dcs: Vec<TlrDc>,
    tcells: Vec<TCell>,
    rng: ChaCha8Rng,
    stats: TlrStats,
    triggering: BTreeSet<AntigenType>,
}

impl TlrPopulation {
    pub fn new(model: TlrModel, config: TlrConfig) -> Result<Self, TlrError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let (dcs, tcells) = spawn_populations(&model, &config, &mut rng)?;
        Ok(Self {
            pool: receptor_pool(&model),
            model,
            config,
            dcs,
            tcells,
            rng,
            stats: TlrStats::default(),
            triggering: BTreeSet::new(),
        })
    }

    pub fn dcs(&self) -> &[TlrDc] {
        &self.dcs
    }

    pub fn tcells(&self) -> &[TCell] {
        &self.tcells
    }

    pub fn stats(&self) -> TlrStats {
        self.stats
    }

    pub fn activated_count(&self) -> usize {
        self.tcells
            .iter()
            .filter(|t| t.state == TCellState::Activated)
            .count()
    }

    pub fn held_antigen(&self) -> u64 {
        self.dcs.iter().map(|d| d.collected.len() as u64).sum()
    }

    pub fn verdict(&self) -> SessionVerdict {
        let activated_count = self.activated_count();
        SessionVerdict {
            anomalous: activated_count >= 1,
            activated_count,
            triggering_antigen: self.triggering.clone(),
            stats: self.stats,
        }
    }
}

impl CellPopulation for TlrPopulation {
    fn live_count(&self) -> usize {
        self.dcs.len()
    }

    fn update(
        &mut self,
        tick: Tick,
        tissue: &mut TissueCompartment,
        log: &mut Vec<PresentationRecord>,
    ) {
        let observed = self
            .model
            .domains
            .discretize(tissue.signal_matrix())
            .expect("signal matrix is validated against the domains on ingestion");
        for i in 0..self.dcs.len() {
            let before = self.dcs[i].collected.len();
            let migrated = self.dcs[i].step(&observed, tissue, &self.model, &self.config);
            self.stats.sampled += (self.dcs[i].collected.len() - before) as u64;
            let Some(state) = migrated else { continue };

            let fresh = draw_dc(&self.config, &self.pool, &mut self.rng);
            let dc = std::mem::replace(&mut self.dcs[i], fresh);
            let outcome = lymph_interact(&dc, &mut self.tcells, &self.model, &mut self.rng);
            let context = if state == CellState::Mature {
                self.stats.mature_dcs += 1;
                Context::Mature
            } else {
                self.stats.semi_mature_dcs += 1;
                Context::SemiMature
            };
            self.stats.activations += outcome.activated as u64;
            self.stats.kills += outcome.killed as u64;
            if outcome.activated > 0 {
                self.triggering.extend(dc.collected.iter().copied());
            }
            self.stats.presented += dc.collected.len() as u64;
            log.extend(dc.collected.iter().map(|&antigen_type| PresentationRecord {
                antigen_type,
                context,
                tick,
            }));
        }
    }
}

/// Classification of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionVerdict {
    pub anomalous: bool,
    pub activated_count: usize,
    /// Antigen carried by mature DCs that activated at least one T-cell.
    pub triggering_antigen: BTreeSet<AntigenType>,
    pub stats: TlrStats,
}

/// Training plus classification behind one handle.
#[derive(Debug, Clone)]
pub struct TlrDetector {
    config: TlrConfig,
    model: Option<TlrModel>,
}

impl TlrDetector {
    pub fn new(config: TlrConfig) -> Result<Self, TlrError> {
        config.validate()?;
        Ok(Self {
            config,
            model: None,
        })
    }

    pub fn with_model(config: TlrConfig, model: TlrModel) -> Result<Self, TlrError> {
        let mut d = Self::new(config)?;
        d.model = Some(model);
        Ok(d)
    }

    pub fn config(&self) -> &TlrConfig {
        &self.config
    }

    pub fn model(&self) -> Option<&TlrModel> {
        self.model.as_ref()
    }

    pub fn train(
        &mut self,
        normal_antigen: &[AntigenEvent],
        normal_signals: &[SignalSample],
        domains: TlrDomains,
    ) -> Result<&TlrModel, TlrError> {
        let model = train(normal_antigen, normal_signals, domains)?;
        Ok(self.model.insert(model))
    }

    /// Runs one session and reports whether any T-cell was activated.
    pub fn classify_session(
        &self,
        antigen: &[AntigenEvent],
        signals: &[SignalSample],
    ) -> Result<SessionVerdict, TlrError> {
        self.classify_with_seed(antigen, signals, self.config.rng_seed)
    }

    /// Like [`TlrDetector::classify_session`] with an explicit seed.
    pub fn classify_with_seed(
        &self,
        antigen: &[AntigenEvent],
        signals: &[SignalSample],
        seed: u64,
    ) -> Result<SessionVerdict, TlrError> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| TlrError::Usage("classify_session called before training".into()))?;
        let config = TlrConfig {
            rng_seed: seed,
            ..self.config.clone()
        };
        let mut tissue =
            TissueCompartment::new(model.domains.tissue_config(config.store_capacity))?;
        for s in signals {
            model.domains.discretize(s)?;
        }
        let mut population = TlrPopulation::new(model.clone(), config.clone())?;
        let n = session_length(antigen, signals);
        run_ticks_observed(
            &mut tissue,
            &mut population,
            &config.population_config(),
            antigen,
            signals,
            n,
            |_, _, _| {},
        )?;
        Ok(population.verdict())
    }
}

/// Ticks needed to deliver every event of a session: last tick + 1.
pub fn session_length(antigen: &[AntigenEvent], signals: &[SignalSample]) -> Tick {
    let last_a = antigen.iter().map(|e| e.tick + 1).max().unwrap_or(0);
    let last_s = signals.iter().map(|s| s.tick + 1).max().unwrap_or(0);
    last_a.max(last_s)
}
