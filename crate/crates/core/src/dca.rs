//! The Dendritic Cell Algorithm.
//!
//! Each cell fuses the tissue's signal matrix into three cumulative outputs
//! (costimulation, semi-mature, mature) while collecting antigen from the
//! store. Once costimulation exceeds the cell's migration threshold the cell
//! stops sampling, takes the context of its larger maturation output, presents
//! everything it collected, and is replaced by a fresh immature cell.
//!
//! The anomaly coefficient of an antigen type is the fraction of its
//! presentations made in the mature context (see [`compute_mcav`]).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tissue::{
    AntigenType, CellPopulation, CellState, Context, PopulationConfig, PresentationRecord,
    SignalSample, Tick, TissueCompartment,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DcaError {
    #[error("{op} is not valid for a cell in state {state:?}")]
    Lifecycle { op: &'static str, state: CellState },
    #[error("invalid DCA configuration: {0}")]
    Config(String),
}

/// Output signals of a cell, rows of the [`WeightMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Csm = 0,
    Semi = 1,
    Mature = 2,
}

/// Input signal categories that carry weights. Inflammation acts as a gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Pamp = 0,
    Danger = 1,
    Safe = 2,
}

impl Output {
    pub const ALL: [Output; 3] = [Output::Csm, Output::Semi, Output::Mature];
}

impl Input {
    pub const ALL: [Input; 3] = [Input::Pamp, Input::Danger, Input::Safe];
}

/// 3x3 weights: `rows[output][input]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    rows: [[f64; 3]; 3],
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self {
            rows: [[2.0, 1.0, 2.0], [0.0, 0.0, 3.0], [2.0, 1.0, -3.0]],
        }
    }
}

impl WeightMatrix {
    /// Builds a matrix from its csm, semi and mature rows (each pamp, danger, safe).
    /// Costimulation weights must be non-negative.
    pub fn new(csm: [f64; 3], semi: [f64; 3], mature: [f64; 3]) -> Result<Self, DcaError> {
        let rows = [csm, semi, mature];
        if rows.iter().flatten().any(|w| !w.is_finite()) {
            return Err(DcaError::Config("weights must be finite".into()));
        }
        if csm.iter().any(|&w| w < 0.0) {
            return Err(DcaError::Config("csm weights must be >= 0".into()));
        }
        Ok(Self { rows })
    }

    pub fn get(&self, output: Output, input: Input) -> f64 {
        self.rows[output as usize][input as usize]
    }

    pub fn row(&self, output: Output) -> [f64; 3] {
        self.rows[output as usize]
    }

    /// Multiplies each weight by `factors[output][input]`. Factors must be
    /// positive so the sign of every weight is preserved.
    pub fn scaled(&self, factors: [[f64; 3]; 3]) -> Result<Self, DcaError> {
        if factors.iter().flatten().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(DcaError::Config("scale factors must be finite and > 0".into()));
        }
        let mut rows = self.rows;
        for (row, frow) in rows.iter_mut().zip(factors.iter()) {
            for (w, f) in row.iter_mut().zip(frow.iter()) {
                *w *= f;
            }
        }
        Self::new(rows[0], rows[1], rows[2])
    }

    /// Whether the matrix has the default sign pattern: safe suppresses the
    /// mature output and drives the semi-mature one, pamp and danger drive
    /// the mature output.
    pub fn has_default_sign_structure(&self) -> bool {
        self.get(Output::Mature, Input::Safe) < 0.0
            && self.get(Output::Semi, Input::Safe) > 0.0
            && self.get(Output::Mature, Input::Pamp) > 0.0
            && self.get(Output::Mature, Input::Danger) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcaConfig {
    pub weights: WeightMatrix,
    /// Migration thresholds are drawn uniformly from `[lo, hi]`.
    pub threshold_range: (f64, f64),
    pub antigen_vector_size: usize,
    pub antigen_per_update: usize,
    pub mcav_threshold: f64,
}

impl Default for DcaConfig {
    fn default() -> Self {
        Self {
            weights: WeightMatrix::default(),
            threshold_range: (5.0, 15.0),
            antigen_vector_size: 50,
            antigen_per_update: 1,
            mcav_threshold: 0.5,
        }
    }
}

impl DcaConfig {
    pub fn validate(&self) -> Result<(), DcaError> {
        let (lo, hi) = self.threshold_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(DcaError::Config(format!(
                "threshold range [{lo}, {hi}] must satisfy 0 < lo <= hi"
            )));
        }
        if self.antigen_vector_size == 0 {
            return Err(DcaError::Config("antigen_vector_size must be >= 1".into()));
        }
        if self.antigen_per_update == 0 {
            return Err(DcaError::Config("antigen_per_update must be >= 1".into()));
        }
        if !(self.mcav_threshold > 0.0 && self.mcav_threshold < 1.0) {
            return Err(DcaError::Config("mcav_threshold must lie in (0, 1)".into()));
        }
        WeightMatrix::new(
            self.weights.row(Output::Csm),
            self.weights.row(Output::Semi),
            self.weights.row(Output::Mature),
        )?;
        Ok(())
    }
}

/// A single data-fusion agent.
#[derive(Debug, Clone, PartialEq)]
pub struct DcaCell {
    state: CellState,
    migration_threshold: f64,
    csm: f64,
    semi: f64,
    mature: f64,
    collected: Vec<AntigenType>,
    capacity: usize,
}

impl DcaCell {
    pub fn new(migration_threshold: f64, antigen_vector_size: usize) -> Self {
        Self {
            state: CellState::Immature,
            migration_threshold,
            csm: 0.0,
            semi: 0.0,
            mature: 0.0,
            collected: Vec::with_capacity(antigen_vector_size),
            capacity: antigen_vector_size,
        }
    }

    pub fn state(&self) -> CellState {
        self.state
    }

    pub fn migration_threshold(&self) -> f64 {
        self.migration_threshold
    }

    pub fn csm(&self) -> f64 {
        self.csm
    }

    pub fn semi(&self) -> f64 {
        self.semi
    }

    pub fn mature(&self) -> f64 {
        self.mature
    }

    pub fn collected(&self) -> &[AntigenType] {
        &self.collected
    }

    fn require_immature(&self, op: &'static str) -> Result<(), DcaError> {
        match self.state {
            CellState::Immature => Ok(()),
            state => Err(DcaError::Lifecycle { op, state }),
        }
    }

    /// Adds one weighted-sum increment per output, amplified by
    /// `1 + inflammation / signal_max`. Maturation increments are clamped at 0.
    pub fn fuse_signals(
        &mut self,
        sample: &SignalSample,
        weights: &WeightMatrix,
        signal_max: f64,
    ) -> Result<(), DcaError> {
        self.require_immature("fuse_signals")?;
        let gain = 1.0 + sample.inflammation / signal_max;
        let input = [sample.pamp, sample.danger, sample.safe];
        let increment = |output: Output| -> f64 {
            let row = weights.row(output);
            (row[0] * input[0] + row[1] * input[1] + row[2] * input[2]) * gain
        };
        self.csm += increment(Output::Csm);
        self.semi += increment(Output::Semi).max(0.0);
        self.mature += increment(Output::Mature).max(0.0);
        Ok(())
    }

    /// Moves up to `per_update` of the oldest stored antigen into the cell.
    /// A full cell takes nothing. Returns the number taken.
    pub fn sample_antigen(
        &mut self,
        tissue: &mut TissueCompartment,
        per_update: usize,
    ) -> Result<usize, DcaError> {
        self.require_immature("sample_antigen")?;
        if self.collected.len() >= self.capacity {
            return Ok(0);
        }
        let room = (self.capacity - self.collected.len()).min(per_update);
        let mut taken = 0;
        while taken < room {
            match tissue.take_antigen() {
                Some(event) => {
                    self.collected.push(event.antigen_type);
                    taken += 1;
                }
                None => break,
            }
        }
        Ok(taken)
    }

    /// True once costimulation strictly exceeds the migration threshold.
    pub fn check_migration(&self) -> bool {
        self.csm > self.migration_threshold
    }

    /// Mature iff the mature output strictly exceeds the semi-mature one.
    pub fn assign_context(&self) -> CellState {
        if self.mature > self.semi {
            CellState::Mature
        } else {
            CellState::SemiMature
        }
    }

    /// Ends sampling and fixes the cell's context.
    pub fn migrate(&mut self) -> Result<CellState, DcaError> {
        self.require_immature("migrate")?;
        self.state = self.assign_context();
        Ok(self.state)
    }

    /// Retires a migrated cell, emitting one record per collected antigen.
    pub fn present(self, tick: Tick) -> Result<Vec<PresentationRecord>, DcaError> {
        let context = match self.state {
            CellState::Immature => {
                return Err(DcaError::Lifecycle {
                    op: "present",
                    state: CellState::Immature,
                })
            }
            CellState::SemiMature => Context::SemiMature,
            CellState::Mature => Context::Mature,
        };
        Ok(self
            .collected
            .into_iter()
            .map(|antigen_type| PresentationRecord {
                antigen_type,
                context,
                tick,
            })
            .collect())
    }
}

/// Counters kept by a [`DcaPopulation`] across a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DcaStats {
    /// Antigen moved from the store into any cell.
    pub sampled: u64,
    /// Antigen presented by migrated cells.
    pub presented: u64,
    pub migrations: u64,
    pub mature_migrations: u64,
}

/// A fixed-size DCA population with its own seeded generator.
#[derive(Debug, Clone)]
pub struct DcaPopulation {
    config: DcaConfig,
    cells: Vec<DcaCell>,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    stats: DcaStats,
}

impl DcaPopulation {
    pub fn new(config: DcaConfig, population: &PopulationConfig) -> Result<Self, DcaError> {
        config.validate()?;
        population
            .validate()
            .map_err(|e| DcaError::Config(e.to_string()))?;
        let mut pop = Self {
            config,
            cells: Vec::with_capacity(population.population_size),
            rng: ChaCha8Rng::seed_from_u64(population.rng_seed),
            order: (0..population.population_size).collect(),
            stats: DcaStats::default(),
        };
        for _ in 0..population.population_size {
            let cell = pop.spawn();
            pop.cells.push(cell);
        }
        Ok(pop)
    }

    fn spawn(&mut self) -> DcaCell {
        let (lo, hi) = self.config.threshold_range;
        let threshold = if lo == hi {
            lo
        } else {
            self.rng.random_range(lo..=hi)
        };
        DcaCell::new(threshold, self.config.antigen_vector_size)
    }

    pub fn config(&self) -> &DcaConfig {
        &self.config
    }

    pub fn cells(&self) -> &[DcaCell] {
        &self.cells
    }

    pub fn stats(&self) -> DcaStats {
        self.stats
    }

    /// Antigen held by live (not yet migrated) cells.
    pub fn held_antigen(&self) -> u64 {
        self.cells.iter().map(|c| c.collected.len() as u64).sum()
    }
}

impl CellPopulation for DcaPopulation {
    fn live_count(&self) -> usize {
        self.cells.len()
    }

    fn update(
        &mut self,
        tick: Tick,
        tissue: &mut TissueCompartment,
        log: &mut Vec<PresentationRecord>,
    ) {
        let sample = *tissue.signal_matrix();
        let signal_max = tissue.signal_max();
        // Visit order is reshuffled each update so no slot has first claim on the store.
        self.order.shuffle(&mut self.rng);
        for k in 0..self.order.len() {
            let i = self.order[k];
            let cell = &mut self.cells[i];
            cell.fuse_signals(&sample, &self.config.weights, signal_max)
                .expect("live cells are immature");
            let taken = cell
                .sample_antigen(tissue, self.config.antigen_per_update)
                .expect("live cells are immature");
            self.stats.sampled += taken as u64;
            if !cell.check_migration() {
                continue;
            }
            let state = cell.migrate().expect("live cells are immature");
            let fresh = self.spawn();
            let retired = std::mem::replace(&mut self.cells[i], fresh);
            let records = retired.present(tick).expect("migrated cells can present");
            self.stats.migrations += 1;
            if state == CellState::Mature {
                self.stats.mature_migrations += 1;
            }
            self.stats.presented += records.len() as u64;
            log.extend(records);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McavEntry {
    pub antigen_type: AntigenType,
    pub total_count: u64,
    pub mature_count: u64,
    /// `None` when the type was never presented.
    pub mcav: Option<f64>,
    pub label: Option<Label>,
}

/// Per-type mature context antigen values.
#[derive(Debug, Clone, PartialEq)]
pub struct McavReport {
    pub threshold: f64,
    entries: BTreeMap<AntigenType, McavEntry>,
}

pub const MCAV_CSV_HEADER: &str = "antigen_type,total_count,mature_count,mcav,label";

impl McavReport {
    pub fn entries(&self) -> impl Iterator<Item = &McavEntry> {
        self.entries.values()
    }

    pub fn get(&self, antigen_type: AntigenType) -> Option<&McavEntry> {
        self.entries.get(&antigen_type)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV body with header. Unscored types have an empty mcav and the label
    /// `unscored`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(MCAV_CSV_HEADER);
        out.push('\n');
        for e in self.entries.values() {
            match (e.mcav, e.label) {
                (Some(mcav), Some(label)) => writeln!(
                    out,
                    "{},{},{},{:.6},{}",
                    e.antigen_type,
                    e.total_count,
                    e.mature_count,
                    mcav,
                    label.as_str()
                ),
                _ => writeln!(
                    out,
                    "{},{},{},,unscored",
                    e.antigen_type, e.total_count, e.mature_count
                ),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Computes MCAV for every type present in `log`.
pub fn compute_mcav(log: &[PresentationRecord], threshold: f64) -> McavReport {
    compute_mcav_over(log, std::iter::empty(), threshold)
}

/// Like [`compute_mcav`], additionally listing `known_types` that never
/// appear in the log as unscored entries.
pub fn compute_mcav_over(
    log: &[PresentationRecord],
    known_types: impl IntoIterator<Item = AntigenType>,
    threshold: f64,
) -> McavReport {
    let mut counts: BTreeMap<AntigenType, (u64, u64)> = BTreeMap::new();
    for t in known_types {
        counts.entry(t).or_default();
    }
    for record in log {
        let c = counts.entry(record.antigen_type).or_default();
        c.0 += 1;
        if record.context == Context::Mature {
            c.1 += 1;
        }
    }
    let entries = counts
        .into_iter()
        .map(|(antigen_type, (total_count, mature_count))| {
            let mcav = (total_count > 0).then(|| mature_count as f64 / total_count as f64);
            let label = mcav.map(|m| {
                if m > threshold {
                    Label::Anomalous
                } else {
                    Label::Normal
                }
            });
            (
                antigen_type,
                McavEntry {
                    antigen_type,
                    total_count,
                    mature_count,
                    mcav,
                    label,
                },
            )
        })
        .collect();
    McavReport { threshold, entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tissue::{AntigenEvent, TissueConfig};
    use proptest::prelude::*;

    fn tissue() -> TissueCompartment {
        TissueCompartment::new(TissueConfig::default()).unwrap()
    }

    fn record(antigen_type: AntigenType, bit: u8) -> PresentationRecord {
        PresentationRecord {
            antigen_type,
            context: Context::from_bit(bit).unwrap(),
            tick: 0,
        }
    }

    #[test]
    fn zero_sample_leaves_outputs() {
        let mut cell = DcaCell::new(10.0, 50);
        cell.fuse_signals(&SignalSample::zero(0), &WeightMatrix::default(), 100.0)
            .unwrap();
        assert_eq!((cell.csm(), cell.semi(), cell.mature()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn default_weights_hand_evaluated() {
        // csm = 2+1+2, semi = 0+0+3, mature = 2+1-3
        let mut cell = DcaCell::new(10.0, 50);
        cell.fuse_signals(
            &SignalSample::new(1.0, 1.0, 1.0, 0.0, 0),
            &WeightMatrix::default(),
            100.0,
        )
        .unwrap();
        assert_eq!(cell.csm(), 5.0);
        assert_eq!(cell.semi(), 3.0);
        assert_eq!(cell.mature(), 0.0);
    }

    #[test]
    fn inflammation_amplifies() {
        let w = WeightMatrix::default();
        let mut plain = DcaCell::new(10.0, 50);
        plain
            .fuse_signals(&SignalSample::new(3.0, 2.0, 1.0, 0.0, 0), &w, 100.0)
            .unwrap();
        let mut inflamed = DcaCell::new(10.0, 50);
        inflamed
            .fuse_signals(&SignalSample::new(3.0, 2.0, 1.0, 50.0, 0), &w, 100.0)
            .unwrap();
        // gain is exactly 1 at zero inflammation, 1.5 at half of signal_max
        assert_eq!(plain.csm(), 2.0 * 3.0 + 2.0 + 2.0);
        assert_eq!(inflamed.csm(), plain.csm() * 1.5);
        assert_eq!(inflamed.mature(), plain.mature() * 1.5);
    }

    #[test]
    fn negative_mature_increment_clamped() {
        let mut cell = DcaCell::new(10.0, 50);
        cell.fuse_signals(
            &SignalSample::new(0.0, 0.0, 10.0, 0.0, 0),
            &WeightMatrix::default(),
            100.0,
        )
        .unwrap();
        assert_eq!(cell.mature(), 0.0);
        assert_eq!(cell.semi(), 30.0);
    }

    #[test]
    fn fuse_on_migrated_cell_is_lifecycle_error() {
        let mut cell = DcaCell::new(1.0, 50);
        cell.fuse_signals(&SignalSample::new(5.0, 0.0, 0.0, 0.0, 0), &WeightMatrix::default(), 100.0)
            .unwrap();
        cell.migrate().unwrap();
        let err = cell
            .fuse_signals(&SignalSample::zero(0), &WeightMatrix::default(), 100.0)
            .unwrap_err();
        assert!(matches!(err, DcaError::Lifecycle { op: "fuse_signals", .. }));
    }

    #[test]
    fn sample_from_empty_store_is_noop() {
        let mut t = tissue();
        let mut cell = DcaCell::new(10.0, 50);
        assert_eq!(cell.sample_antigen(&mut t, 1).unwrap(), 0);
        assert!(cell.collected().is_empty());
    }

    #[test]
    fn sample_single_transfer() {
        let mut t = tissue();
        t.push_antigen(AntigenEvent::new(7, 3)).unwrap();
        let mut cell = DcaCell::new(10.0, 50);
        cell.sample_antigen(&mut t, 1).unwrap();
        assert_eq!(cell.collected(), &[7]);
        assert!(t.antigen_store().is_empty());
    }

    #[test]
    fn sample_respects_vector_capacity() {
        // reference: a plain list that accepts up to `cap` items, per_update at a time
        let (cap, per_update) = (5usize, 2usize);
        let mut t = tissue();
        for i in 0..20 {
            t.push_antigen(AntigenEvent::new(i, i as u64)).unwrap();
        }
        let mut cell = DcaCell::new(10.0, cap);
        let mut reference: Vec<u32> = Vec::new();
        let mut source: Vec<u32> = (0..20).collect();
        for _ in 0..6 {
            cell.sample_antigen(&mut t, per_update).unwrap();
            let room = cap.saturating_sub(reference.len()).min(per_update);
            reference.extend(source.drain(..room));
        }
        assert_eq!(cell.collected(), reference.as_slice());
        assert_eq!(t.antigen_store().len(), source.len());
        // full cell leaves the store untouched
        let before = t.antigen_store().clone();
        assert_eq!(cell.sample_antigen(&mut t, 3).unwrap(), 0);
        assert_eq!(*t.antigen_store(), before);
    }

    #[test]
    fn migration_is_strict() {
        let w = WeightMatrix::new([1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]).unwrap();
        let mut at = DcaCell::new(5.0, 1);
        at.fuse_signals(&SignalSample::new(5.0, 0.0, 0.0, 0.0, 0), &w, 100.0).unwrap();
        assert!(!at.check_migration());
        let mut above = DcaCell::new(5.0, 1);
        above
            .fuse_signals(&SignalSample::new(5.0 + 1e-9, 0.0, 0.0, 0.0, 0), &w, 100.0)
            .unwrap();
        assert!(above.check_migration());
        assert!(!DcaCell::new(5.0, 1).check_migration());
    }

    fn cell_with(semi: f64, mature: f64) -> DcaCell {
        let mut c = DcaCell::new(1.0, 4);
        c.semi = semi;
        c.mature = mature;
        c
    }

    #[test]
    fn context_assignment_and_tie() {
        assert_eq!(cell_with(2.0, 2.0).assign_context(), CellState::SemiMature);
        assert_eq!(cell_with(3.0, 0.0).assign_context(), CellState::SemiMature);
        assert_eq!(cell_with(1.0, 5.0).assign_context(), CellState::Mature);
    }

    #[test]
    fn present_fans_out_context() {
        let mut c = cell_with(0.0, 1.0);
        c.collected = vec![4, 4, 9];
        c.migrate().unwrap();
        let recs = c.present(12).unwrap();
        let got: Vec<_> = recs.iter().map(|r| (r.antigen_type, r.context.bit(), r.tick)).collect();
        assert_eq!(got, vec![(4, 1, 12), (4, 1, 12), (9, 1, 12)]);
    }

    #[test]
    fn present_empty_and_immature() {
        let mut c = cell_with(1.0, 0.0);
        c.migrate().unwrap();
        assert!(c.present(0).unwrap().is_empty());
        let err = DcaCell::new(1.0, 4).present(0).unwrap_err();
        assert!(matches!(err, DcaError::Lifecycle { op: "present", state: CellState::Immature }));
    }

    #[test]
    fn population_replaces_migrated_cells() {
        let pop_cfg = PopulationConfig {
            population_size: 3,
            ..Default::default()
        };
        let mut pop = DcaPopulation::new(DcaConfig::default(), &pop_cfg).unwrap();
        let mut t = tissue();
        t.update_signals(SignalSample::new(50.0, 50.0, 0.0, 0.0, 0)).unwrap();
        for i in 0..3 {
            t.push_antigen(AntigenEvent::new(i, 0)).unwrap();
        }
        let mut log = vec![];
        pop.update(0, &mut t, &mut log);
        assert_eq!(pop.live_count(), 3);
        assert!(pop.cells().iter().all(|c| c.state() == CellState::Immature && c.csm() == 0.0));
        let mut types: Vec<_> = log.iter().map(|r| r.antigen_type).collect();
        types.sort();
        assert_eq!(types, vec![0, 1, 2]);
        assert!(log.iter().all(|r| r.context == Context::Mature));
        assert_eq!(pop.stats().migrations, 3);
    }

    #[test]
    fn thresholds_drawn_in_range_and_seeded() {
        let cfg = DcaConfig::default();
        let pop_cfg = PopulationConfig {
            population_size: 200,
            rng_seed: 9,
            ..Default::default()
        };
        let a = DcaPopulation::new(cfg.clone(), &pop_cfg).unwrap();
        let b = DcaPopulation::new(cfg, &pop_cfg).unwrap();
        assert_eq!(a.cells(), b.cells());
        assert!(a
            .cells()
            .iter()
            .all(|c| (5.0..=15.0).contains(&c.migration_threshold())));
    }

    #[test]
    fn mcav_examples() {
        let log = [
            record(1, 1),
            record(1, 1),
            record(1, 0),
            record(1, 1),
            record(2, 0),
            record(2, 0),
        ];
        let report = compute_mcav_over(&log, [3], 0.5);
        let a = report.get(1).unwrap();
        assert_eq!(a.mcav, Some(0.75));
        assert_eq!(a.label, Some(Label::Anomalous));
        let b = report.get(2).unwrap();
        assert_eq!(b.mcav, Some(0.0));
        assert_eq!(b.label, Some(Label::Normal));
        let c = report.get(3).unwrap();
        assert_eq!((c.total_count, c.mcav, c.label), (0, None, None));
        assert_eq!(
            report.to_csv(),
            "antigen_type,total_count,mature_count,mcav,label\n\
             1,4,3,0.750000,anomalous\n\
             2,2,0,0.000000,normal\n\
             3,0,0,,unscored\n"
        );
    }

    #[test]
    fn mcav_at_threshold_is_normal() {
        let report = compute_mcav(&[record(0, 1), record(0, 0)], 0.5);
        assert_eq!(report.get(0).unwrap().label, Some(Label::Normal));
    }

    #[test]
    fn config_rejects_bad_values() {
        let bad = [
            DcaConfig { threshold_range: (0.0, 1.0), ..Default::default() },
            DcaConfig { threshold_range: (5.0, 1.0), ..Default::default() },
            DcaConfig { antigen_vector_size: 0, ..Default::default() },
            DcaConfig { antigen_per_update: 0, ..Default::default() },
            DcaConfig { mcav_threshold: 1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(WeightMatrix::new([-1.0, 0.0, 0.0], [0.0; 3], [0.0; 3]).is_err());
        assert!(WeightMatrix::default().has_default_sign_structure());
        assert!(WeightMatrix::default().scaled([[1.0; 3], [1.0; 3], [0.0; 3]]).is_err());
    }

    fn signal() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (0.0..=100.0f64, 0.0..=100.0f64, 0.0..=100.0f64, 0.0..=100.0f64)
    }

    proptest! {
        #[test]
        fn csm_never_decreases(samples in prop::collection::vec(signal(), 1..40)) {
            let mut cell = DcaCell::new(1e12, 1);
            let mut last = 0.0;
            for (p, d, s, i) in samples {
                cell.fuse_signals(&SignalSample::new(p, d, s, i, 0), &WeightMatrix::default(), 100.0).unwrap();
                prop_assert!(cell.csm() >= last);
                prop_assert!(cell.semi() >= 0.0 && cell.mature() >= 0.0);
                last = cell.csm();
            }
        }

        #[test]
        fn increment_is_linear_in_inputs(
            (p, d, s, i) in signal(),
            exp in -3i32..=3,
            k in 0.0..=8.0f64,
        ) {
            let w = WeightMatrix::default();
            let fused = |scale: f64| {
                let mut c = DcaCell::new(1e12, 1);
                c.fuse_signals(&SignalSample::new(scale * p, scale * d, scale * s, i, 0), &w, 100.0).unwrap();
                [c.csm(), c.semi(), c.mature()]
            };
            let base = fused(1.0);
            // power-of-two scaling is exact in floating point
            let two = 2f64.powi(exp);
            for (got, want) in fused(two).iter().zip(base.iter()) {
                prop_assert_eq!(*got, two * want);
            }
            for (got, want) in fused(k).iter().zip(base.iter()) {
                prop_assert!((got - k * want).abs() <= 1e-9 * (1.0 + (k * want).abs()));
            }
            prop_assert_eq!(fused(0.0), [0.0, 0.0, 0.0]);
        }

        #[test]
        fn mcav_matches_counting(raw in prop::collection::vec((0u32..6, 0u8..2), 0..200)) {
            let log: Vec<_> = raw.iter().map(|&(t, b)| record(t, b)).collect();
            let report = compute_mcav(&log, 0.5);
            for t in 0..6u32 {
                let total = raw.iter().filter(|r| r.0 == t).count() as u64;
                let mature = raw.iter().filter(|r| r.0 == t && r.1 == 1).count() as u64;
                match report.get(t) {
                    None => prop_assert_eq!(total, 0),
                    Some(e) => {
                        prop_assert_eq!(e.total_count, total);
                        prop_assert_eq!(e.mature_count, mature);
                        prop_assert_eq!(e.mcav, Some(mature as f64 / total as f64));
                    }
                }
            }
        }
    }
}
