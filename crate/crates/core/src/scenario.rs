//! Seeded synthetic scenarios with ground-truth labels.
//!
//! Two shapes are generated:
//!
//! - A ping scan: several processes emit antigen (their process IDs) while
//!   system-wide signals are derived from outbound packet and ICMP error
//!   rates. One scanner floods packets during a scan window and triggers
//!   unreachable errors; its parent terminal is active at the same time.
//! - Syscall sessions: normal sessions draw syscalls and resource signals
//!   from fixed normal ranges; anomalous sessions additionally inject
//!   out-of-set syscalls together with out-of-range signal values.
//!
//! Every generator is a pure function of its scenario and seed.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::dca::Label;
use crate::tissue::{AntigenEvent, AntigenType, SignalSample, Tick};
use crate::trace::{read_trace, write_trace, TraceError, TraceFile};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("inseparable scenario: {0}")]
    Inseparable(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("labels line {line}: {msg}")]
    Labels { line: usize, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Ground truth for named entities (antigen types or session names).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Labels {
    pub rows: Vec<(String, Label)>,
}

pub const LABELS_HEADER: &str = "entity,label";

impl Labels {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LABELS_HEADER);
        out.push('\n');
        for (entity, label) in &self.rows {
            out.push_str(entity);
            out.push(',');
            out.push_str(label.as_str());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, ScenarioError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if line == LABELS_HEADER {
                continue;
            }
            let (entity, label) = line.split_once(',').ok_or_else(|| ScenarioError::Labels {
                line: i + 1,
                msg: "expected 'entity,label'".into(),
            })?;
            let label = match label {
                "normal" => Label::Normal,
                "anomalous" => Label::Anomalous,
                other => {
                    return Err(ScenarioError::Labels {
                        line: i + 1,
                        msg: format!("unknown label '{other}'"),
                    })
                }
            };
            rows.push((entity.to_string(), label));
        }
        Ok(Self { rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        Self::parse_csv(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    /// Constant background activity and traffic.
    NormalSteady,
    /// Quiet background with occasional bursts of activity and traffic.
    NormalBursty,
    /// Floods ping probes during the scan window, idle otherwise.
    Scanner,
    /// The terminal that launched the scanner: busy during the scan window,
    /// mostly idle otherwise, no traffic of its own.
    ScanParent,
}

impl Behavior {
    pub fn label(self) -> Label {
        match self {
            Behavior::Scanner | Behavior::ScanParent => Label::Anomalous,
            _ => Label::Normal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSpec {
    pub id: AntigenType,
    pub name: String,
    pub behavior: Behavior,
}

/// Mean per-tick rates for one behaviour (packets, errors, antigen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub antigen: f64,
    pub packets: f64,
    pub errors: f64,
    /// Uniform jitter as a fraction of the mean, applied to packets and errors.
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PingScanScenario {
    pub duration: Tick,
    pub processes: Vec<ProcessSpec>,
    /// Half-open `[start, end)`.
    pub scan_window: (Tick, Tick),
    pub steady: Rates,
    /// Rates outside bursts.
    pub bursty_idle: Rates,
    /// Rates during a burst.
    pub bursty_active: Rates,
    pub burst_probability: f64,
    pub burst_length: (Tick, Tick),
    /// Scanner during the scan window.
    pub scanner: Rates,
    pub parent_idle: Rates,
    pub parent_active: Rates,
    pub allow_multiple_scanners: bool,
    pub signal_max: f64,
    /// Packets per tick that map to `signal_max` danger.
    pub packet_ceiling: f64,
    /// Errors per tick that map to `signal_max` PAMP.
    pub error_ceiling: f64,
}

impl Default for PingScanScenario {
    /// Four processes: `nmap` (scanner), `pts` (its terminal), `sshd` and
    /// `bash` (normal), over 1000 ticks with a scan in `[400, 700)`.
    fn default() -> Self {
        let proc = |id, name: &str, behavior| ProcessSpec {
            id,
            name: name.into(),
            behavior,
        };
        Self {
            duration: 1000,
            processes: vec![
                proc(0, "nmap", Behavior::Scanner),
                proc(1, "pts", Behavior::ScanParent),
                proc(2, "sshd", Behavior::NormalSteady),
                proc(3, "bash", Behavior::NormalBursty),
            ],
            scan_window: (400, 700),
            steady: Rates { antigen: 2.0, packets: 8.0, errors: 0.0, jitter: 0.1 },
            bursty_idle: Rates { antigen: 0.5, packets: 2.0, errors: 0.0, jitter: 0.1 },
            bursty_active: Rates { antigen: 2.0, packets: 14.0, errors: 0.0, jitter: 0.2 },
            burst_probability: 0.02,
            burst_length: (5, 15),
            scanner: Rates { antigen: 3.0, packets: 60.0, errors: 35.0, jitter: 0.5 },
            parent_idle: Rates { antigen: 0.1, packets: 0.0, errors: 0.0, jitter: 0.0 },
            parent_active: Rates { antigen: 1.5, packets: 0.0, errors: 0.0, jitter: 0.0 },
            allow_multiple_scanners: false,
            signal_max: 100.0,
            packet_ceiling: 100.0,
            error_ceiling: 50.0,
        }
    }
}

impl PingScanScenario {
    /// The default scenario with the scanner and its parent removed.
    pub fn without_scanner() -> Self {
        let mut s = Self::default();
        s.processes
            .retain(|p| !matches!(p.behavior, Behavior::Scanner | Behavior::ScanParent));
        s
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (start, end) = self.scan_window;
        if self.duration == 0 {
            return Err(ScenarioError::Config("duration must be >= 1".into()));
        }
        if !(start < end && end <= self.duration) {
            return Err(ScenarioError::Config(format!(
                "scan window [{start}, {end}) must be non-empty and inside [0, {})",
                self.duration
            )));
        }
        let scanners = self
            .processes
            .iter()
            .filter(|p| p.behavior == Behavior::Scanner)
            .count();
        if scanners > 1 && !self.allow_multiple_scanners {
            return Err(ScenarioError::Config(format!(
                "{scanners} scanners configured; expected at most one"
            )));
        }
        let mut ids: Vec<_> = self.processes.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ScenarioError::Config("process ids must be unique".into()));
        }
        let (lo, hi) = self.burst_length;
        if lo == 0 || lo > hi || !(0.0..=1.0).contains(&self.burst_probability) {
            return Err(ScenarioError::Config("invalid burst parameters".into()));
        }
        if !(self.signal_max > 0.0 && self.packet_ceiling > 0.0 && self.error_ceiling > 0.0) {
            return Err(ScenarioError::Config("signal scales must be > 0".into()));
        }
        for r in [
            self.steady,
            self.bursty_idle,
            self.bursty_active,
            self.scanner,
            self.parent_idle,
            self.parent_active,
        ] {
            let ok = [r.antigen, r.packets, r.errors].iter().all(|v| v.is_finite() && *v >= 0.0)
                && (0.0..=1.0).contains(&r.jitter);
            if !ok {
                return Err(ScenarioError::Config(
                    "rates must be >= 0 and jitter within [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Labels {
        Labels {
            rows: self
                .processes
                .iter()
                .map(|p| (p.id.to_string(), p.behavior.label()))
                .collect(),
        }
    }
}

/// Generated traces plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTraces {
    pub antigen: Vec<AntigenEvent>,
    pub signals: Vec<SignalSample>,
    pub labels: Labels,
}

pub const ANTIGEN_FILE: &str = "antigen.trace";
pub const SIGNAL_FILE: &str = "signal.trace";
pub const LABELS_FILE: &str = "labels.csv";

impl GeneratedTraces {
    /// Writes `antigen.trace`, `signal.trace` and `labels.csv` into `dir`,
    /// creating it if needed.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ScenarioError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let paths = vec![dir.join(ANTIGEN_FILE), dir.join(SIGNAL_FILE), dir.join(LABELS_FILE)];
        write_trace(&paths[0], &TraceFile::antigen(self.antigen.iter().copied()))?;
        write_trace(&paths[1], &TraceFile::signal(self.signals.iter().copied()))?;
        self.labels.write(&paths[2])?;
        Ok(paths)
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("mean is positive and finite");
    d.sample(rng) as u64
}

fn jittered<R: Rng>(rng: &mut R, mean: f64, jitter: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    if jitter <= 0.0 {
        return mean;
    }
    mean * rng.random_range((1.0 - jitter)..=(1.0 + jitter))
}

/// Generates the ping-scan traces.
///
/// Danger is the packet rate and PAMP the unreachable-error rate, each scaled
/// to `[0, signal_max]`. Safe is `signal_max / (1 + |danger change|)`, high
/// when traffic is steady. Inflammation is always 0.
pub fn gen_ping_scan(scenario: &PingScanScenario, seed: u64) -> Result<GeneratedTraces, ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (start, end) = scenario.scan_window;
    let max = scenario.signal_max;
    let mut burst_left: Vec<Tick> = vec![0; scenario.processes.len()];
    let mut antigen = Vec::new();
    let mut signals = Vec::with_capacity(scenario.duration as usize);
    let mut prev_danger: Option<f64> = None;
    let mut tick_events: Vec<AntigenType> = Vec::new();

    for t in 0..scenario.duration {
        let scanning = (start..end).contains(&t);
        let (mut packets, mut errors) = (0.0, 0.0);
        tick_events.clear();
        for (i, p) in scenario.processes.iter().enumerate() {
            let rates = match p.behavior {
                Behavior::NormalSteady => Some(scenario.steady),
                Behavior::NormalBursty => {
                    if burst_left[i] == 0 && rng.random_bool(scenario.burst_probability) {
                        let (lo, hi) = scenario.burst_length;
                        burst_left[i] = rng.random_range(lo..=hi);
                    }
                    if burst_left[i] > 0 {
                        burst_left[i] -= 1;
                        Some(scenario.bursty_active)
                    } else {
                        Some(scenario.bursty_idle)
                    }
                }
                Behavior::Scanner => scanning.then_some(scenario.scanner),
                Behavior::ScanParent => Some(if scanning {
                    scenario.parent_active
                } else {
                    scenario.parent_idle
                }),
            };
            let Some(r) = rates else { continue };
            packets += jittered(&mut rng, r.packets, r.jitter);
            errors += jittered(&mut rng, r.errors, r.jitter);
            let n = poisson(&mut rng, r.antigen);
            tick_events.extend(std::iter::repeat_n(p.id, n as usize));
        }
        tick_events.shuffle(&mut rng);
        antigen.extend(tick_events.iter().map(|&id| AntigenEvent::new(id, t)));

        let danger = (packets * max / scenario.packet_ceiling).clamp(0.0, max);
        let pamp = (errors * max / scenario.error_ceiling).clamp(0.0, max);
        let change = prev_danger.map_or(0.0, |prev| (danger - prev).abs());
        let safe = max / (1.0 + change);
        prev_danger = Some(danger);
        signals.push(SignalSample::new(pamp, danger, safe, 0.0, t));
    }
    Ok(GeneratedTraces {
        antigen,
        signals,
        labels: scenario.labels(),
    })
}

/// Parameters for labelled syscall sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionScenario {
    /// Normal sessions concatenated into the training traces.
    pub n_training: usize,
    pub n_normal: usize,
    pub n_anomalous: usize,
    pub session_length: Tick,
    pub antigen_domain: u32,
    pub normal_syscalls: Vec<AntigenType>,
    /// Mean syscalls per tick.
    pub syscall_rate: f64,
    pub signal_domains: [u32; 3],
    /// Half-open normal value range per signal channel.
    pub normal_signal_ranges: [(u32, u32); 3],
    /// Candidates for injected syscalls; must lie outside the normal set.
    pub injected_syscalls: Vec<AntigenType>,
    /// Consecutive ticks carrying the injected anomaly.
    pub injection_length: Tick,
}

impl Default for SessionScenario {
    fn default() -> Self {
        Self {
            n_training: 10,
            n_normal: 20,
            n_anomalous: 10,
            session_length: 200,
            antigen_domain: 256,
            normal_syscalls: (0..100).collect(),
            syscall_rate: 3.0,
            signal_domains: [256; 3],
            normal_signal_ranges: [(20, 80), (10, 60), (0, 40)],
            injected_syscalls: (200..256).collect(),
            injection_length: 5,
        }
    }
}

impl SessionScenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.normal_syscalls.is_empty() {
            return Err(ScenarioError::Config("normal syscall set is empty".into()));
        }
        if let Some(&s) = self.normal_syscalls.iter().find(|&&s| s >= self.antigen_domain) {
            return Err(ScenarioError::Config(format!(
                "normal syscall {s} outside antigen domain {}",
                self.antigen_domain
            )));
        }
        let mut distinct = self.normal_syscalls.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() as u64 >= u64::from(self.antigen_domain) {
            return Err(ScenarioError::Inseparable(
                "normal syscall set equals the antigen domain".into(),
            ));
        }
        if self.n_training == 0 || self.session_length == 0 || self.injection_length == 0 {
            return Err(ScenarioError::Config(
                "n_training, session_length and injection_length must be >= 1".into(),
            ));
        }
        if self.injection_length > self.session_length {
            return Err(ScenarioError::Config("injection longer than a session".into()));
        }
        if !(self.syscall_rate.is_finite() && self.syscall_rate >= 0.0) {
            return Err(ScenarioError::Config("syscall_rate must be >= 0".into()));
        }
        for (c, &(lo, hi)) in self.normal_signal_ranges.iter().enumerate() {
            if !(lo < hi && hi <= self.signal_domains[c]) {
                return Err(ScenarioError::Config(format!(
                    "normal range of channel {c} must be non-empty and inside its domain"
                )));
            }
        }
        if self.n_anomalous > 0 {
            if self.injected_syscalls.is_empty() {
                return Err(ScenarioError::Config("no injected syscalls configured".into()));
            }
            for &s in &self.injected_syscalls {
                if s >= self.antigen_domain || distinct.binary_search(&s).is_ok() {
                    return Err(ScenarioError::Config(format!(
                        "injected syscall {s} must be inside the domain and outside the normal set"
                    )));
                }
            }
            let room = (0..3).any(|c| self.normal_signal_ranges[c].1 < self.signal_domains[c]);
            if !room {
                return Err(ScenarioError::Inseparable(
                    "normal signal ranges leave no out-of-range values".into(),
                ));
            }
        }
        Ok(())
    }

    fn largest_normal_span(&self) -> u64 {
        let widths = self.normal_signal_ranges.iter().map(|(lo, hi)| u64::from(hi - lo));
        widths.chain([self.normal_syscalls.len() as u64]).max().unwrap_or(1)
    }
}

/// One session's antigen and signal streams, ticks starting at 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Session {
    pub antigen: Vec<AntigenEvent>,
    pub signals: Vec<SignalSample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSession {
    pub name: String,
    pub label: Label,
    pub session: Session,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSet {
    pub training: Session,
    pub sessions: Vec<LabelledSession>,
}

pub const TRAINING_ANTIGEN_FILE: &str = "training.antigen.trace";
pub const TRAINING_SIGNAL_FILE: &str = "training.signal.trace";
pub const SESSIONS_DIR: &str = "sessions";

impl SessionSet {
    pub fn labels(&self) -> Labels {
        Labels {
            rows: self
                .sessions
                .iter()
                .map(|s| (s.name.clone(), s.label))
                .collect(),
        }
    }

    /// Writes training traces, per-session traces under `sessions/` and
    /// `labels.csv`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ScenarioError> {
        let dir = dir.as_ref();
        let sessions_dir = dir.join(SESSIONS_DIR);
        fs::create_dir_all(&sessions_dir).map_err(io_err(&sessions_dir))?;
        let mut paths = vec![dir.join(TRAINING_ANTIGEN_FILE), dir.join(TRAINING_SIGNAL_FILE)];
        write_trace(&paths[0], &TraceFile::antigen(self.training.antigen.iter().copied()))?;
        write_trace(&paths[1], &TraceFile::signal(self.training.signals.iter().copied()))?;
        for s in &self.sessions {
            let a = sessions_dir.join(format!("{}.antigen.trace", s.name));
            let g = sessions_dir.join(format!("{}.signal.trace", s.name));
            write_trace(&a, &TraceFile::antigen(s.session.antigen.iter().copied()))?;
            write_trace(&g, &TraceFile::signal(s.session.signals.iter().copied()))?;
            paths.push(a);
            paths.push(g);
        }
        let labels = dir.join(LABELS_FILE);
        self.labels().write(&labels)?;
        paths.push(labels);
        Ok(paths)
    }
}

/// Reads every `<name>.antigen.trace` / `<name>.signal.trace` pair in `dir`,
/// sorted by name.
pub fn read_session_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, Session)>, ScenarioError> {
    let dir = dir.as_ref();
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            e.file_name()
                .to_str()
                .and_then(|n| n.strip_suffix(".antigen.trace"))
                .map(str::to_string)
        })
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let antigen = read_trace(dir.join(format!("{name}.antigen.trace")))?;
        let signals = read_trace(dir.join(format!("{name}.signal.trace")))?;
        out.push((
            name,
            Session {
                antigen: antigen.antigen_events(),
                signals: signals.signal_samples(),
            },
        ));
    }
    Ok(out)
}

fn normal_tick<R: Rng>(
    scenario: &SessionScenario,
    rng: &mut R,
    t: Tick,
    session: &mut Session,
) {
    let n = poisson(rng, scenario.syscall_rate);
    for _ in 0..n {
        let s = scenario.normal_syscalls[rng.random_range(0..scenario.normal_syscalls.len())];
        session.antigen.push(AntigenEvent::new(s, t));
    }
    let v: [f64; 3] = std::array::from_fn(|c| {
        let (lo, hi) = scenario.normal_signal_ranges[c];
        f64::from(rng.random_range(lo..hi))
    });
    session.signals.push(SignalSample::new(v[0], v[1], v[2], 0.0, t));
}

fn normal_session<R: Rng>(scenario: &SessionScenario, rng: &mut R) -> Session {
    let mut s = Session::default();
    for t in 0..scenario.session_length {
        normal_tick(scenario, rng, t, &mut s);
    }
    s
}

/// Generates training traces (normal behaviour only) and a labelled test set.
///
/// The training traces open with a sweep over every normal syscall and every
/// normal signal value, so the trained complements never contain a value a
/// normal session can produce.
pub fn gen_sessions(scenario: &SessionScenario, seed: u64) -> Result<SessionSet, ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut training = Session::default();
    let sweep = scenario.largest_normal_span();
    for k in 0..sweep {
        let syscall = scenario.normal_syscalls[(k as usize) % scenario.normal_syscalls.len()];
        training.antigen.push(AntigenEvent::new(syscall, k));
        let v: [f64; 3] = std::array::from_fn(|c| {
            let (lo, hi) = scenario.normal_signal_ranges[c];
            f64::from(lo + (k % u64::from(hi - lo)) as u32)
        });
        training.signals.push(SignalSample::new(v[0], v[1], v[2], 0.0, k));
    }
    let mut offset = sweep;
    for _ in 0..scenario.n_training {
        let s = normal_session(scenario, &mut rng);
        training
            .antigen
            .extend(s.antigen.iter().map(|e| AntigenEvent::new(e.antigen_type, e.tick + offset)));
        training.signals.extend(s.signals.iter().map(|x| SignalSample { tick: x.tick + offset, ..*x }));
        offset += scenario.session_length;
    }

    let total = scenario.n_normal + scenario.n_anomalous;
    let mut plan: Vec<Label> = std::iter::repeat_n(Label::Normal, scenario.n_normal)
        .chain(std::iter::repeat_n(Label::Anomalous, scenario.n_anomalous))
        .collect();
    plan.shuffle(&mut rng);

    let open_channels: Vec<usize> = (0..3)
        .filter(|&c| scenario.normal_signal_ranges[c].1 < scenario.signal_domains[c])
        .collect();
    let mut sessions = Vec::with_capacity(total);
    for (i, label) in plan.into_iter().enumerate() {
        let mut session = normal_session(scenario, &mut rng);
        if label == Label::Anomalous {
            inject(scenario, &open_channels, &mut rng, &mut session);
        }
        sessions.push(LabelledSession {
            name: format!("session-{i:04}"),
            label,
            session,
        });
    }
    Ok(SessionSet { training, sessions })
}

fn inject<R: Rng>(
    scenario: &SessionScenario,
    open_channels: &[usize],
    rng: &mut R,
    session: &mut Session,
) {
    let latest_start = scenario.session_length - scenario.injection_length;
    let start = rng.random_range(0..=latest_start);
    let syscall = scenario.injected_syscalls[rng.random_range(0..scenario.injected_syscalls.len())];
    let channel = open_channels[rng.random_range(0..open_channels.len())];
    let value = f64::from(rng.random_range(scenario.normal_signal_ranges[channel].1..scenario.signal_domains[channel]));
    for t in start..start + scenario.injection_length {
        // the injected call is the first event of its tick
        let at = session.antigen.partition_point(|e| e.tick < t);
        session.antigen.insert(at, AntigenEvent::new(syscall, t));
        let sample = &mut session.signals[t as usize];
        match channel {
            0 => sample.pamp = value,
            1 => sample.danger = value,
            _ => sample.safe = value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn no_scanner_means_no_pamp() {
        let g = gen_ping_scan(&PingScanScenario::without_scanner(), 1).unwrap();
        assert!(g.signals.iter().all(|s| s.pamp == 0.0));
        let mean_safe = g.signals.iter().map(|s| s.safe).sum::<f64>() / g.signals.len() as f64;
        assert!(mean_safe > 50.0, "mean safe {mean_safe}");
        assert!(g.labels.rows.iter().all(|(_, l)| *l == Label::Normal));
    }

    #[test]
    fn default_labels_two_and_two() {
        let labels = PingScanScenario::default().labels();
        let anomalous: Vec<_> = labels
            .rows
            .iter()
            .filter(|(_, l)| *l == Label::Anomalous)
            .map(|(e, _)| e.as_str())
            .collect();
        assert_eq!(anomalous, vec!["0", "1"]);
        assert_eq!(labels.rows.len(), 4);
    }

    #[test]
    fn ping_scan_is_deterministic_and_well_formed() {
        let s = PingScanScenario::default();
        let a = gen_ping_scan(&s, 7).unwrap();
        assert_eq!(a, gen_ping_scan(&s, 7).unwrap());
        assert_ne!(a.antigen, gen_ping_scan(&s, 8).unwrap().antigen);
        assert_eq!(a.signals.len(), 1000);
        assert!(a.antigen.windows(2).all(|w| w[0].tick <= w[1].tick));
        assert!(a.signals.iter().all(|x| x.validate(100.0).is_ok() && x.inflammation == 0.0));
        // the scanner only acts inside its window
        assert!(a
            .antigen
            .iter()
            .filter(|e| e.antigen_type == 0)
            .all(|e| (400..700).contains(&e.tick)));
    }

    #[test]
    fn safe_falls_when_danger_changes() {
        let g = gen_ping_scan(&PingScanScenario::default(), 3).unwrap();
        let (mut changes, mut safes) = (vec![], vec![]);
        for w in g.signals[400..700].windows(2) {
            changes.push((w[1].danger - w[0].danger).abs());
            safes.push(w[1].safe);
        }
        let n = changes.len() as f64;
        let (mc, ms) = (changes.iter().sum::<f64>() / n, safes.iter().sum::<f64>() / n);
        let cov: f64 = changes.iter().zip(&safes).map(|(c, s)| (c - mc) * (s - ms)).sum::<f64>() / n;
        assert!(cov < 0.0, "covariance {cov}");
    }

    #[test]
    fn scan_window_outside_duration_rejected() {
        let s = PingScanScenario { scan_window: (900, 1200), ..Default::default() };
        assert!(matches!(gen_ping_scan(&s, 0), Err(ScenarioError::Config(_))));
        let mut two = PingScanScenario::default();
        two.processes[1].behavior = Behavior::Scanner;
        assert!(two.validate().is_err());
        two.allow_multiple_scanners = true;
        assert!(two.validate().is_ok());
    }

    #[test]
    fn sessions_respect_injection_rules() {
        let sc = SessionScenario::default();
        let set = gen_sessions(&sc, 11).unwrap();
        assert_eq!(set.sessions.len(), 30);
        let normal: BTreeSet<_> = sc.normal_syscalls.iter().copied().collect();
        let in_range = |s: &SignalSample| {
            let v = [s.pamp, s.danger, s.safe];
            (0..3).all(|c| {
                let (lo, hi) = sc.normal_signal_ranges[c];
                v[c] >= f64::from(lo) && v[c] < f64::from(hi)
            })
        };
        for s in &set.sessions {
            let odd_syscall = s.session.antigen.iter().any(|e| !normal.contains(&e.antigen_type));
            let odd_signal = s.session.signals.iter().any(|x| !in_range(x));
            let anomalous = s.label == Label::Anomalous;
            assert_eq!(odd_syscall, anomalous, "{}", s.name);
            assert_eq!(odd_signal, anomalous, "{}", s.name);
            assert!(s.session.antigen.windows(2).all(|w| w[0].tick <= w[1].tick));
        }
        assert!(set.training.antigen.iter().all(|e| normal.contains(&e.antigen_type)));
        assert!(set.training.signals.iter().all(in_range));
        assert_eq!(set, gen_sessions(&sc, 11).unwrap());
    }

    #[test]
    fn zero_anomalous_means_all_normal() {
        let sc = SessionScenario { n_anomalous: 0, ..Default::default() };
        let set = gen_sessions(&sc, 2).unwrap();
        assert!(set.sessions.iter().all(|s| s.label == Label::Normal));
    }

    #[test]
    fn saturating_normal_set_is_inseparable() {
        let sc = SessionScenario {
            normal_syscalls: (0..256).collect(),
            ..Default::default()
        };
        assert!(matches!(gen_sessions(&sc, 0), Err(ScenarioError::Inseparable(_))));
    }

    #[test]
    fn labels_csv_round_trip_and_errors() {
        let l = Labels {
            rows: vec![("a".into(), Label::Normal), ("7".into(), Label::Anomalous)],
        };
        assert_eq!(Labels::parse_csv(&l.to_csv()).unwrap(), l);
        assert!(Labels::parse_csv("entity,label\nx,maybe\n").is_err());
        assert!(Labels::parse_csv("entity,label\nnocomma\n").is_err());
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let sc = SessionScenario { n_training: 1, n_normal: 2, n_anomalous: 1, ..Default::default() };
        let set = gen_sessions(&sc, 5).unwrap();
        set.write_to(dir.path()).unwrap();
        let back = read_session_dir(dir.path().join(SESSIONS_DIR)).unwrap();
        assert_eq!(back.len(), 3);
        for ((name, session), orig) in back.iter().zip(&set.sessions) {
            assert_eq!(name, &orig.name);
            assert_eq!(session, &orig.session);
        }
        assert_eq!(Labels::read(dir.path().join(LABELS_FILE)).unwrap(), set.labels());

        let g = gen_ping_scan(&PingScanScenario::default(), 1).unwrap();
        let files = g.write_to(dir.path().join("new/nested")).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|p| p.exists()));
    }
}
