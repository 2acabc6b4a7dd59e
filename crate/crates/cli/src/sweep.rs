//! One-parameter sensitivity sweeps.
//!
//! Each point is an isolated run with the base seed, evaluated against the
//! data set's labels. Points run in parallel; rows come out sorted by value.

use std::fmt::Write as _;
use std::path::Path;

use immunet::scenario::{
    Labels, Session, ANTIGEN_FILE, LABELS_FILE, SESSIONS_DIR, SIGNAL_FILE, TRAINING_ANTIGEN_FILE,
    TRAINING_SIGNAL_FILE,
};
use immunet::tissue::{AntigenEvent, SignalSample};
use immunet::tlr::{train, TlrModel};
use rayon::prelude::*;

use crate::args::Axis;
use crate::config::{Engine, RunConfig};
use crate::eval::{evaluate, parse_report, EvalReport};
use crate::run::{self, usage};
use crate::CliError;

pub const SWEEP_CSV_HEADER: &str = "value,tp_rate,fp_rate,tp,fn,fp,tn,config_hash";

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::PopulationSize => "population_size",
            Axis::AntigenVectorSize => "antigen_vector_size",
            Axis::ThresholdRange => "threshold_range",
            Axis::WeightsPerturbation => "weights-perturbation",
            Axis::DcLifespan => "dc_lifespan",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Axis::PopulationSize | Axis::AntigenVectorSize | Axis::DcLifespan)
    }

    /// `base` with this axis set to `value`. `threshold_range` maps `x` to
    /// `[x, 3x]`; `population_size` sets the DC count of either engine.
    pub fn apply(self, base: &RunConfig, value: f64) -> Result<RunConfig, CliError> {
        let engine_err = || {
            CliError::Usage(format!(
                "axis {} does not apply to the {} engine",
                self.name(),
                base.engine
            ))
        };
        if self.is_integer() && !(value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
            return Err(CliError::Usage(format!(
                "axis {} needs non-negative integer values, got {value}",
                self.name()
            )));
        }
        let mut cfg = base.clone();
        match (self, base.engine) {
            (Axis::PopulationSize, Engine::Dca) => cfg.population_size = value as usize,
            (Axis::PopulationSize, Engine::Tlr) => cfg.dc_population = value as usize,
            (Axis::AntigenVectorSize, Engine::Dca) => cfg.antigen_vector_size = value as usize,
            (Axis::ThresholdRange, Engine::Dca) => cfg.threshold_range = (value, 3.0 * value),
            (Axis::WeightsPerturbation, Engine::Dca) => cfg.weights_perturbation = value,
            (Axis::DcLifespan, Engine::Tlr) => cfg.dc_lifespan = value as u32,
            _ => return Err(engine_err()),
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `--values a,b,c`.
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("bad sweep value '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("sweep has no values".into()));
    }
    Ok(values)
}

/// Parses an inclusive `lo:hi:step` range.
pub fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("bad range '{text}' (expected lo:hi:step)"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if step <= 0.0 {
        return Err(CliError::Usage(format!("range step must be > 0, got {step}")));
    }
    if lo > hi {
        return Err(CliError::Usage(format!("range '{text}' is empty")));
    }
    let slack = step * 1e-9;
    let values: Vec<f64> = (0u64..)
        .map(|k| lo + k as f64 * step)
        .take_while(|v| *v <= hi + slack)
        .map(|v| (v * 1e12).round() / 1e12)
        .collect();
    if values.len() > 1_000_000 {
        return Err(CliError::Usage(format!("range '{text}' has too many points")));
    }
    Ok(values)
}

/// Inputs shared by every point of a sweep.
#[derive(Debug, Clone)]
pub enum SweepData {
    Dca {
        antigen: Vec<AntigenEvent>,
        signals: Vec<SignalSample>,
        labels: Labels,
    },
    Tlr {
        model: TlrModel,
        sessions: Vec<(String, Session)>,
        labels: Labels,
    },
}

impl SweepData {
    /// Loads a directory written by `generate ping-scan` (dca) or
    /// `generate sessions` (tlr). The TLR model is trained from the
    /// directory's training traces.
    pub fn load(config: &RunConfig, dir: &Path) -> Result<Self, CliError> {
        let labels = Labels::read(dir.join(LABELS_FILE)).map_err(usage)?;
        match config.engine {
            Engine::Dca => {
                let (antigen, signals) =
                    run::load_traces(config, &dir.join(ANTIGEN_FILE), &dir.join(SIGNAL_FILE))?;
                Ok(SweepData::Dca { antigen, signals, labels })
            }
            Engine::Tlr => {
                let domains = config.tlr_domains()?;
                let (antigen, signals) = run::load_training(
                    config,
                    &dir.join(TRAINING_ANTIGEN_FILE),
                    &dir.join(TRAINING_SIGNAL_FILE),
                )?;
                let model = train(&antigen, &signals, domains).map_err(usage)?;
                let sessions = run::load_sessions(config, &dir.join(SESSIONS_DIR))?;
                Ok(SweepData::Tlr { model, sessions, labels })
            }
        }
    }

    pub fn labels(&self) -> &Labels {
        match self {
            SweepData::Dca { labels, .. } | SweepData::Tlr { labels, .. } => labels,
        }
    }
}

/// Runs `config` over `data` and scores the rendered report.
pub fn run_point(config: &RunConfig, data: &SweepData, unscored_as_negative: bool) -> Result<EvalReport, CliError> {
    let report = match data {
        SweepData::Dca { antigen, signals, .. } => {
            let r = run::run_dca(config, antigen, signals)?;
            run::dca_report(config, &r)
        }
        SweepData::Tlr { model, sessions, .. } => {
            let v = run::run_tlr(config, model, sessions)?;
            run::tlr_report(config, run::total_ticks(sessions), &v)
        }
    };
    evaluate(&parse_report(&report)?, data.labels(), unscored_as_negative)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub config_hash: String,
    pub eval: EvalReport,
}

pub fn sweep(
    base: &RunConfig,
    axis: Axis,
    values: &[f64],
    data: &SweepData,
    unscored_as_negative: bool,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep has no values".into()));
    }
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    let points: Vec<(f64, RunConfig)> = values
        .iter()
        .map(|&v| axis.apply(base, v).map(|c| (v, c)))
        .collect::<Result<_, _>>()?;
    points
        .par_iter()
        .map(|(value, cfg)| {
            Ok(SweepRow {
                value: *value,
                config_hash: cfg.hash(),
                eval: run_point(cfg, data, unscored_as_negative)?,
            })
        })
        .collect()
}

pub fn render_sweep(base: &RunConfig, axis: Axis, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    writeln!(out, "# axis: {}", axis.name()).expect("writing to a String cannot fail");
    writeln!(out, "# engine: {}", base.engine).expect("writing to a String cannot fail");
    writeln!(out, "# seed: {}", base.seed).expect("writing to a String cannot fail");
    writeln!(out, "# config-hash: {}", base.hash()).expect("writing to a String cannot fail");
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let e = &r.eval;
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{},{},{}",
            r.value, e.tp_rate, e.fp_rate, e.tp, e.fn_, e.fp, e.tn, r.config_hash
        )
        .expect("writing to a String cannot fail");
    }
    out
}
