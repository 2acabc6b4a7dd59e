//! Versioned key-value run configuration.
//!
//! ```text
//! immunet-config v1
//! engine = dca
//! population_size = 100
//! weights.mature = 2,1,-3
//! ```
//!
//! Unknown keys are rejected. Every key has a default, so a file may list
//! only what it changes. The canonical rendering (all keys, fixed order)
//! is hashed to tie reports to the configuration that produced them.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use immunet::dca::{DcaConfig, Output, WeightMatrix};
use immunet::tissue::{PopulationConfig, TissueConfig};
use immunet::tlr::{MatchScope, ReceptorMode, TlrConfig, TlrDomains};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const CONFIG_HEADER: &str = "immunet-config v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Dca,
    Tlr,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Dca => "dca",
            Engine::Tlr => "tlr",
        }
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dca" => Ok(Engine::Dca),
            "tlr" => Ok(Engine::Tlr),
            other => Err(format!("unknown engine '{other}' (expected dca or tlr)")),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub engine: Engine,
    pub seed: u64,
    pub antigen_domain: u32,
    pub store_capacity: usize,
    pub signal_max: f64,
    pub population_size: usize,
    pub cell_update_period: u64,
    pub signal_update_period: u64,
    pub weights: WeightMatrix,
    /// Relative weight perturbation; each weight is scaled by `1 +/- p`.
    pub weights_perturbation: f64,
    pub perturbation_seed: u64,
    pub threshold_range: (f64, f64),
    pub antigen_vector_size: usize,
    pub antigen_per_update: usize,
    pub mcav_threshold: f64,
    pub dc_population: usize,
    pub tcell_population: usize,
    pub dc_lifespan: u32,
    pub receptors_per_dc: usize,
    pub signal_domains: [u32; 3],
    pub match_scope: MatchScope,
    pub receptor_mode: ReceptorMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        let dca = DcaConfig::default();
        let tlr = TlrConfig::default();
        let tissue = TissueConfig::default();
        let pop = PopulationConfig::default();
        Self {
            engine: Engine::Dca,
            seed: 0,
            antigen_domain: tissue.antigen_domain,
            store_capacity: tissue.store_capacity,
            signal_max: tissue.signal_max,
            population_size: pop.population_size,
            cell_update_period: pop.cell_update_period,
            signal_update_period: pop.signal_update_period,
            weights: dca.weights,
            weights_perturbation: 0.0,
            perturbation_seed: 0,
            threshold_range: dca.threshold_range,
            antigen_vector_size: dca.antigen_vector_size,
            antigen_per_update: dca.antigen_per_update,
            mcav_threshold: dca.mcav_threshold,
            dc_population: tlr.dc_population,
            tcell_population: tlr.tcell_population,
            dc_lifespan: tlr.dc_lifespan,
            receptors_per_dc: tlr.receptors_per_dc,
            signal_domains: TlrDomains::default().signal,
            match_scope: tlr.match_scope,
            receptor_mode: tlr.receptor_mode,
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Usage(format!("config key '{key}' = '{value}': {why}"))
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn parse_triple<T: FromStr + Copy>(key: &str, value: &str) -> Result<[T; 3], CliError>
where
    T::Err: fmt::Display,
{
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [one] => Ok([parse_num(key, one)?; 3]),
        [a, b, c] => Ok([parse_num(key, a)?, parse_num(key, b)?, parse_num(key, c)?]),
        _ => Err(bad(key, value, "expected one value or three comma-separated values")),
    }
}

fn join3<T: fmt::Display>(v: [T; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

impl RunConfig {
    pub fn with_engine(engine: Engine) -> Self {
        Self {
            engine,
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut saw_header = false;
        let (mut csm, mut semi, mut mature) = (
            cfg.weights.row(Output::Csm),
            cfg.weights.row(Output::Semi),
            cfg.weights.row(Output::Mature),
        );
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !saw_header {
                if line != CONFIG_HEADER {
                    return Err(CliError::Usage(format!(
                        "config line {}: expected header '{CONFIG_HEADER}'",
                        i + 1
                    )));
                }
                saw_header = true;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected 'key = value'", i + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "engine" => cfg.engine = value.parse().map_err(|e| bad(key, value, e))?,
                "seed" => cfg.seed = parse_num(key, value)?,
                "antigen_domain" => cfg.antigen_domain = parse_num(key, value)?,
                "store_capacity" => cfg.store_capacity = parse_num(key, value)?,
                "signal_max" => cfg.signal_max = parse_num(key, value)?,
                "population_size" => cfg.population_size = parse_num(key, value)?,
                "cell_update_period" => cfg.cell_update_period = parse_num(key, value)?,
                "signal_update_period" => cfg.signal_update_period = parse_num(key, value)?,
                "weights.csm" => csm = parse_triple(key, value)?,
                "weights.semi" => semi = parse_triple(key, value)?,
                "weights.mature" => mature = parse_triple(key, value)?,
                "weights_perturbation" => cfg.weights_perturbation = parse_num(key, value)?,
                "perturbation_seed" => cfg.perturbation_seed = parse_num(key, value)?,
                "threshold_lo" => cfg.threshold_range.0 = parse_num(key, value)?,
                "threshold_hi" => cfg.threshold_range.1 = parse_num(key, value)?,
                "antigen_vector_size" => cfg.antigen_vector_size = parse_num(key, value)?,
                "antigen_per_update" => cfg.antigen_per_update = parse_num(key, value)?,
                "mcav_threshold" => cfg.mcav_threshold = parse_num(key, value)?,
                "dc_population" => cfg.dc_population = parse_num(key, value)?,
                "tcell_population" => cfg.tcell_population = parse_num(key, value)?,
                "dc_lifespan" => cfg.dc_lifespan = parse_num(key, value)?,
                "receptors_per_dc" => cfg.receptors_per_dc = parse_num(key, value)?,
                "signal_domain" => cfg.signal_domains = parse_triple(key, value)?,
                "match_scope" => {
                    cfg.match_scope = match value {
                        "per-channel" => MatchScope::PerChannel,
                        "global" => MatchScope::Global,
                        _ => return Err(bad(key, value, "expected per-channel or global")),
                    }
                }
                "receptor_mode" => {
                    cfg.receptor_mode = match value {
                        "any-infectious" => ReceptorMode::AnyInfectious,
                        "carried" => ReceptorMode::Carried,
                        _ => return Err(bad(key, value, "expected any-infectious or carried")),
                    }
                }
                _ => return Err(CliError::Usage(format!("config line {}: unknown key '{key}'", i + 1))),
            }
        }
        if !saw_header {
            return Err(CliError::Usage(format!("config missing header '{CONFIG_HEADER}'")));
        }
        cfg.weights = WeightMatrix::new(csm, semi, mature).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key in a fixed order. Parsing this text yields `self` again.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("writing to a String cannot fail");
        };
        kv("engine", self.engine.to_string());
        kv("seed", self.seed.to_string());
        kv("antigen_domain", self.antigen_domain.to_string());
        kv("store_capacity", self.store_capacity.to_string());
        kv("signal_max", self.signal_max.to_string());
        kv("population_size", self.population_size.to_string());
        kv("cell_update_period", self.cell_update_period.to_string());
        kv("signal_update_period", self.signal_update_period.to_string());
        kv("weights.csm", join3(self.weights.row(Output::Csm)));
        kv("weights.semi", join3(self.weights.row(Output::Semi)));
        kv("weights.mature", join3(self.weights.row(Output::Mature)));
        kv("weights_perturbation", self.weights_perturbation.to_string());
        kv("perturbation_seed", self.perturbation_seed.to_string());
        kv("threshold_lo", self.threshold_range.0.to_string());
        kv("threshold_hi", self.threshold_range.1.to_string());
        kv("antigen_vector_size", self.antigen_vector_size.to_string());
        kv("antigen_per_update", self.antigen_per_update.to_string());
        kv("mcav_threshold", self.mcav_threshold.to_string());
        kv("dc_population", self.dc_population.to_string());
        kv("tcell_population", self.tcell_population.to_string());
        kv("dc_lifespan", self.dc_lifespan.to_string());
        kv("receptors_per_dc", self.receptors_per_dc.to_string());
        kv("signal_domain", join3(self.signal_domains));
        kv(
            "match_scope",
            match self.match_scope {
                MatchScope::PerChannel => "per-channel",
                MatchScope::Global => "global",
            }
            .into(),
        );
        kv(
            "receptor_mode",
            match self.receptor_mode {
                ReceptorMode::AnyInfectious => "any-infectious",
                ReceptorMode::Carried => "carried",
            }
            .into(),
        );
        format!("{CONFIG_HEADER}\n{out}")
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn tissue(&self) -> TissueConfig {
        TissueConfig {
            antigen_domain: self.antigen_domain,
            store_capacity: self.store_capacity,
            signal_max: self.signal_max,
        }
    }

    pub fn population(&self) -> PopulationConfig {
        PopulationConfig {
            population_size: self.population_size,
            cell_update_period: self.cell_update_period,
            signal_update_period: self.signal_update_period,
            rng_seed: self.seed,
        }
    }

    /// Weights after applying the configured perturbation. The sign of each
    /// factor's deviation (+p or -p) comes from `perturbation_seed`.
    pub fn effective_weights(&self) -> Result<WeightMatrix, CliError> {
        let p = self.weights_perturbation;
        if !(p.is_finite() && p.abs() < 1.0) {
            return Err(CliError::Usage(format!("weights_perturbation {p} must lie in (-1, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.perturbation_seed);
        let factors: [[f64; 3]; 3] = std::array::from_fn(|_| {
            std::array::from_fn(|_| if rng.random_bool(0.5) { 1.0 + p } else { 1.0 - p })
        });
        self.weights
            .scaled(factors)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn dca(&self) -> Result<DcaConfig, CliError> {
        let cfg = DcaConfig {
            weights: self.effective_weights()?,
            threshold_range: self.threshold_range,
            antigen_vector_size: self.antigen_vector_size,
            antigen_per_update: self.antigen_per_update,
            mcav_threshold: self.mcav_threshold,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn tlr(&self) -> Result<TlrConfig, CliError> {
        let cfg = TlrConfig {
            dc_population: self.dc_population,
            tcell_population: self.tcell_population,
            dc_lifespan: self.dc_lifespan,
            receptors_per_dc: self.receptors_per_dc,
            rng_seed: self.seed,
            match_scope: self.match_scope,
            receptor_mode: self.receptor_mode,
            store_capacity: self.store_capacity,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn tlr_domains(&self) -> Result<TlrDomains, CliError> {
        let d = TlrDomains {
            antigen: self.antigen_domain,
            signal: self.signal_domains,
        };
        d.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(d)
    }

    /// Validates the shared section plus the section of the selected engine.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tissue()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        match self.engine {
            Engine::Dca => {
                self.population()
                    .validate()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                self.dca()?;
            }
            Engine::Tlr => {
                self.tlr()?;
                self.tlr_domains()?;
            }
        }
        Ok(())
    }
}
