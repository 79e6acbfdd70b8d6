//! TOML experiment configuration with dotted-key overrides.
//!
//! Sections: `experiment`, `rate_model`, `protocol`, `trace`, `output`,
//! `sweep`. Key names are listed in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{EngineMode, ExperimentConfig, PopulationMode};
use crate::error::{Error, Result};
use crate::interest::Scenario;
use crate::meeting::{DeltaSpec, RateModel};
use crate::routing::{Eligibility, ProtocolSpec};

/// Default IB threshold numerator: `gamma = 0.29 / (m − 1)`.
pub const DEFAULT_GAMMA_SCALE: f64 = 0.29;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub rate_model: RateModelSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub trace: TraceSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub n: usize,
    pub m: usize,
    pub scenario: Scenario,
    pub trials: usize,
    pub ttl: Option<f64>,
    pub master_seed: u64,
    pub population: PopulationMode,
    pub engine: EngineMode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n: 1000,
            m: 4,
            scenario: Scenario::WorstCase,
            trials: 1000,
            ttl: None,
            master_seed: 1,
            population: PopulationMode::PerTrial,
            engine: EngineMode::Resample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    SocialOblivious,
    InterestBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateModelSection {
    pub kind: RateKind,
    pub lambda: f64,
    /// Fixed floor rate; when absent, `delta_c · n^(−delta_beta)`.
    pub delta: Option<f64>,
    pub delta_c: f64,
    pub delta_beta: f64,
}

impl Default for RateModelSection {
    fn default() -> Self {
        Self {
            kind: RateKind::InterestBased,
            lambda: 1.0,
            delta: None,
            delta_c: 1.0,
            delta_beta: 1.0,
        }
    }
}

impl RateModelSection {
    pub fn delta_spec(&self) -> DeltaSpec {
        match self.delta {
            Some(d) => DeltaSpec::Fixed(d),
            None => DeltaSpec::PowerLaw {
                c: self.delta_c,
                beta: self.delta_beta,
            },
        }
    }

    pub fn build(&self, n: usize) -> Result<RateModel> {
        match self.kind {
            RateKind::SocialOblivious => RateModel::social_oblivious(self.lambda),
            RateKind::InterestBased => RateModel::interest_based(self.lambda, self.delta_spec().resolve(n)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    /// `fm`, `ib`, `fm_star`, `mod_ib`, `spray` or `direct`.
    pub name: String,
    /// IB / spray threshold; IB defaults to `0.29 / (m − 1)`.
    pub gamma: Option<f64>,
    pub fallback_time: Option<f64>,
    /// Copy budget; Mod-IB defaults to `m`, others to 2.
    pub copies: Option<u32>,
    pub max_hops: Option<u32>,
    pub eligibility: Option<Eligibility>,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            name: "fm".into(),
            gamma: None,
            fallback_time: None,
            copies: None,
            max_hops: None,
            eligibility: None,
        }
    }
}

impl ProtocolSection {
    pub fn build(&self, m: usize) -> Result<ProtocolSpec> {
        let default_gamma = || DEFAULT_GAMMA_SCALE / (m.max(2) - 1) as f64;
        let spec = match self.name.as_str() {
            "fm" => ProtocolSpec::FirstMeeting,
            "ib" => ProtocolSpec::InterestBased {
                gamma: self.gamma.unwrap_or_else(default_gamma),
                fallback_time: self.fallback_time,
            },
            "fm_star" => ProtocolSpec::FmStar {
                copies: self.copies.unwrap_or(2),
                max_hops: self.max_hops.unwrap_or(2),
            },
            "mod_ib" => ProtocolSpec::ModIb {
                copies: self.copies.unwrap_or(m as u32),
            },
            "spray" => ProtocolSpec::Spray {
                copies: self.copies.unwrap_or(2),
                max_hops: self.max_hops.unwrap_or(2),
                eligibility: self.eligibility.unwrap_or(Eligibility::FirstMeeting),
                gamma: self.gamma.unwrap_or(0.0),
            },
            "direct" => ProtocolSpec::Direct,
            other => {
                return Err(Error::config(format!(
                    "unknown protocol '{other}' (expected fm, ib, fm_star, mod_ib, spray, direct)"
                )))
            }
        };
        spec.validate(m)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    /// Contact trace CSV for `replay`.
    pub path: Option<PathBuf>,
    /// Profile CSV `node_id,c1,...,cm`.
    pub profiles: Option<PathBuf>,
    /// Attribute CSV `node_id,attr1;attr2;...`, used when `profiles` is absent.
    pub attributes: Option<PathBuf>,
    /// Seconds; shorter contacts are dropped before replay.
    pub min_contact: f64,
    /// Messages replayed, with random endpoints and start times.
    pub messages: usize,
    /// Replay TTL in seconds.
    pub ttl: Option<f64>,
    /// Node count for `gen-trace`.
    pub nodes: usize,
    /// Length of a generated trace.
    pub horizon: f64,
    /// Length of each generated contact.
    pub contact_duration: f64,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self {
            path: None,
            profiles: None,
            attributes: None,
            min_contact: crate::trace::DEFAULT_MIN_CONTACT,
            messages: 1000,
            ttl: None,
            nodes: 100,
            horizon: 1.0e4,
            contact_duration: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Axes of a Cartesian sweep; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n: Vec<usize>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub protocol: Vec<String>,
    pub ttl: Vec<f64>,
}

/// One sweep cell: the values taken on each axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub n: usize,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub protocol: String,
    pub ttl: Option<f64>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::with_overrides(text, &[])
    }

    /// Parses `text`, applies `key=value` overrides (dotted keys, TOML values;
    /// bare words are taken as strings), then deserializes.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        // The file alone first, so errors point at its lines.
        toml::from_str::<Config>(text).map_err(|e| Error::config(e.to_string()))?;
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment_config()?.validate()?;
        for name in &self.sweep.protocol {
            let mut p = self.protocol.clone();
            p.name = name.clone();
            p.build(self.experiment.m)?;
        }
        if self.sweep.n.contains(&0) {
            return Err(Error::config("sweep.n values must be positive"));
        }
        Ok(())
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        Ok(ExperimentConfig {
            n: e.n,
            m: e.m,
            scenario: e.scenario,
            rate_model: self.rate_model.build(e.n)?,
            protocol: self.protocol.build(e.m)?,
            trials: e.trials,
            ttl: e.ttl,
            master_seed: e.master_seed,
            population: e.population,
            engine: e.engine,
        })
    }

    /// Cartesian product of the sweep axes, in axis order
    /// n, delta, gamma, protocol, ttl.
    pub fn sweep_cells(&self) -> Vec<SweepCell> {
        fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
            if values.is_empty() {
                vec![base]
            } else {
                values.to_vec()
            }
        }
        let s = &self.sweep;
        let mut cells = Vec::new();
        for &n in &axis(&s.n, self.experiment.n) {
            for &delta in &axis(&s.delta.iter().copied().map(Some).collect::<Vec<_>>(), self.rate_model.delta) {
                for &gamma in &axis(&s.gamma.iter().copied().map(Some).collect::<Vec<_>>(), self.protocol.gamma) {
                    for protocol in &axis(&s.protocol, self.protocol.name.clone()) {
                        for &ttl in &axis(&s.ttl.iter().copied().map(Some).collect::<Vec<_>>(), self.experiment.ttl) {
                            cells.push(SweepCell {
                                n,
                                delta,
                                gamma,
                                protocol: protocol.clone(),
                                ttl,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    /// This configuration with one sweep cell applied.
    pub fn with_cell(&self, cell: &SweepCell) -> Config {
        let mut c = self.clone();
        c.experiment.n = cell.n;
        c.rate_model.delta = cell.delta;
        c.protocol.gamma = cell.gamma;
        c.protocol.name = cell.protocol.clone();
        c.experiment.ttl = cell.ttl;
        c.sweep = SweepSection::default();
        c
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{item}' is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(Error::config(format!("override '{item}' has an empty key")));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
