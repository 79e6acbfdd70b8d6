//! Result files. Every file carries the resolved configuration and master
//! seed: CSVs as leading `#` lines, JSON as fields.

use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::CheckReport;
use crate::engine::{ExperimentSummary, TrialResult, SEED_MIXER};
use crate::error::{Error, Result};

/// Reproducibility metadata attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub config: Value,
    pub master_seed: u64,
    pub seed_mixer: &'static str,
    pub overrides: Vec<String>,
}

impl Metadata {
    pub fn new(config: &impl Serialize, master_seed: u64, overrides: &[String]) -> Result<Self> {
        Ok(Self {
            config: serde_json::to_value(config).map_err(|e| Error::config(e.to_string()))?,
            master_seed,
            seed_mixer: SEED_MIXER,
            overrides: overrides.to_vec(),
        })
    }

    pub fn write_comment_lines<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# master_seed: {}", self.master_seed)?;
        writeln!(w, "# seed_mixer: {}", self.seed_mixer)?;
        writeln!(w, "# overrides: {}", json!(self.overrides))?;
        writeln!(w, "# config: {}", self.config)?;
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `trial,seed,delivered,delivery_time,hops,t1`; undelivered trials leave
/// the time fields empty.
pub fn write_results_csv<W: Write>(mut w: W, results: &[TrialResult], meta: &Metadata) -> Result<()> {
    meta.write_comment_lines(&mut w)?;
    writeln!(w, "trial,seed,delivered,delivery_time,hops,t1")?;
    for (i, r) in results.iter().enumerate() {
        writeln!(
            w,
            "{i},{},{},{},{},{}",
            r.seed,
            r.delivered,
            opt(r.delivery_time),
            r.hops,
            opt(r.t1)
        )?;
    }
    Ok(())
}

pub fn summary_json(summary: &ExperimentSummary, meta: &Metadata) -> Value {
    json!({
        "mean_delay": summary.mean_delay,
        "ci_low": summary.ci_low,
        "ci_high": summary.ci_high,
        "std_error": summary.std_error,
        "delivery_rate": summary.delivery_rate,
        "delivered": summary.delivered,
        "trials": summary.trials,
        "config_echo": meta.config,
        "overrides": meta.overrides,
        "master_seed": meta.master_seed,
        "seed_mixer": meta.seed_mixer,
    })
}

pub fn report_json(reports: &[CheckReport], meta: &Metadata) -> Value {
    json!({
        "passed": reports.iter().all(|r| r.passed),
        "checks": reports,
        "config_echo": meta.config,
        "overrides": meta.overrides,
        "master_seed": meta.master_seed,
        "seed_mixer": meta.seed_mixer,
    })
}

pub fn write_json<W: Write>(mut w: W, value: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    Ok(())
}
