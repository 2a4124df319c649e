//! Simulation studies: estimation error on a three-level spectrum, the
//! two-class LDA grid, leave-one-out instability, the oracle comparison and
//! runtime measurements.
//!
//! Every repetition draws from its own stream, `derive_seed(seed, coords)`,
//! and per-repetition results are reduced in index order, so a table does not
//! depend on the thread count.

mod instability;
mod lda_grid;
mod oracles;
mod runtime;
mod seprial;

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use instability::{run_loo_instability, LooInstabilityConfig, LooInstabilityTable};
pub use lda_grid::{make_lda_population, run_lda_grid, LdaCellConfig, LdaGridConfig, LdaGridTable, LdaPopulation};
pub use oracles::{run_oracle_comparison, OracleComparisonConfig, OracleComparisonTable};
pub use runtime::{run_runtime_bench, RuntimeConfig, RuntimeTable};
pub use seprial::{run_seprial_grid, SeprialGridConfig, SeprialTable};

use crate::error::{Error, Result};
use crate::rmt::RmtConfig;

/// One experiment, selected by the `experiment` key of a config file.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Seprial(SeprialGridConfig),
    Lda(LdaGridConfig),
    LooInstability(LooInstabilityConfig),
    OracleComparison(OracleComparisonConfig),
    Runtime(RuntimeConfig),
}

impl Experiment {
    pub const NAMES: [&'static str; 5] = ["seprial", "lda", "loo_instability", "oracle_comparison", "runtime"];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Seprial(_) => "seprial",
            Experiment::Lda(_) => "lda",
            Experiment::LooInstability(_) => "loo_instability",
            Experiment::OracleComparison(_) => "oracle_comparison",
            Experiment::Runtime(_) => "runtime",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Seprial(c) => c.seed,
            Experiment::Lda(c) => c.seed,
            Experiment::LooInstability(c) => c.seed,
            Experiment::OracleComparison(c) => c.seed,
            Experiment::Runtime(c) => c.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Seprial(c) => c.validate(),
            Experiment::Lda(c) => c.validate(),
            Experiment::LooInstability(c) => c.validate(),
            Experiment::OracleComparison(c) => c.validate(),
            Experiment::Runtime(c) => c.validate(),
        }
    }
}

/// A parsed config file.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub experiment: Experiment,
    /// CSV file name, relative to the output directory.
    pub output: Option<String>,
    pub rmt: RmtConfig,
}

fn config_error(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

/// Sets `path` (dot-separated) in a JSON object, creating objects on the way.
fn set_path(root: &mut serde_json::Value, path: &str, value: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{path}: `{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

/// Applies `key=value` overrides; values parse as JSON, falling back to a
/// plain string.
pub fn apply_overrides(root: &mut serde_json::Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        set_path(root, key.trim(), value)?;
    }
    Ok(())
}

impl SimulationConfig {
    /// Parses a JSON config, with optional `key=value` overrides applied first.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: serde_json::Value = serde_json::from_str(text).map_err(config_error)?;
        apply_overrides(&mut root, overrides)?;
        let obj = root.as_object_mut().ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let kind = obj
            .remove("experiment")
            .ok_or_else(|| Error::Config(format!("experiment: missing (one of {})", Experiment::NAMES.join(", "))))?;
        let output = match obj.remove("output") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(other) => return Err(Error::Config(format!("output: expected a string, got {other}"))),
        };
        let rmt: RmtConfig = match obj.remove("rmt") {
            None => RmtConfig::default(),
            Some(v) => serde_json::from_value(v).map_err(|e| Error::Config(format!("rmt: {e}")))?,
        };
        rmt.validate()?;
        let rest = serde_json::Value::Object(std::mem::take(obj));
        let field = |e: serde_json::Error| Error::Config(e.to_string());
        let experiment = match kind.as_str() {
            Some("seprial") => Experiment::Seprial(serde_json::from_value(rest).map_err(field)?),
            Some("lda") => Experiment::Lda(serde_json::from_value(rest).map_err(field)?),
            Some("loo_instability") => Experiment::LooInstability(serde_json::from_value(rest).map_err(field)?),
            Some("oracle_comparison") => Experiment::OracleComparison(serde_json::from_value(rest).map_err(field)?),
            Some("runtime") => Experiment::Runtime(serde_json::from_value(rest).map_err(field)?),
            _ => {
                return Err(Error::Config(format!(
                    "experiment: unknown value {kind} (expected one of {})",
                    Experiment::NAMES.join(", ")
                )))
            }
        };
        experiment.validate()?;
        Ok(Self { experiment, output, rmt })
    }

    pub fn output_name(&self) -> String {
        self.output.clone().unwrap_or_else(|| format!("{}.csv", self.experiment.name()))
    }
}

/// Result of any experiment, rendered as CSV.
#[derive(Debug, Clone)]
pub enum Table {
    Seprial(SeprialTable),
    Lda(LdaGridTable),
    LooInstability(LooInstabilityTable),
    OracleComparison(OracleComparisonTable),
    Runtime(RuntimeTable),
}

impl Table {
    pub fn to_csv(&self) -> String {
        match self {
            Table::Seprial(t) => t.to_csv(),
            Table::Lda(t) => t.to_csv(),
            Table::LooInstability(t) => t.to_csv(),
            Table::OracleComparison(t) => t.to_csv(),
            Table::Runtime(t) => t.to_csv(),
        }
    }
}

/// Runs the configured experiment on the current thread pool.
pub fn run(cfg: &SimulationConfig) -> Result<Table> {
    Ok(match &cfg.experiment {
        Experiment::Seprial(c) => Table::Seprial(run_seprial_grid(c, &cfg.rmt)?),
        Experiment::Lda(c) => Table::Lda(run_lda_grid(c)?),
        Experiment::LooInstability(c) => Table::LooInstability(run_loo_instability(c)?),
        Experiment::OracleComparison(c) => Table::OracleComparison(run_oracle_comparison(c)?),
        Experiment::Runtime(c) => Table::Runtime(run_runtime_bench(c, &cfg.rmt)?),
    })
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub experiment: Option<String>,
    /// SHA-256 of the config bytes followed by any overrides, one per line.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn config_hash(bytes: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    for o in overrides {
        h.update(b"\n");
        h.update(o.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Wall-clock bookkeeping for a manifest.
pub struct Stopwatch {
    started: chrono::DateTime<chrono::Utc>,
    t0: Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self { started: chrono::Utc::now(), t0: Instant::now() }
    }

    pub fn finish(
        self,
        command: &str,
        experiment: Option<&str>,
        config_hash: String,
        seed: u64,
        outputs: Vec<String>,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            experiment: experiment.map(str::to_string),
            config_hash,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: crate::par::current_threads(),
            started: self.started.to_rfc3339(),
            finished: chrono::Utc::now().to_rfc3339(),
            wall_clock_seconds: self.t0.elapsed().as_secs_f64(),
            outputs,
        }
    }
}

/// Renders a float for CSV; NaN becomes an empty field.
pub(crate) fn fmt_f(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

pub(crate) fn csv_line(out: &mut String, fields: &[String]) {
    let _ = writeln!(out, "{}", fields.join(","));
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; NaN below two values.
pub(crate) fn variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_seprial_config() {
        let cfg = SimulationConfig::parse(r#"{"experiment": "seprial", "p_values": [30], "reps": 2, "seed": 4}"#, &[]).unwrap();
        match &cfg.experiment {
            Experiment::Seprial(c) => {
                assert_eq!(c.p_values, vec![30]);
                assert_eq!(c.reps, 2);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(cfg.output_name(), "seprial.csv");
    }

    #[test]
    fn field_level_errors() {
        let e = SimulationConfig::parse(r#"{"experiment": "seprial", "bogus": 1}"#, &[]).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = SimulationConfig::parse(r#"{"experiment": "seprial", "reps": 0}"#, &[]).unwrap_err();
        assert!(e.to_string().contains("reps"), "{e}");
        let e = SimulationConfig::parse(r#"{"experiment": "nope"}"#, &[]).unwrap_err();
        assert!(e.to_string().contains("experiment"), "{e}");
        let e = SimulationConfig::parse(r#"{"experiment": "lda", "rmt": {"starts": 9}}"#, &[]).unwrap_err();
        assert!(e.to_string().contains("rmt.starts"), "{e}");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = SimulationConfig::parse(
            r#"{"experiment": "runtime"}"#,
            &["rmt.fp_tol=1e-9".into(), "reps=2".into(), "output=t.csv".into()],
        )
        .unwrap();
        assert_eq!(cfg.rmt.fp_tol, 1e-9);
        assert_eq!(cfg.output_name(), "t.csv");
        match cfg.experiment {
            Experiment::Runtime(c) => assert_eq!(c.reps, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_depends_on_bytes_and_overrides() {
        let a = config_hash(b"{}", &[]);
        assert_eq!(a, config_hash(b"{}", &[]));
        assert_eq!(a.len(), 64);
        assert_ne!(a, config_hash(b"{ }", &[]));
        assert_ne!(a, config_hash(b"{}", &["reps=1".into()]));
    }
}
