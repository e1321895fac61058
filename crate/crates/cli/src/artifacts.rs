//! Files written by `run`, with a loader for each.
//!
//! JSON numbers use the shortest representation that parses back to the
//! same `f64`; CSV cells use 17 significant digits. Either way a loaded
//! artifact holds exactly the values that were computed.

use std::fmt::Write as _;
use std::path::Path;

use consensus_bvp::format::sig17;
use consensus_bvp::gossip::MonteCarloReport;
use consensus_bvp::linalg::SolverReport;
use consensus_bvp::periodic::OrbitReport;
use consensus_bvp::scenarios::{AttackReport, DetectionParams, DetectionSummary};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Failure;

pub const METADATA: &str = "metadata.json";
pub const LIMIT: &str = "limit.json";
pub const TRAJECTORY: &str = "trajectory.csv";
pub const MONTE_CARLO: &str = "montecarlo.json";
pub const EXPECTED_MEAN: &str = "expected_mean.csv";
pub const ORBIT: &str = "orbit.json";
pub const ATTACK_REPORT: &str = "attack_report.json";
pub const STEERING: &str = "steering.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub master_seed: u64,
    /// The config as run, with command-line overrides applied and the
    /// output directory left out.
    pub config: RunConfig,
    /// Labels in vector order: the first `num_boundary` are boundary nodes.
    pub nodes: Vec<String>,
    pub num_boundary: usize,
    /// Derived seeds actually used, by purpose.
    pub seeds: Vec<NamedSeed>,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedSeed {
    pub purpose: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitArtifact {
    pub boundary_labels: Vec<String>,
    pub internal_labels: Vec<String>,
    pub boundary: Vec<f64>,
    pub internal: Vec<f64>,
    pub residual: f64,
    pub solver: SolverReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackArtifact {
    pub params: DetectionParams,
    pub labels: Vec<String>,
    /// Per-node log-likelihood-ratio terms of the single reported draw.
    pub llrs: Vec<f64>,
    pub attacked: AttackReport,
    pub honest: AttackReport,
    pub rates: DetectionSummary,
}

/// Tracked-node values over time.
#[derive(Clone, Debug, PartialEq)]
pub struct Steering {
    pub label: String,
    pub values: Vec<f64>,
}

impl Steering {
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,{}\n", self.label);
        for (t, v) in self.values.iter().enumerate() {
            writeln!(out, "{t},{}", sig17(*v)).expect("write to String");
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, Failure> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Failure::invalid("empty steering CSV"))?;
        let label = header
            .strip_prefix("t,")
            .ok_or_else(|| Failure::invalid(format!("bad steering header {header:?}")))?
            .to_string();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| Failure::invalid(format!("bad steering row {line:?}")))?;
            if t.parse::<usize>().ok() != Some(row) {
                return Err(Failure::invalid(format!(
                    "steering row {row} has step {t:?}"
                )));
            }
            values.push(
                v.parse()
                    .map_err(|e| Failure::invalid(format!("steering row {row}: {e}")))?,
            );
        }
        Ok(Steering { label, values })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        Self::parse_csv(&crate::config::read(path)?)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    text
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = crate::config::read(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

pub fn load_metadata(path: &Path) -> Result<Metadata, Failure> {
    load_json(path)
}

pub fn load_limit(path: &Path) -> Result<LimitArtifact, Failure> {
    load_json(path)
}

pub fn load_orbit(path: &Path) -> Result<OrbitReport, Failure> {
    load_json(path)
}

pub fn load_attack(path: &Path) -> Result<AttackArtifact, Failure> {
    load_json(path)
}

pub fn load_monte_carlo(path: &Path) -> Result<MonteCarloReport, Failure> {
    Ok(MonteCarloReport::load_json(path)?)
}
