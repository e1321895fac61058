//! Run configuration files.
//!
//! A config names a mode, a graph file and the mode's parameters. Relative
//! paths inside it are resolved against the directory holding the config.

use std::path::{Path, PathBuf};

use consensus_bvp::scenarios::{DetectionParams, Hypothesis, ObservationModel};
use consensus_bvp::Solver;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Limit,
    Simulate,
    GossipPolling,
    GossipPairwise,
    Periodic,
    Attack,
    Steer,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Limit => "limit",
            Mode::Simulate => "simulate",
            Mode::GossipPolling => "gossip-polling",
            Mode::GossipPairwise => "gossip-pairwise",
            Mode::Periodic => "periodic",
            Mode::Attack => "attack",
            Mode::Steer => "steer",
        }
    }
}

/// How edge weights are assigned to the graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Weights {
    /// `self_weight` on the diagonal, the rest split evenly over neighbours.
    Uniform { self_weight: f64 },
    /// Random positive weights. Without a seed one is derived from the
    /// master seed.
    Random {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

/// One entry of a pair distribution, nodes given by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub i: String,
    pub j: String,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub graph_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Weights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub master_seed: u64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_values: Option<Vec<f64>>,
    /// Starting internal values in graph-file order. Drawn from a normal
    /// with variance 5 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_internal: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<Solver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Pair distribution for `gossip-pairwise`; uniform over all pairs when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<PathBuf>,
    /// Label of the internal node followed by `steer`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracked: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_TRIALS: usize = 200;

/// Detection scenario file: the scenario parameters plus run sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub mu: f64,
    pub threshold: f64,
    #[serde(default)]
    pub observation: ObservationModel,
    pub truth: Hypothesis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

impl ScenarioFile {
    pub fn params(&self) -> DetectionParams {
        DetectionParams {
            mu: self.mu,
            threshold: self.threshold,
            observation: self.observation,
            truth: self.truth,
        }
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = read(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Failure::invalid(format!("config: {e}")))?;
        config.check_parameters()?;
        Ok(config)
    }

    /// Load and check a config, resolving its relative paths against the
    /// config's own directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        Ok(Self::load_raw(path)?.resolved(path.parent().unwrap_or(Path::new(""))))
    }

    /// Load and check a config, leaving its paths as written.
    pub fn load_raw(path: &Path) -> Result<Self, Failure> {
        Self::parse(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
    }

    /// Relative paths joined onto `base`.
    pub fn resolved(&self, base: &Path) -> Self {
        let mut config = self.clone();
        config.graph_path = base.join(&config.graph_path);
        for p in [
            &mut config.schedule_path,
            &mut config.scenario_path,
            &mut config.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
        config
    }

    /// Every required parameter of the mode is present and no parameter of
    /// another mode is.
    pub fn check_parameters(&self) -> Result<(), Failure> {
        let mode = self.mode;
        let present = [
            ("weights", self.weights.is_some()),
            ("boundary_values", self.boundary_values.is_some()),
            ("initial_internal", self.initial_internal.is_some()),
            ("solver", self.solver.is_some()),
            ("tol", self.tol.is_some()),
            ("max_steps", self.max_steps.is_some()),
            ("record_stride", self.record_stride.is_some()),
            ("steps", self.steps.is_some()),
            ("reps", self.reps.is_some()),
            ("p", self.p.is_some()),
            ("alpha", self.alpha.is_some()),
            ("pairs", self.pairs.is_some()),
            ("schedule_path", self.schedule_path.is_some()),
            ("scenario_path", self.scenario_path.is_some()),
            ("tracked", self.tracked.is_some()),
            ("horizon", self.horizon.is_some()),
        ];
        let (required, optional): (&[&str], &[&str]) = match mode {
            Mode::Limit => (&["weights", "boundary_values"], &["solver"]),
            Mode::Simulate => (
                &["weights", "boundary_values"],
                &["initial_internal", "tol", "max_steps", "record_stride"],
            ),
            Mode::GossipPolling => (
                &["weights", "boundary_values", "p", "steps"],
                &["initial_internal", "reps", "record_stride"],
            ),
            Mode::GossipPairwise => (
                &["boundary_values", "alpha", "steps"],
                &["initial_internal", "pairs", "reps", "record_stride"],
            ),
            Mode::Periodic => (&["weights", "schedule_path"], &[]),
            Mode::Attack => (&["scenario_path"], &[]),
            Mode::Steer => (
                &["weights", "boundary_values", "tracked", "horizon"],
                &["initial_internal"],
            ),
        };
        for name in required {
            if !present.iter().any(|(n, set)| n == name && *set) {
                return Err(Failure::invalid(format!(
                    "mode {} requires `{name}`",
                    mode.name()
                )));
            }
        }
        for (name, set) in present {
            if set && !required.contains(&name) && !optional.contains(&name) {
                return Err(Failure::invalid(format!(
                    "`{name}` is not a parameter of mode {}",
                    mode.name()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_limit_config() {
        let c = RunConfig::parse(
            r#"{"mode":"limit","graph_path":"g.json","master_seed":1,
                "weights":{"uniform":{"self_weight":0.0}},"boundary_values":[0,1]}"#,
        )
        .unwrap();
        assert_eq!(c.mode, Mode::Limit);
        assert_eq!(c.weights, Some(Weights::Uniform { self_weight: 0.0 }));
    }

    #[test]
    fn rejects_unknown_keys() {
        let err = RunConfig::parse(
            r#"{"mode":"limit","graph_path":"g","master_seed":1,"colour":"red",
                "weights":{"random":{}},"boundary_values":[0]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
        let err = RunConfig::parse(
            r#"{"mode":"limit","graph_path":"g","master_seed":1,
                "weights":{"uniform":{"self_weight":0,"x":1}},"boundary_values":[0]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Failure::Invalid(_)));
    }

    #[test]
    fn checks_mode_parameters() {
        let missing = RunConfig::parse(
            r#"{"mode":"gossip-polling","graph_path":"g","master_seed":1,
                "weights":{"random":{}},"boundary_values":[0],"steps":5}"#,
        )
        .unwrap_err();
        assert!(missing.to_string().contains("`p`"), "{missing}");
        let foreign = RunConfig::parse(
            r#"{"mode":"limit","graph_path":"g","master_seed":1,"alpha":0.5,
                "weights":{"random":{}},"boundary_values":[0]}"#,
        )
        .unwrap_err();
        assert!(foreign.to_string().contains("`alpha`"), "{foreign}");
    }

    #[test]
    fn scenario_file_carries_params() {
        let s: ScenarioFile =
            serde_json::from_str(r#"{"mu":-1,"threshold":0,"truth":"H1","trials":10}"#).unwrap();
        assert_eq!(s.params().mu, -1.0);
        assert_eq!(s.trials, Some(10));
        assert!(serde_json::from_str::<ScenarioFile>(
            r#"{"mu":-1,"threshold":0,"truth":"H1","x":1}"#
        )
        .is_err());
    }
}
