//! Execute one configured mode and write its artifacts.
//!
//! Everything is computed in memory first; the output directory is only
//! touched once the whole run has succeeded, so a failed run leaves no
//! files behind.

use std::path::{Path, PathBuf};

use consensus_bvp::dynamics::{gaussian_values, iterate_until_convergence, IterationParams};
use consensus_bvp::gossip::{
    expected_mean_path, monte_carlo_mean, pairs_with_shared_alpha, GossipModel, MonteCarloConfig,
    PairwiseModel, PollingModel,
};
use consensus_bvp::graph::GraphFile;
use consensus_bvp::periodic::{BoundarySchedule, OrbitReport};
use consensus_bvp::scenarios::{advertiser_steering, DetectionScenario};
use consensus_bvp::{seed, Execution, Graph, NodeLabels, StateVector, SystemMatrix};

use crate::artifacts::{self, AttackArtifact, LimitArtifact, Metadata, NamedSeed, Steering};
use crate::config::{
    Mode, RunConfig, ScenarioFile, Weights, DEFAULT_MAX_STEPS, DEFAULT_REPS, DEFAULT_TOL,
    DEFAULT_TRIALS,
};
use crate::Failure;

/// Variance of the normal used for internal start values that the config
/// does not give.
pub const INITIAL_VARIANCE: f64 = 5.0;

const PURPOSE_WEIGHTS: u64 = 1;
const PURPOSE_INITIAL: u64 = 2;
const PURPOSE_MONTE_CARLO: u64 = 3;
const PURPOSE_TRIALS: u64 = 4;
const PURPOSE_ATTACK_DRAW: u64 = 5;

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub output_dir: PathBuf,
    pub artifacts: Vec<String>,
    pub summary: String,
}

/// Load the config at `config_path`, run it and write the artifacts.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<Outcome, Failure> {
    let mut raw = RunConfig::load_raw(config_path)?;
    if let Some(seed) = overrides.seed {
        raw.master_seed = seed;
    }
    let config = raw.resolved(config_path.parent().unwrap_or(Path::new("")));
    let output_dir = overrides
        .output
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Failure::invalid("no output directory: set output_dir or pass --output"))?;

    let mut job = Job::load(&config)?;
    let summary = job.execute()?;

    let mut files = std::mem::take(&mut job.files);
    let mut names: Vec<String> = files.iter().map(|(n, _)| n.clone()).collect();
    names.push(artifacts::METADATA.to_string());
    let metadata = Metadata {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: config.mode.name().to_string(),
        master_seed: config.master_seed,
        config: RunConfig {
            output_dir: None,
            ..raw
        },
        nodes: job.labels.as_slice().to_vec(),
        num_boundary: job.graph.num_boundary(),
        seeds: job.seeds,
        artifacts: names.clone(),
    };
    files.push((
        artifacts::METADATA.to_string(),
        artifacts::to_json(&metadata),
    ));

    std::fs::create_dir_all(&output_dir)
        .map_err(|e| Failure::invalid(format!("{}: {e}", output_dir.display())))?;
    for (name, body) in &files {
        let path = output_dir.join(name);
        std::fs::write(&path, body)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    }
    Ok(Outcome {
        output_dir,
        artifacts: names,
        summary,
    })
}

pub fn load_graph(path: &Path) -> Result<(Graph, NodeLabels), Failure> {
    let file = GraphFile::load(path)?;
    file.to_graph()
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

/// Weights for `graph` as configured, also returning the weight seed when
/// one was drawn.
pub fn build_weights(
    weights: &Weights,
    graph: &Graph,
    master_seed: u64,
) -> Result<(SystemMatrix, Option<u64>), Failure> {
    Ok(match weights {
        Weights::Uniform { self_weight } => (SystemMatrix::uniform(graph, *self_weight)?, None),
        Weights::Random { seed } => {
            let seed = seed.unwrap_or_else(|| seed::derive(master_seed, PURPOSE_WEIGHTS));
            (SystemMatrix::random(graph, seed)?, Some(seed))
        }
    })
}

/// The absorbing condition, reported as an input error.
pub fn require_absorbing(graph: &Graph, labels: &NodeLabels) -> Result<(), Failure> {
    if graph.num_boundary() == 0 {
        return Err(Failure::invalid("the graph has no boundary nodes"));
    }
    let detached = graph.detached_internal_nodes();
    if detached.is_empty() {
        Ok(())
    } else {
        let names: Vec<&str> = detached.iter().filter_map(|&n| labels.label(n)).collect();
        Err(Failure::invalid(format!(
            "internal nodes with no path to a boundary node: {}",
            names.join(", ")
        )))
    }
}

struct Job<'a> {
    config: &'a RunConfig,
    graph: Graph,
    labels: NodeLabels,
    seeds: Vec<NamedSeed>,
    files: Vec<(String, String)>,
}

impl<'a> Job<'a> {
    fn load(config: &'a RunConfig) -> Result<Self, Failure> {
        let (graph, labels) = load_graph(&config.graph_path)?;
        Ok(Job {
            config,
            graph,
            labels,
            seeds: Vec::new(),
            files: Vec::new(),
        })
    }

    fn execute(&mut self) -> Result<String, Failure> {
        match self.config.mode {
            Mode::Limit => self.limit(),
            Mode::Simulate => self.simulate(),
            Mode::GossipPolling => {
                let model = PollingModel::new(self.system()?, self.config.p.expect("checked"))?;
                self.gossip(&model)
            }
            Mode::GossipPairwise => {
                let model = self.pairwise_model()?;
                self.gossip(&model)
            }
            Mode::Periodic => self.periodic(),
            Mode::Attack => self.attack(),
            Mode::Steer => self.steer(),
        }
    }

    fn record_seed(&mut self, purpose: &str, seed: u64) {
        self.seeds.push(NamedSeed {
            purpose: purpose.to_string(),
            seed,
        });
    }

    fn derived_seed(&mut self, purpose: &str, code: u64) -> u64 {
        let s = seed::derive(self.config.master_seed, code);
        self.record_seed(purpose, s);
        s
    }

    /// Configured weights on a graph that satisfies the absorbing condition.
    fn system(&mut self) -> Result<SystemMatrix, Failure> {
        require_absorbing(&self.graph, &self.labels)?;
        let weights = self.config.weights.as_ref().expect("checked");
        let (system, seed) = build_weights(weights, &self.graph, self.config.master_seed)?;
        if let Some(seed) = seed {
            self.record_seed("weights", seed);
        }
        Ok(system)
    }

    fn boundary_values(&self) -> Result<Vec<f64>, Failure> {
        let values = self.config.boundary_values.clone().expect("checked");
        let k = self.graph.num_boundary();
        if values.len() != k {
            return Err(Failure::invalid(format!(
                "boundary_values has {} entries for {k} boundary nodes",
                values.len()
            )));
        }
        Ok(values)
    }

    fn initial_internal(&mut self) -> Result<Vec<f64>, Failure> {
        let m = self.graph.num_internal();
        match &self.config.initial_internal {
            Some(values) if values.len() == m => Ok(values.clone()),
            Some(values) => Err(Failure::invalid(format!(
                "initial_internal has {} entries for {m} internal nodes",
                values.len()
            ))),
            None => {
                let s = self.derived_seed("initial_internal", PURPOSE_INITIAL);
                let mut rng = seed::replication_rng(s, 0);
                Ok(gaussian_values(&mut rng, m, INITIAL_VARIANCE.sqrt())?)
            }
        }
    }

    fn emit(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn limit(&mut self) -> Result<String, Failure> {
        let system = self.system()?;
        let boundary = self.boundary_values()?;
        let solver = self.config.solver.unwrap_or_default();
        let result = system.closed_form_limit_with(&boundary, solver)?;
        let k = self.graph.num_boundary();
        let artifact = LimitArtifact {
            boundary_labels: self.labels.as_slice()[..k].to_vec(),
            internal_labels: self.labels.as_slice()[k..].to_vec(),
            boundary,
            internal: result.state.internal,
            residual: result.residual,
            solver: result.solver,
        };
        self.emit(artifacts::LIMIT, artifacts::to_json(&artifact));
        Ok(format!("limit residual {:e}", artifact.residual))
    }

    fn simulate(&mut self) -> Result<String, Failure> {
        let system = self.system()?;
        let x0 = StateVector::new(self.boundary_values()?, self.initial_internal()?);
        let params = IterationParams {
            tol: self.config.tol.unwrap_or(DEFAULT_TOL),
            max_steps: self.config.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
            record_stride: self.config.record_stride.unwrap_or(1),
        };
        let traj = iterate_until_convergence(&system, &x0, params)?;
        let Some(at) = traj.converged_at else {
            return Err(Failure::Numerical(format!(
                "no convergence within {} steps (last step change {:e}, tolerance {:e})",
                params.max_steps, traj.final_delta, params.tol
            )));
        };
        let mut csv = Vec::new();
        traj.write_csv(&mut csv).expect("write to memory");
        self.emit(
            artifacts::TRAJECTORY,
            String::from_utf8(csv).expect("CSV is UTF-8"),
        );
        Ok(format!("converged after {at} steps"))
    }

    fn pairwise_model(&mut self) -> Result<PairwiseModel, Failure> {
        let k = self.graph.num_boundary();
        let n = self.graph.num_nodes();
        let alpha = self.config.alpha.expect("checked");
        match &self.config.pairs {
            None => Ok(PairwiseModel::uniform(k, n, alpha)?),
            Some(specs) => {
                let index = |label: &str| {
                    self.labels.index_of(label).ok_or_else(|| {
                        Failure::invalid(format!("pair node {label:?} is not in the graph"))
                    })
                };
                let mut pairs = Vec::with_capacity(specs.len());
                for spec in specs {
                    pairs.push((index(&spec.i)?, index(&spec.j)?, spec.prob));
                }
                let dist = pairs_with_shared_alpha(n, &pairs, alpha)?;
                Ok(PairwiseModel::new(k, dist)?)
            }
        }
    }

    fn gossip<G: GossipModel>(&mut self, model: &G) -> Result<String, Failure> {
        let x0 = StateVector::new(self.boundary_values()?, self.initial_internal()?);
        let steps = self.config.steps.expect("checked");
        let record_stride = self.config.record_stride.unwrap_or(1);
        let mc = MonteCarloConfig {
            steps,
            reps: self.config.reps.unwrap_or(DEFAULT_REPS),
            seed: self.derived_seed("monte_carlo", PURPOSE_MONTE_CARLO),
            record_stride,
        };
        let report = monte_carlo_mean(model, &x0, mc, Execution::default())?;
        let expected = expected_mean_path(model, &x0, steps, record_stride)?;
        let mut csv = Vec::new();
        expected.write_csv(&mut csv).expect("write to memory");
        self.emit(artifacts::MONTE_CARLO, artifacts::to_json(&report));
        self.emit(
            artifacts::EXPECTED_MEAN,
            String::from_utf8(csv).expect("CSV is UTF-8"),
        );
        Ok(format!("{} replications of {steps} steps", report.reps))
    }

    fn periodic(&mut self) -> Result<String, Failure> {
        let system = self.system()?;
        let path = self.config.schedule_path.as_ref().expect("checked");
        let schedule = BoundarySchedule::load(path)
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
        if schedule.num_boundary() != self.graph.num_boundary() {
            return Err(Failure::invalid(format!(
                "schedule has {} boundary values per phase for {} boundary nodes",
                schedule.num_boundary(),
                self.graph.num_boundary()
            )));
        }
        let report = OrbitReport::compute(&system, &schedule)?;
        self.emit(artifacts::ORBIT, artifacts::to_json(&report));
        Ok(format!(
            "period {} orbit, fixed-point error {:e}",
            report.period, report.fixed_point_error
        ))
    }

    fn attack(&mut self) -> Result<String, Failure> {
        let path = self.config.scenario_path.as_ref().expect("checked");
        let file = ScenarioFile::load(path)?;
        let params = file.params();
        let scenario = DetectionScenario::new(self.graph.clone(), params)?;
        let steps = file.steps.unwrap_or(DEFAULT_MAX_STEPS);
        let trials = file.trials.unwrap_or(DEFAULT_TRIALS);

        let draw = self.derived_seed("attack_draw", PURPOSE_ATTACK_DRAW);
        let llrs = scenario.node_log_likelihood_ratios(&mut seed::replication_rng(draw, 0));
        let attacked = scenario.run_attack_with(&llrs, steps)?;
        let honest = scenario.run_honest_with(&llrs, steps)?;
        let trial_seed = self.derived_seed("detection_trials", PURPOSE_TRIALS);
        let rates = scenario.detection_rates(trials, steps, trial_seed, Execution::default())?;
        let summary = format!(
            "detection rate honest {:.3}, attacked {:.3}",
            rates.honest_rate, rates.attacked_rate
        );
        let artifact = AttackArtifact {
            params,
            labels: self.labels.as_slice().to_vec(),
            llrs,
            attacked,
            honest,
            rates,
        };
        self.emit(artifacts::ATTACK_REPORT, artifacts::to_json(&artifact));
        Ok(summary)
    }

    fn steer(&mut self) -> Result<String, Failure> {
        let system = self.system()?;
        let boundary = self.boundary_values()?;
        let internal = self.initial_internal()?;
        let label = self.config.tracked.clone().expect("checked");
        let k = self.graph.num_boundary();
        let tracked = match self.labels.index_of(&label) {
            Some(n) if n >= k => n - k,
            Some(_) => {
                return Err(Failure::invalid(format!(
                    "tracked node {label:?} is a boundary node"
                )))
            }
            None => {
                return Err(Failure::invalid(format!(
                    "tracked node {label:?} is not in the graph"
                )))
            }
        };
        let horizon = self.config.horizon.expect("checked");
        let values = advertiser_steering(&system, boundary[0], &internal, horizon, tracked)?;
        let last = *values.last().expect("horizon + 1 values");
        self.emit(artifacts::STEERING, Steering { label, values }.to_csv());
        Ok(format!("tracked node at {last} after {horizon} steps"))
    }
}
