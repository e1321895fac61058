//! Worked applications: a single malicious node steering a detection
//! network, and an advertiser steering a social network.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{iterate_until_convergence, step_internal, IterationParams};
use crate::graph::Graph;
use crate::linalg::{check_len, StateVector, SystemMatrix};
use crate::seed;
use crate::{Error, Execution, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub mean: f64,
    pub std_dev: f64,
}

impl Gaussian {
    fn log_density(&self, y: f64) -> f64 {
        let z = (y - self.mean) / self.std_dev;
        -0.5 * z * z - self.std_dev.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Scalar observation per node, Gaussian under each hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationModel {
    pub h0: Gaussian,
    pub h1: Gaussian,
}

impl Default for ObservationModel {
    /// Unit-variance mean shift from 0 to 1.
    fn default() -> Self {
        ObservationModel {
            h0: Gaussian {
                mean: 0.0,
                std_dev: 1.0,
            },
            h1: Gaussian {
                mean: 1.0,
                std_dev: 1.0,
            },
        }
    }
}

impl ObservationModel {
    pub fn validate(&self) -> Result<()> {
        for (name, g) in [("H0", self.h0), ("H1", self.h1)] {
            if !(g.std_dev > 0.0 && g.std_dev.is_finite() && g.mean.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} needs a finite mean and positive standard deviation, got {g:?}"
                )));
            }
        }
        Ok(())
    }

    /// `log p(y | H1) - log p(y | H0)`
    pub fn log_likelihood_ratio(&self, y: f64) -> f64 {
        self.h1.log_density(y) - self.h0.log_density(y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, truth: Hypothesis, rng: &mut R) -> f64 {
        let g = match truth {
            Hypothesis::H0 => self.h0,
            Hypothesis::H1 => self.h1,
        };
        Normal::new(g.mean, g.std_dev)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Parameters of the detection attack other than the graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionParams {
    /// Value the faulty node holds forever.
    pub mu: f64,
    /// Decide H1 at a node when its final value exceeds this.
    pub threshold: f64,
    #[serde(default)]
    pub observation: ObservationModel,
    pub truth: Hypothesis,
}

/// Detection network whose single boundary node (node 0) is faulty.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionScenario {
    graph: Graph,
    params: DetectionParams,
    attacked: SystemMatrix,
    honest: SystemMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub final_values: Vec<f64>,
    pub all_below_threshold: bool,
    pub decisions: Vec<Hypothesis>,
    /// Fraction of nodes deciding H1.
    pub h1_fraction: f64,
    pub steps_taken: usize,
}

/// Empirical H1 decision rates over many trials. Under truth H1 these are
/// detection rates; under H0 they are false-alarm rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub trials: usize,
    pub seed: u64,
    /// Faulty node behaves honestly; plain doubly stochastic averaging.
    pub honest_rate: f64,
    /// Faulty node pinned at `mu`.
    pub attacked_rate: f64,
}

impl DetectionScenario {
    /// Both runs use Metropolis weights on `graph`; the attacked run clamps
    /// node 0.
    pub fn new(graph: Graph, params: DetectionParams) -> Result<Self> {
        if graph.num_boundary() != 1 {
            return Err(Error::InvalidInput(format!(
                "detection scenario needs exactly one faulty (boundary) node, got {}",
                graph.num_boundary()
            )));
        }
        params.observation.validate()?;
        if !(params.mu.is_finite() && params.threshold.is_finite()) || params.mu == params.threshold
        {
            return Err(Error::InvalidInput(format!(
                "mu ({}) must differ from the threshold ({})",
                params.mu, params.threshold
            )));
        }
        if !graph.internal_nodes_reach_boundary()? {
            return Err(Error::InvalidInput(
                "faulty node is not reachable from every sensor".into(),
            ));
        }
        let attacked = SystemMatrix::metropolis(&graph)?;
        let honest = SystemMatrix::metropolis(&graph.without_boundary())?;
        Ok(DetectionScenario {
            graph,
            params,
            attacked,
            honest,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    /// One observation per node under the true hypothesis, mapped to its
    /// log-likelihood-ratio term.
    pub fn node_log_likelihood_ratios<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let model = &self.params.observation;
        (0..self.graph.num_nodes())
            .map(|_| model.log_likelihood_ratio(model.sample(self.params.truth, rng)))
            .collect()
    }

    fn decide(&self, value: f64) -> Hypothesis {
        if value > self.params.threshold {
            Hypothesis::H1
        } else {
            Hypothesis::H0
        }
    }

    fn report(&self, final_values: Vec<f64>, steps_taken: usize) -> AttackReport {
        let decisions: Vec<Hypothesis> = final_values.iter().map(|&v| self.decide(v)).collect();
        let h1 = decisions.iter().filter(|&&d| d == Hypothesis::H1).count();
        AttackReport {
            all_below_threshold: final_values.iter().all(|&v| v < self.params.threshold),
            h1_fraction: h1 as f64 / decisions.len() as f64,
            final_values,
            decisions,
            steps_taken,
        }
    }

    fn iteration(steps: usize) -> IterationParams {
        IterationParams {
            tol: 1e-13,
            max_steps: steps.max(1),
            record_stride: usize::MAX,
        }
    }

    /// Sensors start at their LLR terms, node 0 is pinned at `mu`, and the
    /// network averages for at most `steps` steps.
    pub fn run_attack_with(&self, llrs: &[f64], steps: usize) -> Result<AttackReport> {
        check_len("LLR terms", self.graph.num_nodes(), llrs.len())?;
        let x0 = StateVector::new(vec![self.params.mu], llrs[1..].to_vec());
        let traj = iterate_until_convergence(&self.attacked, &x0, Self::iteration(steps))?;
        Ok(self.report(traj.final_state().full(), traj.steps_taken()))
    }

    pub fn run_attack<R: Rng + ?Sized>(&self, rng: &mut R, steps: usize) -> Result<AttackReport> {
        let llrs = self.node_log_likelihood_ratios(rng);
        self.run_attack_with(&llrs, steps)
    }

    /// Control run: every node, including node 0, averages honestly.
    pub fn run_honest_with(&self, llrs: &[f64], steps: usize) -> Result<AttackReport> {
        check_len("LLR terms", self.graph.num_nodes(), llrs.len())?;
        let x0 = StateVector::new(Vec::new(), llrs.to_vec());
        let traj = iterate_until_convergence(&self.honest, &x0, Self::iteration(steps))?;
        Ok(self.report(traj.final_state().full(), traj.steps_taken()))
    }

    /// Average H1 decision fraction over `trials` independent observation
    /// draws, for the honest and the attacked network. Trial `t` draws from
    /// stream `t` of `seed`.
    pub fn detection_rates(
        &self,
        trials: usize,
        steps: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<DetectionSummary> {
        if trials == 0 {
            return Err(Error::InvalidInput("need at least one trial".into()));
        }
        let per_trial = exec.map_indices(trials, |t| -> Result<(f64, f64)> {
            let mut rng = seed::replication_rng(seed, t as u64);
            let llrs = self.node_log_likelihood_ratios(&mut rng);
            let honest = self.run_honest_with(&llrs, steps)?;
            let attacked = self.run_attack_with(&llrs, steps)?;
            Ok((honest.h1_fraction, attacked.h1_fraction))
        });
        let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
        let n = trials as f64;
        Ok(DetectionSummary {
            trials,
            seed,
            honest_rate: per_trial.iter().map(|p| p.0).sum::<f64>() / n,
            attacked_rate: per_trial.iter().map(|p| p.1).sum::<f64>() / n,
        })
    }
}

/// Value of internal node `tracked` (index into the internal block) at
/// steps `0..=horizon`, with a single advertiser holding `advertiser_value`.
pub fn advertiser_steering(
    m: &SystemMatrix,
    advertiser_value: f64,
    internal0: &[f64],
    horizon: usize,
    tracked: usize,
) -> Result<Vec<f64>> {
    if m.num_boundary() != 1 {
        return Err(Error::InvalidInput(format!(
            "advertiser steering needs exactly one boundary node, got {}",
            m.num_boundary()
        )));
    }
    check_len("internal values", m.num_internal(), internal0.len())?;
    if tracked >= m.num_internal() {
        return Err(Error::NodeOutOfRange {
            node: tracked,
            count: m.num_internal(),
        });
    }
    let boundary = [advertiser_value];
    let mut current = internal0.to_vec();
    let mut next = vec![0.0; current.len()];
    let mut path = Vec::with_capacity(horizon + 1);
    path.push(current[tracked]);
    for _ in 0..horizon {
        step_internal(m, &boundary, &current, &mut next);
        std::mem::swap(&mut current, &mut next);
        path.push(current[tracked]);
    }
    Ok(path)
}
