//! Randomized gossip variants: sensor polling and pairwise averaging.
//!
//! Both models keep boundary values fixed. Their expected one-step operators
//! are ordinary [`SystemMatrix`] values, so the mean path follows the
//! deterministic recurrence with the expected matrix, and its limit is the
//! closed form of that matrix.

use std::collections::HashSet;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run_steps, Trajectory};
use crate::linalg::{StateVector, SystemMatrix};
use crate::matrix::Matrix;
use crate::seed::{self, STEP_WORDS};
use crate::{Error, Execution, Result, CONSTRUCTION_TOL};

/// A randomized update law with a known expected operator.
pub trait GossipModel: Sync {
    fn name(&self) -> &'static str;
    fn num_boundary(&self) -> usize;
    fn num_internal(&self) -> usize;

    /// Apply one random update to `internal` in place.
    fn apply_random_step(
        &self,
        boundary: &[f64],
        internal: &mut Vec<f64>,
        rng: &mut dyn rand::RngCore,
    );

    /// `E[L(k)]` in block form.
    fn expected_system(&self) -> Result<SystemMatrix>;

    fn sample_step<R: Rng>(&self, x: &StateVector, rng: &mut R) -> Result<StateVector>
    where
        Self: Sized,
    {
        x.check_dims(self.num_boundary(), self.num_internal())?;
        let mut internal = x.internal.clone();
        self.apply_random_step(&x.boundary, &mut internal, rng);
        Ok(StateVector::new(x.boundary.clone(), internal))
    }
}

/// Each internal node independently applies its row of the base operator
/// with probability `poll_prob` and otherwise keeps its value. All nodes read
/// the same time-`t` state.
#[derive(Clone, Debug, PartialEq)]
pub struct PollingModel {
    base: SystemMatrix,
    poll_prob: f64,
}

impl PollingModel {
    pub fn new(base: SystemMatrix, poll_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&poll_prob) {
            return Err(Error::InvalidModel(format!(
                "polling probability {poll_prob} outside [0, 1]"
            )));
        }
        Ok(PollingModel { base, poll_prob })
    }

    pub fn base(&self) -> &SystemMatrix {
        &self.base
    }

    pub fn poll_prob(&self) -> f64 {
        self.poll_prob
    }

    /// `p L + (1 - p) I`, i.e. blocks `p P_e` and `p P_i + (1 - p) I`.
    pub fn expected_matrix(&self) -> SystemMatrix {
        let p = self.poll_prob;
        let m = self.base.num_internal();
        let p_e = self.base.p_e().scale(p);
        let p_i = self
            .base
            .p_i()
            .scale(p)
            .add_scaled(&Matrix::identity(m), 1.0 - p);
        SystemMatrix::from_blocks(p_e, p_i).expect("convex combination of stochastic rows")
    }
}

impl GossipModel for PollingModel {
    fn name(&self) -> &'static str {
        "polling"
    }

    fn num_boundary(&self) -> usize {
        self.base.num_boundary()
    }

    fn num_internal(&self) -> usize {
        self.base.num_internal()
    }

    fn apply_random_step(
        &self,
        boundary: &[f64],
        internal: &mut Vec<f64>,
        rng: &mut dyn rand::RngCore,
    ) {
        let snapshot = internal.clone();
        for (r, value) in internal.iter_mut().enumerate() {
            // one draw per node per step, whether or not it polls
            let u: f64 = rng.random();
            if u < self.poll_prob {
                *value = self.base.average_row(r, boundary, &snapshot);
            }
        }
    }

    fn expected_system(&self) -> Result<SystemMatrix> {
        Ok(self.expected_matrix())
    }
}

/// One unordered pair with its selection probability and averaging weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairWeight {
    pub i: usize,
    pub j: usize,
    pub prob: f64,
    pub alpha: f64,
}

/// Probability table over unordered node pairs.
#[derive(Clone, Debug)]
pub struct PairDistribution {
    num_nodes: usize,
    pairs: Vec<PairWeight>,
    sampler: WeightedIndex<f64>,
}

impl PartialEq for PairDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.num_nodes == other.num_nodes && self.pairs == other.pairs
    }
}

impl PairDistribution {
    pub fn new(num_nodes: usize, pairs: Vec<PairWeight>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for p in &pairs {
            for node in [p.i, p.j] {
                if node >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        node,
                        count: num_nodes,
                    });
                }
            }
            if p.i == p.j {
                return Err(Error::InvalidModel(format!(
                    "pair ({}, {}) is not two distinct nodes",
                    p.i, p.j
                )));
            }
            if !seen.insert((p.i.min(p.j), p.i.max(p.j))) {
                return Err(Error::InvalidModel(format!(
                    "pair ({}, {}) listed twice",
                    p.i, p.j
                )));
            }
            if !p.prob.is_finite() || p.prob < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "pair ({}, {}) has probability {}",
                    p.i, p.j, p.prob
                )));
            }
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(Error::InvalidModel(format!(
                    "pair ({}, {}) has averaging weight {} outside (0, 1)",
                    p.i, p.j, p.alpha
                )));
            }
            total += p.prob;
        }
        if (total - 1.0).abs() > CONSTRUCTION_TOL {
            return Err(Error::InvalidModel(format!(
                "pair probabilities sum to {total}"
            )));
        }
        let sampler = WeightedIndex::new(pairs.iter().map(|p| p.prob))
            .map_err(|e| Error::InvalidModel(format!("pair distribution: {e}")))?;
        Ok(PairDistribution {
            num_nodes,
            pairs,
            sampler,
        })
    }

    /// Uniform over all `N (N - 1) / 2` pairs with one shared weight.
    pub fn uniform(num_nodes: usize, alpha: f64) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidModel("need at least two nodes".into()));
        }
        let count = num_nodes * (num_nodes - 1) / 2;
        let prob = 1.0 / count as f64;
        let pairs = (0..num_nodes)
            .flat_map(|i| (i + 1..num_nodes).map(move |j| PairWeight { i, j, prob, alpha }))
            .collect();
        Self::new(num_nodes, pairs)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn pairs(&self) -> &[PairWeight] {
        &self.pairs
    }

    pub fn alpha_of(&self, i: usize, j: usize) -> Option<f64> {
        self.pairs
            .iter()
            .find(|p| (p.i, p.j) == (i, j) || (p.j, p.i) == (i, j))
            .map(|p| p.alpha)
    }

    /// Some pair with positive probability joins a boundary and an internal node.
    pub fn has_boundary_interaction(&self, num_boundary: usize) -> bool {
        self.pairs
            .iter()
            .any(|p| p.prob > 0.0 && ((p.i < num_boundary) != (p.j < num_boundary)))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &PairWeight {
        &self.pairs[self.sampler.sample(rng)]
    }

    /// `sum pi_ij W_ij` without the boundary exception.
    pub fn expected_unclamped(&self) -> Matrix {
        self.expected_with_boundary(0)
    }

    /// `sum pi_ij W_ij` where rows of boundary members are identity rows.
    pub fn expected_with_boundary(&self, num_boundary: usize) -> Matrix {
        let mut e = Matrix::identity(self.num_nodes);
        for p in &self.pairs {
            let w = p.prob * p.alpha;
            for (me, other) in [(p.i, p.j), (p.j, p.i)] {
                if me >= num_boundary {
                    e[(me, me)] -= w;
                    e[(me, other)] += w;
                }
            }
        }
        e
    }

    /// Expected blocks for the first `num_boundary` nodes held fixed. No
    /// boundary-interaction check: without one, `P_e = 0`.
    pub fn expected_blocks(&self, num_boundary: usize) -> Result<SystemMatrix> {
        if num_boundary >= self.num_nodes {
            return Err(Error::NoInternalNodes);
        }
        SystemMatrix::from_full(num_boundary, &self.expected_with_boundary(num_boundary))
    }
}

/// The matrix applied when pair `{i, j}` is drawn: identity except that each
/// internal member moves a fraction `alpha` toward the other. Boundary
/// members keep identity rows.
pub fn pairwise_weight_matrix(
    num_nodes: usize,
    num_boundary: usize,
    i: usize,
    j: usize,
    alpha: f64,
) -> Result<Matrix> {
    for node in [i, j] {
        if node >= num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                count: num_nodes,
            });
        }
    }
    if i == j {
        return Err(Error::InvalidInput(format!(
            "pair ({i}, {j}) is not two distinct nodes"
        )));
    }
    let mut w = Matrix::identity(num_nodes);
    for (me, other) in [(i, j), (j, i)] {
        if me >= num_boundary {
            w[(me, me)] = 1.0 - alpha;
            w[(me, other)] = alpha;
        }
    }
    Ok(w)
}

/// Pairwise averaging with boundary members held fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseModel {
    dist: PairDistribution,
    num_boundary: usize,
}

impl PairwiseModel {
    /// Rejects distributions in which no boundary-internal pair can be drawn.
    pub fn new(num_boundary: usize, dist: PairDistribution) -> Result<Self> {
        if num_boundary >= dist.num_nodes() {
            return Err(Error::NoInternalNodes);
        }
        if !dist.has_boundary_interaction(num_boundary) {
            return Err(Error::InvalidModel(
                "no pair with positive probability joins a boundary node and an internal node"
                    .into(),
            ));
        }
        Ok(PairwiseModel { dist, num_boundary })
    }

    pub fn uniform(num_boundary: usize, num_nodes: usize, alpha: f64) -> Result<Self> {
        Self::new(num_boundary, PairDistribution::uniform(num_nodes, alpha)?)
    }

    pub fn distribution(&self) -> &PairDistribution {
        &self.dist
    }

    pub fn num_nodes(&self) -> usize {
        self.dist.num_nodes()
    }

    /// `W_ij` for a pair of this model, boundary exception applied.
    pub fn weight_matrix(&self, i: usize, j: usize) -> Result<Matrix> {
        let alpha = self
            .dist
            .alpha_of(i, j)
            .ok_or_else(|| Error::InvalidInput(format!("pair ({i}, {j}) is not in the model")))?;
        pairwise_weight_matrix(self.num_nodes(), self.num_boundary, i, j, alpha)
    }

    pub fn expected_blocks(&self) -> SystemMatrix {
        self.dist
            .expected_blocks(self.num_boundary)
            .expect("validated pair distribution")
    }
}

impl GossipModel for PairwiseModel {
    fn name(&self) -> &'static str {
        "pairwise"
    }

    fn num_boundary(&self) -> usize {
        self.num_boundary
    }

    fn num_internal(&self) -> usize {
        self.num_nodes() - self.num_boundary
    }

    fn apply_random_step(
        &self,
        boundary: &[f64],
        internal: &mut Vec<f64>,
        rng: &mut dyn rand::RngCore,
    ) {
        let pair = *self.dist.sample(rng);
        let k = self.num_boundary;
        let value = |n: usize, internal: &[f64]| if n < k { boundary[n] } else { internal[n - k] };
        let (xi, xj) = (value(pair.i, internal), value(pair.j, internal));
        if pair.i >= k {
            internal[pair.i - k] = (1.0 - pair.alpha) * xi + pair.alpha * xj;
        }
        if pair.j >= k {
            internal[pair.j - k] = (1.0 - pair.alpha) * xj + pair.alpha * xi;
        }
    }

    fn expected_system(&self) -> Result<SystemMatrix> {
        Ok(self.expected_blocks())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub steps: usize,
    pub reps: usize,
    pub seed: u64,
    /// Record every `record_stride`-th step (the last step is always kept).
    pub record_stride: usize,
}

/// Pointwise mean and standard error of the node values over replications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub model: String,
    pub steps: usize,
    pub reps: usize,
    pub seed: u64,
    pub record_stride: usize,
    /// Step index of each recorded row.
    pub t: Vec<usize>,
    /// `mean[row][node]` over all `N` nodes.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl MonteCarloReport {
    pub fn final_mean(&self) -> &[f64] {
        self.mean.last().expect("at least the initial row")
    }

    pub fn final_stderr(&self) -> &[f64] {
        self.stderr.last().expect("at least the initial row")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("Monte Carlo report", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Replications are split into this many fixed chunks, each reduced
/// sequentially, so the floating-point reduction order never depends on
/// thread scheduling.
const CHUNKS: usize = 64;

fn recorded_steps(steps: usize, stride: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (0..=steps).step_by(stride).collect();
    if ts.last() != Some(&steps) {
        ts.push(steps);
    }
    ts
}

/// Welford accumulators per recorded row and node.
#[derive(Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, offset: usize, values: &[f64]) {
        for (idx, &v) in values.iter().enumerate() {
            let slot = offset + idx;
            let delta = v - self.mean[slot];
            self.mean[slot] += delta / self.count;
            self.m2[slot] += delta * (v - self.mean[slot]);
        }
    }

    /// Chan et al. pairwise combination.
    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let total = self.count + other.count;
        for slot in 0..self.mean.len() {
            let delta = other.mean[slot] - self.mean[slot];
            self.mean[slot] += delta * other.count / total;
            self.m2[slot] += other.m2[slot] + delta * delta * self.count * other.count / total;
        }
        self.count = total;
    }
}

/// Run `reps` independent sample paths of `model` from `x0` and aggregate
/// the pointwise mean and standard error at the recorded steps.
///
/// Replication `r` uses the ChaCha stream `r` of the master seed, and step
/// `s` of that replication starts at word `s * STEP_WORDS` of its stream, so
/// any replication or step can be regenerated alone.
pub fn monte_carlo_mean<G: GossipModel>(
    model: &G,
    x0: &StateVector,
    config: MonteCarloConfig,
    exec: Execution,
) -> Result<MonteCarloReport> {
    x0.check_dims(model.num_boundary(), model.num_internal())?;
    if config.reps < 2 {
        return Err(Error::InvalidInput(
            "Monte Carlo needs at least two replications".into(),
        ));
    }
    if config.record_stride == 0 {
        return Err(Error::InvalidInput(
            "record_stride must be at least 1".into(),
        ));
    }
    let ts = recorded_steps(config.steps, config.record_stride);
    let n = x0.len();
    let k = model.num_boundary();
    let width = ts.len() * n;

    let chunk_len = config.reps.div_ceil(CHUNKS);
    let chunks = config.reps.div_ceil(chunk_len);
    let partial = exec.map_indices(chunks, |c| {
        let mut acc = Moments::new(width);
        let reps = c * chunk_len..((c + 1) * chunk_len).min(config.reps);
        for rep in reps {
            acc.count += 1.0;
            let mut rng = seed::replication_rng(config.seed, rep as u64);
            let mut internal = x0.internal.clone();
            let mut next_record = 0;
            for step in 0..=config.steps {
                if ts[next_record] == step {
                    let offset = next_record * n;
                    acc.push(offset, &x0.boundary);
                    acc.push(offset + k, &internal);
                    next_record += 1;
                }
                if step == config.steps {
                    break;
                }
                rng.set_word_pos(step as u128 * STEP_WORDS);
                model.apply_random_step(&x0.boundary, &mut internal, &mut rng);
            }
        }
        acc
    });
    let mut total = Moments::new(width);
    for chunk in &partial {
        total.merge(chunk);
    }
    let reps = total.count;
    let rows = |f: &dyn Fn(usize) -> f64| -> Vec<Vec<f64>> {
        (0..ts.len())
            .map(|r| (0..n).map(|c| f(r * n + c)).collect())
            .collect()
    };
    let mean = rows(&|s| total.mean[s]);
    let stderr = rows(&|s| (total.m2[s].max(0.0) / (reps - 1.0)).sqrt() / reps.sqrt());
    Ok(MonteCarloReport {
        model: model.name().to_string(),
        steps: config.steps,
        reps: config.reps,
        seed: config.seed,
        record_stride: config.record_stride,
        t: ts,
        mean,
        stderr,
    })
}

/// `E[x(k)] = E[L]^k x0` at the same recorded steps as [`monte_carlo_mean`].
pub fn expected_mean_path<G: GossipModel>(
    model: &G,
    x0: &StateVector,
    steps: usize,
    record_stride: usize,
) -> Result<Trajectory> {
    let expected = model.expected_system()?;
    run_steps(&expected, x0, steps, record_stride)
}

/// Check a hand-built `(i, j, prob)` list plus shared alpha against `num_nodes`.
pub fn pairs_with_shared_alpha(
    num_nodes: usize,
    pairs: &[(usize, usize, f64)],
    alpha: f64,
) -> Result<PairDistribution> {
    PairDistribution::new(
        num_nodes,
        pairs
            .iter()
            .map(|&(i, j, prob)| PairWeight { i, j, prob, alpha })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;
    use crate::graph::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base(seed: u64) -> SystemMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::random_connected(3, 9, 0.2, &mut rng).unwrap();
        SystemMatrix::random(&g, seed).unwrap()
    }

    fn state(k: usize, m: usize, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        StateVector::new(
            crate::dynamics::gaussian_values(&mut rng, k, 1.0).unwrap(),
            crate::dynamics::gaussian_values(&mut rng, m, 5.0).unwrap(),
        )
    }

    #[test]
    fn polling_extremes() {
        let x = state(3, 9, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let never = PollingModel::new(base(1), 0.0).unwrap();
        assert_eq!(never.sample_step(&x, &mut rng).unwrap(), x);

        let always = PollingModel::new(base(1), 1.0).unwrap();
        assert_eq!(
            always.sample_step(&x, &mut rng).unwrap(),
            step(&base(1), &x).unwrap()
        );

        assert!(PollingModel::new(base(1), 1.5).is_err());
    }

    #[test]
    fn polling_is_seed_deterministic() {
        let model = PollingModel::new(base(2), 0.4).unwrap();
        let x = state(3, 9, 2);
        let a = model
            .sample_step(&x, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let b = model
            .sample_step(&x, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.boundary, x.boundary);
    }

    #[test]
    fn expected_polling_matrix_cases() {
        let line = SystemMatrix::uniform(&Graph::line(3).unwrap(), 0.0).unwrap();
        let half = PollingModel::new(line.clone(), 0.5)
            .unwrap()
            .expected_matrix();
        assert_eq!(half.p_e().row(0), &[0.25, 0.25]);
        assert_eq!(half.p_i().row(0), &[0.5]);

        assert_eq!(
            PollingModel::new(line.clone(), 1.0)
                .unwrap()
                .expected_matrix(),
            line
        );

        let frozen = PollingModel::new(line, 0.0).unwrap().expected_matrix();
        assert_eq!(frozen.p_e().row(0), &[0.0, 0.0]);
        assert_eq!(frozen.p_i().row(0), &[1.0]);
        assert!(matches!(
            frozen.closed_form_limit(&[0.0, 1.0]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn weight_matrix_cases() {
        // internal pair among nodes {1, 2}, node 0 boundary
        let w = pairwise_weight_matrix(3, 1, 1, 2, 0.5).unwrap();
        assert_eq!(w.row(1), &[0.0, 0.5, 0.5]);
        assert_eq!(w.row(2), &[0.0, 0.5, 0.5]);
        assert_eq!(w.row(0), &[1.0, 0.0, 0.0]);

        let w = pairwise_weight_matrix(3, 1, 0, 1, 0.3).unwrap();
        assert_eq!(w.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(w.row(1), &[0.3, 0.7, 0.0]);

        let w = pairwise_weight_matrix(4, 2, 0, 1, 0.3).unwrap();
        assert_eq!(w, Matrix::identity(4));

        assert!(pairwise_weight_matrix(3, 1, 2, 2, 0.5).is_err());
        assert!(pairwise_weight_matrix(3, 1, 2, 3, 0.5).is_err());
    }

    #[test]
    fn pairwise_step_cases() {
        let x = StateVector::new(vec![1.0, 2.0], vec![4.0, 8.0]);
        // the boundary pair (0, 2) is present but practically never drawn
        let only = |i, j| {
            PairwiseModel::new(
                2,
                pairs_with_shared_alpha(4, &[(i, j, 1.0), (0, 2, 1e-13)], 0.5).unwrap(),
            )
            .unwrap()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(only(0, 1).sample_step(&x, &mut rng).unwrap(), x);

        let mid = only(2, 3).sample_step(&x, &mut rng).unwrap();
        assert_eq!(mid.internal, vec![6.0, 6.0]);
        let sum_before: f64 = x.full().iter().sum();
        let sum_after: f64 = mid.full().iter().sum();
        assert_eq!(sum_before, sum_after);

        let mixed = only(0, 3).sample_step(&x, &mut rng).unwrap();
        assert_eq!(mixed.boundary, x.boundary);
        assert_eq!(mixed.internal, vec![4.0, 4.5]);
    }

    #[test]
    fn uniform_three_node_expectation() {
        let model = PairwiseModel::uniform(1, 3, 0.5).unwrap();
        // brute force: average the three clamped pair matrices
        let mut oracle = Matrix::zeros(3, 3);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            oracle =
                oracle.add_scaled(&pairwise_weight_matrix(3, 1, i, j, 0.5).unwrap(), 1.0 / 3.0);
        }
        let blocks = model.expected_blocks();
        assert!(blocks.full_matrix().max_abs_diff(&oracle) < 1e-15);
        let expected = [
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ];
        for (r, row) in expected.iter().enumerate() {
            assert!((blocks.p_e()[(r, 0)] - row[0]).abs() < 1e-15);
            assert!((blocks.p_i()[(r, 0)] - row[1]).abs() < 1e-15);
            assert!((blocks.p_i()[(r, 1)] - row[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn internal_only_distribution_has_no_limit() {
        let dist = pairs_with_shared_alpha(4, &[(2, 3, 1.0)], 0.5).unwrap();
        assert!(PairwiseModel::new(2, dist.clone()).is_err());
        let blocks = dist.expected_blocks(2).unwrap();
        assert!(blocks.p_e().as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            blocks.closed_form_limit(&[0.0, 1.0]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn single_boundary_pair_expectation() {
        let dist = pairs_with_shared_alpha(4, &[(1, 3, 1.0)], 0.25).unwrap();
        let blocks = PairwiseModel::new(2, dist).unwrap().expected_blocks();
        assert_eq!(blocks.p_e().row(0), &[0.0, 0.0]);
        assert_eq!(blocks.p_i().row(0), &[1.0, 0.0]);
        assert_eq!(blocks.p_e().row(1), &[0.0, 0.25]);
        assert_eq!(blocks.p_i().row(1), &[0.0, 0.75]);
    }

    #[test]
    fn distribution_validation() {
        assert!(pairs_with_shared_alpha(3, &[(0, 1, 0.5), (1, 2, 0.4)], 0.5).is_err());
        assert!(pairs_with_shared_alpha(3, &[(0, 1, 0.5), (1, 0, 0.5)], 0.5).is_err());
        assert!(pairs_with_shared_alpha(3, &[(0, 1, 1.0)], 1.0).is_err());
        assert!(pairs_with_shared_alpha(3, &[(0, 1, 1.0)], 0.0).is_err());
        assert!(pairs_with_shared_alpha(3, &[(0, 3, 1.0)], 0.5).is_err());
        assert!(pairs_with_shared_alpha(3, &[(0, 1, 1.5), (1, 2, -0.5)], 0.5).is_err());
    }

    #[test]
    fn unclamped_expectation_is_doubly_stochastic() {
        let dist = PairDistribution::uniform(7, 0.3).unwrap();
        let e = dist.expected_unclamped();
        for s in e.row_sums().into_iter().chain(e.col_sums()) {
            assert!((s - 1.0).abs() < 1e-12);
        }
        // clamping breaks column sums but keeps rows stochastic
        let clamped = dist.expected_with_boundary(2);
        assert!(clamped.col_sums().iter().any(|s| (s - 1.0).abs() > 1e-3));
        for s in clamped.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_polling_has_zero_spread() {
        let model = PollingModel::new(base(3), 0.0).unwrap();
        let x = state(3, 9, 3);
        let cfg = MonteCarloConfig {
            steps: 10,
            reps: 5,
            seed: 1,
            record_stride: 1,
        };
        let report = monte_carlo_mean(&model, &x, cfg, Execution::default()).unwrap();
        for row in &report.stderr {
            assert!(row.iter().all(|&s| s == 0.0));
        }
        for (m, v) in report.final_mean().iter().zip(x.full()) {
            assert!((m - v).abs() < 1e-15);
        }
    }

    #[test]
    fn monte_carlo_is_deterministic_across_execution_modes() {
        let model = PairwiseModel::uniform(3, 12, 0.4).unwrap();
        let x = state(3, 9, 4);
        let cfg = MonteCarloConfig {
            steps: 40,
            reps: 150,
            seed: 77,
            record_stride: 7,
        };
        let a = monte_carlo_mean(&model, &x, cfg, Execution::Sequential).unwrap();
        let b = monte_carlo_mean(&model, &x, cfg, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t, vec![0, 7, 14, 21, 28, 35, 40]);
        assert!(monte_carlo_mean(
            &model,
            &x,
            MonteCarloConfig { reps: 1, ..cfg },
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn replication_is_reproducible_in_isolation() {
        // a two-replication run equals the mean of two hand-rolled paths
        let model = PollingModel::new(base(5), 0.3).unwrap();
        let x = state(3, 9, 5);
        let cfg = MonteCarloConfig {
            steps: 6,
            reps: 2,
            seed: 13,
            record_stride: 6,
        };
        let report = monte_carlo_mean(&model, &x, cfg, Execution::Sequential).unwrap();
        let path = |rep: u64| {
            let mut internal = x.internal.clone();
            for s in 0..6u64 {
                let mut rng = seed::step_rng(13, rep, s);
                model.apply_random_step(&x.boundary, &mut internal, &mut rng);
            }
            internal
        };
        let (a, b) = (path(0), path(1));
        for (idx, m) in report.final_mean()[3..].iter().enumerate() {
            assert!((m - 0.5 * (a[idx] + b[idx])).abs() < 1e-14);
        }
    }

    #[test]
    fn report_json_round_trip() {
        let model = PollingModel::new(base(6), 0.5).unwrap();
        let x = state(3, 9, 6);
        let cfg = MonteCarloConfig {
            steps: 5,
            reps: 4,
            seed: 2,
            record_stride: 2,
        };
        let report = monte_carlo_mean(&model, &x, cfg, Execution::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mc.json");
        report.save_json(&path).unwrap();
        assert_eq!(MonteCarloReport::load_json(&path).unwrap(), report);
    }
}
