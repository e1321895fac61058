//! The block system matrix and the closed-form limit.
//!
//! The full operator is
//!
//! ```text
//!     L = [ I_K   0  ]
//!         [ P_e  P_i ]
//! ```
//!
//! where row `k` of `[P_e | P_i]` holds the averaging weights of internal
//! node `K + k`. Only the two lower blocks are stored.

use std::io::Write;
use std::path::Path;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::format::sig17;
use crate::graph::Graph;
use crate::matrix::{max_abs, LuFactors, Matrix};
use crate::{Error, Result, CONSTRUCTION_TOL, PIVOT_TOL, RESIDUAL_TOL};

/// Node values split into the boundary and internal parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub boundary: Vec<f64>,
    pub internal: Vec<f64>,
}

impl StateVector {
    pub fn new(boundary: Vec<f64>, internal: Vec<f64>) -> Self {
        StateVector { boundary, internal }
    }

    /// Split a full `N`-vector after the first `num_boundary` entries.
    pub fn from_full(num_boundary: usize, full: &[f64]) -> Result<Self> {
        if num_boundary > full.len() {
            return Err(Error::DimensionMismatch {
                what: "state vector",
                expected: num_boundary,
                got: full.len(),
            });
        }
        Ok(StateVector {
            boundary: full[..num_boundary].to_vec(),
            internal: full[num_boundary..].to_vec(),
        })
    }

    pub fn full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.boundary);
        v.extend_from_slice(&self.internal);
        v
    }

    pub fn len(&self) -> usize {
        self.boundary.len() + self.internal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_dims(&self, num_boundary: usize, num_internal: usize) -> Result<()> {
        check_len("boundary values", num_boundary, self.boundary.len())?;
        check_len("internal values", num_internal, self.internal.len())
    }

    /// Smallest and largest value over all nodes.
    pub fn envelope(&self) -> (f64, f64) {
        self.boundary
            .iter()
            .chain(&self.internal)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Weight blocks of the averaging operator.
///
/// Invariants: entries lie in `[0, 1]` and each row of `[P_e | P_i]` sums to
/// one within [`CONSTRUCTION_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    p_e: Matrix,
    p_i: Matrix,
}

/// Which route computes the closed-form limit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    /// Direct LU up to [`Solver::DIRECT_MAX`] internal nodes, Neumann series beyond.
    #[default]
    Auto,
    Direct,
    Neumann,
}

impl Solver {
    pub const DIRECT_MAX: usize = 2000;
    /// Neumann terms are summed until the increment drops below this.
    pub const NEUMANN_INCREMENT_TOL: f64 = 1e-14;
    pub const NEUMANN_MAX_TERMS: usize = 10_000_000;

    fn resolve(self, num_internal: usize) -> Solver {
        match self {
            Solver::Auto if num_internal <= Self::DIRECT_MAX => Solver::Direct,
            Solver::Auto => Solver::Neumann,
            s => s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverReport {
    Direct { min_pivot: f64 },
    Neumann { terms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitResult {
    pub state: StateVector,
    /// `max |(I - P_i) x_i - P_e x_b|`
    pub residual: f64,
    pub solver: SolverReport,
}

/// Output of [`SystemMatrix::spectral_radius_bound`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// Dominant-eigenvalue estimate of `P_i`.
    pub estimate: f64,
    /// Collatz-Wielandt bounds from the final iterate; `lower <= rho <= upper`.
    /// The bracket only closes when `P_i` is irreducible. If the internal
    /// nodes split into several components, `lower` tends to the smallest
    /// component radius while `estimate` still tends to rho.
    pub lower: f64,
    pub upper: f64,
    /// `||P_i^t||_inf^(1/t)` at the final power `t`, an upper bound for rho.
    pub gelfand_bound: f64,
    pub iterations: usize,
}

impl SystemMatrix {
    /// Validate and wrap the two weight blocks.
    pub fn from_blocks(p_e: Matrix, p_i: Matrix) -> Result<Self> {
        let m = p_i.rows();
        check_len("P_i columns", m, p_i.cols())?;
        check_len("P_e rows", m, p_e.rows())?;
        for (name, block) in [("P_e", &p_e), ("P_i", &p_i)] {
            for (idx, &v) in block.as_slice().iter().enumerate() {
                if !(0.0..=1.0 + CONSTRUCTION_TOL).contains(&v) {
                    let (r, c) = (idx / block.cols().max(1), idx % block.cols().max(1));
                    return Err(Error::InvalidWeights(format!(
                        "{name}({r},{c}) = {v} is outside [0, 1]"
                    )));
                }
            }
        }
        for r in 0..m {
            let sum: f64 = p_e.row(r).iter().chain(p_i.row(r)).sum();
            if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                return Err(Error::InvalidWeights(format!(
                    "row {r} of [P_e | P_i] sums to {sum}"
                )));
            }
        }
        Ok(SystemMatrix { p_e, p_i })
    }

    /// Each internal node keeps `self_weight` and splits the rest equally
    /// among its neighbours.
    pub fn uniform(graph: &Graph, self_weight: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&self_weight) {
            return Err(Error::InvalidWeights(format!(
                "self weight {self_weight} outside [0, 1)"
            )));
        }
        Self::from_row_weights(graph, |_, neighbors| {
            let share = (1.0 - self_weight) / neighbors.len() as f64;
            (self_weight, vec![share; neighbors.len()])
        })
    }

    /// Positive uniform draws for the self weight and each neighbour,
    /// normalised per row. Deterministic in `seed`.
    pub fn random(graph: &Graph, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(graph, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(graph: &Graph, rng: &mut R) -> Result<Self> {
        Self::from_row_weights(graph, |_, neighbors| {
            let own: f64 = rng.sample(Open01);
            let others: Vec<f64> = neighbors.iter().map(|_| rng.sample(Open01)).collect();
            let total = own + others.iter().sum::<f64>();
            (own / total, others.into_iter().map(|w| w / total).collect())
        })
    }

    /// Metropolis-Hastings weights `1 / (1 + max(d_n, d_m))` on each edge
    /// with the remainder on the diagonal. On a graph without boundary nodes
    /// the resulting matrix is symmetric and doubly stochastic.
    pub fn metropolis(graph: &Graph) -> Result<Self> {
        let degree = |n| graph.degree(n).unwrap_or(0);
        Self::from_row_weights(graph, |node, neighbors| {
            let d = degree(node);
            let weights: Vec<f64> = neighbors
                .iter()
                .map(|&m| 1.0 / (1.0 + d.max(degree(m)) as f64))
                .collect();
            (1.0 - weights.iter().sum::<f64>(), weights)
        })
    }

    fn from_row_weights<F>(graph: &Graph, mut row: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize]) -> (f64, Vec<f64>),
    {
        let k = graph.num_boundary();
        let m = graph.num_internal();
        let mut p_e = Matrix::zeros(m, k);
        let mut p_i = Matrix::zeros(m, m);
        for r in 0..m {
            let node = k + r;
            let neighbors = graph.neighbors(node)?;
            if neighbors.is_empty() {
                return Err(Error::IsolatedInternal(node));
            }
            let (own, weights) = row(node, neighbors);
            p_i[(r, r)] = own;
            for (&nb, w) in neighbors.iter().zip(weights) {
                if nb < k {
                    p_e[(r, nb)] = w;
                } else {
                    p_i[(r, nb - k)] = w;
                }
            }
        }
        Self::from_blocks(p_e, p_i)
    }

    /// Rebuild from a full `N x N` operator whose first `num_boundary` rows
    /// must be identity rows.
    pub fn from_full(num_boundary: usize, full: &Matrix) -> Result<Self> {
        let n = full.rows();
        check_len("full operator columns", n, full.cols())?;
        if num_boundary > n {
            return Err(Error::DimensionMismatch {
                what: "boundary count",
                expected: n,
                got: num_boundary,
            });
        }
        for r in 0..num_boundary {
            for c in 0..n {
                let expected = if r == c { 1.0 } else { 0.0 };
                if full[(r, c)] != expected {
                    return Err(Error::InvalidWeights(format!(
                        "boundary row {r} is not an identity row"
                    )));
                }
            }
        }
        let m = n - num_boundary;
        let mut p_e = Matrix::zeros(m, num_boundary);
        let mut p_i = Matrix::zeros(m, m);
        for r in 0..m {
            let row = full.row(num_boundary + r);
            p_e.row_mut(r).copy_from_slice(&row[..num_boundary]);
            p_i.row_mut(r).copy_from_slice(&row[num_boundary..]);
        }
        Self::from_blocks(p_e, p_i)
    }

    pub fn num_boundary(&self) -> usize {
        self.p_e.cols()
    }

    pub fn num_internal(&self) -> usize {
        self.p_i.rows()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_boundary() + self.num_internal()
    }

    pub fn p_e(&self) -> &Matrix {
        &self.p_e
    }

    pub fn p_i(&self) -> &Matrix {
        &self.p_i
    }

    /// Weights may be non-zero only on graph edges and the diagonal of `P_i`.
    pub fn check_support(&self, graph: &Graph) -> Result<()> {
        check_len(
            "graph boundary count",
            self.num_boundary(),
            graph.num_boundary(),
        )?;
        check_len(
            "graph internal count",
            self.num_internal(),
            graph.num_internal(),
        )?;
        let k = self.num_boundary();
        for r in 0..self.num_internal() {
            let node = k + r;
            let full_row = self.p_e.row(r).iter().chain(self.p_i.row(r));
            for (col, &w) in full_row.enumerate() {
                if w != 0.0 && col != node && !graph.has_edge(node, col) {
                    return Err(Error::InvalidWeights(format!(
                        "weight {w} from node {node} to non-neighbour {col}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Value internal node `K + row` takes after one averaging step.
    pub fn average_row(&self, row: usize, boundary: &[f64], internal: &[f64]) -> f64 {
        crate::matrix::dot(self.p_e.row(row), boundary)
            + crate::matrix::dot(self.p_i.row(row), internal)
    }

    /// The full `N x N` operator with the identity block materialised.
    pub fn full_matrix(&self) -> Matrix {
        let k = self.num_boundary();
        let n = self.num_nodes();
        let mut full = Matrix::zeros(n, n);
        for b in 0..k {
            full[(b, b)] = 1.0;
        }
        for r in 0..self.num_internal() {
            let row = full.row_mut(k + r);
            row[..k].copy_from_slice(self.p_e.row(r));
            row[k..].copy_from_slice(self.p_i.row(r));
        }
        full
    }

    /// `||P_i^t||_inf`. Since `P_i` is non-negative this is the largest
    /// entry of `P_i^t 1`.
    pub fn internal_power_norm(&self, t: usize) -> f64 {
        let mut u = vec![1.0; self.num_internal()];
        let mut next = vec![0.0; self.num_internal()];
        for _ in 0..t {
            self.p_i.mul_vec_into(&u, &mut next);
            std::mem::swap(&mut u, &mut next);
        }
        max_abs(&u)
    }

    /// Estimate the spectral radius of `P_i` by power iteration.
    ///
    /// Iterates on the lazy matrix `(P_i + I) / 2`, whose Perron root
    /// `(1 + rho) / 2` strictly dominates every other eigenvalue in modulus,
    /// so periodic structure in `P_i` (e.g. bipartite graphs with zero self
    /// weight) does not stall convergence. Stops early once the
    /// Collatz-Wielandt bracket is narrower than `1e-14`, otherwise after
    /// `max_power` iterations.
    pub fn spectral_radius_bound(&self, max_power: usize) -> SpectralEstimate {
        let m = self.num_internal();
        let mut v = vec![1.0; m];
        let mut pv = vec![0.0; m];
        // P_i^t 1, kept normalised with its log-scale accumulated separately
        let mut g = vec![1.0; m];
        let mut g_next = vec![0.0; m];
        let mut log_norm = 0.0;
        let mut gelfand_zero = false;

        let mut estimate = 0.0;
        let mut lower = 0.0;
        let mut upper = 1.0;
        let mut iterations = 0;

        for t in 1..=max_power.max(1) {
            iterations = t;
            self.p_i.mul_vec_into(&v, &mut pv);
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for (p, x) in pv.iter().zip(&v) {
                let ratio = p / x;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            lower = lo.max(0.0);
            upper = hi.max(0.0);

            // lazy iterate w = (P v + v) / 2, then normalise
            let mut w_norm: f64 = 0.0;
            for (p, x) in pv.iter_mut().zip(&v) {
                *p = 0.5 * (*p + x);
                w_norm = w_norm.max(*p);
            }
            estimate = (2.0 * w_norm - 1.0).max(0.0);
            for (x, p) in v.iter_mut().zip(&pv) {
                *x = p / w_norm;
            }

            if !gelfand_zero {
                self.p_i.mul_vec_into(&g, &mut g_next);
                let s = max_abs(&g_next);
                if s == 0.0 {
                    gelfand_zero = true;
                } else {
                    log_norm += s.ln();
                    for (a, b) in g.iter_mut().zip(&g_next) {
                        *a = b / s;
                    }
                }
            }

            if upper - lower < 1e-14 {
                break;
            }
        }
        let gelfand_bound = if gelfand_zero {
            0.0
        } else {
            (log_norm / iterations as f64).exp()
        };
        SpectralEstimate {
            estimate: estimate.clamp(lower, upper),
            lower,
            upper,
            gelfand_bound,
            iterations,
        }
    }

    fn factor_internal(&self) -> Result<LuFactors> {
        let m = self.num_internal();
        let a = Matrix::identity(m).add_scaled(&self.p_i, -1.0);
        LuFactors::factor(&a, PIVOT_TOL)
    }

    /// `x_i = (I - P_i)^-1 P_e x_b` with the default solver.
    pub fn closed_form_limit(&self, boundary: &[f64]) -> Result<LimitResult> {
        self.closed_form_limit_with(boundary, Solver::Auto)
    }

    pub fn closed_form_limit_with(&self, boundary: &[f64], solver: Solver) -> Result<LimitResult> {
        if self.num_boundary() == 0 {
            return Err(Error::NoBoundary);
        }
        check_len("boundary values", self.num_boundary(), boundary.len())?;
        let rhs = self.p_e.mul_vec(boundary);
        let (internal, report) = match solver.resolve(self.num_internal()) {
            Solver::Direct => {
                let lu = self.factor_internal()?;
                (
                    lu.solve(&rhs),
                    SolverReport::Direct {
                        min_pivot: lu.min_pivot(),
                    },
                )
            }
            _ => {
                let (x, terms) = self.neumann(&rhs)?;
                (x, SolverReport::Neumann { terms })
            }
        };
        let residual = self.residual(boundary, &internal);
        let scale = max_abs(boundary).max(1.0);
        if residual.is_nan() || residual > RESIDUAL_TOL * scale {
            return Err(Error::NotConverged {
                what: "closed-form limit (residual check)",
                limit: 1,
            });
        }
        Ok(LimitResult {
            state: StateVector::new(boundary.to_vec(), internal),
            residual,
            solver: report,
        })
    }

    /// `sum_m P_i^m rhs` until the increment is below the Neumann tolerance.
    fn neumann(&self, rhs: &[f64]) -> Result<(Vec<f64>, usize)> {
        let scale = max_abs(rhs).max(1.0);
        let mut sum = rhs.to_vec();
        let mut term = rhs.to_vec();
        let mut next = vec![0.0; rhs.len()];
        for terms in 1..=Solver::NEUMANN_MAX_TERMS {
            if max_abs(&term) < Solver::NEUMANN_INCREMENT_TOL * scale {
                return Ok((sum, terms));
            }
            self.p_i.mul_vec_into(&term, &mut next);
            std::mem::swap(&mut term, &mut next);
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
        }
        Err(Error::NotConverged {
            what: "Neumann series",
            limit: Solver::NEUMANN_MAX_TERMS,
        })
    }

    /// `max |(I - P_i) x_i - P_e x_b|`
    pub fn residual(&self, boundary: &[f64], internal: &[f64]) -> f64 {
        let pe = self.p_e.mul_vec(boundary);
        let pi = self.p_i.mul_vec(internal);
        internal
            .iter()
            .zip(pi.iter().zip(&pe))
            .map(|(x, (a, b))| (x - a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `(I - P_i)^-1 P_e`, the lower-left block of `lim L^k`.
    pub fn limit_operator_rows(&self) -> Result<Matrix> {
        if self.num_boundary() == 0 {
            return Err(Error::NoBoundary);
        }
        Ok(self.factor_internal()?.solve_matrix(&self.p_e))
    }

    /// Write the full operator as CSV, one row per line, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let full = self.full_matrix();
        for r in 0..full.rows() {
            let line: Vec<String> = full.row(r).iter().map(|&v| sig17(v)).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(num_boundary: usize, text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, line)| {
                line.split(',')
                    .map(|cell| {
                        cell.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Csv(format!("line {}: {cell:?}: {e}", i + 1)))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let full = Matrix::from_rows(rows.len(), &rows)?;
        Self::from_full(num_boundary, &full)
    }

    pub fn load_csv(num_boundary: usize, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(num_boundary, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::max_abs_diff;

    fn line(n: usize, self_weight: f64) -> SystemMatrix {
        SystemMatrix::uniform(&Graph::line(n).unwrap(), self_weight).unwrap()
    }

    #[test]
    fn uniform_line_of_three() {
        let m = line(3, 0.0);
        assert_eq!(m.p_e().row(0), &[0.5, 0.5]);
        assert_eq!(m.p_i().row(0), &[0.0]);
    }

    #[test]
    fn uniform_star_with_self_weight() {
        let g = Graph::new(4, 1, [(4, 0), (4, 1), (4, 2), (4, 3)]).unwrap();
        let m = SystemMatrix::uniform(&g, 0.2).unwrap();
        for &w in m.p_e().row(0) {
            assert!((w - 0.2).abs() < 1e-15);
        }
        assert_eq!(m.p_i()[(0, 0)], 0.2);
    }

    #[test]
    fn isolated_internal_rejected() {
        let g = Graph::new(1, 2, [(0, 1)]).unwrap();
        assert!(matches!(
            SystemMatrix::uniform(&g, 0.0),
            Err(Error::IsolatedInternal(2))
        ));
        assert!(matches!(
            SystemMatrix::random(&g, 1),
            Err(Error::IsolatedInternal(2))
        ));
        assert!(SystemMatrix::uniform(&Graph::line(3).unwrap(), 1.0).is_err());
    }

    #[test]
    fn random_weights_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Graph::random_connected(4, 12, 0.2, &mut rng).unwrap();
        let a = SystemMatrix::random(&g, 42).unwrap();
        let b = SystemMatrix::random(&g, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, SystemMatrix::random(&g, 43).unwrap());
        a.check_support(&g).unwrap();
        let full = a.full_matrix();
        for (r, s) in full.row_sums().iter().enumerate() {
            assert!((s - 1.0).abs() <= 1e-12, "row {r} sums to {s}");
        }
        // strictly zero off the edge set
        for r in g.num_boundary()..g.num_nodes() {
            for c in 0..g.num_nodes() {
                if r != c && !g.has_edge(r, c) {
                    assert_eq!(full[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn negative_and_non_stochastic_blocks_rejected() {
        let p_e = Matrix::from_rows(1, &[vec![1.2]]).unwrap();
        let p_i = Matrix::from_rows(1, &[vec![-0.2]]).unwrap();
        assert!(matches!(
            SystemMatrix::from_blocks(p_e, p_i),
            Err(Error::InvalidWeights(_))
        ));

        let p_e = Matrix::from_rows(1, &[vec![0.5]]).unwrap();
        let p_i = Matrix::from_rows(1, &[vec![0.4]]).unwrap();
        assert!(matches!(
            SystemMatrix::from_blocks(p_e, p_i),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn support_violation_detected() {
        let g = Graph::line(4).unwrap(); // 0 - 2 - 3 - 1
        let p_e = Matrix::from_rows(2, &[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let ok = Matrix::from_rows(2, &[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        SystemMatrix::from_blocks(p_e.clone(), ok)
            .unwrap()
            .check_support(&g)
            .unwrap();
        // node 2 may not weight boundary node 1
        let p_e_bad = Matrix::from_rows(2, &[vec![0.25, 0.25], vec![0.0, 0.5]]).unwrap();
        let p_i = Matrix::from_rows(2, &[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let bad = SystemMatrix::from_blocks(p_e_bad, p_i).unwrap();
        assert!(bad.check_support(&g).is_err());
    }

    #[test]
    fn metropolis_is_doubly_stochastic_without_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Graph::random_connected(0, 15, 0.2, &mut rng).unwrap();
        let full = SystemMatrix::metropolis(&g).unwrap().full_matrix();
        assert!(full.max_abs_diff(&full.transpose()) < 1e-15);
        for s in full.col_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_estimate_trivial_cases() {
        // internal node weighted entirely to the boundary
        let zero = line(3, 0.0).spectral_radius_bound(100);
        assert_eq!(zero.estimate, 0.0);
        assert_eq!(zero.gelfand_bound, 0.0);

        for alpha in [0.1, 0.5, 0.9] {
            let est = line(3, alpha).spectral_radius_bound(100);
            assert!((est.estimate - alpha).abs() < 1e-15, "{est:?}");
        }
    }

    #[test]
    fn spectral_estimate_tridiagonal() {
        // rho of tridiag(1/2, 0, 1/2) of size 3: the characteristic polynomial
        // -l^3 + l/2 has roots 0, +-1/sqrt(2)
        let roots = brute_force_roots(|l| -l * l * l + 0.5 * l, -1.0, 1.0);
        let rho = roots.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!((rho - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let est = line(5, 0.0).spectral_radius_bound(1000);
        assert!((est.estimate - rho).abs() < 1e-10, "{est:?}");
        assert!(est.lower <= rho + 1e-12 && rho <= est.upper + 1e-12);
        assert!(est.gelfand_bound >= rho - 1e-12);
    }

    /// Sign changes of `f` on a fine grid, refined by bisection.
    fn brute_force_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
        let steps = 10_007;
        let h = (hi - lo) / steps as f64;
        let mut roots = Vec::new();
        for i in 0..steps {
            let (mut a, mut b) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
            if f(a) == 0.0 {
                roots.push(a);
                continue;
            }
            if f(a).signum() == f(b).signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if f(a).signum() == f(mid).signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        roots
    }

    #[test]
    fn constant_boundary_gives_constant_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Graph::random_connected(3, 9, 0.2, &mut rng).unwrap();
        let m = SystemMatrix::random(&g, 8).unwrap();
        let lim = m.closed_form_limit(&[2.5; 3]).unwrap();
        for v in &lim.state.internal {
            assert!((v - 2.5).abs() < 1e-12);
        }
        assert_eq!(lim.state.boundary, vec![2.5; 3]);
    }

    #[test]
    fn line_limit_is_linear() {
        for n in [3, 4, 7] {
            for alpha in [0.0, 0.3] {
                let lim = line(n, alpha).closed_form_limit(&[1.0, 4.0]).unwrap();
                for (k, v) in lim.state.internal.iter().enumerate() {
                    let expected = 1.0 + (k + 1) as f64 * 3.0 / (n - 1) as f64;
                    assert!((v - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn neumann_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Graph::random_connected(2, 20, 0.1, &mut rng).unwrap();
        let m = SystemMatrix::random(&g, 1).unwrap();
        let xb = [-1.0, 3.0];
        let direct = m.closed_form_limit_with(&xb, Solver::Direct).unwrap();
        let neumann = m.closed_form_limit_with(&xb, Solver::Neumann).unwrap();
        assert!(matches!(neumann.solver, SolverReport::Neumann { .. }));
        assert!(max_abs_diff(&direct.state.internal, &neumann.state.internal) < 1e-12);
    }

    #[test]
    fn limit_operator_small_lines() {
        let rows = line(3, 0.0).limit_operator_rows().unwrap();
        assert_eq!(rows.to_rows(), vec![vec![0.5, 0.5]]);

        // (I - P_i) = [[1, -1/2], [-1/2, 1]], P_e = [[1/2, 0], [0, 1/2]]
        // solution by hand: [[2/3, 1/3], [1/3, 2/3]]
        let rows = line(4, 0.0).limit_operator_rows().unwrap();
        let expected =
            Matrix::from_rows(2, &[vec![2.0 / 3.0, 1.0 / 3.0], vec![1.0 / 3.0, 2.0 / 3.0]])
                .unwrap();
        assert!(rows.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn detached_component_is_singular() {
        // internal pair {1, 2} never talks to the boundary
        let g = Graph::new(1, 3, [(1, 2), (0, 3)]).unwrap();
        let m = SystemMatrix::uniform(&g, 0.0).unwrap();
        assert!(matches!(
            m.closed_form_limit(&[1.0]),
            Err(Error::Singular { .. })
        ));
        assert!(matches!(
            m.limit_operator_rows(),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn no_boundary_rejected() {
        let g = Graph::new(0, 2, [(0, 1)]).unwrap();
        let m = SystemMatrix::uniform(&g, 0.5).unwrap();
        assert!(matches!(m.closed_form_limit(&[]), Err(Error::NoBoundary)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Graph::random_connected(3, 6, 0.3, &mut rng).unwrap();
        let m = SystemMatrix::random(&g, 77).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 9);
        let back = SystemMatrix::parse_csv(3, &text).unwrap();
        assert_eq!(back, m);
        assert!(SystemMatrix::parse_csv(4, &text).is_err());
    }

    #[test]
    fn power_norm_decays() {
        let m = line(6, 0.2);
        assert!(m.internal_power_norm(0) == 1.0);
        assert!(m.internal_power_norm(200) < 1.0);
        assert!(m.internal_power_norm(50) >= m.internal_power_norm(51));
    }
}
