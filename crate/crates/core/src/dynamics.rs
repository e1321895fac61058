//! Synchronous averaging `x_i(t+1) = P_e x_b + P_i x_i(t)` with fixed
//! boundary values.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::format::sig17;
use crate::linalg::{check_len, StateVector, SystemMatrix};
use crate::matrix::{max_abs_diff, LuFactors};
use crate::seed;
use crate::{Error, Execution, Result};

/// One synchronous update. The boundary part is copied unchanged.
pub fn step(m: &SystemMatrix, x: &StateVector) -> Result<StateVector> {
    x.check_dims(m.num_boundary(), m.num_internal())?;
    let mut next = vec![0.0; m.num_internal()];
    step_internal(m, &x.boundary, &x.internal, &mut next);
    Ok(StateVector::new(x.boundary.clone(), next))
}

pub(crate) fn step_internal(m: &SystemMatrix, boundary: &[f64], internal: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = m.average_row(r, boundary, internal);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub state: StateVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Recorded states: step 0, every `record_stride`-th step and the last step.
    pub snapshots: Vec<Snapshot>,
    pub record_stride: usize,
    /// First step `t` whose change `max |x(t) - x(t-1)|` fell below the tolerance.
    pub converged_at: Option<usize>,
    /// Change made by the last step taken (0 if no step was taken).
    pub final_delta: f64,
    /// Change made by each step, `deltas[t - 1]` for step `t`.
    pub deltas: Vec<f64>,
}

impl Trajectory {
    pub fn initial(&self) -> &StateVector {
        &self.snapshots[0].state
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory is never empty")
    }

    pub fn final_state(&self) -> &StateVector {
        &self.last().state
    }

    pub fn steps_taken(&self) -> usize {
        self.last().t
    }

    /// Least-squares slope of `ln(delta_t)` against `t`, over steps whose
    /// change is above the round-off floor. `None` with fewer than 3 usable
    /// points.
    pub fn fitted_log_rate(&self) -> Option<f64> {
        let scale = self.deltas.first().copied().unwrap_or(0.0).max(1.0);
        let floor = 1e-12 * scale;
        let points: Vec<(f64, f64)> = self
            .deltas
            .iter()
            .enumerate()
            .take_while(|(_, &d)| d > floor)
            .map(|(i, &d)| ((i + 1) as f64, d.ln()))
            .collect();
        if points.len() < 3 {
            return None;
        }
        let n = points.len() as f64;
        let mean_t = points.iter().map(|p| p.0).sum::<f64>() / n;
        let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points
            .iter()
            .map(|(t, y)| (t - mean_t) * (y - mean_y))
            .sum();
        let sxx: f64 = points.iter().map(|(t, _)| (t - mean_t).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// CSV with header `t,x_1,...,x_N`, one row per snapshot.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.initial().len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|i| format!("x_{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for snap in &self.snapshots {
            let mut line = snap.t.to_string();
            for v in snap.state.full() {
                line.push(',');
                line.push_str(&sig17(v));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Read the snapshots back from [`Trajectory::write_csv`] output.
    pub fn parse_csv(num_boundary: usize, text: &str) -> Result<Vec<Snapshot>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Csv("empty file".into()))?;
        let columns: Vec<&str> = header.split(',').collect();
        if columns.first() != Some(&"t") {
            return Err(Error::Csv(format!("unexpected header {header:?}")));
        }
        for (i, col) in columns.iter().enumerate().skip(1) {
            if *col != format!("x_{i}") {
                return Err(Error::Csv(format!("unexpected column {col:?}")));
            }
        }
        let n = columns.len() - 1;
        let mut snapshots = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != n + 1 {
                return Err(Error::Csv(format!(
                    "row {} has {} cells, expected {}",
                    lineno + 1,
                    cells.len(),
                    n + 1
                )));
            }
            let t = cells[0]
                .parse()
                .map_err(|e| Error::Csv(format!("row {}: step: {e}", lineno + 1)))?;
            let values = cells[1..]
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|e| Error::Csv(format!("row {}: {c:?}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            snapshots.push(Snapshot {
                t,
                state: StateVector::from_full(num_boundary, &values)?,
            });
        }
        Ok(snapshots)
    }
}

/// Settings for [`iterate_until_convergence`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationParams {
    pub tol: f64,
    pub max_steps: usize,
    pub record_stride: usize,
}

impl Default for IterationParams {
    fn default() -> Self {
        IterationParams {
            tol: 1e-12,
            max_steps: 1_000_000,
            record_stride: 1,
        }
    }
}

/// Step until the max-norm change of a step drops below `params.tol` or
/// `params.max_steps` steps have been taken. Non-convergence is reported
/// through `converged_at == None`, not as an error.
pub fn iterate_until_convergence(
    m: &SystemMatrix,
    x0: &StateVector,
    params: IterationParams,
) -> Result<Trajectory> {
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance {} must be positive",
            params.tol
        )));
    }
    if params.max_steps == 0 {
        return Err(Error::InvalidInput("max_steps must be at least 1".into()));
    }
    run(
        m,
        x0,
        params.max_steps,
        params.record_stride,
        Some(params.tol),
    )
}

/// Exactly `steps` updates, no early stop.
pub fn run_steps(
    m: &SystemMatrix,
    x0: &StateVector,
    steps: usize,
    record_stride: usize,
) -> Result<Trajectory> {
    run(m, x0, steps, record_stride, None)
}

fn run(
    m: &SystemMatrix,
    x0: &StateVector,
    max_steps: usize,
    record_stride: usize,
    tol: Option<f64>,
) -> Result<Trajectory> {
    x0.check_dims(m.num_boundary(), m.num_internal())?;
    if record_stride == 0 {
        return Err(Error::InvalidInput(
            "record_stride must be at least 1".into(),
        ));
    }
    let boundary = &x0.boundary;
    let mut current = x0.internal.clone();
    let mut next = vec![0.0; current.len()];
    let mut snapshots = vec![Snapshot {
        t: 0,
        state: x0.clone(),
    }];
    let mut deltas = Vec::new();
    let mut converged_at = None;
    let mut t = 0;
    while t < max_steps {
        step_internal(m, boundary, &current, &mut next);
        std::mem::swap(&mut current, &mut next);
        t += 1;
        let delta = max_abs_diff(&current, &next);
        deltas.push(delta);
        if t % record_stride == 0 {
            snapshots.push(Snapshot {
                t,
                state: StateVector::new(boundary.clone(), current.clone()),
            });
        }
        if tol.is_some_and(|tol| delta < tol) {
            converged_at = Some(t);
            break;
        }
    }
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot {
            t,
            state: StateVector::new(boundary.clone(), current),
        });
    }
    Ok(Trajectory {
        snapshots,
        record_stride,
        converged_at,
        final_delta: deltas.last().copied().unwrap_or(0.0),
        deltas,
    })
}

/// Standard deviation of the random internal start values used by
/// [`dependence_on_initial_internal`].
pub const INITIAL_SPREAD: f64 = 5.0;

/// Draw `n` values from a centred normal with the given standard deviation.
pub fn gaussian_values<R: Rng + ?Sized>(rng: &mut R, n: usize, std_dev: f64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, std_dev)
        .map_err(|e| Error::InvalidInput(format!("standard deviation {std_dev}: {e}")))?;
    Ok((0..n).map(|_| normal.sample(rng)).collect())
}

/// Run to convergence from one random internal start per seed and return the
/// largest pairwise max-norm distance between the final internal states.
pub fn dependence_on_initial_internal(
    m: &SystemMatrix,
    boundary: &[f64],
    seeds: &[u64],
    params: IterationParams,
    exec: Execution,
) -> Result<f64> {
    if m.num_boundary() == 0 {
        return Err(Error::NoBoundary);
    }
    check_len("boundary values", m.num_boundary(), boundary.len())?;
    if seeds.len() < 2 {
        return Err(Error::InvalidInput("need at least two seeds".into()));
    }
    // fail fast on the absorbing condition instead of spinning to max_steps
    let identity_minus = crate::Matrix::identity(m.num_internal()).add_scaled(m.p_i(), -1.0);
    LuFactors::factor(&identity_minus, crate::PIVOT_TOL)?;

    let finals = exec.map_indices(seeds.len(), |i| -> Result<Vec<f64>> {
        let mut rng = seed::replication_rng(seeds[i], 0);
        let internal = gaussian_values(&mut rng, m.num_internal(), INITIAL_SPREAD)?;
        let x0 = StateVector::new(boundary.to_vec(), internal);
        let traj = iterate_until_convergence(
            m,
            &x0,
            IterationParams {
                record_stride: usize::MAX,
                ..params
            },
        )?;
        Ok(traj.final_state().internal.clone())
    });
    let finals = finals.into_iter().collect::<Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for a in 0..finals.len() {
        for b in a + 1..finals.len() {
            worst = worst.max(max_abs_diff(&finals[a], &finals[b]));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(k: usize, m: usize, seed: u64) -> SystemMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::random_connected(k, m, 0.15, &mut rng).unwrap();
        SystemMatrix::random(&g, seed).unwrap()
    }

    #[test]
    fn step_hand_average() {
        let m = SystemMatrix::uniform(&Graph::line(3).unwrap(), 0.0).unwrap();
        let x = StateVector::new(vec![0.0, 1.0], vec![0.0]);
        assert_eq!(step(&m, &x).unwrap().internal, vec![0.5]);
    }

    #[test]
    fn step_keeps_fixed_points() {
        let m = random_instance(3, 8, 1);
        let xb = vec![1.0, -2.0, 0.5];
        let lim = m.closed_form_limit(&xb).unwrap().state;
        let next = step(&m, &lim).unwrap();
        assert_eq!(next.boundary, lim.boundary);
        assert!(max_abs_diff(&next.internal, &lim.internal) < 1e-12);

        let constant = StateVector::new(vec![3.0; 3], vec![3.0; 8]);
        let next = step(&m, &constant).unwrap();
        assert!(max_abs_diff(&next.internal, &constant.internal) < 1e-14);
    }

    #[test]
    fn step_rejects_bad_dimensions() {
        let m = random_instance(2, 4, 2);
        let x = StateVector::new(vec![0.0; 2], vec![0.0; 3]);
        assert!(matches!(step(&m, &x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn iteration_matches_closed_form() {
        let m = random_instance(4, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xb = gaussian_values(&mut rng, 4, 1.0).unwrap();
        let xi = gaussian_values(&mut rng, 16, 5.0).unwrap();
        let traj = iterate_until_convergence(
            &m,
            &StateVector::new(xb.clone(), xi),
            IterationParams {
                tol: 1e-10,
                max_steps: 100_000,
                record_stride: 10,
            },
        )
        .unwrap();
        assert!(traj.converged_at.is_some());
        let lim = m.closed_form_limit(&xb).unwrap();
        assert!(max_abs_diff(&traj.final_state().internal, &lim.state.internal) < 1e-8);
        // boundary identical in every snapshot
        for s in &traj.snapshots {
            assert_eq!(s.state.boundary, xb);
        }
    }

    #[test]
    fn start_at_fixed_point_converges_immediately() {
        let m = random_instance(2, 5, 4);
        let lim = m.closed_form_limit(&[0.0, 1.0]).unwrap().state;
        let traj = iterate_until_convergence(&m, &lim, IterationParams::default()).unwrap();
        assert!(matches!(traj.converged_at, Some(0 | 1)));
    }

    #[test]
    fn detached_component_never_settles_on_boundary_value() {
        // internal pair {1, 2} swaps values forever with zero self weight
        let g = Graph::new(1, 3, [(1, 2), (0, 3)]).unwrap();
        let m = SystemMatrix::uniform(&g, 0.0).unwrap();
        let x0 = StateVector::new(vec![1.0], vec![0.0, 5.0, 0.0]);
        let traj = iterate_until_convergence(
            &m,
            &x0,
            IterationParams {
                tol: 1e-10,
                max_steps: 1000,
                record_stride: 100,
            },
        )
        .unwrap();
        assert_eq!(traj.converged_at, None);
        assert_eq!(traj.steps_taken(), 1000);
        assert!(m.closed_form_limit(&[1.0]).is_err());

        // with self weight the pair settles on its own average, not on 1
        let lazy = SystemMatrix::uniform(&g, 0.5).unwrap();
        let traj = iterate_until_convergence(&lazy, &x0, IterationParams::default()).unwrap();
        let fin = &traj.final_state().internal;
        assert!((fin[0] - 2.5).abs() < 1e-9 && (fin[1] - 2.5).abs() < 1e-9);
        assert!((fin[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stride_keeps_first_and_last() {
        let m = random_instance(2, 6, 5);
        let x0 = StateVector::new(vec![0.0, 1.0], vec![0.3; 6]);
        let traj = run_steps(&m, &x0, 25, 10).unwrap();
        let ts: Vec<usize> = traj.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 10, 20, 25]);
        assert_eq!(traj.deltas.len(), 25);
    }

    #[test]
    fn envelope_never_expands() {
        let m = random_instance(3, 12, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut x = StateVector::new(
            gaussian_values(&mut rng, 3, 1.0).unwrap(),
            gaussian_values(&mut rng, 12, 5.0).unwrap(),
        );
        for _ in 0..200 {
            let (lo, hi) = x.envelope();
            x = step(&m, &x).unwrap();
            let (lo2, hi2) = x.envelope();
            assert!(lo2 >= lo - 1e-15 && hi2 <= hi + 1e-15);
        }
    }

    #[test]
    fn dependence_on_internal_start() {
        let m = random_instance(3, 15, 7);
        let xb = [1.0, 2.0, -1.0];
        let d = dependence_on_initial_internal(
            &m,
            &xb,
            &[1, 2, 3, 4, 5],
            IterationParams::default(),
            Execution::default(),
        )
        .unwrap();
        assert!(d < 1e-7, "{d}");
        let same = dependence_on_initial_internal(
            &m,
            &xb,
            &[9, 9],
            IterationParams::default(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(same, 0.0);
        assert!(dependence_on_initial_internal(
            &m,
            &xb,
            &[1],
            IterationParams::default(),
            Execution::Sequential
        )
        .is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = random_instance(2, 3, 8);
        let x0 = StateVector::new(vec![0.1, -0.7], vec![1.0 / 3.0, 2.0, 3.0]);
        let traj = run_steps(&m, &x0, 7, 3).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_1,x_2,x_3,x_4,x_5\n"));
        let back = Trajectory::parse_csv(2, &text).unwrap();
        assert_eq!(back, traj.snapshots);
        assert!(Trajectory::parse_csv(2, "step,x_1\n0,1\n").is_err());
    }
}
