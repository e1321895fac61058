//! Boundary values that repeat with period `tau`.
//!
//! The recurrence is `x_i(t+1) = P_e x_b(t) + P_i x_i(t)` with
//! `x_b(t) = values[t mod tau]`. Unrolling it gives
//!
//! ```text
//! x_i(k) = sum_{m=0}^{k-1} P_i^m P_e x_b((k - 1 - m) mod tau) + P_i^k x_i(0)
//! ```
//!
//! Note the `k - 1 - m` phase: the boundary value consumed by the step into
//! time `k` is the one at time `k - 1`. Splitting the sum by `m mod tau`
//! gives the limit along the phase-0 subsequence `k = n tau`:
//!
//! ```text
//! x_i^(0) = (I - P_i^tau)^-1 sum_{r=0}^{tau-1} P_i^r P_e x_b(tau - 1 - r)
//! ```
//!
//! The state does not converge to a point when the schedule varies; it
//! converges to a `tau`-periodic orbit, returned phase by phase.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::linalg::{check_len, SystemMatrix};
use crate::matrix::{max_abs_diff, LuFactors, Matrix};
use crate::{Error, Result, PIVOT_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleFile", into = "ScheduleFile")]
pub struct BoundarySchedule {
    values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    period: usize,
    values: Vec<Vec<f64>>,
}

impl TryFrom<ScheduleFile> for BoundarySchedule {
    type Error = Error;

    fn try_from(file: ScheduleFile) -> Result<Self> {
        check_len("schedule period", file.period, file.values.len())?;
        BoundarySchedule::new(file.values)
    }
}

impl From<BoundarySchedule> for ScheduleFile {
    fn from(s: BoundarySchedule) -> Self {
        ScheduleFile {
            period: s.values.len(),
            values: s.values,
        }
    }
}

impl BoundarySchedule {
    /// One boundary vector per phase; the period is `values.len()`.
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let first = values
            .first()
            .ok_or_else(|| Error::InvalidInput("schedule period must be at least 1".into()))?;
        let k = first.len();
        for v in &values {
            check_len("schedule boundary vector", k, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("schedule values must be finite".into()));
            }
        }
        Ok(BoundarySchedule { values })
    }

    pub fn constant(boundary: Vec<f64>) -> Self {
        BoundarySchedule {
            values: vec![boundary],
        }
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    pub fn num_boundary(&self) -> usize {
        self.values[0].len()
    }

    pub fn value_at(&self, t: usize) -> &[f64] {
        &self.values[t % self.period()]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Smallest and largest value over all phases.
    pub fn envelope(&self) -> (f64, f64) {
        self.values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("schedule", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check_against(&self, m: &SystemMatrix) -> Result<()> {
        check_len(
            "schedule boundary vector",
            m.num_boundary(),
            self.num_boundary(),
        )
    }
}

/// `P_e x_b(t) + P_i x_i`
pub fn periodic_step(
    m: &SystemMatrix,
    schedule: &BoundarySchedule,
    internal: &[f64],
    t: usize,
) -> Result<Vec<f64>> {
    schedule.check_against(m)?;
    check_len("internal values", m.num_internal(), internal.len())?;
    let boundary = schedule.value_at(t);
    Ok((0..m.num_internal())
        .map(|r| m.average_row(r, boundary, internal))
        .collect())
}

/// Internal state after `k` steps from `internal0` at time 0, evaluated from
/// the unrolled sum rather than by stepping.
pub fn state_at(
    m: &SystemMatrix,
    schedule: &BoundarySchedule,
    internal0: &[f64],
    k: usize,
) -> Result<Vec<f64>> {
    schedule.check_against(m)?;
    check_len("internal values", m.num_internal(), internal0.len())?;
    let tau = schedule.period();
    let forcing: Vec<Vec<f64>> = schedule
        .values()
        .iter()
        .map(|xb| m.p_e().mul_vec(xb))
        .collect();

    let dim = m.num_internal();
    let mut power = Matrix::identity(dim);
    let mut acc = vec![0.0; dim];
    for step in 0..k {
        // phase (k - 1 - step) mod tau without underflow
        let phase = (k - 1 - step) % tau;
        let term = power.mul_vec(&forcing[phase]);
        for (a, t) in acc.iter_mut().zip(term) {
            *a += t;
        }
        power = power.matmul(m.p_i());
    }
    let decay = power.mul_vec(internal0);
    for (a, d) in acc.iter_mut().zip(decay) {
        *a += d;
    }
    Ok(acc)
}

/// The limiting orbit `[x^(0), ..., x^(tau-1)]`, where `x^(phi)` is the limit
/// of `x_i(n tau + phi)` as `n` grows.
pub fn periodic_limit(m: &SystemMatrix, schedule: &BoundarySchedule) -> Result<Vec<Vec<f64>>> {
    schedule.check_against(m)?;
    let tau = schedule.period();
    let dim = m.num_internal();

    let mut power = Matrix::identity(dim);
    let mut rhs = vec![0.0; dim];
    for r in 0..tau {
        let forcing = m.p_e().mul_vec(schedule.value_at(tau - 1 - r));
        for (acc, v) in rhs.iter_mut().zip(power.mul_vec(&forcing)) {
            *acc += v;
        }
        power = power.matmul(m.p_i());
    }
    // power is now P_i^tau
    let lu = LuFactors::factor(&Matrix::identity(dim).add_scaled(&power, -1.0), PIVOT_TOL)?;
    let mut orbit = Vec::with_capacity(tau);
    orbit.push(lu.solve(&rhs));
    for phase in 0..tau - 1 {
        let next = periodic_step(m, schedule, &orbit[phase], phase)?;
        orbit.push(next);
    }
    Ok(orbit)
}

/// Largest change when each orbit point is advanced `tau` steps from its own
/// phase. Zero for an exact orbit.
pub fn orbit_fixed_point_error(
    m: &SystemMatrix,
    schedule: &BoundarySchedule,
    orbit: &[Vec<f64>],
) -> Result<f64> {
    check_len("orbit length", schedule.period(), orbit.len())?;
    let tau = schedule.period();
    let mut worst: f64 = 0.0;
    for (phase, start) in orbit.iter().enumerate() {
        let mut x = start.clone();
        for t in phase..phase + tau {
            x = periodic_step(m, schedule, &x, t)?;
        }
        worst = worst.max(max_abs_diff(&x, start));
    }
    Ok(worst)
}

/// On-disk form of a computed orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub period: usize,
    /// `orbit[phase][internal node]`
    pub orbit: Vec<Vec<f64>>,
    pub fixed_point_error: f64,
}

impl OrbitReport {
    pub fn compute(m: &SystemMatrix, schedule: &BoundarySchedule) -> Result<Self> {
        let orbit = periodic_limit(m, schedule)?;
        let fixed_point_error = orbit_fixed_point_error(m, schedule, &orbit)?;
        Ok(OrbitReport {
            period: schedule.period(),
            orbit,
            fixed_point_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{gaussian_values, step};
    use crate::graph::Graph;
    use crate::linalg::StateVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(k: usize, m: usize, seed: u64) -> SystemMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Graph::random_connected(k, m, 0.2, &mut rng).unwrap();
        SystemMatrix::random(&g, seed).unwrap()
    }

    fn schedule(k: usize, tau: usize, seed: u64) -> BoundarySchedule {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BoundarySchedule::new(
            (0..tau)
                .map(|_| gaussian_values(&mut rng, k, 1.0).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_schedule_step_matches_dynamics() {
        let m = instance(3, 6, 1);
        let xb = vec![0.5, -1.0, 2.0];
        let xi = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let sched = BoundarySchedule::constant(xb.clone());
        let a = periodic_step(&m, &sched, &xi, 17).unwrap();
        let b = step(&m, &StateVector::new(xb, xi)).unwrap().internal;
        assert_eq!(a, b);
    }

    #[test]
    fn zero_internal_weights_pass_boundary_through() {
        let m = SystemMatrix::uniform(&Graph::line(3).unwrap(), 0.0).unwrap();
        let sched = BoundarySchedule::new(vec![vec![0.0, 2.0], vec![4.0, 4.0]]).unwrap();
        assert_eq!(periodic_step(&m, &sched, &[9.0], 0).unwrap(), vec![1.0]);
        assert_eq!(periodic_step(&m, &sched, &[9.0], 1).unwrap(), vec![4.0]);

        let zero = BoundarySchedule::constant(vec![0.0, 0.0]);
        assert_eq!(periodic_step(&m, &zero, &[0.0], 3).unwrap(), vec![0.0]);
    }

    #[test]
    fn closed_sum_matches_stepping() {
        for (tau, seed) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
            let m = instance(2, 7, seed);
            let sched = schedule(2, tau, seed);
            let x0 = vec![1.0, -2.0, 0.0, 3.0, 0.5, 0.25, -1.0];
            assert_eq!(state_at(&m, &sched, &x0, 0).unwrap(), x0);
            let mut x = x0.clone();
            for k in 1..=50 {
                x = periodic_step(&m, &sched, &x, k - 1).unwrap();
                let closed = state_at(&m, &sched, &x0, k).unwrap();
                assert!(max_abs_diff(&x, &closed) < 1e-10, "tau={tau} k={k}");
            }
        }
    }

    #[test]
    fn single_phase_limit_is_closed_form() {
        let m = instance(3, 8, 5);
        let xb = vec![1.0, 2.0, 3.0];
        let lim = m.closed_form_limit(&xb).unwrap().state.internal;
        let orbit = periodic_limit(&m, &BoundarySchedule::constant(xb.clone())).unwrap();
        assert_eq!(orbit.len(), 1);
        assert!(max_abs_diff(&orbit[0], &lim) < 1e-12);

        let redundant = BoundarySchedule::new(vec![xb.clone(), xb.clone(), xb]).unwrap();
        let orbit = periodic_limit(&m, &redundant).unwrap();
        assert_eq!(orbit.len(), 3);
        for phase in &orbit {
            assert!(max_abs_diff(phase, &lim) < 1e-12);
        }
    }

    #[test]
    fn alternating_line_orbit_matches_long_run() {
        let m = SystemMatrix::uniform(&Graph::line(3).unwrap(), 0.5).unwrap();
        let sched = BoundarySchedule::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let orbit = periodic_limit(&m, &sched).unwrap();
        let mut x = vec![0.3];
        for t in 0..10_000 {
            x = periodic_step(&m, &sched, &x, t).unwrap();
        }
        // 10_000 is even, so x sits at phase 0
        assert!(max_abs_diff(&x, &orbit[0]) < 1e-8);
        let odd = periodic_step(&m, &sched, &x, 10_000).unwrap();
        assert!(max_abs_diff(&odd, &orbit[1]) < 1e-8);
        // y0 = 0.5 y1 + 0.5 * 1, y1 = 0.5 y0  =>  y0 = 2/3, y1 = 1/3
        assert!((orbit[0][0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((orbit[1][0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn orbit_properties() {
        let m = instance(3, 10, 6);
        let sched = schedule(3, 4, 6);
        let report = OrbitReport::compute(&m, &sched).unwrap();
        assert!(report.fixed_point_error < 1e-10);
        let (lo, hi) = sched.envelope();
        for v in report.orbit.iter().flatten() {
            assert!(*v >= lo - 1e-10 && *v <= hi + 1e-10);
        }
    }

    #[test]
    fn forgetting_is_bounded_by_power_norm() {
        let m = instance(2, 6, 7);
        let sched = schedule(2, 3, 7);
        let a = vec![5.0; 6];
        let b = vec![-3.0, 1.0, 0.0, 2.0, 7.0, -1.0];
        let gap = max_abs_diff(&a, &b);
        for k in [1, 5, 20, 40] {
            let d = max_abs_diff(
                &state_at(&m, &sched, &a, k).unwrap(),
                &state_at(&m, &sched, &b, k).unwrap(),
            );
            assert!(d <= m.internal_power_norm(k) * gap + 1e-12);
        }
    }

    #[test]
    fn detached_internal_rejected() {
        let g = Graph::new(1, 3, [(1, 2), (0, 3)]).unwrap();
        let m = SystemMatrix::uniform(&g, 0.0).unwrap();
        let sched = BoundarySchedule::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            periodic_limit(&m, &sched),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn schedule_file_validation() {
        let ok: BoundarySchedule =
            serde_json::from_str(r#"{"period": 2, "values": [[1, 2], [3, 4]]}"#).unwrap();
        assert_eq!(ok.period(), 2);
        assert_eq!(ok.value_at(5), &[3.0, 4.0]);
        assert!(
            serde_json::from_str::<BoundarySchedule>(r#"{"period": 3, "values": [[1], [2]]}"#)
                .is_err()
        );
        assert!(serde_json::from_str::<BoundarySchedule>(
            r#"{"period": 2, "values": [[1], [2, 3]]}"#
        )
        .is_err());
        assert!(
            serde_json::from_str::<BoundarySchedule>(r#"{"period": 0, "values": []}"#).is_err()
        );
        let text = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<BoundarySchedule>(&text).unwrap(), ok);
    }

    #[test]
    fn mismatched_schedule_rejected() {
        let m = instance(3, 4, 8);
        let sched = BoundarySchedule::constant(vec![0.0, 1.0]);
        assert!(periodic_step(&m, &sched, &[0.0; 4], 0).is_err());
        assert!(
            periodic_step(&m, &BoundarySchedule::constant(vec![0.0; 3]), &[0.0; 3], 0).is_err()
        );
    }
}
