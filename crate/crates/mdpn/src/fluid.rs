//! Deterministic fluid approximation of the queue process under the
//! epoch controller's instantaneous optimal policy. At queue profile
//! `Qbar` the drain rate is the stationary service rate of the policy
//! solving the average-reward problem with weights `Qbar`, so the right
//! hand side is `lambda - rate(pi*(Qbar))`, projected to keep the state
//! nonnegative. The module also evaluates the quadratic-Lyapunov drift
//! inequality and the closed-form emptying-time bound that certify fluid
//! stability at interior arrival vectors.

use std::collections::HashMap;

use thiserror::Error;

use crate::capacity::{self, CapacityError};
use crate::model::MdpnModel;
use crate::solver::{self, QueueWeights, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum FluidError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error("epsilon must be positive, got {0}")]
    BadEpsilon(f64),
    #[error("bad input: {0}")]
    BadInput(String),
}

/// One integrator sample: time, queue profile, cumulative departures,
/// and the policy active on the step leaving this sample.
#[derive(Debug, Clone)]
pub struct FluidSample {
    pub t: f64,
    pub qbar: Vec<f64>,
    pub dbar: Vec<f64>,
    pub policy_id: usize,
}

/// A fluid trajectory. By construction every sample satisfies the flow
/// identity `qbar = qbar(0) + lambda t - dbar` exactly, and `dbar` is
/// componentwise nondecreasing. Once the total queue first drops to
/// `empty_tol` the state is absorbed at zero, matching the fluid-model
/// property that an emptied system stays empty at interior loads.
#[derive(Debug, Clone)]
pub struct FluidTrajectory {
    pub lambda: Vec<f64>,
    pub dt: f64,
    pub empty_tol: f64,
    pub samples: Vec<FluidSample>,
    pub empty_time: Option<f64>,
    /// Distinct policies in order of first use; `policy_id` indexes here.
    pub policies: Vec<Vec<usize>>,
}

impl FluidTrajectory {
    pub fn to_csv(&self) -> String {
        let r = self.lambda.len();
        let mut out = String::from("t");
        for cls in 1..=r {
            out.push_str(&format!(",Qbar_{cls}"));
        }
        for cls in 1..=r {
            out.push_str(&format!(",Dbar_{cls}"));
        }
        out.push_str(",policy_id\n");
        for s in &self.samples {
            out.push_str(&format!("{}", s.t));
            for v in &s.qbar {
                out.push_str(&format!(",{v}"));
            }
            for v in &s.dbar {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", s.policy_id));
        }
        out
    }
}

/// Streaming right-hand-side evaluator with a policy cache. The optimal
/// policy depends on the queue profile only through its direction, so
/// solves are memoized on the direction rounded to a 1e-6 grid.
pub struct FluidIntegrator<'a> {
    model: &'a MdpnModel,
    lambda: Vec<f64>,
    solver_cfg: SolverConfig,
    cache: HashMap<Vec<u64>, usize>,
    policies: Vec<Vec<usize>>,
    rates: Vec<Vec<f64>>,
}

impl<'a> FluidIntegrator<'a> {
    pub fn new(
        model: &'a MdpnModel,
        lambda: Vec<f64>,
        solver_cfg: SolverConfig,
    ) -> Result<Self, FluidError> {
        if lambda.len() != model.num_classes() {
            return Err(FluidError::BadInput(format!(
                "lambda has {} entries, model has {} classes",
                lambda.len(),
                model.num_classes()
            )));
        }
        Ok(FluidIntegrator {
            model,
            lambda,
            solver_cfg,
            cache: HashMap::new(),
            policies: Vec::new(),
            rates: Vec::new(),
        })
    }

    fn direction_key(qbar: &[f64]) -> Vec<u64> {
        let total: f64 = qbar.iter().sum();
        if total <= 0.0 {
            return vec![0; qbar.len()];
        }
        qbar.iter()
            .map(|&v| ((v / total) * 1e6).round() as u64)
            .collect()
    }

    fn policy_for(&mut self, qbar: &[f64]) -> Result<usize, FluidError> {
        let key = Self::direction_key(qbar);
        if let Some(&id) = self.cache.get(&key) {
            return Ok(id);
        }
        let weights = QueueWeights(qbar.to_vec());
        let gb = solver::relative_value_iteration(self.model, &weights, &self.solver_cfg)?;
        let rate = capacity::achievable_rate(self.model, &gb.policy_as_agnostic(self.model))?;
        let id = self.policies.len();
        self.policies.push(gb.policy);
        self.rates.push(rate);
        self.cache.insert(key, id);
        Ok(id)
    }

    /// `dQbar/dt` at the given profile: arrivals minus the stationary
    /// service rate of the instantaneous optimal policy, with negative
    /// components clipped at zero for empty classes (the reflected
    /// boundary dynamics).
    pub fn rhs(&mut self, qbar: &[f64]) -> Result<(Vec<f64>, usize), FluidError> {
        for &v in qbar {
            if v < 0.0 {
                return Err(FluidError::BadInput("negative queue profile".into()));
            }
        }
        let id = self.policy_for(qbar)?;
        let rate = &self.rates[id];
        let rhs: Vec<f64> = self
            .lambda
            .iter()
            .zip(rate.iter())
            .zip(qbar.iter())
            .map(|((&lam, &mu), &q)| {
                let d = lam - mu;
                if q < 1e-15 && d < 0.0 {
                    0.0
                } else {
                    d
                }
            })
            .collect();
        Ok((rhs, id))
    }

    /// Explicit Euler with nonnegativity projection. Components that
    /// would cross zero within a step are clipped to zero and the
    /// departure record adjusted so the flow identity holds exactly at
    /// every sample.
    pub fn integrate(
        mut self,
        q0: &[f64],
        dt: f64,
        t_max: f64,
        empty_tol: f64,
    ) -> Result<FluidTrajectory, FluidError> {
        if dt <= 0.0 {
            return Err(FluidError::BadInput("dt must be positive".into()));
        }
        for &v in q0 {
            if v < 0.0 {
                return Err(FluidError::BadInput("negative initial profile".into()));
            }
        }
        let steps = (t_max / dt).ceil() as usize;
        let mut q = q0.to_vec();
        let mut samples = Vec::with_capacity(steps + 1);
        let mut empty_time = None;
        let mut last_id = 0usize;

        for k in 0..=steps {
            let t = k as f64 * dt;
            let total: f64 = q.iter().sum();
            if empty_time.is_none() && total <= empty_tol {
                empty_time = Some(t);
                q.iter_mut().for_each(|v| *v = 0.0);
            }

            let rhs = if empty_time.is_some() {
                None
            } else {
                let (rhs, id) = self.rhs(&q)?;
                last_id = id;
                Some(rhs)
            };

            let dbar: Vec<f64> = q0
                .iter()
                .zip(self.lambda.iter())
                .zip(q.iter())
                .map(|((&q0v, &lam), &qv)| q0v + lam * t - qv)
                .collect();
            samples.push(FluidSample {
                t,
                qbar: q.clone(),
                dbar,
                policy_id: last_id,
            });

            if k < steps {
                if let Some(rhs) = rhs {
                    for (qv, &dv) in q.iter_mut().zip(rhs.iter()) {
                        *qv = (*qv + dt * dv).max(0.0);
                    }
                }
            }
        }

        Ok(FluidTrajectory {
            lambda: self.lambda,
            dt,
            empty_tol,
            samples,
            empty_time,
            policies: self.policies,
        })
    }
}

/// Default integrator step: `0.01 * min(1, 1/||lambda||_1)`.
pub fn default_dt(lambda: &[f64]) -> f64 {
    let total: f64 = lambda.iter().sum();
    if total <= 0.0 {
        0.01
    } else {
        0.01 * 1.0_f64.min(1.0 / total)
    }
}

/// Default emptiness threshold: one Euler step's worth of total motion.
pub fn default_empty_tol(model: &MdpnModel, lambda: &[f64], dt: f64) -> f64 {
    let total: f64 = lambda.iter().sum();
    dt * (total + (model.num_classes() as f64) * model.schedule_bound as f64)
}

/// One-shot right-hand side without a persistent cache.
pub fn fluid_rhs(
    model: &MdpnModel,
    lambda: &[f64],
    qbar: &[f64],
    solver_cfg: &SolverConfig,
) -> Result<Vec<f64>, FluidError> {
    let mut integ = FluidIntegrator::new(model, lambda.to_vec(), *solver_cfg)?;
    Ok(integ.rhs(qbar)?.0)
}

/// Integrates the fluid model from `q0` to `t_max` with defaults for the
/// step and emptiness threshold.
pub fn integrate_fluid(
    model: &MdpnModel,
    lambda: &[f64],
    q0: &[f64],
    dt: Option<f64>,
    t_max: f64,
    solver_cfg: &SolverConfig,
) -> Result<FluidTrajectory, FluidError> {
    let dt = dt.unwrap_or_else(|| default_dt(lambda));
    let empty_tol = default_empty_tol(model, lambda, dt);
    FluidIntegrator::new(model, lambda.to_vec(), *solver_cfg)?.integrate(q0, dt, t_max, empty_tol)
}

/// Deterministic emptying-time bound at margin `eps`:
/// `T = 2 sqrt(R) sqrt(L(q0)) / eps` with `L(q) = sum q_r^2 / 2`.
///
/// ```
/// use mdpn::fluid::empty_time_bound;
///
/// // One class, unit initial mass, margin 1:
/// // T = 2 * sqrt(1) * sqrt(1/2) = sqrt(2).
/// let t = empty_time_bound(&[1.0], 1.0).unwrap();
/// assert!((t - std::f64::consts::SQRT_2).abs() < 1e-12);
/// assert_eq!(empty_time_bound(&[0.0, 0.0], 0.5).unwrap(), 0.0);
/// ```
pub fn empty_time_bound(q0: &[f64], eps: f64) -> Result<f64, FluidError> {
    if eps <= 0.0 {
        return Err(FluidError::BadEpsilon(eps));
    }
    let l: f64 = q0.iter().map(|&v| v * v).sum::<f64>() / 2.0;
    Ok(2.0 * (q0.len() as f64).sqrt() * l.sqrt() / eps)
}

/// Result of checking `dL/dt <= -eps sqrt(2L)` along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct DriftCheck {
    /// Worst signed slack of the inequality: positive values are
    /// violations, up to the integrator's discretization tolerance.
    pub worst_slack: f64,
    pub samples_checked: usize,
}

/// Finite-difference check of the Lyapunov drift inequality over all
/// sampled points with total queue above the emptiness threshold.
pub fn check_drift_inequality(traj: &FluidTrajectory, eps: f64) -> Result<DriftCheck, FluidError> {
    if eps < 0.0 {
        return Err(FluidError::BadEpsilon(eps));
    }
    let l = |q: &[f64]| -> f64 { q.iter().map(|&v| v * v).sum::<f64>() / 2.0 };
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for pair in traj.samples.windows(2) {
        let total: f64 = pair[0].qbar.iter().sum();
        if total <= traj.empty_tol {
            continue;
        }
        let l0 = l(&pair[0].qbar);
        let l1 = l(&pair[1].qbar);
        let slack = (l1 - l0) / traj.dt + eps * (2.0 * l0).sqrt();
        worst = worst.max(slack);
        checked += 1;
    }
    Ok(DriftCheck {
        worst_slack: if checked == 0 { 0.0 } else { worst },
        samples_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ArrivalLaw, Branch, MdpnModel, RequestClassSet, Schedule, ServerState, TransitionKernel,
    };

    fn unit_server() -> MdpnModel {
        let mut kernel = TransitionKernel::new();
        kernel.insert(
            0,
            0,
            vec![Branch {
                z_next: 0,
                sigma: Schedule(vec![1]),
                p: 1.0,
            }],
        );
        kernel.insert(
            0,
            1,
            vec![Branch {
                z_next: 0,
                sigma: Schedule(vec![0]),
                p: 1.0,
            }],
        );
        MdpnModel::new(
            vec![ServerState {
                id: 0,
                label: "z".into(),
            }],
            vec!["serve".into(), "idle".into()],
            vec![vec![0, 1]],
            kernel,
            RequestClassSet {
                count: 1,
                labels: vec!["r".into()],
            },
            vec![ArrivalLaw::bernoulli(0.3)],
            1,
        )
        .unwrap()
    }

    #[test]
    fn bound_arithmetic() {
        assert_eq!(empty_time_bound(&[0.0, 0.0], 1.0).unwrap(), 0.0);
        let t = empty_time_bound(&[1.0], 1.0).unwrap();
        assert!((t - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(empty_time_bound(&[1.0], 0.0).is_err());
        assert!(empty_time_bound(&[1.0], -1.0).is_err());
    }

    #[test]
    fn rhs_is_arrivals_minus_service() {
        let model = unit_server();
        let cfg = SolverConfig::default();
        let rhs = fluid_rhs(&model, &[0.3], &[5.0], &cfg).unwrap();
        assert!((rhs[0] + 0.7).abs() < 1e-9);
        // Exact balance: zero drift.
        let rhs = fluid_rhs(&model, &[1.0], &[5.0], &cfg).unwrap();
        assert!(rhs[0].abs() < 1e-9);
        // Projection at zero keeps the state nonnegative.
        let rhs = fluid_rhs(&model, &[0.3], &[0.0], &cfg).unwrap();
        assert_eq!(rhs[0], 0.0);
    }

    #[test]
    fn unit_drain_empties_at_time_one() {
        let model = unit_server();
        let cfg = SolverConfig::default();
        let traj = integrate_fluid(&model, &[0.0], &[1.0], Some(0.01), 2.0, &cfg).unwrap();
        let empty = traj.empty_time.expect("drains");
        assert!(
            (empty - 1.0).abs() <= 2.0 * 0.01 + 1e-12,
            "empty at {empty}"
        );
        // Absorbed: stays empty afterwards.
        for s in &traj.samples {
            if s.t > empty {
                assert_eq!(s.qbar[0], 0.0);
            }
        }
    }

    #[test]
    fn flow_identity_and_monotone_departures() {
        let model = unit_server();
        let cfg = SolverConfig::default();
        let traj = integrate_fluid(&model, &[0.3], &[2.0], Some(0.01), 5.0, &cfg).unwrap();
        let mut prev = vec![f64::NEG_INFINITY];
        for s in &traj.samples {
            let lhs = s.qbar[0] - 2.0 - 0.3 * s.t + s.dbar[0];
            assert!(lhs.abs() < 1e-9, "flow identity violated by {lhs}");
            assert!(s.dbar[0] >= prev[0] - 1e-12);
            prev = s.dbar.clone();
        }
    }

    #[test]
    fn linear_drain_drift_is_tight() {
        let model = unit_server();
        let cfg = SolverConfig::default();
        let dt = 0.01;
        let traj = integrate_fluid(&model, &[0.3], &[1.0], Some(dt), 2.0, &cfg).unwrap();
        let check = check_drift_inequality(&traj, 0.7).unwrap();
        assert!(check.samples_checked > 50);
        // Exact linear drain: slack is the O(dt) discretization term only.
        assert!(check.worst_slack <= dt, "slack {}", check.worst_slack);
        assert!(check.worst_slack >= 0.0, "slack {}", check.worst_slack);
    }

    #[test]
    fn overloaded_system_never_empties() {
        let model = unit_server();
        let cfg = SolverConfig::default();
        let traj = integrate_fluid(&model, &[1.4], &[1.0], Some(0.01), 3.0, &cfg).unwrap();
        assert!(traj.empty_time.is_none());
        let last = traj.samples.last().unwrap();
        assert!(last.qbar[0] > 1.0);
    }
}
