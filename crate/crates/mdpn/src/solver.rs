//! Average-reward control of the server process. The reward of an action
//! is the queue-weighted mean schedule, with the weight vector treated as
//! a fixed parameter of the optimization, not as live state. Solvers:
//! relative value iteration with an aperiodicity transformation, exact
//! policy iteration, and a brute-force enumeration oracle. The myopic
//! MaxWeight rule lives here too since it shares the same objective.

use std::collections::HashSet;

use thiserror::Error;

use crate::linalg;
use crate::markov::{self, AgnosticPolicy, MarkovError};
use crate::model::{MdpnModel, ModelError};

/// Damping factor of the aperiodicity transformation
/// `P_alpha = (1-alpha) I + alpha P`. Every stationary policy keeps its
/// stationary distribution and hence its gain under this transformation,
/// while the added self-loops make periodic chains aperiodic so value
/// iteration converges.
const DAMPING: f64 = 0.9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("no convergence within {max_iter} iterations (residual {residual})")]
    MaxIterExceeded {
        max_iter: usize,
        residual: f64,
        best: Box<GainBias>,
    },
    #[error("greedy policy is not unichain ({closed_classes} closed classes)")]
    NonUnichainOptimal { closed_classes: usize },
    #[error("policy space too large: {policies} deterministic policies exceeds guard {guard}")]
    TooLarge { policies: u128, guard: u128 },
    #[error("policy evaluation system is singular")]
    SingularEvaluation,
}

/// Nonnegative weights over request classes; the parameter of the
/// average-reward objective.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueWeights(pub Vec<f64>);

impl QueueWeights {
    pub fn from_queue(q: &[u64]) -> Self {
        QueueWeights(q.iter().map(|&v| v as f64).collect())
    }
}

/// Solution of the average-reward problem: scalar gain, bias vector
/// anchored at state 0, the optimal deterministic policy (one action id
/// per state), the final Bellman residual in span seminorm, and the
/// iteration count.
#[derive(Debug, Clone)]
pub struct GainBias {
    pub gain: f64,
    pub bias: Vec<f64>,
    pub policy: Vec<usize>,
    pub residual: f64,
    pub iterations: usize,
}

impl GainBias {
    pub fn policy_as_agnostic(&self, model: &MdpnModel) -> AgnosticPolicy {
        AgnosticPolicy::deterministic(model, &self.policy)
    }
}

/// Configuration shared by the iterative solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_iter: 1_000_000,
        }
    }
}

/// One-step reward `u(a, z; q)`: the weighted average number of requests
/// the schedule offers, i.e. the dot product of `q` with the mean schedule.
pub fn reward(
    model: &MdpnModel,
    state: usize,
    action: usize,
    q: &QueueWeights,
) -> Result<f64, SolverError> {
    let mean = model.mean_schedule(state, action)?;
    Ok(mean.iter().zip(q.0.iter()).map(|(m, w)| m * w).sum())
}

/// Precomputed tables the iterative solvers share: per-pair rewards and
/// sparse next-state marginals.
struct Tables {
    /// reward[z][k] for the k-th feasible action of z.
    reward: Vec<Vec<f64>>,
    /// trans[z][k] = sparse rows of P(z'|z,a) as (z', p).
    trans: Vec<Vec<Vec<(usize, f64)>>>,
}

fn build_tables(model: &MdpnModel, q: &QueueWeights) -> Result<Tables, SolverError> {
    let n = model.num_states();
    let mut reward_t = Vec::with_capacity(n);
    let mut trans = Vec::with_capacity(n);
    for z in 0..n {
        let mut rz = Vec::new();
        let mut tz = Vec::new();
        for &a in &model.feasible[z] {
            rz.push(reward(model, z, a, q)?);
            let marginal = model.state_marginal(z, a)?;
            let sparse: Vec<(usize, f64)> = marginal
                .into_iter()
                .enumerate()
                .filter(|&(_, p)| p > 0.0)
                .collect();
            tz.push(sparse);
        }
        reward_t.push(rz);
        trans.push(tz);
    }
    Ok(Tables {
        reward: reward_t,
        trans,
    })
}

/// Greedy action per state with respect to `value` under the undamped
/// Bellman operator, ties broken toward the lowest action id. Returns the
/// per-state backup values alongside the chosen actions.
fn greedy_backup(
    model: &MdpnModel,
    tables: &Tables,
    value: &[f64],
    damping: f64,
) -> (Vec<f64>, Vec<usize>) {
    let n = model.num_states();
    let mut backup = vec![0.0; n];
    let mut actions = vec![0; n];
    for z in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = model.feasible[z][0];
        for (k, &a) in model.feasible[z].iter().enumerate() {
            let mut expect = 0.0;
            for &(zn, p) in &tables.trans[z][k] {
                expect += p * value[zn];
            }
            let total = tables.reward[z][k] + (1.0 - damping) * value[z] + damping * expect;
            // Strict comparison keeps the lowest feasible id on ties.
            if total > best {
                best = total;
                best_a = a;
            }
        }
        backup[z] = best;
        actions[z] = best_a;
    }
    (backup, actions)
}

/// Relative value iteration for the average-reward Bellman equation.
///
/// Iterates the damped operator with the bias anchored at state 0 and
/// stops when the span seminorm of successive differences drops below
/// `cfg.tol`. The returned gain is the midpoint of the final difference
/// bracket, so it is within `tol` of the optimal average reward for
/// unichain models. The returned bias is rescaled so that gain and bias
/// satisfy the undamped Bellman equation with span residual `<= tol`,
/// and the returned policy is greedy with respect to that bias.
///
/// ```
/// use mdpn::model::load_model;
/// use mdpn::solver::{relative_value_iteration, QueueWeights, SolverConfig};
///
/// // One server state, one request class: serve or idle.
/// let model = load_model(r#"{
///   "server_states": [{"id": 0, "label": "ready"}],
///   "actions": ["serve", "idle"],
///   "feasible": {"0": [0, 1]},
///   "kernel": [
///     {"z": 0, "a": 0, "branches": [{"z_next": 0, "sigma": [1], "p": 1.0}]},
///     {"z": 0, "a": 1, "branches": [{"z_next": 0, "sigma": [0], "p": 1.0}]}
///   ],
///   "requests": {"count": 1, "labels": ["job"]},
///   "arrivals": [{"pmf": [0.7, 0.3]}],
///   "schedule_bound": 1
/// }"#).unwrap();
///
/// let weights = QueueWeights(vec![3.0]);
/// let gb = relative_value_iteration(&model, &weights, &SolverConfig::default()).unwrap();
/// assert!((gb.gain - 3.0).abs() < 1e-9);
/// assert_eq!(gb.policy, vec![0]); // serving dominates
/// ```
pub fn relative_value_iteration(
    model: &MdpnModel,
    q: &QueueWeights,
    cfg: &SolverConfig,
) -> Result<GainBias, SolverError> {
    let tables = build_tables(model, q)?;
    let n = model.num_states();
    let mut value = vec![0.0; n];

    let mut result = None;
    for iter in 1..=cfg.max_iter {
        let (backup, actions) = greedy_backup(model, &tables, &value, DAMPING);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for z in 0..n {
            let d = backup[z] - value[z];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let span = hi - lo;
        let gain = 0.5 * (hi + lo);

        // The damped backup difference evaluated at the damped iterate
        // equals the undamped Bellman residual at bias = DAMPING * value,
        // so the span certifies the returned solution directly.
        if span <= cfg.tol || iter == cfg.max_iter {
            let anchor = value[0];
            let bias: Vec<f64> = value.iter().map(|v| DAMPING * (v - anchor)).collect();
            let gb = GainBias {
                gain,
                bias,
                policy: actions,
                residual: span,
                iterations: iter,
            };
            if span <= cfg.tol {
                result = Some(gb);
                break;
            }
            return Err(SolverError::MaxIterExceeded {
                max_iter: cfg.max_iter,
                residual: span,
                best: Box::new(gb),
            });
        }

        let anchor = backup[0];
        for z in 0..n {
            value[z] = backup[z] - anchor;
        }
    }

    let gb = result.expect("loop sets result before breaking");
    let report = markov::is_unichain_policy(model, &gb.policy_as_agnostic(model))?;
    if !report.is_unichain {
        return Err(SolverError::NonUnichainOptimal {
            closed_classes: report.closed_classes.len(),
        });
    }
    Ok(gb)
}

/// Exact gain/bias of a deterministic policy on a unichain model:
/// solves `g + h(z) = u(z, pi(z)) + sum_z' P h(z')` with `h(0) = 0`.
fn evaluate_policy(
    model: &MdpnModel,
    tables: &Tables,
    policy: &[usize],
) -> Result<(f64, Vec<f64>), SolverError> {
    let n = model.num_states();
    // Unknowns: h(0..n), g. Equation rows: n Bellman rows + anchoring.
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut b = vec![0.0; n + 1];
    for z in 0..n {
        let k = model.feasible[z]
            .iter()
            .position(|&x| x == policy[z])
            .expect("policy feasible");
        a[z][z] += 1.0;
        a[z][n] = 1.0;
        for &(zn, p) in &tables.trans[z][k] {
            a[z][zn] -= p;
        }
        b[z] = tables.reward[z][k];
    }
    a[n][0] = 1.0;
    b[n] = 0.0;
    let sol = linalg::solve(a, b).ok_or(SolverError::SingularEvaluation)?;
    let gain = sol[n];
    let bias = sol[..n].to_vec();
    Ok((gain, bias))
}

/// Policy iteration: exact evaluation of the unichain gain/bias system,
/// greedy improvement with lowest-id tie-break, termination when a policy
/// repeats. Returns the best-gain iterate with its Bellman residual.
pub fn policy_iteration(
    model: &MdpnModel,
    q: &QueueWeights,
    cfg: &SolverConfig,
) -> Result<GainBias, SolverError> {
    let tables = build_tables(model, q)?;
    let n = model.num_states();

    // Start from the myopic policy (greedy with respect to zero bias).
    let (_, mut policy) = greedy_backup(model, &tables, &vec![0.0; n], 1.0);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<GainBias> = None;

    for iter in 1..=cfg.max_iter {
        if !seen.insert(policy.clone()) {
            break;
        }
        let (gain, bias) = evaluate_policy(model, &tables, &policy)?;
        let (backup, improved) = greedy_backup(model, &tables, &bias, 1.0);
        let residual = {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for z in 0..n {
                let d = backup[z] - bias[z];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            hi - lo
        };
        let candidate = GainBias {
            gain,
            bias,
            policy: policy.clone(),
            residual,
            iterations: iter,
        };
        if best.as_ref().is_none_or(|b| candidate.gain > b.gain) {
            best = Some(candidate);
        }
        if improved == policy {
            break;
        }
        policy = improved;
    }

    let gb = best.expect("at least one policy evaluated");
    let report = markov::is_unichain_policy(model, &gb.policy_as_agnostic(model))?;
    if !report.is_unichain {
        return Err(SolverError::NonUnichainOptimal {
            closed_classes: report.closed_classes.len(),
        });
    }
    Ok(gb)
}

/// Result of the exhaustive policy search. `best_is_multichain` flags
/// when the winning policy has several closed classes (its gain is that
/// of the best class).
#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub gain_bias: GainBias,
    pub policies_evaluated: usize,
    pub best_is_multichain: bool,
}

pub(crate) fn policy_count(model: &MdpnModel) -> u128 {
    model
        .feasible
        .iter()
        .map(|acts| acts.len() as u128)
        .try_fold(1u128, |acc, k| acc.checked_mul(k))
        .unwrap_or(u128::MAX)
}

/// Iterates over all deterministic agnostic policies in lexicographic
/// order of per-state feasible-action indices.
pub(crate) fn for_each_deterministic_policy<F: FnMut(&[usize])>(model: &MdpnModel, mut f: F) {
    let n = model.num_states();
    let mut idx = vec![0usize; n];
    let mut policy: Vec<usize> = (0..n).map(|z| model.feasible[z][0]).collect();
    loop {
        f(&policy);
        let mut z = 0;
        loop {
            if z == n {
                return;
            }
            idx[z] += 1;
            if idx[z] < model.feasible[z].len() {
                policy[z] = model.feasible[z][idx[z]];
                break;
            }
            idx[z] = 0;
            policy[z] = model.feasible[z][0];
            z += 1;
        }
    }
}

/// Exact average reward of a deterministic policy, evaluated per closed
/// recurrent class with the best class taken, so multichain policies are
/// never under-reported. Returns the gain and whether several classes exist.
pub(crate) fn exact_policy_gain(
    model: &MdpnModel,
    policy: &[usize],
    q: &QueueWeights,
) -> Result<(f64, bool), SolverError> {
    let chain = markov::induced_chain(model, &AgnosticPolicy::deterministic(model, policy))?;
    let classes = markov::closed_classes(&chain);
    let mut best = f64::NEG_INFINITY;
    for class in &classes {
        // Stationary distribution restricted to the class.
        let sub: Vec<Vec<f64>> = class
            .iter()
            .map(|&i| class.iter().map(|&j| chain[i][j]).collect())
            .collect();
        let mu = markov::stationary_distribution(&sub, 1e-9)?;
        let mut gain = 0.0;
        for (k, &z) in class.iter().enumerate() {
            gain += mu.0[k] * reward(model, z, policy[z], q)?;
        }
        best = best.max(gain);
    }
    Ok((best, classes.len() > 1))
}

/// Brute-force oracle: enumerates every deterministic agnostic policy,
/// evaluates each exactly through the stationary-distribution path, and
/// returns the maximizer. Guarded at one million policies.
pub fn brute_force_gain(
    model: &MdpnModel,
    q: &QueueWeights,
) -> Result<BruteForceResult, SolverError> {
    const GUARD: u128 = 1_000_000;
    let count = policy_count(model);
    if count > GUARD {
        return Err(SolverError::TooLarge {
            policies: count,
            guard: GUARD,
        });
    }

    let mut best_gain = f64::NEG_INFINITY;
    let mut best_policy: Vec<usize> = Vec::new();
    let mut best_multichain = false;
    let mut evaluated = 0usize;
    let mut first_err: Option<SolverError> = None;

    for_each_deterministic_policy(model, |policy| {
        if first_err.is_some() {
            return;
        }
        match exact_policy_gain(model, policy, q) {
            Ok((gain, multichain)) => {
                evaluated += 1;
                if gain > best_gain {
                    best_gain = gain;
                    best_policy = policy.to_vec();
                    best_multichain = multichain;
                }
            }
            Err(e) => first_err = Some(e),
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }

    let tables = build_tables(model, q)?;
    let bias = if best_multichain {
        vec![0.0; model.num_states()]
    } else {
        evaluate_policy(model, &tables, &best_policy)?.1
    };
    Ok(BruteForceResult {
        gain_bias: GainBias {
            gain: best_gain,
            bias,
            policy: best_policy,
            residual: 0.0,
            iterations: evaluated,
        },
        policies_evaluated: evaluated,
        best_is_multichain: best_multichain,
    })
}

/// The myopic rule: the feasible action maximizing the live-queue-weighted
/// mean schedule, ties broken toward the lowest action id. The strict
/// tie-break makes the choice invariant under positive scaling of the
/// queue vector.
pub fn max_weight_action(
    model: &MdpnModel,
    state: usize,
    q_live: &[u64],
) -> Result<usize, SolverError> {
    if state >= model.num_states() {
        return Err(SolverError::Model(ModelError::BadState(state)));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_a = model.feasible[state][0];
    for &a in &model.feasible[state] {
        let mean = model.mean_schedule(state, a)?;
        let objective: f64 = mean
            .iter()
            .zip(q_live.iter())
            .map(|(m, &w)| m * w as f64)
            .sum();
        if objective > best {
            best = objective;
            best_a = a;
        }
    }
    Ok(best_a)
}
