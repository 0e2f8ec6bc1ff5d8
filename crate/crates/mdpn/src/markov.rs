//! Stationary analysis of the server chain induced by a request-agnostic
//! policy: induced transition matrices, stationary distributions by direct
//! linear solve, unichain verification via strongly connected components,
//! and total-variation / mixing diagnostics.

use thiserror::Error;

use crate::linalg;
use crate::model::MdpnModel;

/// Edges with probability at or below this threshold are ignored when
/// building the reachability graph, so numeric dust cannot create
/// phantom communication between states.
const EDGE_TOL: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("chain is reducible: {0} closed communicating classes")]
    ReducibleChain(usize),
    #[error("stationary solve failed: {0}")]
    NonConvergence(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("policy row {state} sums to {sum}")]
    BadPolicyRow { state: usize, sum: f64 },
    #[error("policy puts mass {mass} on infeasible action {action} in state {state}")]
    InfeasibleMass {
        state: usize,
        action: usize,
        mass: f64,
    },
}

/// A randomized map from server states to actions. Rows are dense over
/// the global action list; mass may only sit on feasible actions.
#[derive(Debug, Clone, PartialEq)]
pub struct AgnosticPolicy {
    pub probs: Vec<Vec<f64>>,
}

impl AgnosticPolicy {
    /// Deterministic policy from one action id per state.
    pub fn deterministic(model: &MdpnModel, actions: &[usize]) -> Self {
        let mut probs = vec![vec![0.0; model.num_actions()]; model.num_states()];
        for (z, &a) in actions.iter().enumerate() {
            probs[z][a] = 1.0;
        }
        AgnosticPolicy { probs }
    }

    /// Uniform over the feasible actions of every state.
    pub fn uniform(model: &MdpnModel) -> Self {
        let mut probs = vec![vec![0.0; model.num_actions()]; model.num_states()];
        for (z, acts) in model.feasible.iter().enumerate() {
            let w = 1.0 / acts.len() as f64;
            for &a in acts {
                probs[z][a] = w;
            }
        }
        AgnosticPolicy { probs }
    }

    pub fn validate(&self, model: &MdpnModel) -> Result<(), MarkovError> {
        if self.probs.len() != model.num_states() {
            return Err(MarkovError::DimensionMismatch(
                self.probs.len(),
                model.num_states(),
            ));
        }
        for (z, row) in self.probs.iter().enumerate() {
            if row.len() != model.num_actions() {
                return Err(MarkovError::DimensionMismatch(
                    row.len(),
                    model.num_actions(),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(MarkovError::BadPolicyRow { state: z, sum });
            }
            for (a, &p) in row.iter().enumerate() {
                if p > 0.0 && !model.is_feasible(z, a) {
                    return Err(MarkovError::InfeasibleMass {
                        state: z,
                        action: a,
                        mass: p,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Probability vector over server states with `mu P = mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution(pub Vec<f64>);

/// Result of the unichain check: whether exactly one closed communicating
/// class exists, plus the membership of every closed class found.
#[derive(Debug, Clone)]
pub struct UnichainReport {
    pub is_unichain: bool,
    pub closed_classes: Vec<Vec<usize>>,
}

/// Row-stochastic matrix of the server chain under `policy`:
/// `P[z][z'] = sum_a pi(a|z) P(z'|z,a)`.
pub fn induced_chain(
    model: &MdpnModel,
    policy: &AgnosticPolicy,
) -> Result<Vec<Vec<f64>>, MarkovError> {
    policy.validate(model)?;
    let n = model.num_states();
    let mut p = vec![vec![0.0; n]; n];
    for z in 0..n {
        for &a in &model.feasible[z] {
            let w = policy.probs[z][a];
            if w == 0.0 {
                continue;
            }
            for b in model.kernel.branches(z, a).expect("validated model") {
                p[z][b.z_next] += w * b.p;
            }
        }
    }
    Ok(p)
}

/// Strongly connected components of the positive-probability graph,
/// via iterative Tarjan. Components are returned in reverse topological
/// order of the condensation.
fn strongly_connected_components(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = p.len();
    let adj: Vec<Vec<usize>> = p
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|&(_, &w)| w > EDGE_TOL)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();

    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0usize;
    let mut components = Vec::new();

    // Explicit DFS stack of (node, next child position).
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call_stack = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut child)) = call_stack.last_mut() {
            if *child == 0 {
                index[v] = next_index;
                low[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                if index[w] == usize::MAX {
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                if low[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack invariant");
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
                call_stack.pop();
                if let Some(&mut (parent, _)) = call_stack.last_mut() {
                    low[parent] = low[parent].min(low[v]);
                }
            }
        }
    }
    components
}

/// The closed (no outgoing edge) communicating classes of `p`.
pub fn closed_classes(p: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let components = strongly_connected_components(p);
    let mut component_of = vec![usize::MAX; p.len()];
    for (ci, comp) in components.iter().enumerate() {
        for &v in comp {
            component_of[v] = ci;
        }
    }
    components
        .iter()
        .enumerate()
        .filter(|(ci, comp)| {
            comp.iter().all(|&v| {
                p[v].iter()
                    .enumerate()
                    .all(|(w, &prob)| prob <= EDGE_TOL || component_of[w] == *ci)
            })
        })
        .map(|(_, comp)| comp.clone())
        .collect()
}

/// True iff the chain induced by `policy` has exactly one closed
/// communicating class; the membership is reported either way.
pub fn is_unichain_policy(
    model: &MdpnModel,
    policy: &AgnosticPolicy,
) -> Result<UnichainReport, MarkovError> {
    let p = induced_chain(model, policy)?;
    let classes = closed_classes(&p);
    Ok(UnichainReport {
        is_unichain: classes.len() == 1,
        closed_classes: classes,
    })
}

/// Stationary distribution of a row-stochastic matrix with a single
/// recurrent class, by direct linear solve: one balance equation is
/// replaced by the normalization row.
///
/// ```
/// use mdpn::markov::{mixing_profile, stationary_distribution, total_variation};
///
/// let p = vec![vec![0.7, 0.3], vec![0.3, 0.7]];
/// let mu = stationary_distribution(&p, 1e-10).unwrap();
/// assert!((mu.0[0] - 0.5).abs() < 1e-12);
///
/// // Worst-case distance to stationarity decays geometrically here,
/// // with rate |1 - p - q| = 0.4 per step.
/// let profile = mixing_profile(&p, &mu.0, 10).unwrap();
/// assert!((profile[1] - 0.4 * profile[0]).abs() < 1e-12);
/// assert_eq!(total_variation(&mu.0, &mu.0).unwrap(), 0.0);
/// ```
pub fn stationary_distribution(
    p: &[Vec<f64>],
    tol: f64,
) -> Result<StationaryDistribution, MarkovError> {
    let n = p.len();
    if n == 0 {
        return Err(MarkovError::NonConvergence("empty chain".into()));
    }
    let classes = closed_classes(p);
    if classes.len() != 1 {
        return Err(MarkovError::ReducibleChain(classes.len()));
    }
    if n == 1 {
        return Ok(StationaryDistribution(vec![1.0]));
    }

    // Rows of the system: (I - P^T) mu = 0 with the last row replaced by
    // the normalization sum(mu) = 1.
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (if i == j { 1.0 } else { 0.0 }) - p[j][i];
        }
    }
    for j in 0..n {
        a[n - 1][j] = 1.0;
    }
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;

    let mut mu = linalg::solve(a, b)
        .ok_or_else(|| MarkovError::NonConvergence("singular balance system".into()))?;

    for m in mu.iter_mut() {
        if *m < 0.0 && *m > -1e-9 {
            *m = 0.0;
        }
    }
    let total: f64 = mu.iter().sum();
    for m in mu.iter_mut() {
        *m /= total;
    }

    let residual: f64 = (0..n)
        .map(|j| {
            let pij: f64 = (0..n).map(|i| mu[i] * p[i][j]).sum();
            (pij - mu[j]).abs()
        })
        .sum();
    if residual > tol {
        return Err(MarkovError::NonConvergence(format!(
            "balance residual {residual} exceeds tolerance {tol}"
        )));
    }
    Ok(StationaryDistribution(mu))
}

/// Total variation distance between two distributions on the same support.
pub fn total_variation(mu1: &[f64], mu2: &[f64]) -> Result<f64, MarkovError> {
    if mu1.len() != mu2.len() {
        return Err(MarkovError::DimensionMismatch(mu1.len(), mu2.len()));
    }
    Ok(0.5 * mu1.iter().zip(mu2).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Worst-case convergence profile: `d(t) = max_z TV(delta_z P^t, target)`
/// for `t = 0..=t_max`. Periodic chains yield non-vanishing profiles;
/// that is reported, not an error.
pub fn mixing_profile(
    p: &[Vec<f64>],
    target: &[f64],
    t_max: usize,
) -> Result<Vec<f64>, MarkovError> {
    let n = p.len();
    if target.len() != n {
        return Err(MarkovError::DimensionMismatch(target.len(), n));
    }
    // Rows of `power` are the laws of the chain started from each point mass.
    let mut power: Vec<Vec<f64>> = (0..n)
        .map(|z| (0..n).map(|j| if j == z { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut profile = Vec::with_capacity(t_max + 1);
    for _ in 0..=t_max {
        let mut worst = 0.0f64;
        for row in &power {
            worst = worst.max(total_variation(row, target)?);
        }
        profile.push(worst);
        let mut next = vec![vec![0.0; n]; n];
        for (row, out) in power.iter().zip(next.iter_mut()) {
            for (i, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (j, &pij) in p[i].iter().enumerate() {
                    out[j] += w * pij;
                }
            }
        }
        power = next;
    }
    Ok(profile)
}
