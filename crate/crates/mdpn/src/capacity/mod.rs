//! Capacity-region decisions. An arrival vector is stabilizable exactly
//! when some request-agnostic policy's stationary service rates dominate
//! it, so membership reduces to a linear program over state-action
//! occupation measures. The sign of the optimal uniform slack decides
//! interior / boundary / outside, and the optimal measure yields a
//! witness policy by conditional decomposition.

pub mod simplex;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::markov::{self, AgnosticPolicy, MarkovError};
use crate::model::{MdpnModel, ModelError};
use crate::solver;

pub use simplex::{simplex_solve, Constraint, ConstraintOp, DenseLp, LpError, LpSolution};

/// Margins within this tolerance of zero classify as "boundary"; the
/// theory leaves boundary stabilizability open, so the tool reports it
/// without a verdict.
pub const BOUNDARY_TOL: f64 = 1e-7;

/// Guard on the number of deterministic policies the enumeration oracle
/// will visit.
pub const HULL_GUARD: u128 = 1_000_000;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
    #[error("policy space too large: {policies} deterministic policies exceeds guard {guard}")]
    TooLarge { policies: u128, guard: u128 },
    #[error("arrival vector has length {found}, model has {expected} classes")]
    BadLambda { found: usize, expected: usize },
}

/// Stationary joint distribution over feasible state-action pairs:
/// the LP variable `x(z, a)` encoding `mu(z) pi(a|z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationMeasure {
    pub x: BTreeMap<(usize, usize), f64>,
}

impl OccupationMeasure {
    /// Marginal state occupancy `mu(z) = sum_a x(z, a)`.
    pub fn state_marginal(&self, num_states: usize) -> Vec<f64> {
        let mut mu = vec![0.0; num_states];
        for (&(z, _), &v) in &self.x {
            mu[z] += v;
        }
        mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionClass {
    Interior,
    Boundary,
    Outside,
}

impl std::fmt::Display for RegionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionClass::Interior => write!(f, "interior"),
            RegionClass::Boundary => write!(f, "boundary"),
            RegionClass::Outside => write!(f, "outside"),
        }
    }
}

/// Output of the capacity decision: the optimal uniform slack, the
/// optimal occupation measure, the witness policy extracted from it, and
/// the service rates the measure certifies per class.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub margin: f64,
    pub measure: OccupationMeasure,
    pub witness: AgnosticPolicy,
    pub rates: Vec<f64>,
    pub classification: RegionClass,
}

pub fn classify(margin: f64) -> RegionClass {
    if margin > BOUNDARY_TOL {
        RegionClass::Interior
    } else if margin < -BOUNDARY_TOL {
        RegionClass::Outside
    } else {
        RegionClass::Boundary
    }
}

fn feasible_pairs(model: &MdpnModel) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (z, acts) in model.feasible.iter().enumerate() {
        for &a in acts {
            pairs.push((z, a));
        }
    }
    pairs
}

/// Maximizes the uniform slack `eps` subject to `x` being an occupation
/// measure whose service rates dominate `lambda + eps` componentwise.
/// The optimum can be negative; its sign decides region membership.
pub fn capacity_margin(model: &MdpnModel, lambda: &[f64]) -> Result<CapacityResult, CapacityError> {
    let r = model.num_classes();
    if lambda.len() != r {
        return Err(CapacityError::BadLambda {
            found: lambda.len(),
            expected: r,
        });
    }
    let n = model.num_states();
    let pairs = feasible_pairs(model);
    let npairs = pairs.len();

    let mut sigma_bar = Vec::with_capacity(npairs);
    let mut marginal = Vec::with_capacity(npairs);
    for &(z, a) in &pairs {
        sigma_bar.push(model.mean_schedule(z, a)?);
        marginal.push(model.state_marginal(z, a)?);
    }

    // Columns: x (npairs), eps_pos, eps_neg.
    let ncols = npairs + 2;
    let mut constraints = Vec::new();

    let mut norm = vec![0.0; ncols];
    norm[..npairs].fill(1.0);
    constraints.push(Constraint {
        coeffs: norm,
        op: ConstraintOp::Eq,
        rhs: 1.0,
    });

    // Flow balance per state; the rows sum identically to zero against the
    // normalization, so the last one is dropped.
    for z in 0..n.saturating_sub(1) {
        let mut row = vec![0.0; ncols];
        for (j, &(zj, _)) in pairs.iter().enumerate() {
            if zj == z {
                row[j] += 1.0;
            }
            row[j] -= marginal[j][z];
        }
        constraints.push(Constraint {
            coeffs: row,
            op: ConstraintOp::Eq,
            rhs: 0.0,
        });
    }

    for (cls, &lam) in lambda.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        for (j, sb) in sigma_bar.iter().enumerate() {
            row[j] = sb[cls];
        }
        row[npairs] = -1.0;
        row[npairs + 1] = 1.0;
        constraints.push(Constraint {
            coeffs: row,
            op: ConstraintOp::Ge,
            rhs: lam,
        });
    }

    let mut objective = vec![0.0; ncols];
    objective[npairs] = 1.0;
    objective[npairs + 1] = -1.0;

    let sol = simplex_solve(&DenseLp {
        objective,
        constraints,
    })?;
    let margin = sol.x[npairs] - sol.x[npairs + 1];

    let mut x = BTreeMap::new();
    for (j, &pair) in pairs.iter().enumerate() {
        x.insert(pair, sol.x[j].max(0.0));
    }
    let measure = OccupationMeasure { x };
    let witness = occupation_to_policy(model, &measure);
    let rates: Vec<f64> = (0..r)
        .map(|cls| {
            pairs
                .iter()
                .enumerate()
                .map(|(j, _)| sol.x[j] * sigma_bar[j][cls])
                .sum()
        })
        .collect();

    Ok(CapacityResult {
        margin,
        measure,
        witness,
        rates,
        classification: classify(margin),
    })
}

/// Conditional decomposition of an occupation measure into a policy:
/// `pi(a|z) = x(z,a) / sum_a x(z,a)`. States carrying no mass get the
/// uniform distribution over their feasible actions; any choice there is
/// stationarily irrelevant and uniform is deterministic to specify.
pub fn occupation_to_policy(model: &MdpnModel, measure: &OccupationMeasure) -> AgnosticPolicy {
    let n = model.num_states();
    let mu = measure.state_marginal(n);
    let mut probs = vec![vec![0.0; model.num_actions()]; n];
    for z in 0..n {
        if mu[z] > 1e-12 {
            for &a in &model.feasible[z] {
                let xa = measure.x.get(&(z, a)).copied().unwrap_or(0.0);
                probs[z][a] = xa / mu[z];
            }
        } else {
            let w = 1.0 / model.feasible[z].len() as f64;
            for &a in &model.feasible[z] {
                probs[z][a] = w;
            }
        }
    }
    AgnosticPolicy { probs }
}

/// Long-run service rate per class under a unichain agnostic policy:
/// `rate_r = sum_z mu(z) sum_a pi(a|z) sigma_bar_r(a, z)`.
pub fn achievable_rate(
    model: &MdpnModel,
    policy: &AgnosticPolicy,
) -> Result<Vec<f64>, CapacityError> {
    let chain = markov::induced_chain(model, policy)?;
    let mu = markov::stationary_distribution(&chain, 1e-9)?;
    let r = model.num_classes();
    let mut rate = vec![0.0; r];
    for (z, acts) in model.feasible.iter().enumerate() {
        if mu.0[z] == 0.0 {
            continue;
        }
        for &a in acts {
            let w = policy.probs[z][a];
            if w == 0.0 {
                continue;
            }
            let sb = model.mean_schedule(z, a)?;
            for (out, s) in rate.iter_mut().zip(sb.iter()) {
                *out += mu.0[z] * w * s;
            }
        }
    }
    Ok(rate)
}

/// All extreme service-rate vectors: one per closed recurrent class of
/// every deterministic agnostic policy, pruned to the dominant face.
/// Independent of any arrival vector, so one enumeration serves many
/// margin queries.
pub fn rate_points(model: &MdpnModel) -> Result<Vec<Vec<f64>>, CapacityError> {
    let count = solver::policy_count(model);
    if count > HULL_GUARD {
        return Err(CapacityError::TooLarge {
            policies: count,
            guard: HULL_GUARD,
        });
    }
    let r = model.num_classes();
    let mut sigma_bar: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (z, acts) in model.feasible.iter().enumerate() {
        for &a in acts {
            sigma_bar.insert((z, a), model.mean_schedule(z, a)?);
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut first_err: Option<CapacityError> = None;
    solver::for_each_deterministic_policy(model, |policy| {
        if first_err.is_some() {
            return;
        }
        let chain =
            match markov::induced_chain(model, &AgnosticPolicy::deterministic(model, policy)) {
                Ok(c) => c,
                Err(e) => {
                    first_err = Some(e.into());
                    return;
                }
            };
        for class in markov::closed_classes(&chain) {
            let sub: Vec<Vec<f64>> = class
                .iter()
                .map(|&i| class.iter().map(|&j| chain[i][j]).collect())
                .collect();
            let mu = match markov::stationary_distribution(&sub, 1e-9) {
                Ok(m) => m,
                Err(e) => {
                    first_err = Some(e.into());
                    return;
                }
            };
            let mut v = vec![0.0; r];
            for (k, &z) in class.iter().enumerate() {
                let sb = &sigma_bar[&(z, policy[z])];
                for (out, s) in v.iter_mut().zip(sb.iter()) {
                    *out += mu.0[k] * s;
                }
            }
            let key: Vec<i64> = v.iter().map(|&x| (x * 1e12).round() as i64).collect();
            if seen.insert(key) {
                // Keep only points not dominated by an existing one, and
                // evict points the new one dominates.
                let dominated = points
                    .iter()
                    .any(|p| p.iter().zip(v.iter()).all(|(a, b)| a >= b));
                if !dominated {
                    points.retain(|p| !p.iter().zip(v.iter()).all(|(a, b)| b >= a));
                    points.push(v);
                }
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(points)
}

/// Independent region oracle: enumerates deterministic policies, takes the
/// convex hull of their per-class rate vectors, and finds the largest
/// uniform slack `eps` such that `lambda + eps . 1` is dominated by a hull
/// point, as a small LP over hull weights.
pub fn hull_oracle(model: &MdpnModel, lambda: &[f64]) -> Result<f64, CapacityError> {
    let points = rate_points(model)?;
    hull_margin_from_points(&points, lambda)
}

/// The hull-weight LP of `hull_oracle` for a precomputed point set.
pub fn hull_margin_from_points(points: &[Vec<f64>], lambda: &[f64]) -> Result<f64, CapacityError> {
    let k = points.len();
    if k == 0 {
        return Err(CapacityError::BadLambda {
            found: 0,
            expected: lambda.len(),
        });
    }

    // Columns: hull weights w (k), eps_pos, eps_neg.
    let ncols = k + 2;
    let mut constraints = Vec::new();
    let mut norm = vec![0.0; ncols];
    norm[..k].fill(1.0);
    constraints.push(Constraint {
        coeffs: norm,
        op: ConstraintOp::Eq,
        rhs: 1.0,
    });
    for (cls, &lam) in lambda.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        for (j, p) in points.iter().enumerate() {
            row[j] = p[cls];
        }
        row[k] = -1.0;
        row[k + 1] = 1.0;
        constraints.push(Constraint {
            coeffs: row,
            op: ConstraintOp::Ge,
            rhs: lam,
        });
    }
    let mut objective = vec![0.0; ncols];
    objective[k] = 1.0;
    objective[k + 1] = -1.0;
    let sol = simplex_solve(&DenseLp {
        objective,
        constraints,
    })?;
    Ok(sol.x[k] - sol.x[k + 1])
}
