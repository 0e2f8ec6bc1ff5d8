//! Programmatic builders for the two benchmark networks: the three-phase
//! rotation switch (servers arrive in a fixed cycle and can be held
//! across slots) and the three-class decoherence matching network (held
//! servers survive each slot with type-dependent probabilities). Also
//! the exact rational checks of the instability/stability conditions for
//! the decoherence network, and its queue-0-priority controller.

use num_rational::Ratio;
use num_traits::One;
use thiserror::Error;

use crate::model::{
    ArrivalLaw, Branch, MdpnModel, ModelError, RequestClassSet, Schedule, ServerState,
    TransitionKernel,
};
use crate::sim::{ControllerSpec, P0Rule};

pub type Rat = Ratio<i64>;

#[derive(Debug, Error)]
pub enum BuilderError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model does not match this builder: {0}")]
    ShapeMismatch(String),
}

// ---------------------------------------------------------------------------
// Rotation-3 switch

/// Action ids of the rotation-3 builder. `HOLD` precedes the serving
/// actions and `IDLE` comes last so that a zero-weight tie under the
/// myopic rule stores the fresh server instead of discarding it.
pub mod rotation3_actions {
    pub const HOLD: usize = 0;
    pub const SERVE_R1: usize = 1;
    pub const SERVE_R2: usize = 2;
    pub const SERVE_R3: usize = 3;
    pub const SERVE_R1_HELD: usize = 4;
    pub const SERVE_R2_HELD: usize = 5;
    pub const IDLE: usize = 6;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3Params {
    /// Per-cycle arrival probabilities of the three request classes;
    /// encoded per slot as independent Bernoulli(lambda/3) batches.
    pub lambda_cycle: [f64; 3],
    /// Per-slot loss probabilities of the two held-server flags.
    pub decoherence: [f64; 2],
    /// Success probability of serving class 3 from the two held servers.
    pub r3_success: f64,
}

impl Default for Rotation3Params {
    fn default() -> Self {
        Rotation3Params {
            lambda_cycle: [0.4, 0.4, 0.4],
            decoherence: [0.0, 0.0],
            r3_success: 1.0,
        }
    }
}

impl Rotation3Params {
    /// The stochastic-decoherence variant: the same cycle with slightly
    /// leaky held flags, which makes every stationary policy induce a
    /// single recurrent class.
    pub fn stochastic() -> Self {
        Rotation3Params {
            decoherence: [1e-5, 1e-5],
            ..Default::default()
        }
    }

    pub fn with_lambda(mut self, lambda_cycle: [f64; 3]) -> Self {
        self.lambda_cycle = lambda_cycle;
        self
    }
}

/// State id of `(phase, h1, h2)` in the rotation-3 encoding.
pub fn rotation3_state(phase: usize, h1: bool, h2: bool) -> usize {
    phase * 4 + (h1 as usize) * 2 + (h2 as usize)
}

/// Per-slot arrival rates corresponding to per-cycle probabilities.
pub fn rotation3_per_slot(lambda_cycle: &[f64; 3]) -> Vec<f64> {
    lambda_cycle.iter().map(|l| l / 3.0).collect()
}

/// Three server types arrive in the fixed sequence 1, 2, 3, 1, 2, ...;
/// class 1 needs server 1, class 2 needs server 2, and class 3 needs all
/// three at once. Servers 1 and 2 can be held across slots (losing the
/// hold each slot with the configured probability); server 3 is
/// use-it-or-lose-it. States are `(phase, h1, h2)`, twelve in total.
pub fn build_rotation3(params: &Rotation3Params) -> Result<MdpnModel, BuilderError> {
    use rotation3_actions::*;
    for (name, v) in [
        ("lambda_cycle[0]", params.lambda_cycle[0]),
        ("lambda_cycle[1]", params.lambda_cycle[1]),
        ("lambda_cycle[2]", params.lambda_cycle[2]),
        ("decoherence[0]", params.decoherence[0]),
        ("decoherence[1]", params.decoherence[1]),
        ("r3_success", params.r3_success),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(BuilderError::InvalidParam(format!(
                "{name} = {v} outside [0, 1]"
            )));
        }
    }

    let mut states = Vec::new();
    for phase in 0..3 {
        for h1 in [false, true] {
            for h2 in [false, true] {
                // Enumeration order must match rotation3_state.
                let id = rotation3_state(phase, h1, h2);
                states.push(ServerState {
                    id,
                    label: format!("p{phase}h{}{}", h1 as u8, h2 as u8),
                });
            }
        }
    }
    states.sort_by_key(|s| s.id);

    let actions: Vec<String> = vec![
        "hold".into(),
        "serve_r1".into(),
        "serve_r2".into(),
        "serve_r3".into(),
        "serve_r1_held".into(),
        "serve_r2_held".into(),
        "idle".into(),
    ];

    let mut feasible = vec![Vec::new(); 12];
    let mut kernel = TransitionKernel::new();
    let [d1, d2] = params.decoherence;
    let gamma = params.r3_success;

    for phase in 0..3 {
        for h1 in [false, true] {
            for h2 in [false, true] {
                let z = rotation3_state(phase, h1, h2);
                let mut acts = vec![IDLE];
                if phase == 0 {
                    acts.push(SERVE_R1);
                    if !h1 {
                        acts.push(HOLD);
                    }
                }
                if phase == 1 {
                    acts.push(SERVE_R2);
                    if !h2 {
                        acts.push(HOLD);
                    }
                }
                if phase == 2 && h1 && h2 {
                    acts.push(SERVE_R3);
                }
                if h1 {
                    acts.push(SERVE_R1_HELD);
                }
                if h2 {
                    acts.push(SERVE_R2_HELD);
                }
                acts.sort_unstable();

                for &a in &acts {
                    // Post-action holds and schedule outcomes (before the
                    // end-of-slot decoherence of the held flags).
                    let outcomes: Vec<(bool, bool, [u32; 3], f64)> = match a {
                        IDLE => vec![(h1, h2, [0, 0, 0], 1.0)],
                        SERVE_R1 => vec![(h1, h2, [1, 0, 0], 1.0)],
                        SERVE_R2 => vec![(h1, h2, [0, 1, 0], 1.0)],
                        HOLD => {
                            if phase == 0 {
                                vec![(true, h2, [0, 0, 0], 1.0)]
                            } else {
                                vec![(h1, true, [0, 0, 0], 1.0)]
                            }
                        }
                        SERVE_R3 => {
                            let mut v = Vec::new();
                            if gamma > 0.0 {
                                v.push((false, false, [0, 0, 1], gamma));
                            }
                            if gamma < 1.0 {
                                v.push((false, false, [0, 0, 0], 1.0 - gamma));
                            }
                            v
                        }
                        SERVE_R1_HELD => vec![(false, h2, [1, 0, 0], 1.0)],
                        SERVE_R2_HELD => vec![(h1, false, [0, 1, 0], 1.0)],
                        _ => unreachable!(),
                    };

                    let next_phase = (phase + 1) % 3;
                    let mut branches: Vec<Branch> = Vec::new();
                    for (nh1, nh2, sigma, p_act) in outcomes {
                        // Each surviving hold decoheres independently.
                        for (k1, p1) in hold_fates(nh1, d1) {
                            for (k2, p2) in hold_fates(nh2, d2) {
                                let p = p_act * p1 * p2;
                                if p == 0.0 {
                                    continue;
                                }
                                let z_next = rotation3_state(next_phase, k1, k2);
                                merge_branch(&mut branches, z_next, sigma.to_vec(), p);
                            }
                        }
                    }
                    kernel.insert(z, a, branches);
                }
                feasible[z] = acts;
            }
        }
    }

    let arrivals = params
        .lambda_cycle
        .iter()
        .map(|l| ArrivalLaw::bernoulli(l / 3.0))
        .collect();

    Ok(MdpnModel::new(
        states,
        actions,
        feasible,
        kernel,
        RequestClassSet {
            count: 3,
            labels: vec!["r1".into(), "r2".into(), "r3".into()],
        },
        arrivals,
        1,
    )?)
}

fn hold_fates(held: bool, drop_p: f64) -> Vec<(bool, f64)> {
    if !held {
        vec![(false, 1.0)]
    } else if drop_p == 0.0 {
        vec![(true, 1.0)]
    } else if drop_p == 1.0 {
        vec![(false, 1.0)]
    } else {
        vec![(true, 1.0 - drop_p), (false, drop_p)]
    }
}

fn merge_branch(branches: &mut Vec<Branch>, z_next: usize, sigma: Vec<u32>, p: f64) {
    for b in branches.iter_mut() {
        if b.z_next == z_next && b.sigma.0 == sigma {
            b.p += p;
            return;
        }
    }
    branches.push(Branch {
        z_next,
        sigma: Schedule(sigma),
        p,
    });
}

// ---------------------------------------------------------------------------
// Decoherence matching network

/// Action ids of the decoherence-network builder.
pub mod decoherence_actions {
    pub const IDLE: usize = 0;
    pub const SERVE_R0: usize = 1;
    pub const SERVE_R1: usize = 2;
    pub const SERVE_R2: usize = 3;
    pub const SERVE_R12: usize = 4;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoherenceNetParams {
    /// Small time-scale parameter; per-slot event probabilities are
    /// `lambda_i * h` and `mu_i * h`.
    pub h: f64,
    pub lambda: [f64; 3],
    pub mu: [f64; 3],
}

impl DecoherenceNetParams {
    /// The worked parameter point (4, 150, 150; 20, 200, 200), normalized
    /// by the largest rate so all per-slot probabilities stay in [0, 1].
    /// The stability conditions are invariant under this joint rescaling.
    pub fn paper(h: f64) -> Self {
        DecoherenceNetParams {
            h,
            lambda: [4.0 / 200.0, 150.0 / 200.0, 150.0 / 200.0],
            mu: [20.0 / 200.0, 1.0, 1.0],
        }
    }
}

/// State id of held-server flags `(b0, b1, b2)`.
pub fn decoherence_state(b0: bool, b1: bool, b2: bool) -> usize {
    (b0 as usize) * 4 + (b1 as usize) * 2 + (b2 as usize)
}

/// Three request classes over three server types: class 0 consumes all
/// three servers at once, classes 1 and 2 consume their own type. Absent
/// servers arrive per slot with probability `mu_i h`; a held type-0
/// server survives a slot with probability `h^2` while types 1 and 2
/// survive with probability `1 - h^2`. States are the held flags, eight
/// in total, with at most one held server per type.
pub fn build_decoherence_net(params: &DecoherenceNetParams) -> Result<MdpnModel, BuilderError> {
    use decoherence_actions::*;
    let h = params.h;
    if !(h > 0.0 && h <= 0.05) {
        return Err(BuilderError::InvalidParam(format!(
            "h = {h} outside (0, 0.05]"
        )));
    }
    for (name, v) in [
        ("lambda[0]*h", params.lambda[0] * h),
        ("lambda[1]*h", params.lambda[1] * h),
        ("lambda[2]*h", params.lambda[2] * h),
        ("mu[0]*h", params.mu[0] * h),
        ("mu[1]*h", params.mu[1] * h),
        ("mu[2]*h", params.mu[2] * h),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(BuilderError::InvalidParam(format!(
                "per-slot probability {name} = {v} outside [0, 1]"
            )));
        }
    }

    let mut states = Vec::new();
    for b0 in [false, true] {
        for b1 in [false, true] {
            for b2 in [false, true] {
                let id = decoherence_state(b0, b1, b2);
                states.push(ServerState {
                    id,
                    label: format!("b{}{}{}", b0 as u8, b1 as u8, b2 as u8),
                });
            }
        }
    }
    states.sort_by_key(|s| s.id);

    let actions: Vec<String> = vec![
        "idle".into(),
        "serve_r0".into(),
        "serve_r1".into(),
        "serve_r2".into(),
        "serve_r12".into(),
    ];

    // Survival probability of a held server over one slot, per type.
    let survive = [h * h, 1.0 - h * h, 1.0 - h * h];
    let arrive = [params.mu[0] * h, params.mu[1] * h, params.mu[2] * h];

    let mut feasible = vec![Vec::new(); 8];
    let mut kernel = TransitionKernel::new();
    for b0 in [false, true] {
        for b1 in [false, true] {
            for b2 in [false, true] {
                let z = decoherence_state(b0, b1, b2);
                let mut acts = vec![IDLE];
                if b0 && b1 && b2 {
                    acts.push(SERVE_R0);
                }
                if b1 {
                    acts.push(SERVE_R1);
                }
                if b2 {
                    acts.push(SERVE_R2);
                }
                if b1 && b2 {
                    acts.push(SERVE_R12);
                }
                acts.sort_unstable();

                for &a in &acts {
                    let (held, sigma): ([bool; 3], [u32; 3]) = match a {
                        IDLE => ([b0, b1, b2], [0, 0, 0]),
                        SERVE_R0 => ([false, false, false], [1, 0, 0]),
                        SERVE_R1 => ([b0, false, b2], [0, 1, 0]),
                        SERVE_R2 => ([b0, b1, false], [0, 0, 1]),
                        SERVE_R12 => ([b0, false, false], [0, 1, 1]),
                        _ => unreachable!(),
                    };
                    // Per type: survive/decohere when held, arrive when absent.
                    let fates: Vec<Vec<(bool, f64)>> = (0..3)
                        .map(|i| {
                            if held[i] {
                                two_point(true, survive[i])
                            } else {
                                two_point(true, arrive[i])
                            }
                        })
                        .collect();
                    let mut branches = Vec::new();
                    for &(n0, p0) in &fates[0] {
                        for &(n1, p1) in &fates[1] {
                            for &(n2, p2) in &fates[2] {
                                let p = p0 * p1 * p2;
                                if p == 0.0 {
                                    continue;
                                }
                                let z_next = decoherence_state(n0, n1, n2);
                                merge_branch(&mut branches, z_next, sigma.to_vec(), p);
                            }
                        }
                    }
                    kernel.insert(z, a, branches);
                }
                feasible[z] = acts;
            }
        }
    }

    let arrivals = params
        .lambda
        .iter()
        .map(|l| ArrivalLaw::bernoulli(l * h))
        .collect();

    Ok(MdpnModel::new(
        states,
        actions,
        feasible,
        kernel,
        RequestClassSet {
            count: 3,
            labels: vec!["r0".into(), "r1".into(), "r2".into()],
        },
        arrivals,
        1,
    )?)
}

fn two_point(outcome: bool, p: f64) -> Vec<(bool, f64)> {
    if p <= 0.0 {
        vec![(!outcome, 1.0)]
    } else if p >= 1.0 {
        vec![(outcome, 1.0)]
    } else {
        vec![(outcome, p), (!outcome, 1.0 - p)]
    }
}

/// The queue-0-priority controller for a decoherence-network model:
/// serve class 0 whenever all three servers are held and queue 0 is
/// nonempty, use servers 1 and 2 only while queue 0 is empty, and hold
/// otherwise. Rejects models that were not produced by the builder.
pub fn p0_policy(model: &MdpnModel) -> Result<ControllerSpec, BuilderError> {
    let expected = ["idle", "serve_r0", "serve_r1", "serve_r2", "serve_r12"];
    if model.num_states() != 8
        || model.num_classes() != 3
        || model.actions.len() != expected.len()
        || model
            .actions
            .iter()
            .zip(expected.iter())
            .any(|(a, e)| a.as_str() != *e)
    {
        return Err(BuilderError::ShapeMismatch(
            "expected the 8-state decoherence network".into(),
        ));
    }
    Ok(ControllerSpec::PriorityP0(P0Rule {
        serve_r0: decoherence_actions::SERVE_R0,
        serve_r1: decoherence_actions::SERVE_R1,
        serve_r2: decoherence_actions::SERVE_R2,
        serve_r12: decoherence_actions::SERVE_R12,
        idle: decoherence_actions::IDLE,
    }))
}

// ---------------------------------------------------------------------------
// Exact condition checks

/// One strict inequality with exact rational sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionCheck {
    pub lhs: Rat,
    pub rhs: Rat,
    pub holds: bool,
}

/// The three conditions separating the myopic rule from the priority
/// rule on the decoherence network, evaluated in exact arithmetic:
/// (A) the myopic rule starves class 0, (B) priority keeps queue 0
/// stable, (C) priority leaves enough capacity for classes 1 and 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppendixConditions {
    /// A: `mu0 (1 - l1/m1)(1 - l2/m2) < l0`.
    pub a: ConditionCheck,
    /// B: `1/m1 + 1/m2 - 1/(m1+m2) + 1/m0 < 1/l0`.
    pub b: ConditionCheck,
    /// C: `1 - l0 * (1/mu_tilde_0)` compared against `l1/m1` and `l2/m2`.
    pub c_lhs: Rat,
    pub c_rhs1: Rat,
    pub c_rhs2: Rat,
    pub c_holds: bool,
    pub all_hold: bool,
}

/// ```
/// use mdpn::builders::{check_appendix_conditions, Rat};
///
/// let r = |n: i64| Rat::new(n, 1);
/// let res = check_appendix_conditions(r(4), r(150), r(150), r(20), r(200), r(200)).unwrap();
/// assert_eq!(res.a.lhs, Rat::new(5, 4)); // 20 * (1/4) * (1/4) < 4
/// assert_eq!(res.b.lhs, Rat::new(23, 400)); // < 1/4
/// assert_eq!(res.c_lhs, Rat::new(308, 400)); // > 3/4
/// assert!(res.all_hold);
/// ```
pub fn check_appendix_conditions(
    l0: Rat,
    l1: Rat,
    l2: Rat,
    m0: Rat,
    m1: Rat,
    m2: Rat,
) -> Result<AppendixConditions, BuilderError> {
    let zero = Rat::new(0, 1);
    for (name, v) in [
        ("l0", l0),
        ("l1", l1),
        ("l2", l2),
        ("m0", m0),
        ("m1", m1),
        ("m2", m2),
    ] {
        if v <= zero {
            return Err(BuilderError::InvalidParam(format!(
                "{name} must be positive"
            )));
        }
    }
    if l1 >= m1 || l2 >= m2 {
        return Err(BuilderError::InvalidParam(
            "classes 1 and 2 must be individually subcritical (l_i < m_i)".into(),
        ));
    }

    let one = Rat::one();
    let a_lhs = m0 * (one - l1 / m1) * (one - l2 / m2);
    let a = ConditionCheck {
        lhs: a_lhs,
        rhs: l0,
        holds: a_lhs < l0,
    };

    let inv_mu_tilde = one / m1 + one / m2 - one / (m1 + m2) + one / m0;
    let b = ConditionCheck {
        lhs: inv_mu_tilde,
        rhs: one / l0,
        holds: inv_mu_tilde < one / l0,
    };

    let c_lhs = one - l0 * inv_mu_tilde;
    let c_rhs1 = l1 / m1;
    let c_rhs2 = l2 / m2;
    let c_holds = c_lhs > c_rhs1 && c_lhs > c_rhs2;

    let all_hold = a.holds && b.holds && c_holds;
    Ok(AppendixConditions {
        a,
        b,
        c_lhs,
        c_rhs1,
        c_rhs2,
        c_holds,
        all_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{self, AgnosticPolicy};
    use crate::model::validate;

    #[test]
    fn rotation3_shape_and_validity() {
        let model = build_rotation3(&Rotation3Params::default()).unwrap();
        assert_eq!(model.num_states(), 12);
        assert_eq!(model.num_actions(), 7);
        let report = validate(&model);
        assert!(report.is_valid(), "{report}");
        // Every state keeps an idle option, so no warnings either.
        assert!(report.warnings.is_empty(), "{report}");
    }

    #[test]
    fn rotation3_serve_r3_mean_schedule_is_success_probability() {
        use rotation3_actions::*;
        let params = Rotation3Params {
            r3_success: 0.75,
            ..Default::default()
        };
        let model = build_rotation3(&params).unwrap();
        let z = rotation3_state(2, true, true);
        let mean = model.mean_schedule(z, SERVE_R3).unwrap();
        // Cross-check by direct branch enumeration.
        let by_hand: f64 = model
            .kernel
            .branches(z, SERVE_R3)
            .unwrap()
            .iter()
            .map(|b| b.p * b.sigma.0[2] as f64)
            .sum();
        assert!((mean[2] - 0.75).abs() < 1e-12);
        assert!((mean[2] - by_hand).abs() < 1e-15);
        assert_eq!(mean[0], 0.0);
        assert_eq!(mean[1], 0.0);
    }

    #[test]
    fn rotation3_hold_then_serve_cycle_has_period_three() {
        use rotation3_actions::*;
        let model = build_rotation3(&Rotation3Params::default()).unwrap();
        // Hold whenever possible, serve class 3 when both servers are held.
        let mut actions = vec![0usize; 12];
        for phase in 0..3 {
            for h1 in [false, true] {
                for h2 in [false, true] {
                    let z = rotation3_state(phase, h1, h2);
                    actions[z] = if (phase == 0 && !h1) || (phase == 1 && !h2) {
                        HOLD
                    } else if phase == 2 && h1 && h2 {
                        SERVE_R3
                    } else {
                        IDLE
                    };
                }
            }
        }
        let policy = AgnosticPolicy::deterministic(&model, &actions);
        let chain = markov::induced_chain(&model, &policy).unwrap();

        // Independent assembly of the expected orbit from the kernel: with
        // zero decoherence the walk is deterministic with period 3.
        let orbit = [
            rotation3_state(0, false, false),
            rotation3_state(1, true, false),
            rotation3_state(2, true, true),
        ];
        for (i, &z) in orbit.iter().enumerate() {
            let z_next = orbit[(i + 1) % 3];
            assert_eq!(chain[z][z_next], 1.0, "orbit edge {z} -> {z_next}");
        }
        let report = markov::is_unichain_policy(&model, &policy).unwrap();
        assert!(report.is_unichain);
        assert_eq!(report.closed_classes[0], {
            let mut o = orbit.to_vec();
            o.sort_unstable();
            o
        });
    }

    #[test]
    fn rotation3_stochastic_is_unichain_under_edge_policies() {
        let model = build_rotation3(&Rotation3Params::stochastic()).unwrap();
        // All-idle: holds leak away, the bare cycle is the single class.
        let idle = AgnosticPolicy::deterministic(&model, &[rotation3_actions::IDLE; 12]);
        assert!(
            markov::is_unichain_policy(&model, &idle)
                .unwrap()
                .is_unichain
        );
        let uniform = AgnosticPolicy::uniform(&model);
        assert!(
            markov::is_unichain_policy(&model, &uniform)
                .unwrap()
                .is_unichain
        );
    }

    #[test]
    fn decoherence_net_shape_and_validity() {
        let model = build_decoherence_net(&DecoherenceNetParams::paper(0.01)).unwrap();
        assert_eq!(model.num_states(), 8);
        assert_eq!(model.num_actions(), 5);
        let report = validate(&model);
        assert!(report.is_valid(), "{report}");
        // Arrival rates are lambda_i * h.
        let rates = model.arrival_rates();
        assert!((rates[0] - 0.0002).abs() < 1e-15);
        assert!((rates[1] - 0.0075).abs() < 1e-15);
    }

    #[test]
    fn decoherence_net_rejects_out_of_range_probabilities() {
        let bad = DecoherenceNetParams {
            h: 0.01,
            lambda: [4.0, 150.0, 150.0],
            mu: [20.0, 200.0, 200.0],
        };
        assert!(matches!(
            build_decoherence_net(&bad),
            Err(BuilderError::InvalidParam(_))
        ));
        let bad_h = DecoherenceNetParams {
            h: 0.2,
            ..DecoherenceNetParams::paper(0.01)
        };
        assert!(matches!(
            build_decoherence_net(&bad_h),
            Err(BuilderError::InvalidParam(_))
        ));
    }

    #[test]
    fn decoherence_net_simultaneous_small_events_have_order_h2_mass() {
        let params = DecoherenceNetParams::paper(0.01);
        let h = params.h;
        let model = build_decoherence_net(&params).unwrap();
        // Small events per type: an arrival (prob mu_i h), a type-0
        // survival (h^2), a type-1/2 loss (h^2). Their complements are
        // order one. Mass of branches carrying two or more small events
        // must be O(h^2) with the pair-count constant.
        let mut worst_pair_mass: f64 = 0.0;
        for (&(z, a), branches) in model.kernel.iter() {
            let held_post = post_action_holds(z, a);
            let mut pair_mass = 0.0;
            for b in branches {
                let mut small = 0;
                for i in 0..3 {
                    let now = (b.z_next >> (2 - i)) & 1 == 1;
                    let was = held_post[i];
                    let is_small = if was {
                        if i == 0 {
                            now
                        } else {
                            !now
                        }
                    } else {
                        now
                    };
                    if is_small {
                        small += 1;
                    }
                }
                if small >= 2 {
                    pair_mass += b.p;
                }
            }
            worst_pair_mass = worst_pair_mass.max(pair_mass);
        }
        let c0: f64 = params
            .mu
            .iter()
            .chain(params.lambda.iter())
            .fold(1.0f64, |acc, &v| acc.max(v * v));
        let pairs = 28.0; // 7 choose 2 event pairs
        assert!(
            worst_pair_mass <= pairs * c0 * h * h,
            "pair mass {worst_pair_mass}"
        );
        assert!(worst_pair_mass > 0.0);
    }

    fn post_action_holds(z: usize, a: usize) -> [bool; 3] {
        use decoherence_actions::*;
        let b0 = z >> 2 & 1 == 1;
        let b1 = z >> 1 & 1 == 1;
        let b2 = z & 1 == 1;
        match a {
            IDLE => [b0, b1, b2],
            SERVE_R0 => [false, false, false],
            SERVE_R1 => [b0, false, b2],
            SERVE_R2 => [b0, b1, false],
            SERVE_R12 => [b0, false, false],
            _ => unreachable!(),
        }
    }

    #[test]
    fn p0_rule_matches_definition() {
        let model = build_decoherence_net(&DecoherenceNetParams::paper(0.01)).unwrap();
        let spec = p0_policy(&model).unwrap();
        let ControllerSpec::PriorityP0(rule) = spec else {
            panic!("expected priority controller");
        };
        // All servers held, class-0 work queued: serve class 0.
        assert_eq!(
            rule.select(decoherence_state(true, true, true), &[1, 5, 5]),
            decoherence_actions::SERVE_R0
        );
        // Missing the type-0 server: hold and wait.
        assert_eq!(
            rule.select(decoherence_state(false, true, true), &[1, 5, 5]),
            decoherence_actions::IDLE
        );
        // Queue 0 empty: serve the others greedily.
        assert_eq!(
            rule.select(decoherence_state(false, true, true), &[0, 5, 5]),
            decoherence_actions::SERVE_R12
        );
        assert_eq!(
            rule.select(decoherence_state(false, true, false), &[0, 5, 5]),
            decoherence_actions::SERVE_R1
        );
        assert_eq!(
            rule.select(decoherence_state(false, false, true), &[0, 0, 5]),
            decoherence_actions::SERVE_R2
        );
        assert_eq!(
            rule.select(decoherence_state(false, false, false), &[0, 5, 5]),
            decoherence_actions::IDLE
        );
    }

    #[test]
    fn p0_policy_rejects_foreign_models() {
        let model = build_rotation3(&Rotation3Params::default()).unwrap();
        assert!(matches!(
            p0_policy(&model),
            Err(BuilderError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn worked_condition_numbers_are_exact() {
        let r = |n, d| Rat::new(n, d);
        let res = check_appendix_conditions(
            r(4, 1),
            r(150, 1),
            r(150, 1),
            r(20, 1),
            r(200, 1),
            r(200, 1),
        )
        .unwrap();
        assert_eq!(res.a.lhs, r(5, 4));
        assert_eq!(res.a.rhs, r(4, 1));
        assert!(res.a.holds);
        assert_eq!(res.b.lhs, r(23, 400));
        assert_eq!(res.b.rhs, r(1, 4));
        assert!(res.b.holds);
        assert_eq!(res.c_lhs, r(308, 400));
        assert_eq!(res.c_rhs1, r(3, 4));
        assert!(res.c_holds);
        assert!(res.all_hold);
    }

    #[test]
    fn exact_boundary_fails_the_strict_inequality() {
        let r = |n: i64, d: i64| Rat::new(n, d);
        // l0 exactly at mu0 (1 - l1/m1)(1 - l2/m2) = 5/4.
        let res = check_appendix_conditions(
            r(5, 4),
            r(150, 1),
            r(150, 1),
            r(20, 1),
            r(200, 1),
            r(200, 1),
        )
        .unwrap();
        assert!(!res.a.holds);
        assert_eq!(res.a.lhs, res.a.rhs);
    }

    #[test]
    fn huge_arrival_rate_breaks_condition_b() {
        let r = |n: i64, d: i64| Rat::new(n, d);
        let res = check_appendix_conditions(
            r(1000, 1),
            r(150, 1),
            r(150, 1),
            r(20, 1),
            r(200, 1),
            r(200, 1),
        )
        .unwrap();
        assert!(!res.b.holds);
        assert!(!res.all_hold);
    }

    #[test]
    fn builders_emit_loadable_documents() {
        for model in [
            build_rotation3(&Rotation3Params::default()).unwrap(),
            build_rotation3(&Rotation3Params::stochastic()).unwrap(),
            build_decoherence_net(&DecoherenceNetParams::paper(0.01)).unwrap(),
        ] {
            let text = crate::model::save_model(&model);
            let reloaded = crate::model::load_model(&text).unwrap();
            assert_eq!(crate::model::save_model(&reloaded), text);
        }
    }
}
