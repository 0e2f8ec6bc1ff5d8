//! Deterministic random-model generation for tests and fuzzing. Models
//! come out with dense all-positive kernels, so every stationary policy
//! induces an irreducible chain and exact policy evaluation is always
//! well posed.

use crate::model::{
    ArrivalLaw, Branch, MdpnModel, RequestClassSet, Schedule, ServerState, TransitionKernel,
};
use crate::sim::StreamRng;

pub struct RandomModelSpec {
    pub states: usize,
    pub actions: usize,
    pub classes: usize,
    pub schedule_bound: u32,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        RandomModelSpec {
            states: 3,
            actions: 2,
            classes: 2,
            schedule_bound: 2,
        }
    }
}

/// Random model with every action feasible everywhere and branch
/// probabilities bounded away from zero.
pub fn random_model(spec: &RandomModelSpec, seed: u64) -> MdpnModel {
    let mut rng = StreamRng::new(seed, 900);
    let n = spec.states;
    let server_states = (0..n)
        .map(|id| ServerState {
            id,
            label: format!("z{id}"),
        })
        .collect();
    let actions = (0..spec.actions).map(|a| format!("a{a}")).collect();
    let feasible = vec![(0..spec.actions).collect::<Vec<_>>(); n];

    let mut kernel = TransitionKernel::new();
    for z in 0..n {
        for a in 0..spec.actions {
            // One branch per destination state; weights in [0.1, 1.1).
            let mut weights: Vec<f64> = (0..n).map(|_| 0.1 + rng.next_f64()).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let branches = weights
                .into_iter()
                .enumerate()
                .map(|(z_next, p)| {
                    let sigma = (0..spec.classes)
                        .map(|_| (rng.next_u64() % (spec.schedule_bound as u64 + 1)) as u32)
                        .collect();
                    Branch {
                        z_next,
                        sigma: Schedule(sigma),
                        p,
                    }
                })
                .collect();
            kernel.insert(z, a, branches);
        }
    }

    let arrivals = (0..spec.classes)
        .map(|_| ArrivalLaw::bernoulli(0.2 + 0.5 * rng.next_f64()))
        .collect();
    MdpnModel::new(
        server_states,
        actions,
        feasible,
        kernel,
        RequestClassSet {
            count: spec.classes,
            labels: (0..spec.classes).map(|r| format!("r{r}")).collect(),
        },
        arrivals,
        spec.schedule_bound,
    )
    .expect("random model construction is exact")
}

/// Random nonnegative weight vector with entries in [0, scale).
pub fn random_weights(classes: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::new(seed, 901);
    (0..classes).map(|_| scale * rng.next_f64()).collect()
}
