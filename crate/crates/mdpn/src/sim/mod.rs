//! Discrete-time stochastic simulation under a controller, with traces,
//! stability diagnostics, Lyapunov drift series, the per-epoch
//! timescale-separation diagnostic, and a seeded replication harness.
//!
//! Order of events in one slot: observe the server state, choose an
//! action, sample the joint (next state, schedule) branch, apply
//! departures truncated at the current queue, then add arrivals. The
//! branch is sampled whether or not requests are queued: scheduling
//! proceeds regardless of queue contents and only the departures
//! truncate, so the server chain's law is policy-determined and
//! queue-independent.

pub mod rng;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::markov::{self, AgnosticPolicy, MarkovError};
use crate::model::{MdpnModel, ModelError};
use crate::solver::{self, QueueWeights, SolverConfig, SolverError};

pub use rng::{StreamRng, STREAM_ARRIVALS, STREAM_KERNEL};

/// Stream id for controller-internal randomization (randomized fixed
/// policies); deterministic controllers never draw from it.
pub const STREAM_POLICY: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("epoch {epoch} solve failed: {source}")]
    EpochSolve { epoch: u64, source: SolverError },
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error("initial queue has {found} classes, model has {expected}")]
    BadInitialQueue { found: usize, expected: usize },
    #[error("no epoch {0} in trace")]
    NoSuchEpoch(u64),
    #[error("epoch {0} is incomplete in this trace")]
    EpochIncomplete(u64),
    #[error("controller does not fit this model: {0}")]
    ShapeMismatch(String),
}

/// Joint system state: slot counter, server state, live queue vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    pub t: u64,
    pub z: usize,
    pub q: Vec<u64>,
}

/// What happened inside one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub z_next: usize,
    pub sigma: Vec<u32>,
    pub arrivals: Vec<u32>,
    pub departures: Vec<u32>,
}

/// Single simulation step. Samples a kernel branch with its probability,
/// truncates departures at the live queue, samples arrivals, and advances
/// the slot counter. Identical rng states yield identical outcomes.
pub fn step(
    model: &MdpnModel,
    state: &SystemState,
    action: usize,
    kernel_rng: &mut StreamRng,
    arrival_rng: &mut StreamRng,
) -> Result<(SystemState, SlotOutcome), SimError> {
    let branches = model
        .kernel
        .branches(state.z, action)
        .ok_or(ModelError::InfeasibleAction {
            state: state.z,
            action,
        })?;

    let u = kernel_rng.next_f64();
    let mut acc = 0.0;
    let mut chosen = branches.last().expect("validated model has branches");
    for b in branches {
        acc += b.p;
        if u < acc {
            chosen = b;
            break;
        }
    }

    let r = model.num_classes();
    let mut departures = vec![0u32; r];
    let mut q_next = state.q.clone();
    for cls in 0..r {
        let d = (chosen.sigma.0[cls] as u64).min(state.q[cls]);
        departures[cls] = d as u32;
        q_next[cls] -= d;
    }
    let mut arrivals = vec![0u32; r];
    for cls in 0..r {
        let batch = arrival_rng.sample_pmf(&model.arrivals[cls].pmf) as u32;
        arrivals[cls] = batch;
        q_next[cls] += batch as u64;
    }

    Ok((
        SystemState {
            t: state.t + 1,
            z: chosen.z_next,
            q: q_next,
        },
        SlotOutcome {
            z_next: chosen.z_next,
            sigma: chosen.sigma.0.clone(),
            arrivals,
            departures,
        },
    ))
}

// ---------------------------------------------------------------------------
// Controllers

/// Epoch-length rule for the epoch-based controller. Must be
/// nondecreasing in every queue component and grow faster than
/// `log ||Q||_1`; the default `ceil(log(2 + ||Q||_1)^2)` satisfies both
/// and stays polylogarithmic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpochFn {
    LogSquared,
    Fixed(u64),
}

impl EpochFn {
    pub fn eval(&self, q: &[u64]) -> u64 {
        match self {
            EpochFn::LogSquared => {
                let total: u64 = q.iter().sum();
                let l = (2.0 + total as f64).ln();
                (l * l).ceil().max(1.0) as u64
            }
            EpochFn::Fixed(len) => (*len).max(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct WarpConfig {
    pub epoch: EpochFn,
    pub solver: SolverConfig,
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig {
            epoch: EpochFn::LogSquared,
            solver: SolverConfig::default(),
        }
    }
}

/// Queue-0-first priority rule for the three-class matching network:
/// serve class 0 whenever all three servers are held and work is queued,
/// use servers for classes 1 and 2 only while queue 0 is empty, and hold
/// otherwise. State ids encode held flags as `z = b0*4 + b1*2 + b2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct P0Rule {
    pub serve_r0: usize,
    pub serve_r1: usize,
    pub serve_r2: usize,
    pub serve_r12: usize,
    pub idle: usize,
}

impl P0Rule {
    pub fn select(&self, z: usize, q: &[u64]) -> usize {
        let b0 = z >> 2 & 1 == 1;
        let b1 = z >> 1 & 1 == 1;
        let b2 = z & 1 == 1;
        if b0 && b1 && b2 && q[0] > 0 {
            self.serve_r0
        } else if q[0] == 0 {
            match (b1 && q[1] > 0, b2 && q[2] > 0) {
                (true, true) => self.serve_r12,
                (true, false) => self.serve_r1,
                (false, true) => self.serve_r2,
                (false, false) => self.idle,
            }
        } else {
            self.idle
        }
    }
}

/// Immutable controller description; a fresh stateful controller is
/// instantiated from it for every run.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    /// Apply a fixed (possibly randomized) request-agnostic policy.
    FixedAgnostic(AgnosticPolicy),
    /// Myopic queue-weighted rule.
    MaxWeight,
    /// Epoch-based weighted-average-reward controller.
    Warp(WarpConfig),
    /// Queue-0 priority discipline.
    PriorityP0(P0Rule),
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::FixedAgnostic(_) => write!(f, "fixed-agnostic"),
            ControllerSpec::MaxWeight => write!(f, "maxweight"),
            ControllerSpec::Warp(cfg) => write!(f, "warp(epoch={:?})", cfg.epoch),
            ControllerSpec::PriorityP0(_) => write!(f, "p0"),
        }
    }
}

/// Marks one controller epoch: where it started, how long it was planned
/// to run, the queue snapshot that parameterized it, and the policy used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochMark {
    pub epoch: u64,
    pub start: u64,
    pub planned_len: u64,
    pub q_at_start: Vec<u64>,
    pub policy: Vec<usize>,
}

struct WarpState {
    cfg: WarpConfig,
    current: Vec<usize>,
    epoch_end: u64,
    epoch_index: u64,
    cache: HashMap<Vec<u64>, Vec<usize>>,
    marks: Vec<EpochMark>,
}

/// Reduces a queue vector to its direction (division by the gcd of the
/// components). The optimal policy is invariant under positive scaling of
/// the weight vector, so direction-keyed memoization is sound.
fn direction_key(q: &[u64]) -> Vec<u64> {
    fn gcd(mut a: u64, mut b: u64) -> u64 {
        while b != 0 {
            let t = a % b;
            a = b;
            b = t;
        }
        a
    }
    let g = q.iter().fold(0u64, |acc, &v| gcd(acc, v));
    if g <= 1 {
        q.to_vec()
    } else {
        q.iter().map(|&v| v / g).collect()
    }
}

enum ControllerState {
    Fixed(AgnosticPolicy),
    MaxWeight,
    Warp(WarpState),
    PriorityP0(P0Rule),
}

/// Stateful controller for a single run.
pub struct Controller {
    state: ControllerState,
}

impl Controller {
    pub fn new(model: &MdpnModel, spec: &ControllerSpec) -> Result<Self, SimError> {
        let state = match spec {
            ControllerSpec::FixedAgnostic(policy) => {
                policy.validate(model)?;
                ControllerState::Fixed(policy.clone())
            }
            ControllerSpec::MaxWeight => ControllerState::MaxWeight,
            ControllerSpec::Warp(cfg) => ControllerState::Warp(WarpState {
                cfg: cfg.clone(),
                current: Vec::new(),
                epoch_end: 0,
                epoch_index: 0,
                cache: HashMap::new(),
                marks: Vec::new(),
            }),
            ControllerSpec::PriorityP0(rule) => {
                let ids = [
                    rule.serve_r0,
                    rule.serve_r1,
                    rule.serve_r2,
                    rule.serve_r12,
                    rule.idle,
                ];
                if model.num_classes() != 3 || ids.iter().any(|&a| a >= model.num_actions()) {
                    return Err(SimError::ShapeMismatch(
                        "queue-priority rule needs 3 classes and valid action ids".into(),
                    ));
                }
                ControllerState::PriorityP0(rule.clone())
            }
        };
        Ok(Controller { state })
    }

    /// Chooses the action for slot `t` in server state `z` with live
    /// queues `q`. Returns the action and the epoch id the slot belongs to.
    pub fn select(
        &mut self,
        model: &MdpnModel,
        t: u64,
        z: usize,
        q: &[u64],
        policy_rng: &mut StreamRng,
    ) -> Result<(usize, u64), SimError> {
        match &mut self.state {
            ControllerState::Fixed(policy) => {
                let row = &policy.probs[z];
                let a = policy_rng.sample_pmf(row);
                Ok((a, 0))
            }
            ControllerState::MaxWeight => {
                let a =
                    solver::max_weight_action(model, z, q).map_err(|e| SimError::EpochSolve {
                        epoch: 0,
                        source: e,
                    })?;
                Ok((a, 0))
            }
            ControllerState::Warp(warp) => {
                if warp.current.is_empty() || t >= warp.epoch_end {
                    let epoch = if warp.current.is_empty() {
                        0
                    } else {
                        warp.epoch_index + 1
                    };
                    let key = direction_key(q);
                    let policy = match warp.cache.get(&key) {
                        Some(p) => p.clone(),
                        None => {
                            let weights = QueueWeights::from_queue(q);
                            let gb =
                                solver::relative_value_iteration(model, &weights, &warp.cfg.solver)
                                    .map_err(|source| SimError::EpochSolve { epoch, source })?;
                            warp.cache.insert(key, gb.policy.clone());
                            gb.policy
                        }
                    };
                    let tau = warp.cfg.epoch.eval(q);
                    warp.epoch_index = epoch;
                    warp.epoch_end = t + tau;
                    warp.marks.push(EpochMark {
                        epoch,
                        start: t,
                        planned_len: tau,
                        q_at_start: q.to_vec(),
                        policy: policy.clone(),
                    });
                    warp.current = policy;
                }
                Ok((warp.current[z], warp.epoch_index))
            }
            ControllerState::PriorityP0(rule) => Ok((rule.select(z, q), 0)),
        }
    }

    fn take_marks(&mut self) -> Vec<EpochMark> {
        match &mut self.state {
            ControllerState::Warp(w) => std::mem::take(&mut w.marks),
            _ => Vec::new(),
        }
    }
}

// ---------------------------------------------------------------------------
// Traces

/// Column-major record of a run. Queue columns hold the post-slot queue;
/// the pre-slot queue of slot t is the post-slot queue of slot t-1, or
/// `initial_queue` for t = 0.
#[derive(Debug, Clone)]
pub struct Trace {
    pub classes: usize,
    pub seed: u64,
    pub model_hash: String,
    pub controller: String,
    pub initial_state: usize,
    pub initial_queue: Vec<u64>,
    pub z: Vec<u32>,
    pub action: Vec<u32>,
    pub sigma: Vec<u32>,
    pub arrivals: Vec<u32>,
    pub departures: Vec<u32>,
    pub queue: Vec<u64>,
    pub epoch_id: Vec<u32>,
    pub epoch_marks: Vec<EpochMark>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn queue_at(&self, t: usize) -> &[u64] {
        &self.queue[t * self.classes..(t + 1) * self.classes]
    }

    pub fn queue_total(&self, t: usize) -> u64 {
        self.queue_at(t).iter().sum()
    }

    /// Post-slot total queue length as a float series.
    pub fn total_series(&self) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.queue_total(t) as f64)
            .collect()
    }

    /// Post-slot queue length of one class as a float series.
    pub fn class_series(&self, cls: usize) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.queue_at(t)[cls] as f64)
            .collect()
    }

    pub fn total_departures(&self, cls: usize) -> u64 {
        (0..self.len())
            .map(|t| self.departures[t * self.classes + cls] as u64)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let r = self.classes;
        let mut out = String::new();
        out.push_str("t,z,action");
        for prefix in ["sigma", "arrivals", "departures"] {
            for cls in 1..=r {
                out.push_str(&format!(",{prefix}_{cls}"));
            }
        }
        for cls in 1..=r {
            out.push_str(&format!(",Q_{cls}"));
        }
        out.push_str(",epoch_id\n");
        for t in 0..self.len() {
            out.push_str(&format!("{t},{},{}", self.z[t], self.action[t]));
            for col in [&self.sigma, &self.arrivals, &self.departures] {
                for cls in 0..r {
                    out.push_str(&format!(",{}", col[t * r + cls]));
                }
            }
            for cls in 0..r {
                out.push_str(&format!(",{}", self.queue[t * r + cls]));
            }
            out.push_str(&format!(",{}\n", self.epoch_id[t]));
        }
        out
    }

    /// Sidecar metadata for one exported trace.
    pub fn metadata_json(&self) -> String {
        let meta = serde_json::json!({
            "seed": self.seed,
            "model_hash": self.model_hash,
            "controller": self.controller,
            "horizon": self.len(),
            "initial_state": self.initial_state,
            "initial_queue": self.initial_queue,
            "software_version": env!("CARGO_PKG_VERSION"),
        });
        let mut text = serde_json::to_string_pretty(&meta).expect("metadata serialization");
        text.push('\n');
        text
    }
}

/// Runs from the empty queue and server state 0.
pub fn run(
    model: &MdpnModel,
    spec: &ControllerSpec,
    horizon: u64,
    seed: u64,
) -> Result<Trace, SimError> {
    run_from(model, spec, 0, &vec![0; model.num_classes()], horizon, seed)
}

/// Runs from an arbitrary initial condition. The trace is a deterministic
/// function of (model, controller spec, initial condition, horizon, seed).
pub fn run_from(
    model: &MdpnModel,
    spec: &ControllerSpec,
    initial_z: usize,
    initial_q: &[u64],
    horizon: u64,
    seed: u64,
) -> Result<Trace, SimError> {
    if horizon == 0 {
        return Err(SimError::BadHorizon);
    }
    if initial_q.len() != model.num_classes() {
        return Err(SimError::BadInitialQueue {
            found: initial_q.len(),
            expected: model.num_classes(),
        });
    }
    if initial_z >= model.num_states() {
        return Err(SimError::Model(ModelError::BadState(initial_z)));
    }

    let r = model.num_classes();
    let slots = horizon as usize;
    let mut controller = Controller::new(model, spec)?;
    let mut kernel_rng = StreamRng::new(seed, STREAM_KERNEL);
    let mut arrival_rng = StreamRng::new(seed, STREAM_ARRIVALS);
    let mut policy_rng = StreamRng::new(seed, STREAM_POLICY);

    let mut trace = Trace {
        classes: r,
        seed,
        model_hash: model.hash(),
        controller: spec.to_string(),
        initial_state: initial_z,
        initial_queue: initial_q.to_vec(),
        z: Vec::with_capacity(slots),
        action: Vec::with_capacity(slots),
        sigma: Vec::with_capacity(slots * r),
        arrivals: Vec::with_capacity(slots * r),
        departures: Vec::with_capacity(slots * r),
        queue: Vec::with_capacity(slots * r),
        epoch_id: Vec::with_capacity(slots),
        epoch_marks: Vec::new(),
    };

    let mut state = SystemState {
        t: 0,
        z: initial_z,
        q: initial_q.to_vec(),
    };
    for t in 0..horizon {
        let (action, epoch) = controller.select(model, t, state.z, &state.q, &mut policy_rng)?;
        let (next, outcome) = step(model, &state, action, &mut kernel_rng, &mut arrival_rng)?;
        trace.z.push(state.z as u32);
        trace.action.push(action as u32);
        trace.sigma.extend(outcome.sigma.iter().copied());
        trace.arrivals.extend(outcome.arrivals.iter().copied());
        trace.departures.extend(outcome.departures.iter().copied());
        trace.queue.extend(next.q.iter().copied());
        trace.epoch_id.push(epoch as u32);
        state = next;
    }
    trace.epoch_marks = controller.take_marks();
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Growing,
    Bounded,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Growing => write!(f, "growing"),
            Verdict::Bounded => write!(f, "bounded"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

/// Stability evidence from one series. Positive recurrence is not
/// decidable from a finite trace; the verdict thresholds (3-sigma slope
/// test, ten compact-set visits, tenfold max growth) are pragmatic
/// defaults and are documented as such.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub slope: f64,
    pub slope_se: f64,
    pub max_post: f64,
    pub burn_in_max: f64,
    pub returns_to_compact: usize,
    pub verdict: Verdict,
}

/// Least-squares slope of `y` against its index, plus a batch-means
/// standard error: the segment splits into `blocks` stretches whose
/// individual slopes calibrate the noise scale even under serial
/// correlation.
fn slope_with_se(y: &[f64], blocks: usize) -> (f64, f64) {
    let n = y.len();
    if n < 2 {
        return (0.0, f64::INFINITY);
    }
    let slope = ls_slope(y);
    let k = blocks.clamp(2, n / 2);
    let block_len = n / k;
    let mut block_slopes = Vec::with_capacity(k);
    for b in 0..k {
        let seg = &y[b * block_len..(b + 1) * block_len];
        if seg.len() >= 2 {
            block_slopes.push(ls_slope(seg));
        }
    }
    let m = block_slopes.len();
    if m < 2 {
        return (slope, f64::INFINITY);
    }
    let mean: f64 = block_slopes.iter().sum::<f64>() / m as f64;
    let var: f64 = block_slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (slope, (var / m as f64).sqrt())
}

fn ls_slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean: f64 = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &v) in y.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (v - y_mean);
        den += dt * dt;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Applies the stability rules to an arbitrary queue-length series.
pub fn stability_diagnostic_series(
    series: &[f64],
    burn_in: f64,
    compact_threshold: f64,
) -> StabilityReport {
    let n = series.len();
    let split = ((n as f64 * burn_in) as usize).min(n);
    let burn_in_max = series[..split].iter().cloned().fold(0.0, f64::max);
    let post = &series[split..];
    if post.len() < 100 {
        return StabilityReport {
            slope: f64::NAN,
            slope_se: f64::NAN,
            max_post: f64::NAN,
            burn_in_max,
            returns_to_compact: 0,
            verdict: Verdict::Inconclusive,
        };
    }
    let (slope, se) = slope_with_se(post, 10);
    let max_post = post.iter().cloned().fold(0.0, f64::max);
    let returns = post.iter().filter(|&&v| v <= compact_threshold).count();

    let verdict = if slope > 3.0 * se && max_post > 10.0 * burn_in_max.max(1.0) {
        Verdict::Growing
    } else if slope <= 3.0 * se && returns >= 10 {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    StabilityReport {
        slope,
        slope_se: se,
        max_post,
        burn_in_max,
        returns_to_compact: returns,
        verdict,
    }
}

/// Stability diagnostic on the total queue length of a trace.
pub fn stability_diagnostic(
    trace: &Trace,
    burn_in: f64,
    compact_threshold: f64,
) -> StabilityReport {
    stability_diagnostic_series(&trace.total_series(), burn_in, compact_threshold)
}

/// Quadratic Lyapunov increments over windows: `L(Q) = sum Q_r^2 / 2`,
/// evaluated exactly on the integer queues, differenced at window ends.
pub fn lyapunov_drift(trace: &Trace, window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let twice_l = |q: &[u64]| -> u128 { q.iter().map(|&v| (v as u128) * (v as u128)).sum() };
    let q_at = |t: usize| -> u128 {
        if t == 0 {
            twice_l(&trace.initial_queue)
        } else {
            twice_l(trace.queue_at(t - 1))
        }
    };
    let mut out = Vec::new();
    let mut k = 0;
    while (k + 1) * window <= trace.len() {
        let before = q_at(k * window) as i128;
        let after = q_at((k + 1) * window) as i128;
        out.push((after - before) as f64 / 2.0);
        k += 1;
    }
    out
}

/// Total-variation distance between the empirical server-state occupancy
/// over the tail half of epoch `i` and the stationary law of that epoch's
/// fixed policy. Small values certify that queues effectively see the
/// stationary service rates of the epoch policy.
pub fn timescale_diagnostic(model: &MdpnModel, trace: &Trace, epoch: u64) -> Result<f64, SimError> {
    let mark = trace
        .epoch_marks
        .iter()
        .find(|m| m.epoch == epoch)
        .ok_or(SimError::NoSuchEpoch(epoch))?;
    let end = mark.start + mark.planned_len;
    if end > trace.len() as u64 {
        return Err(SimError::EpochIncomplete(epoch));
    }
    let tail = (mark.planned_len / 2).max(1);
    let lo = (end - tail) as usize;
    let hi = end as usize;

    let n = model.num_states();
    let mut empirical = vec![0.0; n];
    for t in lo..hi {
        empirical[trace.z[t] as usize] += 1.0;
    }
    for e in empirical.iter_mut() {
        *e /= (hi - lo) as f64;
    }

    let policy = AgnosticPolicy::deterministic(model, &mark.policy);
    let chain = markov::induced_chain(model, &policy)?;
    let mu = markov::stationary_distribution(&chain, 1e-9)?;
    Ok(markov::total_variation(&empirical, &mu.0)?)
}

// ---------------------------------------------------------------------------
// Replications

#[derive(Debug, Clone)]
pub struct ReplicationConfig {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub burn_in: f64,
    pub compact_threshold: f64,
    pub initial_z: usize,
    pub initial_q: Vec<u64>,
    pub max_workers: usize,
}

impl ReplicationConfig {
    pub fn new(horizon: u64, seeds: Vec<u64>, classes: usize) -> Self {
        ReplicationConfig {
            horizon,
            seeds,
            burn_in: 0.05,
            compact_threshold: 50.0,
            initial_z: 0,
            initial_q: vec![0; classes],
            max_workers: 4,
        }
    }
}

/// Diagnostics from one seed: the total-queue report plus one per class.
#[derive(Debug, Clone)]
pub struct SeedDiagnostics {
    pub seed: u64,
    pub total: StabilityReport,
    pub per_class: Vec<StabilityReport>,
}

/// Cross-seed slope statistics with a 95% t-interval. Seeds are
/// independent replicates, so this interval is calibrated even when the
/// within-run series is strongly autocorrelated.
#[derive(Debug, Clone)]
pub struct SlopeSummary {
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Two-sided 95% Student-t quantiles for small samples.
fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
        2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
        2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        f64::INFINITY
    } else if df <= 30 {
        TABLE[df - 1]
    } else {
        1.96
    }
}

/// Slopes are sorted before aggregation so the summary is exactly
/// invariant under permutations of the seed list.
fn summarize_slopes(slopes: &[f64]) -> SlopeSummary {
    let mut sorted = slopes.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return SlopeSummary {
            mean,
            sd: 0.0,
            ci_low: mean,
            ci_high: mean,
        };
    }
    let var = sorted.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let half = t_quantile_975(n - 1) * sd / (n as f64).sqrt();
    SlopeSummary {
        mean,
        sd,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

#[derive(Debug)]
pub struct ReplicationReport {
    pub per_seed: Vec<Result<SeedDiagnostics, SimError>>,
    /// Aggregate over the seeds that succeeded.
    pub total: Option<SlopeSummary>,
    pub per_class: Vec<Option<SlopeSummary>>,
}

/// Runs one independent replication per seed (concurrently, up to
/// `max_workers`), computes per-seed stability diagnostics, and
/// aggregates cross-seed slope statistics. Per-seed failures are
/// reported in place; the other seeds still run.
pub fn replications(
    model: &MdpnModel,
    spec: &ControllerSpec,
    cfg: &ReplicationConfig,
) -> ReplicationReport {
    let r = model.num_classes();
    let nseeds = cfg.seeds.len();
    let workers = cfg.max_workers.clamp(1, nseeds.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: std::sync::Mutex<Vec<Option<Result<SeedDiagnostics, SimError>>>> =
        std::sync::Mutex::new((0..nseeds).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= nseeds {
                    break;
                }
                let seed = cfg.seeds[idx];
                let outcome = run_from(
                    model,
                    spec,
                    cfg.initial_z,
                    &cfg.initial_q,
                    cfg.horizon,
                    seed,
                )
                .map(|trace| {
                    let total = stability_diagnostic(&trace, cfg.burn_in, cfg.compact_threshold);
                    let per_class = (0..r)
                        .map(|cls| {
                            stability_diagnostic_series(
                                &trace.class_series(cls),
                                cfg.burn_in,
                                cfg.compact_threshold,
                            )
                        })
                        .collect();
                    SeedDiagnostics {
                        seed,
                        total,
                        per_class,
                    }
                });
                slots.lock().expect("replication slots")[idx] = Some(outcome);
            });
        }
    });

    let per_seed: Vec<Result<SeedDiagnostics, SimError>> = slots
        .into_inner()
        .expect("replication slots")
        .into_iter()
        .map(|o| o.expect("every seed visited"))
        .collect();

    let ok: Vec<&SeedDiagnostics> = per_seed.iter().filter_map(|r| r.as_ref().ok()).collect();
    let total = if ok.is_empty() {
        None
    } else {
        Some(summarize_slopes(
            &ok.iter().map(|d| d.total.slope).collect::<Vec<_>>(),
        ))
    };
    let per_class = (0..r)
        .map(|cls| {
            if ok.is_empty() {
                None
            } else {
                Some(summarize_slopes(
                    &ok.iter()
                        .map(|d| d.per_class[cls].slope)
                        .collect::<Vec<_>>(),
                ))
            }
        })
        .collect();

    ReplicationReport {
        per_seed,
        total,
        per_class,
    }
}
