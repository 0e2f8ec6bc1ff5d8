//! The network data model: request classes, arrival laws, the controlled
//! service kernel, and the derived mean-schedule quantities that the
//! solver, capacity, and simulation layers consume.
//!
//! A model couples a finite set of server states with a finite global
//! action list. Each state carries a feasibility mask over actions, and
//! each feasible `(state, action)` pair owns a branch list: the joint
//! distribution of (next server state, offered schedule). Request queues
//! are not part of the model; they live in the simulator.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tolerance on probability row sums. Builders do exact arithmetic, so a
/// tight tolerance catches construction bugs rather than float noise.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("action {action} is not feasible in state {state}")]
    InfeasibleAction { state: usize, action: usize },
    #[error("state id {0} out of range")]
    BadState(usize),
    #[error("model failed validation:\n{0}")]
    Invalid(ValidationReport),
}

/// The request classes: how many there are and what they are called.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestClassSet {
    pub count: usize,
    pub labels: Vec<String>,
}

/// Distribution of per-slot batch arrivals for one request class:
/// a finite pmf over batch sizes `0..pmf.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalLaw {
    pub pmf: Vec<f64>,
}

impl ArrivalLaw {
    pub fn bernoulli(p: f64) -> Self {
        ArrivalLaw {
            pmf: vec![1.0 - p, p],
        }
    }

    /// Mean batch size per slot.
    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Largest batch size with nonzero mass support (`pmf.len() - 1`).
    pub fn max_batch(&self) -> usize {
        self.pmf.len().saturating_sub(1)
    }
}

/// Number of requests offered service per class in one slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule(pub Vec<u32>);

impl Schedule {
    pub fn zeros(classes: usize) -> Self {
        Schedule(vec![0; classes])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&s| s == 0)
    }
}

/// One outcome of taking an action: the next server state, the schedule
/// offered to the queues, and the branch probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub z_next: usize,
    pub sigma: Schedule,
    pub p: f64,
}

/// Joint transition law: for each feasible (state, action) pair, the list
/// of `(z_next, sigma, p)` branches.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionKernel {
    rows: BTreeMap<(usize, usize), Vec<Branch>>,
}

impl TransitionKernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, state: usize, action: usize, branches: Vec<Branch>) {
        self.rows.insert((state, action), branches);
    }

    pub fn branches(&self, state: usize, action: usize) -> Option<&[Branch]> {
        self.rows.get(&(state, action)).map(|b| b.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<Branch>)> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerState {
    pub id: usize,
    pub label: String,
}

/// A full system description. Immutable after construction; all
/// operations on it are pure, so it can be shared across worker threads.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpnModel {
    pub server_states: Vec<ServerState>,
    pub actions: Vec<String>,
    /// Per state, the sorted list of feasible action ids.
    pub feasible: Vec<Vec<usize>>,
    pub kernel: TransitionKernel,
    pub requests: RequestClassSet,
    /// One arrival law per request class.
    pub arrivals: Vec<ArrivalLaw>,
    /// Per-slot, per-class cap on offered service.
    pub schedule_bound: u32,
}

/// A single validation finding, with a path to the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Everything `validate` found. Violations are data, not failures: an
/// empty violation list means the model is valid. Warnings flag suspect
/// but admissible structure (e.g. a state with no idle-capable action).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn violation(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn warning(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

impl MdpnModel {
    /// Builds and validates in one step; rejects invalid models.
    pub fn new(
        server_states: Vec<ServerState>,
        actions: Vec<String>,
        feasible: Vec<Vec<usize>>,
        kernel: TransitionKernel,
        requests: RequestClassSet,
        arrivals: Vec<ArrivalLaw>,
        schedule_bound: u32,
    ) -> Result<Self, ModelError> {
        let mut feasible = feasible;
        for list in &mut feasible {
            list.sort_unstable();
            list.dedup();
        }
        let model = MdpnModel {
            server_states,
            actions,
            feasible,
            kernel,
            requests,
            arrivals,
            schedule_bound,
        };
        let report = validate(&model);
        if report.is_valid() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    pub fn num_states(&self) -> usize {
        self.server_states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_classes(&self) -> usize {
        self.requests.count
    }

    pub fn is_feasible(&self, state: usize, action: usize) -> bool {
        self.feasible
            .get(state)
            .is_some_and(|acts| acts.binary_search(&action).is_ok())
    }

    /// Mean offered schedule under `action` in `state`:
    /// the branch-probability-weighted average of the schedule vectors.
    pub fn mean_schedule(&self, state: usize, action: usize) -> Result<Vec<f64>, ModelError> {
        if state >= self.num_states() {
            return Err(ModelError::BadState(state));
        }
        if !self.is_feasible(state, action) {
            return Err(ModelError::InfeasibleAction { state, action });
        }
        let branches = self
            .kernel
            .branches(state, action)
            .ok_or(ModelError::InfeasibleAction { state, action })?;
        let mut mean = vec![0.0; self.num_classes()];
        for b in branches {
            for (m, &s) in mean.iter_mut().zip(b.sigma.0.iter()) {
                *m += b.p * s as f64;
            }
        }
        Ok(mean)
    }

    /// Marginal next-state distribution `P(z' | z, a)`.
    pub fn state_marginal(&self, state: usize, action: usize) -> Result<Vec<f64>, ModelError> {
        if !self.is_feasible(state, action) {
            return Err(ModelError::InfeasibleAction { state, action });
        }
        let branches = self
            .kernel
            .branches(state, action)
            .ok_or(ModelError::InfeasibleAction { state, action })?;
        let mut out = vec![0.0; self.num_states()];
        for b in branches {
            out[b.z_next] += b.p;
        }
        Ok(out)
    }

    /// Mean arrival rate vector, one entry per class.
    pub fn arrival_rates(&self) -> Vec<f64> {
        self.arrivals.iter().map(|law| law.mean()).collect()
    }

    /// SHA-256 of the canonical serialization, as lowercase hex. Used to
    /// stamp traces so a run can be tied back to the exact model.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(save_model(self).as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Checks every model invariant and returns all findings. A valid model
/// is exactly one with an empty violation list.
pub fn validate(model: &MdpnModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = model.num_states();
    let r = model.requests.count;

    if r == 0 {
        report.violation("requests.count", "must be at least 1");
    }
    if model.requests.labels.len() != r {
        report.violation(
            "requests.labels",
            format!(
                "expected {} labels, found {}",
                r,
                model.requests.labels.len()
            ),
        );
    }
    {
        let mut seen = std::collections::HashSet::new();
        for (i, label) in model.requests.labels.iter().enumerate() {
            if !seen.insert(label) {
                report.violation(
                    format!("requests.labels[{i}]"),
                    format!("duplicate label {label:?}"),
                );
            }
        }
    }

    if n == 0 {
        report.violation("server_states", "must be nonempty");
    }
    for (i, st) in model.server_states.iter().enumerate() {
        if st.id != i {
            report.violation(
                format!("server_states[{i}].id"),
                format!("ids must be 0..{} in order, found {}", n, st.id),
            );
        }
    }

    if model.actions.is_empty() {
        report.violation("actions", "must be nonempty");
    }
    if model.feasible.len() != n {
        report.violation(
            "feasible",
            format!(
                "expected one entry per state ({n}), found {}",
                model.feasible.len()
            ),
        );
    }
    for (z, acts) in model.feasible.iter().enumerate() {
        if acts.is_empty() {
            report.violation(
                format!("feasible[{z}]"),
                "every state needs a feasible action",
            );
        }
        for &a in acts {
            if a >= model.actions.len() {
                report.violation(
                    format!("feasible[{z}]"),
                    format!("action id {a} out of range"),
                );
            }
        }
    }

    if model.arrivals.len() != r {
        report.violation(
            "arrivals",
            format!(
                "expected one law per class ({r}), found {}",
                model.arrivals.len()
            ),
        );
    }
    for (i, law) in model.arrivals.iter().enumerate() {
        if law.pmf.is_empty() {
            report.violation(format!("arrivals[{i}].pmf"), "empty pmf");
            continue;
        }
        let mut sum = 0.0;
        for (k, &p) in law.pmf.iter().enumerate() {
            if p < 0.0 {
                report.violation(
                    format!("arrivals[{i}].pmf[{k}]"),
                    format!("negative probability {p}"),
                );
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_TOL {
            report.violation(
                format!("arrivals[{i}].pmf"),
                format!("sums to {sum}, expected 1"),
            );
        }
    }

    // Kernel defined exactly on the feasible pairs.
    for (z, acts) in model.feasible.iter().enumerate() {
        for &a in acts {
            if model.kernel.branches(z, a).is_none() {
                report.violation(format!("kernel[{z},{a}]"), "missing row for feasible pair");
            }
        }
    }
    for (&(z, a), branches) in model.kernel.iter() {
        let path = format!("kernel[{z},{a}]");
        if z >= n {
            report.violation(&path, format!("state id {z} out of range"));
            continue;
        }
        if !model.is_feasible(z, a) {
            report.violation(&path, "row for infeasible pair");
        }
        if branches.is_empty() {
            report.violation(&path, "empty branch list");
        }
        let mut sum = 0.0;
        for (j, b) in branches.iter().enumerate() {
            if b.p < 0.0 {
                report.violation(
                    format!("{path}.branches[{j}].p"),
                    format!("negative probability {}", b.p),
                );
            }
            sum += b.p;
            if b.z_next >= n {
                report.violation(
                    format!("{path}.branches[{j}].z_next"),
                    format!("state id {} out of range", b.z_next),
                );
            }
            if b.sigma.0.len() != r {
                report.violation(
                    format!("{path}.branches[{j}].sigma"),
                    format!("expected length {}, found {}", r, b.sigma.0.len()),
                );
            }
            for (cls, &s) in b.sigma.0.iter().enumerate() {
                if s > model.schedule_bound {
                    report.violation(
                        format!("{path}.branches[{j}].sigma[{cls}]"),
                        format!("schedule {s} exceeds bound {}", model.schedule_bound),
                    );
                }
            }
        }
        if !branches.is_empty() && (sum - 1.0).abs() > PROB_TOL {
            report.violation(&path, format!("kernel row sums to {sum}"));
        }
    }

    // Doing less work should always be possible; we do not enforce that
    // structurally, but a state with no all-zero-schedule action is suspect.
    for (z, acts) in model.feasible.iter().enumerate() {
        let has_idle = acts.iter().any(|&a| {
            model
                .kernel
                .branches(z, a)
                .is_some_and(|bs| bs.iter().all(|b| b.sigma.is_zero()))
        });
        if !has_idle && !acts.is_empty() {
            report.warning(
                format!("feasible[{z}]"),
                "no zero-schedule action in this state",
            );
        }
    }

    report
}

// ---------------------------------------------------------------------------
// Serialization. The on-disk format is a JSON document; the canonical form
// sorts object keys and orders state/action ids ascending, so save . load
// is the identity on canonical documents.

#[derive(Serialize, Deserialize)]
struct KernelRowDoc {
    z: usize,
    a: usize,
    branches: Vec<Branch>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    server_states: Vec<ServerState>,
    actions: Vec<String>,
    feasible: BTreeMap<String, Vec<usize>>,
    kernel: Vec<KernelRowDoc>,
    requests: RequestClassSet,
    arrivals: Vec<ArrivalLaw>,
    schedule_bound: u32,
}

/// Parses a model document, checks the schema, and validates the result.
///
/// ```
/// use mdpn::model::{load_model, save_model};
///
/// let doc = r#"{
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
/// }"#;
/// let model = load_model(doc).unwrap();
/// assert_eq!(model.num_states(), 1);
/// assert_eq!(model.mean_schedule(0, 0).unwrap(), vec![1.0]);
///
/// // Saving yields the canonical form, on which save . load is identity.
/// let canonical = save_model(&model);
/// assert_eq!(save_model(&load_model(&canonical).unwrap()), canonical);
/// ```
pub fn load_model(text: &str) -> Result<MdpnModel, ModelError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    let n = doc.server_states.len();

    let mut report = ValidationReport::default();
    let mut feasible = vec![Vec::new(); n];
    for (key, acts) in &doc.feasible {
        match key.parse::<usize>() {
            Ok(z) if z < n => feasible[z] = acts.clone(),
            Ok(z) => report.violation(format!("feasible[{z:?}]"), "state id out of range"),
            Err(_) => report.violation(format!("feasible[{key:?}]"), "key is not a state id"),
        }
    }
    if !report.violations.is_empty() {
        return Err(ModelError::Invalid(report));
    }

    let mut kernel = TransitionKernel::new();
    for row in doc.kernel {
        kernel.insert(row.z, row.a, row.branches);
    }

    MdpnModel::new(
        doc.server_states,
        doc.actions,
        feasible,
        kernel,
        doc.requests,
        doc.arrivals,
        doc.schedule_bound,
    )
}

/// Serializes a model to its canonical document: keys sorted, ids ascending,
/// two-space indentation, trailing newline.
pub fn save_model(model: &MdpnModel) -> String {
    let doc = ModelDoc {
        server_states: model.server_states.clone(),
        actions: model.actions.clone(),
        feasible: model
            .feasible
            .iter()
            .enumerate()
            .map(|(z, acts)| (z.to_string(), acts.clone()))
            .collect(),
        kernel: model
            .kernel
            .iter()
            .map(|(&(z, a), branches)| KernelRowDoc {
                z,
                a,
                branches: branches.clone(),
            })
            .collect(),
        requests: model.requests.clone(),
        arrivals: model.arrivals.clone(),
        schedule_bound: model.schedule_bound,
    };
    // serde_json::Value keeps object keys in BTreeMap order, which gives the
    // sorted-key canonical form. Kernel rows come out of a BTreeMap already
    // ordered by (z, a); feasible keys sort lexicographically but parse back
    // positionally, so ordering there is cosmetic only.
    let value = serde_json::to_value(&doc).expect("model serialization cannot fail");
    let mut text = serde_json::to_string_pretty(&value).expect("model serialization cannot fail");
    text.push('\n');
    text
}
