//! Multiclass queueing with a controlled Markovian service process.
//!
//! A model couples infinite request queues with a finite-state service
//! process whose transitions are driven by scheduling actions: serving
//! work now changes which service options exist later. This crate
//! provides the data model, stationary analysis of the service chain,
//! average-reward optimal control (value and policy iteration), a
//! capacity-region decision procedure over occupation measures, a
//! discrete-time simulator with MaxWeight / epoch-based / priority
//! controllers, and a fluid-model integrator with drift diagnostics.
//!
//! The long-form guide lives in `book/`; its code snippets are kept in
//! sync with the doc-tests in this crate.
//!
//! # Quick start
//!
//! Build the three-phase rotation switch and ask whether a per-cycle
//! arrival vector is inside its capacity region:
//!
//! ```
//! use mdpn::builders::{build_rotation3, rotation3_per_slot, Rotation3Params};
//! use mdpn::capacity::{capacity_margin, RegionClass};
//!
//! let model = build_rotation3(&Rotation3Params::default()).unwrap();
//! // 0.4 arrivals per class per cycle, encoded per slot.
//! let lambda = rotation3_per_slot(&[0.4, 0.4, 0.4]);
//! let result = capacity_margin(&model, &lambda).unwrap();
//! assert_eq!(result.classification, RegionClass::Interior);
//!
//! // (0.7, 0.7, 0.4) violates the cycle budget of server 1.
//! let outside = capacity_margin(&model, &rotation3_per_slot(&[0.7, 0.7, 0.4])).unwrap();
//! assert_eq!(outside.classification, RegionClass::Outside);
//! ```
//!
//! Simulate the same switch under the myopic rule and under the
//! epoch-based controller, deterministically per seed:
//!
//! ```
//! use mdpn::builders::{build_rotation3, Rotation3Params};
//! use mdpn::sim::{run, ControllerSpec, WarpConfig};
//!
//! let model = build_rotation3(&Rotation3Params::stochastic()).unwrap();
//! let trace = run(&model, &ControllerSpec::MaxWeight, 2000, 7).unwrap();
//! let again = run(&model, &ControllerSpec::MaxWeight, 2000, 7).unwrap();
//! assert_eq!(trace.to_csv(), again.to_csv());
//!
//! let warp = ControllerSpec::Warp(WarpConfig::default());
//! let trace = run(&model, &warp, 2000, 7).unwrap();
//! assert!(!trace.epoch_marks.is_empty());
//! ```

pub mod builders;
pub mod capacity;
pub mod experiments;
pub mod fluid;
mod linalg;
pub mod markov;
pub mod model;
pub mod sim;
pub mod solver;

pub use markov::{AgnosticPolicy, StationaryDistribution};
pub use model::{load_model, save_model, validate, MdpnModel, ValidationReport};
pub use solver::{GainBias, QueueWeights, SolverConfig};

#[doc(hidden)]
pub mod testkit;
