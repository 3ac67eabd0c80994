//! Causal-effect estimation toolkit.
//!
//! The pipeline runs from a causal DAG ([`graph`]) and a table ([`frame`])
//! through adjustment-set identification, classical average-effect
//! estimators ([`estimators`]) and S/T/X/R meta-learners ([`metalearners`])
//! over pluggable base learners ([`learners`]), to a refutation battery
//! ([`refutation`]) and validation metrics ([`evaluation`]) checked against
//! a synthetic ground truth ([`synth`]).

pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod frame;
pub mod graph;
pub mod learners;
pub mod metalearners;
pub mod refutation;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use frame::{Column, ColumnKind, Comparator, Frame, LabelRule};
pub use graph::{CausalGraph, Role};
pub use learners::{Design, FittedModel, LearnerKind, LearnerSpec};
