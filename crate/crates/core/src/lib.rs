//! Augmented neural forms for ODE boundary and initial value problems.
//!
//! A trial solution combines a main sigmoid network with parametric match
//! networks so the prescribed conditions hold for every parameter value. The
//! crate provides the networks, condition operators, benchmark problems,
//! optimizers, training pipeline, perturbation-based deviation bound and
//! solution-quality metrics.

pub mod bound;
pub mod conditions;
pub mod error;
pub mod grids;
pub mod metrics;
pub mod net;
pub mod optimize;
pub mod problems;
pub mod train;
pub mod trial;

pub use bound::{estimate_bound, BoundConfig, BoundResult};
pub use conditions::{ConditionSpec, Constraint, MatchParams};
pub use error::{Error, Result};
pub use grids::{Grid, GridKind, TEST_GRID_POINTS};
pub use metrics::{DeviationMetrics, MeanMax, MetricsReport};
pub use net::{EvalTriple, NetworkParams, Neuron};
pub use optimize::{Method, OptConfig, OptResult, Schedule, StopReason};
pub use problems::{Problem, ProblemKind};
pub use train::{train, TrainConfig, TrainResult};
pub use trial::{Mode, NeuralForm, SystemForm};
