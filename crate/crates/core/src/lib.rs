//! Auditing the information content of calibrated risk predictors, refining
//! predictors by merging information sources, and solving fairness-constrained
//! threshold-policy selection problems.
//!
//! All numeric code is generic over [`Scalar`], implemented for `f64` and for
//! exact [`Rational`] numbers. The aliases below fix the common choices.

pub mod error;
pub mod file;
pub mod information;
pub mod lp;
pub mod optimize;
pub mod policy;
pub mod population;
pub mod refinement;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use file::{load_population, Instance};
pub use optimize::{
    solve_by_sweep, solve_optimization, FairnessMetric, Objective, OptimizationResult, OptimizationSpec,
};
pub use policy::{evaluate, GroupProfile, ImpactParams, PolicyStats, SelectionRule, Threshold, ThresholdPolicy};
pub use population::{level_sets, score_distribution, Cell, Group, Population, Predictor, Scope, Scopes};
pub use scalar::{Rational, Scalar};

pub type Population64 = Population<f64>;
pub type PopulationQ = Population<Rational>;
pub type Predictor64 = Predictor<f64>;
pub type PredictorQ = Predictor<Rational>;
pub type Instance64 = Instance<f64>;
pub type InstanceQ = Instance<Rational>;
