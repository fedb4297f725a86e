//! Capacity-aware data-mixture scaling laws.
//!
//! The crate bundles an exact capacity-allocation oracle, the CAMEL and
//! DML laws with a logistic loss-to-benchmark link, multi-start fitting,
//! compute-budgeted sampling plans and simplex mixture optimization.

pub mod error;
pub mod fit;
pub mod laws;
pub mod mixture;
pub mod optimize;
pub mod oracle;
pub mod params;
pub mod plan;
pub mod records;
pub mod rng;

pub use error::{Error, Result};
pub use fit::{FitConfig, FitResult, Target};
pub use laws::{BenchEntry, BenchLawParams, BenchSuite, CamelParams, DmlParams};
pub use mixture::{effective_weights, make_mixture, mixture_pool, perturb_mixture, DomainProfile, Mixture};
pub use optimize::{OptimizerConfig, Optimum};
pub use oracle::{AllocationSolution, WorldConfig, WorldDiagnostics, WorldParams};
pub use params::LawBundle;
pub use plan::{Allocation, ScaleCost, Strategy, StrategyReport, StrategySuite};
pub use records::{ObjectiveWeights, RunRecord};
