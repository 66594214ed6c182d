//! Planner, scheme generator, simulator and converse-bound verifier for
//! coded distributed computing (MapReduce with coded multicast shuffling).
//!
//! Every computation is generic over [`Scalar`]; [`Rational`] gives exact
//! results and is what the schemes and tests use. `f64` aliases are provided
//! for quick exploration.

pub mod allocator;
pub mod bounds;
pub mod combin;
pub mod error;
pub mod model;
pub mod placement;
pub mod scalar;
pub mod scheme;
pub mod shuffle;
pub mod simulator;
pub mod sweep;

#[cfg(test)]
pub(crate) mod fixtures;

pub use error::{Error, Result};
pub use allocator::AllocationPlan;
pub use bounds::{AvailabilityTable, BoundReport, SearchOptions, SearchResult};
pub use model::{JobSpec, LoadReport, Mode, Placement, ValidationReport, Violation};
pub use placement::{Divisibility, SchemeLayout};
pub use scalar::{Rational, Scalar};
pub use scheme::{Scheme, SchemeOptions};
pub use shuffle::ShufflePlan;
pub use simulator::RunResult;

pub type ExactJobSpec = JobSpec<Rational>;
pub type FloatJobSpec = JobSpec<f64>;
pub type ExactPlan = allocator::AllocationPlan<Rational>;
pub type FloatPlan = allocator::AllocationPlan<f64>;
pub type ExactLoadReport = LoadReport<Rational>;
pub type ExactRunResult = RunResult<Rational>;
