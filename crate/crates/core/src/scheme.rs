//! A complete, serializable scheme: the job, its optimal allocation, the
//! synthesized placement and the shuffle plan.

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::allocator::{self, AllocationPlan};
use crate::error::{Error, Result};
use crate::model::{validate_placement, JobSpec, Mode};
use crate::placement::{build_parallel, build_sequential, Divisibility, SchemeLayout};
use crate::scalar::{self, Rational, Scalar};
use crate::shuffle::{build_coded_plan, build_uncoded_plan, ShufflePlan};
use crate::simulator::{self, RunResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    /// Server count; defaults to the planner's `K*`.
    pub k: Option<usize>,
    pub divisibility: Divisibility,
    /// Helper load target when the optimum has `r* = 0` and no finite `K`
    /// attains it: `K - Q = ceil(1 / epsilon)`.
    #[serde(with = "scalar::wire")]
    pub epsilon: Rational,
    /// Use the unicast shuffle instead of the coded one.
    pub uncoded_shuffle: bool,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            k: None,
            divisibility: Divisibility::Strict,
            epsilon: scalar::ratio(1, 8),
            uncoded_shuffle: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    /// The job with `N` as actually laid out (possibly padded).
    pub spec: JobSpec<Rational>,
    pub mode: Mode,
    pub plan: AllocationPlan<Rational>,
    pub layout: SchemeLayout,
    pub shuffle: ShufflePlan,
}

impl Scheme {
    /// Re-checks every internal consistency condition, e.g. after loading from disk.
    pub fn verify(&self) -> Result<()> {
        if self.layout.q != self.spec.q() || self.layout.n != self.spec.n() {
            return Err(Error::InvalidPlan("layout does not match the job dimensions".into()));
        }
        validate_placement(&self.spec, &self.layout.placement).into_result()?;
        self.layout.check()?;
        self.shuffle.check(&self.layout.placement)
    }

    /// Peak map load over all servers.
    pub fn predicted_p(&self) -> Rational {
        scalar::ratio(self.layout.placement.max_map_count() as i64, self.spec.n() as i64)
    }

    pub fn simulate(&self, seed: u64, trace: bool) -> Result<RunResult<Rational>> {
        simulator::run(&self.spec, &self.layout.placement, &self.shuffle, seed, self.mode, trace)
    }
}

fn epsilon_helpers(epsilon: &Rational) -> Result<usize> {
    if *epsilon <= scalar::int(0) {
        return Err(Error::OutOfRange("epsilon must be positive".into()));
    }
    epsilon
        .recip()
        .ceil()
        .to_integer()
        .to_usize()
        .ok_or_else(|| Error::OutOfRange("epsilon too small".into()))
}

/// Plans the job and builds the corresponding layout and shuffle.
pub fn synthesize<T: Scalar>(spec: &JobSpec<T>, mode: Mode, opts: &SchemeOptions) -> Result<Scheme> {
    let exact = spec.convert::<Rational>();
    let q = exact.q();
    let plan = allocator::plan(&exact, mode, true);
    let layout = match mode {
        Mode::Sequential => {
            let r = plan.r_integer().expect("sequential optimum is an integer");
            let k = match (opts.k, plan.k_star) {
                (Some(k), _) => k,
                (None, Some(k)) => k as usize,
                (None, None) => q + epsilon_helpers(&opts.epsilon)?,
            };
            build_sequential(&exact, r, k, opts.divisibility)?
        }
        Mode::Parallel => {
            let k = match (opts.k, plan.k_star) {
                (Some(k), _) => k,
                (None, Some(k)) => k as usize,
                (None, None) => unreachable!("parallel optimum always has a finite K"),
            };
            build_parallel(&exact, &plan.r_star, k, opts.divisibility)?
        }
    };
    let spec = exact.with_n(layout.n)?;
    let shuffle = if opts.uncoded_shuffle {
        build_uncoded_plan(&layout.placement, q, layout.n)?
    } else {
        build_coded_plan(&layout)?
    };
    Ok(Scheme {
        spec,
        mode,
        plan,
        layout,
        shuffle,
    })
}
