//! Closed-form optimal resource allocation.
//!
//! For a job with `Q` Reduce functions the optimal schemes use `Q` solvers
//! (one Reduce function each) plus a number of helpers that only map files
//! and multicast coded messages. The redundancy `r` (how many solvers map
//! each file) trades Map time `c_m * r / Q` against Shuffle time
//! `c_s * (Q - r) / (Q (r + 1))`.
//!
//! * Sequential: `r*` is the largest integer minimiser of the sum.
//! * Parallel: `r*` is the real minimiser of `max(map, shuffle)` where the
//!   shuffle load is the lower convex envelope of the integer points, found
//!   by exact per-segment solving.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{JobSpec, Mode};
use crate::scalar::{self, Scalar};

/// Communication load `(Q - r) / (Q (r + 1))` of the coded scheme at integer redundancy `r`.
pub fn load_point<T: Scalar>(q: usize, r: usize) -> T {
    T::frac((q - r) as u64, (q * (r + 1)) as u64)
}

/// Sequential objective `c_m r / Q + c_s (Q - r) / (Q (r + 1))` at integer `r`.
pub fn seq_objective<T: Scalar>(spec: &JobSpec<T>, r: usize) -> Result<T> {
    let q = spec.q();
    if r > q {
        return Err(Error::OutOfRange(format!("r = {r} exceeds Q = {q}")));
    }
    Ok(spec.c_m().clone() * T::frac(r as u64, q as u64) + spec.c_s().clone() * load_point::<T>(q, r))
}

/// Lower convex envelope of a finite set of points with integer abscissae.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Envelope<T> {
    pub breakpoints: Vec<Breakpoint<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Breakpoint<T> {
    pub r: usize,
    #[serde(with = "scalar::wire")]
    pub value: T,
}

impl<T: Scalar> Envelope<T> {
    /// Envelope of `{(r, (Q - r) / (Q (r + 1))) : r = 0..=Q}`.
    pub fn for_q(q: usize) -> Self {
        Self::from_points((0..=q).map(|r| (r, load_point::<T>(q, r))).collect())
    }

    /// Lower hull of `points` (monotone chain). Points must have distinct abscissae.
    pub fn from_points(mut points: Vec<(usize, T)>) -> Self {
        points.sort_by_key(|(x, _)| *x);
        let mut hull: Vec<(usize, T)> = Vec::with_capacity(points.len());
        for p in points {
            while hull.len() >= 2 {
                let (x0, y0) = &hull[hull.len() - 2];
                let (x1, y1) = &hull[hull.len() - 1];
                // Drop the middle point unless it lies strictly below the chord.
                let lhs = T::from_u64((x1 - x0) as u64) * (p.1.clone() - y0.clone());
                let rhs = (y1.clone() - y0.clone()) * T::from_u64((p.0 - x0) as u64);
                if lhs <= rhs {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        Envelope {
            breakpoints: hull.into_iter().map(|(r, value)| Breakpoint { r, value }).collect(),
        }
    }

    pub fn domain(&self) -> (usize, usize) {
        (
            self.breakpoints.first().map_or(0, |b| b.r),
            self.breakpoints.last().map_or(0, |b| b.r),
        )
    }

    /// Piecewise-linear interpolation between breakpoints.
    pub fn eval(&self, r: &T) -> Result<T> {
        let (lo, hi) = self.domain();
        if *r < T::from_u64(lo as u64) || *r > T::from_u64(hi as u64) || self.breakpoints.is_empty() {
            return Err(Error::OutOfRange(format!("r = {r:?} outside envelope domain [{lo}, {hi}]")));
        }
        for w in self.breakpoints.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let xb = T::from_u64(b.r as u64);
            if *r <= xb {
                let xa = T::from_u64(a.r as u64);
                let t = (r.clone() - xa.clone()) / (xb - xa);
                return Ok(a.value.clone() + t * (b.value.clone() - a.value.clone()));
            }
        }
        Ok(self.breakpoints.last().expect("non-empty").value.clone())
    }
}

/// Output of the planner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AllocationPlan<T> {
    pub mode: Mode,
    pub coded: bool,
    #[serde(with = "scalar::wire")]
    pub r_star: T,
    /// Minimum number of servers; absent when no finite cluster attains `t_star`.
    pub k_star: Option<u64>,
    pub finite_k_achievable: bool,
    #[serde(with = "scalar::wire")]
    pub t_star: T,
    #[serde(with = "scalar::wire")]
    pub t_map_pred: T,
    #[serde(with = "scalar::wire")]
    pub t_shuffle_pred: T,
    #[serde(with = "scalar::wire")]
    pub t_reduce_pred: T,
    /// Continuous approximation of `r*`; informational only.
    pub r_star_approx: f64,
    /// Whether the minimiser was found to be unique.
    pub unique_minimizer: bool,
}

impl<T: Scalar> AllocationPlan<T> {
    /// `r*` as an integer, when it is one.
    pub fn r_integer(&self) -> Option<usize> {
        let e = self.r_star.to_exact()?;
        if e.is_integer() {
            num_traits::ToPrimitive::to_usize(&e.to_integer())
        } else {
            None
        }
    }
}

/// `K*` for the sequential coded scheme; `None` when `r = 0` (no finite optimum).
pub fn k_star_sequential(q: usize, r: usize) -> Option<u64> {
    match r {
        0 => None,
        r if r >= q => Some(q as u64),
        r => Some((q + q.div_ceil(r)) as u64),
    }
}

/// `K*` for the parallel coded scheme at real redundancy `r` in `(0, Q]`.
pub fn k_star_parallel<T: Scalar>(q: usize, r: &T) -> Result<u64> {
    if !(*r > T::zero()) || *r > T::from_u64(q as u64) {
        return Err(Error::OutOfRange(format!("r = {r:?} outside (0, {q}]")));
    }
    let qt = T::from_u64(q as u64);
    let extra = if *r <= T::from_u64(q as u64 - 1) {
        qt / r.clone()
    } else {
        qt.clone() * (qt - r.clone()) / r.clone()
    };
    let extra = extra
        .ceil_u64()
        .ok_or_else(|| Error::Inexact(format!("cannot take ceiling of {extra:?}")))?;
    Ok(q as u64 + extra)
}

/// Optimal sequential coded allocation.
pub fn plan_sequential<T: Scalar>(spec: &JobSpec<T>) -> AllocationPlan<T> {
    let q = spec.q();
    let mut best: Option<(usize, T)> = None;
    let mut ties = 0usize;
    for r in 0..=q {
        let v = seq_objective(spec, r).expect("r in range");
        match &best {
            Some((_, b)) if v > *b => {}
            Some((_, b)) if v == *b => {
                ties += 1;
                best = Some((r, v));
            }
            _ => {
                ties = 0;
                best = Some((r, v));
            }
        }
    }
    let (r, _) = best.expect("Q >= 1");
    let rt = T::from_u64(r as u64);
    let t_map = spec.c_m().clone() * T::frac(r as u64, q as u64);
    let t_shuffle = spec.c_s().clone() * load_point::<T>(q, r);
    let t_reduce = spec.c_r().clone();
    let k_star = k_star_sequential(q, r);
    AllocationPlan {
        mode: Mode::Sequential,
        coded: true,
        r_star: rt,
        k_star,
        finite_k_achievable: k_star.is_some(),
        t_star: t_map.clone() + t_shuffle.clone() + t_reduce.clone(),
        t_map_pred: t_map,
        t_shuffle_pred: t_shuffle,
        t_reduce_pred: t_reduce,
        r_star_approx: sequential_r_approx(spec),
        unique_minimizer: ties == 0,
    }
}

/// Stationary point `sqrt((Q + 1) c_s / c_m) - 1` of the relaxed sequential objective, clamped to `[0, Q]`.
pub fn sequential_r_approx<T: Scalar>(spec: &JobSpec<T>) -> f64 {
    let ratio = spec.c_s().to_f64() / spec.c_m().to_f64();
    (((spec.q() as f64 + 1.0) * ratio).sqrt() - 1.0).clamp(0.0, spec.q() as f64)
}

/// Continuous approximation of the parallel optimum.
pub fn parallel_r_approx<T: Scalar>(spec: &JobSpec<T>) -> f64 {
    let rho = spec.c_s().to_f64() / spec.c_m().to_f64();
    let half = (rho + 1.0) / 2.0;
    ((spec.q() as f64 * rho + half * half).sqrt() - half).clamp(0.0, spec.q() as f64)
}

/// Minimiser of `max(c_m r / Q, c_s Conv(r))` over `[0, Q]`.
///
/// Both curves are linear on every envelope segment, so the minimum on a
/// segment sits at an endpoint or where the two lines cross. Returns the
/// largest global minimiser and whether it is unique.
pub fn parallel_minimizer<T: Scalar>(spec: &JobSpec<T>, env: &Envelope<T>) -> (T, T, bool) {
    let q = spec.q();
    let qt = T::from_u64(q as u64);
    let map_at = |r: &T| spec.c_m().clone() * r.clone() / qt.clone();
    let objective = |r: &T, shuffle: T| scalar::max_of(map_at(r), shuffle);

    let mut candidates: Vec<(T, T)> = Vec::new();
    for w in env.breakpoints.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let xa = T::from_u64(a.r as u64);
        let xb = T::from_u64(b.r as u64);
        let sa = spec.c_s().clone() * a.value.clone();
        let sb = spec.c_s().clone() * b.value.clone();
        candidates.push((xa.clone(), objective(&xa, sa.clone())));
        candidates.push((xb.clone(), objective(&xb, sb.clone())));
        let da = map_at(&xa) - sa.clone();
        let db = map_at(&xb) - sb.clone();
        let zero = T::zero();
        let straddles = (da <= zero && db >= zero) || (da >= zero && db <= zero);
        if straddles && da != db {
            let x = xa.clone() + (xb.clone() - xa.clone()) * da.clone() / (da - db);
            let shuffle = sa.clone() + (sb - sa) * (x.clone() - xa.clone()) / (xb - xa);
            candidates.push((x.clone(), objective(&x, shuffle)));
        }
    }
    if candidates.is_empty() {
        // Degenerate single-point envelope (Q = 0 is rejected upstream).
        let v = env.breakpoints.first().map_or(T::zero(), |b| spec.c_s().clone() * b.value.clone());
        return (T::zero(), v, true);
    }

    let best = candidates
        .iter()
        .map(|(_, v)| v.clone())
        .fold(None::<T>, |acc, v| match acc {
            Some(a) if a <= v => Some(a),
            _ => Some(v),
        })
        .expect("non-empty");
    let mut argmins: Vec<T> = Vec::new();
    for (x, v) in candidates {
        if v == best && !argmins.contains(&x) {
            argmins.push(x);
        }
    }
    let unique = argmins.len() == 1;
    let r = argmins
        .into_iter()
        .fold(None::<T>, |acc, x| match acc {
            Some(a) if a >= x => Some(a),
            _ => Some(x),
        })
        .expect("non-empty");
    (r, best, unique)
}

/// Optimal parallel coded allocation.
pub fn plan_parallel<T: Scalar>(spec: &JobSpec<T>) -> AllocationPlan<T> {
    let q = spec.q();
    let env = Envelope::<T>::for_q(q);
    let (r, _, unique) = parallel_minimizer(spec, &env);
    let t_map = spec.c_m().clone() * r.clone() / T::from_u64(q as u64);
    let t_shuffle = spec.c_s().clone() * env.eval(&r).expect("minimiser lies in [0, Q]");
    let t_reduce = spec.c_r().clone();
    let k_star = k_star_parallel(q, &r).ok();
    AllocationPlan {
        mode: Mode::Parallel,
        coded: true,
        r_star: r,
        k_star,
        finite_k_achievable: k_star.is_some(),
        t_star: scalar::max_of(t_map.clone(), t_shuffle.clone()) + t_reduce.clone(),
        t_map_pred: t_map,
        t_shuffle_pred: t_shuffle,
        t_reduce_pred: t_reduce,
        r_star_approx: parallel_r_approx(spec),
        unique_minimizer: unique,
    }
}

/// Best allocation when the Shuffle phase only unicasts.
pub fn plan_uncoded<T: Scalar>(spec: &JobSpec<T>, mode: Mode) -> AllocationPlan<T> {
    let q = spec.q();
    let qt = T::from_u64(q as u64);
    let (c_m, c_s, c_r) = (spec.c_m().clone(), spec.c_s().clone(), spec.c_r().clone());
    match mode {
        Mode::Sequential => {
            // Only r in {0, Q} is worth considering without coding.
            let full = c_m <= c_s;
            let (r, t_map, t_shuffle, k_star) = if full {
                (qt, c_m, T::zero(), Some(q as u64))
            } else {
                (T::zero(), T::zero(), c_s, None)
            };
            AllocationPlan {
                mode,
                coded: false,
                r_star_approx: r.to_f64(),
                r_star: r,
                k_star,
                finite_k_achievable: k_star.is_some(),
                t_star: t_map.clone() + t_shuffle.clone() + c_r.clone(),
                t_map_pred: t_map,
                t_shuffle_pred: t_shuffle,
                t_reduce_pred: c_r,
                unique_minimizer: spec.c_m() != spec.c_s(),
            }
        }
        Mode::Parallel => {
            let sum = c_m.clone() + c_s.clone();
            let r = qt.clone() * c_s.clone() / sum.clone();
            let balanced = c_m.clone() * c_s.clone() / sum;
            let helpers_needed = (qt / r.clone()).ceil_u64().unwrap_or(u64::MAX);
            let k_star = Some((q as u64).max(helpers_needed));
            AllocationPlan {
                mode,
                coded: false,
                r_star_approx: r.to_f64(),
                r_star: r,
                k_star,
                finite_k_achievable: true,
                t_star: balanced.clone() + c_r.clone(),
                t_map_pred: balanced.clone(),
                t_shuffle_pred: balanced,
                t_reduce_pred: c_r,
                unique_minimizer: true,
            }
        }
    }
}

/// Dispatches to the coded or uncoded planner for `mode`.
pub fn plan<T: Scalar>(spec: &JobSpec<T>, mode: Mode, coded: bool) -> AllocationPlan<T> {
    match (mode, coded) {
        (Mode::Sequential, true) => plan_sequential(spec),
        (Mode::Parallel, true) => plan_parallel(spec),
        (m, false) => plan_uncoded(spec, m),
    }
}
