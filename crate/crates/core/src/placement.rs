//! Map/Reduce task assignments of the achievability schemes.
//!
//! Servers `1..=Q` are solvers (server `k` reduces function `k`), servers
//! `Q+1..=K` are helpers. Files are split into batches `B_{i,A}` indexed by a
//! helper `i` and a set `A` of `r` solvers; solver `k` maps every batch with
//! `k` in `A`, helper `i` maps every batch labelled with `i`.
//!
//! The parallel scheme splits the files into two strata mapped with
//! redundancy `ceil(r)` and `ceil(r) - 1`, weighted so the average is `r`.
//! When `r > Q - 1` the first stratum is simply mapped by every solver.
//!
//! Batches are laid out on consecutive file ids in canonical order: stratum,
//! then helper ascending, then `A` in colexicographic order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::combin::{binomial, subsets};
use crate::error::{Error, Result};
use crate::model::{self, JobSpec, Placement};
use crate::scalar::{self, Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    /// Parallel scheme, files mapped by `ceil(r)` solvers.
    Plus,
    /// Parallel scheme, files mapped by `ceil(r) - 1` solvers.
    Minus,
    /// Files mapped by all `Q` solvers and no helper.
    SolverOnly,
    /// Sequential scheme, single stratum.
    None,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Plus => "plus",
            Stratum::Minus => "minus",
            Stratum::SolverOnly => "solver_only",
            Stratum::None => "none",
        })
    }
}

/// Identifies one batch `B_{i,A}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BatchLabel {
    pub helper: Option<usize>,
    pub solver_set: Vec<usize>,
    pub stratum: Stratum,
}

impl BatchLabel {
    /// Table key, e.g. `i=4,A={1,2},stratum=none`.
    pub fn key(&self) -> String {
        let helper = self.helper.map_or_else(|| "none".to_string(), |h| h.to_string());
        let ids: Vec<String> = self.solver_set.iter().map(ToString::to_string).collect();
        format!("i={helper},A={{{}}},stratum={}", ids.join(","), self.stratum)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub key: String,
    pub label: BatchLabel,
    pub files: Vec<usize>,
}

/// One group of files sharing a repetition factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumInfo {
    pub stratum: Stratum,
    /// Number of solvers mapping each file of the stratum.
    pub repetition: usize,
    pub files: usize,
    /// Fraction of all files in this stratum.
    #[serde(with = "scalar::wire")]
    pub weight: Rational,
}

/// A synthesized placement together with its batch structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeLayout {
    pub q: usize,
    pub n: usize,
    pub k: usize,
    /// `N` as requested, before any padding.
    pub requested_n: usize,
    pub placement: Placement,
    pub batches: Vec<Batch>,
    pub strata: Vec<StratumInfo>,
    #[serde(with = "scalar::wire")]
    pub r_effective: Rational,
    #[serde(with = "scalar::wire")]
    pub alpha: Rational,
}

/// What to do when `N` does not fit the batch structure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divisibility {
    #[default]
    Strict,
    /// Grow `N` to the least compatible value.
    Pad,
}

impl SchemeLayout {
    pub fn helpers(&self) -> std::ops::RangeInclusive<usize> {
        self.q + 1..=self.k
    }

    pub fn solver_load(&self) -> Rational {
        let max = (1..=self.q).map(|k| self.placement.map_sets[k - 1].len()).max().unwrap_or(0);
        scalar::ratio(max as i64, self.n as i64)
    }

    /// Largest helper load (0 without helpers).
    pub fn helper_load(&self) -> Rational {
        let max = self.helpers().map(|k| self.placement.map_sets[k - 1].len()).max().unwrap_or(0);
        scalar::ratio(max as i64, self.n as i64)
    }

    pub fn batch(&self, label: &BatchLabel) -> Option<&Batch> {
        self.batches.iter().find(|b| &b.label == label)
    }

    /// Checks the layout against its own structural invariants.
    pub fn check(&self) -> Result<()> {
        model::check_structure(self.q, self.n, &self.placement).into_result()?;
        let mut seen = vec![false; self.n + 1];
        for b in &self.batches {
            for &f in &b.files {
                if f == 0 || f > self.n || std::mem::replace(&mut seen[f], true) {
                    return Err(Error::InvalidPlan(format!("batch {} lists file {f} twice or out of range", b.key)));
                }
            }
        }
        if let Some(f) = seen.iter().skip(1).position(|s| !s) {
            return Err(Error::InvalidPlan(format!("file {} in no batch", f + 1)));
        }
        let rebuilt = placement_from_batches(self.q, self.k, &self.batches);
        if rebuilt.map_sets != self.placement.map_sets || rebuilt.reduce_sets != self.placement.reduce_sets {
            return Err(Error::InvalidPlan("placement does not match batch labels".into()));
        }
        Ok(())
    }
}

fn placement_from_batches(q: usize, k: usize, batches: &[Batch]) -> Placement {
    let mut map_sets = vec![BTreeSet::new(); k];
    for b in batches {
        for &s in &b.label.solver_set {
            map_sets[s - 1].extend(b.files.iter().copied());
        }
        if let Some(h) = b.label.helper {
            map_sets[h - 1].extend(b.files.iter().copied());
        }
    }
    let reduce_sets = (1..=k)
        .map(|s| if s <= q { BTreeSet::from([s]) } else { BTreeSet::new() })
        .collect();
    let mut placement = Placement::new(map_sets, reduce_sets);
    placement.batch_index = Some(
        batches
            .iter()
            .map(|b| (b.key.clone(), b.files.clone()))
            .collect::<BTreeMap<_, _>>(),
    );
    placement
}

/// Number of equal batches a helper-served stratum with repetition `r` is cut into.
pub fn batch_count(q: usize, k: usize, r: usize) -> u128 {
    (k - q) as u128 * binomial(q, r)
}

/// Appends the batches of one helper-served stratum starting at `first_file`.
fn helper_stratum(
    batches: &mut Vec<Batch>,
    first_file: usize,
    count: usize,
    q: usize,
    k: usize,
    r: usize,
    stratum: Stratum,
) {
    if count == 0 {
        return;
    }
    let per_batch = count / batch_count(q, k, r) as usize;
    let mut next = first_file;
    for helper in q + 1..=k {
        for set in subsets(q, r) {
            let label = BatchLabel {
                helper: Some(helper),
                solver_set: set,
                stratum,
            };
            batches.push(Batch {
                key: label.key(),
                label,
                files: (next..next + per_batch).collect(),
            });
            next += per_batch;
        }
    }
}

fn solver_only_stratum(batches: &mut Vec<Batch>, first_file: usize, count: usize, q: usize) {
    if count == 0 {
        return;
    }
    let label = BatchLabel {
        helper: None,
        solver_set: (1..=q).collect(),
        stratum: Stratum::SolverOnly,
    };
    batches.push(Batch {
        key: label.key(),
        label,
        files: (first_file..first_file + count).collect(),
    });
}

fn round_up(n: usize, multiple: u128) -> Result<usize> {
    let m = multiple.max(1);
    let up = (n as u128).div_ceil(m) * m;
    usize::try_from(up).map_err(|_| Error::OutOfRange(format!("required N = {up} is too large")))
}

fn resolve_n(n: usize, multiple: u128, div: Divisibility, reason: impl FnOnce() -> String) -> Result<usize> {
    let suggested = round_up(n, multiple)?;
    if suggested == n {
        return Ok(n);
    }
    match div {
        Divisibility::Pad => Ok(suggested),
        Divisibility::Strict => Err(Error::Divisibility {
            n,
            reason: reason(),
            suggested_n: suggested,
        }),
    }
}

fn finish(
    q: usize,
    k: usize,
    n: usize,
    requested_n: usize,
    batches: Vec<Batch>,
    strata: Vec<StratumInfo>,
    r_effective: Rational,
    alpha: Rational,
) -> SchemeLayout {
    let placement = placement_from_batches(q, k, &batches);
    SchemeLayout {
        q,
        n,
        k,
        requested_n,
        placement,
        batches,
        strata,
        r_effective,
        alpha,
    }
}

/// Sequential scheme with integer redundancy `r` on `k` servers.
pub fn build_sequential<T: Scalar>(spec: &JobSpec<T>, r: usize, k: usize, div: Divisibility) -> Result<SchemeLayout> {
    let q = spec.q();
    if r > q {
        return Err(Error::OutOfRange(format!("r = {r} exceeds Q = {q}")));
    }
    let min_k = if r == q { q } else { q + 1 };
    if k < min_k {
        return Err(Error::TooFewServers { k, required: min_k });
    }
    let requested_n = spec.n();
    let mut batches = Vec::new();
    if r == q {
        let n = requested_n;
        solver_only_stratum(&mut batches, 1, n, q);
        let strata = vec![StratumInfo {
            stratum: Stratum::SolverOnly,
            repetition: q,
            files: n,
            weight: scalar::int(1),
        }];
        return Ok(finish(q, k, n, requested_n, batches, strata, scalar::int(r as i64), scalar::int(1)));
    }
    let d = batch_count(q, k, r);
    let n = resolve_n(requested_n, d, div, || {
        format!("N must be a multiple of (K - Q) * C(Q, r) = {d}")
    })?;
    helper_stratum(&mut batches, 1, n, q, k, r, Stratum::None);
    let strata = vec![StratumInfo {
        stratum: Stratum::None,
        repetition: r,
        files: n,
        weight: scalar::int(1),
    }];
    Ok(finish(q, k, n, requested_n, batches, strata, scalar::int(r as i64), scalar::int(1)))
}

/// Smallest `N' >= n` accepted by [`build_parallel`], ignoring `k` lower bounds.
pub fn parallel_n_multiple(q: usize, r: &Rational, k: usize) -> Result<u128> {
    let (r_plus, _, alpha) = split_redundancy(q, r)?;
    let a = alpha.numer().clone();
    let b = alpha.denom().clone();
    let rest = &b - &a;
    let mut m = BigInt::one();
    if r_plus < q && !a.is_zero() {
        let d = BigInt::from(batch_count(q, k, r_plus));
        m = m.lcm(&(&d / d.gcd(&a)));
    }
    if !rest.is_zero() {
        let d = BigInt::from(batch_count(q, k, r_plus - 1));
        m = m.lcm(&(&d / d.gcd(&rest)));
    }
    (b * m)
        .to_u128()
        .ok_or_else(|| Error::OutOfRange("required N multiple overflows".into()))
}

/// `(ceil(r), ceil(r) - 1, r - ceil(r) + 1)` for `0 < r <= Q`.
fn split_redundancy(q: usize, r: &Rational) -> Result<(usize, usize, Rational)> {
    if *r <= Rational::zero() || *r > scalar::int(q as i64) {
        return Err(Error::OutOfRange(format!("r = {r} outside (0, {q}]")));
    }
    let r_plus = r.ceil().to_integer().to_usize().expect("r <= Q");
    let r_minus = r_plus - 1;
    let alpha = r - scalar::int(r_minus as i64);
    Ok((r_plus, r_minus, alpha))
}

/// Parallel scheme with real redundancy `r` in `(0, Q]` on `k` servers.
pub fn build_parallel<T: Scalar>(spec: &JobSpec<T>, r: &Rational, k: usize, div: Divisibility) -> Result<SchemeLayout> {
    let q = spec.q();
    let (r_plus, r_minus, alpha) = split_redundancy(q, r)?;
    let one = scalar::int(1);
    let needs_helpers = r_plus < q || alpha < one;
    let min_k = if needs_helpers { q + 1 } else { q };
    if k < min_k {
        return Err(Error::TooFewServers { k, required: min_k });
    }
    let requested_n = spec.n();
    let multiple = parallel_n_multiple(q, r, k)?;
    let n = resolve_n(requested_n, multiple, div, || {
        format!("alpha = {alpha} split needs N to be a multiple of {multiple}")
    })?;
    let plus_files = (alpha.clone() * scalar::int(n as i64)).to_integer().to_usize().expect("fits");
    let minus_files = n - plus_files;

    let mut batches = Vec::new();
    let plus_stratum = if r_plus == q { Stratum::SolverOnly } else { Stratum::Plus };
    if plus_stratum == Stratum::SolverOnly {
        solver_only_stratum(&mut batches, 1, plus_files, q);
    } else {
        helper_stratum(&mut batches, 1, plus_files, q, k, r_plus, Stratum::Plus);
    }
    helper_stratum(&mut batches, plus_files + 1, minus_files, q, k, r_minus, Stratum::Minus);

    let strata = vec![
        StratumInfo {
            stratum: plus_stratum,
            repetition: r_plus,
            files: plus_files,
            weight: alpha.clone(),
        },
        StratumInfo {
            stratum: Stratum::Minus,
            repetition: r_minus,
            files: minus_files,
            weight: one - alpha.clone(),
        },
    ];
    Ok(finish(q, k, n, requested_n, batches, strata, r.clone(), alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_placement;
    use crate::scalar::{int, ratio};

    fn spec(q: usize, n: usize) -> JobSpec<Rational> {
        JobSpec::new(q, n, int(1), int(1), int(0)).unwrap()
    }

    /// Sorted multiset of "which servers map this file" signatures.
    fn mapper_profile(p: &Placement, n: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (1..=n)
            .map(|f| {
                let m = p.mappers(f);
                let solvers = m.iter().filter(|&&s| !p.reduce_sets[s - 1].is_empty()).count();
                (solvers, m.len() - solvers)
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn worked_example_structure() {
        let layout = build_sequential(&crate::fixtures::example_spec(), 2, 5, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        assert!(validate_placement(&crate::fixtures::example_spec(), &layout.placement).is_valid());
        assert_eq!(layout.solver_load(), ratio(4, 6));
        assert_eq!(layout.helper_load(), ratio(3, 6));
        let sizes: Vec<_> = layout.placement.map_sets.iter().map(BTreeSet::len).collect();
        assert_eq!(sizes, vec![4, 4, 4, 3, 3]);
        let example = crate::fixtures::example_placement();
        assert_eq!(mapper_profile(&layout.placement, 6), mapper_profile(&example, 6));
        assert_eq!(layout.batches[0].key, "i=4,A={1,2},stratum=none");
        assert_eq!(layout.batches.len(), 6);
    }

    #[test]
    fn full_replication() {
        let layout = build_sequential(&spec(2, 4), 2, 2, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        let all: BTreeSet<usize> = (1..=4).collect();
        assert_eq!(layout.placement.map_sets, vec![all.clone(), all]);
        assert_eq!(layout.solver_load(), int(1));
    }

    #[test]
    fn zero_redundancy_helpers_partition() {
        let layout = build_sequential(&spec(2, 6), 0, 5, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        let sets: Vec<Vec<usize>> = layout.placement.map_sets.iter().map(|s| s.iter().copied().collect()).collect();
        assert_eq!(sets, vec![vec![], vec![], vec![1, 2], vec![3, 4], vec![5, 6]]);
        assert_eq!(layout.placement.max_map_count(), 2);
    }

    #[test]
    fn divisibility_errors_and_padding() {
        let err = build_sequential(&spec(3, 7), 2, 5, Divisibility::Strict).unwrap_err();
        match err {
            Error::Divisibility { n, suggested_n, .. } => assert_eq!((n, suggested_n), (7, 12)),
            other => panic!("unexpected {other:?}"),
        }
        let layout = build_sequential(&spec(3, 7), 2, 5, Divisibility::Pad).unwrap();
        assert_eq!((layout.n, layout.requested_n), (12, 7));
        layout.check().unwrap();

        assert!(matches!(
            build_sequential(&spec(3, 6), 2, 3, Divisibility::Strict),
            Err(Error::TooFewServers { k: 3, required: 4 })
        ));
        assert!(build_sequential(&spec(3, 6), 4, 5, Divisibility::Strict).is_err());
    }

    #[test]
    fn parallel_worked_split() {
        let layout = build_parallel(&spec(3, 63), &ratio(10, 7), 6, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        assert_eq!(layout.strata[0].files, 27);
        assert_eq!(layout.strata[1].files, 36);
        assert_eq!(layout.solver_load(), ratio(10, 21));
        assert!(layout.helper_load() <= layout.solver_load());
        assert_eq!(parallel_n_multiple(3, &ratio(10, 7), 6).unwrap(), 63);
        assert!(build_parallel(&spec(3, 62), &ratio(10, 7), 6, Divisibility::Strict).is_err());
    }

    #[test]
    fn parallel_full_replication() {
        let layout = build_parallel(&spec(2, 5), &int(2), 2, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        assert_eq!(layout.solver_load(), int(1));
        assert_eq!(layout.strata[1].files, 0);
        assert_eq!(layout.k, 2);
    }

    #[test]
    fn parallel_solver_only_split() {
        let layout = build_parallel(&spec(2, 8), &ratio(3, 2), 4, Divisibility::Strict).unwrap();
        layout.check().unwrap();
        assert_eq!(layout.strata[0].stratum, Stratum::SolverOnly);
        assert_eq!(layout.placement.map_sets[0].len(), 6);
        assert_eq!(layout.placement.map_sets[1].len(), 6);
        assert_eq!(layout.solver_load(), ratio(3, 4));
        // the solver-only half is not mapped by any helper
        for f in 1..=4 {
            assert_eq!(layout.placement.mappers(f), vec![1, 2]);
        }
    }

    #[test]
    fn parallel_rejects_bad_r() {
        assert!(build_parallel(&spec(2, 8), &int(0), 4, Divisibility::Pad).is_err());
        assert!(build_parallel(&spec(2, 8), &ratio(5, 2), 4, Divisibility::Pad).is_err());
        assert!(matches!(
            build_parallel(&spec(2, 8), &ratio(1, 2), 2, Divisibility::Pad),
            Err(Error::TooFewServers { .. })
        ));
    }

    #[test]
    fn labels_per_solver_are_balanced() {
        for q in 1..6 {
            for r in 1..q {
                let k = q + usize::div_ceil(q, r);
                let layout = build_sequential(&spec(q, 1), r, k, Divisibility::Pad).unwrap();
                for s in 1..=q {
                    let count = layout.batches.iter().filter(|b| b.label.solver_set.contains(&s)).count() as u128;
                    assert_eq!(count, binomial(q - 1, r - 1) * (k - q) as u128);
                }
                for f in 1..=layout.n {
                    let m = layout.placement.mappers(f);
                    assert_eq!(m.iter().filter(|&&s| s <= q).count(), r);
                    assert_eq!(m.iter().filter(|&&s| s > q).count(), 1);
                }
            }
        }
    }

    #[test]
    fn deterministic_serialization() {
        let a = build_parallel(&spec(4, 1), &ratio(7, 4), 7, Divisibility::Pad).unwrap();
        let b = build_parallel(&spec(4, 1), &ratio(7, 4), 7, Divisibility::Pad).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let back: SchemeLayout = serde_json::from_slice(&serde_json::to_vec(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
