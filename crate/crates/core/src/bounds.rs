//! Converse bounds on the communication load and execution time, plus an
//! exhaustive search over tiny instances.
//!
//! The counting bound: if `a[s, d]` intermediate values are available at
//! exactly `s` servers and needed (but not mapped) by exactly `d` servers,
//! any valid shuffle has load at least
//! `(1 / QN) * sum a[s, d] * d / (s + d - 1)`.
//! Merging all servers without Reduce functions into one node before
//! counting can only tighten it.

use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::Envelope;
use crate::combin::binomial;
use crate::error::{Error, Result};
use crate::model::{check_structure, JobSpec, Mode, Placement};
use crate::scalar::{self, Rational, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityEntry {
    pub s: usize,
    pub d: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityTable {
    pub q: usize,
    pub n: usize,
    /// Number of (pseudo-)servers after optional merging.
    pub k: usize,
    pub merged: bool,
    /// Non-zero counts, sorted by `(s, d)`.
    pub entries: Vec<AvailabilityEntry>,
}

impl AvailabilityTable {
    pub fn get(&self, s: usize, d: usize) -> u64 {
        self.entries
            .iter()
            .find(|e| e.s == s && e.d == d)
            .map_or(0, |e| e.count)
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }
}

/// Counts intermediate values by availability and demand.
pub fn availability(placement: &Placement, q: usize, n: usize, merge_helpers: bool) -> Result<AvailabilityTable> {
    check_structure(q, n, placement).into_result()?;
    let helpers = placement.helpers();
    let mut counts: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for file in 1..=n {
        let mappers = placement.mappers(file);
        let mut s = mappers.len();
        if merge_helpers {
            let h = mappers.iter().filter(|m| helpers.contains(m)).count();
            s = s - h + usize::from(h > 0);
        }
        for function in 1..=q {
            let d = (1..=placement.k)
                .filter(|&k| placement.reduce_sets[k - 1].contains(&function) && !placement.maps(k, file))
                .count();
            *counts.entry((s, d)).or_default() += 1;
        }
    }
    let k = if merge_helpers {
        placement.k - helpers.len() + usize::from(!helpers.is_empty())
    } else {
        placement.k
    };
    Ok(AvailabilityTable {
        q,
        n,
        k,
        merged: merge_helpers,
        entries: counts
            .into_iter()
            .map(|((s, d), count)| AvailabilityEntry { s, d, count })
            .collect(),
    })
}

pub fn counting_bound(table: &AvailabilityTable) -> Rational {
    let mut sum = Rational::zero();
    for e in table.entries.iter().filter(|e| e.d > 0) {
        sum += scalar::ratio((e.count * e.d as u64) as i64, (e.s + e.d - 1) as i64);
    }
    sum / scalar::int((table.q * table.n) as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(with = "scalar::wire")]
    pub raw_bound: Rational,
    #[serde(with = "scalar::wire")]
    pub enhanced_bound: Rational,
    #[serde(with = "scalar::wire")]
    pub time_lower_sequential: Rational,
    #[serde(with = "scalar::wire")]
    pub time_lower_parallel: Rational,
    /// `sum_k |M_k| / N` over the solvers.
    #[serde(with = "scalar::wire")]
    pub solver_redundancy: Rational,
}

/// Load and time lower bounds for a placement where every solver reduces a
/// single function.
pub fn time_lower_bounds<T: Scalar>(spec: &JobSpec<T>, placement: &Placement) -> Result<BoundReport> {
    let (q, n) = (spec.q(), spec.n());
    check_structure(q, n, placement).into_result()?;
    if placement.max_reduce_count() > 1 {
        return Err(Error::Unsupported(
            "a server reduces several functions; split it into one solver per function first".into(),
        ));
    }
    let spec = spec.convert::<Rational>();
    let raw = counting_bound(&availability(placement, q, n, false)?);
    let enhanced = counting_bound(&availability(placement, q, n, true)?);

    let solvers = placement.solvers();
    let helpers = placement.helpers();
    let mut seq = Rational::zero();
    let mut mapped_by_solvers = 0usize;
    for file in 1..=n {
        let j = solvers.iter().filter(|&&k| placement.maps(k, file)).count();
        let h = usize::from(helpers.iter().any(|&k| placement.maps(k, file)));
        mapped_by_solvers += j;
        seq += spec.c_m().clone() * scalar::int(j as i64)
            + spec.c_s().clone() * scalar::ratio((q - j) as i64, (j + h) as i64);
    }
    let qn = scalar::int((q * n) as i64);
    let time_lower_sequential = seq / qn + spec.c_r().clone();

    let r_bar = scalar::ratio(mapped_by_solvers as i64, n as i64);
    let env = Envelope::<Rational>::for_q(q);
    let map_part = spec.c_m().clone() * r_bar.clone() / scalar::int(q as i64);
    let shuffle_part = spec.c_s().clone() * env.eval(&r_bar)?;
    let time_lower_parallel = scalar::max_of(map_part, shuffle_part) + spec.c_r().clone();

    Ok(BoundReport {
        raw_bound: raw,
        enhanced_bound: enhanced,
        time_lower_sequential,
        time_lower_parallel,
        solver_redundancy: r_bar,
    })
}

/// Default cap on the number of candidate placements a search may visit.
pub const DEFAULT_SEARCH_BUDGET: u128 = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub k_max: usize,
    pub mode: Mode,
    pub budget: u128,
    /// Enumerate file assignments as multisets rather than sequences.
    pub prune: bool,
}

impl SearchOptions {
    pub fn new(k_max: usize, mode: Mode) -> Self {
        SearchOptions {
            k_max,
            mode,
            budget: DEFAULT_SEARCH_BUDGET,
            prune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCandidate {
    pub k: usize,
    #[serde(with = "scalar::wire")]
    pub time: Rational,
    #[serde(with = "scalar::wire")]
    pub p: Rational,
    #[serde(with = "scalar::wire")]
    pub enhanced_bound: Rational,
    pub witness: Placement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub mode: Mode,
    pub q: usize,
    pub n: usize,
    pub k_max: usize,
    pub pruned: bool,
    pub candidates: u64,
    /// Overall best; the smallest `K` wins ties.
    pub best: SearchCandidate,
    /// Best candidate for each `K` in `Q..=k_max`.
    pub per_k: Vec<SearchCandidate>,
}

fn candidate_count(k: usize, n: usize, prune: bool) -> u128 {
    let masks = (1u128 << k) - 1;
    if prune {
        binomial(masks as usize + n - 1, n)
    } else {
        masks.checked_pow(n as u32).unwrap_or(u128::MAX)
    }
}

/// Accumulated per-candidate summary: `(peak map count, scaled shuffle bound)`.
type Key = (usize, u64);

struct Enumerator {
    q: usize,
    k: usize,
    n: usize,
    prune: bool,
    /// `term[mask]` = `(Q - j) * D / (j + h)` for the file mapped by `mask`.
    term: Vec<u64>,
}

impl Enumerator {
    fn walk(&self, masks: &mut Vec<u32>, loads: &mut [usize], sum: u64, best: &mut BTreeMap<Key, Vec<u32>>, visited: &mut u64) {
        if masks.len() == self.n {
            *visited += 1;
            let key = (*loads.iter().max().expect("k >= 1"), sum);
            best.entry(key).or_insert_with(|| masks.clone());
            return;
        }
        let start = if self.prune { *masks.last().unwrap_or(&1) } else { 1 };
        for mask in start..(1u32 << self.k) {
            for (s, load) in loads.iter_mut().enumerate() {
                *load += ((mask >> s) & 1) as usize;
            }
            masks.push(mask);
            self.walk(masks, loads, sum + self.term[mask as usize], best, visited);
            masks.pop();
            for (s, load) in loads.iter_mut().enumerate() {
                *load -= ((mask >> s) & 1) as usize;
            }
        }
    }

    fn placement(&self, masks: &[u32]) -> Placement {
        let map_sets = (0..self.k)
            .map(|s| {
                masks
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| (m >> s) & 1 == 1)
                    .map(|(f, _)| f + 1)
                    .collect()
            })
            .collect();
        let reduce_sets = (1..=self.k)
            .map(|s| if s <= self.q { [s].into() } else { Default::default() })
            .collect();
        Placement::new(map_sets, reduce_sets)
    }
}

fn lcm_upto(m: usize) -> u64 {
    (1..=m as u64).fold(1, |acc, x| num_integer::lcm(acc, x))
}

/// Exhaustive minimum of `c_m p + c_s L_enh + c_r` (or the `max` form in
/// parallel mode) over all placements with `Q..=k_max` servers.
///
/// Servers `1..=Q` reduce functions `1..=Q`; every other one-function-per-
/// server assignment is a relabeling and yields the same objective.
pub fn brute_force_search<T: Scalar>(spec: &JobSpec<T>, opts: &SearchOptions) -> Result<SearchResult> {
    let (q, n) = (spec.q(), spec.n());
    if opts.k_max < q {
        return Err(Error::TooFewServers { k: opts.k_max, required: q });
    }
    if opts.k_max > 16 {
        return Err(Error::OutOfRange(format!("k_max = {} is far beyond exhaustive reach", opts.k_max)));
    }
    let needed: u128 = (q..=opts.k_max)
        .map(|k| candidate_count(k, n, opts.prune))
        .fold(0u128, |a, b| a.saturating_add(b));
    if needed > opts.budget {
        return Err(Error::BudgetExceeded { needed, cap: opts.budget });
    }

    let spec = spec.convert::<Rational>();
    let scale = lcm_upto(q + 1);
    let denom = scalar::int((scale * (q * n) as u64) as i64);
    let objective = |key: &Key| -> (Rational, Rational, Rational) {
        let p = scalar::ratio(key.0 as i64, n as i64);
        let l = scalar::ratio(key.1 as i64, 1) / denom.clone();
        let map = spec.c_m().clone() * p.clone();
        let shuffle = spec.c_s().clone() * l.clone();
        let t = match opts.mode {
            Mode::Sequential => map + shuffle,
            Mode::Parallel => scalar::max_of(map, shuffle),
        } + spec.c_r().clone();
        (t, p, l)
    };

    let mut per_k = Vec::new();
    let mut visited_total = 0u64;
    for k in q..=opts.k_max {
        let solver_bits = (1u32 << q) - 1;
        let term = (0..(1u32 << k))
            .map(|mask| {
                let j = (mask & solver_bits).count_ones() as u64;
                let h = u64::from(mask & !solver_bits != 0);
                if j + h == 0 {
                    0
                } else {
                    (q as u64 - j) * scale / (j + h)
                }
            })
            .collect();
        let en = Enumerator { q, k, n, prune: opts.prune, term };
        let partials: Vec<(BTreeMap<Key, Vec<u32>>, u64)> = (1..(1u32 << k))
            .into_par_iter()
            .map(|first| {
                let mut best = BTreeMap::new();
                let mut visited = 0;
                let mut loads = vec![0usize; k];
                for (s, load) in loads.iter_mut().enumerate() {
                    *load = ((first >> s) & 1) as usize;
                }
                let mut masks = vec![first];
                en.walk(&mut masks, &mut loads, en.term[first as usize], &mut best, &mut visited);
                (best, visited)
            })
            .collect();
        // Partials come back in `first` order, so keeping the first witness
        // per key picks the lexicographically smallest one.
        let mut merged: BTreeMap<Key, Vec<u32>> = BTreeMap::new();
        for (best, visited) in partials {
            visited_total += visited;
            for (key, masks) in best {
                merged.entry(key).or_insert(masks);
            }
        }
        let mut choice: Option<(Rational, Rational, Rational, &Vec<u32>)> = None;
        for (key, masks) in &merged {
            let (t, p, l) = objective(key);
            let better = match &choice {
                None => true,
                Some((bt, _, _, bm)) => t < *bt || (t == *bt && masks < *bm),
            };
            if better {
                choice = Some((t, p, l, masks));
            }
        }
        let (time, p, enhanced_bound, masks) = choice.expect("at least one placement");
        per_k.push(SearchCandidate {
            k,
            time,
            p,
            enhanced_bound,
            witness: en.placement(masks),
        });
    }

    let best = per_k
        .iter()
        .fold(None::<&SearchCandidate>, |acc, c| match acc {
            Some(b) if b.time <= c.time => Some(b),
            _ => Some(c),
        })
        .expect("k range non-empty")
        .clone();
    Ok(SearchResult {
        mode: opts.mode,
        q,
        n,
        k_max: opts.k_max,
        pruned: opts.prune,
        candidates: visited_total,
        best,
        per_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{example_placement, example_spec};
    use crate::placement::{build_sequential, Divisibility};
    use crate::scalar::{int, ratio};

    #[test]
    fn worked_example_table() {
        let t = availability(&example_placement(), 3, 6, true).unwrap();
        assert_eq!(t.get(3, 1), 6);
        assert_eq!(t.get(3, 0), 12);
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.total(), 18);
        assert_eq!(t.k, 4);
        assert_eq!(counting_bound(&t), ratio(1, 9));

        let raw = availability(&example_placement(), 3, 6, false).unwrap();
        assert_eq!(raw.get(3, 1), 6);
        assert_eq!(counting_bound(&raw), ratio(1, 9));
    }

    #[test]
    fn extreme_tables() {
        let spec = JobSpec::new(3, 4, int(1), int(1), int(0)).unwrap();
        let full = build_sequential(&spec, 3, 3, Divisibility::Strict).unwrap();
        let t = availability(&full.placement, 3, 4, true).unwrap();
        assert_eq!(t.get(3, 0), 12);
        assert_eq!(counting_bound(&t), int(0));

        let spec = JobSpec::new(3, 6, int(1), int(1), int(0)).unwrap();
        let none = build_sequential(&spec, 0, 5, Divisibility::Strict).unwrap();
        let t = availability(&none.placement, 3, 6, true).unwrap();
        assert_eq!(t.get(1, 1), 18);
        assert_eq!(counting_bound(&t), int(1));
        let raw = availability(&none.placement, 3, 6, false).unwrap();
        assert_eq!(counting_bound(&raw), int(1));
    }

    #[test]
    fn merging_helps() {
        // Two helpers both map file 1; merging drops s from 3 to 2.
        let p = Placement::from_lists(&[&[1], &[2], &[1, 2], &[1]], &[&[1], &[2], &[], &[]]);
        let raw = counting_bound(&availability(&p, 2, 2, false).unwrap());
        let enh = counting_bound(&availability(&p, 2, 2, true).unwrap());
        assert_eq!(raw, ratio(1, 4) * (ratio(1, 3) + ratio(1, 2)));
        assert_eq!(enh, ratio(1, 4));
        assert!(raw < enh);
    }

    #[test]
    fn worked_example_times() {
        let b = time_lower_bounds(&example_spec(), &example_placement()).unwrap();
        assert_eq!(b.time_lower_sequential, ratio(17, 9));
        assert_eq!(b.enhanced_bound, ratio(1, 9));
        assert_eq!(b.solver_redundancy, int(2));

        let spec = JobSpec::new(2, 3, int(3), int(1), int(1)).unwrap();
        let full = build_sequential(&spec, 2, 2, Divisibility::Strict).unwrap();
        let b = time_lower_bounds(&spec, &full.placement).unwrap();
        assert_eq!(b.time_lower_sequential, int(4));

        let mut multi = example_placement();
        multi.reduce_sets[0].insert(2);
        multi.reduce_sets[1].clear();
        assert!(matches!(time_lower_bounds(&example_spec(), &multi), Err(Error::Unsupported(_))));
    }

    #[test]
    fn search_small_optimum() {
        let spec = JobSpec::new(2, 4, int(1), int(1), int(1)).unwrap();
        let res = brute_force_search(&spec, &SearchOptions::new(4, Mode::Sequential)).unwrap();
        assert_eq!(res.best.time, ratio(7, 4));
        assert_eq!(res.best.k, 4);
        assert!(res.per_k.iter().filter(|c| c.k < 4).all(|c| c.time > ratio(7, 4)));
        // witness: each solver maps half the files, each helper maps two
        let w = &res.best.witness;
        assert_eq!(w.map_sets[0].len(), 2);
        assert_eq!(w.map_sets[1].len(), 2);
        assert_eq!(res.best.enhanced_bound, ratio(1, 4));
    }

    #[test]
    fn search_trivial_cases() {
        let spec = JobSpec::new(1, 1, int(5), int(7), int(2)).unwrap();
        let res = brute_force_search(&spec, &SearchOptions::new(3, Mode::Sequential)).unwrap();
        // the single file must be mapped somewhere, so p = 1
        assert_eq!(res.best.time, int(7));
        assert_eq!(res.best.k, 1);

        let spec = JobSpec::new(2, 2, int(100), int(1), int(1)).unwrap();
        let res = brute_force_search(&spec, &SearchOptions::new(4, Mode::Sequential)).unwrap();
        assert_eq!(res.best.time, ratio(201, 4) + int(1));
    }

    #[test]
    fn pruning_is_neutral() {
        let spec = JobSpec::new(2, 3, int(2), int(3), int(0)).unwrap();
        for mode in [Mode::Sequential, Mode::Parallel] {
            let mut opts = SearchOptions::new(4, mode);
            let pruned = brute_force_search(&spec, &opts).unwrap();
            opts.prune = false;
            let full = brute_force_search(&spec, &opts).unwrap();
            assert!(full.candidates > pruned.candidates);
            for (a, b) in pruned.per_k.iter().zip(&full.per_k) {
                assert_eq!(a.time, b.time);
            }
        }
    }

    #[test]
    fn search_budget_enforced() {
        let spec = JobSpec::new(2, 4, int(1), int(1), int(1)).unwrap();
        let mut opts = SearchOptions::new(4, Mode::Sequential);
        opts.budget = 10;
        assert!(matches!(brute_force_search(&spec, &opts), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn enumerated_bound_matches_table() {
        let spec = JobSpec::new(2, 3, int(1), int(1), int(0)).unwrap();
        let res = brute_force_search(&spec, &SearchOptions::new(4, Mode::Sequential)).unwrap();
        for c in &res.per_k {
            let t = availability(&c.witness, 2, 3, true).unwrap();
            assert_eq!(counting_bound(&t), c.enhanced_bound);
        }
    }
}
