//! Problem instances, task placements and measured loads.
//!
//! File ids run over `1..=N`, function ids over `1..=Q` and server ids over
//! `1..=K`, both in memory and on the wire. `map_sets[k - 1]` is the set of
//! files mapped by server `k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

pub const DEFAULT_T_BITS: u32 = 64;

/// How the Map and Shuffle phases are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Map, Shuffle and Reduce run one after another.
    #[serde(alias = "seq")]
    Sequential,
    /// Shuffle overlaps with Map; total time is `max(map, shuffle) + reduce`.
    #[serde(alias = "par")]
    Parallel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Parallel => "parallel",
        })
    }
}

/// A computation of `Q` output functions over `N` input files, together with
/// the per-phase cost constants.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct JobSpec<T> {
    q: usize,
    n: usize,
    #[serde(with = "scalar::wire")]
    c_m: T,
    #[serde(with = "scalar::wire")]
    c_s: T,
    #[serde(with = "scalar::wire")]
    c_r: T,
    t_bits: u32,
}

impl<T: Scalar> JobSpec<T> {
    /// Builds a spec with the default 64-bit intermediate values.
    pub fn new(q: usize, n: usize, c_m: T, c_s: T, c_r: T) -> Result<Self> {
        Self::with_bits(q, n, c_m, c_s, c_r, DEFAULT_T_BITS)
    }

    pub fn with_bits(q: usize, n: usize, c_m: T, c_s: T, c_r: T, t_bits: u32) -> Result<Self> {
        if q == 0 {
            return Err(Error::InvalidSpec("Q must be at least 1".into()));
        }
        if n == 0 {
            return Err(Error::InvalidSpec("N must be at least 1".into()));
        }
        if !(c_m > T::zero()) {
            return Err(Error::InvalidSpec(format!("c_m must be positive, got {c_m:?}")));
        }
        if !(c_s > T::zero()) {
            return Err(Error::InvalidSpec(format!("c_s must be positive, got {c_s:?}")));
        }
        if !(c_r >= T::zero()) {
            return Err(Error::InvalidSpec(format!("c_r must be nonnegative, got {c_r:?}")));
        }
        if t_bits == 0 || t_bits % 8 != 0 {
            return Err(Error::InvalidSpec(format!(
                "T_bits must be a positive multiple of 8, got {t_bits}"
            )));
        }
        Ok(JobSpec { q, n, c_m, c_s, c_r, t_bits })
    }

    /// Same costs, different number of input files.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::with_bits(self.q, n, self.c_m.clone(), self.c_s.clone(), self.c_r.clone(), self.t_bits)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c_m(&self) -> &T {
        &self.c_m
    }

    pub fn c_s(&self) -> &T {
        &self.c_s
    }

    pub fn c_r(&self) -> &T {
        &self.c_r
    }

    pub fn t_bits(&self) -> u32 {
        self.t_bits
    }

    pub fn value_bytes(&self) -> usize {
        (self.t_bits / 8) as usize
    }

    /// Converts the cost constants into another scalar type.
    pub fn convert<U: Scalar>(&self) -> JobSpec<U> {
        let conv = |v: &T| U::from_exact(&v.to_exact().expect("validated costs are finite"));
        JobSpec {
            q: self.q,
            n: self.n,
            c_m: conv(&self.c_m),
            c_s: conv(&self.c_s),
            c_r: conv(&self.c_r),
            t_bits: self.t_bits,
        }
    }
}

#[derive(Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
struct JobSpecRepr<T> {
    q: usize,
    n: usize,
    #[serde(with = "scalar::wire")]
    c_m: T,
    #[serde(with = "scalar::wire")]
    c_s: T,
    #[serde(with = "scalar::wire")]
    c_r: T,
    #[serde(default = "default_t_bits")]
    t_bits: u32,
}

fn default_t_bits() -> u32 {
    DEFAULT_T_BITS
}

impl<'de, T: Scalar> Deserialize<'de> for JobSpec<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let r = JobSpecRepr::<T>::deserialize(deserializer)?;
        JobSpec::with_bits(r.q, r.n, r.c_m, r.c_s, r.c_r, r.t_bits).map_err(serde::de::Error::custom)
    }
}

/// Map and Reduce task assignment over `K` servers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub k: usize,
    /// `map_sets[k - 1]` = files mapped by server `k`.
    pub map_sets: Vec<BTreeSet<usize>>,
    /// `reduce_sets[k - 1]` = functions reduced by server `k`.
    pub reduce_sets: Vec<BTreeSet<usize>>,
    /// Optional batch label -> files table carried over from scheme synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_index: Option<BTreeMap<String, Vec<usize>>>,
}

impl Placement {
    pub fn new(map_sets: Vec<BTreeSet<usize>>, reduce_sets: Vec<BTreeSet<usize>>) -> Self {
        Placement {
            k: map_sets.len(),
            map_sets,
            reduce_sets,
            batch_index: None,
        }
    }

    /// Convenience constructor from plain slices, mostly for tests and fixtures.
    pub fn from_lists(map_sets: &[&[usize]], reduce_sets: &[&[usize]]) -> Self {
        Placement::new(
            map_sets.iter().map(|s| s.iter().copied().collect()).collect(),
            reduce_sets.iter().map(|s| s.iter().copied().collect()).collect(),
        )
    }

    pub fn maps(&self, server: usize, file: usize) -> bool {
        self.map_sets
            .get(server - 1)
            .is_some_and(|m| m.contains(&file))
    }

    /// Servers (ascending) that map `file`.
    pub fn mappers(&self, file: usize) -> Vec<usize> {
        (1..=self.map_sets.len())
            .filter(|&k| self.map_sets[k - 1].contains(&file))
            .collect()
    }

    /// Server reducing `function`, if exactly one does.
    pub fn reducer(&self, function: usize) -> Option<usize> {
        let mut owners = (1..=self.reduce_sets.len()).filter(|&k| self.reduce_sets[k - 1].contains(&function));
        match (owners.next(), owners.next()) {
            (Some(k), None) => Some(k),
            _ => None,
        }
    }

    /// Servers with at least one Reduce function.
    pub fn solvers(&self) -> Vec<usize> {
        (1..=self.reduce_sets.len())
            .filter(|&k| !self.reduce_sets[k - 1].is_empty())
            .collect()
    }

    /// Servers without any Reduce function.
    pub fn helpers(&self) -> Vec<usize> {
        (1..=self.reduce_sets.len())
            .filter(|&k| self.reduce_sets[k - 1].is_empty())
            .collect()
    }

    pub fn max_map_count(&self) -> usize {
        self.map_sets.iter().map(BTreeSet::len).max().unwrap_or(0)
    }

    pub fn max_reduce_count(&self) -> usize {
        self.reduce_sets.iter().map(BTreeSet::len).max().unwrap_or(0)
    }
}

/// One structural problem with a placement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    ServerCountMismatch { k: usize, map_sets: usize, reduce_sets: usize },
    FileOutOfRange { server: usize, file: usize },
    FunctionOutOfRange { server: usize, function: usize },
    FileUnmapped { file: usize },
    FunctionReducedTwice { function: usize, servers: Vec<usize> },
    FunctionUnreduced { function: usize },
    BatchFileOutOfRange { label: String, file: usize },
    BatchOverlap { file: usize, labels: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ServerCountMismatch { k, map_sets, reduce_sets } => write!(
                f,
                "K = {k} but {map_sets} map sets and {reduce_sets} reduce sets"
            ),
            Violation::FileOutOfRange { server, file } => {
                write!(f, "server {server} maps out-of-range file {file}")
            }
            Violation::FunctionOutOfRange { server, function } => {
                write!(f, "server {server} reduces out-of-range function {function}")
            }
            Violation::FileUnmapped { file } => write!(f, "file {file} unmapped"),
            Violation::FunctionReducedTwice { function, servers } => {
                write!(f, "function {function} reduced twice (servers {servers:?})")
            }
            Violation::FunctionUnreduced { function } => write!(f, "function {function} never reduced"),
            Violation::BatchFileOutOfRange { label, file } => {
                write!(f, "batch {label} lists out-of-range file {file}")
            }
            Violation::BatchOverlap { file, labels } => {
                write!(f, "file {file} appears in several batches {labels:?}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidPlacement(self.violations))
        }
    }
}

/// Lists every structural violation of `placement` for the given job.
/// An empty report means the placement is admissible.
pub fn validate_placement<T>(spec: &JobSpec<T>, placement: &Placement) -> ValidationReport {
    check_structure(spec.q, spec.n, placement)
}

pub(crate) fn check_structure(q: usize, n: usize, placement: &Placement) -> ValidationReport {
    let mut violations = Vec::new();
    if placement.map_sets.len() != placement.k || placement.reduce_sets.len() != placement.k {
        violations.push(Violation::ServerCountMismatch {
            k: placement.k,
            map_sets: placement.map_sets.len(),
            reduce_sets: placement.reduce_sets.len(),
        });
    }

    let mut covered = vec![false; n + 1];
    for (idx, files) in placement.map_sets.iter().enumerate() {
        for &file in files {
            if file == 0 || file > n {
                violations.push(Violation::FileOutOfRange { server: idx + 1, file });
            } else {
                covered[file] = true;
            }
        }
    }

    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); q + 1];
    for (idx, functions) in placement.reduce_sets.iter().enumerate() {
        for &function in functions {
            if function == 0 || function > q {
                violations.push(Violation::FunctionOutOfRange { server: idx + 1, function });
            } else {
                owners[function].push(idx + 1);
            }
        }
    }

    for (file, _) in covered.iter().enumerate().skip(1).filter(|(_, c)| !**c) {
        violations.push(Violation::FileUnmapped { file });
    }
    for (function, servers) in owners.into_iter().enumerate().skip(1) {
        match servers.len() {
            0 => violations.push(Violation::FunctionUnreduced { function }),
            1 => {}
            _ => violations.push(Violation::FunctionReducedTwice { function, servers }),
        }
    }

    if let Some(index) = &placement.batch_index {
        let mut seen: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (label, files) in index {
            for &file in files {
                if file == 0 || file > n {
                    violations.push(Violation::BatchFileOutOfRange { label: label.clone(), file });
                } else {
                    seen.entry(file).or_default().push(label.clone());
                }
            }
        }
        for (file, labels) in seen {
            if labels.len() > 1 {
                violations.push(Violation::BatchOverlap { file, labels });
            }
        }
    }

    ValidationReport { violations }
}

/// Peak computation load `max_k |M_k| / N`.
pub fn peak_load<T: Scalar>(spec: &JobSpec<T>, placement: &Placement) -> Result<T> {
    validate_placement(spec, placement).into_result()?;
    Ok(T::frac(placement.max_map_count() as u64, spec.n as u64))
}

/// Measured (or predicted) loads and phase times of one execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LoadReport<T> {
    #[serde(with = "scalar::wire")]
    pub p: T,
    #[serde(rename = "l", with = "scalar::wire")]
    pub l: T,
    #[serde(with = "scalar::wire")]
    pub t_map: T,
    #[serde(with = "scalar::wire")]
    pub t_shuffle: T,
    #[serde(with = "scalar::wire")]
    pub t_reduce: T,
    #[serde(with = "scalar::wire")]
    pub t_sequential: T,
    #[serde(with = "scalar::wire")]
    pub t_parallel: T,
    pub bits_sent: u64,
}

impl<T: Scalar> LoadReport<T> {
    /// Derives all phase times from the loads through the linear cost model.
    pub fn from_loads(spec: &JobSpec<T>, p: T, l: T, max_reduce: usize, bits_sent: u64) -> Self {
        let t_map = spec.c_m.clone() * p.clone();
        let t_shuffle = spec.c_s.clone() * l.clone();
        let t_reduce = spec.c_r.clone() * T::from_u64(max_reduce as u64);
        let t_sequential = t_map.clone() + t_shuffle.clone() + t_reduce.clone();
        let t_parallel = scalar::max_of(t_map.clone(), t_shuffle.clone()) + t_reduce.clone();
        LoadReport {
            p,
            l,
            t_map,
            t_shuffle,
            t_reduce,
            t_sequential,
            t_parallel,
            bits_sent,
        }
    }

    pub fn total(&self, mode: Mode) -> &T {
        match mode {
            Mode::Sequential => &self.t_sequential,
            Mode::Parallel => &self.t_parallel,
        }
    }
}
