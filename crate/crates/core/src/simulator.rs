//! Deterministic end-to-end execution of Map, Shuffle and Reduce on
//! synthetic data.
//!
//! The intermediate value `v_{q,n}` is a keyed splitmix64 stream truncated to
//! `T_bits`; the output `u_q` is a 128-bit fold over `v_{q,1..N}` in
//! ascending file order. Times come from the measured loads through the
//! linear cost model, never from a clock.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_placement, JobSpec, LoadReport, Mode, Placement};
use crate::scalar::{self, Scalar};
use crate::shuffle::{self, ShufflePlan};

/// Identifies the value hash and output digest, recorded in every result.
pub const HASH_ID: &str = "splitmix64-v1/fold128-v1";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub seed: u64,
    pub q: usize,
    pub n: usize,
    pub t_bits: u32,
}

impl SyntheticDataset {
    pub fn new<T: Scalar>(spec: &JobSpec<T>, seed: u64) -> Self {
        SyntheticDataset {
            seed,
            q: spec.q(),
            n: spec.n(),
            t_bits: spec.t_bits(),
        }
    }

    pub fn value_bytes(&self) -> usize {
        (self.t_bits / 8) as usize
    }

    /// `v_{function, file}`; stands in for the Map function.
    pub fn value(&self, function: usize, file: usize) -> Vec<u8> {
        let key = mix(mix(mix(self.seed) ^ function as u64) ^ file as u64);
        let len = self.value_bytes();
        let mut out = Vec::with_capacity(len + 8);
        let mut word = 0u64;
        while out.len() < len {
            out.extend_from_slice(&mix(key.wrapping_add(word.wrapping_mul(GOLDEN))).to_le_bytes());
            word += 1;
        }
        out.truncate(len);
        out
    }
}

/// 128-bit accumulator used as the Reduce function.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Digest128 {
    a: u64,
    b: u64,
}

impl Digest128 {
    pub fn new(function: usize) -> Self {
        Digest128 {
            a: mix(function as u64),
            b: mix(!(function as u64)),
        }
    }

    pub fn absorb(&mut self, bytes: &[u8]) {
        for chunk in bytes.chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            self.a = mix(self.a ^ u64::from_le_bytes(word));
            self.b = mix(self.b.rotate_left(23) ^ self.a);
        }
    }

    pub fn hex(&self) -> String {
        let mut bytes = self.a.to_be_bytes().to_vec();
        bytes.extend_from_slice(&self.b.to_be_bytes());
        hex::encode(bytes)
    }
}

fn reduce(function: usize, values: impl Iterator<Item = Vec<u8>>) -> String {
    let mut d = Digest128::new(function);
    for v in values {
        d.absorb(&v);
    }
    d.hex()
}

/// Reduce outputs computed directly from all `QN` values.
pub fn centralized_oracle<T: Scalar>(spec: &JobSpec<T>, seed: u64) -> BTreeMap<usize, String> {
    let data = SyntheticDataset::new(spec, seed);
    (1..=spec.q())
        .map(|q| (q, reduce(q, (1..=spec.n()).map(|n| data.value(q, n)))))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub index: usize,
    pub sender: usize,
    pub recipients: Vec<usize>,
    pub label: String,
    pub bytes: usize,
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct RunResult<T> {
    pub mode: Mode,
    pub seed: u64,
    pub hash: String,
    pub report: LoadReport<T>,
    /// Total time under `mode`.
    #[serde(with = "scalar::wire")]
    pub t: T,
    /// Function id -> hex digest computed by its reducer.
    pub outputs: BTreeMap<usize, String>,
    pub oracle_match: bool,
    pub messages: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceEntry>>,
}

/// Values one server produced in its Map phase.
struct LocalStore {
    q: usize,
    value_bytes: usize,
    mapped: Vec<bool>,
    values: Vec<u8>,
}

impl LocalStore {
    fn map(data: &SyntheticDataset, files: &std::collections::BTreeSet<usize>) -> Self {
        let (q, n, vb) = (data.q, data.n, data.value_bytes());
        let mut store = LocalStore {
            q,
            value_bytes: vb,
            mapped: vec![false; n + 1],
            values: vec![0; (n + 1) * q * vb],
        };
        for &file in files {
            store.mapped[file] = true;
            for function in 1..=q {
                let at = store.offset(function, file);
                store.values[at..at + vb].copy_from_slice(&data.value(function, file));
            }
        }
        store
    }

    fn offset(&self, function: usize, file: usize) -> usize {
        (file * self.q + function - 1) * self.value_bytes
    }

    fn get(&self, function: usize, file: usize) -> Vec<u8> {
        assert!(self.mapped[file], "value of unmapped file {file} requested");
        let at = self.offset(function, file);
        self.values[at..at + self.value_bytes].to_vec()
    }

    fn count(&self) -> usize {
        self.mapped.iter().filter(|m| **m).count()
    }
}

/// Runs the three phases and checks the outputs against the oracle.
pub fn run<T: Scalar>(
    spec: &JobSpec<T>,
    placement: &Placement,
    plan: &ShufflePlan,
    seed: u64,
    mode: Mode,
    with_trace: bool,
) -> Result<RunResult<T>> {
    validate_placement(spec, placement).into_result()?;
    if plan.q != spec.q() || plan.n != spec.n() {
        return Err(Error::InvalidPlan(format!(
            "plan is for Q = {}, N = {} but the job has Q = {}, N = {}",
            plan.q,
            plan.n,
            spec.q(),
            spec.n()
        )));
    }
    let data = SyntheticDataset::new(spec, seed);
    let vb = data.value_bytes();

    let stores: Vec<LocalStore> = placement
        .map_sets
        .par_iter()
        .map(|files| LocalStore::map(&data, files))
        .collect();
    let max_mapped = stores.iter().map(LocalStore::count).max().unwrap_or(0);

    let payloads: Vec<Vec<u8>> = plan
        .messages
        .par_iter()
        .map(|msg| {
            let store = &stores[msg.sender - 1];
            shuffle::encode_message(msg, placement, vb, &|f, n| store.get(f, n))
        })
        .collect::<Result<_>>()?;
    let bytes_sent: usize = payloads.iter().map(Vec::len).sum();

    let reducers: Vec<usize> = (1..=placement.k)
        .filter(|&k| !placement.reduce_sets[k - 1].is_empty())
        .collect();
    let per_server: Vec<Vec<(usize, String)>> = reducers
        .par_iter()
        .map(|&k| {
            let store = &stores[k - 1];
            let received = shuffle::decode(k, plan, placement, &payloads, vb, &|f, n| store.get(f, n))?;
            placement.reduce_sets[k - 1]
                .iter()
                .map(|&function| {
                    let values = (1..=spec.n())
                        .map(|file| {
                            if store.mapped[file] {
                                Ok(store.get(function, file))
                            } else {
                                received.get(&(function, file)).cloned().ok_or_else(|| Error::Undecodable {
                                    server: k,
                                    reason: format!("value of function {function} on file {file} never arrived"),
                                })
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((function, reduce(function, values.into_iter())))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let outputs: BTreeMap<usize, String> = per_server.into_iter().flatten().collect();

    let bits_sent = bytes_sent as u64 * 8;
    let p = T::frac(max_mapped as u64, spec.n() as u64);
    let l = T::frac(bits_sent, (spec.q() * spec.n()) as u64 * u64::from(spec.t_bits()));
    let report = LoadReport::from_loads(spec, p, l, placement.max_reduce_count(), bits_sent);
    let oracle_match = outputs == centralized_oracle(spec, seed);

    let trace = with_trace.then(|| {
        plan.messages
            .iter()
            .zip(&payloads)
            .enumerate()
            .map(|(index, (m, bytes))| TraceEntry {
                index,
                sender: m.sender,
                recipients: m.recipients.clone(),
                label: m.label.clone(),
                bytes: bytes.len(),
                payload: hex::encode(bytes),
            })
            .collect()
    });

    Ok(RunResult {
        mode,
        seed,
        hash: HASH_ID.to_string(),
        t: report.total(mode).clone(),
        report,
        outputs,
        oracle_match,
        messages: plan.messages.len(),
        trace,
    })
}
