//! Shuffle plans: who sends what to whom, and the XOR encoding/decoding.
//!
//! A message carries one [`ValueGroup`] per recipient. Its payload is the
//! bytewise XOR of the groups, each group being the concatenation of
//! `v_{q,n}` for its files in ascending order, zero-padded to the longest
//! group. A recipient cancels every group but its own using values it
//! computed locally.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::combin::subsets;
use crate::error::{Error, Result};
use crate::model::Placement;
use crate::placement::{SchemeLayout, Stratum};
use crate::scalar::{self, Rational};

/// Values `v_{function, n}` for every `n` in `files`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueGroup {
    pub function: usize,
    pub files: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulticastMessage {
    pub sender: usize,
    pub recipients: Vec<usize>,
    /// `groups[j]` is what `recipients[j]` recovers.
    pub groups: Vec<ValueGroup>,
    /// Human readable origin, e.g. `i=4,S={1,2,3},stratum=none`.
    pub label: String,
}

impl MulticastMessage {
    /// Payload length in intermediate values.
    pub fn len_values(&self) -> usize {
        self.groups.iter().map(|g| g.files.len()).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Coded,
    Uncoded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShufflePlan {
    pub kind: PlanKind,
    pub q: usize,
    pub n: usize,
    pub messages: Vec<MulticastMessage>,
    /// Communication load implied by the message sizes, `sum len / (Q N)`.
    #[serde(with = "scalar::wire")]
    pub predicted_load: Rational,
}

impl ShufflePlan {
    fn new(kind: PlanKind, q: usize, n: usize, messages: Vec<MulticastMessage>) -> Self {
        let total: usize = messages.iter().map(MulticastMessage::len_values).sum();
        ShufflePlan {
            kind,
            q,
            n,
            predicted_load: scalar::ratio(total as i64, (q * n) as i64),
            messages,
        }
    }

    pub fn total_values(&self) -> usize {
        self.messages.iter().map(MulticastMessage::len_values).sum()
    }

    pub fn bits(&self, t_bits: u32) -> u64 {
        self.total_values() as u64 * u64::from(t_bits)
    }

    /// Symbolic check that every message can be formed by its sender and
    /// decoded by each recipient, and that every missing value is delivered.
    pub fn check(&self, placement: &Placement) -> Result<()> {
        let mut delivered: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
        for (idx, msg) in self.messages.iter().enumerate() {
            if msg.recipients.len() != msg.groups.len() || msg.recipients.is_empty() {
                return Err(Error::InvalidPlan(format!("message {idx} has mismatched recipients and groups")));
            }
            for g in &msg.groups {
                if let Some(f) = g.files.iter().find(|&&f| !placement.maps(msg.sender, f)) {
                    return Err(Error::InvalidPlan(format!(
                        "message {idx}: sender {} does not map file {f}",
                        msg.sender
                    )));
                }
            }
            for (j, &rcpt) in msg.recipients.iter().enumerate() {
                for (other, g) in msg.groups.iter().enumerate() {
                    if other == j {
                        continue;
                    }
                    if let Some(f) = g.files.iter().find(|&&f| !placement.maps(rcpt, f)) {
                        return Err(Error::Undecodable {
                            server: rcpt,
                            reason: format!("message {idx} needs local file {f}"),
                        });
                    }
                }
                let g = &msg.groups[j];
                delivered.extend(g.files.iter().map(|&f| (rcpt, g.function, f)));
            }
        }
        for (server, file, function) in missing_values(placement, self.n) {
            if !delivered.contains(&(server, function, file)) {
                return Err(Error::Undecodable {
                    server,
                    reason: format!("value of function {function} on file {file} never delivered"),
                });
            }
        }
        Ok(())
    }
}

/// `(server, file, function)` triples a reducer needs but does not map itself.
pub fn missing_values(placement: &Placement, n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for server in 1..=placement.k {
        for &function in &placement.reduce_sets[server - 1] {
            for file in 1..=n {
                if !placement.maps(server, file) {
                    out.push((server, file, function));
                }
            }
        }
    }
    out
}

/// Coded multicast plan for a synthesized layout.
///
/// For every helper `i` and every set `S` of `r + 1` solvers the helper sends
/// one message to `S` combining, for each `k` in `S`, the values of function
/// `k` on batch `B_{i, S \ {k}}`.
pub fn build_coded_plan(layout: &SchemeLayout) -> Result<ShufflePlan> {
    let q = layout.q;
    let mut messages = Vec::new();
    for info in &layout.strata {
        if info.files == 0 || info.stratum == Stratum::SolverOnly {
            continue;
        }
        let r = info.repetition;
        for helper in layout.helpers() {
            for set in subsets(q, r + 1) {
                let groups = set
                    .iter()
                    .map(|&k| {
                        let rest: Vec<usize> = set.iter().copied().filter(|&s| s != k).collect();
                        let key = crate::placement::BatchLabel {
                            helper: Some(helper),
                            solver_set: rest,
                            stratum: info.stratum,
                        };
                        let batch = layout
                            .batch(&key)
                            .ok_or_else(|| Error::InvalidPlan(format!("layout lacks batch {}", key.key())))?;
                        Ok(ValueGroup { function: k, files: batch.files.clone() })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let ids: Vec<String> = set.iter().map(ToString::to_string).collect();
                messages.push(MulticastMessage {
                    sender: helper,
                    label: format!("i={helper},S={{{}}},stratum={}", ids.join(","), info.stratum),
                    recipients: set,
                    groups,
                });
            }
        }
    }
    Ok(ShufflePlan::new(PlanKind::Coded, q, layout.n, messages))
}

/// One unicast per missing value, sent by the lowest-numbered server mapping the file.
pub fn build_uncoded_plan(placement: &Placement, q: usize, n: usize) -> Result<ShufflePlan> {
    let mut first_mapper = vec![None; n + 1];
    for (idx, files) in placement.map_sets.iter().enumerate().rev() {
        for &f in files {
            if f >= 1 && f <= n {
                first_mapper[f] = Some(idx + 1);
            }
        }
    }
    let mut messages = Vec::new();
    for (server, file, function) in missing_values(placement, n) {
        let sender = first_mapper[file]
            .ok_or_else(|| Error::InvalidPlacement(vec![crate::model::Violation::FileUnmapped { file }]))?;
        messages.push(MulticastMessage {
            sender,
            recipients: vec![server],
            groups: vec![ValueGroup { function, files: vec![file] }],
            label: format!("unicast f={function},n={file}"),
        });
    }
    Ok(ShufflePlan::new(PlanKind::Uncoded, q, n, messages))
}

/// `acc ^= bytes`, bytewise over the shorter length.
pub fn xor_into(acc: &mut [u8], bytes: &[u8]) {
    for (a, b) in acc.iter_mut().zip(bytes) {
        *a ^= b;
    }
}

fn group_bytes<F>(group: &ValueGroup, width: usize, value_bytes: usize, values: &F) -> Vec<u8>
where
    F: Fn(usize, usize) -> Vec<u8>,
{
    let mut out = vec![0u8; width * value_bytes];
    for (slot, &file) in group.files.iter().enumerate() {
        let v = values(group.function, file);
        debug_assert_eq!(v.len(), value_bytes);
        out[slot * value_bytes..(slot + 1) * value_bytes].copy_from_slice(&v);
    }
    out
}

/// Forms the payload of `msg` at its sender.
///
/// `values(function, file)` plays the Map function; it is only called on
/// files the sender maps.
pub fn encode_message<F>(msg: &MulticastMessage, placement: &Placement, value_bytes: usize, values: &F) -> Result<Vec<u8>>
where
    F: Fn(usize, usize) -> Vec<u8>,
{
    let width = msg.len_values();
    let mut payload = vec![0u8; width * value_bytes];
    for g in &msg.groups {
        if let Some(f) = g.files.iter().find(|&&f| !placement.maps(msg.sender, f)) {
            return Err(Error::InvalidPlan(format!("sender {} does not map file {f}", msg.sender)));
        }
        xor_into(&mut payload, &group_bytes(g, width, value_bytes, values));
    }
    Ok(payload)
}

pub fn encode<F>(plan: &ShufflePlan, placement: &Placement, value_bytes: usize, values: &F) -> Result<Vec<Vec<u8>>>
where
    F: Fn(usize, usize) -> Vec<u8>,
{
    plan.messages
        .iter()
        .map(|m| encode_message(m, placement, value_bytes, values))
        .collect()
}

/// Recovers every value addressed to `solver`, keyed by `(function, file)`.
///
/// `payloads[i]` belongs to `plan.messages[i]`; `values` is only evaluated on
/// files `solver` maps.
pub fn decode<F>(
    solver: usize,
    plan: &ShufflePlan,
    placement: &Placement,
    payloads: &[Vec<u8>],
    value_bytes: usize,
    values: &F,
) -> Result<BTreeMap<(usize, usize), Vec<u8>>>
where
    F: Fn(usize, usize) -> Vec<u8>,
{
    if payloads.len() != plan.messages.len() {
        return Err(Error::InvalidPlan(format!(
            "{} payloads for {} messages",
            payloads.len(),
            plan.messages.len()
        )));
    }
    let mut out = BTreeMap::new();
    for (idx, (msg, payload)) in plan.messages.iter().zip(payloads).enumerate() {
        let Some(slot) = msg.recipients.iter().position(|&r| r == solver) else {
            continue;
        };
        let width = msg.len_values();
        if payload.len() != width * value_bytes {
            return Err(Error::InvalidPlan(format!("message {idx} payload has wrong length")));
        }
        let mut buf = payload.clone();
        for (j, g) in msg.groups.iter().enumerate() {
            if j == slot {
                continue;
            }
            if let Some(f) = g.files.iter().find(|&&f| !placement.maps(solver, f)) {
                return Err(Error::Undecodable {
                    server: solver,
                    reason: format!("message {idx} interferes with unmapped file {f}"),
                });
            }
            xor_into(&mut buf, &group_bytes(g, width, value_bytes, values));
        }
        let own = &msg.groups[slot];
        for (pos, &file) in own.files.iter().enumerate() {
            out.insert((own.function, file), buf[pos * value_bytes..(pos + 1) * value_bytes].to_vec());
        }
    }
    Ok(out)
}
