//! Coded versus uncoded optimal times across a range of `c_s / c_m` ratios.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator;
use crate::error::{Error, Result};
use crate::model::{JobSpec, Mode};
use crate::scalar::{self, Rational};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: usize,
    pub mode: Mode,
    #[serde(with = "scalar::wire")]
    pub ratio: Rational,
    #[serde(with = "scalar::wire")]
    pub r_star: Rational,
    pub k_star: Option<u64>,
    #[serde(with = "scalar::wire")]
    pub t_coded: Rational,
    #[serde(with = "scalar::wire")]
    pub t_uncoded: Rational,
    #[serde(with = "scalar::wire")]
    pub c_r: Rational,
}

/// `steps` evenly spaced ratios from `min` to `max` inclusive.
pub fn ratio_grid(min: &Rational, max: &Rational, steps: usize) -> Result<Vec<Rational>> {
    if steps == 0 {
        return Err(Error::OutOfRange("steps must be at least 1".into()));
    }
    if *min <= scalar::int(0) || max < min {
        return Err(Error::OutOfRange(format!("need 0 < ratio_min <= ratio_max, got {min} and {max}")));
    }
    if steps == 1 {
        return Ok(vec![min.clone()]);
    }
    let span = max - min;
    Ok((0..steps)
        .map(|i| min + span.clone() * scalar::ratio(i as i64, (steps - 1) as i64))
        .collect())
}

/// One row per `(q, ratio, mode)` with `c_m = 1`, `c_s = ratio`.
pub fn sweep(qs: &[usize], ratios: &[Rational], modes: &[Mode], c_r: &Rational) -> Result<Vec<SweepRow>> {
    let cells: Vec<(usize, &Rational, Mode)> = qs
        .iter()
        .flat_map(|&q| ratios.iter().flat_map(move |r| modes.iter().map(move |&m| (q, r, m))))
        .collect();
    cells
        .into_par_iter()
        .map(|(q, ratio, mode)| {
            let spec = JobSpec::new(q, 1, scalar::int(1), ratio.clone(), c_r.clone())?;
            let coded = allocator::plan(&spec, mode, true);
            let uncoded = allocator::plan(&spec, mode, false);
            Ok(SweepRow {
                q,
                mode,
                ratio: ratio.clone(),
                r_star: coded.r_star,
                k_star: coded.k_star,
                t_coded: coded.t_star,
                t_uncoded: uncoded.t_star,
                c_r: c_r.clone(),
            })
        })
        .collect()
}

const DIGITS: usize = 12;

/// Writes rows as CSV, decimals first with exact rationals alongside.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidPlan(format!("csv output failed: {e}"));
    w.write_record([
        "q",
        "mode",
        "cs_over_cm",
        "cs_over_cm_exact",
        "r_star",
        "r_star_exact",
        "k_star",
        "t_coded",
        "t_coded_exact",
        "t_uncoded",
        "t_uncoded_exact",
    ])
    .map_err(io)?;
    for row in rows {
        let k = row.k_star.map_or_else(String::new, |k| k.to_string());
        w.write_record([
            row.q.to_string(),
            row.mode.to_string(),
            scalar::to_decimal(&row.ratio, DIGITS),
            row.ratio.to_string(),
            scalar::to_decimal(&row.r_star, DIGITS),
            row.r_star.to_string(),
            k,
            scalar::to_decimal(&row.t_coded, DIGITS),
            row.t_coded.to_string(),
            scalar::to_decimal(&row.t_uncoded, DIGITS),
            row.t_uncoded.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidPlan(format!("csv output failed: {e}")))?;
    Ok(())
}
