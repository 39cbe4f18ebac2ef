//! CSV and JSON persistence of trial records and sweep summaries.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! values always produce equal bytes. Non-finite values appear as `inf`/`NaN`.

use std::io::{Read, Write};

use serde::Serialize;

use super::sweep::{LadderOutcome, ScalingTable, SweepResult};
use super::trial::TrialRecord;
use crate::error::{Error, Result};

pub const TRIAL_COLUMNS: [&str; 11] = [
    "trial_index",
    "seed",
    "n",
    "k",
    "m",
    "m_cs",
    "loss_strongest_db",
    "success_1db",
    "stage1_converged",
    "freq_err_max",
    "wall_ms",
];

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "axis_value",
    "trials",
    "success_rate",
    "wilson_lo",
    "wilson_hi",
    "mean_loss_db",
    "median_loss_db",
];

/// Writes one row per record. With `timing == false` the `wall_ms` column is
/// written as `0` so that reruns are byte-identical.
pub fn write_trials_csv<W: Write>(out: W, records: &[TrialRecord], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for r in records {
        w.write_record([
            r.trial_index.to_string(),
            r.seed.to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            r.m_cs.to_string(),
            r.loss_strongest_db.to_string(),
            r.success_1db.to_string(),
            r.stage1_converged.to_string(),
            r.freq_err_max().to_string(),
            if timing { r.wall_ms.to_string() } else { "0".to_string() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed trial CSV row, as strings keyed by column order.
pub fn read_trials_csv<R: Read>(input: R) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_reader(input);
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if headers != TRIAL_COLUMNS {
        return Err(Error::InvalidInput(format!("unexpected trial columns {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for p in &result.points {
        w.write_record([
            p.axis_value.to_string(),
            p.trials.to_string(),
            p.success_rate.to_string(),
            p.wilson_lo.to_string(),
            p.wilson_hi.to_string(),
            p.mean_loss_db.to_string(),
            p.median_loss_db.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `n, k, m_star, m_star_coherent, ratio`; missing values are empty cells.
pub fn write_scaling_csv<W: Write>(out: W, table: &ScalingTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "k", "m_star", "m_star_coherent", "ratio"])?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &table.rows {
        w.write_record([
            row.n.to_string(),
            row.k.to_string(),
            opt(row.m_star),
            opt(row.m_star_coherent),
            row.overhead_ratio().map(|r| r.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<W: Write, T: Serialize + ?Sized>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_trials_json<W: Write>(out: W, records: &[TrialRecord], timing: bool) -> Result<()> {
    if timing {
        write_json(out, records)
    } else {
        let stripped: Vec<TrialRecord> = records.iter().map(TrialRecord::without_timing).collect();
        write_json(out, &stripped)
    }
}

pub fn write_sweep_json<W: Write>(out: W, result: &SweepResult) -> Result<()> {
    write_json(out, result)
}

pub fn write_ladder_json<W: Write>(out: W, ladder: &LadderOutcome) -> Result<()> {
    write_json(out, ladder)
}

#[cfg(test)]
mod tests {
    use super::super::{run_trials, sweep_mcs, TrialConfig};
    use super::*;

    fn cfg() -> TrialConfig {
        TrialConfig { n_elements: 32, m: 24, m_cs: 8, seed: 4, ..TrialConfig::default() }
    }

    #[test]
    fn trial_csv_has_exact_columns_and_round_trips() {
        let recs = run_trials(&cfg(), 0..5, 1).unwrap();
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &recs, true).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRIAL_COLUMNS.join(","));
        let rows = read_trials_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), 5);
        for (row, r) in rows.iter().zip(&recs) {
            assert_eq!(row[0].parse::<usize>().unwrap(), r.trial_index);
            assert_eq!(row[1].parse::<u64>().unwrap(), r.seed);
            let loss: f64 = row[6].parse().unwrap();
            assert!(loss == r.loss_strongest_db || (loss.is_nan() && r.loss_strongest_db.is_nan()));
        }
    }

    #[test]
    fn untimed_csv_is_reproducible() {
        let write = || {
            let mut buf = Vec::new();
            write_trials_csv(&mut buf, &run_trials(&cfg(), 0..4, 1).unwrap(), false).unwrap();
            buf
        };
        assert_eq!(write(), write());
    }

    #[test]
    fn infinite_loss_is_written_as_inf() {
        let mut recs = run_trials(&cfg(), 0..1, 1).unwrap();
        recs[0].loss_strongest_db = f64::INFINITY;
        let mut buf = Vec::new();
        write_trials_csv(&mut buf, &recs, false).unwrap();
        let rows = read_trials_csv(&buf[..]).unwrap();
        assert_eq!(rows[0][6], "inf");
        assert_eq!(rows[0][6].parse::<f64>().unwrap(), f64::INFINITY);
    }

    #[test]
    fn summary_csv_columns() {
        let out = sweep_mcs(&cfg(), &[6, 8], 3, 1).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &out.result).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SUMMARY_COLUMNS.join(","));
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("6,3,"));
    }
}
