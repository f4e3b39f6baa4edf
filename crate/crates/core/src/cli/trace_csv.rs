//! Plot-ready CSV traces with full-precision floats.
//!
//! Every file has a one-line header. Floats are written with 17 significant
//! digits, so reading a file back reproduces the written values exactly.
//! Optional columns (`error`, `dist`) are left empty when absent.

use std::io::{Read, Write};

use crate::dynamics::{TrajectorySample, TrajectoryTrace};
use crate::error::{IqvipError, Result};
use crate::solvers::{IterRecord, IterTrace};
use crate::traffic::TollRun;

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn indexed(prefix: &str, dim: usize) -> impl Iterator<Item = String> + '_ {
    (0..dim).map(move |i| format!("{prefix}{i}"))
}

/// Columns `n, x0..x{d-1}, residual, error`.
pub fn write_iter_trace<W: Write>(out: W, trace: &IterTrace) -> Result<()> {
    let dim = trace.records.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    header.extend(indexed("x", dim));
    header.extend(["residual".to_string(), "error".to_string()]);
    w.write_record(&header)?;
    for r in &trace.records {
        let mut row = vec![r.n.to_string()];
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(r.residual));
        row.push(fmt_opt(r.error));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the records written by [`write_iter_trace`].
pub fn read_iter_trace<R: Read>(input: R) -> Result<Vec<IterRecord>> {
    let (header, rows) = read_all(input)?;
    let dim = count_prefixed(&header, "x");
    expect_header(&header, &["n"], &[("x", dim)], &["residual", "error"])?;
    rows.iter()
        .enumerate()
        .map(|(line, row)| {
            let mut cols = Columns::new(row, line + 2);
            Ok(IterRecord {
                n: cols.usize("n")?,
                x: cols.vec("x", dim)?,
                residual: cols.f64("residual")?,
                error: cols.opt_f64("error")?,
            })
        })
        .collect()
}

/// Columns `t, x*, v*, residual, dist`; `residuals[k]` is `‖B(x)‖` at sample `k`.
pub fn write_trajectory<W: Write>(out: W, trace: &TrajectoryTrace, residuals: &[f64]) -> Result<()> {
    if residuals.len() != trace.len() {
        return Err(IqvipError::DimensionMismatch { expected: trace.len(), got: residuals.len() });
    }
    let dim = trace.samples.first().map_or(0, |s| s.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", dim));
    header.extend(indexed("v", dim));
    header.extend(["residual".to_string(), "dist".to_string()]);
    w.write_record(&header)?;
    for (s, &res) in trace.samples.iter().zip(residuals) {
        let mut row = vec![fmt_f64(s.t)];
        row.extend(s.x.iter().map(|&v| fmt_f64(v)));
        row.extend(s.v.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(res));
        row.push(fmt_opt(s.dist));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory file back into the trace and its residual column.
pub fn read_trajectory<R: Read>(input: R) -> Result<(TrajectoryTrace, Vec<f64>)> {
    let (header, rows) = read_all(input)?;
    let dim = count_prefixed(&header, "x");
    expect_header(&header, &["t"], &[("x", dim), ("v", dim)], &["residual", "dist"])?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut residuals = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        let mut cols = Columns::new(row, line + 2);
        let t = cols.f64("t")?;
        let x = cols.vec("x", dim)?;
        let v = cols.vec("v", dim)?;
        residuals.push(cols.f64("residual")?);
        let dist = cols.opt_f64("dist")?;
        samples.push(TrajectorySample { t, x, v, dist, half_sq: dist.map(|d| 0.5 * d * d) });
    }
    Ok((TrajectoryTrace { samples }, residuals))
}

/// Columns `n, toll*, flow*, residual`.
pub fn write_toll_run<W: Write>(out: W, run: &TollRun) -> Result<()> {
    let dim = run.trace.records.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string()];
    header.extend(indexed("toll", dim));
    header.extend(indexed("flow", dim));
    header.push("residual".to_string());
    w.write_record(&header)?;
    for (r, flows) in run.trace.records.iter().zip(&run.flows) {
        let mut row = vec![r.n.to_string()];
        row.extend(r.x.iter().map(|&v| fmt_f64(v)));
        row.extend(flows.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(r.residual));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a toll file back as `(records, flows)`; record `x` holds the tolls.
pub fn read_toll_run<R: Read>(input: R) -> Result<(Vec<IterRecord>, Vec<Vec<f64>>)> {
    let (header, rows) = read_all(input)?;
    let dim = count_prefixed(&header, "toll");
    expect_header(&header, &["n"], &[("toll", dim), ("flow", dim)], &["residual"])?;
    let mut records = Vec::with_capacity(rows.len());
    let mut flows = Vec::with_capacity(rows.len());
    for (line, row) in rows.iter().enumerate() {
        let mut cols = Columns::new(row, line + 2);
        let n = cols.usize("n")?;
        let x = cols.vec("toll", dim)?;
        flows.push(cols.vec("flow", dim)?);
        records.push(IterRecord { n, x, residual: cols.f64("residual")?, error: None });
    }
    Ok((records, flows))
}

fn read_all<R: Read>(input: R) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, rows))
}

fn count_prefixed(header: &[String], prefix: &str) -> usize {
    header
        .iter()
        .filter(|h| h.strip_prefix(prefix).is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())))
        .count()
}

fn expect_header(
    header: &[String],
    lead: &[&str],
    groups: &[(&str, usize)],
    tail: &[&str],
) -> Result<()> {
    let mut want: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    for (prefix, dim) in groups {
        want.extend(indexed(prefix, *dim));
    }
    want.extend(tail.iter().map(|s| s.to_string()));
    if header != want.as_slice() {
        return Err(IqvipError::InvalidArgument(format!(
            "unexpected CSV header `{}`, wanted `{}`",
            header.join(","),
            want.join(",")
        )));
    }
    Ok(())
}

struct Columns<'a> {
    row: &'a csv::StringRecord,
    line: usize,
    next: usize,
}

impl<'a> Columns<'a> {
    fn new(row: &'a csv::StringRecord, line: usize) -> Self {
        Self { row, line, next: 0 }
    }

    fn raw(&mut self, name: &str) -> Result<&'a str> {
        let cell = self.row.get(self.next).ok_or_else(|| {
            IqvipError::InvalidArgument(format!("line {}: missing column `{name}`", self.line))
        })?;
        self.next += 1;
        Ok(cell)
    }

    fn f64(&mut self, name: &str) -> Result<f64> {
        let line = self.line;
        let cell = self.raw(name)?;
        cell.parse().map_err(|_| {
            IqvipError::InvalidArgument(format!("line {line}: column `{name}` is not a number: `{cell}`"))
        })
    }

    fn opt_f64(&mut self, name: &str) -> Result<Option<f64>> {
        let line = self.line;
        let cell = self.raw(name)?;
        if cell.is_empty() {
            return Ok(None);
        }
        cell.parse().map(Some).map_err(|_| {
            IqvipError::InvalidArgument(format!("line {line}: column `{name}` is not a number: `{cell}`"))
        })
    }

    fn usize(&mut self, name: &str) -> Result<usize> {
        let line = self.line;
        let cell = self.raw(name)?;
        cell.parse().map_err(|_| {
            IqvipError::InvalidArgument(format!("line {line}: column `{name}` is not an index: `{cell}`"))
        })
    }

    fn vec(&mut self, prefix: &str, dim: usize) -> Result<Vec<f64>> {
        (0..dim).map(|i| self.f64(&format!("{prefix}{i}"))).collect()
    }
}
