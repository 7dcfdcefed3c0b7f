//! Per-iteration experiment records and their CSV form.
//!
//! The CSV schema is fixed: `iteration,metric,alpha,nstar,v_norm,a_norm`
//! followed by one `theta_i` column per parameter component. Reals are
//! written with 17 significant digits so a parse of the file reproduces the
//! in-memory values bit for bit, and lines end with LF.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

/// One experiment row: the primary metric is the cost for descent
/// experiments and the target distance for inverse kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub metric: f64,
    pub alpha: f64,
    pub nstar: f64,
    pub v_norm: f64,
    pub a_norm: f64,
    pub theta: Vec<f64>,
}

/// Formats a real with full round-trip precision.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `trace` to `path`. An empty trace produces a header-only file with
/// the six fixed columns.
pub fn emit_csv(trace: &[TraceRecord], path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let dim = trace.first().map_or(0, |r| r.theta.len());
    write!(w, "iteration,metric,alpha,nstar,v_norm,a_norm")?;
    for i in 0..dim {
        write!(w, ",theta_{i}")?;
    }
    writeln!(w)?;
    for rec in trace {
        write!(
            w,
            "{},{},{},{},{},{}",
            rec.iteration,
            fmt_real(rec.metric),
            fmt_real(rec.alpha),
            fmt_real(rec.nstar),
            fmt_real(rec.v_norm),
            fmt_real(rec.a_norm),
        )?;
        for t in &rec.theta {
            write!(w, ",{}", fmt_real(*t))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Parses a file produced by [`emit_csv`].
pub fn parse_csv(path: &Path) -> io::Result<Vec<TraceRecord>> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| bad("empty file".into()))?;
    let columns = header.split(',').count();
    if columns < 6 {
        return Err(bad(format!("expected at least 6 columns, got {columns}")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(bad(format!(
                "line {}: expected {columns} fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let real = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| bad(format!("line {}: {e} in {s:?}", lineno + 2)))
        };
        out.push(TraceRecord {
            iteration: fields[0]
                .parse()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?,
            metric: real(fields[1])?,
            alpha: real(fields[2])?,
            nstar: real(fields[3])?,
            v_norm: real(fields[4])?,
            a_norm: real(fields[5])?,
            theta: fields[6..]
                .iter()
                .map(|s| real(s))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}
