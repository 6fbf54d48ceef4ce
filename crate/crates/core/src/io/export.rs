use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contract::{IncentiveSurface, OptionSpreads, SpreadTable, ValueGrid};
use crate::error::{Error, Result};
use crate::market::{mm_optimal_spread, Side};
use crate::simulator::Trajectory;

/// 17 significant digits, enough to read back the exact same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// Output document of the `quantize` command, one per maturity bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikesReport {
    pub maturity_bucket: String,
    pub p: f64,
    pub epsilon: f64,
    pub n: usize,
    pub strikes: Vec<f64>,
    pub regret: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn expect_header(path: &Path, r: &mut csv::Reader<File>, want: &[&str]) -> Result<Vec<String>> {
    let got: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if got.len() < want.len() || got.iter().zip(want).any(|(g, w)| g != w) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {:?}", got.join(",")),
        });
    }
    Ok(got)
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("missing column {i}"),
    })?;
    raw.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("cannot parse {raw:?} in column {i}"),
    })
}

fn opt_field(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<Option<f64>> {
    if rec.get(i).is_some_and(str::is_empty) {
        Ok(None)
    } else {
        field(path, rec, i).map(Some)
    }
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t,Q,U_tilde`, one row per stored node.
pub fn write_value_grid(path: &Path, grid: &ValueGrid) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "Q", "U_tilde"])?;
    for (m, &t) in grid.times().iter().enumerate() {
        let ts = format_float(t);
        for (j, q) in grid.q_nodes().enumerate() {
            w.write_record([
                ts.as_str(),
                &format_float(q),
                &format_float(grid.value(m, j)),
            ])?;
        }
    }
    finish(path, w)
}

/// Reads a grid written by [`write_value_grid`]. The inventory step and
/// half-width are recovered from the `Q` column.
pub fn read_value_grid(path: &Path, q_bar: f64) -> Result<ValueGrid> {
    let mut r = reader(path)?;
    expect_header(path, &mut r, &["t", "Q", "U_tilde"])?;
    let mut times: Vec<f64> = Vec::new();
    let mut qs: Vec<f64> = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let t: f64 = field(path, &rec, 0)?;
        let q: f64 = field(path, &rec, 1)?;
        if times.last() != Some(&t) {
            times.push(t);
        }
        if times.len() == 1 {
            qs.push(q);
        }
        values.push(field::<f64>(path, &rec, 2)?);
    }
    let bad = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message,
    };
    if qs.len() < 3 || qs.len().is_multiple_of(2) {
        return Err(bad(format!("{} inventory nodes per slice", qs.len())));
    }
    let half_width = qs.len() / 2;
    let h_q = -qs[0] / half_width as f64;
    if qs
        .iter()
        .enumerate()
        .any(|(j, &q)| (q - (j as f64 - half_width as f64) * h_q).abs() > 1e-9 * h_q.max(1.0))
    {
        return Err(bad(
            "inventory nodes are not a symmetric uniform grid".into()
        ));
    }
    ValueGrid::from_parts(times, h_q, half_width, q_bar, values).map_err(|e| bad(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveRow {
    pub t: f64,
    pub q: f64,
    pub option_id: usize,
    pub side: Side,
    pub z_star: f64,
    pub spread: f64,
}

/// `t,Q,option_id,side,Z_star,spread` on stored slices spaced by about
/// `export_dt`; shut sides are skipped.
pub fn write_incentives(path: &Path, surface: &IncentiveSurface, export_dt: f64) -> Result<usize> {
    let grid = surface.grid();
    let times = grid.times();
    let mut w = writer(path)?;
    w.write_record(["t", "Q", "option_id", "side", "Z_star", "spread"])?;
    let mut rows = 0;
    let mut next = times[0];
    for (m, &t) in times.iter().enumerate() {
        let last = m + 1 == times.len();
        if t + 1e-9 < next && !last {
            continue;
        }
        next = t + export_dt;
        let ts = format_float(t);
        for (j, q) in grid.q_nodes().enumerate() {
            let qs = format_float(q);
            for k in 0..surface.specs().len() {
                for side in Side::ALL {
                    if let Some(z) = surface.incentive_at_node(m, j, k, side) {
                        let spread = mm_optimal_spread(z, surface.params());
                        w.write_record([
                            ts.as_str(),
                            &qs,
                            &k.to_string(),
                            side.as_str(),
                            &format_float(z),
                            &format_float(spread),
                        ])?;
                        rows += 1;
                    }
                }
            }
        }
    }
    finish(path, w)?;
    Ok(rows)
}

pub fn read_incentives(path: &Path) -> Result<Vec<IncentiveRow>> {
    let mut r = reader(path)?;
    expect_header(
        path,
        &mut r,
        &["t", "Q", "option_id", "side", "Z_star", "spread"],
    )?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(IncentiveRow {
                t: field(path, &rec, 0)?,
                q: field(path, &rec, 1)?,
                option_id: field(path, &rec, 2)?,
                side: field(path, &rec, 3)?,
                z_star: field(path, &rec, 4)?,
                spread: field(path, &rec, 5)?,
            })
        })
        .collect()
}

/// Wide spread table: `t,Q,ask_k,bid_k,total_k` for every option `k`; empty
/// cells where a side is shut.
pub fn write_spread_table(path: &Path, table: &SpreadTable) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string(), "Q".to_string()];
    for k in 0..table.options.len() {
        header.extend([format!("ask_{k}"), format!("bid_{k}"), format!("total_{k}")]);
    }
    w.write_record(&header)?;
    let ts = format_float(table.t);
    for (j, &q) in table.q.iter().enumerate() {
        let mut rec = vec![ts.clone(), format_float(q)];
        for o in &table.options {
            rec.push(opt_float(o.ask[j]));
            rec.push(opt_float(o.bid[j]));
            rec.push(opt_float(o.total(j)));
        }
        w.write_record(&rec)?;
    }
    finish(path, w)
}

pub fn read_spread_table(path: &Path) -> Result<SpreadTable> {
    let mut r = reader(path)?;
    let header = expect_header(path, &mut r, &["t", "Q"])?;
    let n_options = (header.len() - 2) / 3;
    if header.len() != 2 + 3 * n_options {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "spread columns must come in ask/bid/total triples".into(),
        });
    }
    let mut table = SpreadTable {
        t: 0.0,
        q: Vec::new(),
        options: vec![
            OptionSpreads {
                ask: Vec::new(),
                bid: Vec::new()
            };
            n_options
        ],
    };
    for rec in r.records() {
        let rec = rec?;
        table.t = field(path, &rec, 0)?;
        table.q.push(field(path, &rec, 1)?);
        for (k, o) in table.options.iter_mut().enumerate() {
            o.ask.push(opt_field(path, &rec, 2 + 3 * k)?);
            o.bid.push(opt_field(path, &rec, 3 + 3 * k)?);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub path: usize,
    pub t: f64,
    pub option_id: usize,
    pub side: Side,
    pub q_after: i64,
    pub agg_q_after: f64,
}

/// Event log `path,t,option_id,side,Q_after,aggQ_after` of the given paths.
pub fn write_events(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["path", "t", "option_id", "side", "Q_after", "aggQ_after"])?;
    for (i, tr) in trajectories.iter().enumerate() {
        for e in &tr.events {
            w.write_record([
                i.to_string(),
                format_float(e.t),
                e.option.to_string(),
                e.side.to_string(),
                e.inventory_after.to_string(),
                format_float(e.agg_q_after),
            ])?;
        }
    }
    finish(path, w)
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    let mut r = reader(path)?;
    expect_header(
        path,
        &mut r,
        &["path", "t", "option_id", "side", "Q_after", "aggQ_after"],
    )?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(EventRow {
                path: field(path, &rec, 0)?,
                t: field(path, &rec, 1)?,
                option_id: field(path, &rec, 2)?,
                side: field(path, &rec, 3)?,
                q_after: field(path, &rec, 4)?,
                agg_q_after: field(path, &rec, 5)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub t: f64,
    pub q: f64,
    pub u_fd: f64,
    pub u_mc: f64,
    pub stderr: f64,
}

pub fn write_probes(path: &Path, rows: &[ProbeRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "Q", "U_fd", "U_mc", "stderr", "z_score"])?;
    for r in rows {
        let z = if r.stderr > 0.0 {
            (r.u_fd - r.u_mc) / r.stderr
        } else {
            0.0
        };
        w.write_record([r.t, r.q, r.u_fd, r.u_mc, r.stderr, z].map(format_float))?;
    }
    finish(path, w)
}
