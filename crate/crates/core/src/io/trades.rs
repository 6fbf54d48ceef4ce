use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEADER: [&str; 3] = ["strike_pct", "maturity_days", "count"];

/// One row of a trade report: volume traded at a strike (percent of spot)
/// and maturity (days).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRow {
    pub strike_pct: f64,
    pub maturity_days: f64,
    pub count: u64,
}

/// Maturity buckets cut at increasing day thresholds. Thresholds
/// `[30, 90, 180]` give `le30d`, `30d-90d`, `90d-180d` and `gt180d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityBuckets {
    thresholds: Vec<f64>,
}

impl Default for MaturityBuckets {
    fn default() -> Self {
        MaturityBuckets {
            thresholds: vec![30.0, 90.0, 180.0],
        }
    }
}

impl MaturityBuckets {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::invalid(
                "maturity thresholds must be positive and finite",
            ));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "maturity thresholds must be strictly increasing",
            ));
        }
        Ok(MaturityBuckets { thresholds })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bucket index: the first threshold with `days <= threshold`.
    pub fn index(&self, days: f64) -> usize {
        self.thresholds.partition_point(|&t| t < days)
    }

    pub fn label(&self, index: usize) -> String {
        let th = &self.thresholds;
        let d = |x: f64| format!("{x}d");
        if th.is_empty() {
            "all".to_string()
        } else if index == 0 {
            format!("le{}", d(th[0]))
        } else if index >= th.len() {
            format!("gt{}", d(th[th.len() - 1]))
        } else {
            format!("{}-{}", d(th[index - 1]), d(th[index]))
        }
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Rows grouped by bucket as `(strike, count)` pairs, in bucket order.
    pub fn group(&self, rows: &[TradeRow]) -> Vec<(String, Vec<(f64, i64)>)> {
        let mut out: Vec<(String, Vec<(f64, i64)>)> =
            self.labels().into_iter().map(|l| (l, Vec::new())).collect();
        for r in rows {
            out[self.index(r.maturity_days)]
                .1
                .push((r.strike_pct, r.count as i64));
        }
        out
    }
}

/// Parses a trade report. The header must be exactly
/// `strike_pct,maturity_days,count`; every error carries its line number.
pub fn parse_trade_report(text: &str, path: &Path) -> Result<Vec<TradeRow>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(
            1,
            format!(
                "unknown header {:?}, expected {}",
                header.iter().collect::<Vec<_>>().join(","),
                HEADER.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(
                line,
                format!("expected 3 fields, got {}", record.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = record[i].parse().map_err(|_| {
                parse_err(
                    line,
                    format!("{}: not a number: {:?}", HEADER[i], &record[i]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{}: not finite", HEADER[i])));
            }
            Ok(v)
        };
        let strike_pct = num(0)?;
        let maturity_days = num(1)?;
        let count: i64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("count: not an integer: {:?}", &record[2])))?;
        if count < 0 {
            return Err(parse_err(line, format!("invalid count {count}")));
        }
        if strike_pct < 0.0 {
            return Err(parse_err(
                line,
                format!("strike_pct {strike_pct} must be >= 0"),
            ));
        }
        if maturity_days < 0.0 {
            return Err(parse_err(
                line,
                format!("maturity_days {maturity_days} must be >= 0"),
            ));
        }
        rows.push(TradeRow {
            strike_pct,
            maturity_days,
            count: count as u64,
        });
    }
    Ok(rows)
}

pub fn read_trade_report(path: &Path) -> Result<Vec<TradeRow>> {
    parse_trade_report(&super::read_to_string(path)?, path)
}
