//! Machine-readable outputs and their schemas.
//!
//! Every writer here has a matching schema; the CLI re-reads what it wrote
//! and validates it before exiting.

use std::io::Write;

use pyramid_oram::AccessRecord;
use serde::Serialize;
use serde_json::Value;

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    UInt,
    Int,
    Bool,
    Float,
    Str,
    Object,
    Array,
    /// The kind, or null (or an empty CSV cell).
    Nullable(&'static Kind),
}

pub type Schema = &'static [(&'static str, Kind)];

pub const BENCH_COLUMNS: Schema = &[
    ("op_index", Kind::UInt),
    ("found", Kind::Bool),
    ("rebuilt_level", Kind::Int),
    ("online_buckets", Kind::UInt),
    ("total_buckets", Kind::UInt),
    ("wall_ns", Kind::UInt),
];

pub const CDF_COLUMNS: Schema =
    &[("total_buckets", Kind::UInt), ("count", Kind::UInt), ("cumulative_fraction", Kind::Float)];

pub const BOUND_REPORT: Schema = &[
    ("params", Kind::Object),
    ("bound", Kind::Float),
    ("mc_mean", Kind::Nullable(&Kind::Float)),
    ("mc_stderr", Kind::Nullable(&Kind::Float)),
    ("trials", Kind::UInt),
    ("verdict", Kind::Str),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BenchRow {
    pub op_index: u64,
    pub found: bool,
    pub rebuilt_level: i32,
    pub online_buckets: u64,
    pub total_buckets: u64,
    pub wall_ns: u64,
}

impl BenchRow {
    pub fn new(r: &AccessRecord, wall_ns: u64) -> Self {
        BenchRow {
            op_index: r.op_index,
            found: r.found,
            rebuilt_level: r.rebuilt_level,
            online_buckets: r.online,
            total_buckets: r.total,
            wall_ns,
        }
    }
}

fn header(schema: Schema) -> Vec<&'static str> {
    schema.iter().map(|(name, _)| *name).collect()
}

/// Header line always, even with no rows.
pub fn write_csv<T: Serialize>(out: impl Write, schema: Schema, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header(schema))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CdfRow {
    pub total_buckets: u64,
    pub count: u64,
    pub cumulative_fraction: f64,
}

/// Empirical distribution of per-access total cost.
pub fn cdf(rows: &[BenchRow]) -> Vec<CdfRow> {
    let mut costs: Vec<u64> = rows.iter().map(|r| r.total_buckets).collect();
    costs.sort_unstable();
    let n = costs.len() as f64;
    let mut out: Vec<CdfRow> = Vec::new();
    for (i, &c) in costs.iter().enumerate() {
        match out.last_mut() {
            Some(last) if last.total_buckets == c => last.count += 1,
            _ => out.push(CdfRow { total_buckets: c, count: 1, cumulative_fraction: 0.0 }),
        }
        out.last_mut().unwrap().cumulative_fraction = (i + 1) as f64 / n;
    }
    out
}

/// Fraction of accesses costing at most `x`.
pub fn cdf_at(cdf: &[CdfRow], x: u64) -> f64 {
    cdf.iter().take_while(|r| r.total_buckets <= x).last().map_or(0.0, |r| r.cumulative_fraction)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundJson {
    pub params: Value,
    pub bound: f64,
    pub bound_exact: Option<String>,
    pub mc_mean: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub trials: u64,
    pub verdict: String,
}

fn kind_matches_json(kind: Kind, v: &Value) -> bool {
    match kind {
        Kind::UInt => v.is_u64(),
        Kind::Int => v.is_i64() || v.is_u64(),
        Kind::Bool => v.is_boolean(),
        Kind::Float => v.is_number(),
        Kind::Str => v.is_string(),
        Kind::Object => v.is_object(),
        Kind::Array => v.is_array(),
        Kind::Nullable(k) => v.is_null() || kind_matches_json(*k, v),
    }
}

fn kind_matches_cell(kind: Kind, s: &str) -> bool {
    match kind {
        Kind::UInt => s.parse::<u64>().is_ok(),
        Kind::Int => s.parse::<i64>().is_ok(),
        Kind::Bool => s == "true" || s == "false",
        Kind::Float => s.parse::<f64>().is_ok(),
        Kind::Str => true,
        Kind::Object | Kind::Array => false,
        Kind::Nullable(k) => s.is_empty() || kind_matches_cell(*k, s),
    }
}

/// Checks that `v` is an object holding every schema field with its kind.
pub fn validate_json(v: &Value, schema: Schema) -> Result<()> {
    let obj = v.as_object().ok_or_else(|| LabError::Schema("expected a JSON object".into()))?;
    for (name, kind) in schema {
        let field = obj.get(*name).ok_or_else(|| LabError::Schema(format!("missing field `{name}`")))?;
        if !kind_matches_json(*kind, field) {
            return Err(LabError::Schema(format!("field `{name}` should be {kind:?}, got {field}")));
        }
    }
    Ok(())
}

/// Checks the header and every cell of a CSV document.
pub fn validate_csv(text: &str, schema: Schema) -> Result<usize> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if got != header(schema) {
        return Err(LabError::Schema(format!("header {got:?}, expected {:?}", header(schema))));
    }
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for ((name, kind), cell) in schema.iter().zip(rec.iter()) {
            if !kind_matches_cell(*kind, cell) {
                return Err(LabError::Schema(format!("row {}: `{name}` = {cell:?} is not {kind:?}", i + 1)));
            }
        }
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: u64, total: u64) -> BenchRow {
        BenchRow {
            op_index: i,
            found: i.is_multiple_of(2),
            rebuilt_level: -1,
            online_buckets: 5,
            total_buckets: total,
            wall_ns: 0,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv::<BenchRow>(&mut buf, BENCH_COLUMNS, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "op_index,found,rebuilt_level,online_buckets,total_buckets,wall_ns\n");
        assert_eq!(validate_csv(&text, BENCH_COLUMNS).unwrap(), 0);
    }

    #[test]
    fn bench_csv_validates() {
        let mut buf = Vec::new();
        write_csv(&mut buf, BENCH_COLUMNS, &[row(0, 5), row(1, 90)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(validate_csv(&text, BENCH_COLUMNS).unwrap(), 2);
        assert!(validate_csv(&text.replace("true", "yes"), BENCH_COLUMNS).is_err());
        assert!(validate_csv(&text, CDF_COLUMNS).is_err());
    }

    #[test]
    fn cdf_steps() {
        let rows = [row(0, 5), row(1, 5), row(2, 9), row(3, 5)];
        let c = cdf(&rows);
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].total_buckets, c[0].count, c[0].cumulative_fraction), (5, 3, 0.75));
        assert_eq!(c[1].cumulative_fraction, 1.0);
        assert_eq!(cdf_at(&c, 4), 0.0);
        assert_eq!(cdf_at(&c, 8), 0.75);
        assert_eq!(cdf_at(&c, 100), 1.0);
        assert!(cdf(&[]).is_empty());
    }

    #[test]
    fn json_schema() {
        let good = BoundJson {
            params: serde_json::json!({"m": 1, "n": 2, "c": 3}),
            bound: 0.5,
            bound_exact: Some("1/2".into()),
            mc_mean: None,
            mc_stderr: None,
            trials: 0,
            verdict: "n/a".into(),
        };
        let v = serde_json::to_value(&good).unwrap();
        validate_json(&v, BOUND_REPORT).unwrap();
        let mut bad = v.clone();
        bad.as_object_mut().unwrap().remove("verdict");
        assert!(validate_json(&bad, BOUND_REPORT).is_err());
        let mut bad = v;
        bad["trials"] = serde_json::json!(-1);
        assert!(validate_json(&bad, BOUND_REPORT).is_err());
    }
}
