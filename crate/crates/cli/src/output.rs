//! JSON and CSV emission. Every number is rounded to nine significant digits, so output is
//! byte-identical for identical inputs.

use std::io::Write;

use serde_json::{Map, Value};

use crate::error::CliResult;

/// Significant digits in all numeric output.
pub const SIG_DIGITS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Round to [`SIG_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// JSON number rounded to nine significant digits; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(round_sig(x))
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn matrix(rows: &[Vec<f64>]) -> Value {
    Value::Array(rows.iter().map(|r| nums(r)).collect())
}

/// Text form of a number for CSV cells: plain decimals for moderate magnitudes, scientific
/// notation otherwise.
pub fn cell(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 || (1e-4..1e9).contains(&r.abs()) {
        format!("{r}")
    } else if r.is_finite() {
        format!("{r:e}")
    } else {
        String::new()
    }
}

fn value_cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Number(n) => n.as_f64().map(cell).unwrap_or_default(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        other => other.to_string(),
    }
}

/// Write one JSON object on a single line.
pub fn write_json(out: &mut impl Write, value: &Value) -> CliResult<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Flatten nested objects into `parent.child` columns; arrays become `name[i]` columns.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        other => out.push((prefix.to_string(), value_cell(other))),
    }
}

/// Header row plus one data row from a JSON object.
pub fn write_csv_object(out: &mut impl Write, value: &Value) -> CliResult<()> {
    let mut cells = Vec::new();
    flatten("", value, &mut cells);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(cells.iter().map(|(k, _)| k.as_str()))?;
    w.write_record(cells.iter().map(|(_, v)| v.as_str()))?;
    w.flush()?;
    Ok(())
}

/// Header row plus one row per record; all records must flatten to the same columns.
pub fn write_csv_rows(out: &mut impl Write, records: &[Map<String, Value>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    for (i, r) in records.iter().enumerate() {
        let mut cells = Vec::new();
        flatten("", &Value::Object(r.clone()), &mut cells);
        if i == 0 {
            w.write_record(cells.iter().map(|(k, _)| k.as_str()))?;
        }
        w.write_record(cells.iter().map(|(_, v)| v.as_str()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit(out: &mut impl Write, format: Format, value: &Value) -> CliResult<()> {
    match format {
        Format::Json => write_json(out, value),
        Format::Csv => write_csv_object(out, value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(round_sig(1.2214027581601699), 1.22140276);
        assert_eq!(num(0.2f64.exp()).to_string(), "1.22140276");
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(cell(1.5e-7), "1.5e-7");
        assert_eq!(cell(2.75), "2.75");
        assert_eq!(cell(0.0), "0");
    }

    #[test]
    fn csv_quotes_and_flattens() {
        let v = serde_json::json!({"a": 1.0, "b": {"c": [1, 2]}, "d": "x,y"});
        let mut buf = Vec::new();
        write_csv_object(&mut buf, &v).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "a,b.c[0],b.c[1],d\n1,1,2,\"x,y\"\n");
    }
}
