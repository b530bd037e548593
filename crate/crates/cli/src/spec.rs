//! Model specifications: `{"zoo": name, "config": {...}, "point": [..], "partition": d_I}`
//! read from a JSON file, with command-line flags taking precedence.
//!
//! Complex matrices are lists of rows; an entry is either a number or an `[re, im]` pair.

use std::fs;

use qnuis_core::linalg::{c, CMat, RMat};
use qnuis_core::model::{zoo_build, ZooConfig};
use qnuis_core::{Partition, StateModel, WeightMatrix};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{input, CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub zoo: Option<String>,
    #[serde(default)]
    pub config: ConfigSpec,
    pub point: Option<Vec<f64>>,
    /// Number of parameters of interest.
    pub partition: Option<usize>,
    /// `"identity"` or a list of rows.
    pub weight: Option<Value>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub d_h: Option<usize>,
    pub basis: Option<Vec<Value>>,
    pub generators: Option<Vec<Value>>,
    pub reference_state: Option<Value>,
}

impl ModelSpec {
    pub fn from_file(path: &str) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn build(&self) -> CliResult<StateModel> {
        let name = self
            .zoo
            .as_deref()
            .ok_or_else(|| input("no model given (use --model or a spec file with \"zoo\")"))?;
        Ok(zoo_build(name, &self.config.to_zoo()?)?)
    }

    pub fn point(&self) -> CliResult<Vec<f64>> {
        self.point
            .clone()
            .ok_or_else(|| input("no parameter point given (use --point)"))
    }

    /// Partition with `d_interest` defaulting to all parameters.
    pub fn partition(&self, d: usize) -> CliResult<Partition> {
        match self.partition {
            Some(k) => Ok(Partition::new(k, d)?),
            None => Ok(Partition::full(d)),
        }
    }

    pub fn weight(&self, k: usize) -> CliResult<WeightMatrix> {
        match &self.weight {
            None => Ok(WeightMatrix::identity(k)),
            Some(Value::String(s)) => parse_weight(s, k),
            Some(v) => {
                let m = real_matrix(v)?;
                check_square(&m, k)?;
                Ok(WeightMatrix::new(m)?)
            }
        }
    }
}

impl ConfigSpec {
    fn to_zoo(&self) -> CliResult<ZooConfig> {
        let list = |v: &Option<Vec<Value>>| -> CliResult<Option<Vec<CMat>>> {
            v.as_ref()
                .map(|ms| ms.iter().map(complex_matrix).collect())
                .transpose()
        };
        Ok(ZooConfig {
            d_h: self.d_h,
            basis: list(&self.basis)?,
            generators: list(&self.generators)?,
            reference_state: self
                .reference_state
                .as_ref()
                .map(complex_matrix)
                .transpose()?,
        })
    }
}

fn rows(v: &Value) -> CliResult<&Vec<Value>> {
    let rows = v
        .as_array()
        .ok_or_else(|| input("a matrix must be a list of rows"))?;
    let n = rows.len();
    if n == 0
        || rows
            .iter()
            .any(|r| r.as_array().map(|r| r.len()) != Some(n))
    {
        return Err(input("a matrix must be a non-empty square list of rows"));
    }
    Ok(rows)
}

fn complex_matrix(v: &Value) -> CliResult<CMat> {
    let rows = rows(v)?;
    let n = rows.len();
    let mut m = CMat::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.as_array().into_iter().flatten().enumerate() {
            m[(i, j)] = match e {
                Value::Number(x) => c(x.as_f64().unwrap_or(f64::NAN), 0.0),
                Value::Array(p) if p.len() == 2 => c(
                    p[0].as_f64()
                        .ok_or_else(|| input("non-numeric matrix entry"))?,
                    p[1].as_f64()
                        .ok_or_else(|| input("non-numeric matrix entry"))?,
                ),
                _ => return Err(input("matrix entries must be numbers or [re, im] pairs")),
            };
        }
    }
    Ok(m)
}

fn real_matrix(v: &Value) -> CliResult<RMat> {
    let rows = rows(v)?;
    let n = rows.len();
    let mut m = RMat::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.as_array().into_iter().flatten().enumerate() {
            m[(i, j)] = e
                .as_f64()
                .ok_or_else(|| input("weight entries must be numbers"))?;
        }
    }
    Ok(m)
}

fn check_square(m: &RMat, k: usize) -> CliResult<()> {
    if m.nrows() != k {
        return Err(input(format!(
            "weight is {}x{} but there are {k} parameters of interest",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `identity`, or rows separated by `;` with entries separated by `,`.
pub fn parse_weight(s: &str, k: usize) -> CliResult<WeightMatrix> {
    if s.trim() == "identity" {
        return Ok(WeightMatrix::identity(k));
    }
    let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<CliResult<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(input(format!("weight '{s}' is not square")));
    }
    let m = RMat::from_fn(n, n, |i, j| rows[i][j]);
    check_square(&m, k)?;
    Ok(WeightMatrix::new(m)?)
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| input(format!("'{t}' is not a number")))
        })
        .collect()
}

/// `start:stop:step`, inclusive of `stop` up to rounding; `stop < start` walks backwards
/// (the step is always given as a positive number).
pub fn parse_range(s: &str) -> CliResult<Vec<f64>> {
    let parts = s
        .split(':')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| input(format!("'{t}' is not a number")))
        })
        .collect::<CliResult<Vec<f64>>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(input(format!("grid '{s}' is not start:stop:step")));
    };
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(input(format!(
            "grid '{s}' needs finite ends and a positive step"
        )));
    }
    let count = ((stop - start).abs() / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(input(format!("grid '{s}' has too many points")));
    }
    let dir = if stop >= start { 1.0 } else { -1.0 };
    Ok((0..=count).map(|i| start + dir * step * i as f64).collect())
}

/// Points separated by `;`, coordinates by `,`.
pub fn parse_points(s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';').map(parse_list).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_include_the_end() {
        let g = parse_range("0.5:2.0:0.05").unwrap();
        assert_eq!(g.len(), 31);
        assert!((g[30] - 2.0).abs() < 1e-12);
        assert_eq!(parse_range("1:0:0.5").unwrap(), vec![1.0, 0.5, 0.0]);
        assert!(parse_range("1:2").is_err());
        assert!(parse_range("1:2:0").is_err());
    }

    #[test]
    fn weights_and_matrices() {
        let w = parse_weight("2,0;0,1", 2).unwrap();
        assert_eq!(w.matrix()[(0, 0)], 2.0);
        assert!(parse_weight("1,0;0", 2).is_err());
        assert!(parse_weight("identity", 3).is_ok());
        let m = complex_matrix(&serde_json::json!([[1, [0, 1]], [[0, -1], 1]])).unwrap();
        assert_eq!(m[(0, 1)], c(0.0, 1.0));
    }

    #[test]
    fn spec_files_reject_unknown_fields() {
        let ok: ModelSpec =
            serde_json::from_str(r#"{"zoo":"dice","point":[0.2,0.3],"partition":1}"#).unwrap();
        assert_eq!(ok.partition, Some(1));
        assert!(serde_json::from_str::<ModelSpec>(r#"{"zoo":"dice","pont":[1]}"#).is_err());
    }
}
