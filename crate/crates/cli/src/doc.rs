//! JSON documents: plants, FIR matrices, patterns, parameter sets and
//! factorizations in, result documents out.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use parametrix::coprime::DoublyCoprimeFactors;
use parametrix::lti::{Controller, Fir, PlantBlocks, StateSpacePlant};
use parametrix::param_maps::{IopQuadruple, SlpQuadruple, YoulaParam};
use parametrix::synthesis::SparsityPattern;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::exit::CliError;

pub type Mat = DMatrix<f64>;

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn matrix_from_value(v: &Value, what: &str) -> Result<Mat, CliError> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())
        .map_err(|e| CliError::usage(format!("{what}: expected a nested numeric array ({e})")))?;
    matrix_from_rows(&rows, what)
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Mat, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::usage(format!("{what}: rows have different lengths")));
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_value(m: &Mat) -> Value {
    Value::Array((0..m.nrows()).map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect())).collect())
}

pub fn fir_to_value(f: &Fir) -> Value {
    json!({ "coeffs": f.coeffs().iter().map(matrix_to_value).collect::<Vec<_>>() })
}

pub fn fir_from_value(v: &Value, what: &str) -> Result<Fir, CliError> {
    let coeffs = v
        .get("coeffs")
        .and_then(Value::as_array)
        .ok_or_else(|| CliError::usage(format!("{what}: expected {{\"coeffs\": [matrix, ...]}}")))?;
    let mats = coeffs
        .iter()
        .enumerate()
        .map(|(k, c)| matrix_from_value(c, &format!("{what}[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    Fir::new(mats).map_err(|e| CliError::usage(format!("{what}: {e}")))
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A", default)]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B1", default)]
    pub b1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B2", default)]
    pub b2: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C1", default)]
    pub c1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C2", default)]
    pub c2: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D11", default)]
    pub d11: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D12", default)]
    pub d12: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D21", default)]
    pub d21: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D22", default)]
    pub d22: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub graph: Option<Vec<Vec<f64>>>,
}

impl PlantDocument {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        serde_json::from_value(read_json(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    fn required(&self, m: &Option<Vec<Vec<f64>>>, name: &str) -> Result<Mat, CliError> {
        match m {
            Some(rows) => matrix_from_rows(rows, name),
            None => Err(CliError::usage(format!("plant is missing {name}"))),
        }
    }

    fn optional(m: &Option<Vec<Vec<f64>>>, name: &str, rows: usize, cols: usize) -> Result<Mat, CliError> {
        match m {
            Some(r) => matrix_from_rows(r, name),
            None => Ok(Mat::zeros(rows, cols)),
        }
    }

    pub fn plant(&self) -> Result<StateSpacePlant, CliError> {
        let a = self.required(&self.a, "A")?;
        let b1 = self.required(&self.b1, "B1")?;
        let b2 = self.required(&self.b2, "B2")?;
        let c1 = self.required(&self.c1, "C1")?;
        let c2 = self.required(&self.c2, "C2")?;
        let (nw, nu, nz, ny) = (b1.ncols(), b2.ncols(), c1.nrows(), c2.nrows());
        if let Some(rows) = &self.d22 {
            if rows.iter().flatten().any(|&x| x != 0.0) {
                return Err(CliError::precondition("D22 must be zero (strictly proper P22)"));
            }
        }
        let blocks = PlantBlocks::new(a, b1, b2, c1, c2)
            .with_d11(Self::optional(&self.d11, "D11", nz, nw)?)
            .with_d12(Self::optional(&self.d12, "D12", nz, nu)?)
            .with_d21(Self::optional(&self.d21, "D21", ny, nw)?);
        Ok(StateSpacePlant::new(blocks)?)
    }

    pub fn graph(&self) -> Result<Option<Mat>, CliError> {
        self.graph.as_ref().map(|g| matrix_from_rows(g, "graph")).transpose()
    }
}

/// Either a bare nested array or `{"pattern": [[...]]}`; entries are 0/1
/// (or booleans).
pub fn read_pattern(path: &Path) -> Result<SparsityPattern, CliError> {
    let v = read_json(path)?;
    let v = v.get("pattern").cloned().unwrap_or(v);
    let rows = v.as_array().ok_or_else(|| CliError::usage("pattern: expected a nested array"))?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row.as_array().ok_or_else(|| CliError::usage("pattern: expected a nested array"))?;
        let mut r = Vec::with_capacity(row.len());
        for x in row {
            let bit = match x {
                Value::Bool(b) => *b,
                Value::Number(n) if n.as_f64() == Some(0.0) => false,
                Value::Number(n) if n.as_f64() == Some(1.0) => true,
                _ => return Err(CliError::usage(format!("pattern: entries must be 0 or 1, got {x}"))),
            };
            r.push(u8::from(bit));
        }
        out.push(r);
    }
    Ok(SparsityPattern::from_rows(&out)?)
}

pub fn pattern_to_value(p: &SparsityPattern) -> Value {
    json!(p.to_rows())
}

/// Parameter files hold the named FIRs at top level or under `params`
/// (so a synthesis result can be fed back in).
fn param_object(v: &Value) -> &Value {
    v.get("params").unwrap_or(v)
}

fn named_fir(obj: &Value, name: &str) -> Result<Fir, CliError> {
    let v = obj.get(name).ok_or_else(|| CliError::usage(format!("parameters are missing {name}")))?;
    fir_from_value(v, name)
}

pub fn read_youla(path: &Path) -> Result<YoulaParam, CliError> {
    let v = read_json(path)?;
    Ok(YoulaParam::new(named_fir(param_object(&v), "Q")?))
}

pub fn read_iop(path: &Path) -> Result<IopQuadruple, CliError> {
    let v = read_json(path)?;
    let o = param_object(&v);
    Ok(IopQuadruple { y: named_fir(o, "Y")?, u: named_fir(o, "U")?, w: named_fir(o, "W")?, z: named_fir(o, "Z")? })
}

pub fn read_slp(path: &Path) -> Result<SlpQuadruple, CliError> {
    let v = read_json(path)?;
    let o = param_object(&v);
    Ok(SlpQuadruple { r: named_fir(o, "R")?, m: named_fir(o, "M")?, n: named_fir(o, "N")?, l: named_fir(o, "L")? })
}

pub fn youla_value(q: &YoulaParam) -> Value {
    json!({ "Q": fir_to_value(&q.q) })
}

pub fn iop_value(x: &IopQuadruple) -> Value {
    Value::Object(x.named().iter().map(|(n, f)| (n.to_string(), fir_to_value(f))).collect())
}

pub fn slp_value(s: &SlpQuadruple) -> Value {
    Value::Object(s.named().iter().map(|(n, f)| (n.to_string(), fir_to_value(f))).collect())
}

/// Factor files use the names `Ul, Vl, Nl, Ml, Ur, Vr, Nr, Mr`, at top
/// level or under `factors`.
pub fn read_factors(path: &Path) -> Result<DoublyCoprimeFactors, CliError> {
    let v = read_json(path)?;
    let o = v.get("factors").unwrap_or(&v);
    Ok(DoublyCoprimeFactors {
        ul: named_fir(o, "Ul")?,
        vl: named_fir(o, "Vl")?,
        nl: named_fir(o, "Nl")?,
        ml: named_fir(o, "Ml")?,
        ur: named_fir(o, "Ur")?,
        vr: named_fir(o, "Vr")?,
        nr: named_fir(o, "Nr")?,
        mr: named_fir(o, "Mr")?,
    })
}

pub fn factors_value(f: &DoublyCoprimeFactors) -> Value {
    Value::Object(f.named().iter().map(|(n, fir)| (n.to_string(), fir_to_value(fir))).collect())
}

pub fn controller_value(k: &Controller) -> Value {
    json!({
        "Ak": matrix_to_value(&k.ak),
        "Bk": matrix_to_value(&k.bk),
        "Ck": matrix_to_value(&k.ck),
        "Dk": matrix_to_value(&k.dk),
    })
}

/// The document every verb prints: the command echo, named FIR outputs,
/// scalar metrics, sub-reports and the overall verdict. Keys are sorted,
/// so equal inputs give byte-identical output.
#[derive(Debug, Default)]
pub struct ResultDocument {
    pub command: BTreeMap<String, Value>,
    pub outputs: Map<String, Value>,
    pub metrics: Map<String, Value>,
    pub reports: Map<String, Value>,
    pub pass: bool,
    /// Exit code when `pass` is false.
    pub fail_code: i32,
}

impl ResultDocument {
    pub fn new(verb: &str) -> Self {
        let mut command = BTreeMap::new();
        command.insert("verb".to_string(), json!(verb));
        Self { command, pass: true, fail_code: crate::exit::VERIFICATION, ..Default::default() }
    }

    pub fn arg(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.command.insert(key.to_string(), json!(v));
        self
    }

    pub fn output(&mut self, key: &str, v: Value) -> &mut Self {
        self.outputs.insert(key.to_string(), v);
        self
    }

    pub fn metric(&mut self, key: &str, v: impl Serialize) -> &mut Self {
        self.metrics.insert(key.to_string(), json!(v));
        self
    }

    pub fn report(&mut self, key: &str, v: Value) -> &mut Self {
        self.reports.insert(key.to_string(), v);
        self
    }

    pub fn to_value(&self) -> Value {
        json!({
            "command": self.command,
            "outputs": self.outputs,
            "metrics": self.metrics,
            "reports": self.reports,
            "pass": self.pass,
        })
    }
}
