//! JSON instance and guess files.
//!
//! Matrices are lists of rows. Bounds are `[[lo...], [hi...]]` and accept
//! the strings `"inf"` and `"-inf"`, which are also what infinite values are
//! written as. Absent bounds are unbounded, absent costs are zero, and an
//! absent `mixed` list is empty.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::bnb::GuessSet;
use crate::model::{validate, BoxSet, ConstraintSet, LinearDynamics, MiocpInstance, MixedRow, StageCost, TerminalCost};
use crate::relaxation::{PartialAssignment, StageAssignment};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Read { path: String, source: std::io::Error },
    #[error("field `{field}` (line {line}, column {column}): {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {message}")]
    Shape { field: String, message: String },
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("guesses: {0}")]
    Guess(String),
}

/// An instance together with the guesses stored next to it, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance: MiocpInstance,
    pub guesses: Option<GuessSet>,
}

/// A real that may be written as `"inf"` or `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            v => s.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RealVisitor;
        impl Visitor<'_> for RealVisitor {
            type Value = Real;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" | "+infinity" => Ok(Real(f64::INFINITY)),
                    "-inf" | "-infinity" => Ok(Real(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(RealVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostDoc {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q_mat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    r_mat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    c: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalDoc {
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    q_mat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixedDoc {
    gx: Vec<f64>,
    gu: Vec<f64>,
    gv: Vec<f64>,
    lo: Real,
    hi: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuessDoc {
    #[serde(rename = "V")]
    v: Vec<Option<Vec<i64>>>,
    w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    b1: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    b2: Vec<Vec<f64>>,
    /// Affine offset of the dynamics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(rename = "N")]
    n: usize,
    x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage_cost: Option<CostDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stage_costs: Option<Vec<CostDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal_cost: Option<TerminalDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x_bounds: Option<Vec<Vec<Real>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u_bounds: Option<Vec<Vec<Real>>>,
    v_sets: Vec<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mixed: Vec<MixedDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x0_set: Option<Vec<Vec<Real>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guesses: Option<Vec<GuessDoc>>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn shape_err(field: &str, message: impl Into<String>) -> IoError {
    IoError::Shape {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Row list to matrix with `nrows` rows; every row needs `ncols` entries.
fn matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, IoError> {
    if rows.len() != nrows {
        return Err(shape_err(field, format!("{} rows, expected {nrows}", rows.len())));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(shape_err(
            field,
            format!("row {i} has {} entries, expected {ncols}", r.len()),
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(field: &str, v: &[f64], n: usize) -> Result<DVector<f64>, IoError> {
    if v.len() != n {
        return Err(shape_err(field, format!("{} entries, expected {n}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn bounds(field: &str, b: &Option<Vec<Vec<Real>>>, n: usize) -> Result<BoxSet, IoError> {
    let Some(b) = b else {
        return Ok(BoxSet::unbounded(n));
    };
    if b.len() != 2 {
        return Err(shape_err(field, "expected [[lo...], [hi...]]"));
    }
    let side = |k: usize, name: &str| {
        let vals: Vec<f64> = b[k].iter().map(|r| r.0).collect();
        vector(&format!("{field}.{name}"), &vals, n)
    };
    Ok(BoxSet {
        lo: side(0, "lo")?,
        hi: side(1, "hi")?,
    })
}

fn stage_cost(field: &str, doc: &CostDoc, nx: usize, nw: usize) -> Result<StageCost, IoError> {
    let q_mat = match &doc.q_mat {
        Some(m) => matrix(&format!("{field}.Q"), m, nx, nx)?,
        None => DMatrix::zeros(nx, nx),
    };
    let r_mat = match &doc.r_mat {
        Some(m) => matrix(&format!("{field}.R"), m, nw, nw)?,
        None => DMatrix::zeros(nw, nw),
    };
    let q_vec = match &doc.q {
        Some(v) => vector(&format!("{field}.q"), v, nx)?,
        None => DVector::zeros(nx),
    };
    let r_vec = match &doc.r {
        Some(v) => vector(&format!("{field}.r"), v, nw)?,
        None => DVector::zeros(nw),
    };
    Ok(StageCost::new(q_mat, r_mat, q_vec, r_vec, doc.c))
}

fn guesses_from_docs(docs: &[GuessDoc]) -> Result<GuessSet, IoError> {
    let mut guesses = Vec::with_capacity(docs.len());
    let mut weights = Vec::with_capacity(docs.len());
    for d in docs {
        let entries =
            d.v.iter()
                .map(|e| match e {
                    Some(v) => StageAssignment::Fixed(v.clone()),
                    None => StageAssignment::Relaxed,
                })
                .collect();
        guesses.push(PartialAssignment { entries });
        weights.push(d.w);
    }
    GuessSet::new(guesses, weights).map_err(|e| IoError::Guess(e.to_string()))
}

fn guesses_to_docs(gs: &GuessSet) -> Vec<GuessDoc> {
    gs.guesses
        .iter()
        .zip(&gs.weights)
        .map(|(g, &w)| GuessDoc {
            v: g.entries.iter().map(|e| e.fixed().map(<[i64]>::to_vec)).collect(),
            w,
        })
        .collect()
}

fn deserialize<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, IoError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        IoError::Parse {
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })
}

impl InstanceDoc {
    fn into_file(self) -> Result<InstanceFile, IoError> {
        let nx = self.a.len();
        let width = |rows: &[Vec<f64>]| rows.first().map_or(0, Vec::len);
        let nu = width(&self.b1);
        let nv = width(&self.b2);
        let nw = nu + nv;
        let mut dynamics = LinearDynamics::new(
            matrix("A", &self.a, nx, nx)?,
            matrix("B1", &self.b1, nx, nu)?,
            matrix("B2", &self.b2, nx, nv)?,
        );
        if let Some(c) = &self.c {
            dynamics = dynamics.with_offset(vector("c", c, nx)?);
        }
        if self.n == 0 {
            return Err(shape_err("N", "horizon must be at least 1"));
        }
        let stage_costs = match (&self.stage_cost, &self.stage_costs) {
            (Some(_), Some(_)) => return Err(shape_err("stage_cost", "give stage_cost or stage_costs, not both")),
            (Some(c), None) => vec![stage_cost("stage_cost", c, nx, nw)?; self.n],
            (None, Some(list)) => {
                if list.len() != self.n {
                    return Err(shape_err(
                        "stage_costs",
                        format!("{} entries, expected N = {}", list.len(), self.n),
                    ));
                }
                list.iter()
                    .enumerate()
                    .map(|(k, c)| stage_cost(&format!("stage_costs[{k}]"), c, nx, nw))
                    .collect::<Result<_, _>>()?
            }
            (None, None) => vec![StageCost::zeros(nx, nw); self.n],
        };
        let terminal_cost = match &self.terminal_cost {
            Some(t) => TerminalCost::new(
                match &t.q_mat {
                    Some(m) => matrix("terminal_cost.Q", m, nx, nx)?,
                    None => DMatrix::zeros(nx, nx),
                },
                match &t.q {
                    Some(v) => vector("terminal_cost.q", v, nx)?,
                    None => DVector::zeros(nx),
                },
                t.c,
            ),
            None => TerminalCost::zeros(nx),
        };
        let mixed = self
            .mixed
            .iter()
            .enumerate()
            .map(|(i, m)| {
                Ok(MixedRow {
                    gx: vector(&format!("mixed[{i}].gx"), &m.gx, nx)?,
                    gu: vector(&format!("mixed[{i}].gu"), &m.gu, nu)?,
                    gv: vector(&format!("mixed[{i}].gv"), &m.gv, nv)?,
                    lo: m.lo.0,
                    hi: m.hi.0,
                })
            })
            .collect::<Result<_, IoError>>()?;
        let constraints = ConstraintSet {
            x_bounds: bounds("x_bounds", &self.x_bounds, nx)?,
            u_bounds: bounds("u_bounds", &self.u_bounds, nu)?,
            v_sets: self.v_sets,
            mixed,
        };
        let instance = MiocpInstance {
            dynamics,
            stage_costs,
            terminal_cost,
            constraints,
            horizon: self.n,
            x0: vector("x0", &self.x0, nx)?,
            x0_set: match &self.x0_set {
                Some(_) => Some(bounds("x0_set", &self.x0_set, nx)?),
                None => None,
            },
        };
        let violations = validate(&instance);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(IoError::Invalid(list.join("; ")));
        }
        let guesses = self.guesses.as_deref().map(guesses_from_docs).transpose()?;
        if let Some(gs) = &guesses {
            if let Some(g) = gs.guesses.iter().find(|g| g.len() != instance.horizon) {
                return Err(IoError::Guess(format!(
                    "guess has {} stages, N is {}",
                    g.len(),
                    instance.horizon
                )));
            }
        }
        Ok(InstanceFile { instance, guesses })
    }

    fn from_instance(inst: &MiocpInstance, guesses: Option<&GuessSet>) -> Self {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        let list = |v: &DVector<f64>| v.as_slice().to_vec();
        let reals = |v: &DVector<f64>| v.iter().map(|&x| Real(x)).collect::<Vec<_>>();
        let box_doc = |b: &BoxSet| vec![reals(&b.lo), reals(&b.hi)];
        let cost_doc = |c: &StageCost| CostDoc {
            q_mat: Some(rows(&c.q_mat)),
            r_mat: Some(rows(&c.r_mat)),
            q: Some(list(&c.q_vec)),
            r: Some(list(&c.r_vec)),
            c: c.constant,
        };
        let uniform = inst.stage_costs.windows(2).all(|w| w[0] == w[1]);
        let d = &inst.dynamics;
        Self {
            a: rows(&d.a),
            b1: rows(&d.b1),
            b2: rows(&d.b2),
            c: (d.offset.iter().any(|&x| x != 0.0)).then(|| list(&d.offset)),
            n: inst.horizon,
            x0: list(&inst.x0),
            stage_cost: uniform.then(|| cost_doc(&inst.stage_costs[0])),
            stage_costs: (!uniform).then(|| inst.stage_costs.iter().map(cost_doc).collect()),
            terminal_cost: Some(TerminalDoc {
                q_mat: Some(rows(&inst.terminal_cost.q_mat)),
                q: Some(list(&inst.terminal_cost.q_vec)),
                c: inst.terminal_cost.constant,
            }),
            x_bounds: Some(box_doc(&inst.constraints.x_bounds)),
            u_bounds: Some(box_doc(&inst.constraints.u_bounds)),
            v_sets: inst.constraints.v_sets.clone(),
            mixed: inst
                .constraints
                .mixed
                .iter()
                .map(|m| MixedDoc {
                    gx: list(&m.gx),
                    gu: list(&m.gu),
                    gv: list(&m.gv),
                    lo: Real(m.lo),
                    hi: Real(m.hi),
                })
                .collect(),
            x0_set: inst.x0_set.as_ref().map(box_doc),
            guesses: guesses.map(guesses_to_docs),
        }
    }
}

/// Parses and validates an instance document.
pub fn parse_instance(text: &str) -> Result<InstanceFile, IoError> {
    deserialize::<InstanceDoc>(text)?.into_file()
}

pub fn read_instance(path: &Path) -> Result<InstanceFile, IoError> {
    parse_instance(&read(path)?)
}

/// Pretty-printed instance document; `guesses` go under the `guesses` key.
pub fn instance_to_json(inst: &MiocpInstance, guesses: Option<&GuessSet>) -> String {
    serde_json::to_string_pretty(&InstanceDoc::from_instance(inst, guesses))
        .expect("instance documents always serialize")
}

/// Accepts a bare guess list or any object with a `guesses` key, such as a
/// full instance document.
pub fn parse_guesses(text: &str) -> Result<GuessSet, IoError> {
    let value: serde_json::Value = deserialize(text)?;
    let docs: Vec<GuessDoc> = match value.get("guesses") {
        _ if value.is_array() => deserialize(text)?,
        Some(list) => deserialize(&list.to_string())?,
        None => {
            return Err(IoError::Guess(
                "expected a list or an object with a `guesses` key".into(),
            ))
        }
    };
    guesses_from_docs(&docs)
}

pub fn read_guesses(path: &Path) -> Result<GuessSet, IoError> {
    parse_guesses(&read(path)?)
}

pub fn guesses_to_json(gs: &GuessSet) -> String {
    #[derive(Serialize)]
    struct Doc {
        guesses: Vec<GuessDoc>,
    }
    serde_json::to_string_pretty(&Doc {
        guesses: guesses_to_docs(gs),
    })
    .expect("guess documents always serialize")
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })
}
