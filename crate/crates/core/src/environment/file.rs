use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::Value;

use super::{Cell, Environment, Polytope};
use crate::error::{Error, Result};
use crate::io::{json_parse_error, write_atomic};
use crate::trajectory::ControlPoints;

#[derive(Serialize)]
struct EnvFile<'a> {
    dimension: usize,
    spline_degree: usize,
    cells: Vec<CellFile<'a>>,
}

#[derive(Serialize)]
struct CellFile<'a> {
    id: &'a str,
    halfspaces: Vec<HalfspaceFile>,
    control_points: Vec<Vec<f64>>,
    successor: Option<&'a str>,
}

#[derive(Serialize)]
struct HalfspaceFile {
    normal: Vec<f64>,
    offset: f64,
}

pub fn load(path: impl AsRef<Path>) -> Result<Environment> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text)
}

pub fn save(env: &Environment, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json_string(env);
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn to_json_string(env: &Environment) -> String {
    let cells = env
        .cells()
        .iter()
        .map(|c| CellFile {
            id: &c.id,
            halfspaces: (0..c.polytope.num_faces())
                .map(|r| HalfspaceFile {
                    normal: c.polytope.a().row(r).iter().copied().collect(),
                    offset: c.polytope.b()[r],
                })
                .collect(),
            control_points: (0..=c.segment.degree())
                .map(|i| c.segment.point(i).iter().copied().collect())
                .collect(),
            successor: c.successor.as_deref(),
        })
        .collect();
    let file = EnvFile {
        dimension: env.dimension(),
        spline_degree: env.spline_degree(),
        cells,
    };
    serde_json::to_string_pretty(&file).expect("environment serializes")
}

pub fn from_json_str(text: &str) -> Result<Environment> {
    let root: Value = serde_json::from_str(text).map_err(|e| json_parse_error(text, &e))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("$", "expected an object"))?;
    let dimension = get_usize(obj.get("dimension"), "dimension")?;
    let degree = get_usize(obj.get("spline_degree"), "spline_degree")?;
    if dimension == 0 {
        return Err(Error::schema("dimension", "must be positive"));
    }
    let cells_v = obj
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("cells", "expected an array"))?;
    let mut cells = Vec::with_capacity(cells_v.len());
    for (i, cv) in cells_v.iter().enumerate() {
        cells.push(parse_cell(cv, i, dimension, degree)?);
    }
    Environment::new(dimension, cells)
}

fn parse_cell(v: &Value, index: usize, dimension: usize, degree: usize) -> Result<Cell> {
    let base = format!("cells[{index}]");
    let obj = v
        .as_object()
        .ok_or_else(|| Error::schema(&base, "expected an object"))?;
    let id = obj
        .get("id")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::schema(format!("{base}.id"), "expected a string"))?
        .to_string();
    let at = |field: &str| format!("{base}(id={id}).{field}");

    let hs = obj
        .get("halfspaces")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(at("halfspaces"), "expected an array"))?;
    if hs.is_empty() {
        return Err(Error::schema(at("halfspaces"), "needs at least one halfspace"));
    }
    let mut a = DMatrix::zeros(hs.len(), dimension);
    let mut b = DVector::zeros(hs.len());
    for (r, h) in hs.iter().enumerate() {
        let normal = get_numbers(
            h.get("normal"),
            &at(&format!("halfspaces[{r}].normal")),
            Some(dimension),
        )?;
        a.row_mut(r).copy_from_slice(&normal);
        b[r] = get_number(h.get("offset"), &at(&format!("halfspaces[{r}].offset")))?;
    }
    let polytope = Polytope::new(a, b).map_err(|e| Error::schema(at("halfspaces"), e.to_string()))?;

    let cps = obj
        .get("control_points")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(at("control_points"), "expected an array"))?;
    if cps.len() != degree + 1 {
        return Err(Error::schema(
            at("control_points"),
            format!("expected {} points for spline degree {degree}, found {}", degree + 1, cps.len()),
        ));
    }
    let mut points = Vec::with_capacity(cps.len());
    for (j, p) in cps.iter().enumerate() {
        points.push(get_numbers(Some(p), &at(&format!("control_points[{j}]")), Some(dimension))?);
    }
    let segment =
        ControlPoints::from_points(&points).map_err(|e| Error::schema(at("control_points"), e.to_string()))?;

    let successor = match obj.get("successor") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::schema(at("successor"), "expected a string or null")),
    };
    Ok(Cell {
        id,
        polytope,
        segment,
        successor,
    })
}

fn get_usize(v: Option<&Value>, path: &str) -> Result<usize> {
    v.and_then(Value::as_u64)
        .map(|n| n as usize)
        .ok_or_else(|| Error::schema(path, "expected a nonnegative integer"))
}

fn get_number(v: Option<&Value>, path: &str) -> Result<f64> {
    let x = v
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::schema(path, "expected a number"))?;
    if !x.is_finite() {
        return Err(Error::schema(path, "must be finite"));
    }
    Ok(x)
}

fn get_numbers(v: Option<&Value>, path: &str, len: Option<usize>) -> Result<Vec<f64>> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(path, "expected an array of numbers"))?;
    if let Some(n) = len {
        if arr.len() != n {
            return Err(Error::schema(path, format!("expected {n} entries, found {}", arr.len())));
        }
    }
    arr.iter()
        .enumerate()
        .map(|(k, x)| get_number(Some(x), &format!("{path}[{k}]")))
        .collect()
}
