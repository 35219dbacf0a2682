use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::verify::SynthesisCertificate;
use super::{AgentSystem, AxisDims, GainMatrix, RateMode, SynthesisConfig};
use crate::error::{Error, Result};
use crate::io::{json_parse_error, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub passed: bool,
    pub mu: f64,
    pub lmi_max_eig: f64,
    pub max_face_residual: f64,
    pub invariance_residual: f64,
    #[serde(default)]
    pub solver_status: Option<String>,
}

impl From<&SynthesisCertificate> for CertificateSummary {
    fn from(c: &SynthesisCertificate) -> Self {
        Self {
            passed: c.passed,
            mu: c.mu,
            lmi_max_eig: c.lmi_max_eig,
            max_face_residual: c.max_face_residual(),
            invariance_residual: c.invariance_residual,
            solver_status: c.solver_status.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellGain {
    pub cell: String,
    pub gain: GainMatrix,
    pub mu: f64,
    pub mode: RateMode,
    pub alpha: f64,
    pub delta: f64,
    pub k_max: f64,
    pub time_scale: f64,
    pub certificate: CertificateSummary,
}

impl CellGain {
    pub fn new(gain: GainMatrix, certificate: &SynthesisCertificate, config: &SynthesisConfig) -> Self {
        Self {
            cell: certificate.cell.clone(),
            gain,
            mu: certificate.mu,
            mode: config.mode,
            alpha: config.alpha,
            delta: config.delta,
            k_max: config.k_max,
            time_scale: config.time_scale,
            certificate: certificate.into(),
        }
    }
}

/// The agent model with one synthesized gain per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GainLibrary {
    pub agent: AgentSystem,
    pub cells: Vec<CellGain>,
}

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    agent: AgentFile,
    cells: Vec<CellGainFile>,
}

#[derive(Serialize, Deserialize)]
struct AgentFile {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<Vec<AxisDims>>,
}

#[derive(Serialize, Deserialize)]
struct CellGainFile {
    cell: String,
    /// Rows of `K = [K_y, K_p]`.
    k: Vec<Vec<f64>>,
    outputs: usize,
    mu: f64,
    mode: RateMode,
    alpha: f64,
    delta: f64,
    k_max: f64,
    time_scale: f64,
    certificate: CertificateSummary,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::schema(what, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

impl GainLibrary {
    pub fn new(agent: AgentSystem) -> Self {
        Self {
            agent,
            cells: Vec::new(),
        }
    }

    pub fn gain_for(&self, cell: &str) -> Option<&CellGain> {
        self.cells.iter().find(|c| c.cell == cell)
    }

    pub fn insert(&mut self, entry: CellGain) {
        match self.cells.iter_mut().find(|c| c.cell == entry.cell) {
            Some(slot) => *slot = entry,
            None => self.cells.push(entry),
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = LibraryFile {
            agent: AgentFile {
                a: rows(&self.agent.a),
                b: rows(&self.agent.b),
                c: rows(&self.agent.c),
                axes: self.agent.axes().map(<[AxisDims]>::to_vec),
            },
            cells: self
                .cells
                .iter()
                .map(|c| CellGainFile {
                    cell: c.cell.clone(),
                    k: rows(c.gain.matrix()),
                    outputs: c.gain.outputs(),
                    mu: c.mu,
                    mode: c.mode,
                    alpha: c.alpha,
                    delta: c.delta,
                    k_max: c.k_max,
                    time_scale: c.time_scale,
                    certificate: c.certificate.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("library serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text).map_err(|e| json_parse_error(text, &e))?;
        let agent = AgentSystem::new(
            from_rows(&file.agent.a, "agent.a")?,
            from_rows(&file.agent.b, "agent.b")?,
            from_rows(&file.agent.c, "agent.c")?,
        )?
        .with_axes(file.agent.axes)?;
        let mut cells = Vec::with_capacity(file.cells.len());
        for (i, c) in file.cells.into_iter().enumerate() {
            let k = from_rows(&c.k, &format!("cells[{i}].k"))?;
            if k.nrows() != agent.inputs() {
                return Err(Error::schema(
                    format!("cells[{i}].k"),
                    format!("expected {} rows, found {}", agent.inputs(), k.nrows()),
                ));
            }
            cells.push(CellGain {
                cell: c.cell,
                gain: GainMatrix::new(k, c.outputs)?,
                mu: c.mu,
                mode: c.mode,
                alpha: c.alpha,
                delta: c.delta,
                k_max: c.k_max,
                time_scale: c.time_scale,
                certificate: c.certificate,
            });
        }
        Ok(Self { agent, cells })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json_string();
        text.push('\n');
        write_atomic(path.as_ref(), text.as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}
