//! Serializable documents written by the verbs.

use std::path::Path;

use lamb_strip::linalg::C64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A complex number as `[re, im]`.
pub type Pair = [f64; 2];

pub fn pair(z: C64) -> Pair {
    [z.re, z.im]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub x1: f64,
    pub u: [Pair; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub omega: f64,
    pub nu: Pair,
    pub branch: String,
    pub partial_multiplicities: Vec<usize>,
    pub algebraic_multiplicity: usize,
    pub classification: String,
    /// i q(u, u) of the chain head on x3 = 0
    pub flux: f64,
    pub profile: Vec<ProfileSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyModes {
    pub omega: f64,
    pub window_delta: f64,
    pub records: Vec<ModeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesDocument {
    pub frequencies: Vec<FrequencyModes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMode {
    pub index: usize,
    pub direction: String,
    pub branch: String,
    /// wavenumbers of the waves combined into this mode
    pub nu: Vec<Pair>,
    /// i q(U, U), +1 outgoing and -1 incoming
    pub flux: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringDocument {
    pub omega: f64,
    pub t: usize,
    pub modes: Vec<BasisMode>,
    /// rows: incoming index, columns: outgoing index
    pub s: Vec<Vec<Pair>>,
    pub unitarity_residual: f64,
    pub reciprocity_defect: f64,
    pub unitarity_tolerance: f64,
    pub unitarity_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Amplitude {
    pub index: usize,
    pub branch: String,
    pub nu: Pair,
    pub a: Pair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayDocument {
    pub slab_starts: Vec<f64>,
    pub slab_norms: Vec<f64>,
    pub slope: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSection {
    pub x3: f64,
    pub values: Vec<ProfileSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfStripDocument {
    pub omega: f64,
    pub length: f64,
    pub amplitudes: Vec<Amplitude>,
    pub decay: DecayDocument,
    pub residual: f64,
    pub samples: Option<Vec<FieldSection>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripDocument {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub residual: f64,
    pub partition_dependence: f64,
    pub tolerance: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckDocument {
    pub omega: f64,
    pub tolerance_scale: f64,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, doc: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).map_err(|e| CliError::Numerical(format!("serialize {name}: {e}")))?;
    std::fs::write(dir.join(name), text + "\n").map_err(|e| CliError::Io(format!("write {name}: {e}")))
}

pub fn write_csv<S: Serialize>(dir: &Path, name: &str, rows: &[S]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("write {name}: {e}"));
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("write {name}: {e}")))
}
