//! Run configuration: a TOML document with strict key checking.

use std::path::{Path, PathBuf};

use lamb_strip::cross_section::{validate_config, ProblemConfig};
use lamb_strip::halfstrip_solver::{DEFAULT_ELEMENT_LENGTH, DEFAULT_EVANESCENT, DEFAULT_LENGTH};
use lamb_strip::{DEFAULT_ELEMENTS, DEFAULT_ORDER};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub lambda: f64,
    pub mu: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub half_thickness: f64,
}

/// Either a single `omega` or `sweep = [min, max, steps]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frequency {
    pub omega: Option<f64>,
    pub sweep: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowOverrides {
    /// Upper bound for the window half-width; the default is half the spectral gap.
    pub delta: Option<f64>,
    pub axis_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    pub n_elems: usize,
    pub order: usize,
    pub length: f64,
    pub element_length: f64,
    pub n_evanescent: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization {
            n_elems: DEFAULT_ELEMENTS,
            order: DEFAULT_ORDER,
            length: DEFAULT_LENGTH,
            element_length: DEFAULT_ELEMENT_LENGTH,
            n_evanescent: DEFAULT_EVANESCENT,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfStripBlock {
    /// CSV with one row per section node: x1, u1_re, u1_im, u2_re, u2_im, u3_re, u3_im.
    pub g_file: Option<PathBuf>,
    /// Emit field samples on the sections x3 = 0, 1, ..., L.
    #[serde(default)]
    pub samples: bool,
}

/// One separable strip source: polynomial profile per component times an axial bump.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSourceSpec {
    pub center: f64,
    pub half_width: f64,
    pub q: usize,
    /// Real polynomial coefficients in x1 for u1, u2, u3.
    pub profile: [Vec<f64>; 3],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripBlock {
    #[serde(default)]
    pub sources: Vec<StripSourceSpec>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelfcheckBlock {
    /// Include the strip asymptotics check (two contour line solves per source).
    pub strip: bool,
}

impl Default for SelfcheckBlock {
    fn default() -> Self {
        SelfcheckBlock { strip: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub material: Material,
    pub geometry: Geometry,
    pub frequency: Frequency,
    #[serde(default)]
    pub window: WindowOverrides,
    #[serde(default)]
    pub discretization: Discretization,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub halfstrip: HalfStripBlock,
    #[serde(default)]
    pub strip: StripBlock,
    #[serde(default)]
    pub selfcheck: SelfcheckBlock,
    /// Directory of the config file; relative paths inside it resolve against this.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        validate_config(self.problem(1.0)).map_err(|e| ConfigError(e.to_string()))?;
        match (&self.frequency.omega, &self.frequency.sweep) {
            (Some(w), None) => check_omega(*w)?,
            (None, Some((lo, hi, steps))) => {
                check_omega(*lo)?;
                check_omega(*hi)?;
                if *steps == 0 || lo > hi || (*steps > 1 && lo == hi) {
                    return Err(ConfigError(format!(
                        "frequency sweep bounds must be positive and ordered with steps >= 1, got [{lo}, {hi}, {steps}]"
                    )));
                }
            }
            _ => return Err(ConfigError("frequency: give exactly one of `omega` or `sweep`".into())),
        }
        let d = &self.discretization;
        if d.n_elems == 0 || d.order < 2 {
            return Err(ConfigError(format!(
                "discretization: need n_elems >= 1 and order >= 2, got {} and {}",
                d.n_elems, d.order
            )));
        }
        if !(d.length >= 4.0) || !(d.element_length > 0.0) {
            return Err(ConfigError(format!(
                "discretization: need length >= 4 and element_length > 0, got {} and {}",
                d.length, d.element_length
            )));
        }
        if let Some(delta) = self.window.delta {
            if !(delta > 0.0) {
                return Err(ConfigError(format!("window: delta must be positive, got {delta}")));
            }
        }
        for s in &self.strip.sources {
            if !(s.half_width > 0.0) || s.q < 2 {
                return Err(ConfigError("strip source: need half_width > 0 and q >= 2".into()));
            }
        }
        Ok(())
    }

    fn check_files(&self) -> Result<(), ConfigError> {
        if let Some(g) = &self.halfstrip.g_file {
            let p = self.resolve(g);
            if !p.is_file() {
                return Err(ConfigError(format!("halfstrip.g_file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn problem(&self, omega: f64) -> ProblemConfig<f64> {
        ProblemConfig::new(self.material.lambda, self.material.mu, self.material.density, omega, self.geometry.half_thickness)
    }

    /// Frequencies in sweep order.
    pub fn omegas(&self) -> Vec<f64> {
        match (self.frequency.omega, self.frequency.sweep) {
            (Some(w), _) => vec![w],
            (None, Some((lo, hi, steps))) => {
                if steps == 1 {
                    vec![lo]
                } else {
                    (0..steps).map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64).collect()
                }
            }
            _ => Vec::new(),
        }
    }

    /// The single frequency for verbs that need one (first sweep point otherwise).
    pub fn omega(&self) -> f64 {
        self.omegas()[0]
    }
}

fn check_omega(w: f64) -> Result<(), ConfigError> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(ConfigError(format!("frequency must be positive and finite, got {w}")))
    }
}
