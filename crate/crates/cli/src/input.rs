//! Model and modal data files (TOML).
//!
//! Model file:
//!
//! ```toml
//! weights_lb = [12.06, 12.06, 12.06, 12.06]
//! g_in_s2 = 386.088              # optional
//! stiffness_lbf_in = [10.0, 10.0, 10.0, 10.0]
//! theta_map = [[4]]              # stories scaled by each updating variable
//!
//! [bounds]                       # optional, same interval for every variable of a kind
//! theta = [-1.0, 1.0]
//! psi = [-2.0, 2.0]
//!
//! [simulate]                     # optional, used by `simulate`
//! stiffness_lbf_in = [10.0, 10.0, 10.0, 9.0]
//! measured_dofs = [1, 2, 3]
//! n_modes = 1
//! ```
//!
//! Modal data file, one `[[modes]]` table per mode giving `omega_rad_s`,
//! `frequency_hz`, or both if they agree:
//!
//! ```toml
//! [[modes]]
//! omega_rad_s = 6.196
//! measured_dofs = [1, 2, 3]
//! shape = [0.395, 0.742, 1.0]
//! ```

use std::f64::consts::PI;
use std::ops::Range;
use std::path::{Path, PathBuf};

use modal_sos::structural::{
    Bounds, MeasuredMode, ModalData, ParamMap, ShearFrame, StructuralError, GRAVITY_IN_S2,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Raw file contents with its path, for error reporting.
pub struct Source {
    pub path: PathBuf,
    pub text: String,
}

impl Source {
    pub fn read(path: &Path) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path).map_err(|source| InputError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Source {
            path: path.to_path_buf(),
            text,
        })
    }

    pub fn error(&self, span: Option<Range<usize>>, message: impl Into<String>) -> InputError {
        let (line, column) = span.map_or((1, 1), |s| line_column(&self.text, s.start));
        InputError::Parse {
            path: self.path.clone(),
            line,
            column,
            message: message.into(),
        }
    }

    fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T, InputError> {
        toml::from_str(&self.text).map_err(|e| self.error(e.span(), e.message().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub theta: Option<[f64; 2]>,
    pub psi: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    /// Stiffness of the frame that generates the data; the model's when absent.
    pub stiffness_lbf_in: Option<Vec<f64>>,
    pub measured_dofs: Vec<usize>,
    pub n_modes: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    weights_lb: Spanned<Vec<f64>>,
    g_in_s2: Option<f64>,
    stiffness_lbf_in: Spanned<Vec<f64>>,
    theta_map: Spanned<Vec<Vec<usize>>>,
    bounds: Option<Spanned<BoundsSpec>>,
    simulate: Option<Spanned<SimulationSpec>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub frame: ShearFrame,
    pub params: ParamMap,
    pub bounds: Option<BoundsSpec>,
    pub simulate: Option<SimulationSpec>,
}

impl Model {
    /// Box for `n_psi` unmeasured entries; `None` keeps the library defaults.
    pub fn bounds_for(&self, n_psi: usize) -> Option<Bounds> {
        let spec = self.bounds.as_ref()?;
        let mut b = Bounds::default_for(self.params.n_theta(), n_psi);
        if let Some([l, u]) = spec.theta {
            b.theta.iter_mut().for_each(|t| *t = (l, u));
        }
        if let Some([l, u]) = spec.psi {
            b.psi.iter_mut().for_each(|p| *p = (l, u));
        }
        Some(b)
    }

    /// Frame that generates simulated data.
    pub fn simulation_frame(&self) -> Result<ShearFrame, StructuralError> {
        match self.simulate.as_ref().and_then(|s| s.stiffness_lbf_in.clone()) {
            Some(k) => self.frame.with_stiffness(k),
            None => Ok(self.frame.clone()),
        }
    }
}

pub fn parse_model(src: &Source) -> Result<Model, InputError> {
    let raw: RawModel = src.parse()?;
    let frame = ShearFrame {
        weights_lb: raw.weights_lb.get_ref().clone(),
        g_in_s2: raw.g_in_s2.unwrap_or(GRAVITY_IN_S2),
        stiffness_lbf_in: raw.stiffness_lbf_in.get_ref().clone(),
    };
    frame.validate().map_err(|e| {
        let span = match e {
            StructuralError::NonPositive { what: "weight", .. } => raw.weights_lb.span(),
            _ => raw.stiffness_lbf_in.span(),
        };
        src.error(Some(span), e.to_string())
    })?;
    let params = ParamMap {
        groups: raw.theta_map.get_ref().clone(),
    };
    params
        .validate(frame.n_stories())
        .map_err(|e| src.error(Some(raw.theta_map.span()), e.to_string()))?;
    if let Some(b) = &raw.bounds {
        for pair in [b.get_ref().theta, b.get_ref().psi].into_iter().flatten() {
            if !(pair[0] < pair[1]) {
                return Err(src.error(Some(b.span()), format!("empty interval [{}, {}]", pair[0], pair[1])));
            }
        }
    }
    if let Some(s) = &raw.simulate {
        let spec = s.get_ref();
        let check = || -> Result<(), StructuralError> {
            if let Some(k) = &spec.stiffness_lbf_in {
                frame.with_stiffness(k.clone())?;
            }
            if spec.n_modes == 0 || spec.n_modes > frame.n_stories() {
                return Err(StructuralError::TooManyModes {
                    requested: spec.n_modes,
                    available: frame.n_stories(),
                });
            }
            Ok(())
        };
        check().map_err(|e| src.error(Some(s.span()), e.to_string()))?;
    }
    Ok(Model {
        frame,
        params,
        bounds: raw.bounds.map(Spanned::into_inner),
        simulate: raw.simulate.map(Spanned::into_inner),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    omega_rad_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequency_hz: Option<f64>,
    measured_dofs: Vec<usize>,
    shape: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_unmeasured: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModal {
    #[serde(default)]
    modes: Vec<Spanned<ModeEntry>>,
}

#[derive(Debug, Serialize)]
struct ModalOut {
    modes: Vec<ModeEntry>,
}

fn omega_of(entry: &ModeEntry) -> Result<f64, String> {
    match (entry.omega_rad_s, entry.frequency_hz) {
        (Some(w), None) => Ok(w),
        (None, Some(f)) => Ok(2.0 * PI * f),
        (Some(w), Some(f)) if (2.0 * PI * f - w).abs() <= 1e-9 * w.abs() => Ok(w),
        (Some(w), Some(f)) => Err(format!("omega_rad_s = {w} disagrees with frequency_hz = {f}")),
        (None, None) => Err("mode needs omega_rad_s or frequency_hz".into()),
    }
}

/// Parses and validates against a frame with `n_dofs` stories.
pub fn parse_modal_data(src: &Source, n_dofs: usize) -> Result<ModalData, InputError> {
    let raw: RawModal = src.parse()?;
    if raw.modes.is_empty() {
        return Err(src.error(None, "modal data has no modes"));
    }
    let mut modes = Vec::with_capacity(raw.modes.len());
    for spanned in &raw.modes {
        let e = spanned.get_ref();
        let at = |msg: String| src.error(Some(spanned.span()), msg);
        let mode = MeasuredMode {
            omega: omega_of(e).map_err(at)?,
            measured_dofs: e.measured_dofs.clone(),
            shape: e.shape.clone(),
            reference_unmeasured: e.reference_unmeasured.clone(),
        };
        let single = ModalData { modes: vec![mode] };
        single.validate(n_dofs).map_err(|err| at(err.to_string().replace("mode 1: ", "")))?;
        modes.extend(single.modes);
    }
    Ok(ModalData { modes })
}

/// TOML text that `parse_modal_data` reads back to `data` exactly.
pub fn write_modal_data(data: &ModalData) -> String {
    let out = ModalOut {
        modes: data
            .modes
            .iter()
            .map(|m| ModeEntry {
                omega_rad_s: Some(m.omega),
                frequency_hz: Some(m.frequency_hz()),
                measured_dofs: m.measured_dofs.clone(),
                shape: m.shape.clone(),
                reference_unmeasured: m.reference_unmeasured.clone(),
            })
            .collect(),
    };
    toml::to_string(&out).expect("modal data serializes")
}
