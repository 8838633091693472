//! JSON scenario schema.
//!
//! Lengths are metres, powers watts, frequencies hertz. Angles are given in
//! degrees and converted to radians when the scenario is resolved. Every
//! field except `beam.w0` has a default taken from the reference system
//! (5x5 arrays at 2 m, 850 nm, 1 mW per VCSEL, 20 GHz).

use std::fmt;

use owc_core::beam::BeamParams;
use owc_core::channel::{build_layout, build_tx_layout, ArrayLayout, GainMethod, LayoutKind};
use owc_core::geometry::MisalignmentState;
use owc_core::linkbudget::{LinkParams, RateMode};
use owc_core::quadrature::QuadratureSpec;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub beam: BeamConfig,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default = "default_distance")]
    pub distance: f64,
    #[serde(default)]
    pub tx: TxConfig,
    #[serde(default)]
    pub rx: RxConfig,
    #[serde(default)]
    pub misalignment: MisalignmentConfig,
    #[serde(default = "default_method")]
    pub method: GainMethod,
    #[serde(default = "default_mode")]
    pub mode: RateMode,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_distance() -> f64 {
    2.0
}

fn default_method() -> GainMethod {
    GainMethod::ExactGmm
}

fn default_mode() -> RateMode {
    RateMode::Direct
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    /// Effective waist radius, m.
    pub w0: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
}

fn default_wavelength() -> f64 {
    850e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub p_t: f64,
    pub bandwidth: f64,
    pub responsivity: f64,
    pub rin_db_hz: f64,
    pub load_resistance: f64,
    pub noise_figure_db: f64,
    pub temperature: f64,
    pub target_ber: f64,
    pub n_fft: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = LinkParams::default();
        Self {
            p_t: p.p_t,
            bandwidth: p.bandwidth,
            responsivity: p.responsivity,
            rin_db_hz: -155.0,
            load_resistance: p.load_resistance,
            noise_figure_db: 5.0,
            temperature: p.temperature,
            target_ber: p.target_ber,
            n_fft: p.n_fft,
        }
    }
}

impl LinkConfig {
    pub fn params(&self) -> LinkParams {
        LinkParams {
            p_t: self.p_t,
            bandwidth: self.bandwidth,
            responsivity: self.responsivity,
            rin: 10f64.powf(self.rin_db_hz / 10.0),
            load_resistance: self.load_resistance,
            noise_figure: 10f64.powf(self.noise_figure_db / 10.0),
            temperature: self.temperature,
            target_ber: self.target_ber,
            n_fft: self.n_fft,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TxConfig {
    /// VCSEL array size `K`; defaults to the receiver's base lattice.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RxConfig {
    pub layout: LayoutKind,
    pub pd_radius: f64,
    /// Edge-to-edge PD spacing `delta`, m.
    pub spacing: f64,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            layout: LayoutKind::Square(5),
            pd_radius: 3e-3,
            spacing: 6e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisalignmentConfig {
    pub x_de: f64,
    pub y_de: f64,
    pub phi_a_deg: f64,
    pub phi_e_deg: f64,
    pub psi_a_deg: f64,
    pub psi_e_deg: f64,
}

impl MisalignmentConfig {
    pub fn state(&self) -> MisalignmentState {
        MisalignmentState {
            x_de: self.x_de,
            y_de: self.y_de,
            phi_a: self.phi_a_deg.to_radians(),
            phi_e: self.phi_e_deg.to_radians(),
            psi_a: self.psi_a_deg.to_radians(),
            psi_e: self.psi_e_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted path of a numeric scenario field, e.g. `beam.w0`.
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    #[serde(default)]
    pub scale: SweepScale,
}

impl SweepConfig {
    /// Sweep values in ascending order.
    pub fn values(&self) -> Result<Vec<f64>, ConfigError> {
        if self.steps < 2 {
            return Err(ConfigError::invalid("sweep.steps", "must be at least 2"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(ConfigError::invalid("sweep", "start and stop must be finite"));
        }
        let (lo, hi) = if self.start <= self.stop {
            (self.start, self.stop)
        } else {
            (self.stop, self.start)
        };
        let n = self.steps - 1;
        let values = match self.scale {
            SweepScale::Linear => (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect(),
            SweepScale::Log => {
                if !(lo > 0.0) {
                    return Err(ConfigError::invalid("sweep", "log scale needs positive bounds"));
                }
                let (a, b) = (lo.ln(), hi.ln());
                (0..=n)
                    .map(|k| (a + (b - a) * k as f64 / n as f64).exp())
                    .collect()
            }
        };
        Ok(values)
    }
}

/// Scenario converted to model types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub beam: BeamParams,
    pub params: LinkParams,
    pub distance: f64,
    pub tx: ArrayLayout,
    pub rx: ArrayLayout,
    pub state: MisalignmentState,
    pub method: GainMethod,
    pub mode: RateMode,
    pub quadrature: QuadratureSpec,
}

impl Scenario {
    /// Parses a scenario, reporting the offending field and position.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(ConfigError::from_path_error)
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let beam = BeamParams::new(self.beam.wavelength, self.beam.w0)
            .map_err(|e| ConfigError::invalid("beam", e))?;
        let params = self.link.params();
        params.validate().map_err(|e| ConfigError::invalid("link", e))?;
        if !(self.distance > 0.0) {
            return Err(ConfigError::invalid("distance", "must be positive"));
        }
        self.quadrature
            .validate()
            .map_err(|e| ConfigError::invalid("quadrature", e))?;
        let rx = build_layout(self.rx.layout, self.rx.pd_radius, self.rx.spacing)
            .map_err(|e| ConfigError::invalid("rx", e))?;
        let k_tx = self.tx.k.unwrap_or_else(|| self.rx.layout.base_k());
        let tx = build_tx_layout(k_tx, rx.pitch).map_err(|e| ConfigError::invalid("tx.k", e))?;
        if self.mode == RateMode::Direct && tx.len() != rx.len() {
            return Err(ConfigError::invalid(
                "mode",
                format!(
                    "direct detection needs equal array sizes, got {} VCSELs and {} PDs",
                    tx.len(),
                    rx.len()
                ),
            ));
        }
        if self.method == GainMethod::AlignedClosedForm {
            return Err(ConfigError::invalid(
                "method",
                "aligned_closed_form is a single-link formula; use exact_gmm or an approximation",
            ));
        }
        let state = self.misalignment.state();
        if state.has_extreme_angles() {
            log::warn!("an orientation angle reaches 90 degrees; results may be meaningless");
        }
        Ok(Resolved {
            beam,
            params,
            distance: self.distance,
            tx,
            rx,
            state,
            method: self.method,
            mode: self.mode,
            quadrature: self.quadrature,
        })
    }

    /// Copy of the scenario with the numeric field at dotted `path` replaced.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<Scenario, ConfigError> {
        let mut base = self.clone();
        base.sweep = None;
        let mut json = serde_json::to_value(&base).expect("scenario serializes");
        let pointer = format!("/{}", path.replace('.', "/"));
        match json.pointer_mut(&pointer) {
            Some(slot) if slot.is_number() => {
                *slot = if slot.is_u64() && value.fract() == 0.0 && value >= 0.0 {
                    Value::from(value as u64)
                } else {
                    Value::from(value)
                };
            }
            Some(_) => return Err(ConfigError::invalid("sweep.parameter", format!("`{path}` is not numeric"))),
            None => return Err(ConfigError::invalid("sweep.parameter", format!("unknown parameter `{path}`"))),
        }
        serde_json::from_value(json).map_err(|e| ConfigError::invalid("sweep.parameter", e))
    }
}

/// Schema or value error in a scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl ConfigError {
    pub fn invalid(field: &str, message: impl fmt::Display) -> Self {
        Self {
            field: field.to_string(),
            message: message.to_string(),
            line: None,
            column: None,
        }
    }

    fn from_path_error(err: serde_path_to_error::Error<serde_json::Error>) -> Self {
        let path = err.path().to_string();
        let inner = err.inner();
        let message = inner.to_string();
        let (line, column) = (inner.line(), inner.column());
        // serde reports a missing field against its parent; name the field itself.
        let field = match missing_field(&message) {
            Some(name) if path == "." => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        let message = match message.find(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        Self {
            field,
            message,
            line: (line > 0).then_some(line),
            column: (line > 0).then_some(column),
        }
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " (line {l}, column {c})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}
