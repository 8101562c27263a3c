//! Experiment configuration: parsing, defaults and validation.

use std::fmt;
use std::path::PathBuf;

use kgscatter::dynamics::EnergyWindow;
use kgscatter::model::Grid1D;
use kgscatter::scattering::{Direction, WavePacketSpec};
use kgscatter::scenario::{self, CoefficientSpec, ModelSpec, PotentialSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Check,
    Spectrum,
    Evolve,
    Scatter,
    Sweep,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Check => "check",
            Command::Spectrum => "spectrum",
            Command::Evolve => "evolve",
            Command::Scatter => "scatter",
            Command::Sweep => "sweep",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// stock model to start from; explicit model sections replace its parts
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimeGrid>,
    /// scattering horizon `T`; defaults to the smallest admissible horizon of the packets
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thetas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<EnergyWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub packets: Vec<WavePacketSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    /// half-width of the eikonal frequency band, in units of the grid's Nyquist frequency
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eikonal_band: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    List(Vec<f64>),
    Uniform { t_max: f64, steps: usize },
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TimeGrid::List(v) => v.clone(),
            TimeGrid::Uniform { t_max, steps } => {
                let steps = (*steps).max(1);
                (0..=steps).map(|k| t_max * k as f64 / steps as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `(u, 0)` with a Gaussian `u`
    Gaussian { center: f64, momentum: f64, width: f64 },
    /// free wave packet on one energy shell, unit free energy
    Packet { packet: WavePacketSpec },
    /// uniform entries in the unit square, drawn from the run seed
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// JSON pointer into the model (`/potential/coupling` by default)
    #[serde(default = "default_param")]
    pub param: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<SweepRange>,
}

fn default_param() -> String {
    "/potential/coupling".to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        match (&self.values, &self.range) {
            (Some(v), _) => v.clone(),
            (None, Some(r)) => kgscatter::klein::linspace(r.lo, r.hi, r.count),
            (None, None) => Vec::new(),
        }
    }

    pub fn is_coupling(&self) -> bool {
        self.param == default_param()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// eigenvalue clustering radius relative to the spectral radius
    #[serde(default = "default_cluster")]
    pub cluster: f64,
    #[serde(default = "default_true")]
    pub merge_ambiguous: bool,
    #[serde(default = "default_small")]
    pub jordan: f64,
    #[serde(default = "default_small")]
    pub sign: f64,
    #[serde(default = "default_small")]
    pub selfadjoint: f64,
}

fn default_cluster() -> f64 {
    1e-6
}

fn default_small() -> f64 {
    1e-8
}

fn default_true() -> bool {
    true
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { cluster: 1e-6, merge_ambiguous: true, jordan: 1e-8, sign: 1e-8, selfadjoint: 1e-8 }
    }
}

impl Tolerances {
    pub fn spectral(&self) -> kgscatter::definitize::SpectralTolerances {
        kgscatter::definitize::SpectralTolerances {
            cluster: self.cluster,
            jordan: self.jordan,
            sign: self.sign,
            selfadjoint: self.selfadjoint,
            merge_ambiguous: self.merge_ambiguous,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { directory: None, formats: default_formats() }
    }
}

impl OutputSpec {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

fn invalid(pointer: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { pointer: pointer.into(), message: message.into() }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let pointer = pointer_of(e.path());
            invalid(pointer, e.into_inner().to_string())
        })
    }

    /// The model with the stock scenario, if any, filled in.
    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let base = match &self.scenario {
            Some(name) => Some(scenario::stock(name).ok_or_else(|| {
                invalid("/scenario", format!("unknown scenario '{name}', expected one of {:?}", scenario::STOCK))
            })?),
            None => None,
        };
        let grid = self.grid.or(base.as_ref().map(|b| b.grid)).ok_or_else(|| invalid("/grid", "missing grid"))?;
        let coefficients = self
            .coefficients
            .clone()
            .or(base.as_ref().map(|b| b.coefficients.clone()))
            .unwrap_or_else(|| CoefficientSpec::flat(1.0));
        let potential = self.potential.clone().or(base.map(|b| b.potential)).unwrap_or_else(PotentialSpec::none);
        Ok(ModelSpec { grid, coefficients, potential })
    }

    /// Checks everything that can be checked without assembling operators.
    pub fn validate(&self, command: Command) -> Result<ModelSpec, CliError> {
        let model = self.model()?;
        let g = model.grid;
        if Grid1D::new(g.half_width, g.points).is_err() {
            return Err(invalid("/grid", format!("need X > 0 and N >= 16, got X = {}, N = {}", g.half_width, g.points)));
        }
        if let Some(cmd) = self.run.command {
            if cmd != command {
                return Err(invalid("/run/command", format!("config is for '{cmd}' but '{command}' was requested")));
            }
        }
        let tol = &self.tolerances;
        for (name, v) in [("cluster", tol.cluster), ("jordan", tol.jordan), ("sign", tol.sign), ("selfadjoint", tol.selfadjoint)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("/tolerances/{name}"), format!("must lie in (0, 1), got {v}")));
            }
        }
        let run = &self.run;
        if let Some(times) = &run.times {
            let t = times.values();
            if t.is_empty() || t.iter().any(|x| !x.is_finite() || *x < 0.0) || t.windows(2).any(|w| w[0] > w[1]) {
                return Err(invalid("/run/times", "times must be finite, non-negative and sorted"));
            }
        }
        for (k, theta) in run.thetas.iter().enumerate() {
            if !(*theta > 0.0 && theta.is_finite()) {
                return Err(invalid(format!("/run/thetas/{k}"), format!("theta must be positive, got {theta}")));
            }
        }
        if let Some(t0) = run.theta0 {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(invalid("/run/theta0", format!("theta0 must be positive, got {t0}")));
            }
        }
        if let Some(w) = &run.window {
            if !(w.lo < w.hi && w.ramp > 0.0 && w.lo.is_finite() && w.hi.is_finite()) {
                return Err(invalid("/run/window", "need lo < hi and ramp > 0"));
            }
        }
        if let Some(h) = run.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid("/run/horizon", format!("horizon must be positive, got {h}")));
            }
        }
        if let Some(b) = run.eikonal_band {
            if !(b > 0.0 && b <= 1.0) {
                return Err(invalid("/run/eikonal_band", format!("band must lie in (0, 1], got {b}")));
            }
        }
        let grid = Grid1D::new(g.half_width, g.points).expect("checked above");
        for (k, p) in run.packets.iter().enumerate() {
            p.validate(&grid).map_err(|e| invalid(format!("/run/packets/{k}"), e.to_string()))?;
        }
        if let Some(InitialState::Packet { packet }) = &run.initial {
            packet.validate(&grid).map_err(|e| invalid("/run/initial/packet", e.to_string()))?;
        }
        match command {
            Command::Scatter if run.packets.is_empty() => {
                return Err(invalid("/run/packets", "scatter needs at least one packet"));
            }
            Command::Sweep => self.validate_sweep(&model)?,
            _ => {}
        }
        Ok(model)
    }

    fn validate_sweep(&self, model: &ModelSpec) -> Result<(), CliError> {
        let sweep = self.run.sweep.as_ref().ok_or_else(|| invalid("/run/sweep", "sweep needs a sweep section"))?;
        if sweep.values.is_some() == sweep.range.is_some() {
            return Err(invalid("/run/sweep", "give exactly one of 'values' and 'range'"));
        }
        let pointer = if sweep.values.is_some() { "/run/sweep/values" } else { "/run/sweep/range" };
        let values = sweep.values();
        if values.is_empty() {
            return Err(invalid(pointer, "no sweep values"));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(pointer, "sweep values must be finite and strictly increasing"));
        }
        if sweep.is_coupling() && values[0] < 0.0 {
            return Err(invalid(pointer, "couplings must be non-negative"));
        }
        let echo = serde_json::to_value(model).map_err(|e| CliError::Internal(e.to_string()))?;
        match echo.pointer(&sweep.param) {
            Some(Value::Number(_)) => Ok(()),
            _ => Err(invalid("/run/sweep/param", format!("'{}' does not name a number in the model", sweep.param))),
        }
    }
}

/// `model` with the number at `pointer` replaced by `value`.
pub fn with_param(model: &ModelSpec, pointer: &str, value: f64) -> Result<ModelSpec, CliError> {
    let mut echo = serde_json::to_value(model).map_err(|e| CliError::Internal(e.to_string()))?;
    let slot = echo
        .pointer_mut(pointer)
        .ok_or_else(|| invalid("/run/sweep/param", format!("'{pointer}' does not name a number in the model")))?;
    *slot = if slot.is_u64() {
        if value.fract() != 0.0 || value < 0.0 {
            return Err(invalid("/run/sweep/values", format!("'{pointer}' takes non-negative integers, got {value}")));
        }
        Value::from(value as u64)
    } else {
        Value::from(value)
    };
    serde_json::from_value(echo).map_err(|e| invalid("/run/sweep/param", e.to_string()))
}
