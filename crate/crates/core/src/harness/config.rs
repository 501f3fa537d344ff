//! Scenario configuration. JSON on disk, SI units throughout.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::reference::{ReferenceProgram, Segment};
use crate::akf::{AkfConfig, QEstimator};
use crate::error::{Error, Result};
use crate::linmodel::{OperatingPoint, OperatingPointSpec};
use crate::plant::PlantParams;
use crate::tracking::{Complex64, TrackingGain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LinearTracking,
    NonlinearDecoupling,
    AkfEstimation,
    OpenLoop,
}

/// A pole: a bare number for a real pole or `{"re": .., "im": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex { re: f64, im: f64 },
}

impl From<PoleSpec> for Complex64 {
    fn from(p: PoleSpec) -> Self {
        match p {
            PoleSpec::Real(re) => Complex64::new(re, 0.0),
            PoleSpec::Complex { re, im } => Complex64::new(re, im),
        }
    }
}

/// Either poles to place or a gain matrix supplied verbatim (rows = inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSpec {
    Poles(Vec<PoleSpec>),
    Matrix(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn matrix_gain(&self, n_states: usize) -> Option<Result<TrackingGain>> {
        match self {
            GainSpec::Poles(_) => None,
            GainSpec::Matrix(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.is_empty() || rows.iter().any(|r| r.len() != ncols) {
                    return Some(Err(Error::Config("gain matrix rows must have equal, non-zero length".into())));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Some(TrackingGain::new(DMatrix::from_row_slice(rows.len(), ncols, &flat), n_states))
            }
        }
    }

    pub fn poles(&self) -> Option<Vec<Complex64>> {
        match self {
            GainSpec::Poles(p) => Some(p.iter().map(|&p| p.into()).collect()),
            GainSpec::Matrix(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingSettings {
    pub gain: GainSpec,
    /// Freeze the integrators while a pump is saturated.
    pub anti_windup: bool,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        Self {
            gain: GainSpec::Poles([0.92, 0.97, 0.90, 0.95, 0.94].into_iter().map(PoleSpec::Real).collect()),
            anti_windup: true,
        }
    }
}

/// How the decoupling law is realised in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Realization {
    /// Evaluated at every integrator stage.
    #[default]
    Continuous,
    /// Evaluated once per control period and held.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecouplingSettings {
    pub outer_gains: [f64; 2],
    pub realization: Realization,
}

impl Default for DecouplingSettings {
    fn default() -> Self {
        Self { outer_gains: [0.02, 0.02], realization: Realization::Continuous }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AkfSettings {
    /// Initial estimate, absolute levels in m.
    pub x0: [f64; 3],
    /// `P0 = p0·I`.
    pub p0: f64,
    /// `Q0 = q0·I`.
    pub q0: f64,
    /// `R = r·I`, m².
    pub r: f64,
    pub window: usize,
    pub q_bounds: [f64; 2],
    pub r_bounds: Option<[f64; 2]>,
    pub estimator: QEstimator,
}

impl Default for AkfSettings {
    fn default() -> Self {
        Self {
            x0: [0.9, 0.55, 0.5],
            p0: 10.0,
            q0: 1e-12,
            r: 0.005 * 0.005,
            window: AkfConfig::DEFAULT_WINDOW,
            q_bounds: [AkfConfig::DEFAULT_Q_BOUNDS.0, AkfConfig::DEFAULT_Q_BOUNDS.1],
            r_bounds: None,
            estimator: QEstimator::IncrementWindow,
        }
    }
}

impl AkfSettings {
    pub fn to_config(&self) -> AkfConfig {
        let r_bounds = self.r_bounds.unwrap_or([self.r, self.r]);
        AkfConfig {
            window: self.window,
            q0: DMatrix::identity(3, 3) * self.q0,
            r: DMatrix::identity(3, 3) * self.r,
            p0: DMatrix::identity(3, 3) * self.p0,
            q_bounds: (self.q_bounds[0], self.q_bounds[1]),
            r_bounds: (r_bounds[0], r_bounds[1]),
            estimator: self.estimator,
        }
    }

    pub fn x0_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x0)
    }
}

/// Everything needed to run one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub plant: PlantParams,
    pub operating_point: OperatingPointSpec,
    /// Initial true levels; defaults to the operating-point levels.
    pub initial_levels: Option<[f64; 3]>,
    pub reference: ReferenceProgram,
    pub tracking: TrackingSettings,
    pub decoupling: DecouplingSettings,
    /// Constant pump flows for open-loop runs; defaults to `u0`.
    pub open_loop_input: Option<[f64; 2]>,
    pub akf: AkfSettings,
    /// Measurement noise standard deviation per level, m.
    pub noise_std: [f64; 3],
    /// Standard deviation of level disturbances added once per period, m.
    pub process_noise_std: [f64; 3],
    pub seed: u64,
    pub duration: f64,
    pub t_s: f64,
    /// Samples before this time are excluded from the estimation RMSE.
    pub burn_in: f64,
    /// Band for settling-time metrics, m.
    pub settle_band: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let op = OperatingPointSpec::default();
        Self {
            mode: Mode::LinearTracking,
            plant: PlantParams::default(),
            operating_point: op,
            initial_levels: None,
            reference: ReferenceProgram::constant(&[op.y0[0], op.y0[1]]),
            tracking: TrackingSettings::default(),
            decoupling: DecouplingSettings::default(),
            open_loop_input: None,
            akf: AkfSettings::default(),
            noise_std: [0.0; 3],
            process_noise_std: [0.0; 3],
            seed: 0,
            duration: 1000.0,
            t_s: 1.0,
            burn_in: 200.0,
            settle_band: 1e-3,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn operating_point(&self) -> Result<OperatingPoint> {
        OperatingPoint::try_from(self.operating_point)
    }

    pub fn initial_state(&self) -> Vector3<f64> {
        Vector3::from(self.initial_levels.unwrap_or(self.operating_point.y0))
    }

    pub fn open_loop_flows(&self) -> Vector2<f64> {
        Vector2::from(self.open_loop_input.unwrap_or(self.operating_point.u0))
    }

    /// Number of control periods.
    pub fn n_steps(&self) -> usize {
        (self.duration / self.t_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.plant.validate()?;
        self.operating_point()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return cfg(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.t_s.is_finite() && self.t_s > 0.0) || self.n_steps() == 0 {
            return cfg(format!("t_s must be positive and no longer than the run, got {}", self.t_s));
        }
        if self.noise_std.iter().chain(&self.process_noise_std).any(|s| !(s.is_finite() && *s >= 0.0)) {
            return cfg("noise standard deviations must be finite and non-negative".into());
        }
        if !(self.settle_band.is_finite() && self.settle_band > 0.0 && self.burn_in.is_finite() && self.burn_in >= 0.0) {
            return cfg("settle_band must be positive and burn_in non-negative".into());
        }
        if self.initial_state().iter().any(|h| !(0.0..=self.plant.h_max).contains(h)) {
            return cfg("initial levels must lie in [0, h_max]".into());
        }
        if self.mode != Mode::OpenLoop {
            self.reference.validate(self.plant.h_max)?;
            if self.reference.outputs.len() != 2 {
                return cfg(format!("reference needs 2 outputs, got {}", self.reference.outputs.len()));
            }
        }
        if self.mode == Mode::AkfEstimation {
            self.akf.to_config().validate()?;
        }
        if self.decoupling.outer_gains.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return cfg("outer gains must be positive".into());
        }
        Ok(())
    }
}

/// Ready-made scenarios with ±0.05 m step programs around the default operating point.
pub mod presets {
    use super::*;

    fn segs(v: &[(f64, f64)]) -> Vec<Segment> {
        v.iter().map(|&(t, l)| Segment::new(t, l)).collect()
    }

    /// Steps of ±0.05 m in both tracked levels, 500 s apart.
    pub fn tracking_program() -> ReferenceProgram {
        ReferenceProgram {
            outputs: vec![
                segs(&[(0.0, 0.40), (500.0, 0.45), (1500.0, 0.35), (2500.0, 0.40)]),
                segs(&[(0.0, 0.20), (1000.0, 0.25), (2000.0, 0.15)]),
            ],
        }
    }

    /// Steps of ±0.05 m, spaced so every transient settles, ending well before 5000 s.
    pub fn decoupling_program() -> ReferenceProgram {
        ReferenceProgram {
            outputs: vec![
                segs(&[(0.0, 0.40), (200.0, 0.45), (1200.0, 0.40), (2200.0, 0.35)]),
                segs(&[(0.0, 0.20), (700.0, 0.25), (1700.0, 0.20), (2700.0, 0.15)]),
            ],
        }
    }

    pub fn linear_tracking() -> ScenarioConfig {
        ScenarioConfig {
            mode: Mode::LinearTracking,
            reference: tracking_program(),
            duration: 3000.0,
            ..ScenarioConfig::default()
        }
    }

    pub fn decoupling() -> ScenarioConfig {
        ScenarioConfig {
            mode: Mode::NonlinearDecoupling,
            reference: decoupling_program(),
            duration: 5000.0,
            ..ScenarioConfig::default()
        }
    }

    pub fn estimation() -> ScenarioConfig {
        ScenarioConfig {
            mode: Mode::AkfEstimation,
            reference: tracking_program(),
            noise_std: [0.005; 3],
            seed: 2024,
            duration: 3000.0,
            ..ScenarioConfig::default()
        }
    }

    pub fn open_loop() -> ScenarioConfig {
        let p = PlantParams::default();
        let op = OperatingPoint::default();
        let u = crate::linmodel::balancing_input(&p, &op.y0);
        ScenarioConfig { mode: Mode::OpenLoop, open_loop_input: Some([u[0], u[1]]), ..ScenarioConfig::default() }
    }
}
