//! Closed-loop wiring of plant, measurement, controller and filter.

use nalgebra::{DVector, Vector2, Vector3};
use rand_distr::{Distribution, StandardNormal};

use super::config::{Mode, Realization, ScenarioConfig};
use super::metrics::{compute_metrics, MetricsReport};
use super::noise::{add_measurement_noise, seeded, ScenarioRng};
use super::record::SimRecord;
use crate::akf::{self, AkfConfig, AkfState};
use crate::decoupling::{self, DecouplingLaw};
use crate::error::Result;
use crate::linmodel::{self, DiscreteModel, OperatingPoint};
use crate::plant::{self, PlantParams, PlantState, PumpInput};
use crate::tracking::{self, TrackingGain, TrackingState};

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub records: Vec<SimRecord>,
    pub metrics: MetricsReport,
    /// Eigenvalues of `Q̂` after every filter step, ascending. Empty unless a filter runs.
    pub q_spectra: Vec<Vec<f64>>,
}

fn arr2(v: &Vector2<f64>) -> [f64; 2] {
    [v[0], v[1]]
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

/// Discrete model and tracking gain for the configured operating point.
pub fn design_tracking(cfg: &ScenarioConfig) -> Result<(DiscreteModel, TrackingGain)> {
    let op = cfg.operating_point()?;
    let (_, dm) = linmodel::linearize(&cfg.plant, &op, cfg.t_s)?;
    let am = tracking::augment(&dm)?;
    let gain = match cfg.tracking.gain.matrix_gain(dm.n_states()) {
        Some(g) => g?,
        None => tracking::place_poles(&am, &cfg.tracking.gain.poles().unwrap_or_default())?,
    };
    if gain.k.shape() != (dm.n_inputs(), am.a_bar.nrows()) {
        return Err(crate::Error::Config(format!(
            "gain must be {}x{}, got {:?}",
            dm.n_inputs(),
            am.a_bar.nrows(),
            gain.k.shape()
        )));
    }
    Ok((dm, gain))
}

struct TrackingLoop {
    op: OperatingPoint,
    gain: TrackingGain,
    z: TrackingState,
    anti_windup: bool,
    t_s: f64,
}

impl TrackingLoop {
    /// Absolute pump command from a measurement; advances the integrators.
    fn command(&mut self, y: &Vector3<f64>, y_r: &Vector2<f64>, params: &PlantParams) -> (PumpInput, [bool; 2], [f64; 2]) {
        let (x, _) = linmodel::to_deviation(y, &Vector2::zeros(), &self.op);
        let u_dev = tracking::control(&self.gain, &DVector::from_column_slice(x.as_slice()), &self.z);
        let (_, u_abs) = linmodel::from_deviation(&Vector3::zeros(), &Vector2::new(u_dev[0], u_dev[1]), &self.op);
        let (u, sat) = PumpInput::from(u_abs).clamped(params);
        let z_now = [self.z.z[0], self.z.z[1]];
        if !(self.anti_windup && (sat[0] || sat[1])) {
            let yr = DVector::from_column_slice(y_r.as_slice());
            let y1 = DVector::from_column_slice(&y.as_slice()[..2]);
            self.z = tracking::integrator_step(&self.z, &yr, &y1, self.t_s);
        }
        (u, sat, z_now)
    }
}

struct Estimator {
    cfg: AkfConfig,
    dm: DiscreteModel,
    op: OperatingPoint,
    state: AkfState,
    last_u: Option<DVector<f64>>,
}

impl Estimator {
    fn observe(&mut self, y: &Vector3<f64>) -> Result<[f64; 3]> {
        let y_dev = DVector::from_column_slice((y - self.op.y0).as_slice());
        self.state = match &self.last_u {
            None => akf::update(&self.state, &y_dev, &self.dm.c, &self.cfg.r)?,
            Some(u) => akf::akf_step(&self.state, &self.dm, u, &y_dev, &self.cfg)?,
        };
        let x = &self.state.x;
        Ok([x[0] + self.op.y0[0], x[1] + self.op.y0[1], x[2] + self.op.y0[2]])
    }

    fn applied(&mut self, u: &PumpInput) {
        let du = u.q - self.op.u0;
        self.last_u = Some(DVector::from_column_slice(du.as_slice()));
    }
}

fn disturb(state: PlantState, sigma: &[f64; 3], rng: &mut ScenarioRng, params: &PlantParams) -> PlantState {
    if sigma.iter().all(|&s| s == 0.0) {
        return state;
    }
    let w = Vector3::from_fn(|i, _| sigma[i] * Distribution::<f64>::sample(&StandardNormal, rng));
    PlantState { h: state.h + w }.clamped(params)
}

/// Run one scenario to completion. Deterministic for a fixed config and seed.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutput> {
    cfg.validate()?;
    let params = cfg.plant;
    let op = cfg.operating_point()?;
    let mut rng = seeded(cfg.seed);
    let sigma = Vector3::from(cfg.noise_std);
    let t_s = cfg.t_s;

    let mut tracking_loop = None;
    let mut estimator = None;
    let mut decoupling_law = None;
    match cfg.mode {
        Mode::LinearTracking | Mode::AkfEstimation => {
            let (dm, gain) = design_tracking(cfg)?;
            tracking_loop = Some(TrackingLoop {
                op,
                gain,
                z: TrackingState::zeros(2),
                anti_windup: cfg.tracking.anti_windup,
                t_s,
            });
            if cfg.mode == Mode::AkfEstimation {
                let akf_cfg = cfg.akf.to_config();
                let x0 = cfg.akf.x0_vector() - DVector::from_column_slice(op.y0.as_slice());
                let state = AkfState::new(x0, &akf_cfg)?;
                estimator = Some(Estimator { cfg: akf_cfg, dm, op, state, last_u: None });
            }
        }
        Mode::NonlinearDecoupling => {
            decoupling_law = Some(DecouplingLaw::three_tank(params, cfg.decoupling.outer_gains, &op.y0)?);
        }
        Mode::OpenLoop => {}
    }

    let mut state = PlantState { h: cfg.initial_state() };
    let n = cfg.n_steps();
    let mut records = Vec::with_capacity(n);
    let mut q_spectra = Vec::new();

    for k in 0..n {
        let t = k as f64 * t_s;
        let y = add_measurement_noise(&state.h, &sigma, &mut rng);
        let y_r = (cfg.mode != Mode::OpenLoop).then(|| {
            let r = cfg.reference.at(t);
            Vector2::new(r[0], r[1])
        });

        let mut rec = SimRecord {
            t,
            h: arr3(&state.h),
            y: arr3(&y),
            y_r: y_r.as_ref().map(arr2),
            u: [0.0; 2],
            zeta: None,
            x_hat: None,
            z: None,
            saturated: [false; 2],
        };

        let advanced = match cfg.mode {
            Mode::OpenLoop => {
                let u = PumpInput::from(cfg.open_loop_flows());
                rec.u = arr2(&u.clamped(&params).0.q);
                plant::advance(&state, &u, t_s, &params)?
            }
            Mode::LinearTracking | Mode::AkfEstimation => {
                if let Some(est) = estimator.as_mut() {
                    rec.x_hat = Some(est.observe(&y)?);
                    let mut eig: Vec<f64> = est.state.q.symmetric_eigenvalues().iter().copied().collect();
                    eig.sort_by(f64::total_cmp);
                    q_spectra.push(eig);
                }
                let lp = tracking_loop.as_mut().expect("tracking loop built for this mode");
                let (u, sat, z) = lp.command(&y, &y_r.unwrap(), &params);
                rec.z = Some(z);
                rec.saturated = sat;
                rec.u = arr2(&u.q);
                if let Some(est) = estimator.as_mut() {
                    est.applied(&u);
                }
                plant::advance(&state, &u, t_s, &params)?
            }
            Mode::NonlinearDecoupling => {
                let law = decoupling_law.as_ref().expect("decoupling law built for this mode");
                let yr = y_r.unwrap();
                let zeta = decoupling::outer_loop(law, &yr, &Vector2::new(y[0], y[1]));
                rec.zeta = Some(arr2(&zeta));
                let cmd = decoupling::linearizing_feedback(law, &y, &zeta)?;
                rec.u = arr2(&cmd.u);
                rec.saturated = cmd.saturated;
                match cfg.decoupling.realization {
                    Realization::Sampled => {
                        plant::advance(&state, &PumpInput::from(cmd.u), t_s, &params)?
                    }
                    Realization::Continuous => {
                        // the measurement error is held over the period
                        let offset = y - state.h;
                        let mut failure = None;
                        let adv = plant::advance_with_feedback(&state, t_s, &params, |h| {
                            let meas = h + offset;
                            let zeta = decoupling::outer_loop(law, &yr, &Vector2::new(meas[0], meas[1]));
                            law.raw_feedback(&meas, &zeta).unwrap_or_else(|e| {
                                failure.get_or_insert(e);
                                Vector2::zeros()
                            })
                        })?;
                        if let Some(e) = failure {
                            return Err(e);
                        }
                        adv
                    }
                }
            }
        };

        rec.saturated = [rec.saturated[0] || advanced.saturated[0], rec.saturated[1] || advanced.saturated[1]];
        state = disturb(advanced.state, &cfg.process_noise_std, &mut rng, &params);
        records.push(rec);
    }

    let metrics = compute_metrics(&records, cfg.burn_in, cfg.settle_band);
    Ok(ScenarioOutput { records, metrics, q_spectra })
}
