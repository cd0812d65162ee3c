//! Multi-rate closed-loop experiment engine: one trajectory pass runs the
//! outer PID + correction at the outer rate with the configured number of
//! pneumatic substeps per outer step; the full experiment repeats passes
//! and learns a correction between them.
//!
//! Every iteration starts from the same rest state with a fresh PID
//! state, so the plant-side disturbance is repetitive by construction.

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{DisturbanceKind, PlantKind, ResolvedExperiment, UpdateLaw};
use crate::error::{Error, Result};
use crate::feedback::{pid_step, setpoints_from_input, PidState};
use crate::lti::{discretize_zoh, DiscretePlant, LiftedSystem};
use crate::noilc::{compose_total_input, pd_ilc_update, IlcWeights, NoilcSolver};
use crate::pneumatics::{PneumaticPlant, PneumaticPlantState};

/// Everything recorded over one trajectory pass. Output-side vectors
/// (`y`, `e`, pressures, `alpha_dot`) hold samples k = 1..=N; input-side
/// vectors (`u_*`) hold samples k = 0..N-1.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub j: u32,
    pub rms_deg: f64,
    /// Normalized tracking error.
    pub e: Vec<f64>,
    /// Normalized correction signal that was applied.
    pub u_corr: Vec<f64>,
    /// Total commanded pressure difference, Pa.
    pub u_tot: Vec<f64>,
    /// PID share of the command, Pa.
    pub u_pid: Vec<f64>,
    /// Measured normalized angle.
    pub y: Vec<f64>,
    /// Reference, normalized.
    pub y_des: Vec<f64>,
    /// Actuator pressures at the outer samples, Pa. For the nominal plant
    /// these are the commanded setpoints.
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
    /// Arm angular rate at the outer samples, rad/s.
    pub alpha_dot: Vec<f64>,
    /// Outer steps on which the setpoint map clamped the command.
    pub clamp_count: u64,
    /// Pressure-guard hits inside the pneumatic plant.
    pub guard_events: u64,
    pub inner_steps: u64,
}

/// RMS of a normalized error vector, in degrees.
pub fn rms_error(e: &[f64], angle_scale: f64) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let mean_sq = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    mean_sq.sqrt() * angle_scale * 180.0 / std::f64::consts::PI
}

/// The nominal plant used both for nominal-plant simulation and as the
/// model behind the learning update.
pub fn nominal_plant(setup: &ResolvedExperiment) -> Result<DiscretePlant<f64>> {
    discretize_zoh(&setup.model, &setup.norms, setup.t_outer)
}

enum PlantSim {
    Nominal { plant: DiscretePlant<f64>, x: Vector2<f64> },
    Pneumatic { plant: PneumaticPlant<f64>, state: PneumaticPlantState<f64> },
}

impl PlantSim {
    fn init(setup: &ResolvedExperiment) -> Result<Self> {
        match setup.plant_kind {
            PlantKind::Nominal => Ok(Self::Nominal { plant: nominal_plant(setup)?, x: Vector2::zeros() }),
            PlantKind::Pneumatic => {
                let plant = PneumaticPlant {
                    arm: setup.model,
                    consts: setup.consts,
                    valves: setup.valves,
                    coupling: setup.coupling,
                    filter_window: setup.filter_window,
                };
                Ok(Self::Pneumatic { plant, state: PneumaticPlantState::at_rest(&setup.consts) })
            }
        }
    }

    fn angle_norm(&self, setup: &ResolvedExperiment) -> f64 {
        match self {
            Self::Nominal { x, .. } => x.x,
            Self::Pneumatic { state, .. } => state.alpha / setup.norms.angle_scale,
        }
    }

    fn angle_rate(&self, setup: &ResolvedExperiment) -> f64 {
        match self {
            Self::Nominal { x, .. } => x.y * setup.norms.rate_scale,
            Self::Pneumatic { state, .. } => state.alpha_dot,
        }
    }

    fn pressures(&self, fallback: (f64, f64)) -> (f64, f64) {
        match self {
            Self::Nominal { .. } => fallback,
            Self::Pneumatic { state, .. } => (state.p_a, state.p_b),
        }
    }

    fn guard_events(&self) -> u64 {
        match self {
            Self::Nominal { .. } => 0,
            Self::Pneumatic { state, .. } => state.guard_events,
        }
    }
}

/// Fixed repetitive disturbance entering at the plant input (normalized
/// units); only the nominal plant uses it.
fn input_disturbance(setup: &ResolvedExperiment, k: usize) -> f64 {
    if setup.disturbance != DisturbanceKind::Fixed {
        return 0.0;
    }
    let t = k as f64 * setup.t_outer;
    let two_pi = 2.0 * std::f64::consts::PI;
    setup.disturbance_amplitude * ((two_pi * 0.7 * t + 0.5).sin() + 0.5 * (two_pi * 1.7 * t).sin())
}

struct Measurement {
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
    quantize: bool,
    angle_scale: f64,
}

impl Measurement {
    fn new(setup: &ResolvedExperiment, j: u32) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(setup.seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let normal = (setup.noise_std_rad > 0.0)
            .then(|| Normal::new(0.0, setup.noise_std_rad).expect("valid noise std"));
        Self { rng, normal, quantize: setup.quantize_encoder, angle_scale: setup.norms.angle_scale }
    }

    fn measure(&mut self, y_true_norm: f64) -> f64 {
        let mut rad = y_true_norm * self.angle_scale;
        if let Some(n) = &self.normal {
            rad += n.sample(&mut self.rng);
        }
        if self.quantize {
            // encoder resolves one tenth of a degree
            rad = (rad.to_degrees() * 10.0).round() / 10.0;
            rad = rad.to_radians();
        }
        rad / self.angle_scale
    }
}

fn y_des_at(setup: &ResolvedExperiment, k: usize) -> f64 {
    if k == 0 {
        setup.trajectory.initial / setup.norms.angle_scale
    } else {
        setup.trajectory.samples[k - 1] / setup.norms.angle_scale
    }
}

/// One pass of the cascade with the given correction signal, starting
/// from the documented rest state with a fresh PID state.
pub fn run_single_iteration(setup: &ResolvedExperiment, j: u32, u_corr: &[f64]) -> Result<IterationRecord> {
    let n = setup.trajectory.len();
    if u_corr.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: u_corr.len() });
    }

    let mut sim = PlantSim::init(setup)?;
    let mut meas = Measurement::new(setup, j);
    let mut pid_state = PidState::default();
    let windup_limit = setup.consts.p_max - setup.consts.p_ambient;

    let mut rec = IterationRecord {
        j,
        rms_deg: 0.0,
        e: Vec::with_capacity(n),
        u_corr: u_corr.to_vec(),
        u_tot: Vec::with_capacity(n),
        u_pid: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        y_des: Vec::with_capacity(n),
        p_a: Vec::with_capacity(n),
        p_b: Vec::with_capacity(n),
        alpha_dot: Vec::with_capacity(n),
        clamp_count: 0,
        guard_events: 0,
        inner_steps: 0,
    };

    let mut y_meas = meas.measure(sim.angle_norm(setup));
    for k in 0..n {
        let y_des = y_des_at(setup, k);
        let (u_pid, next_pid) = pid_step(&setup.gains, &pid_state, y_des, y_meas, setup.t_outer, windup_limit);
        pid_state = next_pid;
        let u_tot = compose_total_input(u_pid, u_corr[k], &setup.norms);

        let setpoints = setpoints_from_input(u_tot, &setup.consts);
        let dp_effective = setpoints.0 - setpoints.1;
        if (dp_effective - u_tot).abs() > 1e-9 * (1.0 + u_tot.abs()) {
            rec.clamp_count += 1;
        }

        match &mut sim {
            PlantSim::Nominal { plant, x } => {
                let u_norm = dp_effective / setup.norms.input_scale + input_disturbance(setup, k);
                let (x_next, _) = plant.step(x, u_norm);
                *x = x_next;
                rec.inner_steps += 1;
            }
            PlantSim::Pneumatic { plant, state } => {
                for _ in 0..setup.inner_per_outer {
                    *state = plant.step(state, setpoints, setup.t_inner);
                    rec.inner_steps += 1;
                }
            }
        }

        let y_true = sim.angle_norm(setup);
        if !y_true.is_finite() {
            return Err(Error::Divergence { iteration: j as usize, step: k });
        }
        y_meas = meas.measure(y_true);

        let (p_a, p_b) = sim.pressures(setpoints);
        rec.u_pid.push(u_pid);
        rec.u_tot.push(u_tot);
        rec.y_des.push(y_des_at(setup, k + 1));
        rec.y.push(y_meas);
        rec.e.push(y_des_at(setup, k + 1) - y_meas);
        rec.p_a.push(p_a);
        rec.p_b.push(p_b);
        rec.alpha_dot.push(sim.angle_rate(setup));
    }

    rec.guard_events = sim.guard_events();
    rec.rms_deg = rms_error(&rec.e, setup.norms.angle_scale);
    Ok(rec)
}

/// Replays a recorded total-input trace open loop (no PID, no correction).
/// With noise disabled this reproduces the originating pass bitwise, which
/// is what makes the plant-side disturbance repetitive.
pub fn replay_total_input(setup: &ResolvedExperiment, u_tot: &[f64]) -> Result<Vec<f64>> {
    let n = setup.trajectory.len();
    if u_tot.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: u_tot.len() });
    }
    let mut sim = PlantSim::init(setup)?;
    let mut meas = Measurement::new(setup, 0);
    let mut y = Vec::with_capacity(n);
    let _ = meas.measure(sim.angle_norm(setup));
    for (k, &u) in u_tot.iter().enumerate() {
        let setpoints = setpoints_from_input(u, &setup.consts);
        let dp_effective = setpoints.0 - setpoints.1;
        match &mut sim {
            PlantSim::Nominal { plant, x } => {
                let u_norm = dp_effective / setup.norms.input_scale + input_disturbance(setup, k);
                let (x_next, _) = plant.step(x, u_norm);
                *x = x_next;
            }
            PlantSim::Pneumatic { plant, state } => {
                for _ in 0..setup.inner_per_outer {
                    *state = plant.step(state, setpoints, setup.t_inner);
                }
            }
        }
        let y_true = sim.angle_norm(setup);
        if !y_true.is_finite() {
            return Err(Error::Divergence { iteration: 0, step: k });
        }
        y.push(meas.measure(y_true));
    }
    Ok(y)
}

/// Runs iteration 0 with a zero correction and then the configured number
/// of learning iterations, returning all records in order.
pub fn run_experiment(setup: &ResolvedExperiment) -> Result<Vec<IterationRecord>> {
    let n = setup.trajectory.len();
    let solver = match setup.law {
        UpdateLaw::Noilc => {
            let plant = nominal_plant(setup)?;
            let lifted = LiftedSystem::from_plant(&plant, n)?;
            let weights = IlcWeights::diagonal(n, setup.weights.m, setup.weights.s, setup.weights.w)?;
            Some(NoilcSolver::new(&weights, &lifted)?)
        }
        _ => None,
    };

    let mut u = vec![0.0; n];
    let mut records = Vec::with_capacity(setup.iterations as usize + 1);
    for j in 0..=setup.iterations {
        let rec = run_single_iteration(setup, j, &u)?;
        if j < setup.iterations {
            u = match setup.law {
                UpdateLaw::Noilc => solver.as_ref().expect("solver built").update(&rec.e, &rec.u_corr)?,
                UpdateLaw::PdIlc => pd_ilc_update(
                    setup.pd_ilc.kp,
                    setup.pd_ilc.kd,
                    setup.pd_ilc.q_cutoff_hz,
                    &rec.e,
                    &rec.u_corr,
                    setup.t_outer,
                )?,
                UpdateLaw::None => rec.u_corr.clone(),
            };
        }
        records.push(rec);
    }
    Ok(records)
}
