//! TOML experiment configuration: schema, defaults, validation and the
//! resolved form consumed by the harness.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feedback::PidGains;
use crate::lti::{NormalizationConstants, SecondOrderModel};
use crate::pneumatics::{CouplingParams, PneumaticConstants, ValveParams};
use crate::trajectory::{generate_trapezoid, paper_reference_trajectory, Trajectory, TrapezoidSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    Nominal,
    Pneumatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    None,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateLaw {
    Noilc,
    PdIlc,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub rates: RatesSection,
    pub model: ModelSection,
    pub normalization: NormalizationSection,
    pub weights: WeightsSection,
    pub gains: GainsSection,
    pub pneumatics: PneumaticsSection,
    pub valves: ValvesSection,
    pub coupling: CouplingSection,
    pub trajectory: TrajectorySection,
    pub pd_ilc: PdIlcSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSection::default(),
            rates: RatesSection::default(),
            model: ModelSection::default(),
            normalization: NormalizationSection::default(),
            weights: WeightsSection::default(),
            gains: GainsSection::default(),
            pneumatics: PneumaticsSection::default(),
            valves: ValvesSection::default(),
            coupling: CouplingSection::default(),
            trajectory: TrajectorySection::default(),
            pd_ilc: PdIlcSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub plant: PlantKind,
    pub iterations: u32,
    pub seed: u64,
    /// Angle measurement noise, standard deviation in rad.
    pub noise_std_rad: f64,
    /// Round measured angles to the encoder resolution (0.1 degree).
    pub quantize_encoder: bool,
    pub disturbance: DisturbanceKind,
    /// Amplitude of the fixed input-side disturbance, normalized units.
    pub disturbance_amplitude: f64,
    pub law: UpdateLaw,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            plant: PlantKind::Pneumatic,
            iterations: 30,
            seed: 1,
            noise_std_rad: 0.0,
            quantize_encoder: true,
            disturbance: DisturbanceKind::None,
            disturbance_amplitude: 0.05,
            law: UpdateLaw::Noilc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSection {
    pub inner_hz: f64,
    pub outer_hz: f64,
    pub pwm_hz: f64,
}

impl Default for RatesSection {
    fn default() -> Self {
        Self { inner_hz: 200.0, outer_hz: 50.0, pwm_hz: 200.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kappa_rad_per_bar: f64,
    pub omega0: f64,
    pub delta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { kappa_rad_per_bar: 7.91, omega0: 14.14, delta: 0.31 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizationSection {
    pub angle_scale_rad: f64,
    pub rate_scale_rad_s: f64,
    pub input_scale_pa: f64,
}

impl Default for NormalizationSection {
    fn default() -> Self {
        Self {
            angle_scale_rad: std::f64::consts::PI,
            rate_scale_rad_s: 10.0 * std::f64::consts::PI,
            input_scale_pa: 1e5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub m: f64,
    pub s: f64,
    pub w: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        Self { m: 1.0, s: 0.1, w: 2e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub k_ff_pa: f64,
    pub k_p_pa: f64,
    pub k_i_pa: f64,
    pub k_d_pa: f64,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self { k_ff_pa: 0.35e5, k_p_pa: 0.6e5, k_i_pa: 0.8e5, k_d_pa: -0.02e5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PneumaticsSection {
    pub gas_constant: f64,
    pub temperature_k: f64,
    pub volume_m3: f64,
    pub p_ambient_pa: f64,
    pub p_source_pa: f64,
    pub p_max_pa: f64,
    pub tau_p_s: f64,
    /// Moving-average window (samples) of the measured-pressure smoother;
    /// 0 or 1 disables it.
    pub filter_window: u32,
}

impl Default for PneumaticsSection {
    fn default() -> Self {
        Self {
            gas_constant: 287.0,
            temperature_k: 293.0,
            volume_m3: 0.45e-3,
            p_ambient_pa: 1.0e5,
            p_source_pa: 3.0e5,
            p_max_pa: 1.4e5,
            tau_p_s: 0.02,
            filter_window: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValvesSection {
    pub c_flow: f64,
    pub b_crit: f64,
    pub dc_min: f64,
    pub n_parallel: u32,
}

impl Default for ValvesSection {
    fn default() -> Self {
        let v = ValveParams::<f64>::default();
        Self { c_flow: v.c_flow, b_crit: v.b_crit, dc_min: v.dc_min, n_parallel: v.n_parallel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    pub enabled: bool,
    pub gamma: f64,
    pub alpha_range_deg: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { enabled: true, gamma: 0.3, alpha_range_deg: 95.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    /// "paper", "waypoints" or "csv".
    pub kind: String,
    /// Waypoints as (time s, angle deg) pairs; used by kind = "waypoints".
    pub waypoints: Vec<(f64, f64)>,
    pub a_max_deg_s2: f64,
    pub v_max_deg_s: f64,
    pub duration_s: f64,
    /// Path of a (t, angle rad) CSV; used by kind = "csv".
    pub csv_path: String,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            kind: "paper".into(),
            waypoints: Vec::new(),
            a_max_deg_s2: 12000.0,
            v_max_deg_s: 351.4718625761429,
            duration_s: 8.0,
            csv_path: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdIlcSection {
    pub kp: f64,
    pub kd: f64,
    pub q_cutoff_hz: f64,
}

impl Default for PdIlcSection {
    fn default() -> Self {
        Self { kp: 0.4, kd: 0.01, q_cutoff_hz: 4.0 }
    }
}

/// Everything the harness needs, validated and with the reference
/// trajectory realized.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedExperiment {
    pub plant_kind: PlantKind,
    pub iterations: u32,
    pub seed: u64,
    pub noise_std_rad: f64,
    pub quantize_encoder: bool,
    pub disturbance: DisturbanceKind,
    pub disturbance_amplitude: f64,
    pub law: UpdateLaw,
    pub t_outer: f64,
    pub t_inner: f64,
    pub inner_per_outer: u32,
    pub model: SecondOrderModel<f64>,
    pub norms: NormalizationConstants<f64>,
    pub weights: WeightsSection,
    pub gains: PidGains<f64>,
    pub consts: PneumaticConstants<f64>,
    pub valves: ValveParams<f64>,
    pub coupling: CouplingParams<f64>,
    pub filter_window: u32,
    pub trajectory: Trajectory<f64>,
    pub pd_ilc: PdIlcSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// SHA-256 of the canonical JSON form; stable under TOML key
    /// reordering since fields serialize in declaration order.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialization");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validates every section and realizes the trajectory. `base_dir`
    /// anchors relative CSV paths.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<ResolvedExperiment> {
        let r = &self.rates;
        if !(r.inner_hz > 0.0 && r.outer_hz > 0.0 && r.pwm_hz > 0.0) {
            return Err(Error::Config("rates must be positive".into()));
        }
        let ratio = r.inner_hz / r.outer_hz;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::Config(format!(
                "inner rate ({} Hz) must be an integer multiple of the outer rate ({} Hz)",
                r.inner_hz, r.outer_hz
            )));
        }
        let inner_per_outer = ratio.round() as u32;
        let t_outer = 1.0 / r.outer_hz;
        let t_inner = 1.0 / r.inner_hz;

        if self.experiment.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.experiment.noise_std_rad < 0.0 {
            return Err(Error::Config("noise std must be non-negative".into()));
        }
        if self.experiment.disturbance == DisturbanceKind::Fixed
            && self.experiment.plant == PlantKind::Pneumatic
        {
            return Err(Error::Config(
                "the fixed disturbance is only defined for the nominal plant; the pneumatic plant \
                 carries its own repetitive dynamics"
                    .into(),
            ));
        }

        let model = SecondOrderModel::new(self.model.kappa_rad_per_bar, self.model.omega0, self.model.delta)?;
        let norms = NormalizationConstants::new(
            self.normalization.angle_scale_rad,
            self.normalization.rate_scale_rad_s,
            self.normalization.input_scale_pa,
        )?;
        let gains = PidGains::new(self.gains.k_ff_pa, self.gains.k_p_pa, self.gains.k_i_pa, self.gains.k_d_pa)?;

        let consts = PneumaticConstants {
            gas_constant: self.pneumatics.gas_constant,
            temperature: self.pneumatics.temperature_k,
            volume: self.pneumatics.volume_m3,
            p_ambient: self.pneumatics.p_ambient_pa,
            p_source: self.pneumatics.p_source_pa,
            p_max: self.pneumatics.p_max_pa,
            tau_p: self.pneumatics.tau_p_s,
        };
        consts.validate()?;
        let valves = ValveParams {
            c_flow: self.valves.c_flow,
            b_crit: self.valves.b_crit,
            dc_min: self.valves.dc_min,
            n_parallel: self.valves.n_parallel,
        };
        valves.validate()?;
        let coupling = if self.coupling.enabled {
            CouplingParams { gamma: self.coupling.gamma, alpha_range: self.coupling.alpha_range_deg.to_radians() }
        } else {
            CouplingParams { gamma: 0.0, alpha_range: self.coupling.alpha_range_deg.to_radians() }
        };
        coupling.validate()?;

        if !(self.weights.m >= 0.0 && self.weights.s > 0.0 && self.weights.w >= 0.0) {
            return Err(Error::Config("weights need m >= 0, s > 0, w >= 0".into()));
        }

        let trajectory = match self.trajectory.kind.as_str() {
            "paper" => paper_reference_trajectory(t_outer)?,
            "waypoints" => {
                let spec = TrapezoidSpec {
                    waypoints: self
                        .trajectory
                        .waypoints
                        .iter()
                        .map(|(t, deg)| (*t, deg.to_radians()))
                        .collect(),
                    a_max: self.trajectory.a_max_deg_s2.to_radians(),
                    v_max: self.trajectory.v_max_deg_s.to_radians(),
                    ts: t_outer,
                    duration: self.trajectory.duration_s,
                };
                generate_trapezoid(&spec)?
            }
            "csv" => {
                if self.trajectory.csv_path.is_empty() {
                    return Err(Error::Config("trajectory.kind = \"csv\" needs csv_path".into()));
                }
                let path = Path::new(&self.trajectory.csv_path);
                let full = match (path.is_relative(), base_dir) {
                    (true, Some(base)) => base.join(path),
                    _ => path.to_path_buf(),
                };
                let traj = Trajectory::<f64>::read_csv(&full)?;
                if (traj.ts - t_outer).abs() > 1e-9 {
                    return Err(Error::Config(format!(
                        "trajectory CSV sampled at {} s but the outer loop runs at {} s",
                        traj.ts, t_outer
                    )));
                }
                traj
            }
            other => return Err(Error::Config(format!("unknown trajectory kind {other:?}"))),
        };
        if trajectory.len() < 2 {
            return Err(Error::EmptyTrajectory { min: 2, got: trajectory.len() });
        }

        Ok(ResolvedExperiment {
            plant_kind: self.experiment.plant,
            iterations: self.experiment.iterations,
            seed: self.experiment.seed,
            noise_std_rad: self.experiment.noise_std_rad,
            quantize_encoder: self.experiment.quantize_encoder,
            disturbance: self.experiment.disturbance,
            disturbance_amplitude: self.experiment.disturbance_amplitude,
            law: self.experiment.law,
            t_outer,
            t_inner,
            inner_per_outer,
            model,
            norms,
            weights: self.weights.clone(),
            gains,
            consts,
            valves,
            coupling,
            filter_window: self.pneumatics.filter_window,
            trajectory,
            pd_ilc: self.pd_ilc.clone(),
        })
    }
}
