//! TOML experiment configuration.
//!
//! Every section is optional and every key inside a section has a default, so
//! an empty file describes the tiny reference experiment. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoop::AutoOpConfig;
use crate::control::{
    GainSet, TABLE_DOB_CUTOFF, TABLE_KD, TABLE_KF, TABLE_KP, TABLE_OMEGA,
    TABLE_PSEUDO_DIFF_CUTOFF, TABLE_VIRTUAL_MASS,
};
use crate::demo::{episode_setups, mop_length_grid, DemoSetup, OperatorScript, RobotSetup, DEFAULT_INITIAL_THETA};
use crate::error::{Error, Result};
use crate::learn::train::TrainConfig;
use crate::signal::AdmittanceParams;
use crate::sim::{EnvParams, InertiaParams, TABLE_INERTIA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 2 × 32 network, sized for quick runs.
    #[default]
    Tiny,
    /// 4 × 200 network.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSection {
    pub initial_theta: Vec<f64>,
    pub inertia: Vec<f64>,
    pub servo_time_constant: f64,
    pub velocity_limit: f64,
}

impl Default for RobotSection {
    fn default() -> Self {
        Self {
            initial_theta: DEFAULT_INITIAL_THETA.to_vec(),
            inertia: TABLE_INERTIA[..3].to_vec(),
            servo_time_constant: 0.01,
            velocity_limit: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainsSection {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub kf: Vec<f64>,
    pub virtual_mass: Vec<f64>,
    pub omega: f64,
    pub pseudo_diff_cutoff: f64,
    pub dob_cutoff: f64,
    pub use_dob: bool,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self {
            kp: TABLE_KP[..3].to_vec(),
            kd: TABLE_KD[..3].to_vec(),
            kf: TABLE_KF[..3].to_vec(),
            virtual_mass: TABLE_VIRTUAL_MASS[..3].to_vec(),
            omega: TABLE_OMEGA,
            pseudo_diff_cutoff: TABLE_PSEUDO_DIFF_CUTOFF,
            dob_cutoff: TABLE_DOB_CUTOFF,
            use_dob: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoSection {
    pub episodes: usize,
    pub first_mop_length: f64,
    pub mop_length_step: f64,
    /// Relative spread of the operator's amplitude, frequency and press force.
    pub jitter: f64,
    pub dt: f64,
    /// Control ticks per learner grid step.
    pub stride: usize,
    /// Grid steps between the slave input and the master target.
    pub horizon: usize,
}

impl Default for DemoSection {
    fn default() -> Self {
        Self {
            episodes: 15,
            first_mop_length: 0.43,
            mop_length_step: 0.01,
            jitter: 0.05,
            dt: 1e-3,
            stride: 20,
            horizon: 1,
        }
    }
}

/// Train settings as written in the file; the network size falls back to the
/// profile when omitted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augment_factor: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoOpSection {
    /// Seconds between network queries.
    pub nn_period: f64,
    pub duration: f64,
    /// Metrics skip everything before this time.
    pub eval_start: f64,
    pub mop_length: f64,
}

impl Default for AutoOpSection {
    fn default() -> Self {
        let run = AutoOpConfig::default();
        Self {
            nn_period: run.nn_period,
            duration: run.duration,
            eval_start: 4.5,
            mop_length: 0.48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub profile: Profile,
    pub robot: RobotSection,
    pub gains: GainsSection,
    pub env: EnvParams,
    pub operator: OperatorScript,
    pub demo: DemoSection,
    pub train: TrainSection,
    pub autoop: AutoOpSection,
}

impl ExperimentConfig {
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        self.demo_setup()?.validate()?;
        self.train_config().validate()?;
        self.autoop_config().validate()?;
        if self.demo.episodes == 0 || self.demo.stride == 0 || self.demo.horizon == 0 {
            return Err(Error::Config(
                "demo.episodes, demo.stride and demo.horizon must be >= 1".into(),
            ));
        }
        let grid_period = self.demo.stride as f64 * self.demo.dt;
        if (grid_period - self.autoop.nn_period).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "autoop.nn_period {} must equal demo.stride × demo.dt = {grid_period}",
                self.autoop.nn_period
            )));
        }
        if !(0.0..1.0).contains(&self.demo.jitter) {
            return Err(Error::Config(format!(
                "demo.jitter must be in [0, 1), got {}",
                self.demo.jitter
            )));
        }
        Ok(())
    }

    pub fn robot_setup(&self) -> Result<RobotSetup> {
        Ok(RobotSetup {
            initial_theta: self.robot.initial_theta.clone(),
            inertia: InertiaParams::new(self.robot.inertia.clone())?,
            servo_time_constant: self.robot.servo_time_constant,
            velocity_limit: self.robot.velocity_limit,
        })
    }

    pub fn gain_set(&self) -> Result<GainSet> {
        let g = &self.gains;
        let gains = GainSet {
            kp: g.kp.clone(),
            kd: g.kd.clone(),
            kf: g.kf.clone(),
            inertia: InertiaParams::new(self.robot.inertia.clone())?,
            admittance: AdmittanceParams::new(g.virtual_mass.clone(), g.omega)?,
            g: g.pseudo_diff_cutoff,
            g_dob: g.dob_cutoff,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn demo_setup(&self) -> Result<DemoSetup> {
        Ok(DemoSetup {
            robot: self.robot_setup()?,
            gains: self.gain_set()?,
            use_dob: self.gains.use_dob,
            env: self.env.clone(),
            script: self.operator.clone(),
            dt: self.demo.dt,
        })
    }

    pub fn mop_lengths(&self) -> Vec<f64> {
        mop_length_grid(
            self.demo.episodes,
            self.demo.first_mop_length,
            self.demo.mop_length_step,
        )
    }

    /// One setup per demonstration episode.
    pub fn episode_setups(&self, episodes: usize) -> Result<Vec<DemoSetup>> {
        let base = self.demo_setup()?;
        let lengths = mop_length_grid(
            episodes,
            self.demo.first_mop_length,
            self.demo.mop_length_step,
        );
        Ok(episode_setups(&base, &lengths, self.demo.jitter, self.seed))
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = match self.profile {
            Profile::Tiny => TrainConfig::default(),
            Profile::Paper => TrainConfig::paper(),
        };
        let t = &self.train;
        TrainConfig {
            layers: t.layers.unwrap_or(base.layers),
            hidden: t.hidden.unwrap_or(base.hidden),
            epochs: t.epochs.unwrap_or(base.epochs),
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            batch_size: t.batch_size.unwrap_or(base.batch_size),
            window: t.window.unwrap_or(base.window),
            validation_fraction: t.validation_fraction.unwrap_or(base.validation_fraction),
            augment_factor: t.augment_factor.unwrap_or(base.augment_factor),
            noise_scale: t.noise_scale.unwrap_or(base.noise_scale),
            seed: self.seed,
        }
    }

    pub fn autoop_config(&self) -> AutoOpConfig {
        AutoOpConfig {
            nn_period: self.autoop.nn_period,
            duration: self.autoop.duration,
            dt: self.demo.dt,
            use_dob: self.gains.use_dob,
        }
    }
}
