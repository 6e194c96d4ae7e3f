//! Four-channel bilateral control realized on velocity-commanded robots.
//!
//! Torque references come from the position/force exchange between master and
//! slave; a disturbance observer adds its compensation; the admittance
//! `1/(M·s + D)` turns the result into a velocity command.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::signal::{Admittance, AdmittanceParams, DobState, FilterState};
use crate::sim::{InertiaParams, JointState};

pub const TABLE_KP: [f64; 6] = [9.0, 16.0, 16.0, 4.0, 9.0, 16.0];
pub const TABLE_KD: [f64; 6] = [6.0, 8.0, 8.0, 4.0, 6.0, 8.0];
pub const TABLE_KF: [f64; 6] = [0.13, 0.05, 0.05, 0.10, 0.2, 0.2];
pub const TABLE_VIRTUAL_MASS: [f64; 6] = [0.2, 0.5, 0.5, 0.3, 0.1, 0.1];
pub const TABLE_OMEGA: f64 = 30.0;
pub const TABLE_PSEUDO_DIFF_CUTOFF: f64 = 20.0;
pub const TABLE_DOB_CUTOFF: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
    pub kf: Vec<f64>,
    pub inertia: InertiaParams,
    pub admittance: AdmittanceParams,
    /// Pseudo-derivative cutoff, rad/s.
    pub g: f64,
    /// Disturbance observer cutoff, rad/s.
    pub g_dob: f64,
}

impl GainSet {
    /// Identified gains of the first `n` joints (base first).
    pub fn table(n: usize) -> Result<Self> {
        let inertia = InertiaParams::table(n)?;
        let gains = Self {
            kp: TABLE_KP[..n].to_vec(),
            kd: TABLE_KD[..n].to_vec(),
            kf: TABLE_KF[..n].to_vec(),
            inertia,
            admittance: AdmittanceParams::new(TABLE_VIRTUAL_MASS[..n].to_vec(), TABLE_OMEGA)?,
            g: TABLE_PSEUDO_DIFF_CUTOFF,
            g_dob: TABLE_DOB_CUTOFF,
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn joints(&self) -> usize {
        self.kp.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kp.len();
        if n == 0 {
            return Err(Error::Empty("gain set"));
        }
        ensure_len("kd gains", n, self.kd.len())?;
        ensure_len("kf gains", n, self.kf.len())?;
        ensure_len("inertia", n, self.inertia.len())?;
        ensure_len("virtual masses", n, self.admittance.len())?;
        for (name, v) in [("kp", &self.kp), ("kd", &self.kd)] {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidParam(format!("{name} gains must be > 0")));
            }
        }
        if self.kf.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParam("kf gains must be >= 0".into()));
        }
        if !(self.g > 0.0 && self.g.is_finite()) || !(self.g_dob > 0.0 && self.g_dob.is_finite())
        {
            return Err(Error::InvalidParam("filter cutoffs must be > 0".into()));
        }
        Ok(())
    }
}

/// Slave-side law: `J(Kp + Kd·s)(θm − θs) − Kf(τm + τs)`.
///
/// `master` is either the measured master (teleoperation) or the predicted one
/// (autonomous operation); nothing else differs between the two phases.
pub fn slave_torque_ref(master: &JointState, slave: &JointState, gains: &GainSet) -> Vec<f64> {
    side_torque_ref(slave, master, gains)
}

/// Master-side law: `J(Kp + Kd·s)(θs − θm) − Kf(τm + τs)`.
pub fn master_torque_ref(master: &JointState, slave: &JointState, gains: &GainSet) -> Vec<f64> {
    side_torque_ref(master, slave, gains)
}

fn side_torque_ref(own: &JointState, other: &JointState, gains: &GainSet) -> Vec<f64> {
    let j = gains.inertia.values();
    (0..gains.joints())
        .map(|i| {
            let position = j[i]
                * (gains.kp[i] * (other.theta[i] - own.theta[i])
                    + gains.kd[i] * (other.dtheta[i] - own.dtheta[i]));
            position - gains.kf[i] * (own.tau[i] + other.tau[i])
        })
        .collect()
}

pub fn bilateral_torque_refs(
    master: &JointState,
    slave: &JointState,
    gains: &GainSet,
) -> (Vec<f64>, Vec<f64>) {
    (
        master_torque_ref(master, slave, gains),
        slave_torque_ref(master, slave, gains),
    )
}

pub fn autonomous_torque_ref(
    pred_master: &JointState,
    slave: &JointState,
    gains: &GainSet,
) -> Vec<f64> {
    slave_torque_ref(pred_master, slave, gains)
}

/// Per-robot filter bank: pseudo-derivative, observer and admittance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotFilters {
    pdiff: Vec<FilterState>,
    dob: DobState,
    admittance: Admittance,
    /// Admittance input of the previous tick, fed to the observer.
    last_applied: Vec<f64>,
    primed: bool,
}

impl RobotFilters {
    pub fn new(gains: &GainSet, dt: f64) -> Result<Self> {
        let n = gains.joints();
        Ok(Self {
            pdiff: (0..n)
                .map(|_| FilterState::new(gains.g, dt))
                .collect::<Result<_>>()?,
            dob: DobState::new(n, gains.g_dob, dt)?,
            admittance: Admittance::new(gains.admittance.clone(), dt)?,
            last_applied: vec![0.0; n],
            primed: false,
        })
    }

    /// Replaces the raw velocity with the pseudo-differentiated angle.
    pub fn measure(&mut self, raw: &JointState) -> Result<JointState> {
        ensure_len("measured angles", self.pdiff.len(), raw.theta.len())?;
        if !self.primed {
            for (fs, &th) in self.pdiff.iter_mut().zip(&raw.theta) {
                fs.prime_input(th);
            }
            self.primed = true;
        }
        let dtheta = self
            .pdiff
            .iter_mut()
            .zip(&raw.theta)
            .map(|(fs, &th)| fs.pseudo_derivative_step(th))
            .collect::<Result<_>>()?;
        Ok(JointState {
            theta: raw.theta.clone(),
            dtheta,
            tau: raw.tau.clone(),
        })
    }

    /// Observer compensation then admittance; returns `(vel_cmd, applied torque)`.
    pub fn actuate(
        &mut self,
        tau_ref: &[f64],
        measured_velocity: &[f64],
        gains: &GainSet,
        use_dob: bool,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let applied: Vec<f64> = if use_dob {
            let d = self
                .dob
                .step(measured_velocity, &self.last_applied, &gains.inertia)?;
            tau_ref.iter().zip(&d).map(|(t, d)| t + d).collect()
        } else {
            tau_ref.to_vec()
        };
        let vel_cmd = self.admittance.step(&applied)?;
        self.last_applied.clone_from(&applied);
        Ok((vel_cmd, applied))
    }
}

/// Everything one control period produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub vel_cmd_m: Option<Vec<f64>>,
    pub vel_cmd_s: Vec<f64>,
    pub master: JointState,
    pub slave: JointState,
    pub tau_ref_m: Option<Vec<f64>>,
    pub tau_ref_s: Vec<f64>,
}

/// Controller state owned by a single control loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerTickState {
    pub gains: GainSet,
    pub dt: f64,
    pub use_dob: bool,
    master: RobotFilters,
    slave: RobotFilters,
}

impl ControllerTickState {
    pub fn new(gains: GainSet, dt: f64) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            master: RobotFilters::new(&gains, dt)?,
            slave: RobotFilters::new(&gains, dt)?,
            gains,
            dt,
            use_dob: true,
        })
    }

    pub fn without_dob(mut self) -> Self {
        self.use_dob = false;
        self
    }

    /// Teleoperation tick: both robots measured, both commanded.
    pub fn bilateral_tick(
        &mut self,
        master_raw: &JointState,
        slave_raw: &JointState,
    ) -> Result<TickOutput> {
        let master = self.master.measure(master_raw)?;
        let slave = self.slave.measure(slave_raw)?;
        let (tau_m, tau_s) = bilateral_torque_refs(&master, &slave, &self.gains);
        let (vel_m, _) = self
            .master
            .actuate(&tau_m, &master.dtheta, &self.gains, self.use_dob)?;
        let (vel_s, _) = self
            .slave
            .actuate(&tau_s, &slave.dtheta, &self.gains, self.use_dob)?;
        Ok(TickOutput {
            vel_cmd_m: Some(vel_m),
            vel_cmd_s: vel_s,
            master,
            slave,
            tau_ref_m: Some(tau_m),
            tau_ref_s: tau_s,
        })
    }

    /// Autonomous tick: the master is a prediction and only the slave is driven.
    pub fn autonomous_tick(
        &mut self,
        pred_master: &JointState,
        slave_raw: &JointState,
    ) -> Result<TickOutput> {
        let slave = self.measure_slave(slave_raw)?;
        self.autonomous_tick_measured(pred_master, slave)
    }

    /// Filters a raw slave reading; call once per tick before
    /// [`Self::autonomous_tick_measured`].
    pub fn measure_slave(&mut self, slave_raw: &JointState) -> Result<JointState> {
        self.slave.measure(slave_raw)
    }

    pub fn autonomous_tick_measured(
        &mut self,
        pred_master: &JointState,
        slave: JointState,
    ) -> Result<TickOutput> {
        let tau_s = autonomous_torque_ref(pred_master, &slave, &self.gains);
        let (vel_s, _) = self
            .slave
            .actuate(&tau_s, &slave.dtheta, &self.gains, self.use_dob)?;
        Ok(TickOutput {
            vel_cmd_m: None,
            vel_cmd_s: vel_s,
            master: pred_master.clone(),
            slave,
            tau_ref_m: None,
            tau_ref_s: tau_s,
        })
    }
}
