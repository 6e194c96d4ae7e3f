//! Velocity-servoed joint mechanisms and the planar mop-on-desk environment.
//!
//! Each robot is a chain of joints with diagonal inertia whose inner loop only
//! tracks a velocity command. The environment is a planar serial arm holding a
//! rigid mop whose tip can press on a horizontal desk.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};

/// Identified joint inertias of the 6-DOF arm, base to tip.
pub const TABLE_INERTIA: [f64; 6] = [0.939, 1.32, 1.32, 0.363, 0.196, 0.246];

/// Diagonal joint-space inertia.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaParams {
    j: Vec<f64>,
}

impl InertiaParams {
    pub fn new(j: Vec<f64>) -> Result<Self> {
        if j.is_empty() {
            return Err(Error::Empty("inertia vector"));
        }
        if let Some(bad) = j.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParam(format!(
                "joint inertia must be finite and positive, got {bad}"
            )));
        }
        Ok(Self { j })
    }

    /// First `n` entries of the identified table.
    pub fn table(n: usize) -> Result<Self> {
        if n == 0 || n > TABLE_INERTIA.len() {
            return Err(Error::InvalidParam(format!(
                "joint count must be in 1..=6 for the identified inertias, got {n}"
            )));
        }
        Self::new(TABLE_INERTIA[..n].to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.j
    }

    pub fn len(&self) -> usize {
        self.j.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j.is_empty()
    }
}

/// Angle, angular velocity and torque of every joint of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub theta: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub tau: Vec<f64>,
}

impl JointState {
    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![0.0; n],
            dtheta: vec![0.0; n],
            tau: vec![0.0; n],
        }
    }

    pub fn at_rest(theta: Vec<f64>) -> Self {
        let n = theta.len();
        Self {
            theta,
            dtheta: vec![0.0; n],
            tau: vec![0.0; n],
        }
    }

    pub fn joints(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.theta.len();
        ensure_len("joint state velocity", n, self.dtheta.len())?;
        ensure_len("joint state torque", n, self.tau.len())?;
        ensure_finite("joint state angle", &self.theta)?;
        ensure_finite("joint state velocity", &self.dtheta)?;
        ensure_finite("joint state torque", &self.tau)
    }

    /// `[theta.., dtheta.., tau..]`, the layout the learner consumes.
    pub fn to_features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.joints());
        out.extend_from_slice(&self.theta);
        out.extend_from_slice(&self.dtheta);
        out.extend_from_slice(&self.tau);
        out
    }

    pub fn from_features(features: &[f64]) -> Result<Self> {
        if features.len() % 3 != 0 || features.is_empty() {
            return Err(Error::InvalidParam(format!(
                "feature vector length {} is not a positive multiple of 3",
                features.len()
            )));
        }
        let n = features.len() / 3;
        Ok(Self {
            theta: features[..n].to_vec(),
            dtheta: features[n..2 * n].to_vec(),
            tau: features[2 * n..].to_vec(),
        })
    }
}

/// One robot in velocity-control mode.
///
/// The inner servo is a first-order lag from the velocity command to the joint
/// velocity. External torque perturbs the velocity through the joint inertia,
/// and the servo rejects it with the same time constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSim {
    pub state: JointState,
    pub servo_time_constant: f64,
    pub velocity_limit: f64,
    pub inertia: InertiaParams,
}

impl RobotSim {
    pub fn new(
        theta0: Vec<f64>,
        servo_time_constant: f64,
        velocity_limit: f64,
        inertia: InertiaParams,
    ) -> Result<Self> {
        ensure_len("initial joint angles", inertia.len(), theta0.len())?;
        ensure_finite("initial joint angles", &theta0)?;
        if !(servo_time_constant > 0.0) {
            return Err(Error::InvalidParam(format!(
                "servo time constant must be > 0, got {servo_time_constant}"
            )));
        }
        if !(velocity_limit > 0.0) {
            return Err(Error::InvalidParam(format!(
                "velocity limit must be > 0, got {velocity_limit}"
            )));
        }
        Ok(Self {
            state: JointState::at_rest(theta0),
            servo_time_constant,
            velocity_limit,
            inertia,
        })
    }

    pub fn joints(&self) -> usize {
        self.inertia.len()
    }

    /// Advances the servo by `dt`.
    ///
    /// The velocity update is the exact zero-order-hold solution of
    /// `T·v' = vel_cmd − v + T·ext/J` over one step, the angle update is
    /// semi-implicit Euler on the new velocity, and `tau` is the torque a joint
    /// sensor would read: `J·Δv/dt − ext`.
    pub fn step(&mut self, vel_cmd: &[f64], ext_torque: &[f64], dt: f64) -> Result<()> {
        let n = self.joints();
        ensure_len("velocity command", n, vel_cmd.len())?;
        ensure_len("external torque", n, ext_torque.len())?;
        ensure_finite("velocity command", vel_cmd)?;
        ensure_finite("external torque", ext_torque)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
        }

        let tc = self.servo_time_constant;
        // decay factor and the effective integration time of a constant drive
        let (decay, hold) = if tc.is_infinite() {
            (1.0, dt)
        } else {
            let em1 = (-dt / tc).exp_m1();
            (1.0 + em1, -em1 * tc)
        };
        let servo_gain = 1.0 - decay;

        for i in 0..n {
            let j = self.inertia.values()[i];
            let v_old = self.state.dtheta[i];
            let mut v = v_old + (vel_cmd[i] - v_old) * servo_gain + ext_torque[i] / j * hold;
            v = v.clamp(-self.velocity_limit, self.velocity_limit);
            self.state.dtheta[i] = v;
            self.state.theta[i] += v * dt;
            self.state.tau[i] = j * (v - v_old) / dt - ext_torque[i];
        }
        Ok(())
    }
}

/// Free-function form of [`RobotSim::step`] with value semantics.
pub fn velocity_servo_step(
    robot: &RobotSim,
    vel_cmd: &[f64],
    ext_torque: &[f64],
    dt: f64,
) -> Result<RobotSim> {
    let mut next = robot.clone();
    next.step(vel_cmd, ext_torque, dt)?;
    Ok(next)
}

/// Planar arm, mop and desk geometry plus the contact law constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvParams {
    pub link_lengths: Vec<f64>,
    pub mop_length: f64,
    pub desk_height: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_coeff: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            link_lengths: vec![0.3, 0.25],
            mop_length: 0.48,
            desk_height: -0.19,
            contact_stiffness: 1000.0,
            contact_damping: 10.0,
            friction_coeff: 0.3,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("link lengths", &self.link_lengths)?;
        if self.link_lengths.iter().any(|l| *l < 0.0) {
            return Err(Error::InvalidParam("link lengths must be >= 0".into()));
        }
        if !(self.mop_length > 0.0 && self.mop_length.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "mop length must be > 0, got {}",
                self.mop_length
            )));
        }
        if !self.desk_height.is_finite() {
            return Err(Error::NonFinite("desk height"));
        }
        if !(self.contact_stiffness >= 0.0 && self.contact_stiffness.is_finite()) {
            return Err(Error::InvalidParam("contact stiffness must be >= 0".into()));
        }
        if !(self.contact_damping >= 0.0 && self.contact_damping.is_finite()) {
            return Err(Error::InvalidParam("contact damping must be >= 0".into()));
        }
        if !(self.friction_coeff >= 0.0 && self.friction_coeff.is_finite()) {
            return Err(Error::InvalidParam("friction coefficient must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_mop_length(&self, mop_length: f64) -> Self {
        Self {
            mop_length,
            ..self.clone()
        }
    }

    /// Links followed by the mop, which rides on the joint after the last link.
    fn segments(&self) -> impl Iterator<Item = f64> + '_ {
        self.link_lengths
            .iter()
            .copied()
            .chain(std::iter::once(self.mop_length))
    }
}

/// Mop tip position and absolute orientation in the arm plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPose {
    pub x: f64,
    pub y: f64,
    pub angle: f64,
}

fn segment_angles(theta: &[f64], env: &EnvParams) -> Vec<f64> {
    let mut phi = 0.0;
    (0..=env.link_lengths.len())
        .map(|k| {
            phi += theta.get(k).copied().unwrap_or(0.0);
            phi
        })
        .collect()
}

fn check_chain_input(theta: &[f64], env: &EnvParams) -> Result<()> {
    if theta.len() < env.link_lengths.len() {
        return Err(Error::Shape {
            what: "joint angles for kinematics",
            expected: env.link_lengths.len(),
            got: theta.len(),
        });
    }
    ensure_finite("joint angles", theta)
}

/// End point of the first `count` segments of the chain.
fn chain_point(theta: &[f64], env: &EnvParams, count: usize) -> [f64; 2] {
    let phis = segment_angles(theta, env);
    env.segments()
        .zip(&phis)
        .take(count)
        .fold([0.0, 0.0], |[x, y], (l, phi)| [x + l * phi.cos(), y + l * phi.sin()])
}

/// Jacobian of the end point of the first `count` segments, `[row_x, row_y]`.
fn chain_jacobian(theta: &[f64], env: &EnvParams, count: usize) -> [Vec<f64>; 2] {
    let n = theta.len();
    let phis = segment_angles(theta, env);
    let lengths: Vec<f64> = env.segments().take(count).collect();
    let mut jx = vec![0.0; n];
    let mut jy = vec![0.0; n];
    // column k collects every segment at or beyond joint k
    for (k, (cx, cy)) in jx.iter_mut().zip(jy.iter_mut()).enumerate() {
        for s in k..lengths.len() {
            *cx -= lengths[s] * phis[s].sin();
            *cy += lengths[s] * phis[s].cos();
        }
    }
    [jx, jy]
}

pub fn forward_kinematics(theta: &[f64], env: &EnvParams) -> Result<TipPose> {
    check_chain_input(theta, env)?;
    let [x, y] = chain_point(theta, env, usize::MAX);
    let angle = *segment_angles(theta, env).last().unwrap();
    Ok(TipPose { x, y, angle })
}

/// Positional Jacobian of the mop tip, stored as `[row_x, row_y]`.
pub fn jacobian(theta: &[f64], env: &EnvParams) -> Result<[Vec<f64>; 2]> {
    check_chain_input(theta, env)?;
    Ok(chain_jacobian(theta, env, usize::MAX))
}

/// Where the hand grips the mop: the end of the last link.
pub fn grip_point(theta: &[f64], env: &EnvParams) -> Result<[f64; 2]> {
    check_chain_input(theta, env)?;
    Ok(chain_point(theta, env, env.link_lengths.len()))
}

pub fn grip_jacobian(theta: &[f64], env: &EnvParams) -> Result<[Vec<f64>; 2]> {
    check_chain_input(theta, env)?;
    Ok(chain_jacobian(theta, env, env.link_lengths.len()))
}

pub fn tip_velocity(theta: &[f64], dtheta: &[f64], env: &EnvParams) -> Result<[f64; 2]> {
    let jac = jacobian(theta, env)?;
    ensure_len("joint velocities", theta.len(), dtheta.len())?;
    let dot = |row: &[f64]| row.iter().zip(dtheta).map(|(a, b)| a * b).sum::<f64>();
    Ok([dot(&jac[0]), dot(&jac[1])])
}

/// Spring-damper desk contact with Coulomb friction. Returns the force the desk
/// exerts on the mop tip.
pub fn contact_force(tip: &TipPose, tip_vel: [f64; 2], env: &EnvParams) -> [f64; 2] {
    let penetration = env.desk_height - tip.y;
    if penetration <= 0.0 {
        return [0.0, 0.0];
    }
    let normal = (env.contact_stiffness * penetration - env.contact_damping * tip_vel[1]).max(0.0);
    let tangential = if tip_vel[0] > 0.0 {
        -env.friction_coeff * normal
    } else if tip_vel[0] < 0.0 {
        env.friction_coeff * normal
    } else {
        0.0
    };
    [tangential, normal]
}

/// Maps a tip force to joint torques through the Jacobian transpose.
pub fn external_joint_torque(theta: &[f64], force: [f64; 2], env: &EnvParams) -> Result<Vec<f64>> {
    let [jx, jy] = jacobian(theta, env)?;
    Ok(jx
        .iter()
        .zip(&jy)
        .map(|(a, b)| a * force[0] + b * force[1])
        .collect())
}
