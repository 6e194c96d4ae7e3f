//! Teacher-data collection: a scripted operator teleoperates the slave through
//! the bilateral controller while the slave mops the desk.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ControllerTickState, GainSet};
use crate::dataset::{Dataset, Sequence};
use crate::error::{ensure_len, Error, Result};
use crate::log::{EpisodeLog, LogRow};
use crate::parallel::{map_indexed, Exec};
use crate::sim::{
    contact_force, external_joint_torque, forward_kinematics, grip_jacobian, grip_point,
    tip_velocity, EnvParams,
    InertiaParams, JointState, RobotSim,
};

/// Scripted stand-in for the human demonstrator.
///
/// The operator holds the master by its grip point (the end of the last link)
/// and the mop angle. The grip follows an approach to a fixed height above the
/// desk, then a sinusoidal wipe along x, through a stiff spring-damper. During
/// the approach a rotational spring lowers the mop until its tip just touches
/// the desk. While wiping the operator pushes the mop down with the constant
/// effort that would give `press_force_target` on a mop of
/// `nominal_mop_length`, and the spring only acts if the tip rises above the
/// touch angle. The press is therefore a bounded wrist effort, so a shorter mop
/// with its shorter lever presses harder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatorScript {
    pub grip_center_x: f64,
    pub grip_height: f64,
    pub wipe_amplitude: f64,
    pub wipe_frequency: f64,
    pub press_force_target: f64,
    pub nominal_mop_length: f64,
    pub approach_duration: f64,
    pub press_ramp: f64,
    pub episode_duration: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub rot_stiffness: f64,
    pub rot_damping: f64,
}

impl Default for OperatorScript {
    fn default() -> Self {
        Self {
            grip_center_x: 0.206,
            grip_height: 0.35,
            wipe_amplitude: 0.05,
            wipe_frequency: 0.2,
            press_force_target: 30.0,
            nominal_mop_length: 0.505,
            approach_duration: 4.0,
            press_ramp: 0.5,
            episode_duration: 16.0,
            stiffness: 50000.0,
            damping: 10000.0,
            rot_stiffness: 500.0,
            rot_damping: 50.0,
        }
    }
}

/// Grip position and absolute mop angle the operator aims for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandTarget {
    pub grip: [f64; 2],
    pub angle: f64,
}

fn smoothstep(x: f64) -> f64 {
    let s = x.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

impl OperatorScript {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("approach_duration", self.approach_duration),
            ("wipe_frequency", self.wipe_frequency),
            ("stiffness", self.stiffness),
            ("nominal_mop_length", self.nominal_mop_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be > 0, got {v}")));
            }
        }
        let non_negative = [
            ("episode_duration", self.episode_duration),
            ("wipe_amplitude", self.wipe_amplitude),
            ("press_force_target", self.press_force_target),
            ("damping", self.damping),
            ("rot_stiffness", self.rot_stiffness),
            ("rot_damping", self.rot_damping),
            ("grip_height", self.grip_height),
            ("press_ramp", self.press_ramp),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParam(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.grip_center_x.is_finite() {
            return Err(Error::NonFinite("grip_center_x"));
        }
        if self.grip_height >= self.nominal_mop_length {
            return Err(Error::InvalidParam(format!(
                "grip height {} leaves the nominal mop ({} m) short of the desk",
                self.grip_height, self.nominal_mop_length
            )));
        }
        Ok(())
    }

    /// Saturation level of the wrist effort.
    pub fn press_torque(&self) -> f64 {
        let reach = (self.nominal_mop_length.powi(2) - self.grip_height.powi(2)).sqrt();
        self.press_force_target * reach
    }

    /// Mop angle at which the tip touches the desk from the wiping grip height.
    pub fn touch_angle(&self, env: &EnvParams) -> f64 {
        -(self.grip_height / env.mop_length).clamp(-1.0, 1.0).asin()
    }

    /// Downward wrist effort at time `t`, ramped in after the approach.
    pub fn press_effort(&self, t: f64) -> f64 {
        if t < self.approach_duration {
            0.0
        } else if self.press_ramp > 0.0 {
            self.press_torque() * smoothstep((t - self.approach_duration) / self.press_ramp)
        } else {
            self.press_torque()
        }
    }

    /// Torque about the mop angle for a mop currently at `angle`, before damping.
    pub fn wrist_torque(&self, t: f64, angle: f64, target: f64) -> f64 {
        let spring = self.rot_stiffness * (target - angle);
        if t < self.approach_duration {
            spring
        } else {
            spring.min(0.0) - self.press_effort(t)
        }
    }

    /// Target at time `t` for an operator who started from `start`.
    pub fn desired_hand(&self, t: f64, start: HandTarget, env: &EnvParams) -> HandTarget {
        let goal = [self.grip_center_x, env.desk_height + self.grip_height];
        if t < self.approach_duration {
            let s = smoothstep(t / self.approach_duration);
            HandTarget {
                grip: [
                    start.grip[0] + s * (goal[0] - start.grip[0]),
                    start.grip[1] + s * (goal[1] - start.grip[1]),
                ],
                angle: start.angle + s * (self.touch_angle(env) - start.angle),
            }
        } else {
            let phase =
                2.0 * std::f64::consts::PI * self.wipe_frequency * (t - self.approach_duration);
            HandTarget {
                grip: [goal[0] + self.wipe_amplitude * phase.sin(), goal[1]],
                angle: self.touch_angle(env),
            }
        }
    }
}

/// Current grip position and mop angle of a robot.
pub fn hand_pose(theta: &[f64], env: &EnvParams) -> Result<HandTarget> {
    Ok(HandTarget {
        grip: grip_point(theta, env)?,
        angle: forward_kinematics(theta, env)?.angle,
    })
}

/// Joint torque the operator applies to the master.
///
/// Grip: `Jgᵀ·(K·(g_des − g) − D·ġ)`. Mop angle: the wrist torque minus
/// damping, which acts on every joint since the absolute angle is the sum of
/// the joint angles.
pub fn virtual_operator_torque(
    t: f64,
    master: &JointState,
    script: &OperatorScript,
    start: HandTarget,
    env: &EnvParams,
) -> Result<Vec<f64>> {
    let now = hand_pose(&master.theta, env)?;
    let [jx, jy] = grip_jacobian(&master.theta, env)?;
    let dot = |row: &[f64]| row.iter().zip(&master.dtheta).map(|(a, b)| a * b).sum::<f64>();
    let vel = [dot(&jx), dot(&jy)];
    let des = script.desired_hand(t, start, env);
    let force = [
        script.stiffness * (des.grip[0] - now.grip[0]) - script.damping * vel[0],
        script.stiffness * (des.grip[1] - now.grip[1]) - script.damping * vel[1],
    ];
    let spin: f64 = master.dtheta.iter().sum();
    let wrist = script.wrist_torque(t, now.angle, des.angle) - script.rot_damping * spin;
    Ok(jx
        .iter()
        .zip(&jy)
        .map(|(a, b)| a * force[0] + b * force[1] + wrist)
        .collect())
}

/// Robot-side settings shared by teleoperation and autonomous runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSetup {
    pub initial_theta: Vec<f64>,
    pub inertia: InertiaParams,
    pub servo_time_constant: f64,
    pub velocity_limit: f64,
}

/// Upper arm near vertical, so a horizontal grip stroke barely turns the forearm.
pub const DEFAULT_INITIAL_THETA: [f64; 3] = [1.5, -2.1, 0.2];

impl Default for RobotSetup {
    fn default() -> Self {
        Self {
            initial_theta: DEFAULT_INITIAL_THETA.to_vec(),
            inertia: InertiaParams::table(3).expect("three identified joints"),
            servo_time_constant: 0.01,
            velocity_limit: 3.0,
        }
    }
}

impl RobotSetup {
    pub fn build(&self) -> Result<RobotSim> {
        RobotSim::new(
            self.initial_theta.clone(),
            self.servo_time_constant,
            self.velocity_limit,
            self.inertia.clone(),
        )
    }

    pub fn joints(&self) -> usize {
        self.inertia.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSetup {
    pub robot: RobotSetup,
    pub gains: GainSet,
    pub use_dob: bool,
    pub env: EnvParams,
    pub script: OperatorScript,
    pub dt: f64,
}

impl Default for DemoSetup {
    fn default() -> Self {
        Self {
            robot: RobotSetup::default(),
            gains: GainSet::table(3).expect("three tabulated joints"),
            use_dob: true,
            env: EnvParams::default(),
            script: OperatorScript::default(),
            dt: 1e-3,
        }
    }
}

impl DemoSetup {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        self.env.validate()?;
        self.script.validate()?;
        ensure_len("gain joints", self.robot.joints(), self.gains.joints())?;
        if self.env.link_lengths.len() + 1 != self.robot.joints() {
            return Err(Error::InvalidParam(format!(
                "{} links plus the mop need {} joints, robot has {}",
                self.env.link_lengths.len(),
                self.env.link_lengths.len() + 1,
                self.robot.joints()
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Tip contact force on the slave and the joint torque it produces.
pub(crate) fn slave_contact(slave: &JointState, env: &EnvParams) -> Result<([f64; 2], Vec<f64>)> {
    let tip = forward_kinematics(&slave.theta, env)?;
    let vel = tip_velocity(&slave.theta, &slave.dtheta, env)?;
    let force = contact_force(&tip, vel, env);
    let torque = external_joint_torque(&slave.theta, force, env)?;
    Ok((force, torque))
}

pub(crate) fn check_divergence(t: f64, cmds: &[&[f64]], limit: f64) -> Result<()> {
    for cmd in cmds {
        if let Some(v) = cmd.iter().find(|v| !v.is_finite() || v.abs() > 10.0 * limit) {
            return Err(Error::Divergence {
                t,
                detail: format!("velocity command {v} exceeds 10x the {limit} rad/s limit"),
            });
        }
    }
    Ok(())
}

/// Full closed-loop teleoperated episode at the control rate.
pub fn run_demonstration(setup: &DemoSetup) -> Result<EpisodeLog> {
    setup.validate()?;
    let dt = setup.dt;
    let env = &setup.env;
    let mut master = setup.robot.build()?;
    let mut slave = setup.robot.build()?;
    let mut ctrl = ControllerTickState::new(setup.gains.clone(), dt)?;
    ctrl.use_dob = setup.use_dob;

    let start = hand_pose(&master.state.theta, env)?;
    let steps = (setup.script.episode_duration / dt).round() as usize;
    let mut log = EpisodeLog::new(dt);
    log.rows.reserve(steps);

    for k in 0..steps {
        let t = k as f64 * dt;
        let out = ctrl.bilateral_tick(&master.state, &slave.state)?;
        let vel_m = out.vel_cmd_m.expect("bilateral tick commands the master");
        check_divergence(t, &[&vel_m, &out.vel_cmd_s], master.velocity_limit)?;

        let op_torque = virtual_operator_torque(t, &out.master, &setup.script, start, env)?;
        let (force, ext_s) = slave_contact(&slave.state, env)?;

        log.rows.push(LogRow {
            t,
            master: out.master,
            slave: out.slave,
            vel_cmd_m: vel_m.clone(),
            vel_cmd_s: out.vel_cmd_s.clone(),
            mop_length: env.mop_length,
            contact_force: force,
        });

        master.step(&vel_m, &op_torque, dt)?;
        slave.step(&out.vel_cmd_s, &ext_s, dt)?;
    }
    Ok(log)
}

/// `count` mop lengths starting at `first`, `step` apart.
pub fn mop_length_grid(count: usize, first: f64, step: f64) -> Vec<f64> {
    (0..count).map(|i| first + step * i as f64).collect()
}

/// One setup per episode: the mop length from the grid and a seeded jitter of
/// the operator's wipe amplitude, frequency and press force.
pub fn episode_setups(
    base: &DemoSetup,
    mop_lengths: &[f64],
    jitter: f64,
    seed: u64,
) -> Vec<DemoSetup> {
    mop_lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let mut scale = || 1.0 + jitter * (2.0 * rng.random::<f64>() - 1.0);
            let mut setup = base.clone();
            setup.env.mop_length = len;
            setup.script.wipe_amplitude *= scale();
            setup.script.wipe_frequency *= scale();
            setup.script.press_force_target *= scale();
            setup
        })
        .collect()
}

pub fn run_demonstrations(setups: &[DemoSetup], exec: Exec) -> Result<Vec<EpisodeLog>> {
    map_indexed(exec, setups, |_, s| run_demonstration(s))
        .into_iter()
        .collect()
}

/// Slave features at grid step `k` paired with master features at `k + horizon`.
///
/// Logs are first decimated by `stride` control ticks onto the learner's grid.
pub fn build_dataset(episodes: &[EpisodeLog], stride: usize, horizon: usize) -> Result<Dataset> {
    if stride == 0 || horizon == 0 {
        return Err(Error::InvalidParam(
            "dataset stride and horizon must be >= 1".into(),
        ));
    }
    let mut sequences = Vec::with_capacity(episodes.len());
    for (id, log) in episodes.iter().enumerate() {
        let grid: Vec<&LogRow> = log.rows.iter().step_by(stride).collect();
        if grid.len() <= horizon {
            return Err(Error::InvalidParam(format!(
                "episode {id} has {} grid samples, needs more than the horizon {horizon}",
                grid.len()
            )));
        }
        let pairs = grid.len() - horizon;
        sequences.push(Sequence {
            episode: id,
            inputs: grid[..pairs].iter().map(|r| r.slave.to_features()).collect(),
            targets: grid[horizon..].iter().map(|r| r.master.to_features()).collect(),
        });
    }
    Dataset::new(sequences)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn script() -> OperatorScript {
        OperatorScript::default()
    }

    #[test]
    fn operator_on_trajectory_applies_nothing() {
        let env = EnvParams::default();
        let s = script();
        let theta = DEFAULT_INITIAL_THETA.to_vec();
        let start = hand_pose(&theta, &env).unwrap();
        let master = JointState::at_rest(theta);
        let tau = virtual_operator_torque(0.0, &master, &s, start, &env).unwrap();
        assert!(tau.iter().all(|v| v.abs() < 1e-12), "{tau:?}");
    }

    #[test]
    fn approach_is_monotone_toward_contact() {
        let env = EnvParams::default();
        let s = script();
        let start = HandTarget {
            grip: [0.25, 0.2],
            angle: -0.3,
        };
        let goal = s.desired_hand(s.approach_duration, start, &env);
        let dist = |h: HandTarget| {
            ((h.grip[0] - goal.grip[0]).powi(2)
                + (h.grip[1] - goal.grip[1]).powi(2)
                + (h.angle - goal.angle).powi(2))
            .sqrt()
        };
        let mut prev = f64::INFINITY;
        for k in 0..=400 {
            let t = s.approach_duration * k as f64 / 400.0;
            let d = dist(s.desired_hand(t, start, &env));
            assert!(d <= prev + 1e-12);
            prev = d;
        }
        assert!(prev < 1e-12);
        assert!((goal.grip[1] - (env.desk_height + s.grip_height)).abs() < 1e-12);
        // at the touch angle the mop tip sits exactly on the desk
        let tip_y = goal.grip[1] + env.mop_length * goal.angle.sin();
        assert!((tip_y - env.desk_height).abs() < 1e-12);
    }

    #[test]
    fn wipe_is_periodic() {
        let env = EnvParams::default();
        let s = script();
        let start = hand_pose(&DEFAULT_INITIAL_THETA, &env).unwrap();
        let period = 1.0 / s.wipe_frequency;
        for k in 0..50 {
            let t = s.approach_duration + 0.37 * k as f64;
            let a = s.desired_hand(t, start, &env);
            let b = s.desired_hand(t + period, start, &env);
            assert!((a.grip[0] - b.grip[0]).abs() < 1e-9);
            assert_eq!(a.grip[1], b.grip[1]);
            assert_eq!(a.angle, b.angle);
        }
    }

    #[test]
    fn press_is_bounded_effort_after_ramp() {
        let s = script();
        let t = s.approach_duration + s.press_ramp + 1.0;
        let touch = -0.8;
        // pressed below the touch angle: only the constant effort remains
        assert_eq!(s.wrist_torque(t, touch - 0.05, touch), -s.press_torque());
        // lifted: the spring joins in
        assert!(s.wrist_torque(t, touch + 0.05, touch) < -s.press_torque());
        assert_eq!(s.press_effort(0.0), 0.0);
        let expected = 30.0 * (0.505f64.powi(2) - 0.35f64.powi(2)).sqrt();
        assert!((s.press_torque() - expected).abs() < 1e-12);
    }

    #[test]
    fn default_episode_keeps_contact() {
        let mut setup = DemoSetup::default();
        setup.script.episode_duration = 10.0;
        let log = run_demonstration(&setup).unwrap();
        let wipe: Vec<_> = log
            .rows
            .iter()
            .filter(|r| r.t >= setup.script.approach_duration)
            .collect();
        let touching = wipe.iter().filter(|r| r.contact_force[1] > 0.0).count();
        assert!(touching as f64 > 0.9 * wipe.len() as f64);
    }

    #[test]
    fn grid_includes_test_lengths() {
        let g = mop_length_grid(15, 0.43, 0.01);
        assert_eq!(g.len(), 15);
        assert!(g.iter().any(|l| (l - 0.48).abs() < 1e-9));
        assert!(g.iter().any(|l| (l - 0.53).abs() < 1e-9));
        assert!((g[14] - 0.57).abs() < 1e-9);
        assert!(mop_length_grid(0, 0.4, 0.01).is_empty());
    }

    fn synthetic_log(samples: usize, stride: usize) -> EpisodeLog {
        let mut log = EpisodeLog::new(1e-3);
        for k in 0..samples * stride {
            let x = k as f64;
            log.rows.push(LogRow {
                t: x * 1e-3,
                master: JointState {
                    theta: vec![x, x + 0.5, x + 0.25],
                    dtheta: vec![1.0, 2.0, 3.0],
                    tau: vec![-x, 0.0, 1.0],
                },
                slave: JointState {
                    theta: vec![-x, 0.1, 0.2],
                    dtheta: vec![4.0, 5.0, 6.0],
                    tau: vec![7.0, 8.0, x],
                },
                vel_cmd_m: vec![0.0; 3],
                vel_cmd_s: vec![0.0; 3],
                mop_length: 0.5,
                contact_force: [0.0, 0.0],
            });
        }
        log
    }

    #[test]
    fn dataset_pairs_and_layout() {
        let log = synthetic_log(100, 20);
        let ds = build_dataset(std::slice::from_ref(&log), 20, 1).unwrap();
        let seq = &ds.sequences[0];
        assert_eq!(seq.inputs.len(), 99);
        assert_eq!(seq.targets.len(), 99);
        for k in [0, 17, 98] {
            assert_eq!(seq.targets[k], log.rows[(k + 1) * 20].master.to_features());
            let row = &log.rows[k * 20].slave;
            let mut expected = row.theta.clone();
            expected.extend(&row.dtheta);
            expected.extend(&row.tau);
            assert_eq!(seq.inputs[k], expected);
        }
        let short = synthetic_log(1, 20);
        assert!(build_dataset(&[short], 20, 1).is_err());
    }
}
