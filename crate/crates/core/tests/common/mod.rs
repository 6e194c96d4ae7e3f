//! Closed-loop scenarios shared by the integration and acceptance tests.
#![allow(dead_code)]

use bilateral_core::autoop::{run_autonomous, AutoOpConfig, MopSchedule};
use bilateral_core::control::{ControllerTickState, GainSet, RobotFilters};
use bilateral_core::demo::{run_demonstration, DemoSetup, RobotSetup};
use bilateral_core::log::EpisodeLog;
use bilateral_core::signal::DobState;
use bilateral_core::sim::{InertiaParams, RobotSim};

pub const DT: f64 = 1e-3;

/// Smooth, bounded operator torque on the master in free space.
pub fn free_motion_torque(t: f64) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * 0.2;
    let ramp = (t / 1.0).min(1.0);
    vec![
        0.6 * ramp * (w * t).sin(),
        -0.4 * ramp * (1.3 * w * t).sin(),
        0.3 * ramp * (0.7 * w * t).cos(),
    ]
}

/// Worst per-joint |θm − θs| after `settle` seconds of free-space teleoperation.
pub fn free_motion_sync_error(duration: f64, settle: f64) -> f64 {
    let setup = RobotSetup::default();
    let mut master = setup.build().unwrap();
    let mut slave = setup.build().unwrap();
    let mut ctrl = ControllerTickState::new(GainSet::table(3).unwrap(), DT).unwrap();
    let zero = vec![0.0; 3];
    let mut worst: f64 = 0.0;
    let steps = (duration / DT).round() as usize;
    for k in 0..steps {
        let t = k as f64 * DT;
        let out = ctrl.bilateral_tick(&master.state, &slave.state).unwrap();
        if t >= settle {
            for (a, b) in out.master.theta.iter().zip(&out.slave.theta) {
                worst = worst.max((a - b).abs());
            }
        }
        master
            .step(out.vel_cmd_m.as_ref().unwrap(), &free_motion_torque(t), DT)
            .unwrap();
        slave.step(&out.vel_cmd_s, &zero, DT).unwrap();
    }
    worst
}

/// Demonstration with the grip held still while the operator presses.
pub fn static_press() -> (DemoSetup, EpisodeLog) {
    let mut setup = DemoSetup::default();
    setup.script.wipe_amplitude = 0.0;
    setup.script.episode_duration = 12.0;
    let log = run_demonstration(&setup).unwrap();
    (setup, log)
}

/// Per joint: window means of |τm + τs| and |τs| over `start <= t`.
pub fn reflection_ratio(log: &EpisodeLog, start: f64) -> Vec<(f64, f64)> {
    let rows: Vec<_> = log.rows.iter().filter(|r| r.t >= start).collect();
    let n = rows.len() as f64;
    (0..3)
        .map(|j| {
            let sum: f64 = rows.iter().map(|r| r.master.tau[j] + r.slave.tau[j]).sum();
            let s: f64 = rows.iter().map(|r| r.slave.tau[j]).sum();
            ((sum / n).abs(), (s / n).abs())
        })
        .collect()
}

/// Pure-inertia plant `J·v' = τ + d` with a constant disturbance `d` and a
/// varying applied torque; returns the observer's estimate error relative to
/// `d` at time `at`.
pub fn dob_estimate_error(j: f64, d: f64, g_dob: f64, at: f64) -> f64 {
    let inertia = InertiaParams::new(vec![j]).unwrap();
    let mut dob = DobState::new(1, g_dob, DT).unwrap();
    let mut v: f64 = 0.0;
    let steps = (at / DT).round() as usize;
    let mut est = 0.0;
    for k in 0..steps {
        let t = k as f64 * DT;
        let tau = 0.3 * (3.0 * t).sin();
        est = dob.step(&[v], &[tau], &inertia).unwrap()[0];
        v += (tau + d) / j * DT;
    }
    // the observer reports the torque that cancels the disturbance
    ((-est) - d).abs() / d.abs()
}

/// Position servo `τ_ref = J(Kp·e − Kd·θ')` at the tabulated gains, driven
/// through the same filter bank as the bilateral controller, holding its start
/// posture against a constant external torque. Returns the worst |θ − θ_ref|
/// over the last second.
pub fn disturbed_hold_error(use_dob: bool, disturbance: &[f64], duration: f64) -> f64 {
    let setup = RobotSetup::default();
    let gains = GainSet::table(3).unwrap();
    let mut robot: RobotSim = setup.build().unwrap();
    let reference = setup.initial_theta.clone();
    let mut filters = RobotFilters::new(&gains, DT).unwrap();
    let j = gains.inertia.values().to_vec();
    let steps = (duration / DT).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        let t = k as f64 * DT;
        let m = filters.measure(&robot.state).unwrap();
        let tau_ref: Vec<f64> = (0..3)
            .map(|i| j[i] * (gains.kp[i] * (reference[i] - m.theta[i]) - gains.kd[i] * m.dtheta[i]))
            .collect();
        let (vel_cmd, _) = filters.actuate(&tau_ref, &m.dtheta, &gains, use_dob).unwrap();
        if t >= duration - 1.0 {
            for (a, b) in reference.iter().zip(&m.theta) {
                worst = worst.max((a - b).abs());
            }
        }
        robot.step(&vel_cmd, disturbance, DT).unwrap();
    }
    worst
}

/// Demonstration at mop length `l` replayed through the autonomous slave
/// controller with the recorded master as the prediction. Returns the RMS of
/// the slave-angle difference over every joint and tick.
pub fn oracle_replay_rms(l: f64) -> f64 {
    use bilateral_core::learn::ReplayOracle;
    let base = DemoSetup::default();
    let setup = DemoSetup {
        env: base.env.with_mop_length(l),
        ..base
    };
    let demo = run_demonstration(&setup).unwrap();
    let acfg = AutoOpConfig {
        duration: setup.script.episode_duration,
        ..AutoOpConfig::default()
    };
    let oracle = ReplayOracle::new(&demo, 20, 1).unwrap();
    let schedule = MopSchedule::constant(l).unwrap();
    let run = run_autonomous(&setup.robot, &setup.gains, &setup.env, &acfg, &schedule, oracle).unwrap();
    let (mut se, mut n) = (0.0, 0usize);
    for (a, b) in run.log.rows.iter().zip(&demo.rows) {
        for (x, y) in a.slave.theta.iter().zip(&b.slave.theta) {
            se += (x - y) * (x - y);
            n += 1;
        }
    }
    (se / n as f64).sqrt()
}

/// Worst componentwise relative error between BPTT and central differences on
/// a 2-layer, 2-unit model over 3-step sequences, across `draws` random
/// parameter sets. Components smaller than `floor` are compared against it.
pub fn gradient_check_worst(draws: usize, seed: u64, floor: f64) -> f64 {
    use bilateral_core::learn::lstm::{loss_and_gradients, LstmModel, ModelShape};
    use bilateral_core::parallel::Exec;
    use rand::{Rng, SeedableRng};

    let shape = ModelShape {
        layers: 2,
        hidden: 2,
        input: 3,
        output: 2,
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..draws {
        let params: Vec<f64> = (0..shape.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let seq = |rng: &mut rand_chacha::ChaCha8Rng, width: usize| -> Vec<Vec<f64>> {
            (0..3)
                .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        };
        let (xa, ya) = (seq(&mut rng, 3), seq(&mut rng, 2));
        let (xb, yb) = (seq(&mut rng, 3), seq(&mut rng, 2));
        let batch = [(&xa[..], &ya[..]), (&xb[..], &yb[..])];

        let model = LstmModel::from_params(shape, params.clone()).unwrap();
        let (_, grad) = loss_and_gradients(&model, &batch, Exec::Sequential).unwrap();
        let h = 1e-5;
        for (k, &g) in grad.iter().enumerate() {
            let loss_at = |delta: f64| {
                let mut p = params.clone();
                p[k] += delta;
                let m = LstmModel::from_params(shape, p).unwrap();
                loss_and_gradients(&m, &batch, Exec::Sequential).unwrap().0
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}
