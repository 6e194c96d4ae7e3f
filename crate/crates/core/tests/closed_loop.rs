mod common;

use common::*;

#[test]
fn free_motion_teleoperation_stays_synchronized() {
    let worst = free_motion_sync_error(12.0, 2.0);
    assert!(worst < 0.01, "worst |θm − θs| = {worst}");
}

#[test]
fn sustained_contact_reflects_the_slave_force() {
    let (_, log) = static_press();
    for (j, (residual, slave)) in reflection_ratio(&log, 8.0).into_iter().enumerate() {
        assert!(slave > 0.0, "joint {j} carries no load");
        assert!(residual < 0.1 * slave, "joint {j}: {residual} vs {slave}");
    }
}

#[test]
fn observer_settles_on_a_constant_disturbance() {
    let g = 10.0;
    for d in [2.0, -0.7] {
        let err = dob_estimate_error(1.32, d, g, 5.0 / g);
        assert!(err < 0.02, "d = {d}: relative error {err}");
    }
}

#[test]
fn observer_shrinks_the_hold_error() {
    let d = [0.8, -0.5, 0.3];
    let with = disturbed_hold_error(true, &d, 5.0);
    let without = disturbed_hold_error(false, &d, 5.0);
    assert!(without > 1e-4, "disturbance too weak to measure: {without}");
    assert!(with < 0.25 * without, "with {with}, without {without}");
}

#[test]
fn replaying_the_recorded_master_reproduces_the_demonstration() {
    for l in [0.43, 0.48, 0.53, 0.57] {
        let rms = oracle_replay_rms(l);
        assert!(rms < 0.05, "mop {l}: rms {rms}");
    }
}
