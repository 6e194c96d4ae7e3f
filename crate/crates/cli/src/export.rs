//! Long-format export for plotting: one row per (tick, joint).

use std::fmt::Write as _;

use bilateral_core::log::EpisodeLog;
use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    /// Slave joint angles.
    Angles,
    /// Slave joint torques.
    Torques,
}

/// `t,joint,value,run-id` rows for every run, in input order.
pub fn tidy_csv(what: Quantity, runs: &[(String, EpisodeLog)]) -> String {
    let mut out = String::from("t,joint,value,run-id\n");
    for (id, log) in runs {
        for row in &log.rows {
            let values = match what {
                Quantity::Angles => &row.slave.theta,
                Quantity::Torques => &row.slave.tau,
            };
            for (j, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{},{j},{v},{id}", row.t);
            }
        }
    }
    out
}
