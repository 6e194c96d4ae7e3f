//! Autonomous operation: the slave runs against a predicted master, plus the
//! metrics used to judge a run.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ControllerTickState, GainSet};
use crate::demo::{check_divergence, slave_contact, RobotSetup};
use crate::error::{Error, Result};
use crate::learn::predict::MasterPredictor;
use crate::log::{EpisodeLog, LogRow};
use crate::sim::{EnvParams, JointState, RobotSim};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AutoOpConfig {
    /// Seconds between network queries; the output is held in between.
    pub nn_period: f64,
    pub duration: f64,
    pub dt: f64,
    pub use_dob: bool,
}

impl Default for AutoOpConfig {
    fn default() -> Self {
        Self {
            nn_period: 0.02,
            duration: 16.0,
            dt: 1e-3,
            use_dob: true,
        }
    }
}

impl AutoOpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "duration must be >= 0, got {}",
                self.duration
            )));
        }
        self.ticks_per_query().map(|_| ())
    }

    /// The query period in control ticks; it must be a whole number of ticks.
    pub fn ticks_per_query(&self) -> Result<usize> {
        let ratio = self.nn_period / self.dt;
        let ticks = ratio.round();
        if !(ticks >= 1.0) || (ratio - ticks).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidParam(format!(
                "nn_period {} must be a positive multiple of dt {}",
                self.nn_period, self.dt
            )));
        }
        Ok(ticks as usize)
    }
}

/// Piecewise-constant mop length over time.
#[derive(Debug, Clone, PartialEq)]
pub struct MopSchedule {
    /// `(start time, length)`, sorted by time, first entry at `t = 0`.
    segments: Vec<(f64, f64)>,
}

impl MopSchedule {
    pub fn constant(length: f64) -> Result<Self> {
        Self::new(vec![(0.0, length)])
    }

    pub fn switch(first: f64, at: f64, second: f64) -> Result<Self> {
        Self::new(vec![(0.0, first), (at, second)])
    }

    pub fn new(mut segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Empty("mop schedule"));
        }
        if segments
            .iter()
            .any(|(t, l)| !(t.is_finite() && *t >= 0.0 && l.is_finite() && *l > 0.0))
        {
            return Err(Error::InvalidParam(
                "mop schedule needs finite times >= 0 and lengths > 0".into(),
            ));
        }
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        segments[0].0 = 0.0;
        Ok(Self { segments })
    }

    pub fn length_at(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .take_while(|(start, _)| *start <= t)
            .last()
            .map_or(self.segments[0].1, |(_, l)| *l)
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// CSV with a `t,mop_length` header; `#` lines are ignored.
    pub fn parse_csv(text: &str, origin: &str) -> Result<Self> {
        let fail = |detail: String| Error::Format {
            path: origin.to_string(),
            detail,
        };
        let mut rows = Vec::new();
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.replace(' ', "") == "t,mop_length" => {}
            other => return Err(fail(format!("expected header `t,mop_length`, got {other:?}"))),
        }
        for line in lines {
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let [t, l] = parts[..] else {
                return Err(fail(format!("expected two columns in `{line}`")));
            };
            let t: f64 = t.parse().map_err(|_| fail(format!("bad time `{t}`")))?;
            let l: f64 = l.parse().map_err(|_| fail(format!("bad length `{l}`")))?;
            rows.push((t, l));
        }
        Self::new(rows).map_err(|e| fail(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, &path.display().to_string())
    }
}

/// Result of an autonomous run.
#[derive(Debug, Clone)]
pub struct AutoRun {
    pub log: EpisodeLog,
    /// Number of queries whose prediction was non-finite and was replaced by
    /// the previous one.
    pub nonfinite_predictions: usize,
}

/// One slave, one controller, one predictor, stepped one control tick at a time.
pub struct AutonomousLoop<P: MasterPredictor> {
    ctrl: ControllerTickState,
    slave: RobotSim,
    predictor: P,
    held: Option<JointState>,
    ticks_per_query: usize,
    tick: usize,
    dt: f64,
    nonfinite: usize,
}

impl<P: MasterPredictor> AutonomousLoop<P> {
    pub fn new(
        robot: &RobotSetup,
        gains: GainSet,
        cfg: &AutoOpConfig,
        mut predictor: P,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut ctrl = ControllerTickState::new(gains, cfg.dt)?;
        ctrl.use_dob = cfg.use_dob;
        predictor.reset();
        Ok(Self {
            ctrl,
            slave: robot.build()?,
            predictor,
            held: None,
            ticks_per_query: cfg.ticks_per_query()?,
            tick: 0,
            dt: cfg.dt,
            nonfinite: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn nonfinite_predictions(&self) -> usize {
        self.nonfinite
    }

    pub fn slave(&self) -> &RobotSim {
        &self.slave
    }

    /// Advances one control tick in `env` and returns the logged row.
    pub fn autonomous_step(&mut self, env: &EnvParams) -> Result<LogRow> {
        let t = self.time();
        let measured = self.ctrl.measure_slave(&self.slave.state)?;
        if self.tick % self.ticks_per_query == 0 {
            let pred = self.predictor.predict(&measured)?;
            if pred.validate().is_ok() && pred.joints() == measured.joints() {
                self.held = Some(pred);
            } else {
                self.nonfinite += 1;
            }
        }
        // before any usable prediction the slave is asked to stay put
        let master = match &self.held {
            Some(m) => m.clone(),
            None => JointState {
                tau: measured.tau.iter().map(|v| -v).collect(),
                ..measured.clone()
            },
        };
        let out = self.ctrl.autonomous_tick_measured(&master, measured)?;
        check_divergence(t, &[&out.vel_cmd_s], self.slave.velocity_limit)?;
        let (force, ext) = slave_contact(&self.slave.state, env)?;
        let n = out.vel_cmd_s.len();
        let row = LogRow {
            t,
            master: out.master,
            slave: out.slave,
            vel_cmd_m: vec![0.0; n],
            vel_cmd_s: out.vel_cmd_s.clone(),
            mop_length: env.mop_length,
            contact_force: force,
        };
        self.slave.step(&out.vel_cmd_s, &ext, self.dt)?;
        self.tick += 1;
        Ok(row)
    }
}

/// Runs the slave for `cfg.duration` seconds with the mop length following
/// `schedule`.
pub fn run_autonomous<P: MasterPredictor>(
    robot: &RobotSetup,
    gains: &GainSet,
    env: &EnvParams,
    cfg: &AutoOpConfig,
    schedule: &MopSchedule,
    predictor: P,
) -> Result<AutoRun> {
    env.validate()?;
    let mut lp = AutonomousLoop::new(robot, gains.clone(), cfg, predictor)?;
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let mut log = EpisodeLog::new(cfg.dt);
    log.rows.reserve(steps);
    let mut env = env.clone();
    for _ in 0..steps {
        env.mop_length = schedule.length_at(lp.time());
        log.rows.push(lp.autonomous_step(&env)?);
    }
    Ok(AutoRun {
        log,
        nonfinite_predictions: lp.nonfinite_predictions(),
    })
}

/// Summary metrics of one run over a time window.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub window: (f64, f64),
    pub samples: usize,
    pub contact_duty: f64,
    pub mean_normal_force: f64,
    pub wipe_period: Option<f64>,
    pub torque_amplitude: Vec<f64>,
    pub sync_error_mean: f64,
    pub sync_error_max: f64,
}

/// First autocorrelation peak after the first zero crossing, in seconds.
/// `None` when the signal is flat, shorter than two periods, or has no clear
/// peak.
pub fn autocorrelation_period(signal: &[f64], dt: f64) -> Option<f64> {
    // keep the quadratic cost bounded on long logs
    let stride = (signal.len() / 2000).max(1);
    let x: Vec<f64> = signal.iter().step_by(stride).copied().collect();
    let n = x.len();
    if n < 4 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(r0 > 0.0) || scale <= 1e-12 * mean.abs().max(1.0) {
        return None;
    }
    let r = |lag: usize| -> f64 {
        // unbiased, so later lags are not artificially shrunk
        let s: f64 = d[..n - lag].iter().zip(&d[lag..]).map(|(a, b)| a * b).sum();
        s / (n - lag) as f64 / (r0 / n as f64)
    };
    // a period only counts when the window holds at least two of them
    let max_lag = n / 2;
    let mut lag = 1;
    while lag < max_lag && r(lag) > 0.0 {
        lag += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    let mut prev = r(lag.min(max_lag));
    let mut lag = lag + 1;
    while lag < max_lag {
        let cur = r(lag);
        let next = r(lag + 1);
        if cur >= prev && cur >= next && cur > 0.3 {
            // parabolic refinement around the discrete peak
            let denom = prev - 2.0 * cur + next;
            let shift = if denom.abs() > 0.0 {
                0.5 * (prev - next) / denom
            } else {
                0.0
            };
            best = Some((lag, shift));
            break;
        }
        prev = cur;
        lag += 1;
    }
    best.map(|(lag, shift)| (lag as f64 + shift) * stride as f64 * dt)
}

fn peak_to_peak(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Metrics over `start <= t < end` of a log.
pub fn evaluate_episode(log: &EpisodeLog, start: f64, end: f64) -> Result<EvalReport> {
    let rows: Vec<&LogRow> = log
        .rows
        .iter()
        .filter(|r| r.t >= start && r.t < end)
        .collect();
    let Some(first) = rows.first() else {
        // an empty window reports zeros rather than NaN
        return Ok(EvalReport {
            window: (start, end),
            samples: 0,
            contact_duty: 0.0,
            mean_normal_force: 0.0,
            wipe_period: None,
            torque_amplitude: vec![0.0; log.joints().unwrap_or(0)],
            sync_error_mean: 0.0,
            sync_error_max: 0.0,
        });
    };
    let n = rows.len() as f64;
    let joints = first.slave.joints();
    let contact_duty = rows.iter().filter(|r| r.contact_force[1] > 0.0).count() as f64 / n;
    let mean_normal_force = rows.iter().map(|r| r.contact_force[1]).sum::<f64>() / n;
    let torque_amplitude: Vec<f64> = (0..joints)
        .map(|j| peak_to_peak(rows.iter().map(|r| r.slave.tau[j])))
        .collect();

    // the period comes from the joint that swings the most
    let swing = (0..joints)
        .map(|j| (j, peak_to_peak(rows.iter().map(|r| r.slave.theta[j]))))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let angle: Vec<f64> = rows.iter().map(|r| r.slave.theta[swing]).collect();
    let wipe_period = autocorrelation_period(&angle, log.dt);

    let sync: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.master
                .theta
                .iter()
                .zip(&r.slave.theta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(EvalReport {
        window: (start, end),
        samples: rows.len(),
        contact_duty,
        mean_normal_force,
        wipe_period,
        torque_amplitude,
        sync_error_mean: sync.iter().sum::<f64>() / n,
        sync_error_max: sync.iter().copied().fold(0.0, f64::max),
    })
}

impl EvalReport {
    /// Flat `key = value` text; an absent period is written as `none`.
    pub fn to_text(&self, provenance: &str) -> String {
        let mut out = String::new();
        for line in provenance.lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "window_start = {}", self.window.0);
        let _ = writeln!(out, "window_end = {}", self.window.1);
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "contact_duty = {}", self.contact_duty);
        let _ = writeln!(out, "mean_normal_force = {}", self.mean_normal_force);
        match self.wipe_period {
            Some(p) => {
                let _ = writeln!(out, "wipe_period = {p}");
            }
            None => out.push_str("wipe_period = none\n"),
        }
        for (j, a) in self.torque_amplitude.iter().enumerate() {
            let _ = writeln!(out, "torque_amplitude_{j} = {a}");
        }
        let _ = writeln!(out, "sync_error_mean = {}", self.sync_error_mean);
        let _ = writeln!(out, "sync_error_max = {}", self.sync_error_max);
        out
    }

    pub fn write(&self, path: &Path, provenance: &str) -> Result<()> {
        std::fs::write(path, self.to_text(provenance)).map_err(|e| Error::io(path, e))
    }
}
