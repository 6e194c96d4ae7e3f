use super::lstm::LstmState;
use super::train::TrainedModel;
use crate::error::{ensure_len, Error, Result};
use crate::log::EpisodeLog;
use crate::sim::JointState;

/// Anything that can stand in for the master during autonomous operation.
pub trait MasterPredictor {
    /// Forgets all history; the next call starts a fresh episode.
    fn reset(&mut self);
    /// Master response expected one grid step after the given slave response.
    fn predict(&mut self, slave: &JointState) -> Result<JointState>;
}

/// Stateful wrapper around a trained network.
#[derive(Debug, Clone)]
pub struct LstmPredictor {
    trained: TrainedModel,
    state: LstmState,
}

impl LstmPredictor {
    pub fn new(trained: TrainedModel) -> Self {
        let state = trained.model.fresh_state();
        Self { trained, state }
    }

    pub fn trained(&self) -> &TrainedModel {
        &self.trained
    }
}

impl MasterPredictor for LstmPredictor {
    fn reset(&mut self) {
        self.state = self.trained.model.fresh_state();
    }

    fn predict(&mut self, slave: &JointState) -> Result<JointState> {
        predict_master(&self.trained, &mut self.state, slave)
    }
}

/// Normalize, advance the network one step, denormalize.
pub fn predict_master(
    trained: &TrainedModel,
    state: &mut LstmState,
    slave: &JointState,
) -> Result<JointState> {
    let features = slave.to_features();
    ensure_len("predictor input", trained.stats.input.dims(), features.len())?;
    let x = trained.stats.input.apply(&features);
    let y = trained.model.step(state, &x)?;
    JointState::from_features(&trained.stats.output.invert(&y))
}

/// Replays the recorded master of a demonstration, `horizon` grid steps ahead
/// of the call count. Once the log runs out the last sample is held.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    masters: Vec<JointState>,
    horizon: usize,
    calls: usize,
}

impl ReplayOracle {
    pub fn new(log: &EpisodeLog, stride: usize, horizon: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParam("replay stride must be >= 1".into()));
        }
        let masters: Vec<JointState> = log
            .rows
            .iter()
            .step_by(stride)
            .map(|r| r.master.clone())
            .collect();
        if masters.is_empty() {
            return Err(Error::Empty("replay log"));
        }
        Ok(Self {
            masters,
            horizon,
            calls: 0,
        })
    }
}

impl MasterPredictor for ReplayOracle {
    fn reset(&mut self) {
        self.calls = 0;
    }

    fn predict(&mut self, _slave: &JointState) -> Result<JointState> {
        let k = (self.calls + self.horizon).min(self.masters.len() - 1);
        self.calls += 1;
        Ok(self.masters[k].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::lstm::{LstmModel, ModelShape};
    use crate::learn::normalize::{MinMax, NormalizerStats};
    use crate::log::LogRow;

    fn trained() -> TrainedModel {
        let shape = ModelShape {
            layers: 1,
            hidden: 4,
            input: 3,
            output: 3,
        };
        TrainedModel {
            model: LstmModel::init(shape, 2).unwrap(),
            stats: NormalizerStats {
                input: MinMax {
                    min: vec![0.0; 3],
                    max: vec![2.0; 3],
                },
                output: MinMax {
                    min: vec![-1.0; 3],
                    max: vec![1.0; 3],
                },
            },
        }
    }

    #[test]
    fn reset_restores_first_prediction() {
        let mut p = LstmPredictor::new(trained());
        let s = JointState {
            theta: vec![0.5],
            dtheta: vec![1.0],
            tau: vec![1.5],
        };
        let first = p.predict(&s).unwrap();
        let second = p.predict(&s).unwrap();
        assert_ne!(first, second);
        p.reset();
        assert_eq!(p.predict(&s).unwrap(), first);
    }

    #[test]
    fn prediction_matches_manual_pipeline() {
        let t = trained();
        let s = JointState {
            theta: vec![0.2],
            dtheta: vec![-0.4],
            tau: vec![3.0],
        };
        let mut state = t.model.fresh_state();
        let x = t.stats.input.apply(&s.to_features());
        let y = t.model.step(&mut state, &x).unwrap();
        let expected: Vec<f64> = y.iter().map(|v| -1.0 + 2.0 * v).collect();
        let mut st = t.model.fresh_state();
        let got = predict_master(&t, &mut st, &s).unwrap();
        assert_eq!(got.to_features(), expected);
        assert!(predict_master(&t, &mut st, &JointState::zeros(2)).is_err());
    }

    #[test]
    fn oracle_leads_by_horizon_and_holds_at_end() {
        let mut log = EpisodeLog::new(1e-3);
        for k in 0..100 {
            let x = k as f64;
            log.rows.push(LogRow {
                t: x * 1e-3,
                master: JointState::at_rest(vec![x]),
                slave: JointState::zeros(1),
                vel_cmd_m: vec![0.0],
                vel_cmd_s: vec![0.0],
                mop_length: 0.5,
                contact_force: [0.0; 2],
            });
        }
        let mut o = ReplayOracle::new(&log, 20, 1).unwrap();
        let s = JointState::zeros(1);
        let got: Vec<f64> = (0..6).map(|_| o.predict(&s).unwrap().theta[0]).collect();
        assert_eq!(got, vec![20.0, 40.0, 60.0, 80.0, 80.0, 80.0]);
        o.reset();
        assert_eq!(o.predict(&s).unwrap().theta[0], 20.0);
    }
}
