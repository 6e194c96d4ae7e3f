use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment;
use super::lstm::{loss_and_gradients_from, LstmModel, LstmState, ModelShape};
use super::normalize::NormalizerStats;
use crate::dataset::{Dataset, Sequence};
use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Exec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// BPTT window in grid steps. Consecutive windows of a sequence carry the
    /// recurrent state forward but no gradient.
    pub window: usize,
    pub validation_fraction: f64,
    pub augment_factor: usize,
    pub noise_scale: f64,
    /// Set from the experiment seed rather than the config section.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            // sized to fit the whole tiny pipeline in ten minutes on one core
            epochs: 50,
            learning_rate: 1e-3,
            batch_size: 32,
            window: 100,
            validation_fraction: 0.1,
            augment_factor: 20,
            noise_scale: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The full-size network: 4 layers of 200 units.
    pub fn paper() -> Self {
        Self {
            layers: 4,
            hidden: 200,
            epochs: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("window", self.window),
            ("augment_factor", self.augment_factor),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParam(format!("{name} must be >= 1")));
            }
        }
        // zero is allowed and freezes the weights
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidParam(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Adam with the usual moment decay rates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// A network together with the scaling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: LstmModel,
    pub stats: NormalizerStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub trained: TrainedModel,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub train_episodes: Vec<usize>,
    pub val_episodes: Vec<usize>,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.history[self.best_epoch].val_loss
    }
}

/// Holds out whole episodes: `round(n·fraction)` of them, at least one when
/// there are two or more episodes and the fraction is positive.
pub fn split_episodes(episodes: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids = episodes.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let mut n_val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    } else {
        n_val = 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let mut val = ids[..n_val].to_vec();
    let mut train = ids[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

fn subset(ds: &Dataset, ids: &[usize]) -> Vec<Sequence> {
    ds.sequences
        .iter()
        .filter(|s| ids.contains(&s.episode))
        .cloned()
        .collect()
}

/// Start offsets of the windows that cut a sequence of `len` steps into
/// consecutive pieces of at most `window` steps.
fn window_starts(len: usize, window: usize) -> impl Iterator<Item = usize> {
    (0..len).step_by(window)
}

/// Mean squared error of full-sequence predictions from a zero state.
pub fn evaluate_mse(model: &LstmModel, seqs: &[Sequence], exec: Exec) -> Result<f64> {
    let parts = map_indexed(exec, seqs, |_, s| -> Result<(f64, usize)> {
        let out = model.forward(&s.inputs)?;
        let sse = out
            .iter()
            .zip(&s.targets)
            .flat_map(|(o, t)| o.iter().zip(t).map(|(a, b)| (a - b) * (a - b)))
            .sum();
        Ok((sse, s.len() * model.shape().output))
    });
    let (mut sse, mut n) = (0.0, 0usize);
    for p in parts {
        let (a, b) = p?;
        sse += a;
        n += b;
    }
    if n == 0 {
        return Err(Error::Empty("evaluation sequences"));
    }
    Ok(sse / n as f64)
}

pub fn train(ds: &Dataset, cfg: &TrainConfig, exec: Exec) -> Result<TrainReport> {
    train_with(ds, cfg, exec, |_| {})
}

/// Full pipeline: episode split, normalizer fit on the training episodes,
/// augmentation of the normalized training set, minibatch Adam over BPTT
/// windows, and selection of the epoch with the lowest validation loss.
///
/// A minibatch is `batch_size` sequences walked window by window in lockstep,
/// one update per window. The recurrent state carries over from one window to
/// the next without a gradient path, and every sequence starts from a zero
/// state exactly as a deployed predictor does after a reset.
pub fn train_with(
    ds: &Dataset,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    let ids: Vec<usize> = ds.sequences.iter().map(|s| s.episode).collect();
    let (train_ids, val_ids) = split_episodes(&ids, cfg.validation_fraction, cfg.seed);
    let train_raw = Dataset::new(subset(ds, &train_ids))?;
    let stats = NormalizerStats::fit(&train_raw)?;
    let train_set = augment(
        &stats.normalize(&train_raw)?,
        cfg.augment_factor,
        cfg.noise_scale,
        cfg.seed.wrapping_add(1),
    )?;
    let val_set = if val_ids.is_empty() {
        Vec::new()
    } else {
        stats.normalize(&Dataset::new(subset(ds, &val_ids))?)?.sequences
    };

    let shape = ModelShape {
        layers: cfg.layers,
        hidden: cfg.hidden,
        input: ds.dim_in(),
        output: ds.dim_out(),
    };
    let mut model = LstmModel::init(shape, cfg.seed)?;
    let mut opt = Adam::new(shape.param_count(), cfg.learning_rate);
    let seqs = &train_set.sequences;
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, LstmModel)> = None;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut weighted, mut steps) = (0.0, 0usize);
        for group in order.chunks(cfg.batch_size) {
            let mut states: Vec<LstmState> = group.iter().map(|_| model.fresh_state()).collect();
            let longest = group.iter().map(|&i| seqs[i].len()).max().unwrap_or(0);
            for start in window_starts(longest, cfg.window) {
                let live: Vec<usize> = (0..group.len())
                    .filter(|&p| seqs[group[p]].len() > start)
                    .collect();
                let batch: Vec<_> = live
                    .iter()
                    .map(|&p| {
                        let s = &seqs[group[p]];
                        let end = (start + cfg.window).min(s.len());
                        (&states[p], &s.inputs[start..end], &s.targets[start..end])
                    })
                    .collect();
                let (loss, grad, finals) = loss_and_gradients_from(&model, &batch, exec)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::TrainingDivergence { epoch, loss });
                }
                opt.step(model.params_mut(), &grad);
                let n: usize = batch.iter().map(|(_, x, _)| x.len()).sum();
                weighted += loss * n as f64;
                steps += n;
                for (p, end) in live.into_iter().zip(finals) {
                    states[p] = end;
                }
            }
        }
        let train_loss = weighted / steps as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_mse(&model, &val_set, exec)?)
        };
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::TrainingDivergence { epoch, loss: score });
        }
        let stats_row = EpochStats {
            epoch,
            train_loss,
            val_loss,
        };
        on_epoch(&stats_row);
        history.push(stats_row);
        if best.as_ref().is_none_or(|(_, b, _)| score < *b) {
            best = Some((epoch, score, model.clone()));
        }
    }
    let (best_epoch, _, model) = best.expect("at least one epoch");
    Ok(TrainReport {
        trained: TrainedModel { model, stats },
        history,
        best_epoch,
        train_episodes: train_ids,
        val_episodes: val_ids,
    })
}

/// `epoch,train_loss,val_loss` with one row per epoch; a missing validation
/// loss is left empty.
pub fn history_csv(history: &[EpochStats], provenance: &str) -> String {
    let mut out = String::new();
    for line in provenance.lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("epoch,train_loss,val_loss\n");
    for h in history {
        let val = h.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", h.epoch, h.train_loss, val);
    }
    out
}
