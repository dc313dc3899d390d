use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Module, PlateauSchedule};
use crate::Weight;

/// Optimizer, schedule, stopping, and loss-weight settings shared by every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Factor applied when the validation metric plateaus.
    pub lr_decay: f64,
    pub lr_patience: usize,
    pub lr_floor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub pretrain_epochs: usize,
    pub batch_size: usize,
    pub alpha_action: f64,
    pub beta_user: f64,
    pub clip_norm: Option<f64>,
    /// Anonymizer stage: draw fresh session noise for every training step, keeping each pair's equal/different flag.
    pub redraw_noise: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lr_decay: 0.5,
            lr_patience: 10,
            lr_floor: 1e-5,
            early_stop_patience: 25,
            max_epochs: 500,
            pretrain_epochs: 20,
            batch_size: 32,
            alpha_action: 1.0,
            beta_user: 1.0,
            clip_norm: Some(5.0),
            redraw_noise: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be positive");
        }
        if !(self.alpha_action >= 0.0) || !(self.beta_user >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch size and epoch count must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning-rate decay must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_metric: Option<f64>,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub stage: String,
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run, 1-based.
    pub stopped_epoch: usize,
    /// Epoch whose weights were kept, 1-based.
    pub best_epoch: usize,
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_s: f64,
}

impl TrainReport {
    pub fn summary(&self) -> String {
        let m: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        format!(
            "{}: {} epochs (kept {}), {:.1}s, {}",
            self.stage,
            self.stopped_epoch,
            self.best_epoch,
            self.wall_clock_s,
            m.join(" ")
        )
    }
}

/// Validation outcome; `metric` is higher-is-better.
pub(crate) struct Validation {
    pub metric: f64,
    pub loss: f64,
    pub extra: BTreeMap<String, f64>,
}

pub(crate) fn scale_in_place<M: Module<Weight>>(m: &mut M, s: Weight) {
    m.visit_mut("", &mut |_, mut a| a.mapv_inplace(|v| v * s));
}

pub(crate) fn stage_rng(seed: u64, stage: &str) -> ChaCha8Rng {
    let salt = stage.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Mini-batch Adam loop with plateau decay and optional early stopping.
///
/// `step` accumulates one example's gradient and returns its loss. With early
/// stopping the best-validated weights are restored at the end.
pub(crate) fn fit<M: Module<Weight>>(
    model: &mut M,
    stage: &str,
    n_train: usize,
    epochs: usize,
    early_stop: bool,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut step: impl FnMut(&M, usize, &mut M, &mut ChaCha8Rng) -> Result<f64>,
    mut validate: impl FnMut(&M) -> Result<Option<Validation>>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if n_train == 0 {
        return Err(Error::Training(format!("{stage}: no training examples")));
    }
    let started = Instant::now();
    let mut adam = Adam::new(cfg.learning_rate);
    adam.clip_norm = cfg.clip_norm;
    let mut sched = PlateauSchedule::new(cfg.lr_decay, cfg.lr_patience, cfg.lr_floor);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut records = Vec::new();
    let mut best: Option<(f64, usize, M)> = None;
    let mut stale = 0;
    for epoch in 1..=epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            for &i in batch {
                total += step(model, i, &mut grad, rng)?;
            }
            scale_in_place(&mut grad, 1.0 / batch.len() as Weight);
            adam.step(model, &grad);
        }
        let train_loss = total / n_train as f64;
        if !train_loss.is_finite() {
            return Err(Error::Training(format!("{stage}: loss diverged at epoch {epoch}")));
        }
        let v = validate(model)?;
        let lr = adam.lr;
        let (val_loss, val_metric, extra) = match &v {
            Some(v) => (Some(v.loss), Some(v.metric), v.extra.clone()),
            None => (None, None, BTreeMap::new()),
        };
        log::info!(
            "{stage} epoch {epoch}: loss {train_loss:.5} val {:?} metric {:?} lr {lr:.2e}",
            val_loss,
            val_metric
        );
        records.push(EpochRecord { epoch, train_loss, val_loss, val_metric, learning_rate: lr, extra });
        if let Some(v) = v {
            adam.lr = sched.observe(v.metric, adam.lr);
            let improved = best.as_ref().is_none_or(|(b, _, _)| v.metric > *b);
            if improved {
                stale = 0;
                if early_stop {
                    best = Some((v.metric, epoch, model.clone()));
                }
            } else {
                stale += 1;
                if early_stop && stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }
    let stopped_epoch = records.len();
    let best_epoch = match best {
        Some((_, e, m)) => {
            *model = m;
            e
        }
        None => stopped_epoch,
    };
    Ok(TrainReport {
        stage: stage.to_string(),
        epochs: records,
        stopped_epoch,
        best_epoch,
        metrics: BTreeMap::new(),
        wall_clock_s: started.elapsed().as_secs_f64(),
    })
}
