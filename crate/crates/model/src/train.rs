//! Teacher-forced training with per-step cross-entropy.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Model, PreparedSample};
use crate::optim::Adafactor;
use crate::tape::{Grads, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after the first epoch that ends past this many seconds.
    pub max_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 30, batch_size: 8, seed: 0, max_seconds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: u64,
    /// Mean per-sample loss of the batch.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs_run: usize,
}

impl TrainLog {
    pub fn epoch_loss(&self, epoch: usize) -> Option<f64> {
        let v: Vec<f64> = self.steps.iter().filter(|s| s.epoch == epoch).map(|s| s.loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Loss and gradients of one sample; dropout is drawn from `rng_seed`.
pub fn sample_gradients(model: &Model, sample: &PreparedSample, rng_seed: u64) -> (f64, Grads) {
    let mut t = Tape::training(&model.store, model.config.dropout, ChaCha8Rng::seed_from_u64(rng_seed));
    let (loss, _) = model.loss(&mut t, sample);
    let value = t.value(loss)[[0, 0]];
    (value, t.backward(loss))
}

/// Mean loss over `samples` without dropout.
pub fn evaluate_loss(model: &Model, samples: &[PreparedSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| {
            let mut t = Tape::new(&model.store);
            let (l, _) = model.loss(&mut t, s);
            t.value(l)[[0, 0]]
        })
        .sum();
    total / samples.len() as f64
}

/// Runs up to `cfg.epochs` epochs. `after_epoch(epoch, model)` returning
/// false stops early.
pub fn train(
    model: &mut Model,
    opt: &mut Adafactor,
    samples: &[PreparedSample],
    cfg: &TrainConfig,
    mut after_epoch: impl FnMut(usize, &Model) -> bool,
) -> TrainLog {
    let start = Instant::now();
    let mut log = TrainLog::default();
    if samples.is_empty() {
        return log;
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut grads = Grads::zeros(model.store.len());
            let mut loss = 0.0;
            for &i in chunk {
                let seed = cfg.seed ^ ((opt.steps() + 1) << 20) ^ i as u64;
                let (l, g) = sample_gradients(model, &samples[i], seed);
                loss += l;
                grads.accumulate(g);
            }
            grads.scale(1.0 / chunk.len() as f64);
            opt.step(&mut model.store, &grads);
            log.steps.push(StepLog { epoch, step: opt.steps(), loss: loss / chunk.len() as f64 });
        }
        log.epochs_run = epoch + 1;
        if !after_epoch(epoch, model) {
            break;
        }
        if cfg.max_seconds.is_some_and(|m| start.elapsed().as_secs_f64() > m) {
            break;
        }
    }
    log
}
