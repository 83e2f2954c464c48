use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{contract, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// SGD steps; each step draws `minibatch` samples.
    pub iterations: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Samples (from the start of the dataset) used for the before/after loss.
    pub eval_samples: usize,
    /// Points on the loss curve; each is the mean loss of one window of steps.
    pub curve_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            minibatch: 1,
            learning_rate: 0.01,
            seed: 0,
            eval_samples: 200,
            curve_points: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub config: TrainConfig,
    pub loss_curve: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_accuracy: f64,
    pub accuracy: f64,
    /// Wall-clock seconds spent in the SGD loop only.
    pub wall_seconds: f64,
}

/// Mean loss and accuracy over `samples`.
pub fn evaluate<T: Element>(
    model: &mut Model<T>,
    samples: &[(Tensor<T>, u8)],
) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for (x, label) in samples {
        let logits = model.forward(x)?;
        let (l, _) = super::layers::softmax_cross_entropy(logits.data(), *label as usize)?;
        loss += l.to_f64().unwrap();
        let best = logits
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        correct += usize::from(best == *label as usize);
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Minibatch SGD with samples drawn uniformly (with replacement) from a
/// seeded generator. Identical inputs give identical reports apart from
/// `wall_seconds`.
pub fn train<T: Element>(
    model: &mut Model<T>,
    dataset: &[(Tensor<T>, u8)],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(contract("training dataset is empty"));
    }
    if cfg.minibatch == 0 {
        return Err(contract("minibatch must be at least 1"));
    }
    let eval = &dataset[..cfg.eval_samples.min(dataset.len())];
    let (initial_loss, initial_accuracy) = evaluate(model, eval)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let window = cfg.iterations.div_ceil(cfg.curve_points.max(1)).max(1);
    let scale = T::from_f64(cfg.learning_rate / cfg.minibatch as f64).unwrap();
    let mut loss_curve = Vec::new();
    let (mut window_loss, mut window_len) = (0.0, 0usize);

    let start = Instant::now();
    for _ in 0..cfg.iterations {
        model.zero_grads();
        let mut step_loss = 0.0;
        for _ in 0..cfg.minibatch {
            let (x, label) = &dataset[rng.gen_range(0..dataset.len())];
            step_loss += model.accumulate(x, *label)?.0.to_f64().unwrap();
        }
        model.sgd_step(scale);
        window_loss += step_loss / cfg.minibatch as f64;
        window_len += 1;
        if window_len == window {
            loss_curve.push(window_loss / window_len as f64);
            (window_loss, window_len) = (0.0, 0);
        }
    }
    let wall_seconds = start.elapsed().as_secs_f64();
    if window_len > 0 {
        loss_curve.push(window_loss / window_len as f64);
    }

    let (final_loss, accuracy) = evaluate(model, eval)?;
    Ok(TrainReport {
        model: model.variant().label().to_string(),
        config: *cfg,
        loss_curve,
        initial_loss,
        final_loss,
        initial_accuracy,
        accuracy,
        wall_seconds,
    })
}
