use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{sample_pair, Dataset};
use super::mlp::{fm_loss_and_gradient, Activation, MlpField};
use crate::{Error, Result};

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_log_interval() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dataset: Dataset,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Steps averaged into each trace entry.
    #[serde(default = "default_log_interval")]
    pub log_interval: usize,
}

impl TrainingConfig {
    pub fn new(dataset: Dataset, steps: usize, seed: u64) -> Self {
        Self {
            dataset,
            batch_size: 64,
            steps,
            learning_rate: 2e-3,
            seed,
            hidden: default_hidden(),
            activation: default_activation(),
            log_interval: default_log_interval(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning rate must be positive".into()));
        }
        if self.steps == 0 || self.batch_size == 0 || self.log_interval == 0 {
            return Err(Error::InvalidParams(
                "steps, batch size and log interval must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Mean loss over consecutive blocks of `interval` steps (the last block may be shorter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub interval: usize,
    pub losses: Vec<f64>,
}

impl TrainingTrace {
    /// Window length used by [`TrainingTrace::made_progress`]: a tenth of the trace.
    pub fn window(&self) -> usize {
        (self.losses.len() / 10).max(1)
    }

    pub fn first_window_mean(&self) -> f64 {
        let w = self.window();
        self.losses[..w].iter().sum::<f64>() / w as f64
    }

    pub fn last_window_mean(&self) -> f64 {
        let w = self.window();
        self.losses[self.losses.len() - w..].iter().sum::<f64>() / w as f64
    }

    pub fn made_progress(&self) -> bool {
        self.last_window_mean() < self.first_window_mean()
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam on the flow-matching loss. Single-threaded and deterministic in `config.seed`.
pub fn train(config: &TrainingConfig) -> Result<(MlpField, TrainingTrace)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut field = MlpField::new(config.dataset.dim(), 0, &config.hidden, config.activation, &mut rng)?;
    let n_params = field.parameter_count();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut update = vec![0.0; n_params];
    let mut losses = Vec::with_capacity(config.steps / config.log_interval + 1);
    let mut block = 0.0;
    let mut block_len = 0usize;

    for step in 0..config.steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for _ in 0..config.batch_size {
            let (x0, x1) = sample_pair(&config.dataset, &mut rng);
            let t: f64 = rng.random();
            let (l, g) = fm_loss_and_gradient(&field, &x0, &x1, t, &[]);
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / config.batch_size as f64;
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        let k = (step + 1) as i32;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(k), 1.0 - ADAM_BETA2.powi(k));
        for i in 0..n_params {
            let g = grad[i] * scale;
            m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * g;
            m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * g * g;
            update[i] = (m1[i] / c1) / ((m2[i] / c2).sqrt() + ADAM_EPS);
        }
        field.apply_update(&update, config.learning_rate);
        if !field.parameters_finite() {
            return Err(Error::TrainingDiverged { step });
        }

        block += loss;
        block_len += 1;
        if block_len == config.log_interval || step + 1 == config.steps {
            losses.push(block / block_len as f64);
            block = 0.0;
            block_len = 0;
        }
    }

    Ok((
        field,
        TrainingTrace {
            interval: config.log_interval,
            losses,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_config() {
        let mut cfg = TrainingConfig::new(Dataset::two_gaussians(), 10, 0);
        cfg.learning_rate = 0.0;
        assert!(train(&cfg).is_err());
        let mut cfg = TrainingConfig::new(Dataset::two_gaussians(), 0, 0);
        cfg.learning_rate = 0.1;
        assert!(train(&cfg).is_err());
    }

    #[test]
    fn divergence_names_the_step() {
        let mut cfg = TrainingConfig::new(
            Dataset::SinglePoint {
                target: vec![1e200, -1e200],
            },
            200,
            1,
        );
        cfg.hidden = vec![8];
        cfg.batch_size = 4;
        match train(&cfg) {
            Err(Error::TrainingDiverged { step }) => assert!(step < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn trace_has_one_entry_per_interval() {
        let mut cfg = TrainingConfig::new(Dataset::two_gaussians(), 105, 3);
        cfg.hidden = vec![8];
        cfg.batch_size = 8;
        cfg.log_interval = 10;
        let (_, trace) = train(&cfg).unwrap();
        assert_eq!(trace.losses.len(), 11);
        assert_eq!(trace.window(), 1);
    }
}
