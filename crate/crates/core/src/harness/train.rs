//! Full-batch gradient descent on the synthetic tasks.
//!
//! Parameters move along `-∂L/∂W̄` (the steepest-descent direction of the
//! real loss), with heavy-ball momentum. Training is single-threaded and
//! seed-deterministic.

use super::data::{Dataset, Task};
use crate::complex::{CTensor, WirtingerPair, C64};
use crate::cvnn::{forward, Layer, Model, ModelBuilder};
use crate::error::{Error, Result};
use crate::wirtinger::{backward_from_seed, Guided, ParamGrads};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// width of the hidden layer (two-channel) or conv channels (digits)
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub samples: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_task(task: Task, seed: u64) -> Self {
        match task {
            Task::TwoChannelSynthetic => Self {
                hidden: 16,
                learning_rate: 0.05,
                momentum: 0.9,
                epochs: 200,
                samples: 512,
                seed,
            },
            Task::MiniDigits => Self {
                hidden: 4,
                learning_rate: 0.05,
                momentum: 0.9,
                epochs: 200,
                samples: 500,
                seed,
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub model: Model,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub losses: Vec<f64>,
}

/// Untrained model for `task`.
pub fn initial_model(task: Task, config: &TrainConfig) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let name = format!("{}_seed{}", task.name(), config.seed);
    match task {
        Task::TwoChannelSynthetic => ModelBuilder::new(task.input_shape())
            .flatten()
            .linear(config.hidden, &mut rng)
            .crelu()
            .linear(task.classes(), &mut rng)
            .real_part()
            .build(name),
        Task::MiniDigits => ModelBuilder::new(task.input_shape())
            .conv2d(config.hidden, (3, 3), 1, 1, &mut rng)
            .crelu()
            .maxpool((2, 2), 2)
            .flatten()
            .linear(task.classes(), &mut rng)
            .real_part()
            .build(name),
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy against the uniform distribution over `labels`, and its
/// gradient with respect to the logits.
fn loss_and_grad(logits: &[f64], labels: &[usize]) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let t = 1.0 / labels.len() as f64;
    let loss = -labels.iter().map(|&k| t * p[k].max(1e-300).ln()).sum::<f64>();
    let mut g = p;
    for &k in labels {
        g[k] -= t;
    }
    (loss, g)
}

/// A prediction is correct when the top-`|labels|` logits are the labels.
pub fn is_correct(logits: &[f64], labels: &[usize]) -> bool {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    let mut top = order[..labels.len()].to_vec();
    let mut want = labels.to_vec();
    top.sort_unstable();
    want.sort_unstable();
    top == want
}

pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    let mut hits = 0;
    for (x, l) in data.inputs.iter().zip(&data.labels) {
        let out = model.predict(x)?;
        let logits: Vec<f64> = out.data().iter().map(|z| z.re).collect();
        hits += is_correct(&logits, l) as usize;
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}

fn params_of(layer: &mut Layer) -> Option<(&mut CTensor, &mut CTensor)> {
    match layer {
        Layer::Linear(l) => Some((&mut l.weight, &mut l.bias)),
        Layer::Conv2d(c) => Some((&mut c.kernel, &mut c.bias)),
        _ => None,
    }
}

fn accumulate(acc: &mut [Option<ParamGrads>], grads: Vec<Option<ParamGrads>>) {
    for (a, g) in acc.iter_mut().zip(grads) {
        match (a.as_mut(), g) {
            (Some(a), Some(g)) => {
                a.weight = a.weight.add(&g.weight).expect("same layer");
                a.bias = a.bias.add(&g.bias).expect("same layer");
            }
            (None, Some(g)) => *a = Some(g),
            _ => {}
        }
    }
}

/// Mean loss and summed `∂L/∂W̄` over the dataset.
fn epoch_grads(model: &Model, data: &Dataset) -> Result<(f64, Vec<Option<ParamGrads>>)> {
    let mut total = vec![None; model.layers().len()];
    let mut loss = 0.0;
    for (x, labels) in data.inputs.iter().zip(&data.labels) {
        let trace = forward(model, x)?;
        let logits: Vec<f64> = trace.output().data().iter().map(|z| z.re).collect();
        let (l, g) = loss_and_grad(&logits, labels);
        loss += l;
        // L depends on real outputs y: ∂L/∂y = ∂L/∂ȳ = ½·dL/dy
        let half: Vec<C64> = g.iter().map(|v| C64::new(0.5 * v, 0.0)).collect();
        let shape = model.output_shape().to_vec();
        let seed = WirtingerPair::new(CTensor::new(shape.clone(), half.clone())?, CTensor::new(shape, half)?)?;
        let (_, grads) = backward_from_seed(model, &trace, seed, Guided::None, true)?;
        accumulate(&mut total, grads);
    }
    Ok((loss / data.len() as f64, total))
}

pub fn train_on(task: Task, data: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut model = initial_model(task, config)?;
    let mut velocity: Vec<Option<(CTensor, CTensor)>> = vec![None; model.layers().len()];
    let scale = 2.0 / data.len() as f64;
    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, grads) = epoch_grads(&model, data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                seed: config.seed,
                config: serde_json::to_string(config).unwrap_or_default(),
            });
        }
        losses.push(loss);
        for ((layer, g), v) in model.layers_mut().iter_mut().zip(grads).zip(velocity.iter_mut()) {
            let (Some((w, b)), Some(g)) = (params_of(layer), g) else { continue };
            let gw = g.weight.scale(C64::new(scale, 0.0));
            let gb = g.bias.scale(C64::new(scale, 0.0));
            let (vw, vb) = match v.take() {
                Some((vw, vb)) => (
                    vw.scale(C64::new(config.momentum, 0.0)).add(&gw)?,
                    vb.scale(C64::new(config.momentum, 0.0)).add(&gb)?,
                ),
                None => (gw, gb),
            };
            let lr = C64::new(config.learning_rate, 0.0);
            *w = w.sub(&vw.scale(lr))?;
            *b = b.sub(&vb.scale(lr))?;
            *v = Some((vw, vb));
        }
        if model.layers().iter().any(|l| l.params().iter().any(|p| !p.is_finite())) {
            return Err(Error::Divergence {
                epoch,
                seed: config.seed,
                config: serde_json::to_string(config).unwrap_or_default(),
            });
        }
    }
    let train_accuracy = accuracy(&model, data)?;
    let final_loss = epoch_grads(&model, data)?.0;
    Ok(TrainReport {
        model,
        train_accuracy,
        final_loss,
        losses,
    })
}

/// Generates the task's training set from `config.seed` and trains on it.
pub fn train_toy(task: Task, config: &TrainConfig) -> Result<TrainReport> {
    let data = task.generate(config.samples, config.seed);
    train_on(task, &data, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0, 0.1];
        let labels = [2, 0];
        let (_, g) = loss_and_grad(&logits, &labels);
        for k in 0..4 {
            let mut a = logits;
            let mut b = logits;
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (loss_and_grad(&a, &labels).0 - loss_and_grad(&b, &labels).0) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn top_k_correctness() {
        assert!(is_correct(&[0.1, 3.0, 2.0, -1.0], &[2, 1]));
        assert!(!is_correct(&[0.1, 3.0, 2.0, -1.0], &[0, 1]));
        assert!(is_correct(&[5.0, 3.0], &[0]));
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let mut cfg = TrainConfig::for_task(Task::TwoChannelSynthetic, 5);
        cfg.learning_rate = 0.0;
        cfg.epochs = 3;
        cfg.samples = 16;
        let report = train_toy(Task::TwoChannelSynthetic, &cfg).unwrap();
        assert_eq!(report.model.layers(), initial_model(Task::TwoChannelSynthetic, &cfg).unwrap().layers());
    }

    #[test]
    fn training_is_deterministic() {
        let mut cfg = TrainConfig::for_task(Task::MiniDigits, 2);
        cfg.epochs = 3;
        cfg.samples = 20;
        let a = train_toy(Task::MiniDigits, &cfg).unwrap();
        let b = train_toy(Task::MiniDigits, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let mut cfg = TrainConfig::for_task(Task::TwoChannelSynthetic, 1);
        cfg.learning_rate = 1e200;
        cfg.epochs = 50;
        cfg.samples = 16;
        let err = train_toy(Task::TwoChannelSynthetic, &cfg).unwrap_err();
        match err {
            Error::Divergence { seed, config, .. } => {
                assert_eq!(seed, 1);
                assert!(config.contains("\"learning_rate\""));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn loss_decreases() {
        let mut cfg = TrainConfig::for_task(Task::TwoChannelSynthetic, 1);
        cfg.epochs = 20;
        cfg.samples = 64;
        let r = train_toy(Task::TwoChannelSynthetic, &cfg).unwrap();
        assert!(r.losses.last().unwrap() < &r.losses[0]);
    }
}
