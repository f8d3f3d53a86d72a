use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mape, Dense, InputTransform, MlpError, MlpModel, Sample, TargetSpace, TrainingMetadata};
use crate::ops::OperationKind;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// Mixed into the seed so the split stream differs from the initialization stream.
const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate used once `lr_decay_after_epoch` epochs have completed.
    pub decayed_learning_rate: f64,
    pub lr_decay_after_epoch: usize,
    /// L2 penalty folded into the gradient before the Adam update.
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub seed: u64,
    pub target_space: TargetSpace,
    pub input_transform: InputTransform,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 8,
            hidden_width: 1024,
            epochs: 80,
            batch_size: 512,
            learning_rate: 5e-4,
            decayed_learning_rate: 1e-4,
            lr_decay_after_epoch: 40,
            weight_decay: 1e-4,
            train_fraction: 0.8,
            seed: 0,
            target_space: TargetSpace::Linear,
            input_transform: InputTransform::Identity,
        }
    }
}

impl TrainConfig {
    /// Learning rate in effect during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch > self.lr_decay_after_epoch {
            self.decayed_learning_rate
        } else {
            self.learning_rate
        }
    }

    fn validate(&self) -> Result<(), MlpError> {
        let bad = |m: &str| Err(MlpError::InvalidConfig(m.to_string()));
        if self.hidden_width == 0 && self.hidden_layers > 0 {
            return bad("hidden width must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must be in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.decayed_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }

    pub fn layer_sizes(&self, inputs: usize) -> Vec<usize> {
        std::iter::once(inputs)
            .chain(std::iter::repeat_n(self.hidden_width, self.hidden_layers))
            .chain([1])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_mape: f64,
    pub test_mape: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub train_mape: f64,
    pub test_mape: f64,
}

/// Splits sample indices so that every configuration lands entirely in one
/// side. Returns `(train, test)`, each in ascending order.
pub fn split_by_configuration(
    samples: &[Sample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), MlpError> {
    let mut group_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let g = *group_of.entry(s.configuration_key()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    if groups.len() < 2 {
        return Err(MlpError::TooFewConfigurations);
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT));
    let n_test = (((1.0 - train_fraction) * groups.len() as f64).round() as usize).clamp(1, groups.len() - 1);
    let mut test: Vec<usize> = order[..n_test]
        .iter()
        .flat_map(|&g| groups[g].iter().copied())
        .collect();
    let mut train: Vec<usize> = order[n_test..]
        .iter()
        .flat_map(|&g| groups[g].iter().copied())
        .collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn check_samples(operation: OperationKind, samples: &[Sample]) -> Result<(), MlpError> {
    if samples.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    let width = operation.feature_count();
    for (index, s) in samples.iter().enumerate() {
        let got = s.op_params.len() + s.gpu_features.len();
        if got != width {
            return Err(MlpError::DimensionMismatch { expected: width, got });
        }
        if !(s.target_time_ms.is_finite() && s.target_time_ms > 0.0) {
            return Err(MlpError::NonPositiveTarget {
                index,
                value: s.target_time_ms,
            });
        }
    }
    Ok(())
}

fn design_matrix(samples: &[Sample], indices: &[usize], width: usize) -> (Array2<f64>, Array1<f64>) {
    let mut x = Array2::zeros((indices.len(), width));
    let mut y = Array1::zeros(indices.len());
    for (row, &i) in indices.iter().enumerate() {
        let s = &samples[i];
        for (j, v) in s.op_params.iter().chain(&s.gpu_features).enumerate() {
            x[[row, j]] = *v;
        }
        y[row] = s.target_time_ms;
    }
    (x, y)
}

/// Population mean and standard deviation per column; constant columns get std 1.
fn column_stats(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    (mean, std)
}

/// The constant prediction with the lowest MAPE: the median of the targets
/// weighted by their reciprocals. The output bias starts here so training
/// does not begin far from every target.
fn best_constant(y: ArrayView1<'_, f64>) -> f64 {
    let mut sorted: Vec<f64> = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.iter().map(|v| 1.0 / v).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for v in &sorted {
        acc += 1.0 / v;
        if acc >= half {
            return *v;
        }
    }
    *sorted.last().expect("non-empty")
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    step: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zeros = || {
            model
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut MlpModel, grads: &[Dense], lr: f64, weight_decay: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            let g = g + weight_decay * *p;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| apply(p, g, m, v));
        }
    }
}

pub fn train(
    operation: OperationKind,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<TrainedModel, MlpError> {
    train_with_progress(operation, samples, config, |_| {})
}

/// Trains a predictor, calling `on_epoch` after each epoch.
///
/// The same seed reproduces the split, the initialization and every shuffle.
pub fn train_with_progress(
    operation: OperationKind,
    samples: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainedModel, MlpError> {
    config.validate()?;
    check_samples(operation, samples)?;
    let (train_idx, test_idx) = split_by_configuration(samples, config.train_fraction, config.seed)?;
    if train_idx.len() < config.batch_size {
        return Err(MlpError::DatasetTooSmall {
            train: train_idx.len(),
            batch: config.batch_size,
        });
    }

    let width = operation.feature_count();
    let (x_train_raw, y_train) = design_matrix(samples, &train_idx, width);
    let (x_test_raw, y_test) = design_matrix(samples, &test_idx, width);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::new_random(
        operation,
        &config.layer_sizes(width),
        config.target_space,
        &mut rng,
    );
    // The network starts as the best constant predictor: zero output weights,
    // output bias at the MAPE-optimal constant. With random output weights,
    // wide log-space networks overshoot on the first Adam steps and die.
    let out = model.layers.last_mut().expect("output layer");
    out.weights.fill(0.0);
    let c = best_constant(y_train.view());
    out.bias[0] = match config.target_space {
        TargetSpace::Linear => c,
        TargetSpace::Log => c.ln(),
    };
    model.metadata.input_transform = config.input_transform;
    let (mean, std) = column_stats(&config.input_transform.apply(x_train_raw.view())?);
    model.input_mean = mean;
    model.input_std = std;
    let x_train = model.normalize(x_train_raw.view())?;
    let x_test = model.normalize(x_test_raw.view())?;

    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = x_train.select(Axis(0), chunk);
            let yb = y_train.select(Axis(0), chunk);
            let (_, grads) = model.loss_and_grads(xb, yb.view());
            adam.update(&mut model, &grads, lr, config.weight_decay);
        }
        let record = EpochRecord {
            epoch,
            learning_rate: lr,
            train_mape: mape(model.predict_normalized(&x_train).view(), y_train.view()),
            test_mape: mape(model.predict_normalized(&x_test).view(), y_test.view()),
        };
        on_epoch(&record);
        history.push(record);
    }

    let (train_mape, test_mape) = match history.last() {
        Some(r) => (r.train_mape, r.test_mape),
        None => (
            mape(model.predict_normalized(&x_train).view(), y_train.view()),
            mape(model.predict_normalized(&x_test).view(), y_test.view()),
        ),
    };
    model.metadata = TrainingMetadata {
        epochs: config.epochs,
        batch_size: config.batch_size,
        learning_rate: config.learning_rate,
        decayed_learning_rate: config.decayed_learning_rate,
        lr_decay_after_epoch: config.lr_decay_after_epoch,
        weight_decay: config.weight_decay,
        seed: config.seed,
        target_space: config.target_space,
        input_transform: config.input_transform,
        train_samples: train_idx.len(),
        test_samples: test_idx.len(),
        train_mape: Some(train_mape),
        test_mape: Some(test_mape),
    };
    Ok(TrainedModel {
        model,
        history,
        train_indices: train_idx,
        test_indices: test_idx,
        train_mape,
        test_mape,
    })
}

/// MAPE of `model` over `samples`.
pub fn evaluate(model: &MlpModel, samples: &[Sample]) -> Result<f64, MlpError> {
    check_samples(model.operation, samples)?;
    let all: Vec<usize> = (0..samples.len()).collect();
    let (x, y) = design_matrix(samples, &all, model.input_dim());
    model.mape(x.view(), y.view())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub test_mape: f64,
}

/// Trains one model per (depth, width) pair and records its test MAPE.
pub fn architecture_sweep(
    operation: OperationKind,
    samples: &[Sample],
    base: &TrainConfig,
    depths: &[usize],
    widths: &[usize],
) -> Result<Vec<SweepResult>, MlpError> {
    let mut out = Vec::with_capacity(depths.len() * widths.len());
    for &hidden_layers in depths {
        for &hidden_width in widths {
            let config = TrainConfig {
                hidden_layers,
                hidden_width,
                ..base.clone()
            };
            let trained = train(operation, samples, &config)?;
            out.push(SweepResult {
                hidden_layers,
                hidden_width,
                test_mape: trained.test_mape,
            });
        }
    }
    Ok(out)
}
