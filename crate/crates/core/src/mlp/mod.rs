//! Learned execution-time predictors for kernel-varying operations.
//!
//! Each operation kind gets its own fully connected ReLU network. Inputs are
//! standardized with training-set statistics; the scalar output is the
//! combined forward and backward time in milliseconds. Training minimizes
//! mean absolute percentage error with Adam.

mod dataset;
mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ops::OperationKind;

pub use dataset::{generate_dataset, read_dataset, write_dataset, Coverage, Sample};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION};
pub use train::{
    architecture_sweep, evaluate, split_by_configuration, train, train_with_progress, EpochRecord,
    SweepResult, TrainConfig, TrainedModel,
};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("feature vector has {got} entries, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index}: target time must be finite and > 0, got {value}")]
    NonPositiveTarget { index: usize, value: f64 },
    #[error("training split has {train} samples, fewer than the batch size {batch}")]
    DatasetTooSmall { train: usize, batch: usize },
    #[error("need at least two distinct configurations to hold out a test set")]
    TooFewConfigurations,
    #[error("sample {index} is for {found}, expected {expected}")]
    WrongOperation {
        index: usize,
        expected: OperationKind,
        found: OperationKind,
    },
    #[error("feature column {column} is {value}; the log input transform needs values >= 0")]
    NegativeFeature { column: usize, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("model file format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("model file is corrupt: {0}")]
    Corrupt(String),
    #[error("dataset file: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the network output maps to a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpace {
    /// Output is the time itself.
    #[default]
    Linear,
    /// Output is the natural log of the time.
    Log,
}

/// Elementwise map applied to raw features before standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputTransform {
    #[default]
    Identity,
    /// `ln(1 + x)`; features must be non-negative.
    Log1p,
}

impl InputTransform {
    fn apply(self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, MlpError> {
        match self {
            InputTransform::Identity => Ok(x.to_owned()),
            InputTransform::Log1p => {
                if let Some(((_, column), &value)) = x.indexed_iter().find(|(_, v)| v.is_nan() || **v < 0.0) {
                    return Err(MlpError::NegativeFeature { column, value });
                }
                Ok(x.mapv(f64::ln_1p))
            }
        }
    }
}

/// Hyperparameters a model was trained with, plus its final errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decayed_learning_rate: f64,
    pub lr_decay_after_epoch: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub target_space: TargetSpace,
    #[serde(default)]
    pub input_transform: InputTransform,
    pub train_samples: usize,
    pub test_samples: usize,
    pub train_mape: Option<f64>,
    pub test_mape: Option<f64>,
}

impl TrainingMetadata {
    fn untrained(target_space: TargetSpace) -> Self {
        Self {
            epochs: 0,
            batch_size: 0,
            learning_rate: 0.0,
            decayed_learning_rate: 0.0,
            lr_decay_after_epoch: 0,
            weight_decay: 0.0,
            seed: 0,
            target_space,
            input_transform: InputTransform::Identity,
            train_samples: 0,
            test_samples: 0,
            train_mape: None,
            test_mape: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Dense {
    /// `inputs x outputs`
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub operation: OperationKind,
    pub(crate) layers: Vec<Dense>,
    pub(crate) input_mean: Array1<f64>,
    pub(crate) input_std: Array1<f64>,
    pub metadata: TrainingMetadata,
}

impl MlpModel {
    /// A network with He-uniform weights, zero biases and identity normalization.
    pub fn new_random<R: Rng + ?Sized>(
        operation: OperationKind,
        layer_sizes: &[usize],
        target_space: TargetSpace,
        rng: &mut R,
    ) -> Self {
        assert!(layer_sizes.len() >= 2 && *layer_sizes.last().unwrap() == 1);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        let inputs = layer_sizes[0];
        Self {
            operation,
            layers,
            input_mean: Array1::zeros(inputs),
            input_std: Array1::ones(inputs),
            metadata: TrainingMetadata::untrained(target_space),
        }
    }

    /// Builds a model from explicit `(weights, bias)` pairs, weights `inputs x outputs`.
    pub fn from_parts(
        operation: OperationKind,
        layers: Vec<(Array2<f64>, Array1<f64>)>,
        input_mean: Array1<f64>,
        input_std: Array1<f64>,
        target_space: TargetSpace,
    ) -> Result<Self, MlpError> {
        let mut width = input_mean.len();
        for (w, b) in &layers {
            if w.nrows() != width || w.ncols() != b.len() {
                return Err(MlpError::InvalidConfig(format!(
                    "layer shape {:?} / bias {} does not follow width {width}",
                    w.shape(),
                    b.len()
                )));
            }
            width = w.ncols();
        }
        if width != 1 || layers.is_empty() {
            return Err(MlpError::InvalidConfig("network must end in one output".into()));
        }
        if input_std.len() != input_mean.len() || input_std.iter().any(|&s| s.is_nan() || s <= 0.0) {
            return Err(MlpError::InvalidConfig(
                "input std must be positive and match the mean".into(),
            ));
        }
        Ok(Self {
            operation,
            layers: layers
                .into_iter()
                .map(|(weights, bias)| Dense { weights, bias })
                .collect(),
            input_mean,
            input_std,
            metadata: TrainingMetadata::untrained(target_space),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    /// `[inputs, hidden..., 1]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.bias.len()))
            .collect()
    }

    pub fn input_mean(&self) -> ArrayView1<'_, f64> {
        self.input_mean.view()
    }

    pub fn input_std(&self) -> ArrayView1<'_, f64> {
        self.input_std.view()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Predicted time (ms) for one raw feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<f64, MlpError> {
        if features.len() != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        let x = ArrayView2::from_shape((1, features.len()), features).expect("row vector shape");
        // a one-row matmul would repack every weight matrix; accumulate
        // contiguous weight rows instead, skipping inputs zeroed by ReLU
        let mut a = self.normalize(x)?.row(0).to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.bias.clone();
            for (&ai, row) in a.iter().zip(layer.weights.rows()) {
                if ai != 0.0 {
                    z.scaled_add(ai, &row);
                }
            }
            a = z;
            if i != last {
                a.mapv_inplace(relu);
            }
        }
        Ok(match self.metadata.target_space {
            TargetSpace::Linear => a[0],
            TargetSpace::Log => a[0].exp(),
        })
    }

    /// Predicted times (ms) for a batch of raw feature rows.
    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Array1<f64>, MlpError> {
        if features.ncols() != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        Ok(self.predict_normalized(&self.normalize(features)?))
    }

    /// Transformed and standardized features.
    pub(crate) fn normalize(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, MlpError> {
        let t = self.metadata.input_transform.apply(x)?;
        Ok((t - &self.input_mean) / &self.input_std)
    }

    fn predict_normalized(&self, x: &Array2<f64>) -> Array1<f64> {
        let out = self.raw_output(x);
        match self.metadata.target_space {
            TargetSpace::Linear => out,
            TargetSpace::Log => out.mapv(f64::exp),
        }
    }

    fn raw_output(&self, x: &Array2<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = a.dot(&layer.weights) + &layer.bias;
            if i != last {
                a.mapv_inplace(relu);
            }
        }
        a.column(0).to_owned()
    }

    /// Activations entering each layer, plus the final raw output.
    fn forward_cached(&self, x: Array2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights) + &layer.bias;
            if i != last {
                z.mapv_inplace(relu);
            }
            inputs.push(a);
            a = z;
        }
        (inputs, a.column(0).to_owned())
    }

    /// MAPE over a normalized batch and its gradient with respect to every
    /// weight and bias, layer by layer.
    pub(crate) fn loss_and_grads(&self, x: Array2<f64>, targets: ArrayView1<'_, f64>) -> (f64, Vec<Dense>) {
        let (inputs, out) = self.forward_cached(x);
        let n = targets.len() as f64;
        let mut loss = 0.0;
        let mut dout = Array2::zeros((targets.len(), 1));
        for (i, (&z, &y)) in out.iter().zip(targets.iter()).enumerate() {
            let (pred, dpred_dz) = match self.metadata.target_space {
                TargetSpace::Linear => (z, 1.0),
                TargetSpace::Log => {
                    let p = z.exp();
                    (p, p)
                }
            };
            let diff = pred - y;
            loss += diff.abs() / y;
            dout[[i, 0]] = signum0(diff) * dpred_dz / (y * n);
        }
        loss /= n;

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dout;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a = &inputs[l];
            let dw = a.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&layer.weights.t());
                prev.zip_mut_with(a, |d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = prev;
            }
            grads.push(Dense {
                weights: dw,
                bias: db,
            });
        }
        grads.reverse();
        (loss, grads)
    }

    /// Flattened parameters: for each layer, weights row-major then bias.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, values: &[f64]) -> Result<(), MlpError> {
        if values.len() != self.parameter_count() {
            return Err(MlpError::DimensionMismatch {
                expected: self.parameter_count(),
                got: values.len(),
            });
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// MAPE on raw (unnormalized) features and its gradient, flattened in
    /// [`parameters`](Self::parameters) order. Used for gradient checking.
    pub fn loss_and_gradient(
        &self,
        features: ArrayView2<'_, f64>,
        targets: ArrayView1<'_, f64>,
    ) -> Result<(f64, Vec<f64>), MlpError> {
        if features.ncols() != self.input_dim() {
            return Err(MlpError::DimensionMismatch {
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        let (loss, grads) = self.loss_and_grads(self.normalize(features)?, targets);
        let flat = grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect();
        Ok((loss, flat))
    }

    /// MAPE of the model on raw features.
    pub fn mape(&self, features: ArrayView2<'_, f64>, targets: ArrayView1<'_, f64>) -> Result<f64, MlpError> {
        let preds = self.predict_batch(features)?;
        Ok(mape(preds.view(), targets))
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `(1/n) * sum |pred - measured| / measured`
pub fn mape(predicted: ArrayView1<'_, f64>, measured: ArrayView1<'_, f64>) -> f64 {
    let n = measured.len() as f64;
    predicted
        .iter()
        .zip(measured.iter())
        .map(|(p, m)| (p - m).abs() / m)
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_predict_output_bias() {
        let model = MlpModel::from_parts(
            OperationKind::Bmm,
            vec![
                (Array2::zeros((3, 4)), Array1::zeros(4)),
                (Array2::zeros((4, 1)), array![2.5]),
            ],
            Array1::zeros(3),
            Array1::ones(3),
            TargetSpace::Linear,
        )
        .unwrap();
        assert_eq!(model.forward(&[1.0, -7.0, 300.0]).unwrap(), 2.5);
        assert_eq!(model.forward(&[0.0, 0.0, 0.0]).unwrap(), 2.5);
    }

    #[test]
    fn one_hidden_unit_by_hand() {
        // x = [2, 4], mean [1, 1], std [1, 3] -> xn = [1, 1]
        // h = relu(0.5*1 - 0.25*1 + 0.1) = 0.35 ; out = 2*0.35 + 1 = 1.7
        let model = MlpModel::from_parts(
            OperationKind::Linear,
            vec![
                (array![[0.5], [-0.25]], array![0.1]),
                (array![[2.0]], array![1.0]),
            ],
            array![1.0, 1.0],
            array![1.0, 3.0],
            TargetSpace::Linear,
        )
        .unwrap();
        let got = model.forward(&[2.0, 4.0]).unwrap();
        assert!((got - 1.7).abs() < 1e-15);
        // negative pre-activation is clipped: h = relu(-0.5 - 0.25 + 0.1) = 0
        assert_eq!(model.forward(&[0.0, 4.0]).unwrap(), 1.0);
        let mut log = model.clone();
        log.metadata.target_space = TargetSpace::Log;
        assert!((log.forward(&[2.0, 4.0]).unwrap() - 1.7f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic_and_checks_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = MlpModel::new_random(
            OperationKind::Conv2d,
            &[11, 16, 16, 1],
            TargetSpace::Linear,
            &mut rng,
        );
        let x = vec![0.3; 11];
        assert_eq!(
            model.forward(&x).unwrap().to_bits(),
            model.forward(&x).unwrap().to_bits()
        );
        assert!(matches!(
            model.forward(&[1.0; 10]),
            Err(MlpError::DimensionMismatch {
                expected: 11,
                got: 10
            })
        ));
        let batch = Array::from_shape_fn((5, 11), |(i, j)| (i * 11 + j) as f64 * 0.01);
        let preds = model.predict_batch(batch.view()).unwrap();
        // single rows take a vector-matrix path, so only the last bits may differ
        for (i, row) in batch.rows().into_iter().enumerate() {
            let one = model.forward(row.as_slice().unwrap()).unwrap();
            assert!(
                (preds[i] - one).abs() <= 1e-12 * one.abs(),
                "{} vs {one}",
                preds[i]
            );
        }
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(array![1.0, 2.0].view(), array![1.0, 2.0].view()), 0.0);
        assert_eq!(mape(array![2.0, 4.0].view(), array![1.0, 2.0].view()), 1.0);
        assert_eq!(mape(array![3.0, 1.0].view(), array![2.0, 2.0].view()), 0.5);
    }

    #[test]
    fn parameters_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut model = MlpModel::new_random(OperationKind::Bmm, &[8, 5, 3, 1], TargetSpace::Log, &mut rng);
        let p = model.parameters();
        assert_eq!(p.len(), model.parameter_count());
        assert_eq!(model.layer_sizes(), vec![8, 5, 3, 1]);
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        model.set_parameters(&doubled).unwrap();
        assert_eq!(model.parameters(), doubled);
    }
}
