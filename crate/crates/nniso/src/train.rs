//! Mini-batch training over plain or transformed networks.
//!
//! The update sequence is strictly sequential and seeded: epoch shuffles come
//! from one [`SeededRng`] stream, batch gradients are means over the batch,
//! and a fixed seed reproduces the metrics byte for byte. When the selected
//! rule guarantees non-negativity and the starting parameters are already
//! non-negative, every epoch ends with a non-negativity audit.

use crate::data::Dataset;
use crate::loss::{binary_xent, softmax_xent, LossError};
use crate::network::{ForwardCache, Gradients, Network, NetworkError};
use crate::optim::{OptimError, UpdateRule};
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use crate::transform::{nnf_backward, nnf_forward, TransformBundle, TransformError};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter snapshot:\n{snapshot}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        snapshot: String,
    },
    #[error("non-negativity violated after epoch {epoch}: min parameter {min}")]
    NonNegativityViolated { epoch: usize, min: f64 },
    #[error("dataset sample size {sample} does not match network input {input:?}")]
    SampleShape { sample: usize, input: Vec<usize> },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no finite-difference-safe configuration found for {preset} gradcheck")]
    GradcheckUnsafe { preset: &'static str },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// A network plus, when it has been transformed, the rotation bundle that
/// its forward/backward passes must honor.
#[derive(Debug, Clone)]
pub enum TrainableModel {
    Plain(Network),
    Transformed {
        net: Network,
        bundle: TransformBundle,
    },
}

impl TrainableModel {
    pub fn network(&self) -> &Network {
        match self {
            TrainableModel::Plain(net) => net,
            TrainableModel::Transformed { net, .. } => net,
        }
    }

    pub fn network_mut(&mut self) -> &mut Network {
        match self {
            TrainableModel::Plain(net) => net,
            TrainableModel::Transformed { net, .. } => net,
        }
    }

    pub fn bundle(&self) -> Option<&TransformBundle> {
        match self {
            TrainableModel::Plain(_) => None,
            TrainableModel::Transformed { bundle, .. } => Some(bundle),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), TrainError> {
        match self {
            TrainableModel::Plain(net) => Ok(net.forward(x)?),
            TrainableModel::Transformed { net, bundle } => Ok(nnf_forward(net, bundle, x)?),
        }
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Tensor,
    ) -> Result<Gradients, TrainError> {
        match self {
            TrainableModel::Plain(net) => Ok(net.backward(cache, dlogits)?),
            TrainableModel::Transformed { net, bundle } => {
                Ok(nnf_backward(net, bundle, cache, dlogits)?)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

/// One row of the metrics table.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Training accuracy measured on the fly over the epoch's batches.
    pub train_accuracy: f64,
    /// Test accuracy after the epoch; NaN when no test split was given.
    pub test_accuracy: f64,
    /// Weight variance per parametric layer; the last entry is the
    /// classification layer.
    pub weight_variances: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricsRecord {
    pub scenario: String,
    pub records: Vec<EpochRecord>,
}

impl MetricsRecord {
    pub fn new(scenario: impl Into<String>) -> Self {
        MetricsRecord {
            scenario: scenario.into(),
            records: Vec::new(),
        }
    }

    /// Stable CSV schema: `epoch,loss,train_accuracy,test_accuracy,` followed
    /// by one `var_layer_<i>` column per parametric layer.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let vars = self
            .records
            .first()
            .map_or(0, |r| r.weight_variances.len());
        write!(out, "epoch,loss,train_accuracy,test_accuracy")?;
        for i in 0..vars {
            write!(out, ",var_layer_{i}")?;
        }
        writeln!(out)?;
        for r in &self.records {
            write!(
                out,
                "{},{},{},{}",
                r.epoch, r.loss, r.train_accuracy, r.test_accuracy
            )?;
            for v in &r.weight_variances {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf8")
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.test_accuracy)
    }
}

/// Per-epoch observer; receives the finished record and the current model.
pub trait TrainHook {
    fn on_epoch(&mut self, _record: &EpochRecord, _model: &TrainableModel) {}
}

/// Default hook that does nothing.
pub struct NoopHook;

impl TrainHook for NoopHook {}

/// Gathers a batch and reshapes samples to the network's declared input
/// shape (e.g. flat 784 for the MLPs, `[1, 28, 28]` for the CNN, `[T, 1]`
/// for the sequence task).
pub fn prepare_batch(
    dataset: &Dataset,
    indices: &[usize],
    net: &Network,
) -> Result<(Tensor, Vec<usize>), TrainError> {
    let input_len: usize = net.input_shape.iter().product();
    if dataset.sample_len() != input_len {
        return Err(TrainError::SampleShape {
            sample: dataset.sample_len(),
            input: net.input_shape.clone(),
        });
    }
    let (x, labels) = dataset.gather(indices);
    let mut shape = vec![indices.len()];
    shape.extend_from_slice(&net.input_shape);
    Ok((x.reshape(&shape).expect("same element count"), labels))
}

/// Loss dispatch: binary cross-entropy for single-output heads, mean softmax
/// cross-entropy otherwise.
pub fn loss_and_grad(
    net: &Network,
    logits: &Tensor,
    labels: &[usize],
) -> Result<(f64, Tensor), TrainError> {
    if net.output_dim() == 1 {
        Ok(binary_xent(logits, labels, net.head_activation().range())?)
    } else {
        Ok(softmax_xent(logits, labels)?)
    }
}

fn param_snapshot(net: &Network) -> String {
    let mut lines = Vec::new();
    let mut idx = 0;
    net.visit_params(|t| {
        let min = t.min_value().unwrap_or(f64::NAN);
        let max = t.max_value().unwrap_or(f64::NAN);
        lines.push(format!(
            "  param[{idx}] shape {:?}: min {min:.6e}, max {max:.6e}",
            t.shape()
        ));
        idx += 1;
    });
    lines.join("\n")
}

fn apply_updates(
    net: &mut Network,
    grads: &Gradients,
    rule: &dyn UpdateRule,
) -> Result<(), TrainError> {
    use crate::layer::{Layer, LayerGrads};
    for (layer, g) in net.layers.iter_mut().zip(&grads.per_layer) {
        match (layer, g) {
            (Layer::Dense(l), LayerGrads::Dense { dw, db }) => {
                rule.update(&mut l.weights, dw)?;
                rule.update(&mut l.bias, db)?;
            }
            (Layer::Conv2D(l), LayerGrads::Conv2D { dw, db }) => {
                rule.update(&mut l.weights, dw)?;
                rule.update(&mut l.bias, db)?;
            }
            (Layer::Recurrent(l), LayerGrads::Recurrent { dw_in, dw_rec, db }) => {
                rule.update(&mut l.w_in, dw_in)?;
                rule.update(&mut l.w_rec, dw_rec)?;
                rule.update(&mut l.bias, db)?;
            }
            (_, LayerGrads::None) => {}
            _ => return Err(TrainError::Network(NetworkError::StaleCache)),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Forward-only evaluation in batches.
pub fn evaluate(
    model: &TrainableModel,
    dataset: &Dataset,
    batch_size: usize,
) -> Result<EvalStats, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let net = model.network();
    let n = dataset.len();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    let mut i = 0;
    while i < n {
        let hi = (i + batch_size).min(n);
        let indices: Vec<usize> = (i..hi).collect();
        let (x, labels) = prepare_batch(dataset, &indices, net)?;
        let (logits, _) = model.forward(&x)?;
        let (loss, _) = loss_and_grad(net, &logits, &labels)?;
        loss_sum += loss * labels.len() as f64;
        let preds = net.predictions(&logits);
        correct += preds
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        i = hi;
    }
    Ok(EvalStats {
        loss: loss_sum / n as f64,
        accuracy: correct as f64 / n as f64,
    })
}

/// Runs seeded mini-batch training and fills a [`MetricsRecord`], one row per
/// epoch. Aborts on a non-finite loss with a parameter snapshot.
pub fn train_loop(
    model: &mut TrainableModel,
    train: &Dataset,
    test: Option<&Dataset>,
    rule: &dyn UpdateRule,
    params: &TrainParams,
    hook: &mut dyn TrainHook,
) -> Result<MetricsRecord, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let audit_nonneg =
        rule.preserves_nonnegativity() && model.network().min_param() >= 0.0;
    let mut rng = SeededRng::new(params.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = MetricsRecord::new(rule.name());
    for epoch in 1..=params.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(params.batch_size).enumerate() {
            let (x, labels) = prepare_batch(train, chunk, model.network())?;
            let (logits, cache) = model.forward(&x)?;
            let (loss, dlogits) = loss_and_grad(model.network(), &logits, &labels)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                    snapshot: param_snapshot(model.network()),
                });
            }
            loss_sum += loss * labels.len() as f64;
            correct += model
                .network()
                .predictions(&logits)
                .iter()
                .zip(&labels)
                .filter(|(p, l)| p == l)
                .count();
            let grads = model.backward(&cache, &dlogits)?;
            apply_updates(model.network_mut(), &grads, rule)?;
        }
        if audit_nonneg {
            let min = model.network().min_param();
            if min < 0.0 {
                return Err(TrainError::NonNegativityViolated { epoch, min });
            }
        }
        let test_accuracy = match test {
            Some(ds) => evaluate(model, ds, params.batch_size)?.accuracy,
            None => f64::NAN,
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            test_accuracy,
            weight_variances: model.network().weight_variances(),
        };
        hook.on_epoch(&record, model);
        metrics.records.push(record);
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::data::gen_toy2d;
    use crate::optim::{Csgd, Nnsgd, Sgd};
    use crate::presets::{build_preset, Preset};
    use crate::transform::nnt_transform;

    fn toy_model(seed: u64) -> TrainableModel {
        TrainableModel::Plain(
            build_preset(Preset::ToyLogreg, Activation::photonic_sigmoid(), seed).unwrap(),
        )
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let data = gen_toy2d(100, 11);
        let params = TrainParams {
            epochs: 5,
            batch_size: 16,
            seed: 4,
        };
        let rule = Sgd::new(0.02).unwrap();
        let mut m1 = toy_model(2);
        let r1 = train_loop(&mut m1, &data, Some(&data), &rule, &params, &mut NoopHook).unwrap();
        let mut m2 = toy_model(2);
        let r2 = train_loop(&mut m2, &data, Some(&data), &rule, &params, &mut NoopHook).unwrap();
        assert_eq!(r1.to_csv_string(), r2.to_csv_string());
        assert!(r1.records.last().unwrap().loss < r1.records[0].loss);
    }

    #[test]
    fn csv_schema_is_stable() {
        let data = gen_toy2d(20, 1);
        let params = TrainParams {
            epochs: 1,
            batch_size: 8,
            seed: 1,
        };
        let rule = Sgd::new(0.1).unwrap();
        let mut model = toy_model(5);
        let rec = train_loop(&mut model, &data, None, &rule, &params, &mut NoopHook).unwrap();
        let csv = rec.to_csv_string();
        let header = csv.lines().next().unwrap();
        assert_eq!(header, "epoch,loss,train_accuracy,test_accuracy,var_layer_0");
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn nnsgd_training_keeps_transformed_net_nonnegative() {
        let data = gen_toy2d(60, 7);
        let net = build_preset(Preset::ToyLogreg, Activation::photonic_sigmoid(), 3).unwrap();
        let (tnet, bundle) = nnt_transform(&net, data.input_bound).unwrap();
        let mut model = TrainableModel::Transformed { net: tnet, bundle };
        let rule = Nnsgd::new(0.78, 0.23).unwrap();
        let params = TrainParams {
            epochs: 3,
            batch_size: 16,
            seed: 9,
        };
        struct Audit;
        impl TrainHook for Audit {
            fn on_epoch(&mut self, _r: &EpochRecord, model: &TrainableModel) {
                assert!(model.network().min_param() >= 0.0);
            }
        }
        train_loop(&mut model, &data, None, &rule, &params, &mut Audit).unwrap();
        assert!(model.network().min_param() >= 0.0);
    }

    #[test]
    fn csgd_keeps_params_nonnegative_on_transformed_net() {
        let data = gen_toy2d(60, 7);
        let net = build_preset(Preset::ToyLogreg, Activation::photonic_sinusoidal(), 3).unwrap();
        let (tnet, bundle) = nnt_transform(&net, data.input_bound).unwrap();
        let mut model = TrainableModel::Transformed { net: tnet, bundle };
        let rule = Csgd::new(0.01).unwrap();
        let params = TrainParams {
            epochs: 2,
            batch_size: 16,
            seed: 10,
        };
        train_loop(&mut model, &data, None, &rule, &params, &mut NoopHook).unwrap();
        assert!(model.network().min_param() >= 0.0);
    }

    #[test]
    fn sample_shape_mismatch_is_reported() {
        let data = gen_toy2d(10, 2);
        let net = build_preset(Preset::MnistMlp, Activation::photonic_sigmoid(), 1).unwrap();
        let mut model = TrainableModel::Plain(net);
        let rule = Sgd::new(0.1).unwrap();
        let params = TrainParams {
            epochs: 1,
            batch_size: 4,
            seed: 1,
        };
        let err =
            train_loop(&mut model, &data, None, &rule, &params, &mut NoopHook).unwrap_err();
        assert!(matches!(err, TrainError::SampleShape { .. }));
    }
}
