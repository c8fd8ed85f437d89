use crate::config::{require, resolve_defaults, write_artifacts, ActivationName, DataArgs};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use nniso::model_io::load_model;
use nniso::network::Network;
use nniso::optim::{Csgd, Nnsgd, UpdateRule};
use nniso::train::{evaluate, train_loop, EpochRecord, NoopHook, TrainParams, TrainableModel};
use nniso::transform::nnt_transform_model;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    /// Clipping applied directly to the loaded parameters
    ClipDirect,
    /// Non-negative transform, then clipping SGD
    TransformCsgd,
    /// Non-negative transform, then the sign-preserving rule
    TransformNnsgd,
}

#[derive(Debug, Args)]
pub struct PosttrainArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    #[arg(long, value_enum)]
    pub regime: Regime,
    #[command(flatten)]
    pub data: DataArgs,
    /// Non-negative training epochs (T_nn)
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eta_nn: Option<f64>,
    #[arg(long)]
    pub eta_in: Option<f64>,
    #[arg(long)]
    pub eta_out: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub input_bound: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Matches a loaded architecture against the preset table so defaults can be
/// looked up for model files produced by `nniso train`.
fn preset_name_of(net: &Network) -> Option<crate::config::PresetName> {
    use crate::config::PresetName;
    let shapes = net.layer_shapes().ok()?;
    let widths: Vec<usize> = shapes.iter().map(|s| s.iter().product()).collect();
    match (net.input_shape.as_slice(), widths.as_slice()) {
        ([784], [200, 100, 10]) => Some(PresetName::MnistMlp),
        ([2], [1]) => Some(PresetName::ToyLogreg),
        ([1, 28, 28], ..) => Some(PresetName::SmallCnn),
        ([_, 1], [16, 2]) => Some(PresetName::ToyRnn),
        _ => None,
    }
}

fn activation_name_of(net: &Network) -> ActivationName {
    match net.head_activation().kind {
        nniso::ActivationKind::PhotonicSigmoid { .. } => ActivationName::PhotonicSigmoid,
        nniso::ActivationKind::PhotonicSinusoidal => ActivationName::PhotonicSinusoidal,
    }
}

/// Evaluation-only row recorded before any parameter update.
pub fn initial_record(
    model: &TrainableModel,
    train: &nniso::Dataset,
    test: &nniso::Dataset,
    batch_size: usize,
) -> Result<EpochRecord> {
    let on_train = evaluate(model, train, batch_size)?;
    let on_test = evaluate(model, test, batch_size)?;
    Ok(EpochRecord {
        epoch: 0,
        loss: on_train.loss,
        train_accuracy: on_train.accuracy,
        test_accuracy: on_test.accuracy,
        weight_variances: model.network().weight_variances(),
    })
}

pub fn run(args: PosttrainArgs) -> Result<bool> {
    let (net, prior) = load_model(&args.model_in)
        .with_context(|| format!("loading {}", args.model_in.display()))?;
    let defaults = preset_name_of(&net)
        .and_then(|p| resolve_defaults(args.data.dataset, p, activation_name_of(&net)));
    let epochs = require(args.epochs.or(defaults.map(|d| d.t_nn)), "--epochs")?;
    let batch_size = require(
        args.batch_size.or(defaults.map(|d| d.batch_size)),
        "--batch-size",
    )?;
    let (train, test) = args.data.load(args.seed)?;

    let (mut model, rule): (TrainableModel, Box<dyn UpdateRule>) = match args.regime {
        Regime::ClipDirect => {
            let eta = require(
                args.eta_nn.or(defaults.and_then(|d| d.csgd_direct_eta)),
                "--eta-nn",
            )?;
            let model = match prior {
                Some(bundle) => TrainableModel::Transformed { net, bundle },
                None => TrainableModel::Plain(net),
            };
            (model, Box::new(Csgd::new(eta)?))
        }
        Regime::TransformCsgd => {
            let eta = require(
                args.eta_nn.or(defaults.map(|d| d.csgd_transform_eta)),
                "--eta-nn",
            )?;
            let (tnet, bundle) = nnt_transform_model(&net, prior.as_ref(), args.input_bound)?;
            (
                TrainableModel::Transformed { net: tnet, bundle },
                Box::new(Csgd::new(eta)?),
            )
        }
        Regime::TransformNnsgd => {
            let eta_in = require(
                args.eta_in.or(defaults.map(|d| d.nnsgd_post.eta_in)),
                "--eta-in",
            )?;
            let eta_out = require(
                args.eta_out.or(defaults.map(|d| d.nnsgd_post.eta_out)),
                "--eta-out",
            )?;
            let (tnet, bundle) = nnt_transform_model(&net, prior.as_ref(), args.input_bound)?;
            (
                TrainableModel::Transformed { net: tnet, bundle },
                Box::new(Nnsgd::new(eta_in, eta_out)?),
            )
        }
    };
    println!(
        "post-training ({:?}) with {} for {epochs} epochs, batch {batch_size}, seed {}",
        args.regime,
        rule.name(),
        args.seed
    );
    let initial = initial_record(&model, &train, &test, batch_size)?;
    println!(
        "epoch   0: loss {:.6}, train acc {:.4}, test acc {:.4} (state at start)",
        initial.loss, initial.train_accuracy, initial.test_accuracy
    );
    let params = TrainParams {
        epochs,
        batch_size,
        seed: args.seed,
    };
    let mut metrics = train_loop(&mut model, &train, Some(&test), rule.as_ref(), &params, &mut NoopHook)?;
    metrics.records.insert(0, initial);
    for r in metrics.records.iter().skip(1) {
        println!(
            "epoch {:>3}: loss {:.6}, train acc {:.4}, test acc {:.4}",
            r.epoch, r.loss, r.train_accuracy, r.test_accuracy
        );
    }
    let (csv, model_path) = write_artifacts(
        &args.out_dir,
        &metrics,
        Some((model.network(), model.bundle())),
    )?;
    println!(
        "wrote {} and {}",
        csv.display(),
        model_path.expect("posttrain writes a model").display()
    );
    Ok(true)
}
