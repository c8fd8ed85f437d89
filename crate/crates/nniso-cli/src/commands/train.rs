use crate::config::{
    require, resolve_defaults, write_artifacts, ActivationName, DataArgs, PresetName,
};
use anyhow::Result;
use clap::Args;
use nniso::optim::Sgd;
use nniso::presets::build_preset;
use nniso::train::{evaluate, train_loop, NoopHook, TrainParams, TrainableModel};
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub preset: PresetName,
    #[arg(long, value_enum, default_value = "photonic-sigmoid")]
    pub activation: ActivationName,
    #[command(flatten)]
    pub data: DataArgs,
    /// SGD learning rate; defaults to the documented value for the pairing
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// RNG seed; there is no wall-clock fallback
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: TrainArgs) -> Result<bool> {
    let defaults = resolve_defaults(args.data.dataset, args.preset, args.activation);
    let eta = require(args.eta.or(defaults.map(|d| d.sgd_eta)), "--eta")?;
    let epochs = require(args.epochs.or(defaults.map(|d| d.epochs)), "--epochs")?;
    let batch_size = require(
        args.batch_size.or(defaults.map(|d| d.batch_size)),
        "--batch-size",
    )?;
    let (train, test) = args.data.load(args.seed)?;
    let net = build_preset(args.preset.preset(), args.activation.activation(), args.seed)?;
    println!(
        "training {} ({}) on {}: eta={eta}, {epochs} epochs, batch {batch_size}, seed {}",
        clap::ValueEnum::to_possible_value(&args.preset).unwrap().get_name(),
        args.activation.key(),
        args.data.dataset.key(),
        args.seed
    );
    let mut model = TrainableModel::Plain(net);
    let rule = Sgd::new(eta)?;
    let params = TrainParams {
        epochs,
        batch_size,
        seed: args.seed,
    };
    let metrics = train_loop(&mut model, &train, Some(&test), &rule, &params, &mut NoopHook)?;
    for r in &metrics.records {
        println!(
            "epoch {:>3}: loss {:.6}, train acc {:.4}, test acc {:.4}",
            r.epoch, r.loss, r.train_accuracy, r.test_accuracy
        );
    }
    let final_eval = evaluate(&model, &test, batch_size)?;
    println!("final test accuracy: {:.4}", final_eval.accuracy);
    let (csv, model_path) =
        write_artifacts(&args.out_dir, &metrics, Some((model.network(), None)))?;
    println!(
        "wrote {} and {}",
        csv.display(),
        model_path.expect("train writes a model").display()
    );
    Ok(true)
}
