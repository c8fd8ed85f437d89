use crate::config::{
    require, resolve_defaults, write_artifacts, ActivationName, DataArgs, PresetName,
};
use anyhow::Result;
use clap::{Args, ValueEnum};
use nniso::optim::{Csgd, Nnsgd, UpdateRule};
use nniso::presets::{build_preset_with_init, InitScheme};
use nniso::train::{train_loop, NoopHook, TrainParams, TrainableModel};
use nniso::transform::nnt_transform;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    /// Kaiming-uniform draw followed by the non-negative transform
    KaimingTransform,
    /// Strictly positive exponential draw, no transform
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rule {
    Csgd,
    Nnsgd,
}

#[derive(Debug, Args)]
pub struct ScratchArgs {
    #[arg(long, value_enum)]
    pub preset: PresetName,
    #[arg(long, value_enum, default_value = "photonic-sigmoid")]
    pub activation: ActivationName,
    #[arg(long, value_enum)]
    pub init: Init,
    #[arg(long, value_enum)]
    pub optimizer: Rule,
    #[command(flatten)]
    pub data: DataArgs,
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
    /// Rate of the exponential initialization
    #[arg(long, default_value_t = 100.0)]
    pub lambda: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: ScratchArgs) -> Result<bool> {
    let defaults = resolve_defaults(args.data.dataset, args.preset, args.activation);
    let epochs = require(args.epochs.or(defaults.map(|d| d.epochs)), "--epochs")?;
    let batch_size = require(
        args.batch_size.or(defaults.map(|d| d.batch_size)),
        "--batch-size",
    )?;
    let (train, test) = args.data.load(args.seed)?;

    let mut model = match args.init {
        Init::KaimingTransform => {
            let net = build_preset_with_init(
                args.preset.preset(),
                args.activation.activation(),
                InitScheme::Kaiming,
                args.seed,
            )?;
            let (tnet, bundle) = nnt_transform(&net, train.input_bound)?;
            TrainableModel::Transformed { net: tnet, bundle }
        }
        Init::Exponential => TrainableModel::Plain(build_preset_with_init(
            args.preset.preset(),
            args.activation.activation(),
            InitScheme::Exponential { lambda: args.lambda },
            args.seed,
        )?),
    };
    let rule: Box<dyn UpdateRule> = match args.optimizer {
        Rule::Csgd => {
            let eta = require(
                args.eta_nn.or(defaults.and_then(|d| match args.init {
                    Init::KaimingTransform => Some(d.csgd_scratch_eta),
                    Init::Exponential => d.csgd_exp_eta,
                })),
                "--eta-nn",
            )?;
            Box::new(Csgd::new(eta)?)
        }
        Rule::Nnsgd => {
            let rates = defaults.and_then(|d| match args.init {
                Init::KaimingTransform => Some(d.nnsgd_scratch),
                Init::Exponential => d.nnsgd_exp,
            });
            let eta_in = require(args.eta_in.or(rates.map(|r| r.eta_in)), "--eta-in")?;
            let eta_out = require(args.eta_out.or(rates.map(|r| r.eta_out)), "--eta-out")?;
            Box::new(Nnsgd::new(eta_in, eta_out)?)
        }
    };
    assert!(
        model.network().min_param() >= 0.0,
        "scratch training must start non-negative"
    );
    println!(
        "non-negative training from scratch ({:?} + {}) for {epochs} epochs, batch {batch_size}, seed {}",
        args.init,
        rule.name(),
        args.seed
    );
    let params = TrainParams {
        epochs,
        batch_size,
        seed: args.seed,
    };
    // non-negativity is audited inside the loop after every epoch
    let metrics = train_loop(&mut model, &train, Some(&test), rule.as_ref(), &params, &mut NoopHook)?;
    for r in &metrics.records {
        println!(
            "epoch {:>3}: loss {:.6}, train acc {:.4}, test acc {:.4}",
            r.epoch, r.loss, r.train_accuracy, r.test_accuracy
        );
    }
    println!("final min parameter: {:e}", model.network().min_param());
    let (csv, model_path) = write_artifacts(
        &args.out_dir,
        &metrics,
        Some((model.network(), model.bundle())),
    )?;
    println!(
        "wrote {} and {}",
        csv.display(),
        model_path.expect("scratch writes a model").display()
    );
    Ok(true)
}
