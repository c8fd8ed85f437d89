use crate::config::{DataArgs, DatasetName};
use anyhow::{bail, Context, Result};
use clap::Args;
use nniso::model_io::load_model;
use nniso::train::{evaluate, TrainableModel};
use nniso::transform::verify_isomorphism;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// The original (regular) model
    #[arg(long)]
    pub model_a: PathBuf,
    /// The transformed model; must carry its rotation bundle
    #[arg(long)]
    pub model_b: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
    /// Optionally also compare test-set accuracy of the pair on this dataset
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetName>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub toy_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub toy_test: usize,
}

pub fn run(args: VerifyArgs) -> Result<bool> {
    let (original, _) = load_model(&args.model_a)
        .with_context(|| format!("loading {}", args.model_a.display()))?;
    let (transformed, bundle) = load_model(&args.model_b)
        .with_context(|| format!("loading {}", args.model_b.display()))?;
    let Some(bundle) = bundle else {
        bail!(
            "{} carries no transform bundle; run `nniso transform` first",
            args.model_b.display()
        );
    };
    let report = verify_isomorphism(&original, &transformed, &bundle, args.samples, args.seed)?;
    println!("{report}");
    let mut pass = report.passed();

    if let Some(dataset) = args.dataset {
        let data = DataArgs {
            dataset,
            data_root: args.data_root.clone(),
            toy_train: args.toy_train,
            toy_test: args.toy_test,
        };
        let (_, test) = data.load(args.seed)?;
        let acc_a = evaluate(&TrainableModel::Plain(original), &test, 256)?.accuracy;
        let acc_b = evaluate(
            &TrainableModel::Transformed {
                net: transformed,
                bundle,
            },
            &test,
            256,
        )?
        .accuracy;
        println!("test accuracy original:    {acc_a}");
        println!("test accuracy transformed: {acc_b}");
        if acc_a != acc_b {
            println!("accuracy mismatch");
            pass = false;
        }
    }
    Ok(pass)
}
