use anyhow::{Context, Result};
use clap::Args;
use nniso::model_io::{load_model, save_model};
use nniso::transform::nnt_transform_model;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Upper bound of the network's input features
    #[arg(long, default_value_t = 1.0)]
    pub input_bound: f64,
}

pub fn run(args: TransformArgs) -> Result<bool> {
    let (net, prior) = load_model(&args.model_in)
        .with_context(|| format!("loading {}", args.model_in.display()))?;
    if prior.is_some() {
        println!("input model is already transformed; composing with its bundle");
    }
    let (tnet, bundle) = nnt_transform_model(&net, prior.as_ref(), args.input_bound)?;
    for (i, entry) in bundle.summary(&tnet).iter().enumerate() {
        match entry {
            None => println!("layer {i}: pass-through"),
            Some((c, alphas)) if alphas.len() == 1 => {
                println!("layer {i}: c = {c}, alpha = {}", alphas[0]);
            }
            Some((c, alphas)) => {
                println!(
                    "layer {i}: c = {c}, alpha_in = {}, alpha_rec = {}",
                    alphas[0], alphas[1]
                );
            }
        }
    }
    save_model(&args.model_out, &tnet, Some(&bundle))?;
    println!(
        "wrote non-negative isomorphic model to {}",
        args.model_out.display()
    );
    Ok(true)
}
