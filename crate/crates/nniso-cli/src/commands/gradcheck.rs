use crate::config::{ActivationName, PresetName};
use anyhow::Result;
use clap::Args;
use nniso::gradcheck::{check_preset, GRADCHECK_H};

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub preset: PresetName,
    #[arg(long, value_enum, default_value = "photonic-sigmoid")]
    pub activation: ActivationName,
    #[arg(long)]
    pub seed: u64,
    /// Also check the rotated backward pass of the transformed network
    #[arg(long, default_value_t = true)]
    pub include_transformed: bool,
}

pub fn run(args: GradcheckArgs) -> Result<bool> {
    println!(
        "gradcheck on shrunk {:?} ({}), h = {GRADCHECK_H:e}",
        args.preset,
        args.activation.key(),
    );
    let outcome = check_preset(
        args.preset.preset(),
        args.activation.activation(),
        args.seed,
        args.include_transformed,
    )?;
    println!("net seed:    {}", outcome.net_seed);
    println!("plain:       {}", outcome.plain);
    if let Some(t) = &outcome.transformed {
        println!("transformed: {t}");
    }
    Ok(outcome.pass())
}
