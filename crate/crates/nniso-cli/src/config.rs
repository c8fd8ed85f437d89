//! Shared flag types: dataset/activation/preset selection, default
//! resolution, and artifact paths.

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use nniso::activation::Activation;
use nniso::data::{gen_toy2d, gen_toy_sequences, load_mnist_dir, Dataset, TOY_SEQ_LEN};
use nniso::defaults::{defaults_for, MethodDefaults};
use nniso::presets::Preset;
use nniso::train::MetricsRecord;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationName {
    #[value(alias = "sigmoid", alias = "photonic_sigmoid")]
    PhotonicSigmoid,
    #[value(alias = "sinusoidal", alias = "photonic_sinusoidal")]
    PhotonicSinusoidal,
}

impl ActivationName {
    pub fn activation(self) -> Activation {
        match self {
            ActivationName::PhotonicSigmoid => Activation::photonic_sigmoid(),
            ActivationName::PhotonicSinusoidal => Activation::photonic_sinusoidal(),
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ActivationName::PhotonicSigmoid => "photonic_sigmoid",
            ActivationName::PhotonicSinusoidal => "photonic_sinusoidal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetName {
    #[value(alias = "mnist_mlp")]
    MnistMlp,
    #[value(alias = "fmnist_mlp")]
    FmnistMlp,
    #[value(alias = "toy_logreg")]
    ToyLogreg,
    #[value(alias = "small_cnn")]
    SmallCnn,
    #[value(alias = "toy_rnn")]
    ToyRnn,
}

impl PresetName {
    pub fn preset(self) -> Preset {
        match self {
            PresetName::MnistMlp => Preset::MnistMlp,
            PresetName::FmnistMlp => Preset::FmnistMlp,
            PresetName::ToyLogreg => Preset::ToyLogreg,
            PresetName::SmallCnn => Preset::SmallCnn,
            PresetName::ToyRnn => Preset::ToyRnn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DatasetName {
    Mnist,
    Fmnist,
    Toy2d,
    Toyseq,
}

impl DatasetName {
    pub fn key(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Fmnist => "fmnist",
            DatasetName::Toy2d => "toy2d",
            DatasetName::Toyseq => "toyseq",
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset to train/evaluate on
    #[arg(long, value_enum)]
    pub dataset: DatasetName,
    /// Directory holding IDX datasets in `<root>/<dataset>/` subdirectories;
    /// defaults to $NNISO_DATA_ROOT, then `./data`
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Training samples for the synthetic tasks
    #[arg(long, default_value_t = 2000)]
    pub toy_train: usize,
    /// Test samples for the synthetic tasks
    #[arg(long, default_value_t = 1000)]
    pub toy_test: usize,
}

impl DataArgs {
    fn root(&self) -> PathBuf {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os("NNISO_DATA_ROOT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// Loads `(train, test)`; synthetic sets derive their generator seeds
    /// from the run seed, IDX sets come from disk.
    pub fn load(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        match self.dataset {
            DatasetName::Mnist | DatasetName::Fmnist => {
                let dir = self.root().join(self.dataset.key());
                load_mnist_dir(&dir).with_context(|| {
                    format!(
                        "loading {} from {} (set --data-root or NNISO_DATA_ROOT; \
                         see scripts/fetch_mnist.sh)",
                        self.dataset.key(),
                        dir.display()
                    )
                })
            }
            DatasetName::Toy2d => Ok((
                gen_toy2d(self.toy_train / 2, seed ^ 0x7031),
                gen_toy2d(self.toy_test / 2, seed ^ 0x7032),
            )),
            DatasetName::Toyseq => Ok((
                gen_toy_sequences(self.toy_train, TOY_SEQ_LEN, seed ^ 0x7033),
                gen_toy_sequences(self.toy_test, TOY_SEQ_LEN, seed ^ 0x7034),
            )),
        }
    }
}

/// Defaults lookup for a dataset/preset pairing; `None` when the pairing has
/// no documented defaults (explicit rates are then required).
pub fn resolve_defaults(
    dataset: DatasetName,
    preset: PresetName,
    activation: ActivationName,
) -> Option<&'static MethodDefaults> {
    let arch = match preset {
        PresetName::MnistMlp | PresetName::FmnistMlp => "mlp",
        PresetName::SmallCnn => "cnn",
        PresetName::ToyLogreg => "logreg",
        PresetName::ToyRnn => "rnn",
    };
    defaults_for(dataset.key(), arch, activation.key())
}

pub fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    match value {
        Some(v) => Ok(v),
        None => bail!("{what} not given and no documented default exists for this pairing"),
    }
}

pub fn write_artifacts(
    out_dir: &Path,
    metrics: &MetricsRecord,
    model: Option<(&nniso::Network, Option<&nniso::TransformBundle>)>,
) -> Result<(PathBuf, Option<PathBuf>)> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join("metrics.csv");
    let mut file = std::fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    metrics.write_csv(&mut file)?;
    let model_path = match model {
        Some((net, bundle)) => {
            let path = out_dir.join("model.nniso");
            nniso::model_io::save_model(&path, net, bundle)?;
            Some(path)
        }
        None => None,
    };
    Ok((csv_path, model_path))
}
