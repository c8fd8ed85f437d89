//! Compiled-in hyperparameter defaults (see `defaults.toml`), looked up by
//! `(dataset, architecture, activation)`.

use serde::Deserialize;
use std::collections::HashMap;
use std::sync::OnceLock;

const DEFAULTS_TOML: &str = include_str!("../defaults.toml");

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct NnsgdRates {
    pub eta_in: f64,
    pub eta_out: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct MethodDefaults {
    pub epochs: usize,
    pub batch_size: usize,
    /// Regular-pretraining epochs of the post-training scenario.
    pub t_r: usize,
    /// Non-negative epochs of the post-training scenario.
    pub t_nn: usize,
    pub sgd_eta: f64,
    pub csgd_direct_eta: Option<f64>,
    pub csgd_transform_eta: f64,
    pub nnsgd_post: NnsgdRates,
    pub csgd_exp_eta: Option<f64>,
    pub csgd_scratch_eta: f64,
    pub nnsgd_exp: Option<NnsgdRates>,
    pub nnsgd_scratch: NnsgdRates,
}

type Table = HashMap<String, HashMap<String, HashMap<String, MethodDefaults>>>;

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| toml::from_str(DEFAULTS_TOML).expect("defaults.toml is well formed"))
}

/// Defaults for a `(dataset, architecture, activation)` triple, e.g.
/// `("mnist", "mlp", "photonic_sigmoid")`.
pub fn defaults_for(dataset: &str, arch: &str, activation: &str) -> Option<&'static MethodDefaults> {
    table().get(dataset)?.get(arch)?.get(activation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_mlp_sigmoid_values() {
        let d = defaults_for("mnist", "mlp", "photonic_sigmoid").unwrap();
        assert_eq!(d.sgd_eta, 0.092);
        assert_eq!(d.epochs, 10);
        assert_eq!(d.batch_size, 256);
        assert_eq!(d.t_r, 5);
        assert_eq!(d.t_nn, 5);
        assert_eq!(d.nnsgd_post.eta_in, 0.78);
        assert_eq!(d.nnsgd_post.eta_out, 0.23);
        assert_eq!(d.csgd_direct_eta, Some(0.0004));
        assert_eq!(d.csgd_exp_eta, Some(0.0001));
        assert_eq!(d.nnsgd_scratch.eta_in, 0.64);
        assert_eq!(d.nnsgd_scratch.eta_out, 0.6);
    }

    #[test]
    fn every_activation_has_both_kinds_where_defined() {
        for (ds, arch) in [("mnist", "mlp"), ("fmnist", "mlp"), ("toy2d", "logreg")] {
            assert!(defaults_for(ds, arch, "photonic_sigmoid").is_some());
            assert!(defaults_for(ds, arch, "photonic_sinusoidal").is_some());
        }
        assert!(defaults_for("cifar100", "mlp", "photonic_sigmoid").is_none());
    }
}
