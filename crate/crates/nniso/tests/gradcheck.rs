//! Finite-difference validation of every backward pass, on both the plain
//! and the transformed execution paths.

use nniso::activation::Activation;
use nniso::gradcheck::check_preset;
use nniso::presets::Preset;

fn check(preset: Preset, activation: Activation, seed: u64) {
    let outcome = check_preset(preset, activation, seed, true).unwrap();
    assert!(
        outcome.plain.pass,
        "{} ({}) net seed {}: {}",
        preset.name(),
        activation.name(),
        outcome.net_seed,
        outcome.plain
    );
    let transformed = outcome.transformed.expect("transformed path requested");
    assert!(
        transformed.pass,
        "transformed {} ({}) net seed {}: {}",
        preset.name(),
        activation.name(),
        outcome.net_seed,
        transformed
    );
}

#[test]
fn dense_mlp_gradients_sigmoid() {
    check(Preset::MnistMlp, Activation::photonic_sigmoid(), 11);
}

#[test]
fn dense_mlp_gradients_sinusoidal() {
    check(Preset::MnistMlp, Activation::photonic_sinusoidal(), 12);
}

#[test]
fn conv_gradients_sigmoid() {
    check(Preset::SmallCnn, Activation::photonic_sigmoid(), 13);
}

#[test]
fn conv_gradients_sinusoidal() {
    check(Preset::SmallCnn, Activation::photonic_sinusoidal(), 14);
}

#[test]
fn recurrent_bptt_gradients_sigmoid() {
    check(Preset::ToyRnn, Activation::photonic_sigmoid(), 15);
}

#[test]
fn recurrent_bptt_gradients_sinusoidal() {
    check(Preset::ToyRnn, Activation::photonic_sinusoidal(), 16);
}

#[test]
fn single_unit_binary_gradients() {
    check(Preset::ToyLogreg, Activation::photonic_sigmoid(), 17);
    check(Preset::ToyLogreg, Activation::photonic_sinusoidal(), 18);
}
