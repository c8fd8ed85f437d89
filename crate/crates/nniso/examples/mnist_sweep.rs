use nniso::activation::Activation;
use nniso::data::load_mnist_dir;
use nniso::optim::Sgd;
use nniso::presets::{build_preset, Preset};
use nniso::train::*;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eta: f64 = args[1].parse().unwrap();
    let seed: u64 = args[2].parse().unwrap();
    let act = if args.len() > 3 && args[3] == "sin" {
        Activation::photonic_sinusoidal()
    } else {
        Activation::photonic_sigmoid()
    };
    let (train, test) = load_mnist_dir(Path::new("data/mnist")).unwrap();
    let net = build_preset(Preset::MnistMlp, act, seed).unwrap();
    let mut model = TrainableModel::Plain(net);
    let rule = Sgd::new(eta).unwrap();
    let params = TrainParams { epochs: 10, batch_size: 256, seed };
    let m = train_loop(&mut model, &train, Some(&test), &rule, &params, &mut NoopHook).unwrap();
    for r in &m.records {
        println!("eta={eta} seed={seed} {}: epoch {} loss {:.4} train {:.4} test {:.4}",
            args.get(3).map(|s| s.as_str()).unwrap_or("sig"), r.epoch, r.loss, r.train_accuracy, r.test_accuracy);
    }
}
