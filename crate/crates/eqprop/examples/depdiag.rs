use eqprop::runner::load_split;
use eqprop::Split;
use eqprop_core::activation::Activation;
use eqprop_core::config::{BranchSpec, NetworkConfig, NeuronModel};
use eqprop_core::ep::{ep_gradient, Estimator};
use eqprop_core::optim::{sgd_momentum_step, OptimizerState};
use eqprop_core::params::LayerParams;
use eqprop_core::train::{epoch_permutation, evaluate};
use eqprop_core::Network;
use std::path::Path;

#[derive(Clone, Copy)]
struct Mod { zero_apical: bool, zero_basal: bool, lr: [f64;2], beta: f64 }

fn run(name: &str, train: &eqprop::Dataset, test: &eqprop::Dataset, m: Mod, epochs: usize) {
    let config = NetworkConfig {
        input_size: 784, hidden_sizes: vec![256], output_size: 10,
        neuron_model: NeuronModel::Dendritic(BranchSpec::default()),
        hidden_activation: Activation::HardSigmoid,
        beta_default: m.beta,
    };
    let mut net = Network::init(config.clone(), 0).unwrap();
    let mut opt = OptimizerState::new(&net.params);
    let view = train.view();
    let mut outlier_max: f64 = 0.0;
    for epoch in 0..epochs {
        let order = epoch_permutation(0, epoch, train.len());
        for chunk in order.chunks(64) {
            let (input, target) = view.gather(chunk, 10);
            let (mut g, _) = ep_gradient(&net, &input, &target, m.beta, 60, 12, Estimator::Symmetric).unwrap();
            if let LayerParams::Dendritic { basal, apical, .. } = &mut g.layers[0] {
                if m.zero_apical { for w in &mut apical.weights { w.fill(0.0); } }
                if m.zero_basal { for w in &mut basal.weights { w.fill(0.0); } }
                for w in &basal.weights {
                    for &v in w.data() { outlier_max = outlier_max.max(v.abs()); }
                }
            }
            sgd_momentum_step(&mut net.params, &g, &mut opt, &m.lr, 0.9).unwrap();
        }
    }
    let (tr, _) = evaluate(&net, view, 60).unwrap();
    let (te, _) = evaluate(&net, test.view(), 60).unwrap();
    let idx: Vec<usize> = (0..128).collect();
    let (input, _) = view.gather(&idx, 10);
    let free = net.free_phase(&input, 60, false).unwrap();
    let drive = net.input_drive(&input).unwrap();
    let pre = net.preacts(&free.final_state, &drive, None);
    let h = pre.pre[0].data();
    let high = h.iter().filter(|&&v| v >= 1.0).count() as f64 / h.len() as f64;
    println!("{name}: train {tr:.1}% test {te:.1}% hid_high {high:.3} max|basal g| {outlier_max:.2}");
}

fn main() {
    let train = load_split(Path::new("data"), eqprop::DatasetName::Mnist, Split::Train).unwrap().take(8192);
    let test = load_split(Path::new("data"), eqprop::DatasetName::Mnist, Split::Test).unwrap().take(2000);
    let base = Mod { zero_apical: false, zero_basal: false, lr: [0.04, 0.02], beta: 0.1 };
    run("A full DEP            ", &train, &test, base, 12);
    run("B frozen apical       ", &train, &test, Mod { zero_apical: true, ..base }, 12);
    run("C frozen basal        ", &train, &test, Mod { zero_basal: true, ..base }, 12);
    run("D lr1 x0.1            ", &train, &test, Mod { lr: [0.004, 0.02], ..base }, 12);
    run("E beta 0.2            ", &train, &test, Mod { beta: 0.2, ..base }, 12);
}
