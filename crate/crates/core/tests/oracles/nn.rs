//! Independent arithmetic for the gate network: a straight-line forward
//! pass, central finite differences, and synthetic separable data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toolgap_core::gate::mlp::{sigmoid, Layer, Mlp, TrainConfig};
use toolgap_core::gate::{GateLabel, GateModel, ModelMetadata, Standardizer, FEATURE_DIM, MODEL_FORMAT, MODEL_VERSION};
use toolgap_core::harness::GateAction;

/// Forward pass written as explicit matrix arithmetic over nested rows.
pub fn forward_oracle(layers: &[Layer], x: &[f64]) -> f64 {
    let mut a: Vec<f64> = x.to_vec();
    for (k, l) in layers.iter().enumerate() {
        let w: Vec<Vec<f64>> = l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect();
        assert_eq!(w.len(), l.outputs);
        let mut z = vec![0.0; l.outputs];
        for i in 0..l.outputs {
            let mut s = l.bias[i];
            for j in 0..l.inputs {
                s += w[i][j] * a[j];
            }
            z[i] = if k + 1 < layers.len() && s < 0.0 { 0.0 } else { s };
        }
        a = z;
    }
    a[0]
}

/// Network with random weights and biases (biases away from zero keep
/// pre-activations off the ReLU kink).
pub fn random_net(sizes: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
    let mut net = Mlp::new(sizes, rng);
    for l in &mut net.layers {
        for b in &mut l.bias {
            *b = rng.gen_range(0.05..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
    }
    net
}

/// Norm-wise relative error between the analytic gradient and central
/// differences (step 1e-5) of the weighted, L2-regularized loss.
pub fn gradient_error(sizes: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_net(sizes, &mut rng);
    let rows = 6;
    let xs: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let ys: Vec<f64> = (0..rows).map(|i| (i % 2) as f64).collect();
    let ws: Vec<f64> = (0..rows).map(|i| [1.0, 2.0, 3.0][i % 3]).collect();
    let alpha = 1e-2;
    let analytic = net.gradient(&refs, &ys, &ws, alpha);
    let p = net.params();
    let mut probe = net.clone();
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nf = 0.0;
    for i in 0..p.len() {
        let mut q = p.clone();
        q[i] = p[i] + 1e-5;
        probe.set_params(&q);
        let up = probe.loss(&refs, &ys, &ws, alpha);
        q[i] = p[i] - 1e-5;
        probe.set_params(&q);
        let down = probe.loss(&refs, &ys, &ws, alpha);
        let fd = (up - down) / 2e-5;
        diff += (fd - analytic[i]).powi(2);
        na += analytic[i].powi(2);
        nf += fd.powi(2);
    }
    diff.sqrt() / na.sqrt().max(nf.sqrt()).max(1e-300)
}

/// Two Gaussian blobs separated along a random direction: `rows` rows in
/// `groups` groups, label = side of the hyperplane.
pub fn separable_blobs(rows: usize, groups: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<GateLabel>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    let mut gs = Vec::new();
    for r in 0..rows {
        let positive = r % 2 == 0;
        let shift = if positive { 1.5 } else { -1.5 };
        let x: Vec<f64> = dir
            .iter()
            .map(|d| d / norm * shift * (dim as f64).sqrt() / 2.0 + rng.gen_range(-0.5..0.5))
            .collect();
        xs.push(x);
        labels.push(GateLabel {
            decision: if positive { GateAction::Continue } else { GateAction::Commit },
            weight: 1.0,
            priority: if positive { 2 } else { 1 },
        });
        gs.push(format!("g{}", r % groups));
    }
    (xs, labels, gs)
}

/// Gate whose continue probability is `p` for every input.
pub fn constant_model(p: f64, tau: f64) -> GateModel {
    let mut network = Mlp::zeros(&[FEATURE_DIM, 1]);
    network.layers[0].bias[0] = if p >= 1.0 {
        1e6
    } else if p <= 0.0 {
        -1e6
    } else {
        (p / (1.0 - p)).ln()
    };
    GateModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        feature_dim: FEATURE_DIM,
        feature_names: Vec::new(),
        standardizer: Standardizer {
            mean: vec![0.0; FEATURE_DIM],
            std: vec![1.0; FEATURE_DIM],
            constant: vec![false; FEATURE_DIM],
        },
        network,
        tau,
        metadata: ModelMetadata {
            seed: 0,
            epochs: 0,
            best_epoch: 0,
            folds: 0,
            train_rows: 0,
            continue_rows: 0,
            validated: false,
            config: TrainConfig::default(),
        },
    }
}

pub fn sigmoid_of_bias(m: &GateModel) -> f64 {
    sigmoid(m.network.layers[0].bias[0])
}
