//! Small dense network with ReLU hidden layers and a single logit output,
//! trained with weighted binary cross-entropy and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Dot product with four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + dot(row, x));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` includes input and
    /// output widths, e.g. `[120, 128, 64, 1]`.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 1, "network must end in one logit");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let mut l = Layer::zeros(w[0], w[1]);
                let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                for x in &mut l.weights {
                    *x = rng.gen_range(-a..a);
                }
                l
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    /// Output logit.
    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.forward(&cur, &mut next);
            if i < last {
                for v in &mut next {
                    *v = v.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Weighted mean BCE over the rows plus `0.5 * alpha * |W|^2` on the
    /// weights (not biases).
    pub fn loss(&self, xs: &[&[f64]], ys: &[f64], ws: &[f64], alpha: f64) -> f64 {
        let total_w: f64 = ws.iter().sum();
        let data: f64 = xs
            .iter()
            .zip(ys)
            .zip(ws)
            .map(|((x, y), w)| w * bce_with_logit(self.logit(x), *y))
            .sum();
        let reg: f64 = self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum();
        data / total_w + 0.5 * alpha * reg
    }

    /// Gradient of [`loss`](Self::loss), flattened layer by layer as
    /// weights then bias.
    pub fn gradient(&self, xs: &[&[f64]], ys: &[f64], ws: &[f64], alpha: f64) -> Vec<f64> {
        let total_w: f64 = ws.iter().sum();
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect();
        let last = self.layers.len() - 1;
        for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
            // forward pass keeping activations
            let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
            let mut pre: Vec<Vec<f64>> = Vec::new();
            for (i, l) in self.layers.iter().enumerate() {
                let mut z = Vec::new();
                l.forward(acts.last().unwrap(), &mut z);
                let a = if i < last { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
                pre.push(z);
                acts.push(a);
            }
            let z_out = pre[last][0];
            let mut delta = vec![w / total_w * (sigmoid(z_out) - y)];
            for i in (0..=last).rev() {
                let l = &self.layers[i];
                let g = &mut grads[i];
                let input = &acts[i];
                for ((d, gb), row) in delta.iter().zip(&mut g.bias).zip(g.weights.chunks_mut(l.inputs)) {
                    *gb += d;
                    for (gw, v) in row.iter_mut().zip(input) {
                        *gw += d * v;
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (d, row) in delta.iter().zip(l.weights.chunks(l.inputs)) {
                        for (p, wv) in prev.iter_mut().zip(row) {
                            *p += d * wv;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&pre[i - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (g, l) in grads.iter().zip(&self.layers) {
            flat.extend(g.weights.iter().zip(&l.weights).map(|(gw, w)| gw + alpha * w));
            flat.extend(&g.bias);
        }
        flat
    }

    pub fn params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            flat.extend(&l.weights);
            flat.extend(&l.bias);
        }
        flat
    }

    pub fn set_params(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&flat[i..i + n]);
            i += n;
            let m = l.bias.len();
            l.bias.copy_from_slice(&flat[i..i + m]);
            i += m;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-y ln σ(z) - (1-y) ln(1-σ(z))`, computed stably.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            alpha: 1e-4,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_loss: f64,
    /// Whether the monitored loss came from a held-out split.
    pub validated: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Mini-batch training. `train` and `valid` index into `xs`; when `valid`
/// is empty the training loss is monitored instead. The best parameters
/// seen are restored at the end.
#[allow(clippy::too_many_arguments)]
pub fn fit(
    net: &mut Mlp,
    xs: &[Vec<f64>],
    ys: &[f64],
    ws: &[f64],
    train: &[usize],
    valid: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> FitReport {
    let rows = |idx: &[usize]| -> (Vec<&[f64]>, Vec<f64>, Vec<f64>) {
        (
            idx.iter().map(|&i| xs[i].as_slice()).collect(),
            idx.iter().map(|&i| ys[i]).collect(),
            idx.iter().map(|&i| ws[i]).collect(),
        )
    };
    let monitor = if valid.is_empty() { train } else { valid };
    let (mx, my, mw) = rows(monitor);
    let mut params = net.params();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut best = (net.loss(&mx, &my, &mw, cfg.alpha), params.clone(), 0usize);
    let mut order = train.to_vec();
    let mut epochs = 0;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (bx, by, bw) = rows(chunk);
            let g = net.gradient(&bx, &by, &bw, cfg.alpha);
            adam.step(&mut params, &g);
            net.set_params(&params);
        }
        let loss = net.loss(&mx, &my, &mw, cfg.alpha);
        if loss < best.0 - 1e-12 {
            best = (loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    net.set_params(&best.1);
    FitReport {
        epochs,
        best_epoch: best.2,
        best_loss: best.0,
        validated: !valid.is_empty(),
    }
}
