use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{KernelMatrix, LayerDescriptor, LayerKind};

/// Fully connected layer; the weight is an `o × d` kernel matrix, i.e. a
/// convolution with a 1×1 kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: KernelMatrix,
    pub bias: Vec<f64>,
}

/// Rectifier MLP with a softmax cross-entropy head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetwork {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer parameter gradients, same layout as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &ToyNetwork) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| vec![0.0; l.weight.data().len()])
                .collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Weights then bias for each layer in turn, matching
    /// [`ToyNetwork::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }
}

pub fn layer_name(index: usize) -> String {
    format!("fc{index}")
}

impl ToyNetwork {
    /// `sizes = [input, hidden…, classes]`; weights ~ N(0, 1/d), biases 0.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1417));
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (d, o) = (w[0], w[1]);
                let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid std");
                let data = (0..o * d).map(|_| normal.sample(&mut rng)).collect();
                Ok(DenseLayer {
                    weight: KernelMatrix::from_rows(o, d, data)?,
                    bias: vec![0.0; o],
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    /// Descriptors `fc0, fc1, …`; layers sharing a shape form one group.
    pub fn architecture(&self) -> Vec<LayerDescriptor> {
        let mut seen: Vec<(usize, usize)> = Vec::new();
        self.layers
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let (o, d) = l.weight.shape();
                let module_index = seen.iter().filter(|&&s| s == (o, d)).count();
                seen.push((o, d));
                LayerDescriptor {
                    name: layer_name(j),
                    o,
                    i: d,
                    kh: 1,
                    kw: 1,
                    group: format!("{o}x{d}"),
                    module_index,
                    kind: if j == 0 {
                        LayerKind::Stem
                    } else {
                        LayerKind::Conv
                    },
                }
            })
            .collect()
    }

    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (j, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let mut z: Vec<f64> = layer
                .weight
                .row_iter()
                .zip(&layer.bias)
                .map(|(row, b)| row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + b)
                .collect();
            if j < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.activations(x).pop().unwrap()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.len())
            .filter(|&n| self.predict(data.sample(n)) == data.labels[n])
            .count();
        hits as f64 / data.len() as f64
    }

    /// Mean cross-entropy over the listed samples and its gradient.
    pub fn task_loss_and_grad(&self, data: &Dataset, batch: &[usize]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for &n in batch {
            let acts = self.activations(data.sample(n));
            let logits = acts.last().unwrap();
            let (lse, probs) = log_softmax_parts(logits);
            let label = data.labels[n];
            loss += lse - logits[label];

            let mut delta: Vec<f64> = probs;
            delta[label] -= 1.0;
            for j in (0..self.layers.len()).rev() {
                let input = &acts[j];
                let layer = &self.layers[j];
                let d = layer.weight.cols();
                for (r, &g) in delta.iter().enumerate() {
                    if g == 0.0 {
                        continue;
                    }
                    let gw = &mut grads.weights[j][r * d..(r + 1) * d];
                    for (w, a) in gw.iter_mut().zip(input) {
                        *w += scale * g * a;
                    }
                    grads.biases[j][r] += scale * g;
                }
                if j == 0 {
                    break;
                }
                // back through Wᵀ and the rectifier of the previous layer
                let mut prev = vec![0.0; d];
                for (r, &g) in delta.iter().enumerate() {
                    if g != 0.0 {
                        for (p, w) in prev.iter_mut().zip(layer.weight.row(r)) {
                            *p += g * w;
                        }
                    }
                }
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        (loss * scale, grads)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(&l.bias).copied())
            .collect()
    }

    /// Copy of the network with parameters taken from `flat`.
    pub fn with_flat_params(&self, flat: &[f64]) -> ToyNetwork {
        let mut out = self.clone();
        let mut pos = 0;
        for l in &mut out.layers {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            let m = l.bias.len();
            l.bias.copy_from_slice(&flat[pos..pos + m]);
            pos += m;
        }
        out
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (j, &x)| {
            if x > best.1 {
                (j, x)
            } else {
                best
            }
        })
        .0
}

/// `(log Σ exp z, softmax z)`
fn log_softmax_parts(z: &[f64]) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (m + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}
