use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataprep::TransformManifest;
use crate::seed;

pub const DEFAULT_HIDDEN: usize = 128;

/// Layer sizes. Parameters live in one flat vector laid out as
/// `W1 (hidden x input, row-major) | b1 | W2 (output x hidden) | b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Dims {
    pub fn n_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    pub fn b1(&self) -> usize {
        self.hidden * self.input
    }

    pub fn w2(&self) -> usize {
        self.b1() + self.hidden
    }

    pub fn b2(&self) -> usize {
        self.w2() + self.output * self.hidden
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub dims: Dims,
    pub activation: Activation,
    pub params: Vec<f64>,
    pub feature_order: Vec<String>,
    /// Status code per output unit.
    pub label_codes: Vec<u16>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("input has {got} features, model expects {expected}")]
pub struct DimensionMismatch {
    pub expected: usize,
    pub got: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax, max-shifted.
pub fn softmax(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(dims: Dims, rng: &mut seed::Rng) -> Vec<f64> {
    let mut p = vec![0.0; dims.n_params()];
    let a1 = (6.0 / (dims.input + dims.hidden) as f64).sqrt();
    for w in &mut p[..dims.b1()] {
        *w = rng.random_range(-a1..a1);
    }
    let a2 = (6.0 / (dims.hidden + dims.output) as f64).sqrt();
    for w in &mut p[dims.w2()..dims.b2()] {
        *w = rng.random_range(-a2..a2);
    }
    p
}

pub fn init_model(n_features: usize, n_classes: usize, hidden_dim: usize, seed: u64) -> MlpModel {
    assert!(n_features >= 1 && n_classes >= 2 && hidden_dim >= 1, "degenerate model shape");
    let dims = Dims {
        input: n_features,
        hidden: hidden_dim,
        output: n_classes,
    };
    MlpModel {
        dims,
        activation: Activation::Sigmoid,
        params: init_params(dims, &mut seed::phase_rng(seed, "init")),
        feature_order: (0..n_features).map(|i| format!("f{i}")).collect(),
        label_codes: (0..n_classes as u16).collect(),
    }
}

pub fn init_for_manifest(manifest: &TransformManifest, hidden_dim: usize, seed: u64) -> MlpModel {
    let mut m = init_model(manifest.n_features(), manifest.n_classes(), hidden_dim, seed);
    m.feature_order = manifest.feature_order.clone();
    m.label_codes = manifest.label_unmap.clone();
    m
}

/// Hidden activations and output logits for one input.
pub(crate) fn forward_raw(p: &[f64], d: Dims, x: &[f64], h: &mut [f64], z: &mut [f64]) {
    let (w1, rest) = p.split_at(d.b1());
    let (b1, rest) = rest.split_at(d.hidden);
    let (w2, b2) = rest.split_at(d.output * d.hidden);
    for j in 0..d.hidden {
        let row = &w1[j * d.input..(j + 1) * d.input];
        let a: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[j];
        h[j] = sigmoid(a);
    }
    for c in 0..d.output {
        let row = &w2[c * d.hidden..(c + 1) * d.hidden];
        z[c] = row.iter().zip(h.iter()).map(|(w, v)| w * v).sum::<f64>() + b2[c];
    }
}

impl MlpModel {
    pub fn w1(&self) -> &[f64] {
        &self.params[..self.dims.b1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.dims.b1()..self.dims.w2()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.dims.w2()..self.dims.b2()]
    }

    pub fn b2(&self) -> &[f64] {
        &self.params[self.dims.b2()..]
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, DimensionMismatch> {
        if x.len() != self.dims.input {
            return Err(DimensionMismatch {
                expected: self.dims.input,
                got: x.len(),
            });
        }
        let mut h = vec![0.0; self.dims.hidden];
        let mut z = vec![0.0; self.dims.output];
        forward_raw(&self.params, self.dims, x, &mut h, &mut z);
        Ok(z)
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DimensionMismatch> {
        let mut z = self.logits(x)?;
        softmax(&mut z);
        Ok(z)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize, DimensionMismatch> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn predict_status(&self, x: &[f64]) -> Result<u16, DimensionMismatch> {
        Ok(self.label_codes[self.predict_class(x)?])
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
