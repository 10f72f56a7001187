//! Fully-connected reward network `r(s) = f(φ(s); θ)` with an analytic
//! backward pass. Hidden layers use `tanh`; the output layer is linear and
//! one unit wide.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureMap;
use crate::{Error, Result};

pub const DEFAULT_WIDTHS: [usize; 4] = [4, 32, 32, 1];

/// Per-state rewards over a window, indexed like the MDP states.
pub type RewardMap = Vec<f64>;

/// Anything that scores every cell of a feature map.
pub trait RewardFunction {
    fn rewards(&self, features: &FeatureMap) -> Result<RewardMap>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.biases[o];
            out.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub seed: u64,
    pub layers: Vec<Dense>,
}

/// Gradient buffer congruent with a [`RewardModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::InvalidParameter { name: "widths", reason: "need >= 2 positive widths" });
    }
    if *widths.last().unwrap() != 1 {
        return Err(Error::InvalidParameter { name: "widths", reason: "output width must be 1" });
    }
    Ok(())
}

impl RewardModel {
    /// Uniform `±1/√fan_in` initialisation from `seed`.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / libm::sqrt(w[0] as f64);
                let mut layer = Dense::zeros(w[0], w[1]);
                layer.weights.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
                layer.biases.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
                layer
            })
            .collect();
        Ok(Self { seed, layers })
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let layers = widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { seed: 0, layers })
    }

    /// A network that computes `tanh∘…∘tanh(gain·w·φ)/gain` through hidden
    /// unit 0 of every layer, i.e. approximately the linear reward `w·φ`
    /// for small `gain`.
    pub fn near_linear(widths: &[usize], feature_weights: &[f64], gain: f64) -> Result<Self> {
        let mut model = Self::zeros(widths)?;
        if feature_weights.len() != widths[0] {
            return Err(Error::FeatureDimension { expected: widths[0], found: feature_weights.len() });
        }
        let last = model.layers.len() - 1;
        for (k, layer) in model.layers.iter_mut().enumerate() {
            if k == 0 && k == last {
                layer.weights.copy_from_slice(feature_weights);
            } else if k == 0 {
                for (w, f) in layer.weights[..layer.inputs].iter_mut().zip(feature_weights) {
                    *w = gain * f;
                }
            } else if k == last {
                layer.weights[0] = 1.0 / gain;
            } else {
                layer.weights[0] = 1.0;
            }
        }
        Ok(model)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        w.push(1);
        w
    }

    pub fn n_features(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flat parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch);
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn from_parameters(widths: &[usize], seed: u64, flat: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(widths)?;
        m.seed = seed;
        m.set_parameters(flat)?;
        Ok(m)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Reward of one feature vector.
    pub fn forward_features(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if k != last {
                z.iter_mut().for_each(|v| *v = libm::tanh(*v));
            }
            core::mem::swap(&mut a, &mut z);
        }
        a[0]
    }

    fn check_features(&self, fm: &FeatureMap) -> Result<()> {
        if fm.n_features() != self.n_features() {
            return Err(Error::FeatureDimension { expected: self.n_features(), found: fm.n_features() });
        }
        Ok(())
    }

    /// Per-cell rewards.
    pub fn forward(&self, fm: &FeatureMap) -> Result<RewardMap> {
        self.check_features(fm)?;
        let mut x = vec![0.0; self.n_features()];
        Ok((0..fm.state_count())
            .map(|s| {
                fm.features_at(s, &mut x);
                self.forward_features(&x)
            })
            .collect())
    }

    /// `Σ_s error(s)·∂r(s)/∂θ` by reverse-mode differentiation.
    pub fn backward(&self, fm: &FeatureMap, per_state_error: &[f64]) -> Result<Gradients> {
        self.check_features(fm)?;
        if per_state_error.len() != fm.state_count() {
            return Err(Error::StateCount { expected: fm.state_count(), found: per_state_error.len() });
        }
        let mut grad = self.zero_gradients();
        let mut x = vec![0.0; self.n_features()];
        let last = self.layers.len() - 1;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (s, &err) in per_state_error.iter().enumerate() {
            if err == 0.0 {
                continue;
            }
            fm.features_at(s, &mut x);
            activations.clear();
            activations.push(x.clone());
            for (k, layer) in self.layers.iter().enumerate() {
                let mut z = Vec::new();
                layer.apply(activations.last().unwrap(), &mut z);
                if k != last {
                    z.iter_mut().for_each(|v| *v = libm::tanh(*v));
                }
                activations.push(z);
            }
            // delta = ∂(err·r)/∂z for the current layer's pre-activation
            let mut delta = vec![err];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let input = &activations[k];
                for o in 0..layer.outputs {
                    grad.biases[k][o] += delta[o];
                    let row = &mut grad.weights[k][o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += delta[o] * xi;
                    }
                }
                if k == 0 {
                    break;
                }
                // back through W, then through tanh of the layer below
                let mut below = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (b, w) in below.iter_mut().zip(row) {
                        *b += delta[o] * w;
                    }
                }
                for (b, a) in below.iter_mut().zip(input) {
                    *b *= 1.0 - a * a;
                }
                delta = below;
            }
        }
        Ok(grad)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

impl RewardFunction for RewardModel {
    fn rewards(&self, features: &FeatureMap) -> Result<RewardMap> {
        self.forward(features)
    }
}

/// Plain linear reward `w·φ(s)`; used by the scripted expert.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReward {
    pub weights: Vec<f64>,
}

impl RewardFunction for LinearReward {
    fn rewards(&self, fm: &FeatureMap) -> Result<RewardMap> {
        if fm.n_features() != self.weights.len() {
            return Err(Error::FeatureDimension { expected: self.weights.len(), found: fm.n_features() });
        }
        Ok((0..fm.state_count())
            .map(|s| fm.layers.iter().zip(&self.weights).map(|(l, w)| l[s] * w).sum())
            .collect())
    }
}

impl Gradients {
    pub fn is_congruent(&self, model: &RewardModel) -> bool {
        self.weights.len() == model.layers.len()
            && self
                .weights
                .iter()
                .zip(&self.biases)
                .zip(&model.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }

    /// `self += k·other`.
    pub fn add_scaled(&mut self, other: &Gradients, k: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights).chain(self.biases.iter_mut().zip(&other.biases)) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += k * y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Flat view in the same order as [`RewardModel::parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
