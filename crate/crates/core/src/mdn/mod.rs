//! A mixture density network written directly against `ndarray`.
//!
//! The network is `input -> elu -> elu -> raw outputs` with two hidden
//! layers. Raw outputs parametrize a mixture whose components factorize over
//! *heads*: one head per proposed variable, either categorical or an
//! isotropic Gaussian.
//!
//! Raw output layout, for `m` mixture components:
//!
//! ```text
//! [ m mixture logits | component 0 heads | component 1 heads | ... ]
//! ```
//!
//! Inside a component the heads follow the config order. A binary
//! categorical head takes one raw value `z` (softmax over `(0, z)`, i.e.
//! `P(1) = sigmoid(z)`); a categorical head with `k > 2` states takes `k`
//! logits; a Gaussian head of dimension `d` takes `d` means and one raw
//! variance `u`, mapped to `max(softplus(u), floor)`.

mod grad;
pub mod io;
mod optim;

use std::hash::{Hash, Hasher};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logprob::log_sum_exp_f64;

pub use grad::{grad_nll, Gradients};
pub use optim::{optimize, OptimizerKind, Optimizer, TrainHyper, TrainOutcome};

/// Smallest variance any Gaussian head may emit.
pub const VARIANCE_FLOOR: f64 = 1e-5;

/// One factor of a mixture component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Head {
    Categorical { cardinality: usize },
    Gaussian { dim: usize },
}

impl Head {
    /// Number of raw network outputs per mixture component.
    pub fn raw_len(&self) -> usize {
        match *self {
            Head::Categorical { cardinality: 2 } => 1,
            Head::Categorical { cardinality } => cardinality,
            Head::Gaussian { dim } => dim + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdnConfig {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub n_mixtures: usize,
    pub heads: Vec<Head>,
    pub variance_floor: f64,
}

impl MdnConfig {
    /// Hidden layers of width `lambda * max(input, output)`.
    pub fn sized(input_dim: usize, heads: Vec<Head>, n_mixtures: usize, lambda: f64) -> MdnConfig {
        let mut c = MdnConfig { input_dim, hidden: [0, 0], n_mixtures, heads, variance_floor: VARIANCE_FLOOR };
        let w = (lambda * input_dim.max(c.output_dim()) as f64).round() as usize;
        c.hidden = [w, w];
        c
    }

    pub fn per_component(&self) -> usize {
        self.heads.iter().map(Head::raw_len).sum()
    }

    pub fn output_dim(&self) -> usize {
        self.n_mixtures * (1 + self.per_component())
    }

    /// `[input, h1, h2, output]`.
    pub fn layer_sizes(&self) -> [usize; 4] {
        [self.input_dim, self.hidden[0], self.hidden[1], self.output_dim()]
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=16).contains(&self.n_mixtures) {
            return Err(Error::SpecMismatch(format!(
                "mixture count {} outside 4..=16",
                self.n_mixtures
            )));
        }
        if self.input_dim == 0 || self.hidden.contains(&0) || self.heads.is_empty() {
            return Err(Error::SpecMismatch("empty layer or head list".into()));
        }
        for h in &self.heads {
            match *h {
                Head::Categorical { cardinality } if cardinality < 2 => {
                    return Err(Error::SpecMismatch("categorical head needs >= 2 states".into()))
                }
                Head::Gaussian { dim: 0 } => return Err(Error::SpecMismatch("zero-dim gaussian head".into())),
                _ => {}
            }
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::SpecMismatch("variance floor must be positive".into()));
        }
        Ok(())
    }
}

/// Weights `W[l]` are `(out, in)`; biases `b[l]` have length `out`.
#[derive(Clone, Debug, PartialEq)]
pub struct MdnParams {
    pub config: MdnConfig,
    pub weights: [Array2<f64>; 3],
    pub biases: [Array1<f64>; 3],
}

impl MdnParams {
    pub fn zeros(config: MdnConfig) -> MdnParams {
        let s = config.layer_sizes();
        MdnParams {
            weights: [
                Array2::zeros((s[1], s[0])),
                Array2::zeros((s[2], s[1])),
                Array2::zeros((s[3], s[2])),
            ],
            biases: [Array1::zeros(s[1]), Array1::zeros(s[2]), Array1::zeros(s[3])],
            config,
        }
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(config: MdnConfig, rng: &mut R) -> MdnParams {
        let mut p = MdnParams::zeros(config);
        for w in &mut p.weights {
            let (fan_out, fan_in) = w.dim();
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-a..a));
        }
        p
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters in file order: `W1, b1, W2, b2, W3, b3`, row-major.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in 0..3 {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::SpecMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for l in 0..3 {
            self.weights[l].iter_mut().for_each(|x| *x = *it.next().unwrap());
            self.biases[l].iter_mut().for_each(|x| *x = *it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Raw outputs for one input.
    pub fn raw_output(&self, input: &[f64]) -> Result<Array1<f64>> {
        if input.len() != self.config.input_dim {
            return Err(Error::Input(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.config.input_dim
            )));
        }
        if let Some(i) = input.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!("input entry {i} is not finite")));
        }
        let x = ArrayView1::from(input);
        let mut h = self.weights[0].dot(&x) + &self.biases[0];
        h.mapv_inplace(elu);
        let mut h2 = self.weights[1].dot(&h) + &self.biases[1];
        h2.mapv_inplace(elu);
        Ok(self.weights[2].dot(&h2) + &self.biases[2])
    }

    /// The proposal distribution for one input.
    pub fn forward(&self, input: &[f64]) -> Result<MixtureProposal> {
        let raw = self.raw_output(input)?;
        Ok(MixtureProposal::from_raw(&self.config, raw.as_slice().unwrap()))
    }
}

#[inline]
pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub(crate) fn elu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        pre.exp()
    }
}

#[inline]
pub(crate) fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Log-softmax of a slice.
pub(crate) fn log_softmax(z: &[f64]) -> Vec<f64> {
    let l = log_sum_exp_f64(z);
    z.iter().map(|&x| x - l).collect()
}

/// The distribution of one head inside one mixture component.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadDist {
    /// Log probabilities, normalized.
    Categorical { log_probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, var: f64 },
}

/// A value for one head.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadValue {
    Category(usize),
    Point(Vec<f64>),
}

impl HeadDist {
    fn log_density(&self, value: &HeadValue) -> Result<f64> {
        match (self, value) {
            (HeadDist::Categorical { log_probs }, HeadValue::Category(c)) => log_probs
                .get(*c)
                .copied()
                .ok_or_else(|| Error::SpecMismatch(format!("category {c} out of range"))),
            (HeadDist::Gaussian { mean, var }, HeadValue::Point(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::SpecMismatch(format!(
                        "point of dimension {} for a {}-dim gaussian",
                        x.len(),
                        mean.len()
                    )));
                }
                Ok(gaussian_log_density(x, mean, *var))
            }
            _ => Err(Error::SpecMismatch("head kind and value kind differ".into())),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HeadValue {
        match self {
            HeadDist::Categorical { log_probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, lp) in log_probs.iter().enumerate() {
                    acc += lp.exp();
                    if u < acc {
                        return HeadValue::Category(i);
                    }
                }
                HeadValue::Category(log_probs.iter().rposition(|lp| lp.exp() > 0.0).unwrap_or(0))
            }
            HeadDist::Gaussian { mean, var } => {
                let sd = var.sqrt();
                HeadValue::Point(
                    mean.iter().map(|m| m + { let z: f64 = StandardNormal.sample(rng); sd * z }).collect(),
                )
            }
        }
    }
}

pub(crate) fn gaussian_log_density(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let d = mean.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var)
}

/// A mixture of fully factorized components over the heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureProposal {
    log_weights: Vec<f64>,
    components: Vec<Vec<HeadDist>>,
}

impl MixtureProposal {
    pub fn new(log_weights: Vec<f64>, components: Vec<Vec<HeadDist>>) -> Result<MixtureProposal> {
        if log_weights.len() != components.len() || log_weights.is_empty() {
            return Err(Error::SpecMismatch("one weight per component required".into()));
        }
        Ok(MixtureProposal { log_weights, components })
    }

    pub(crate) fn from_raw(config: &MdnConfig, raw: &[f64]) -> MixtureProposal {
        let m = config.n_mixtures;
        let log_weights = log_softmax(&raw[..m]);
        let per = config.per_component();
        let components = (0..m)
            .map(|k| {
                let mut off = m + k * per;
                config
                    .heads
                    .iter()
                    .map(|h| {
                        let r = &raw[off..off + h.raw_len()];
                        off += h.raw_len();
                        match *h {
                            Head::Categorical { cardinality: 2 } => HeadDist::Categorical {
                                log_probs: vec![-softplus(r[0]), -softplus(-r[0])],
                            },
                            Head::Categorical { .. } => HeadDist::Categorical { log_probs: log_softmax(r) },
                            Head::Gaussian { dim } => HeadDist::Gaussian {
                                mean: r[..dim].to_vec(),
                                var: softplus(r[dim]).max(config.variance_floor),
                            },
                        }
                    })
                    .collect()
            })
            .collect();
        MixtureProposal { log_weights, components }
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn components(&self) -> &[Vec<HeadDist>] {
        &self.components
    }

    pub fn n_heads(&self) -> usize {
        self.components[0].len()
    }

    /// `log Σ_k w_k Π_h p_kh(target_h)`.
    pub fn log_density(&self, target: &[HeadValue]) -> Result<f64> {
        if target.len() != self.n_heads() {
            return Err(Error::SpecMismatch(format!(
                "target has {} heads, proposal has {}",
                target.len(),
                self.n_heads()
            )));
        }
        let mut terms = Vec::with_capacity(self.log_weights.len());
        for (lw, comp) in self.log_weights.iter().zip(&self.components) {
            let mut a = *lw;
            for (h, t) in comp.iter().zip(target) {
                a += h.log_density(t)?;
            }
            terms.push(a);
        }
        Ok(log_sum_exp_f64(&terms))
    }

    /// [`MixtureProposal::log_density`] for all-categorical targets.
    pub fn log_density_discrete(&self, states: &[usize]) -> Result<f64> {
        let t: Vec<HeadValue> = states.iter().map(|&s| HeadValue::Category(s)).collect();
        self.log_density(&t)
    }

    /// Ancestral draw: component index, then each head independently. The
    /// returned density is that of the full mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<HeadValue>, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.log_weights.len() - 1;
        for (i, lw) in self.log_weights.iter().enumerate() {
            acc += lw.exp();
            if u < acc {
                k = i;
                break;
            }
        }
        let value: Vec<HeadValue> = self.components[k].iter().map(|h| h.sample(rng)).collect();
        let ld = self.log_density(&value).expect("sampled value matches heads");
        (value, ld)
    }

    /// Draw for all-categorical heads.
    pub fn sample_discrete<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, f64) {
        let (v, ld) = self.sample(rng);
        let states = v
            .into_iter()
            .map(|h| match h {
                HeadValue::Category(c) => c,
                HeadValue::Point(_) => panic!("sample_discrete on a proposal with gaussian heads"),
            })
            .collect();
        (states, ld)
    }

    /// A hash of every parameter's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for lw in &self.log_weights {
            lw.to_bits().hash(&mut h);
        }
        for comp in &self.components {
            for hd in comp {
                match hd {
                    HeadDist::Categorical { log_probs } => log_probs.iter().for_each(|x| x.to_bits().hash(&mut h)),
                    HeadDist::Gaussian { mean, var } => {
                        mean.iter().for_each(|x| x.to_bits().hash(&mut h));
                        var.to_bits().hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }
}
