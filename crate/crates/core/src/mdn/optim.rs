use serde::{Deserialize, Serialize};

use super::{grad_nll, Gradients, HeadValue, MdnParams};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state over the flattened parameter vector.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize) -> Optimizer {
        let n = if matches!(kind, OptimizerKind::Adam { .. }) { num_params } else { 0 };
        Optimizer { kind, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut MdnParams, grads: &Gradients) {
        self.t += 1;
        let mut idx = 0;
        for l in 0..3 {
            let w = params.weights[l].iter_mut().zip(grads.weights[l].iter());
            let b = params.biases[l].iter_mut().zip(grads.biases[l].iter());
            for (p, &g) in w.chain(b) {
                match self.kind {
                    OptimizerKind::Sgd { lr } => *p -= lr * g,
                    OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                        let m = &mut self.m[idx];
                        let v = &mut self.v[idx];
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let mh = *m / (1.0 - beta1.powi(self.t));
                        let vh = *v / (1.0 - beta2.powi(self.t));
                        *p -= lr * mh / (vh.sqrt() + eps);
                    }
                }
                idx += 1;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub steps: usize,
    /// Losses above this abort training.
    pub divergence_threshold: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper { optimizer: OptimizerKind::default(), batch_size: 256, steps: 1000, divergence_threshold: 1e6 }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MdnParams,
    pub losses: Vec<f64>,
}

/// Runs `hyper.steps` optimizer steps. `next_batch(step)` supplies each
/// minibatch; `on_step(step, loss, &params)` observes progress.
pub fn optimize<B, S>(params: MdnParams, hyper: &TrainHyper, mut next_batch: B, mut on_step: S) -> Result<TrainOutcome>
where
    B: FnMut(usize) -> Result<Vec<(Vec<f64>, Vec<HeadValue>)>>,
    S: FnMut(usize, f64, &MdnParams),
{
    let mut params = params;
    let mut opt = Optimizer::new(hyper.optimizer, params.num_params());
    let mut losses = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        let batch = next_batch(step)?;
        let (loss, grads) = match grad_nll(&params, &batch) {
            Ok(x) => x,
            Err(Error::NonFiniteLoss { index }) => {
                return Err(Error::Training { step, message: format!("non-finite loss at batch item {index}") })
            }
            Err(e) => return Err(e),
        };
        if loss > hyper.divergence_threshold {
            return Err(Error::Training {
                step,
                message: format!("loss {loss} exceeds divergence threshold {}", hyper.divergence_threshold),
            });
        }
        opt.step(&mut params, &grads);
        if !params.is_finite() {
            return Err(Error::Training { step, message: "parameters became non-finite".into() });
        }
        losses.push(loss);
        on_step(step, loss, &params);
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::{Head, MdnConfig};
    use crate::rng;
    use rand::Rng as _;

    fn coin_config() -> MdnConfig {
        MdnConfig::sized(1, vec![Head::Categorical { cardinality: 2 }], 4, 4.0)
    }

    fn coin_batches(seed: u64) -> impl FnMut(usize) -> Result<Vec<(Vec<f64>, Vec<HeadValue>)>> {
        let mut r = rng::seeded(seed);
        move |_| {
            Ok((0..256)
                .map(|_| (vec![1.0], vec![HeadValue::Category((r.random::<f64>() < 0.8) as usize)]))
                .collect())
        }
    }

    #[test]
    fn learns_a_biased_coin() {
        let p = MdnParams::init(coin_config(), &mut rng::seeded(1));
        let hyper = TrainHyper { steps: 2000, ..TrainHyper::default() };
        let out = optimize(p, &hyper, coin_batches(2), |_, _, _| {}).unwrap();
        let prob = out.params.forward(&[1.0]).unwrap().log_density_discrete(&[1]).unwrap().exp();
        assert!((prob - 0.8).abs() < 0.02, "{prob}");
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let p = MdnParams::init(coin_config(), &mut rng::seeded(3));
        for optimizer in [OptimizerKind::Adam { lr: 0.0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, OptimizerKind::Sgd { lr: 0.0 }] {
            let hyper = TrainHyper { optimizer, steps: 20, batch_size: 256, divergence_threshold: 1e6 };
            let out = optimize(p.clone(), &hyper, coin_batches(4), |_, _, _| {}).unwrap();
            assert_eq!(out.params.flat(), p.flat());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = MdnParams::init(coin_config(), &mut rng::seeded(5));
        let hyper = TrainHyper { steps: 5, divergence_threshold: 1e-6, ..TrainHyper::default() };
        match optimize(p, &hyper, coin_batches(6), |_, _, _| {}) {
            Err(Error::Training { step: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
