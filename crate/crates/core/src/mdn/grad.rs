use ndarray::{Array1, Array2, Axis};

use super::{elu, elu_grad, sigmoid, softplus, Head, HeadValue, MdnConfig, MdnParams};
use crate::error::{Error, Result};
use crate::logprob::log_sum_exp_f64;

/// Gradients with the same layout as [`MdnParams`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: [Array2<f64>; 3],
    pub biases: [Array1<f64>; 3],
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..3 {
            out.extend(self.weights[l].iter());
            out.extend(self.biases[l].iter());
        }
        out
    }
}

/// Per-sample loss and its gradient with respect to the raw outputs.
fn raw_loss_grad(config: &MdnConfig, raw: &[f64], target: &[HeadValue], d: &mut [f64]) -> Result<f64> {
    let m = config.n_mixtures;
    let per = config.per_component();
    if target.len() != config.heads.len() {
        return Err(Error::SpecMismatch(format!(
            "target has {} heads, network has {}",
            target.len(),
            config.heads.len()
        )));
    }
    let lw_norm = log_sum_exp_f64(&raw[..m]);
    let mut a = vec![0.0; m];
    // Per component, per raw slot: d(log component likelihood)/d(raw).
    let mut dlc = vec![0.0; m * per];
    for k in 0..m {
        let mut lc = 0.0;
        let mut off = 0;
        let base = m + k * per;
        for (h, t) in config.heads.iter().zip(target) {
            let r = &raw[base + off..base + off + h.raw_len()];
            let g = &mut dlc[k * per + off..k * per + off + h.raw_len()];
            match (*h, t) {
                (Head::Categorical { cardinality: 2 }, HeadValue::Category(c)) if *c < 2 => {
                    let z = r[0];
                    lc += if *c == 1 { -softplus(-z) } else { -softplus(z) };
                    g[0] = *c as f64 - sigmoid(z);
                }
                (Head::Categorical { cardinality }, HeadValue::Category(c)) if *c < cardinality => {
                    let l = log_sum_exp_f64(r);
                    lc += r[*c] - l;
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi = (i == *c) as u8 as f64 - (r[i] - l).exp();
                    }
                }
                (Head::Gaussian { dim }, HeadValue::Point(x)) if x.len() == dim => {
                    let u = r[dim];
                    let sp = softplus(u);
                    let s = sp.max(config.variance_floor);
                    let mut sq = 0.0;
                    for i in 0..dim {
                        let diff = x[i] - r[i];
                        sq += diff * diff;
                        g[i] = diff / s;
                    }
                    let df = dim as f64;
                    lc += -0.5 * df * (2.0 * std::f64::consts::PI * s).ln() - sq / (2.0 * s);
                    g[dim] = if sp > config.variance_floor {
                        (-df / (2.0 * s) + sq / (2.0 * s * s)) * sigmoid(u)
                    } else {
                        0.0
                    };
                }
                _ => return Err(Error::SpecMismatch("target value does not match head".into())),
            }
            off += h.raw_len();
        }
        a[k] = raw[k] - lw_norm + lc;
    }
    let la = log_sum_exp_f64(&a);
    for k in 0..m {
        let resp = (a[k] - la).exp();
        let w = (raw[k] - lw_norm).exp();
        d[k] = w - resp;
        for j in 0..per {
            d[m + k * per + j] = -resp * dlc[k * per + j];
        }
    }
    Ok(-la)
}

/// Mean negative log-likelihood over a batch and its gradient.
pub fn grad_nll(params: &MdnParams, batch: &[(Vec<f64>, Vec<HeadValue>)]) -> Result<(f64, Gradients)> {
    let cfg = &params.config;
    let b = batch.len();
    if b == 0 {
        return Err(Error::Precondition("empty training batch".into()));
    }
    let mut x = Array2::zeros((b, cfg.input_dim));
    for (i, (inp, _)) in batch.iter().enumerate() {
        if inp.len() != cfg.input_dim {
            return Err(Error::Input(format!(
                "input has length {}, network expects {}",
                inp.len(),
                cfg.input_dim
            )));
        }
        x.row_mut(i).assign(&ndarray::ArrayView1::from(inp.as_slice()));
    }
    let z1 = x.dot(&params.weights[0].t()) + &params.biases[0];
    let h1 = z1.mapv(elu);
    let z2 = h1.dot(&params.weights[1].t()) + &params.biases[1];
    let h2 = z2.mapv(elu);
    let out = h2.dot(&params.weights[2].t()) + &params.biases[2];

    let mut d_out = Array2::zeros(out.dim());
    let mut loss = 0.0;
    for (i, (_, target)) in batch.iter().enumerate() {
        let raw = out.row(i).to_vec();
        let mut row = d_out.row_mut(i);
        let l = raw_loss_grad(cfg, &raw, target, row.as_slice_mut().unwrap())?;
        if !l.is_finite() {
            return Err(Error::NonFiniteLoss { index: i });
        }
        loss += l;
    }
    let scale = 1.0 / b as f64;
    d_out *= scale;

    let gw3 = d_out.t().dot(&h2);
    let gb3 = d_out.sum_axis(Axis(0));
    let mut dz2 = d_out.dot(&params.weights[2]);
    dz2.zip_mut_with(&z2, |g, &z| *g *= elu_grad(z));
    let gw2 = dz2.t().dot(&h1);
    let gb2 = dz2.sum_axis(Axis(0));
    let mut dz1 = dz2.dot(&params.weights[1]);
    dz1.zip_mut_with(&z1, |g, &z| *g *= elu_grad(z));
    let gw1 = dz1.t().dot(&x);
    let gb1 = dz1.sum_axis(Axis(0));
    Ok((loss * scale, Gradients { weights: [gw1, gw2, gw3], biases: [gb1, gb2, gb3] }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::VARIANCE_FLOOR;
    use crate::rng;
    use rand::Rng as _;

    fn loss(p: &MdnParams, batch: &[(Vec<f64>, Vec<HeadValue>)]) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .map(|(x, t)| -p.forward(x).unwrap().log_density(t).unwrap())
            .sum::<f64>()
            / n
    }

    fn check(config: MdnConfig, batch: Vec<(Vec<f64>, Vec<HeadValue>)>, seed: u64, tweak: impl Fn(&mut MdnParams)) {
        let mut p = MdnParams::init(config, &mut rng::seeded(seed));
        tweak(&mut p);
        let (l, g) = grad_nll(&p, &batch).unwrap();
        assert!((l - loss(&p, &batch)).abs() < 1e-10);
        let analytic = g.flat();
        let base = p.flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let mut q = p.clone();
            q.set_flat(&plus).unwrap();
            let lp = loss(&q, &batch);
            q.set_flat(&minus).unwrap();
            let lm = loss(&q, &batch);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-3);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradient_matches_finite_differences_discrete() {
        let cfg = MdnConfig {
            input_dim: 4,
            hidden: [6, 5],
            n_mixtures: 4,
            heads: vec![Head::Categorical { cardinality: 2 }, Head::Categorical { cardinality: 3 }],
            variance_floor: VARIANCE_FLOOR,
        };
        let mut r = rng::seeded(11);
        let batch = (0..5)
            .map(|_| {
                let x = (0..4).map(|_| r.random_range(-1.0..1.0)).collect();
                let t = vec![HeadValue::Category(r.random_range(0..2)), HeadValue::Category(r.random_range(0..3))];
                (x, t)
            })
            .collect();
        check(cfg, batch, 12, |_| {});
    }

    #[test]
    fn gradient_matches_finite_differences_gaussian() {
        let cfg = MdnConfig {
            input_dim: 3,
            hidden: [5, 4],
            n_mixtures: 4,
            heads: vec![Head::Gaussian { dim: 2 }, Head::Categorical { cardinality: 2 }],
            variance_floor: VARIANCE_FLOOR,
        };
        let mut r = rng::seeded(13);
        let batch = (0..4)
            .map(|_| {
                let x = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
                let t = vec![
                    HeadValue::Point(vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]),
                    HeadValue::Category(r.random_range(0..2)),
                ];
                (x, t)
            })
            .collect();
        check(cfg, batch, 14, |_| {});
    }

    #[test]
    fn gradient_with_floored_variance() {
        let cfg = MdnConfig {
            input_dim: 2,
            hidden: [3, 3],
            n_mixtures: 4,
            heads: vec![Head::Gaussian { dim: 1 }],
            variance_floor: VARIANCE_FLOOR,
        };
        let batch = vec![(vec![0.3, -0.2], vec![HeadValue::Point(vec![0.001])])];
        // Push every raw variance far below the floor.
        check(cfg, batch, 15, |p| {
            let per = p.config.per_component();
            let m = p.config.n_mixtures;
            for k in 0..m {
                p.biases[2][m + k * per + 1] = -40.0;
            }
        });
    }
}
