//! Open-universe Gaussian mixture model in truncated form.
//!
//! ```text
//! M ~ Unif{1..m}
//! mu_j ~ N(0, s2_mu I)               j = 1..m
//! v | M ~ Unif{a in {0,1}^m : sum a = M}
//! z_i | v ~ Unif{j : v_j = 1}        i = 1..n
//! x_i | z_i, mu ~ N(mu_{z_i}, s2 I)
//! ```
//!
//! `M` is never stored; it is always `sum v`. Inference targets the
//! collapsed posterior `p(mu, v | x)` with a learned proposal for two
//! components `(mu_j, v_j), (mu_k, v_k)` at a time; labels are resampled from
//! `p(z | mu, v, x)` after each step. The baseline is single-site Gibbs on the
//! uncollapsed model.
//!
//! Network input for the pair motif (`m = 8`, `n = 60`, 156 values):
//!
//! ```text
//! x sorted by first-PC score (2n) | mu (2m) | v (m) | PC (2) | data mean (2) | pair indicators (m)
//! ```
//!
//! Components are ordered by the PC score of their mean after the proposed
//! pair has been replaced by zeros; ties go to the lower index. The two
//! output heads refer to the proposed components in that order.

use std::io::{Read, Write};

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logprob::log_sum_exp_f64;
use crate::mdn::{gaussian_log_density, optimize, Head, HeadValue, MdnConfig, MdnParams, MixtureProposal, TrainHyper};
use crate::rng::{self, Purpose};

pub type Point = [f64; 2];

/// Name of the pair motif in the motif registry.
pub const PAIR_MOTIF: &str = "gmm-pair";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub m: usize,
    pub n: usize,
    pub sigma2_mu: f64,
    pub sigma2: f64,
}

impl Default for GmmSpec {
    fn default() -> Self {
        GmmSpec { m: 8, n: 60, sigma2_mu: 4.0, sigma2: 0.1 }
    }
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || !(self.sigma2_mu > 0.0) || !(self.sigma2 > 0.0) {
            return Err(Error::Precondition(format!("invalid mixture spec {self:?}")));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        2 * self.n + 2 * self.m + self.m + 2 + 2 + self.m
    }

    pub fn mdn_config(&self) -> MdnConfig {
        let heads = vec![
            Head::Gaussian { dim: 2 },
            Head::Categorical { cardinality: 2 },
            Head::Gaussian { dim: 2 },
            Head::Categorical { cardinality: 2 },
        ];
        MdnConfig::sized(self.input_dim(), heads, 4, crate::motifs::LAYER_SCALE)
    }

    pub fn layout_tag(&self) -> String {
        format!("{PAIR_MOTIF}/m{}/n{}/v{}", self.m, self.n, crate::motifs::ENCODING_VERSION)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmState {
    pub mu: Vec<Point>,
    pub v: Vec<bool>,
    pub z: Vec<usize>,
}

impl GmmState {
    pub fn num_active(&self) -> usize {
        self.v.iter().filter(|&&b| b).count()
    }

    /// Checks `sum v >= 1` and that every label points at an active
    /// component.
    pub fn validate(&self) -> Result<()> {
        if self.num_active() == 0 {
            return Err(Error::Precondition("no active component".into()));
        }
        if let Some(i) = self.z.iter().position(|&j| j >= self.v.len() || !self.v[j]) {
            return Err(Error::Precondition(format!("point {i} is assigned to an inactive component")));
        }
        Ok(())
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

fn log_normal2(x: &Point, mean: &Point, var: f64) -> f64 {
    gaussian_log_density(x, mean, var)
}

/// `log p(M) + log p(v | M) + sum_j log N(mu_j; 0, s2_mu I)`.
pub fn log_prior(spec: &GmmSpec, mu: &[Point], v: &[bool]) -> Result<f64> {
    let m_act = v.iter().filter(|&&b| b).count();
    if m_act == 0 {
        return Err(Error::Precondition("no active component".into()));
    }
    let mut lp = -(spec.m as f64).ln() - ln_choose(spec.m, m_act);
    for p in mu {
        lp += log_normal2(p, &[0.0, 0.0], spec.sigma2_mu);
    }
    Ok(lp)
}

/// `log p(x, mu, v)` with labels summed out.
pub fn collapsed_log_likelihood(spec: &GmmSpec, mu: &[Point], v: &[bool], x: &[Point]) -> Result<f64> {
    if mu.len() != spec.m || v.len() != spec.m {
        return Err(Error::Precondition(format!("state has {} components, spec {}", mu.len(), spec.m)));
    }
    let mut lp = log_prior(spec, mu, v)?;
    let active: Vec<usize> = (0..spec.m).filter(|&j| v[j]).collect();
    let log_m = (active.len() as f64).ln();
    let mut terms = vec![0.0; active.len()];
    for xi in x {
        for (t, &j) in terms.iter_mut().zip(&active) {
            *t = log_normal2(xi, &mu[j], spec.sigma2);
        }
        lp += log_sum_exp_f64(&terms) - log_m;
    }
    Ok(lp)
}

/// `log p(x, z, mu, v)`; `-inf` when a label points at an inactive
/// component.
pub fn full_log_joint(spec: &GmmSpec, state: &GmmState, x: &[Point]) -> Result<f64> {
    let mut lp = log_prior(spec, &state.mu, &state.v)?;
    let log_m = (state.num_active() as f64).ln();
    for (xi, &zi) in x.iter().zip(&state.z) {
        if !state.v[zi] {
            return Ok(f64::NEG_INFINITY);
        }
        lp += -log_m + log_normal2(xi, &state.mu[zi], spec.sigma2);
    }
    Ok(lp)
}

/// `p(z_i = j | mu, v, x_i)` for every `j` (zero for inactive `j`).
pub fn z_conditional(spec: &GmmSpec, mu: &[Point], v: &[bool], xi: &Point) -> Vec<f64> {
    let logs: Vec<f64> = (0..mu.len())
        .map(|j| if v[j] { log_normal2(xi, &mu[j], spec.sigma2) } else { f64::NEG_INFINITY })
        .collect();
    let z = log_sum_exp_f64(&logs);
    logs.iter().map(|l| (l - z).exp()).collect()
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

/// Draws every label from `p(z | mu, v, x)`.
pub fn resample_z<R: Rng + ?Sized>(spec: &GmmSpec, state: &mut GmmState, x: &[Point], rng: &mut R) {
    state.z = x.iter().map(|xi| draw_categorical(&z_conditional(spec, &state.mu, &state.v, xi), rng)).collect();
}

fn normal2<R: Rng + ?Sized>(mean: &Point, var: f64, rng: &mut R) -> Point {
    let sd = var.sqrt();
    let a: f64 = StandardNormal.sample(rng);
    let b: f64 = StandardNormal.sample(rng);
    [mean[0] + sd * a, mean[1] + sd * b]
}

/// A joint draw `(state, x)` from the model.
pub fn sample_prior<R: Rng + ?Sized>(spec: &GmmSpec, rng: &mut R) -> (GmmState, Vec<Point>) {
    let m_act = rng.random_range(1..=spec.m);
    let mut v = vec![false; spec.m];
    for j in sample_indices(rng, spec.m, m_act) {
        v[j] = true;
    }
    let mu: Vec<Point> = (0..spec.m).map(|_| normal2(&[0.0, 0.0], spec.sigma2_mu, rng)).collect();
    let active: Vec<usize> = (0..spec.m).filter(|&j| v[j]).collect();
    let z: Vec<usize> = (0..spec.n).map(|_| active[rng.random_range(0..active.len())]).collect();
    let x = z.iter().map(|&j| normal2(&mu[j], spec.sigma2, rng)).collect();
    (GmmState { mu, v, z }, x)
}

/// `k` balanced clusters with centres on a circle, neighbouring centres
/// `separation` apart, randomly rotated.
pub fn synthetic_clusters<R: Rng + ?Sized>(n: usize, k: usize, separation: f64, sigma2: f64, rng: &mut R) -> Vec<Point> {
    let radius = if k <= 1 { 0.0 } else { separation / (2.0 * (std::f64::consts::PI / k as f64).sin()) };
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let centres: Vec<Point> = (0..k)
        .map(|c| {
            let a = phase + std::f64::consts::TAU * c as f64 / k.max(1) as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect();
    (0..n).map(|i| normal2(&centres[i % k.max(1)], sigma2, rng)).collect()
}

/// Leading principal direction and mean of `x`, the direction signed so
/// its first nonzero coordinate is positive.
pub fn principal_component(x: &[Point]) -> (Point, Point) {
    // Summed in a fixed order so the result ignores the order of `x`.
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let x = &sorted[..];
    let n = x.len().max(1) as f64;
    let mean = [x.iter().map(|p| p[0]).sum::<f64>() / n, x.iter().map(|p| p[1]).sum::<f64>() / n];
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for p in x {
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        a += dx * dx;
        b += dx * dy;
        c += dy * dy;
    }
    let lambda = 0.5 * (a + c) + (0.25 * (a - c).powi(2) + b * b).sqrt();
    let mut pc = if b != 0.0 {
        let (u, w) = (lambda - c, b);
        let norm = (u * u + w * w).sqrt();
        [u / norm, w / norm]
    } else if a >= c {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    if pc[0] < 0.0 || (pc[0] == 0.0 && pc[1] < 0.0) {
        pc = [-pc[0], -pc[1]];
    }
    (pc, mean)
}

/// Encoded input and the component indices the two heads refer to.
pub fn encode_gmm_input(
    spec: &GmmSpec,
    mu: &[Point],
    v: &[bool],
    x: &[Point],
    pair: (usize, usize),
) -> Result<(Vec<f64>, [usize; 2])> {
    let (j, k) = pair;
    if x.len() != spec.n || mu.len() != spec.m || v.len() != spec.m {
        return Err(Error::Version(format!(
            "encoding expects m = {}, n = {}; got m = {}, n = {}",
            spec.m,
            spec.n,
            mu.len(),
            x.len()
        )));
    }
    if j == k || j >= spec.m || k >= spec.m {
        return Err(Error::Precondition(format!("invalid component pair ({j}, {k})")));
    }
    let (pc, mean) = principal_component(x);
    let score = |p: &Point| (p[0] - mean[0]) * pc[0] + (p[1] - mean[1]) * pc[1];
    let mut xs: Vec<(f64, Point)> = x.iter().map(|p| (score(p), *p)).collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1[0].total_cmp(&b.1[0])).then(a.1[1].total_cmp(&b.1[1])));
    let zeroed = |i: usize| -> (Point, bool) { if i == j || i == k { ([0.0, 0.0], false) } else { (mu[i], v[i]) } };
    let mut order: Vec<usize> = (0..spec.m).collect();
    order.sort_by(|&a, &b| score(&zeroed(a).0).total_cmp(&score(&zeroed(b).0)).then(a.cmp(&b)));
    let mut out = Vec::with_capacity(spec.input_dim());
    for (_, p) in &xs {
        out.extend_from_slice(p);
    }
    for &i in &order {
        out.extend_from_slice(&zeroed(i).0);
    }
    for &i in &order {
        out.push(zeroed(i).1 as u8 as f64);
    }
    out.extend_from_slice(&pc);
    out.extend_from_slice(&mean);
    for &i in &order {
        out.push((i == j || i == k) as u8 as f64);
    }
    let heads = if order.iter().position(|&i| i == j) < order.iter().position(|&i| i == k) { [j, k] } else { [k, j] };
    Ok((out, heads))
}

/// One prior draw turned into a training pair for the pair proposal.
pub fn gmm_training_example<R: Rng + ?Sized>(spec: &GmmSpec, rng: &mut R) -> Result<(Vec<f64>, Vec<HeadValue>)> {
    let (state, x) = sample_prior(spec, rng);
    let pair = sample_indices(rng, spec.m, 2);
    let (input, heads) = encode_gmm_input(spec, &state.mu, &state.v, &x, (pair.index(0), pair.index(1)))?;
    let target = heads
        .iter()
        .flat_map(|&h| [HeadValue::Point(state.mu[h].to_vec()), HeadValue::Category(state.v[h] as usize)])
        .collect();
    Ok((input, target))
}

/// Trains the pair proposal on prior draws; `progress` sees every step's
/// loss. Returns the parameters and the per-step losses.
pub fn train_pair_proposal(
    spec: &GmmSpec,
    hyper: &TrainHyper,
    seed: u64,
    mut progress: impl FnMut(usize, f64),
) -> Result<(MdnParams, Vec<f64>)> {
    spec.validate()?;
    if spec.m < 2 || hyper.batch_size == 0 {
        return Err(Error::Precondition("pair training needs m >= 2 and a positive batch size".into()));
    }
    let config = spec.mdn_config();
    config.validate()?;
    let init = MdnParams::init(config, &mut rng::stream(seed, Purpose::ParamInit, 0));
    let outcome = optimize(
        init,
        hyper,
        |step| {
            (0..hyper.batch_size)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, Purpose::TrainSample, (step * hyper.batch_size + i) as u64);
                    gmm_training_example(spec, &mut r)
                })
                .collect()
        },
        |step, loss, _| progress(step, loss),
    )?;
    Ok((outcome.params, outcome.losses))
}

/// A proposal for the values of two components.
pub trait PairProposal {
    /// Draws new `(mu, v)` for `heads[0]`, `heads[1]` and returns them with
    /// the forward and reverse log densities.
    fn propose(
        &self,
        spec: &GmmSpec,
        mu: &[Point],
        v: &[bool],
        x: &[Point],
        pair: (usize, usize),
        rng: &mut rng::Rng,
    ) -> Result<PairMove>;
}

#[derive(Clone, Debug)]
pub struct PairMove {
    pub components: [usize; 2],
    pub mu: [Point; 2],
    pub v: [bool; 2],
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// The trained network, applied to a random sub-problem of the network's
/// size when the model is larger.
#[derive(Clone, Debug)]
pub struct NeuralPairProposal {
    pub motif_spec: GmmSpec,
    pub params: MdnParams,
}

impl NeuralPairProposal {
    pub fn new(motif_spec: GmmSpec, params: MdnParams, stored_layout: &str) -> Result<NeuralPairProposal> {
        if stored_layout != motif_spec.layout_tag() || params.config != motif_spec.mdn_config() {
            return Err(Error::Version(format!(
                "parameters encode {stored_layout:?}, the pair proposal needs {:?}",
                motif_spec.layout_tag()
            )));
        }
        Ok(NeuralPairProposal { motif_spec, params })
    }

    fn values(q: &MixtureProposal) -> impl Fn(&[HeadValue]) -> Option<([Point; 2], [bool; 2])> + '_ {
        let _ = q;
        |t: &[HeadValue]| match t {
            [HeadValue::Point(a), HeadValue::Category(va), HeadValue::Point(b), HeadValue::Category(vb)] => {
                Some(([[a[0], a[1]], [b[0], b[1]]], [*va == 1, *vb == 1]))
            }
            _ => None,
        }
    }
}

impl PairProposal for NeuralPairProposal {
    fn propose(
        &self,
        spec: &GmmSpec,
        mu: &[Point],
        v: &[bool],
        x: &[Point],
        pair: (usize, usize),
        rng: &mut rng::Rng,
    ) -> Result<PairMove> {
        let ms = &self.motif_spec;
        let (sub_mu, sub_v, sub_x, sub_pair, back): (Vec<Point>, Vec<bool>, Vec<Point>, (usize, usize), Vec<usize>) =
            if spec.m == ms.m && spec.n == ms.n {
                (mu.to_vec(), v.to_vec(), x.to_vec(), pair, (0..spec.m).collect())
            } else {
                if spec.m < ms.m || spec.n < ms.n {
                    return Err(Error::Version(format!(
                        "pair proposal trained for m = {}, n = {} cannot serve m = {}, n = {}",
                        ms.m, ms.n, spec.m, spec.n
                    )));
                }
                // The pair plus ms.m - 2 other components, and ms.n points.
                let others: Vec<usize> = (0..spec.m).filter(|&i| i != pair.0 && i != pair.1).collect();
                let mut comps = vec![pair.0, pair.1];
                comps.extend(sample_indices(rng, others.len(), ms.m - 2).into_iter().map(|i| others[i]));
                let pts: Vec<Point> = sample_indices(rng, spec.n, ms.n).into_iter().map(|i| x[i]).collect();
                (
                    comps.iter().map(|&i| mu[i]).collect(),
                    comps.iter().map(|&i| v[i]).collect(),
                    pts,
                    (0, 1),
                    comps,
                )
            };
        let (input, heads) = encode_gmm_input(ms, &sub_mu, &sub_v, &sub_x, sub_pair)?;
        let q = self.params.forward(&input)?;
        let (draw, log_q_forward) = q.sample(rng);
        let (new_mu, new_v) = Self::values(&q)(&draw).ok_or_else(|| Error::Proposal("unexpected head layout".into()))?;
        let current: Vec<HeadValue> = heads
            .iter()
            .flat_map(|&h| [HeadValue::Point(sub_mu[h].to_vec()), HeadValue::Category(sub_v[h] as usize)])
            .collect();
        let log_q_reverse = q.log_density(&current)?;
        Ok(PairMove { components: [back[heads[0]], back[heads[1]]], mu: new_mu, v: new_v, log_q_forward, log_q_reverse })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairOutcome {
    pub pair: (usize, usize),
    pub log_alpha: f64,
    pub accepted: bool,
    /// The proposal switched every component off.
    pub empty: bool,
}

/// One MH step on the collapsed model for a uniformly chosen pair; labels
/// are redrawn from their exact conditional afterwards.
pub fn neural_pair_step<P: PairProposal + ?Sized>(
    spec: &GmmSpec,
    state: &mut GmmState,
    x: &[Point],
    proposal: &P,
    rng: &mut rng::Rng,
) -> Result<PairOutcome> {
    if spec.m < 2 {
        return Err(Error::Precondition("pair moves need at least two components".into()));
    }
    let p = sample_indices(rng, spec.m, 2);
    let pair = (p.index(0), p.index(1));
    let mv = proposal.propose(spec, &state.mu, &state.v, x, pair, rng)?;
    let mut outcome = PairOutcome { pair, log_alpha: f64::NEG_INFINITY, accepted: false, empty: false };
    let mut mu = state.mu.clone();
    let mut v = state.v.clone();
    for h in 0..2 {
        mu[mv.components[h]] = mv.mu[h];
        v[mv.components[h]] = mv.v[h];
    }
    let u: f64 = rng.random();
    if !v.contains(&true) {
        outcome.empty = true;
    } else if mv.log_q_forward.is_finite() && !mv.log_q_reverse.is_nan() {
        let new = collapsed_log_likelihood(spec, &mu, &v, x)?;
        let old = collapsed_log_likelihood(spec, &state.mu, &state.v, x)?;
        outcome.log_alpha = (new + mv.log_q_reverse - old - mv.log_q_forward).min(0.0);
        outcome.accepted = u.ln() < outcome.log_alpha;
    }
    if outcome.accepted {
        state.mu = mu;
        state.v = v;
    }
    resample_z(spec, state, x, rng);
    Ok(outcome)
}

/// One sweep of single-site Gibbs on the uncollapsed model: labels, then
/// means (conjugate), then activity bits. A bit whose component owns a point
/// cannot change.
pub fn gibbs_truncated_sweep<R: Rng + ?Sized>(spec: &GmmSpec, state: &mut GmmState, x: &[Point], rng: &mut R) {
    resample_z(spec, state, x, rng);
    let m = spec.m;
    let mut counts = vec![0usize; m];
    let mut sums = vec![[0.0; 2]; m];
    for (xi, &zi) in x.iter().zip(&state.z) {
        counts[zi] += 1;
        sums[zi][0] += xi[0];
        sums[zi][1] += xi[1];
    }
    for j in 0..m {
        let (mean, var) = mu_conditional(spec, counts[j], sums[j]);
        state.mu[j] = normal2(&mean, var, rng);
    }
    let n = x.len() as f64;
    for j in 0..m {
        if counts[j] > 0 {
            continue;
        }
        // p(v_j | rest) over the two values, labels fixed.
        let m_act = state.num_active();
        let others = m_act - state.v[j] as usize;
        let logp = |m_new: usize| -> f64 {
            if m_new == 0 {
                return f64::NEG_INFINITY;
            }
            -ln_choose(m, m_new) - n * (m_new as f64).ln()
        };
        let (l0, l1) = (logp(others), logp(others + 1));
        let p1 = 1.0 / (1.0 + (l0 - l1).exp());
        state.v[j] = rng.random::<f64>() < p1;
    }
}

/// Posterior mean and variance of a component mean given `count` points
/// with coordinate sums `sum`.
pub fn mu_conditional(spec: &GmmSpec, count: usize, sum: Point) -> (Point, f64) {
    let precision = 1.0 / spec.sigma2_mu + count as f64 / spec.sigma2;
    let var = 1.0 / precision;
    ([var * sum[0] / spec.sigma2, var * sum[1] / spec.sigma2], var)
}

/// `m_init` random active components, means from the prior, labels from
/// their conditional.
pub fn init_state<R: Rng + ?Sized>(spec: &GmmSpec, x: &[Point], m_init: usize, rng: &mut R) -> Result<GmmState> {
    if !(1..=spec.m).contains(&m_init) {
        return Err(Error::Precondition(format!("initial M {m_init} outside 1..={}", spec.m)));
    }
    let mut v = vec![false; spec.m];
    for j in sample_indices(rng, spec.m, m_init) {
        v[j] = true;
    }
    let mu = (0..spec.m).map(|_| normal2(&[0.0, 0.0], spec.sigma2_mu, rng)).collect();
    let mut s = GmmState { mu, v, z: Vec::new() };
    resample_z(spec, &mut s, x, rng);
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GmmSampler {
    Neural,
    Gibbs,
}

/// Per-step `M` and collapsed log likelihood.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GmmTrace {
    pub m: Vec<usize>,
    pub log_lik: Vec<f64>,
    pub accepted: u64,
}

impl GmmTrace {
    pub fn distinct_m(&self) -> usize {
        let mut s = self.m.clone();
        s.sort_unstable();
        s.dedup();
        s.len()
    }

    pub fn m_changes(&self) -> usize {
        self.m.windows(2).filter(|w| w[0] != w[1]).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "m", "log_lik"])?;
        for (t, (m, l)) in self.m.iter().zip(&self.log_lik).enumerate() {
            out.write_record([t.to_string(), m.to_string(), l.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `steps` pair moves (neural) or sweeps (Gibbs) from `m_init`. Entry
/// 0 of the trace is the initial state.
pub fn run_gmm(
    spec: &GmmSpec,
    x: &[Point],
    sampler: GmmSampler,
    proposal: Option<&dyn PairProposal>,
    steps: usize,
    m_init: usize,
    seed: u64,
    run: u64,
) -> Result<(GmmTrace, GmmState)> {
    spec.validate()?;
    let mut r = rng::stream(seed, Purpose::Gmm, run);
    let mut state = init_state(spec, x, m_init, &mut r)?;
    let mut trace = GmmTrace::default();
    let record = |t: &mut GmmTrace, s: &GmmState| -> Result<()> {
        t.m.push(s.num_active());
        t.log_lik.push(collapsed_log_likelihood(spec, &s.mu, &s.v, x)?);
        Ok(())
    };
    record(&mut trace, &state)?;
    for _ in 0..steps {
        match sampler {
            GmmSampler::Neural => {
                let p = proposal.ok_or_else(|| Error::Usage("the neural sampler needs a trained proposal".into()))?;
                let o = neural_pair_step(spec, &mut state, x, p, &mut r)?;
                trace.accepted += o.accepted as u64;
            }
            GmmSampler::Gibbs => gibbs_truncated_sweep(spec, &mut state, x, &mut r),
        }
        record(&mut trace, &state)?;
    }
    Ok((trace, state))
}

/// Observations as CSV with header `x,y`.
pub fn read_points_csv<R: Read>(r: R) -> Result<Vec<Point>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse { line: i + 2, token: 0, message: format!("expected 2 columns, found {}", rec.len()) });
        }
        let parse = |k: usize| -> Result<f64> {
            rec[k].trim().parse().map_err(|_| Error::Parse {
                line: i + 2,
                token: k,
                message: format!("not a number: {:?}", &rec[k]),
            })
        };
        out.push([parse(0)?, parse(1)?]);
    }
    Ok(out)
}

pub fn write_points_csv<W: Write>(points: &[Point], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y"])?;
    for p in points {
        out.write_record([p[0].to_string(), p[1].to_string()])?;
    }
    out.flush()?;
    Ok(())
}
