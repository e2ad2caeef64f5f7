//! The pair move with a near-exact proposal: the conditional of both
//! components of a two-component model tabulated on a grid. MH acceptance
//! must approach one, up to the discretization error.

use blockmc::gmm::{self, GmmSpec, GmmState, PairMove, PairProposal, Point};
use blockmc::logprob::log_sum_exp_f64;
use blockmc::rng;
use blockmc::Result;
use rand::Rng;

const LO: f64 = -4.0;
const HI: f64 = 4.0;
const PATTERNS: [[bool; 2]; 3] = [[true, false], [false, true], [true, true]];

struct Quadrature {
    g: usize,
    h: f64,
    /// log probability of each (pattern, cell), normalized.
    log_p: Vec<f64>,
    cdf: Vec<f64>,
}

impl Quadrature {
    fn new(spec: &GmmSpec, x: &[Point], g: usize) -> Quadrature {
        let h = (HI - LO) / g as f64;
        let centre = |i: usize| LO + (i as f64 + 0.5) * h;
        let cells = g.pow(4);
        let mut logs = Vec::with_capacity(3 * cells);
        for v in PATTERNS {
            for c in 0..cells {
                let mu = Self::cell_point(c, g, centre);
                logs.push(gmm::collapsed_log_likelihood(spec, &mu, &v, x).unwrap());
            }
        }
        let z = log_sum_exp_f64(&logs);
        let log_p: Vec<f64> = logs.iter().map(|l| l - z).collect();
        let mut acc = 0.0;
        let cdf = log_p
            .iter()
            .map(|l| {
                acc += l.exp();
                acc
            })
            .collect();
        Quadrature { g, h, log_p, cdf }
    }

    fn cell_point(c: usize, g: usize, f: impl Fn(usize) -> f64) -> Vec<Point> {
        let i = [c % g, (c / g) % g, (c / g / g) % g, c / g / g / g];
        vec![[f(i[0]), f(i[1])], [f(i[2]), f(i[3])]]
    }

    /// Density of the piecewise-uniform sampler at `(mu, v)`.
    fn log_density(&self, mu: &[Point], v: &[bool]) -> f64 {
        let Some(pat) = PATTERNS.iter().position(|p| p == v) else { return f64::NEG_INFINITY };
        let mut cell = 0;
        let mut stride = 1;
        for coord in [mu[0][0], mu[0][1], mu[1][0], mu[1][1]] {
            if !(LO..HI).contains(&coord) {
                return f64::NEG_INFINITY;
            }
            cell += stride * (((coord - LO) / self.h) as usize).min(self.g - 1);
            stride *= self.g;
        }
        self.log_p[pat * self.g.pow(4) + cell] - 4.0 * self.h.ln()
    }
}

impl PairProposal for Quadrature {
    fn propose(
        &self,
        _spec: &GmmSpec,
        mu: &[Point],
        v: &[bool],
        _x: &[Point],
        _pair: (usize, usize),
        rng: &mut rng::Rng,
    ) -> Result<PairMove> {
        let u: f64 = rng.random::<f64>() * self.cdf.last().unwrap();
        let idx = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        let (pat, cell) = (idx / self.g.pow(4), idx % self.g.pow(4));
        let mut jitter = || rng.random::<f64>();
        let corner = Self::cell_point(cell, self.g, |i| LO + i as f64 * self.h);
        let new_mu = [
            [corner[0][0] + self.h * jitter(), corner[0][1] + self.h * jitter()],
            [corner[1][0] + self.h * jitter(), corner[1][1] + self.h * jitter()],
        ];
        let new_v = PATTERNS[pat];
        Ok(PairMove {
            components: [0, 1],
            mu: new_mu,
            v: new_v,
            log_q_forward: self.log_density(&new_mu, &new_v),
            log_q_reverse: self.log_density(mu, v),
        })
    }
}

/// The prior over the pair; valid but far from the conditional.
struct PriorProposal;

impl PairProposal for PriorProposal {
    fn propose(
        &self,
        spec: &GmmSpec,
        mu: &[Point],
        v: &[bool],
        _x: &[Point],
        _pair: (usize, usize),
        rng: &mut rng::Rng,
    ) -> Result<PairMove> {
        let s2 = spec.sigma2_mu;
        let normal = |p: &Point| -(2.0 * std::f64::consts::PI * s2).ln() - (p[0] * p[0] + p[1] * p[1]) / (2.0 * s2);
        let lp = |m: &[Point], _: &[bool]| -(3.0f64).ln() + normal(&m[0]) + normal(&m[1]);
        let mut fresh = GmmState { mu: vec![[0.0; 2]; 2], v: vec![false; 2], z: vec![] };
        let pat = PATTERNS[rng.random_range(0..3)];
        fresh.v = pat.to_vec();
        for p in fresh.mu.iter_mut() {
            let a: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            let b: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
            *p = [a * spec.sigma2_mu.sqrt(), b * spec.sigma2_mu.sqrt()];
        }
        Ok(PairMove {
            components: [0, 1],
            mu: [fresh.mu[0], fresh.mu[1]],
            v: pat,
            log_q_forward: lp(&fresh.mu, &fresh.v),
            log_q_reverse: lp(mu, v),
        })
    }
}

fn mean_acceptance<P: PairProposal>(p: &P, spec: &GmmSpec, x: &[Point], steps: usize) -> f64 {
    let mut r = rng::seeded(11);
    let mut state = GmmState { mu: vec![[0.1, 0.2], [-0.3, 0.4]], v: vec![true, true], z: vec![0; x.len()] };
    let mut total = 0.0;
    for _ in 0..steps {
        let o = gmm::neural_pair_step(spec, &mut state, x, p, &mut r).unwrap();
        total += o.log_alpha.exp();
    }
    total / steps as f64
}

#[test]
fn near_exact_pair_proposal_is_almost_always_accepted() {
    let spec = GmmSpec { m: 2, n: 4, sigma2_mu: 1.0, sigma2: 1.0 };
    let x = [[-1.0, -0.5], [-1.2, -0.8], [1.0, 0.7], [0.8, 1.1]];
    let quad = Quadrature::new(&spec, &x, 40);
    let exact = mean_acceptance(&quad, &spec, &x, 400);
    let prior = mean_acceptance(&PriorProposal, &spec, &x, 400);
    assert!(exact > 0.85, "quadrature proposal acceptance {exact}");
    assert!(prior < exact - 0.3, "prior {prior} vs quadrature {exact}");
}
