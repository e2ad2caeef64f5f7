//! Random model generators.
//!
//! CPT rows are drawn from the deterministic/Dirichlet mixture used for the
//! grid experiments: with probability `p_determ` the row is a point mass on a
//! uniformly chosen state, otherwise it is `Dirichlet(alpha)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::{DiscreteModel, Factor, PartialAssignment, VarId};
use crate::error::{Error, Result};

/// Parameters of the CPT-row mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CptPrior {
    pub p_determ: f64,
    pub alpha: [f64; 2],
}

impl CptPrior {
    /// The distribution the grid proposal is trained on.
    pub const TRAINING: CptPrior = CptPrior { p_determ: 0.05, alpha: [0.5, 0.5] };

    pub fn new(p_determ: f64, alpha: [f64; 2]) -> Result<CptPrior> {
        if !(0.0..=1.0).contains(&p_determ) {
            return Err(Error::InvalidModel(format!("p_determ {p_determ} outside [0, 1]")));
        }
        if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidModel(format!("dirichlet alpha {alpha:?} must be positive")));
        }
        Ok(CptPrior { p_determ, alpha })
    }

    /// One CPT row over `k` states. For `k > 2` every Dirichlet component
    /// uses `alpha[0]`.
    pub fn sample_row<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let mut row = vec![0.0; k];
        if rng.random::<f64>() < self.p_determ {
            row[rng.random_range(0..k)] = 1.0;
            return row;
        }
        loop {
            for (i, x) in row.iter_mut().enumerate() {
                let a = if k == 2 { self.alpha[i] } else { self.alpha[0] };
                *x = Gamma::new(a, 1.0).unwrap().sample(rng);
            }
            let s: f64 = row.iter().sum();
            // Tiny alphas can underflow every gamma draw to zero.
            if s > 0.0 && s.is_finite() {
                row.iter_mut().for_each(|x| *x /= s);
                fix_row_sum(&mut row);
                return row;
            }
        }
    }

    /// A full CPT table for a child with `k` states and `rows` parent rows.
    pub fn sample_table<R: Rng + ?Sized>(&self, k: usize, rows: usize, rng: &mut R) -> Vec<f64> {
        (0..rows).flat_map(|_| self.sample_row(k, rng)).collect()
    }
}

/// Pushes rounding error into the largest entry so the row sums to one.
fn fix_row_sum(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    let (imax, _) = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    row[imax] += 1.0 - s;
}

/// Row-major grid geometry; variable `(r, c)` has id `r * cols + c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> GridShape {
        GridShape { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, r: usize, c: usize) -> VarId {
        r * self.cols + c
    }

    /// Id of `(r, c)` if it lies inside the grid.
    pub fn try_id(&self, r: isize, c: isize) -> Option<VarId> {
        (r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols)
            .then(|| self.id(r as usize, c as usize))
    }

    pub fn coords(&self, v: VarId) -> (usize, usize) {
        (v / self.cols, v % self.cols)
    }

    /// Parents of `(r, c)` in a grid Bayesian network: the node above, then
    /// the node to the left (ascending id).
    pub fn parents(&self, r: usize, c: usize) -> Vec<VarId> {
        let mut ps = Vec::with_capacity(2);
        if r > 0 {
            ps.push(self.id(r - 1, c));
        }
        if c > 0 {
            ps.push(self.id(r, c - 1));
        }
        ps
    }
}

/// A grid Bayesian network: every node depends on its upper and left
/// neighbours, CPTs drawn from `prior`.
pub fn grid_bn<R: Rng + ?Sized>(
    shape: GridShape,
    cardinality: usize,
    prior: &CptPrior,
    rng: &mut R,
) -> Result<DiscreteModel> {
    let mut parents = Vec::with_capacity(shape.len());
    let mut tables = Vec::with_capacity(shape.len());
    for r in 0..shape.rows {
        for c in 0..shape.cols {
            let ps = shape.parents(r, c);
            let rows = cardinality.pow(ps.len() as u32);
            tables.push(prior.sample_table(cardinality, rows, rng));
            parents.push(ps);
        }
    }
    DiscreteModel::bayes_from_tables(vec![cardinality; shape.len()], parents, tables)
}

/// A Bayesian network in which each variable depends on up to `order`
/// predecessors (`order = 1` is a Markov chain, `order = 2` the skip chain).
pub fn chain_bn<R: Rng + ?Sized>(
    n: usize,
    order: usize,
    cardinality: usize,
    prior: &CptPrior,
    rng: &mut R,
) -> Result<DiscreteModel> {
    let mut parents = Vec::with_capacity(n);
    let mut tables = Vec::with_capacity(n);
    for v in 0..n {
        let ps: Vec<VarId> = (v.saturating_sub(order)..v).collect();
        let rows = cardinality.pow(ps.len() as u32);
        tables.push(prior.sample_table(cardinality, rows, rng));
        parents.push(ps);
    }
    DiscreteModel::bayes_from_tables(vec![cardinality; n], parents, tables)
}

/// Distribution of pairwise-chain potential entries: `exp(N(0, scale²))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialPrior {
    pub log_scale: f64,
}

impl Default for PotentialPrior {
    fn default() -> Self {
        PotentialPrior { log_scale: 1.0 }
    }
}

impl PotentialPrior {
    pub fn sample_table<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.log_scale).unwrap();
        (0..len).map(|_| normal.sample(rng).exp()).collect()
    }
}

/// A pairwise chain Markov network: unary factors on every variable, then
/// pairwise factors on `(i, i + 1)`.
pub fn chain_mrf<R: Rng + ?Sized>(
    n: usize,
    cardinality: usize,
    prior: &PotentialPrior,
    rng: &mut R,
) -> Result<DiscreteModel> {
    let k = cardinality;
    let mut factors = Vec::with_capacity(2 * n);
    for v in 0..n {
        factors.push(Factor::new(vec![v], vec![k], prior.sample_table(k, rng))?);
    }
    for v in 0..n.saturating_sub(1) {
        factors.push(Factor::new(vec![v, v + 1], vec![k, k], prior.sample_table(k * k, rng))?);
    }
    DiscreteModel::markov(vec![k; n], factors)
}

/// A random Bayesian network over binary variables: variable `v` picks up to
/// `max_parents` parents uniformly among `0..v`.
pub fn random_bn<R: Rng + ?Sized>(
    n: usize,
    max_parents: usize,
    prior: &CptPrior,
    rng: &mut R,
) -> Result<DiscreteModel> {
    let mut parents = Vec::with_capacity(n);
    let mut tables = Vec::with_capacity(n);
    for v in 0..n {
        let want = rng.random_range(0..=max_parents.min(v));
        let mut ps: Vec<VarId> = rand::seq::index::sample(rng, v.max(1), want.min(v))
            .into_iter()
            .collect();
        ps.sort_unstable();
        tables.push(prior.sample_table(2, 1 << ps.len(), rng));
        parents.push(ps);
    }
    DiscreteModel::bayes_from_tables(vec![2; n], parents, tables)
}

/// `count` distinct variables observed at their values in one joint draw,
/// so the evidence always has positive probability. Undirected models are
/// drawn exactly and must be small enough to enumerate.
pub fn random_evidence<R: Rng + ?Sized>(model: &DiscreteModel, count: usize, rng: &mut R) -> Result<PartialAssignment> {
    if count > model.num_vars() {
        return Err(Error::Precondition(format!("{count} evidence variables requested, model has {}", model.num_vars())));
    }
    let joint = if model.is_directed() {
        model.sample_prior(rng)?.into_states()
    } else {
        crate::oracle::sample_exact(model, &PartialAssignment::new(), rng)?
    };
    let mut vars: Vec<VarId> = rand::seq::index::sample(rng, model.num_vars(), count).into_iter().collect();
    vars.sort_unstable();
    Ok(PartialAssignment::from_full(&joint, vars))
}
