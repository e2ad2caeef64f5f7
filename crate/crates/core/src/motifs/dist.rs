use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::chain::{chain_instantiation, skip_instantiation};
use super::grid::grid_instantiation;
use super::{encode_input, Motif, MotifInstantiation};
use crate::error::{Error, Result};
use crate::model::generate::{chain_bn, chain_mrf, grid_bn, CptPrior, GridShape, PotentialPrior};
use crate::model::{DiscreteModel, PartialAssignment};
use crate::oracle::sample_exact;

/// A distribution over motif instantiations.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstantiationDistribution {
    /// Random 6×6 grid networks; the block corner is uniform over the four
    /// placements, so border-broadcast CPTs appear in training as they do
    /// near the edges of larger hosts.
    Grid { prior: CptPrior },
    /// A random pairwise chain of `k + 2` variables around the block.
    Chain { k: usize, cardinality: usize, potentials: PotentialPrior },
    /// Random second-order chains of 8 variables, block start uniform in
    /// `2..=4`.
    SkipChain { prior: CptPrior },
    /// Uniform over given instantiations of one fixed host model.
    #[serde(skip)]
    Detected { model: Arc<DiscreteModel>, instantiations: Vec<MotifInstantiation> },
}

impl InstantiationDistribution {
    pub fn grid(p_determ: f64, alpha: [f64; 2]) -> Result<InstantiationDistribution> {
        Ok(InstantiationDistribution::Grid { prior: CptPrior::new(p_determ, alpha)? })
    }

    /// The motif name this distribution produces, if fixed.
    pub fn motif_name(&self) -> Option<String> {
        match self {
            InstantiationDistribution::Grid { .. } => Some("grid9".into()),
            InstantiationDistribution::Chain { k, .. } => Some(format!("chain{k}")),
            InstantiationDistribution::SkipChain { .. } => Some("skip2".into()),
            InstantiationDistribution::Detected { instantiations, .. } => instantiations.first().map(|i| i.motif.clone()),
        }
    }
}

/// A sampled instantiation together with the model it lives in.
#[derive(Clone, Debug)]
pub struct Fragment {
    pub model: Arc<DiscreteModel>,
    pub inst: MotifInstantiation,
}

pub fn sample_instantiation<R: Rng + ?Sized>(dist: &InstantiationDistribution, rng: &mut R) -> Result<Fragment> {
    let built = match dist {
        InstantiationDistribution::Grid { prior } => {
            let shape = GridShape::new(6, 6);
            let model = grid_bn(shape, 2, prior, rng)?;
            let (r0, c0) = (rng.random_range(1..=2), rng.random_range(1..=2));
            grid_instantiation(&model, shape, r0, c0).map(|i| (Arc::new(model), i))
        }
        InstantiationDistribution::Chain { k, cardinality, potentials } => {
            let model = chain_mrf(k + 2, *cardinality, potentials, rng)?;
            chain_instantiation(&model, *k, 1).map(|i| (Arc::new(model), i))
        }
        InstantiationDistribution::SkipChain { prior } => {
            let model = chain_bn(8, 2, 2, prior, rng)?;
            let s = rng.random_range(2..=4);
            skip_instantiation(&model, s).map(|i| (Arc::new(model), i))
        }
        InstantiationDistribution::Detected { model, instantiations } => {
            if instantiations.is_empty() {
                return Err(Error::Precondition("no instantiations to sample from".into()));
            }
            let i = rng.random_range(0..instantiations.len());
            Some((Arc::clone(model), instantiations[i].clone()))
        }
    };
    let (model, inst) = built.ok_or_else(|| Error::InvalidModel("generated fragment lacks its motif".into()))?;
    Ok(Fragment { model, inst })
}

/// One training pair: the encoded input for prior-sampled `C` values and the
/// prior-sampled `B` values as target. Directed fragments are sampled
/// ancestrally, undirected ones exactly by enumeration.
pub fn draw_training_example<R: Rng + ?Sized>(
    motif: &Motif,
    dist: &InstantiationDistribution,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let frag = sample_instantiation(dist, rng)?;
    let joint = if frag.model.is_directed() {
        frag.model.sample_prior(rng)?.into_states()
    } else {
        sample_exact(&frag.model, &PartialAssignment::new(), rng)?
    };
    let c: Vec<usize> = frag.inst.c_vars.iter().map(|&v| joint[v]).collect();
    let b: Vec<usize> = frag.inst.b_vars.iter().map(|&v| joint[v]).collect();
    Ok((encode_input(motif, &frag.model, &frag.inst, &c)?, b))
}
