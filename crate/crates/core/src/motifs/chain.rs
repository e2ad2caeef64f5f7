//! Chain motifs.
//!
//! `chainK` proposes `K` consecutive variables of a pairwise chain Markov
//! network given the two flanking neighbours. Its slots are the `K + 1`
//! pairwise tables crossing or inside the block, left to right, then the `K`
//! unary tables of the block.
//!
//! `skip2` proposes two consecutive variables of a second-order chain
//! Bayesian network (`x_v` depends on `x_{v-2}`, `x_{v-1}`). Its blanket is
//! the two variables on either side; its slots are the CPTs of all six.

use super::{check_instantiation, Motif, MotifInstantiation, Slot, SlotBinding, SlotEncoding};
use crate::error::{Error, Result};
use crate::model::{DiscreteModel, VarId};

pub fn chain_motif(k: usize, cardinality: usize) -> Result<Motif> {
    if !(2..=4).contains(&k) {
        return Err(Error::Precondition(format!("chain motif size {k} not in 2..=4")));
    }
    if cardinality < 2 {
        return Err(Error::Precondition("cardinality must be at least 2".into()));
    }
    let pair = Slot { cards: vec![cardinality; 2], encoding: SlotEncoding::Normalized };
    let unary = Slot { cards: vec![cardinality], encoding: SlotEncoding::Normalized };
    let mut slots = vec![pair; k + 1];
    slots.extend(std::iter::repeat_n(unary, k));
    Ok(Motif {
        name: format!("chain{k}"),
        b_cards: vec![cardinality; k],
        c_cards: vec![cardinality; 2],
        slots,
        n_mixtures: 4,
    })
}

/// The single factor whose scope is exactly the set `vars`.
fn unique_factor(model: &DiscreteModel, vars: &[VarId]) -> Option<usize> {
    let mut hits = model.factors_touching(vars[0]).iter().copied().filter(|&fi| {
        let s = model.factors()[fi].scope();
        s.len() == vars.len() && vars.iter().all(|v| s.contains(v))
    });
    let first = hits.next()?;
    hits.next().is_none().then_some(first)
}

pub(crate) fn chain_instantiation(model: &DiscreteModel, k: usize, s: usize) -> Option<MotifInstantiation> {
    let n = model.num_vars();
    if s == 0 || s + k >= n {
        return None;
    }
    let mut psi = Vec::with_capacity(2 * k + 1);
    for a in s - 1..s + k {
        psi.push(SlotBinding { factor: unique_factor(model, &[a, a + 1])?, vars: vec![Some(a), Some(a + 1)] });
    }
    for v in s..s + k {
        psi.push(SlotBinding { factor: unique_factor(model, &[v])?, vars: vec![Some(v)] });
    }
    Some(MotifInstantiation {
        motif: format!("chain{k}"),
        b_vars: (s..s + k).collect(),
        c_vars: vec![s - 1, s + k],
        psi,
    })
}

/// Placements left to right.
pub fn detect_chain(model: &DiscreteModel, motif: &Motif) -> Vec<MotifInstantiation> {
    let k = motif.b_cards.len();
    (1..model.num_vars().saturating_sub(k))
        .filter_map(|s| chain_instantiation(model, k, s))
        .filter(|inst| check_instantiation(motif, model, inst).is_ok())
        .collect()
}

pub fn skip_chain_motif() -> Motif {
    Motif {
        name: "skip2".into(),
        b_cards: vec![2; 2],
        c_cards: vec![2; 4],
        slots: vec![Slot { cards: vec![2; 3], encoding: SlotEncoding::CptFree }; 6],
        n_mixtures: 4,
    }
}

fn is_skip_chain(model: &DiscreteModel) -> bool {
    model.is_directed()
        && model.cards().iter().all(|&k| k == 2)
        && (0..model.num_vars()).all(|v| model.parents(v).iter().copied().eq(v.saturating_sub(2)..v))
}

pub(crate) fn skip_instantiation(model: &DiscreteModel, s: usize) -> Option<MotifInstantiation> {
    if s < 2 || s + 3 >= model.num_vars() {
        return None;
    }
    let psi = (s - 2..=s + 3)
        .map(|v| {
            Some(SlotBinding {
                factor: model.cpt_index(v)?,
                vars: vec![v.checked_sub(2), v.checked_sub(1), Some(v)],
            })
        })
        .collect::<Option<_>>()?;
    Some(MotifInstantiation {
        motif: "skip2".into(),
        b_vars: vec![s, s + 1],
        c_vars: vec![s - 2, s - 1, s + 2, s + 3],
        psi,
    })
}

pub fn detect_skip_chain(model: &DiscreteModel, motif: &Motif) -> Vec<MotifInstantiation> {
    if !is_skip_chain(model) {
        return Vec::new();
    }
    (2..model.num_vars())
        .filter_map(|s| skip_instantiation(model, s))
        .filter(|inst| check_instantiation(motif, model, inst).is_ok())
        .collect()
}
