//! Structural motifs: a block `B` of proposed variables, a conditioning set
//! `C`, and the factor-table slots a proposal reads.
//!
//! A [`Motif`] is abstract: roles with cardinalities and slot shapes. A
//! [`MotifInstantiation`] binds roles to variables of a concrete model and
//! slots to its factors. [`encode_input`] turns an instantiation plus the
//! current `C` values into the network input:
//!
//! ```text
//! [ C values (0/1, or one-hot for > 2 states), role order | slot 0 | slot 1 | ... ]
//! ```
//!
//! Slots are encoded either as CPT free parameters (`P(child = s | row)` for
//! `s >= 1`, rows in lexicographic parent order) or as the table normalized
//! to sum to one. A bound factor whose scope lacks some slot variable is
//! broadcast along it.

mod chain;
mod dist;
mod grid;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::{Head, MdnConfig};
use crate::model::{DiscreteModel, PartialAssignment, VarId};
use crate::oracle::{exact_block_conditional, BlockConditional};

pub use chain::{chain_motif, detect_chain, detect_skip_chain, skip_chain_motif};
pub use dist::{draw_training_example, sample_instantiation, Fragment, InstantiationDistribution};
pub use grid::{detect_grid, grid_motif, infer_grid_shape, GRID_BOX};

/// Bumped whenever any encoding changes; part of every layout tag.
pub const ENCODING_VERSION: u32 = 1;

/// Hidden-layer width multiplier for every shipped motif.
pub const LAYER_SCALE: f64 = 4.0;

/// Names accepted by [`motif_by_name`], plus the mixture-model pair motif
/// handled by [`crate::gmm`].
pub const MOTIF_NAMES: &[&str] = &["grid9", "chain2", "chain3", "chain4", "skip2", "gmm-pair"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotEncoding {
    /// Entries `1..k` of every row of a CPT whose child is the last slot
    /// variable.
    CptFree,
    /// All entries divided by their sum.
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub cards: Vec<usize>,
    pub encoding: SlotEncoding,
}

impl Slot {
    pub fn encoded_len(&self) -> usize {
        let total: usize = self.cards.iter().product();
        match self.encoding {
            SlotEncoding::CptFree => {
                let k = *self.cards.last().unwrap();
                total / k * (k - 1)
            }
            SlotEncoding::Normalized => total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub name: String,
    pub b_cards: Vec<usize>,
    pub c_cards: Vec<usize>,
    pub slots: Vec<Slot>,
    pub n_mixtures: usize,
}

fn value_len(card: usize) -> usize {
    if card == 2 {
        1
    } else {
        card
    }
}

impl Motif {
    pub fn input_dim(&self) -> usize {
        self.c_cards.iter().map(|&k| value_len(k)).sum::<usize>()
            + self.slots.iter().map(Slot::encoded_len).sum::<usize>()
    }

    pub fn heads(&self) -> Vec<Head> {
        self.b_cards.iter().map(|&k| Head::Categorical { cardinality: k }).collect()
    }

    pub fn mdn_config(&self) -> MdnConfig {
        MdnConfig::sized(self.input_dim(), self.heads(), self.n_mixtures, LAYER_SCALE)
    }

    /// Identifies the input encoding; stored in parameter files.
    pub fn layout_tag(&self) -> String {
        format!("{}/in{}/out{}/v{}", self.name, self.input_dim(), self.mdn_config().output_dim(), ENCODING_VERSION)
    }

    /// Whether `config` has the input and heads this motif produces.
    pub fn check_config(&self, config: &MdnConfig) -> Result<()> {
        if config.input_dim != self.input_dim() || config.heads != self.heads() {
            return Err(Error::Version(format!(
                "network expects input {} with {} heads; motif {} encodes {} with {} heads",
                config.input_dim,
                config.heads.len(),
                self.name,
                self.input_dim(),
                self.b_cards.len()
            )));
        }
        Ok(())
    }
}

/// Binds one slot: a factor of the host model and the variables standing
/// in for the slot positions (`None` where the host has no such variable).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotBinding {
    pub factor: usize,
    pub vars: Vec<Option<VarId>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifInstantiation {
    pub motif: String,
    pub b_vars: Vec<VarId>,
    pub c_vars: Vec<VarId>,
    pub psi: Vec<SlotBinding>,
}

impl MotifInstantiation {
    /// The variable a per-variable schedule attaches this block to: the
    /// middle of `B` (left of middle for even sizes).
    pub fn anchor(&self) -> VarId {
        self.b_vars[(self.b_vars.len() - 1) / 2]
    }

    /// Exact `p(B | C = c_values)` on the host model.
    pub fn exact_conditional(&self, model: &DiscreteModel, c_values: &[usize]) -> Result<BlockConditional> {
        if c_values.len() != self.c_vars.len() {
            return Err(Error::Input(format!(
                "{} conditioning values for {} roles",
                c_values.len(),
                self.c_vars.len()
            )));
        }
        let cond: PartialAssignment = self.c_vars.iter().copied().zip(c_values.iter().copied()).collect();
        exact_block_conditional(model, &self.b_vars, &cond)
    }
}

/// Checks that `inst` is a faithful binding of `motif` in `model`: roles
/// have matching cardinalities, `B` and `C` are disjoint, `C` contains the
/// Markov blanket of `B`, every bound factor fits its slot, and every factor
/// touching `B` is bound.
pub fn check_instantiation(motif: &Motif, model: &DiscreteModel, inst: &MotifInstantiation) -> Result<()> {
    let bad = |m: String| Err(Error::SpecMismatch(format!("instantiation of {}: {m}", motif.name)));
    if inst.b_vars.len() != motif.b_cards.len() || inst.c_vars.len() != motif.c_cards.len() {
        return bad("role counts differ".into());
    }
    for (&v, &k) in inst.b_vars.iter().chain(&inst.c_vars).zip(motif.b_cards.iter().chain(&motif.c_cards)) {
        if v >= model.num_vars() {
            return Err(Error::UnknownVariable(v));
        }
        if model.card(v) != k {
            return bad(format!("variable {v} has {} states, role expects {k}", model.card(v)));
        }
    }
    let b: BTreeSet<VarId> = inst.b_vars.iter().copied().collect();
    let c: BTreeSet<VarId> = inst.c_vars.iter().copied().collect();
    if b.len() != inst.b_vars.len() || c.len() != inst.c_vars.len() || !b.is_disjoint(&c) {
        return bad("B and C must be disjoint sets of distinct variables".into());
    }
    let mb = model.markov_blanket(&inst.b_vars)?;
    if !mb.is_subset(&c) {
        return bad(format!("C misses blanket variables {:?}", mb.difference(&c).collect::<Vec<_>>()));
    }
    if inst.psi.len() != motif.slots.len() {
        return bad(format!("{} slot bindings for {} slots", inst.psi.len(), motif.slots.len()));
    }
    for (slot, bind) in motif.slots.iter().zip(&inst.psi) {
        let f = model
            .factors()
            .get(bind.factor)
            .ok_or_else(|| Error::SpecMismatch(format!("factor {} does not exist", bind.factor)))?;
        if bind.vars.len() != slot.cards.len() {
            return bad(format!("factor {} bound to a slot of arity {}", bind.factor, slot.cards.len()));
        }
        for (v, &k) in bind.vars.iter().zip(&slot.cards) {
            if let Some(v) = *v {
                if model.card(v) != k {
                    return bad(format!("slot variable {v} has wrong cardinality"));
                }
            }
        }
        for v in f.scope() {
            if !bind.vars.contains(&Some(*v)) {
                return bad(format!("factor {} mentions {v}, which its slot lacks", bind.factor));
            }
        }
        if slot.encoding == SlotEncoding::CptFree && bind.vars.last().copied().flatten() != f.scope().last().copied() {
            return bad(format!("factor {} is not a CPT of the slot child", bind.factor));
        }
    }
    let bound: BTreeSet<usize> = inst.psi.iter().map(|s| s.factor).collect();
    for fi in model.factors_touching_block(&inst.b_vars) {
        if !bound.contains(&fi) {
            return bad(format!("factor {fi} touches B but is not bound"));
        }
    }
    Ok(())
}

/// The full canonical table of a slot: broadcast factor values in slot
/// order, last slot position fastest.
fn slot_table(model: &DiscreteModel, slot: &Slot, bind: &SlotBinding) -> Vec<f64> {
    let f = &model.factors()[bind.factor];
    let map: Vec<usize> = f
        .scope()
        .iter()
        .map(|v| bind.vars.iter().position(|b| *b == Some(*v)).expect("checked binding"))
        .collect();
    let total: usize = slot.cards.iter().product();
    let mut states = vec![0usize; slot.cards.len()];
    let mut fstates = vec![0usize; map.len()];
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        for (i, &p) in map.iter().enumerate() {
            fstates[i] = states[p];
        }
        out.push(f.values()[f.index_of_states(&fstates)]);
        for i in (0..states.len()).rev() {
            states[i] += 1;
            if states[i] < slot.cards[i] {
                break;
            }
            states[i] = 0;
        }
    }
    out
}

/// The parameter part of the encoding; fixed for a given instantiation.
pub fn encode_psi(motif: &Motif, model: &DiscreteModel, inst: &MotifInstantiation) -> Result<Vec<f64>> {
    if inst.psi.len() != motif.slots.len() {
        return Err(Error::SpecMismatch("slot count mismatch".into()));
    }
    let mut out = Vec::with_capacity(motif.input_dim());
    for (slot, bind) in motif.slots.iter().zip(&inst.psi) {
        let table = slot_table(model, slot, bind);
        match slot.encoding {
            SlotEncoding::CptFree => {
                let k = *slot.cards.last().unwrap();
                for row in table.chunks(k) {
                    out.extend_from_slice(&row[1..]);
                }
            }
            SlotEncoding::Normalized => {
                let s: f64 = table.iter().sum();
                if !(s > 0.0) {
                    return Err(Error::InvalidModel(format!("factor {} is identically zero", bind.factor)));
                }
                out.extend(table.iter().map(|x| x / s));
            }
        }
    }
    Ok(out)
}

/// Writes the conditioning-value part of the encoding into `out`.
pub fn encode_c_values(motif: &Motif, c_values: &[usize], out: &mut Vec<f64>) -> Result<()> {
    if c_values.len() != motif.c_cards.len() {
        return Err(Error::Input(format!(
            "{} conditioning values for {} roles",
            c_values.len(),
            motif.c_cards.len()
        )));
    }
    for (i, (&s, &k)) in c_values.iter().zip(&motif.c_cards).enumerate() {
        if s >= k {
            return Err(Error::StateOutOfRange { var: i, state: s, cardinality: k });
        }
        if k == 2 {
            out.push(s as f64);
        } else {
            out.extend((0..k).map(|j| (j == s) as u8 as f64));
        }
    }
    Ok(())
}

/// Network input for an instantiation with `C` roles set to `c_values`.
pub fn encode_input(
    motif: &Motif,
    model: &DiscreteModel,
    inst: &MotifInstantiation,
    c_values: &[usize],
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(motif.input_dim());
    encode_c_values(motif, c_values, &mut out)?;
    out.extend(encode_psi(motif, model, inst)?);
    Ok(out)
}

/// A model-specific motif for an arbitrary block: `C` is the Markov blanket
/// in ascending order and the slots are the factors touching the block,
/// bound as they are.
pub fn block_motif(model: &DiscreteModel, block: &[VarId]) -> Result<(Motif, MotifInstantiation)> {
    let c_vars: Vec<VarId> = model.markov_blanket(block)?.into_iter().collect();
    let mut slots = Vec::new();
    let mut psi = Vec::new();
    for fi in model.factors_touching_block(block) {
        let f = &model.factors()[fi];
        let is_cpt = model.is_directed() && f.scope().last().and_then(|&v| model.cpt_index(v)) == Some(fi);
        slots.push(Slot {
            cards: f.cards().to_vec(),
            encoding: if is_cpt { SlotEncoding::CptFree } else { SlotEncoding::Normalized },
        });
        psi.push(SlotBinding { factor: fi, vars: f.scope().iter().map(|&v| Some(v)).collect() });
    }
    let motif = Motif {
        name: format!("block{}", block.len()),
        b_cards: block.iter().map(|&v| model.card(v)).collect(),
        c_cards: c_vars.iter().map(|&v| model.card(v)).collect(),
        slots,
        n_mixtures: 4,
    };
    let inst = MotifInstantiation { motif: motif.name.clone(), b_vars: block.to_vec(), c_vars, psi };
    check_instantiation(&motif, model, &inst)?;
    Ok((motif, inst))
}

/// Looks up a shipped discrete motif. `cardinality` applies to chain motifs.
pub fn motif_by_name(name: &str, cardinality: usize) -> Result<Motif> {
    match name {
        "grid9" => Ok(grid_motif()),
        "chain2" => chain_motif(2, cardinality),
        "chain3" => chain_motif(3, cardinality),
        "chain4" => chain_motif(4, cardinality),
        "skip2" => Ok(skip_chain_motif()),
        "gmm-pair" => Err(Error::Unsupported("the mixture-model pair motif lives in the gmm module".into())),
        other => Err(Error::Usage(format!("unknown motif {other:?}; known: {}", MOTIF_NAMES.join(", ")))),
    }
}

/// Finds every instantiation of a shipped motif in `model`, skipping those
/// with an observed variable in `B`.
pub fn detect_instantiations(
    model: &DiscreteModel,
    motif: &Motif,
    evidence: &PartialAssignment,
) -> Result<Vec<MotifInstantiation>> {
    let all = match motif.name.as_str() {
        "grid9" => detect_grid(model, motif),
        "chain2" | "chain3" | "chain4" => detect_chain(model, motif),
        "skip2" => detect_skip_chain(model, motif),
        other => return Err(Error::Unsupported(format!("no detector for motif {other:?}"))),
    };
    Ok(all
        .into_iter()
        .filter(|i| !i.b_vars.iter().any(|&v| evidence.contains(v)))
        .collect())
}

/// Instantiation list as pretty JSON.
pub fn instantiations_to_json(insts: &[MotifInstantiation]) -> Result<String> {
    Ok(serde_json::to_string_pretty(insts)?)
}
