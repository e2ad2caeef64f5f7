//! The grid motif: a 3×3 block of a grid Bayesian network, its 14-variable
//! Markov blanket, and the CPTs of all 23 variables.
//!
//! Offsets are relative to the block's top-left corner. The 23 variables
//! form the 5×5 box `(-1..=3) × (-1..=3)` without the corners `(-1, -1)` and
//! `(3, 3)`. Every CPT slot has the canonical scope `(up, left, self)`.

use super::{check_instantiation, Motif, MotifInstantiation, Slot, SlotBinding, SlotEncoding};
use crate::model::generate::GridShape;
use crate::model::{DiscreteModel, VarId};

/// The 23 box offsets in row-major order.
pub const GRID_BOX: [(isize, isize); 23] = {
    let mut out = [(0isize, 0isize); 23];
    let mut i = 0;
    let mut r = -1;
    while r <= 3 {
        let mut c = -1;
        while c <= 3 {
            if !((r == -1 && c == -1) || (r == 3 && c == 3)) {
                out[i] = (r, c);
                i += 1;
            }
            c += 1;
        }
        r += 1;
    }
    out
};

fn in_block(o: (isize, isize)) -> bool {
    (0..3).contains(&o.0) && (0..3).contains(&o.1)
}

fn b_offsets() -> impl Iterator<Item = (isize, isize)> {
    GRID_BOX.into_iter().filter(|&o| in_block(o))
}

fn c_offsets() -> impl Iterator<Item = (isize, isize)> {
    GRID_BOX.into_iter().filter(|&o| !in_block(o))
}

pub fn grid_motif() -> Motif {
    Motif {
        name: "grid9".into(),
        b_cards: vec![2; 9],
        c_cards: vec![2; 14],
        slots: vec![Slot { cards: vec![2, 2, 2], encoding: SlotEncoding::CptFree }; 23],
        n_mixtures: 12,
    }
}

/// Recovers the grid shape of a binary grid Bayesian network, if `model` is
/// one: every `(r, c)` must have exactly the parents `(r-1, c)`, `(r, c-1)`
/// that exist.
pub fn infer_grid_shape(model: &DiscreteModel) -> Option<GridShape> {
    if !model.is_directed() || model.cards().iter().any(|&k| k != 2) {
        return None;
    }
    let n = model.num_vars();
    (1..=n).filter(|cols| n % cols == 0).find_map(|cols| {
        let shape = GridShape::new(n / cols, cols);
        (0..n)
            .all(|v| {
                let (r, c) = shape.coords(v);
                model.parents(v) == shape.parents(r, c).as_slice()
            })
            .then_some(shape)
    })
}

/// The instantiation whose block has top-left corner `(r0, c0)`, if the
/// whole 23-variable box fits.
pub(crate) fn grid_instantiation(model: &DiscreteModel, shape: GridShape, r0: usize, c0: usize) -> Option<MotifInstantiation> {
    let (r0, c0) = (r0 as isize, c0 as isize);
    let at = |o: (isize, isize)| shape.try_id(r0 + o.0, c0 + o.1);
    let b_vars: Vec<VarId> = b_offsets().map(at).collect::<Option<_>>()?;
    let c_vars: Vec<VarId> = c_offsets().map(at).collect::<Option<_>>()?;
    let psi = GRID_BOX
        .iter()
        .map(|&(dr, dc)| {
            let v = at((dr, dc))?;
            Some(SlotBinding {
                factor: model.cpt_index(v)?,
                vars: vec![at((dr - 1, dc)), at((dr, dc - 1)), Some(v)],
            })
        })
        .collect::<Option<_>>()?;
    Some(MotifInstantiation { motif: "grid9".into(), b_vars, c_vars, psi })
}

/// Every placement in row-major order of the block corner.
pub fn detect_grid(model: &DiscreteModel, motif: &Motif) -> Vec<MotifInstantiation> {
    let Some(shape) = infer_grid_shape(model) else { return Vec::new() };
    let mut out = Vec::new();
    for r0 in 1..shape.rows.saturating_sub(3) {
        for c0 in 1..shape.cols.saturating_sub(3) {
            if let Some(inst) = grid_instantiation(model, shape, r0, c0) {
                if check_instantiation(motif, model, &inst).is_ok() {
                    out.push(inst);
                }
            }
        }
    }
    out
}
