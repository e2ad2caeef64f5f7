//! Discrete factor graphs and Bayesian networks.
//!
//! A [`DiscreteModel`] is a bag of dense [`Factor`] tables over variables with
//! finite cardinalities. Directed models additionally record each variable's
//! parents, and hold exactly one CPT per variable whose scope is
//! `(parents..., child)`.
//!
//! Tables are row-major in scope order: the last scope variable changes
//! fastest. That ordering is also the canonical order used when factors are
//! encoded as network inputs, so it must never be permuted silently.

pub mod generate;
pub mod uai;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{Error, Result};
use crate::logprob::LogProb;

/// Dense variable index, `0..num_vars`.
pub type VarId = usize;

/// Tolerance for CPT rows summing to one.
pub const CPT_ROW_TOL: f64 = 1e-9;

/// A dense table over the joint states of `scope`.
#[derive(Clone, Debug)]
pub struct Factor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
    logs: Vec<LogProb>,
}

impl Factor {
    pub fn new(scope: Vec<VarId>, cards: Vec<usize>, values: Vec<f64>) -> Result<Factor> {
        if scope.len() != cards.len() {
            return Err(Error::InvalidModel("scope and cardinality lengths differ".into()));
        }
        let mut seen = BTreeSet::new();
        for &v in &scope {
            if !seen.insert(v) {
                return Err(Error::InvalidModel(format!("variable {v} repeated in factor scope")));
            }
        }
        let size: usize = cards.iter().product();
        if values.len() != size {
            return Err(Error::InvalidModel(format!(
                "factor over {scope:?} needs {size} entries, got {}",
                values.len()
            )));
        }
        let mut logs = Vec::with_capacity(size);
        for &x in &values {
            match LogProb::from_prob(x) {
                Some(l) => logs.push(l),
                None => {
                    return Err(Error::InvalidModel(format!(
                        "factor entry {x} is negative or non-finite"
                    )))
                }
            }
        }
        let mut strides = vec![1; scope.len()];
        for i in (0..scope.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        Ok(Factor { scope, cards, strides, values, logs })
    }

    pub fn scope(&self) -> &[VarId] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Position of `var` in the scope.
    pub fn position(&self, var: VarId) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }

    pub fn stride_of(&self, var: VarId) -> Option<usize> {
        self.position(var).map(|p| self.strides[p])
    }

    /// Table index for a full model assignment.
    #[inline]
    pub fn index(&self, full: &[usize]) -> usize {
        self.scope.iter().zip(&self.strides).map(|(&v, &s)| full[v] * s).sum()
    }

    /// Table index with `skip`'s contribution left out.
    #[inline]
    pub fn index_without(&self, full: &[usize], skip: VarId) -> usize {
        self.scope
            .iter()
            .zip(&self.strides)
            .filter(|(&v, _)| v != skip)
            .map(|(&v, &s)| full[v] * s)
            .sum()
    }

    /// Table index from states listed in scope order.
    pub fn index_of_states(&self, states: &[usize]) -> usize {
        states.iter().zip(&self.strides).map(|(&x, &s)| x * s).sum()
    }

    /// Inverse of [`Factor::index_of_states`].
    pub fn states_of_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.scope.len()];
        for i in 0..self.scope.len() {
            out[i] = idx / self.strides[i];
            idx %= self.strides[i];
        }
        out
    }

    #[inline]
    pub fn log_at(&self, idx: usize) -> LogProb {
        self.logs[idx]
    }

    #[inline]
    pub fn log_value(&self, full: &[usize]) -> LogProb {
        self.logs[self.index(full)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Directed,
    Undirected,
}

/// An immutable discrete graphical model.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    cards: Vec<usize>,
    factors: Vec<Factor>,
    kind: ModelKind,
    /// Directed only: parents in CPT scope order.
    parents: Vec<Vec<VarId>>,
    /// Directed only: index of each variable's CPT.
    cpt: Vec<usize>,
    /// Factors whose scope contains each variable.
    touching: Vec<Vec<usize>>,
    /// Directed: a topological order. Undirected: `0..n`.
    order: Vec<VarId>,
}

impl DiscreteModel {
    /// A Markov network with arbitrary factor scopes.
    pub fn markov(cards: Vec<usize>, factors: Vec<Factor>) -> Result<DiscreteModel> {
        check_cards(&cards)?;
        let touching = touching(&cards, &factors)?;
        let order = (0..cards.len()).collect();
        Ok(DiscreteModel {
            cards,
            factors,
            kind: ModelKind::Undirected,
            parents: Vec::new(),
            cpt: Vec::new(),
            touching,
            order,
        })
    }

    /// A Bayesian network. Each factor is a CPT whose last scope variable is
    /// the child; every variable must have exactly one CPT, rows must sum to
    /// one and the parent graph must be acyclic.
    pub fn bayes(cards: Vec<usize>, cpts: Vec<Factor>) -> Result<DiscreteModel> {
        check_cards(&cards)?;
        let n = cards.len();
        let touching = touching(&cards, &cpts)?;
        let mut cpt = vec![usize::MAX; n];
        let mut parents = vec![Vec::new(); n];
        for (fi, f) in cpts.iter().enumerate() {
            let (&child, pars) = f
                .scope()
                .split_last()
                .ok_or_else(|| Error::InvalidModel("CPT with empty scope".into()))?;
            if cpt[child] != usize::MAX {
                return Err(Error::InvalidModel(format!("variable {child} has two CPTs")));
            }
            cpt[child] = fi;
            parents[child] = pars.to_vec();
            let k = cards[child];
            for (r, row) in f.values().chunks(k).enumerate() {
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > CPT_ROW_TOL {
                    return Err(Error::InvalidModel(format!(
                        "CPT row {r} of variable {child} sums to {s}"
                    )));
                }
            }
        }
        if let Some(v) = cpt.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidModel(format!("variable {v} has no CPT")));
        }
        let order = topological_order(&parents)?;
        Ok(DiscreteModel { cards, factors: cpts, kind: ModelKind::Directed, parents, cpt, touching, order })
    }

    /// Convenience constructor: `tables[v]` is the CPT of `v` given
    /// `parents[v]`, row-major with the child fastest.
    pub fn bayes_from_tables(
        cards: Vec<usize>,
        parents: Vec<Vec<VarId>>,
        tables: Vec<Vec<f64>>,
    ) -> Result<DiscreteModel> {
        if parents.len() != cards.len() || tables.len() != cards.len() {
            return Err(Error::InvalidModel("one parent list and table per variable".into()));
        }
        let mut cpts = Vec::with_capacity(cards.len());
        for (v, (pars, table)) in parents.into_iter().zip(tables).enumerate() {
            let mut scope = pars;
            scope.push(v);
            let fc = scope
                .iter()
                .map(|&u| cards.get(u).copied().ok_or(Error::UnknownVariable(u)))
                .collect::<Result<Vec<_>>>()?;
            cpts.push(Factor::new(scope, fc, table)?);
        }
        DiscreteModel::bayes(cards, cpts)
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn card(&self, v: VarId) -> usize {
        self.cards[v]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn is_directed(&self) -> bool {
        self.kind == ModelKind::Directed
    }

    /// Parents of `v` (empty for undirected models).
    pub fn parents(&self, v: VarId) -> &[VarId] {
        self.parents.get(v).map_or(&[], Vec::as_slice)
    }

    /// The CPT of `v` in a directed model.
    pub fn cpt(&self, v: VarId) -> Option<&Factor> {
        self.cpt.get(v).map(|&i| &self.factors[i])
    }

    pub fn cpt_index(&self, v: VarId) -> Option<usize> {
        self.cpt.get(v).copied()
    }

    /// Indices of the factors whose scope contains `v`.
    pub fn factors_touching(&self, v: VarId) -> &[usize] {
        &self.touching[v]
    }

    /// A topological order for directed models, `0..n` otherwise.
    pub fn topological_order(&self) -> &[VarId] {
        &self.order
    }

    /// Children of `v` in a directed model.
    pub fn children(&self, v: VarId) -> Vec<VarId> {
        if !self.is_directed() {
            return Vec::new();
        }
        self.touching[v]
            .iter()
            .map(|&fi| *self.factors[fi].scope().last().unwrap())
            .filter(|&c| c != v)
            .collect()
    }

    fn check_var(&self, v: VarId) -> Result<()> {
        if v < self.cards.len() {
            Ok(())
        } else {
            Err(Error::UnknownVariable(v))
        }
    }

    /// Variables sharing a factor with any member of `block`, minus the block
    /// itself. For a Bayesian network this is parents, children and
    /// co-parents; in either case the block is conditionally independent of
    /// everything else given this set.
    pub fn markov_blanket(&self, block: &[VarId]) -> Result<BTreeSet<VarId>> {
        for &v in block {
            self.check_var(v)?;
        }
        let inside: BTreeSet<VarId> = block.iter().copied().collect();
        let mut out = BTreeSet::new();
        for &v in block {
            for &fi in &self.touching[v] {
                for &u in self.factors[fi].scope() {
                    if !inside.contains(&u) {
                        out.insert(u);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Factors touching at least one block variable, deduplicated and sorted.
    pub fn factors_touching_block(&self, block: &[VarId]) -> Vec<usize> {
        let mut fs: Vec<usize> = block.iter().flat_map(|&v| self.touching[v].iter().copied()).collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    /// Log of the (unnormalized, for Markov networks) joint density.
    pub fn log_joint(&self, a: &Assignment) -> Result<LogProb> {
        a.validate(self)?;
        Ok(self.log_joint_states(a.states()))
    }

    /// [`DiscreteModel::log_joint`] without validation.
    pub fn log_joint_states(&self, full: &[usize]) -> LogProb {
        self.factors.iter().map(|f| f.log_value(full)).sum()
    }

    /// Exact ancestral sample from a Bayesian network.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Assignment> {
        if !self.is_directed() {
            return Err(Error::Unsupported("prior sampling needs a directed model".into()));
        }
        let mut states = vec![0; self.num_vars()];
        for &v in &self.order {
            let f = &self.factors[self.cpt[v]];
            let k = self.cards[v];
            let base = f.index_without(&states, v);
            let row = &f.values()[base..base + k];
            states[v] = sample_index(row, rng);
        }
        Ok(Assignment(states))
    }

    /// Log weight of `var = state` against the factors touching `var`, all
    /// other variables read from `full`.
    #[inline]
    pub fn local_log_weight(&self, var: VarId, state: usize, full: &[usize]) -> LogProb {
        self.touching[var]
            .iter()
            .map(|&fi| {
                let f = &self.factors[fi];
                let s = f.stride_of(var).unwrap();
                f.log_at(f.index_without(full, var) + state * s)
            })
            .sum()
    }
}

/// Draws an index proportional to non-negative weights.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

fn check_cards(cards: &[usize]) -> Result<()> {
    if let Some(v) = cards.iter().position(|&c| c < 2) {
        return Err(Error::InvalidModel(format!("variable {v} has cardinality < 2")));
    }
    Ok(())
}

fn touching(cards: &[usize], factors: &[Factor]) -> Result<Vec<Vec<usize>>> {
    let mut t = vec![Vec::new(); cards.len()];
    for (fi, f) in factors.iter().enumerate() {
        for (&v, &c) in f.scope().iter().zip(f.cards()) {
            if v >= cards.len() {
                return Err(Error::UnknownVariable(v));
            }
            if cards[v] != c {
                return Err(Error::InvalidModel(format!(
                    "factor {fi} gives variable {v} cardinality {c}, model says {}",
                    cards[v]
                )));
            }
            t[v].push(fi);
        }
    }
    Ok(t)
}

fn topological_order(parents: &[Vec<VarId>]) -> Result<Vec<VarId>> {
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut children = vec![Vec::new(); n];
    for (v, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(v);
        }
    }
    // Smallest-id-first Kahn keeps the order deterministic.
    let mut ready: BTreeSet<VarId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidModel("directed model has a cycle".into()));
    }
    Ok(order)
}

/// A state for every variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(states: Vec<usize>) -> Assignment {
        Assignment(states)
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub fn states_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }

    pub fn into_states(self) -> Vec<usize> {
        self.0
    }

    pub fn get(&self, v: VarId) -> usize {
        self.0[v]
    }

    pub fn validate(&self, model: &DiscreteModel) -> Result<()> {
        if self.0.len() != model.num_vars() {
            return Err(Error::precondition(format!(
                "assignment covers {} variables, model has {}",
                self.0.len(),
                model.num_vars()
            )));
        }
        for (v, &s) in self.0.iter().enumerate() {
            if s >= model.card(v) {
                return Err(Error::StateOutOfRange { var: v, state: s, cardinality: model.card(v) });
            }
        }
        Ok(())
    }
}

/// States for a subset of variables (evidence, conditioning values).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialAssignment(BTreeMap<VarId, usize>);

impl PartialAssignment {
    pub fn new() -> PartialAssignment {
        PartialAssignment::default()
    }

    pub fn insert(&mut self, v: VarId, s: usize) -> Option<usize> {
        self.0.insert(v, s)
    }

    pub fn get(&self, v: VarId) -> Option<usize> {
        self.0.get(&v).copied()
    }

    pub fn contains(&self, v: VarId) -> bool {
        self.0.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().map(|(&v, &s)| (v, s))
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.keys().copied()
    }

    /// The restriction of a full assignment to `vars`.
    pub fn from_full(full: &[usize], vars: impl IntoIterator<Item = VarId>) -> PartialAssignment {
        PartialAssignment(vars.into_iter().map(|v| (v, full[v])).collect())
    }

    pub fn validate(&self, model: &DiscreteModel) -> Result<()> {
        for (&v, &s) in &self.0 {
            if v >= model.num_vars() {
                return Err(Error::UnknownVariable(v));
            }
            if s >= model.card(v) {
                return Err(Error::StateOutOfRange { var: v, state: s, cardinality: model.card(v) });
            }
        }
        Ok(())
    }
}

impl FromIterator<(VarId, usize)> for PartialAssignment {
    fn from_iter<I: IntoIterator<Item = (VarId, usize)>>(iter: I) -> Self {
        PartialAssignment(iter.into_iter().collect())
    }
}
