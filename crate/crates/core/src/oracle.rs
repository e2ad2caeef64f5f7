//! Exact inference at desk scale.
//!
//! Two independent routes to posterior marginals, brute-force enumeration
//! and variable elimination, plus exact block conditionals used both as a
//! sampler baseline and as the target a trained proposal is scored against.
//! Everything runs in log space; factor products are max-shifted before
//! exponentiating.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::logprob::log_sum_exp_f64;
use crate::model::{sample_index, DiscreteModel, PartialAssignment, VarId};

/// Enumeration refuses models whose latent state space exceeds `2^24`.
pub const ENUMERATION_MAX_BITS: f64 = 24.0;
/// Block conditionals are limited to `2^16` block assignments.
pub const BLOCK_MAX_BITS: f64 = 16.0;

/// Posterior marginal for every variable; evidence variables are point masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginals {
    probs: Vec<Vec<f64>>,
}

impl Marginals {
    pub fn new(probs: Vec<Vec<f64>>) -> Marginals {
        Marginals { probs }
    }

    pub fn num_vars(&self) -> usize {
        self.probs.len()
    }

    pub fn get(&self, v: VarId) -> &[f64] {
        &self.probs[v]
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// Largest absolute difference over all entries.
    pub fn max_abs_diff(&self, other: &Marginals) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Total-variation distance per variable.
    pub fn tv_per_var(&self, other: &Marginals) -> Vec<f64> {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
            .collect()
    }

    /// `.MAR` text: `MAR`, variable count, then per variable its
    /// cardinality and probabilities.
    pub fn to_mar_string(&self) -> String {
        let mut s = format!("MAR\n{}", self.probs.len());
        for p in &self.probs {
            write!(s, " {}", p.len()).unwrap();
            for x in p {
                write!(s, " {x}").unwrap();
            }
        }
        s.push('\n');
        s
    }

    pub fn parse_mar(text: &str) -> Result<Marginals> {
        let mut toks = text.split_whitespace();
        let bad = |m: &str| Error::Parse { line: 0, token: 0, message: m.to_string() };
        if toks.next() != Some("MAR") {
            return Err(bad("missing MAR header"));
        }
        let n: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("variable count"))?;
        let mut probs = Vec::with_capacity(n);
        for _ in 0..n {
            let k: usize = toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("cardinality"))?;
            let mut p = Vec::with_capacity(k);
            for _ in 0..k {
                p.push(toks.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("probability"))?);
            }
            probs.push(p);
        }
        Ok(Marginals { probs })
    }

    /// CSV with header `var,state,prob`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["var", "state", "prob"])?;
        for (v, p) in self.probs.iter().enumerate() {
            for (s, x) in p.iter().enumerate() {
                wtr.write_record([v.to_string(), s.to_string(), x.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

fn latent_bits(model: &DiscreteModel, evidence: &PartialAssignment) -> f64 {
    (0..model.num_vars())
        .filter(|&v| !evidence.contains(v))
        .map(|v| (model.card(v) as f64).log2())
        .sum()
}

/// Exact marginals by summing the joint over every latent assignment.
pub fn enumerate_marginals(model: &DiscreteModel, evidence: &PartialAssignment) -> Result<Marginals> {
    evidence.validate(model)?;
    let bits = latent_bits(model, evidence);
    if bits > ENUMERATION_MAX_BITS {
        return Err(Error::TooLarge(format!(
            "{bits:.1} latent bits exceeds the enumeration limit of {ENUMERATION_MAX_BITS}"
        )));
    }
    let n = model.num_vars();
    let latent: Vec<VarId> = (0..n).filter(|&v| !evidence.contains(v)).collect();
    let mut states = vec![0; n];
    for (v, s) in evidence.iter() {
        states[v] = s;
    }
    // Streaming log-sum-exp: sums are stored relative to exp(shift).
    let mut shift = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut acc: Vec<Vec<f64>> = (0..n).map(|v| vec![0.0; model.card(v)]).collect();
    loop {
        if let Some(lw) = model.log_joint_states(&states).value() {
            if lw > shift {
                let scale = (shift - lw).exp();
                total *= scale;
                acc.iter_mut().flatten().for_each(|x| *x *= scale);
                shift = lw;
            }
            let w = (lw - shift).exp();
            total += w;
            for &v in &latent {
                acc[v][states[v]] += w;
            }
        }
        // Odometer over latent variables, last one fastest.
        let mut i = latent.len();
        loop {
            if i == 0 {
                return finish(acc, total, evidence);
            }
            i -= 1;
            let v = latent[i];
            states[v] += 1;
            if states[v] < model.card(v) {
                break;
            }
            states[v] = 0;
        }
    }
}

fn finish(mut acc: Vec<Vec<f64>>, total: f64, evidence: &PartialAssignment) -> Result<Marginals> {
    if total <= 0.0 {
        return Err(Error::Inconsistent("evidence has zero probability".into()));
    }
    for (v, p) in acc.iter_mut().enumerate() {
        match evidence.get(v) {
            Some(s) => {
                p.iter_mut().for_each(|x| *x = 0.0);
                p[s] = 1.0;
            }
            None => p.iter_mut().for_each(|x| *x /= total),
        }
    }
    Ok(Marginals { probs: acc })
}

/// A factor in log space used by variable elimination. Zero entries are
/// `-inf`; every combination goes through [`log_sum_exp_f64`] or plain
/// addition, neither of which produces NaN from `-inf` inputs.
#[derive(Clone, Debug)]
struct LogFactor {
    scope: Vec<VarId>,
    cards: Vec<usize>,
    logs: Vec<f64>,
}

impl LogFactor {
    fn strides(&self) -> Vec<usize> {
        let mut st = vec![1; self.scope.len()];
        for i in (0..self.scope.len().saturating_sub(1)).rev() {
            st[i] = st[i + 1] * self.cards[i + 1];
        }
        st
    }

    /// Fixes evidence variables and drops them from the scope.
    fn reduce(f: &crate::model::Factor, evidence: &PartialAssignment) -> LogFactor {
        let keep: Vec<usize> = (0..f.scope().len()).filter(|&i| !evidence.contains(f.scope()[i])).collect();
        let scope: Vec<VarId> = keep.iter().map(|&i| f.scope()[i]).collect();
        let cards: Vec<usize> = keep.iter().map(|&i| f.cards()[i]).collect();
        let size: usize = cards.iter().product();
        let mut logs = Vec::with_capacity(size);
        let mut states: Vec<usize> = f.scope().iter().map(|&v| evidence.get(v).unwrap_or(0)).collect();
        for mut idx in 0..size {
            for i in (0..keep.len()).rev() {
                states[keep[i]] = idx % cards[i];
                idx /= cards[i];
            }
            logs.push(f.log_at(f.index_of_states(&states)).to_f64());
        }
        LogFactor { scope, cards, logs }
    }
}

/// Elimination order strategy.
#[derive(Clone, Debug, Default)]
pub enum EliminationOrder {
    /// Min-fill, ties to the lowest variable id.
    #[default]
    MinFill,
    /// Explicit order; must list every variable that is neither evidence nor
    /// the query (extra entries are skipped).
    Explicit(Vec<VarId>),
}

#[derive(Clone, Debug)]
pub struct VeOptions {
    pub order: EliminationOrder,
    /// Largest intermediate factor, in entries.
    pub max_factor_entries: usize,
}

impl Default for VeOptions {
    fn default() -> Self {
        VeOptions { order: EliminationOrder::MinFill, max_factor_entries: 1 << 24 }
    }
}

/// Exact marginals by sum-product variable elimination, one elimination run
/// per query variable.
pub fn variable_elimination_marginals(
    model: &DiscreteModel,
    evidence: &PartialAssignment,
    opts: &VeOptions,
) -> Result<Marginals> {
    evidence.validate(model)?;
    let reduced: Vec<LogFactor> = model.factors().iter().map(|f| LogFactor::reduce(f, evidence)).collect();
    // Constant factors only matter for detecting zero evidence mass.
    let constant: f64 = reduced.iter().filter(|f| f.scope.is_empty()).map(|f| f.logs[0]).sum();
    if constant == f64::NEG_INFINITY {
        return Err(Error::Inconsistent("evidence has zero probability".into()));
    }
    let factors: Vec<LogFactor> = reduced.into_iter().filter(|f| !f.scope.is_empty()).collect();
    let mut probs = Vec::with_capacity(model.num_vars());
    for q in 0..model.num_vars() {
        if let Some(s) = evidence.get(q) {
            let mut p = vec![0.0; model.card(q)];
            p[s] = 1.0;
            probs.push(p);
            continue;
        }
        let order = match &opts.order {
            EliminationOrder::MinFill => min_fill_order(&factors, q),
            EliminationOrder::Explicit(o) => {
                let o: Vec<VarId> = o.iter().copied().filter(|&v| v != q && !evidence.contains(v)).collect();
                let needed: BTreeSet<VarId> =
                    factors.iter().flat_map(|f| f.scope.iter().copied()).filter(|&v| v != q).collect();
                let given: BTreeSet<VarId> = o.iter().copied().collect();
                if !needed.is_subset(&given) {
                    return Err(Error::precondition(format!(
                        "elimination order misses variables {:?}",
                        needed.difference(&given).collect::<Vec<_>>()
                    )));
                }
                o
            }
        };
        let mut pool = factors.clone();
        for &x in &order {
            let (with, without): (Vec<_>, Vec<_>) = pool.into_iter().partition(|f| f.scope.contains(&x));
            pool = without;
            if with.is_empty() {
                continue;
            }
            pool.push(product_sum_out(&with, Some(x), model, opts.max_factor_entries)?);
        }
        let last = product_sum_out(&pool, None, model, opts.max_factor_entries)?;
        let mut logs = vec![0.0; model.card(q)];
        if last.scope.is_empty() {
            // q is disconnected: uniform after reduction.
            logs.iter_mut().for_each(|x| *x = last.logs[0]);
        } else {
            debug_assert_eq!(last.scope, vec![q]);
            logs.copy_from_slice(&last.logs);
        }
        let z = log_sum_exp_f64(&logs);
        if z == f64::NEG_INFINITY {
            return Err(Error::Inconsistent("evidence has zero probability".into()));
        }
        probs.push(logs.iter().map(|&l| (l - z).exp()).collect());
    }
    Ok(Marginals { probs })
}

/// Multiplies `factors` and, if `x` is given, sums `x` out.
fn product_sum_out(
    factors: &[LogFactor],
    x: Option<VarId>,
    model: &DiscreteModel,
    cap: usize,
) -> Result<LogFactor> {
    let union: BTreeSet<VarId> = factors.iter().flat_map(|f| f.scope.iter().copied()).collect();
    let scope: Vec<VarId> = union.iter().copied().filter(|&v| Some(v) != x).collect();
    let cards: Vec<usize> = scope.iter().map(|&v| model.card(v)).collect();
    let size: usize = cards.iter().product();
    let kx = x.map_or(1, |v| model.card(v));
    if size.saturating_mul(kx) > cap {
        return Err(Error::Resource(format!(
            "intermediate factor of {} entries exceeds cap {cap}",
            size.saturating_mul(kx)
        )));
    }
    // For each input factor: stride of each output-scope variable and of x.
    let maps: Vec<(Vec<usize>, usize)> = factors
        .iter()
        .map(|f| {
            let st = f.strides();
            let per: Vec<usize> = scope
                .iter()
                .map(|v| f.scope.iter().position(|u| u == v).map_or(0, |i| st[i]))
                .collect();
            let sx = x.and_then(|v| f.scope.iter().position(|&u| u == v)).map_or(0, |i| st[i]);
            (per, sx)
        })
        .collect();
    let mut logs = Vec::with_capacity(size);
    let mut states = vec![0usize; scope.len()];
    let mut terms = vec![0.0; kx];
    for _ in 0..size {
        let bases: Vec<usize> = maps
            .iter()
            .map(|(per, _)| per.iter().zip(&states).map(|(s, x)| s * x).sum())
            .collect();
        for (xs, t) in terms.iter_mut().enumerate() {
            *t = factors
                .iter()
                .zip(&maps)
                .zip(&bases)
                .map(|((f, (_, sx)), b)| f.logs[b + xs * sx])
                .sum();
        }
        logs.push(if kx == 1 { terms[0] } else { log_sum_exp_f64(&terms) });
        for i in (0..states.len()).rev() {
            states[i] += 1;
            if states[i] < cards[i] {
                break;
            }
            states[i] = 0;
        }
    }
    Ok(LogFactor { scope, cards, logs })
}

/// Greedy min-fill over the interaction graph, keeping `query` for last.
/// Ties go to the lowest variable id.
fn min_fill_order(factors: &[LogFactor], query: VarId) -> Vec<VarId> {
    let mut vars: BTreeSet<VarId> = factors.iter().flat_map(|f| f.scope.iter().copied()).collect();
    vars.remove(&query);
    let mut adj: std::collections::BTreeMap<VarId, BTreeSet<VarId>> = std::collections::BTreeMap::new();
    for f in factors {
        for &a in &f.scope {
            let e = adj.entry(a).or_default();
            for &b in &f.scope {
                if a != b {
                    e.insert(b);
                }
            }
        }
    }
    let mut order = Vec::with_capacity(vars.len());
    while !vars.is_empty() {
        let mut best: Option<(usize, VarId)> = None;
        for &v in &vars {
            let nb: Vec<VarId> = adj[&v].iter().copied().collect();
            let mut fill = 0;
            for i in 0..nb.len() {
                for j in i + 1..nb.len() {
                    if !adj[&nb[i]].contains(&nb[j]) {
                        fill += 1;
                    }
                }
            }
            if best.is_none_or(|(bf, _)| fill < bf) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.unwrap();
        let nb: Vec<VarId> = adj[&v].iter().copied().collect();
        for &a in &nb {
            for &b in &nb {
                if a != b {
                    adj.get_mut(&a).unwrap().insert(b);
                }
            }
            adj.get_mut(&a).unwrap().remove(&v);
        }
        adj.remove(&v);
        vars.remove(&v);
        order.push(v);
    }
    order
}

/// The exact joint conditional of a block given values for (at least) its
/// Markov blanket. Entries are row-major over `block`, first variable slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockConditional {
    block: Vec<VarId>,
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl BlockConditional {
    pub fn block(&self) -> &[VarId] {
        &self.block
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn index_of(&self, states: &[usize]) -> usize {
        states.iter().zip(&self.cards).fold(0, |acc, (&s, &k)| acc * k + s)
    }

    pub fn states_of(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        for i in (0..self.cards.len()).rev() {
            out[i] = idx % self.cards[i];
            idx /= self.cards[i];
        }
        out
    }

    pub fn prob(&self, states: &[usize]) -> f64 {
        self.probs[self.index_of(states)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.states_of(sample_index(&self.probs, rng))
    }
}

fn block_bits(model: &DiscreteModel, block: &[VarId]) -> f64 {
    block.iter().map(|&v| (model.card(v) as f64).log2()).sum()
}

/// `p(block | conditioning)`. The conditioning set must cover the block's
/// Markov blanket; values outside the blanket are ignored.
pub fn exact_block_conditional(
    model: &DiscreteModel,
    block: &[VarId],
    conditioning: &PartialAssignment,
) -> Result<BlockConditional> {
    conditioning.validate(model)?;
    let mb = model.markov_blanket(block)?;
    if let Some(v) = mb.iter().find(|&&v| !conditioning.contains(v)) {
        return Err(Error::precondition(format!("conditioning does not assign blanket variable {v}")));
    }
    let mut full = vec![0; model.num_vars()];
    for (v, s) in conditioning.iter() {
        full[v] = s;
    }
    block_conditional_from_state(model, block, &mut full)
}

/// [`exact_block_conditional`] reading blanket values from a full state. The
/// block entries of `full` are used as scratch and restored on return.
pub fn block_conditional_from_state(
    model: &DiscreteModel,
    block: &[VarId],
    full: &mut [usize],
) -> Result<BlockConditional> {
    let bits = block_bits(model, block);
    if bits > BLOCK_MAX_BITS {
        return Err(Error::TooLarge(format!("block of {bits:.1} bits exceeds {BLOCK_MAX_BITS}")));
    }
    let logs = block_log_weights(model, block, full);
    let z = log_sum_exp_f64(&logs);
    if z == f64::NEG_INFINITY {
        return Err(Error::Inconsistent(format!("block {block:?} has no support given its blanket")));
    }
    Ok(BlockConditional {
        block: block.to_vec(),
        cards: block.iter().map(|&v| model.card(v)).collect(),
        probs: logs.iter().map(|&l| (l - z).exp()).collect(),
    })
}

/// Unnormalized log weight of every block assignment (row-major, first
/// block variable slowest), using only the factors that touch the block.
pub fn block_log_weights(model: &DiscreteModel, block: &[VarId], full: &mut [usize]) -> Vec<f64> {
    let saved: Vec<usize> = block.iter().map(|&v| full[v]).collect();
    let fs = model.factors_touching_block(block);
    let cards: Vec<usize> = block.iter().map(|&v| model.card(v)).collect();
    let size: usize = cards.iter().product();
    let mut out = Vec::with_capacity(size);
    block.iter().for_each(|&v| full[v] = 0);
    for _ in 0..size {
        let lw: crate::logprob::LogProb = fs.iter().map(|&fi| model.factors()[fi].log_value(full)).sum();
        out.push(lw.to_f64());
        for i in (0..block.len()).rev() {
            full[block[i]] += 1;
            if full[block[i]] < cards[i] {
                break;
            }
            full[block[i]] = 0;
        }
    }
    for (&v, s) in block.iter().zip(saved) {
        full[v] = s;
    }
    out
}

/// Exact joint sample from any model given evidence, by enumeration. Used for
/// prior draws from small undirected fragments.
pub fn sample_exact<R: Rng + ?Sized>(
    model: &DiscreteModel,
    evidence: &PartialAssignment,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let latent: Vec<VarId> = (0..model.num_vars()).filter(|&v| !evidence.contains(v)).collect();
    let mut full = vec![0; model.num_vars()];
    for (v, s) in evidence.iter() {
        full[v] = s;
    }
    let cond = block_conditional_from_state(model, &latent, &mut full)?;
    let draw = cond.sample(rng);
    for (&v, s) in latent.iter().zip(draw) {
        full[v] = s;
    }
    Ok(full)
}
