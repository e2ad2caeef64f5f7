//! Baseline MCMC kernels: single-site Gibbs, exact block Gibbs, and the
//! Metropolis-Hastings accept/reject step every block proposal goes through.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::logprob::{LogProb, normalize_logs};
use crate::model::{sample_index, Assignment, DiscreteModel, PartialAssignment, VarId};
use crate::oracle::{block_conditional_from_state, block_log_weights};
use crate::rng::Rng;

/// Attempts at drawing a feasible initial state before giving up.
pub const INIT_ATTEMPTS: usize = 100;

/// The state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub assignment: Assignment,
    pub epoch: u64,
    pub rng: Rng,
}

impl ChainState {
    pub fn new(assignment: Assignment, rng: Rng) -> ChainState {
        ChainState { assignment, epoch: 0, rng }
    }

    pub fn states(&self) -> &[usize] {
        self.assignment.states()
    }
}

/// Result of one MH block move.
#[derive(Clone, Debug)]
pub struct ProposalOutcome {
    /// Proposed block values, in block order.
    pub proposed: Vec<usize>,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
    pub log_alpha: LogProb,
    pub accepted: bool,
    /// Set when the proposal reported a non-finite density; the move was
    /// rejected.
    pub flagged: bool,
}

/// A block proposal draws new values for `block` given the current full
/// state and reports both the forward density `q(x'_B | x)` and the reverse
/// density `q(x_B | x')`.
pub trait BlockProposal {
    fn propose(&self, model: &DiscreteModel, current: &[usize], block: &[VarId], rng: &mut Rng)
        -> Result<ProposedMove>;
}

#[derive(Clone, Debug)]
pub struct ProposedMove {
    pub states: Vec<usize>,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// Draws initial latent values. Directed models are sampled ancestrally with
/// evidence clamped; each latent draw is restricted to states that keep every
/// already fully assigned factor nonzero. Undirected models start uniform.
/// Draws with zero joint probability are retried up to [`INIT_ATTEMPTS`]
/// times.
pub fn initialize(model: &DiscreteModel, evidence: &PartialAssignment, rng: &mut Rng) -> Result<Assignment> {
    evidence.validate(model)?;
    let n = model.num_vars();
    for _ in 0..INIT_ATTEMPTS {
        let mut states = vec![0; n];
        for (v, s) in evidence.iter() {
            states[v] = s;
        }
        let ok = if model.is_directed() {
            forward_with_lookahead(model, evidence, &mut states, rng)
        } else {
            for v in (0..n).filter(|&v| !evidence.contains(v)) {
                states[v] = rng.random_range(0..model.card(v));
            }
            true
        };
        if ok && !model.log_joint_states(&states).is_zero() {
            return Ok(Assignment::new(states));
        }
    }
    Err(Error::Inconsistent(format!(
        "no initial state with positive probability after {INIT_ATTEMPTS} attempts"
    )))
}

fn forward_with_lookahead(
    model: &DiscreteModel,
    evidence: &PartialAssignment,
    states: &mut [usize],
    rng: &mut Rng,
) -> bool {
    let n = model.num_vars();
    let mut assigned: Vec<bool> = (0..n).map(|v| evidence.contains(v)).collect();
    for &v in model.topological_order() {
        if evidence.contains(v) {
            continue;
        }
        assigned[v] = true;
        let ready: Vec<usize> = model
            .factors_touching(v)
            .iter()
            .copied()
            .filter(|&fi| model.factors()[fi].scope().iter().all(|&u| assigned[u]))
            .collect();
        let weights: Vec<f64> = (0..model.card(v))
            .map(|s| {
                states[v] = s;
                ready.iter().map(|&fi| model.factors()[fi].log_value(states)).sum::<LogProb>().exp()
            })
            .collect();
        if weights.iter().all(|&w| w == 0.0) {
            return false;
        }
        states[v] = sample_index(&weights, rng);
    }
    true
}

/// Resamples `v` from its full conditional.
pub fn gibbs_update(model: &DiscreteModel, states: &mut [usize], v: VarId, rng: &mut Rng) -> Result<()> {
    let logs: Vec<LogProb> = (0..model.card(v)).map(|s| model.local_log_weight(v, s, states)).collect();
    let probs = normalize_logs(&logs)
        .ok_or_else(|| Error::Inconsistent(format!("variable {v} has a zero-support conditional")))?;
    states[v] = sample_index(&probs, rng);
    Ok(())
}

/// One pass of single-site Gibbs over `schedule`, in order.
pub fn gibbs_sweep(model: &DiscreteModel, state: &mut ChainState, schedule: &[VarId]) -> Result<()> {
    let ChainState { assignment, rng, .. } = state;
    for &v in schedule {
        gibbs_update(model, assignment.states_mut(), v, rng)?;
    }
    state.epoch += 1;
    Ok(())
}

/// Sum of log factor values over the factors touching `block`.
fn block_local_log(model: &DiscreteModel, factors: &[usize], states: &[usize]) -> LogProb {
    factors.iter().map(|&fi| model.factors()[fi].log_value(states)).sum()
}

/// A Metropolis-Hastings block move. Only factors touching the block enter
/// the target ratio; all others cancel. On rejection the state is untouched.
pub fn mh_step<P: BlockProposal + ?Sized>(
    model: &DiscreteModel,
    state: &mut ChainState,
    block: &[VarId],
    proposal: &P,
) -> Result<ProposalOutcome> {
    let mv = proposal.propose(model, state.assignment.states(), block, &mut state.rng)?;
    mh_apply(model, state, block, mv)
}

/// Accept/reject an already drawn move.
pub fn mh_apply(
    model: &DiscreteModel,
    state: &mut ChainState,
    block: &[VarId],
    mv: ProposedMove,
) -> Result<ProposalOutcome> {
    if mv.states.len() != block.len() {
        return Err(Error::Proposal(format!(
            "proposal returned {} values for a block of {}",
            mv.states.len(),
            block.len()
        )));
    }
    let mut outcome = ProposalOutcome {
        proposed: mv.states,
        log_q_forward: mv.log_q_forward,
        log_q_reverse: mv.log_q_reverse,
        log_alpha: LogProb::ZERO,
        accepted: false,
        flagged: false,
    };
    let (fwd, rev) = match (LogProb::from_log(mv.log_q_forward), LogProb::from_log(mv.log_q_reverse)) {
        (Some(f), Some(r)) if !f.is_zero() => (f, r),
        _ => {
            outcome.flagged = true;
            return Ok(outcome);
        }
    };
    let factors = model.factors_touching_block(block);
    let states = state.assignment.states_mut();
    let before = block_local_log(model, &factors, states);
    let saved: Vec<usize> = block.iter().map(|&v| states[v]).collect();
    for (&v, &s) in block.iter().zip(&outcome.proposed) {
        states[v] = s;
    }
    let after = block_local_log(model, &factors, states);
    let num = after + rev;
    let den = before + fwd;
    outcome.log_alpha = if num.is_zero() {
        LogProb::ZERO
    } else if den.is_zero() {
        LogProb::ONE
    } else {
        let d = num - den;
        if d > LogProb::ONE {
            LogProb::ONE
        } else {
            d
        }
    };
    let u: f64 = state.rng.random();
    outcome.accepted = match outcome.log_alpha.value() {
        Some(la) => u.ln() < la,
        None => false,
    };
    if !outcome.accepted {
        for (&v, s) in block.iter().zip(saved) {
            states[v] = s;
        }
    }
    Ok(outcome)
}

/// Resamples `block` jointly from its exact conditional.
pub fn exact_block_gibbs_step(model: &DiscreteModel, block: &[VarId], state: &mut ChainState) -> Result<()> {
    let ChainState { assignment, rng, .. } = state;
    let cond = block_conditional_from_state(model, block, assignment.states_mut())?;
    let draw = cond.sample(rng);
    let states = assignment.states_mut();
    for (&v, s) in block.iter().zip(draw) {
        states[v] = s;
    }
    Ok(())
}

/// The exact block conditional used as an MH proposal.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactBlockProposal;

impl BlockProposal for ExactBlockProposal {
    fn propose(&self, model: &DiscreteModel, current: &[usize], block: &[VarId], rng: &mut Rng) -> Result<ProposedMove> {
        let mut scratch = current.to_vec();
        let logs = block_log_weights(model, block, &mut scratch);
        let z = crate::logprob::log_sum_exp_f64(&logs);
        if z == f64::NEG_INFINITY {
            return Err(Error::Inconsistent(format!("block {block:?} has no support")));
        }
        let probs: Vec<f64> = logs.iter().map(|&l| (l - z).exp()).collect();
        let idx = sample_index(&probs, rng);
        let cards: Vec<usize> = block.iter().map(|&v| model.card(v)).collect();
        let states = unflatten(idx, &cards);
        let cur: Vec<usize> = block.iter().map(|&v| current[v]).collect();
        let cur_idx = flatten(&cur, &cards);
        Ok(ProposedMove { states, log_q_forward: logs[idx] - z, log_q_reverse: logs[cur_idx] - z })
    }
}

/// Uniform over all block assignments; symmetric.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformBlockProposal;

impl BlockProposal for UniformBlockProposal {
    fn propose(&self, model: &DiscreteModel, _current: &[usize], block: &[VarId], rng: &mut Rng) -> Result<ProposedMove> {
        let states: Vec<usize> = block.iter().map(|&v| rng.random_range(0..model.card(v))).collect();
        let lq = -block.iter().map(|&v| (model.card(v) as f64).ln()).sum::<f64>();
        Ok(ProposedMove { states, log_q_forward: lq, log_q_reverse: lq })
    }
}

pub fn flatten(states: &[usize], cards: &[usize]) -> usize {
    states.iter().zip(cards).fold(0, |acc, (&s, &k)| acc * k + s)
}

pub fn unflatten(mut idx: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        out[i] = idx % cards[i];
        idx /= cards[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate::{grid_bn, random_bn, CptPrior, GridShape};
    use crate::rng;

    fn near_deterministic_pair(eps: f64) -> DiscreteModel {
        DiscreteModel::bayes_from_tables(
            vec![2, 2],
            vec![vec![], vec![0]],
            vec![vec![0.5, 0.5], vec![1.0 - eps, eps, eps, 1.0 - eps]],
        )
        .unwrap()
    }

    #[test]
    fn independent_coins_one_sweep_gives_prior() {
        let m = DiscreteModel::bayes_from_tables(
            vec![2, 2],
            vec![vec![], vec![]],
            vec![vec![0.3, 0.7], vec![0.5, 0.5]],
        )
        .unwrap();
        let mut counts = [0usize; 2];
        let n = 50_000;
        for i in 0..n {
            let mut st = ChainState::new(Assignment::new(vec![0, 0]), rng::stream(1, rng::Purpose::Chain, i));
            gibbs_sweep(&m, &mut st, &[0, 1]).unwrap();
            counts[st.states()[0]] += 1;
        }
        let f = counts[1] as f64 / n as f64;
        // 3 sigma = 3 * sqrt(0.21 / 5e4) ≈ 0.0061
        assert!((f - 0.7).abs() < 0.0062, "{f}");
    }

    #[test]
    fn zero_support_conditional_names_variable() {
        let m = DiscreteModel::bayes_from_tables(
            vec![2, 2],
            vec![vec![], vec![0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let mut st = ChainState::new(Assignment::new(vec![0, 1]), rng::seeded(0));
        let err = gibbs_sweep(&m, &mut st, &[0]).unwrap_err();
        assert!(err.to_string().contains("variable 0"), "{err}");
    }

    #[test]
    fn exact_proposal_always_accepted() {
        let mut r = rng::seeded(12);
        for _ in 0..50 {
            let m = random_bn(8, 3, &CptPrior::new(0.3, [0.5, 0.5]).unwrap(), &mut r).unwrap();
            let init = initialize(&m, &PartialAssignment::new(), &mut r).unwrap();
            let mut st = ChainState::new(init, rng::seeded(3));
            let out = mh_step(&m, &mut st, &[2, 5, 6], &ExactBlockProposal).unwrap();
            assert!(out.log_alpha.value().unwrap().abs() < 1e-9);
            assert!(out.accepted);
        }
    }

    #[test]
    fn uniform_proposal_on_uniform_model_always_accepts() {
        let m = DiscreteModel::bayes_from_tables(vec![2; 3], vec![vec![]; 3], vec![vec![0.5, 0.5]; 3]).unwrap();
        let mut st = ChainState::new(Assignment::new(vec![0, 0, 0]), rng::seeded(5));
        for _ in 0..200 {
            let out = mh_step(&m, &mut st, &[0, 1, 2], &UniformBlockProposal).unwrap();
            assert!(out.accepted);
        }
    }

    struct Broken;
    impl BlockProposal for Broken {
        fn propose(&self, _: &DiscreteModel, _: &[usize], block: &[VarId], _: &mut Rng) -> Result<ProposedMove> {
            Ok(ProposedMove { states: vec![1; block.len()], log_q_forward: f64::NAN, log_q_reverse: 0.0 })
        }
    }

    #[test]
    fn nonfinite_density_is_flagged_and_rejected() {
        let m = near_deterministic_pair(0.1);
        let mut st = ChainState::new(Assignment::new(vec![0, 0]), rng::seeded(5));
        let out = mh_step(&m, &mut st, &[0, 1], &Broken).unwrap();
        assert!(out.flagged && !out.accepted);
        assert_eq!(st.states(), &[0, 0]);
    }

    #[test]
    fn rejection_leaves_state_identical() {
        let m = near_deterministic_pair(1e-3);
        let mut st = ChainState::new(Assignment::new(vec![1, 1]), rng::seeded(8));
        let mut rejected = 0;
        for _ in 0..500 {
            let before = st.assignment.clone();
            let out = mh_step(&m, &mut st, &[0, 1], &UniformBlockProposal).unwrap();
            if !out.accepted {
                rejected += 1;
                assert_eq!(st.assignment, before);
            }
        }
        assert!(rejected > 0);
    }

    #[test]
    fn initialize_handles_deterministic_grids() {
        let mut r = rng::seeded(21);
        for _ in 0..20 {
            let m = grid_bn(GridShape::new(6, 6), 2, &CptPrior::new(0.9, [0.5, 0.5]).unwrap(), &mut r).unwrap();
            let truth = m.sample_prior(&mut r).unwrap();
            let ev = PartialAssignment::from_full(truth.states(), [7, 20, 33, 35]);
            let a = initialize(&m, &ev, &mut r).unwrap();
            assert!(!m.log_joint(&a).unwrap().is_zero());
            assert!(ev.iter().all(|(v, s)| a.get(v) == s));
        }
    }

    #[test]
    fn flatten_roundtrip() {
        let cards = [2, 3, 4];
        for i in 0..24 {
            assert_eq!(flatten(&unflatten(i, &cards), &cards), i);
        }
    }
}
