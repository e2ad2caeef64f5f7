//! The neural block sampler.
//!
//! A [`SamplerSchedule`] assigns every latent variable either a block move
//! anchored at it or a single-site Gibbs update. One epoch performs exactly
//! one scheduled update per latent variable, in ascending id order. Block
//! moves are drawn from a trained network ([`BlockKernel::Neural`]), from the
//! exact conditional ([`BlockKernel::Exact`]) or from any other
//! [`BlockProposal`], and pass through the Metropolis-Hastings test.
//!
//! A block move only changes `B`, so the conditioning values, and with them
//! the network output, are the same before and after the move: one forward
//! pass yields both the forward and the reverse proposal density.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::{MdnParams, MixtureProposal};
use crate::model::{DiscreteModel, PartialAssignment, VarId};
use crate::motifs::{detect_instantiations, encode_c_values, encode_psi, Motif, MotifInstantiation};
use crate::oracle::Marginals;
use crate::rng::{self, Purpose};
use crate::samplers::{
    exact_block_gibbs_step, gibbs_update, initialize, mh_apply, mh_step, BlockProposal, ChainState, ProposedMove,
};

/// A trained proposal and the motif it was trained for.
#[derive(Clone, Debug)]
pub struct LibraryEntry {
    pub motif: Motif,
    pub params: MdnParams,
}

/// Trained proposals keyed by the motif's layout tag.
#[derive(Clone, Debug, Default)]
pub struct ProposalLibrary {
    entries: BTreeMap<String, LibraryEntry>,
}

impl ProposalLibrary {
    pub fn new() -> ProposalLibrary {
        ProposalLibrary::default()
    }

    pub fn insert(&mut self, motif: Motif, params: MdnParams) -> Result<()> {
        motif.check_config(&params.config)?;
        self.entries.insert(motif.layout_tag(), LibraryEntry { motif, params });
        Ok(())
    }

    /// Inserts parameters loaded from a file whose stored layout tag is
    /// `stored_layout`.
    pub fn insert_loaded(&mut self, motif: Motif, params: MdnParams, stored_layout: &str) -> Result<()> {
        if stored_layout != motif.layout_tag() {
            return Err(Error::Version(format!(
                "parameters encode {stored_layout:?}, motif {} needs {:?}",
                motif.name,
                motif.layout_tag()
            )));
        }
        self.insert(motif, params)
    }

    pub fn get(&self, motif: &Motif) -> Option<&LibraryEntry> {
        self.entries.get(&motif.layout_tag())
    }

    pub fn get_by_tag(&self, tag: &str) -> Option<&LibraryEntry> {
        self.entries.get(tag)
    }

    pub fn motifs(&self) -> impl Iterator<Item = &Motif> {
        self.entries.values().map(|e| &e.motif)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// An instantiation with its parameter encoding computed once.
#[derive(Clone, Debug)]
pub struct PreparedBlock {
    pub motif: Motif,
    pub inst: MotifInstantiation,
    tag: String,
    psi: Vec<f64>,
}

impl PreparedBlock {
    pub fn new(model: &DiscreteModel, motif: Motif, inst: MotifInstantiation) -> Result<PreparedBlock> {
        crate::motifs::check_instantiation(&motif, model, &inst)?;
        let psi = encode_psi(&motif, model, &inst)?;
        Ok(PreparedBlock { tag: motif.layout_tag(), motif, inst, psi })
    }

    /// Network input for the conditioning values in `states`.
    pub fn encode(&self, states: &[usize]) -> Result<Vec<f64>> {
        let c: Vec<usize> = self.inst.c_vars.iter().map(|&v| states[v]).collect();
        let mut x = Vec::with_capacity(self.motif.input_dim());
        encode_c_values(&self.motif, &c, &mut x)?;
        x.extend_from_slice(&self.psi);
        Ok(x)
    }
}

/// Per-variable plan for one epoch.
#[derive(Clone, Debug)]
pub struct SamplerSchedule {
    latent: Vec<VarId>,
    plan: Vec<Option<usize>>,
    blocks: Vec<PreparedBlock>,
    /// Probability of taking an available block move instead of a
    /// single-site update.
    pub mix_ratio: f64,
}

impl SamplerSchedule {
    pub fn single_site(model: &DiscreteModel, evidence: &PartialAssignment) -> SamplerSchedule {
        let latent: Vec<VarId> = (0..model.num_vars()).filter(|&v| !evidence.contains(v)).collect();
        SamplerSchedule { plan: vec![None; latent.len()], latent, blocks: Vec::new(), mix_ratio: 1.0 }
    }

    /// Attaches each block to its anchor variable. Blocks containing
    /// evidence are dropped; a later block with an already claimed anchor is
    /// ignored.
    pub fn with_blocks(
        model: &DiscreteModel,
        evidence: &PartialAssignment,
        blocks: Vec<(Motif, MotifInstantiation)>,
        mix_ratio: f64,
    ) -> Result<SamplerSchedule> {
        if !(0.0..=1.0).contains(&mix_ratio) {
            return Err(Error::Schedule(format!("mix ratio {mix_ratio} outside [0, 1]")));
        }
        let mut s = SamplerSchedule::single_site(model, evidence);
        s.mix_ratio = mix_ratio;
        for (motif, inst) in blocks {
            if inst.b_vars.iter().any(|&v| evidence.contains(v)) {
                continue;
            }
            let Ok(pos) = s.latent.binary_search(&inst.anchor()) else { continue };
            if s.plan[pos].is_none() {
                s.plan[pos] = Some(s.blocks.len());
                s.blocks.push(PreparedBlock::new(model, motif, inst)?);
            }
        }
        Ok(s)
    }

    /// Every detected instantiation of the given motifs, anchored at its
    /// center; other variables fall back to single-site Gibbs.
    pub fn centered(
        model: &DiscreteModel,
        evidence: &PartialAssignment,
        motifs: &[Motif],
        mix_ratio: f64,
    ) -> Result<SamplerSchedule> {
        let mut blocks = Vec::new();
        for m in motifs {
            for inst in detect_instantiations(model, m, evidence)? {
                blocks.push((m.clone(), inst));
            }
        }
        SamplerSchedule::with_blocks(model, evidence, blocks, mix_ratio)
    }

    pub fn latent(&self) -> &[VarId] {
        &self.latent
    }

    pub fn blocks(&self) -> &[PreparedBlock] {
        &self.blocks
    }

    /// Block index planned for each latent variable.
    pub fn plan(&self) -> &[Option<usize>] {
        &self.plan
    }
}

/// How block moves are drawn.
#[derive(Clone, Copy)]
pub enum BlockKernel<'a> {
    Neural(&'a ProposalLibrary),
    Exact,
    Proposal(&'a dyn BlockProposal),
}

/// The network's proposal for `block` in the current state.
pub fn neural_proposal(block: &PreparedBlock, library: &ProposalLibrary, states: &[usize]) -> Result<MixtureProposal> {
    let entry = library
        .get_by_tag(&block.tag)
        .ok_or_else(|| Error::Schedule(format!("no trained proposal for motif {:?}", block.tag)))?;
    entry.params.forward(&block.encode(states)?)
}

/// One neural block move with MH correction.
pub fn neural_block_step(
    model: &DiscreteModel,
    state: &mut ChainState,
    block: &PreparedBlock,
    library: &ProposalLibrary,
) -> Result<crate::samplers::ProposalOutcome> {
    let q = neural_proposal(block, library, state.states())?;
    let current: Vec<usize> = block.inst.b_vars.iter().map(|&v| state.states()[v]).collect();
    let (proposed, log_q_forward) = q.sample_discrete(&mut state.rng);
    let log_q_reverse = q.log_density_discrete(&current)?;
    mh_apply(model, state, &block.inst.b_vars, ProposedMove { states: proposed, log_q_forward, log_q_reverse })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Neural,
    Exact,
    Single,
}

impl MoveKind {
    fn as_str(self) -> &'static str {
        match self {
            MoveKind::Neural => "neural",
            MoveKind::Exact => "exact",
            MoveKind::Single => "single",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoveRecord {
    pub epoch: u64,
    pub wall_ns: u64,
    pub kind: MoveKind,
    pub block_id: Option<usize>,
    pub accepted: bool,
    pub log_joint: f64,
}

/// Cumulative state counts after `epoch` completed epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub wall_ns: u64,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub epochs: u64,
    pub wall_cap: Option<Duration>,
    /// Snapshot counts every this many epochs (0 = never by epoch).
    pub checkpoint_every: u64,
    /// Also snapshot whenever this much time passed since the last one.
    pub checkpoint_interval: Option<Duration>,
    pub record_moves: bool,
    pub record_samples: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            epochs: 1000,
            wall_cap: None,
            checkpoint_every: 1,
            checkpoint_interval: None,
            record_moves: false,
            record_samples: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MoveStats {
    pub single: u64,
    pub block_proposed: u64,
    pub block_accepted: u64,
    pub flagged: u64,
}

impl MoveStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.block_proposed == 0 {
            f64::NAN
        } else {
            self.block_accepted as f64 / self.block_proposed as f64
        }
    }
}

/// What a run produced. Marginal information is kept as cumulative state
/// counts at checkpoints; checkpoint 0 is the empty count before sampling.
#[derive(Clone, Debug)]
pub struct Trace {
    pub cards: Vec<usize>,
    offsets: Vec<usize>,
    pub initial: Vec<usize>,
    pub final_state: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
    pub moves: Vec<MoveRecord>,
    pub samples: Vec<Vec<usize>>,
    pub stats: MoveStats,
    pub epochs: u64,
    pub wall_ns: u64,
}

impl Trace {
    fn new(cards: &[usize], initial: Vec<usize>) -> Trace {
        let mut offsets = Vec::with_capacity(cards.len() + 1);
        let mut acc = 0;
        for &k in cards {
            offsets.push(acc);
            acc += k;
        }
        offsets.push(acc);
        Trace {
            cards: cards.to_vec(),
            checkpoints: vec![Checkpoint { epoch: 0, wall_ns: 0, counts: vec![0; acc] }],
            offsets,
            final_state: initial.clone(),
            initial,
            moves: Vec::new(),
            samples: Vec::new(),
            stats: MoveStats::default(),
            epochs: 0,
            wall_ns: 0,
        }
    }

    /// Marginal estimate from the counts between two checkpoints.
    pub fn marginals_between(&self, from: &Checkpoint, to: &Checkpoint) -> Result<Marginals> {
        let n = to.epoch.checked_sub(from.epoch).filter(|&n| n > 0).ok_or_else(|| {
            Error::Usage(format!("no samples between epochs {} and {}", from.epoch, to.epoch))
        })? as f64;
        Ok(Marginals::new(
            (0..self.cards.len())
                .map(|v| {
                    (self.offsets[v]..self.offsets[v + 1])
                        .map(|i| (to.counts[i] - from.counts[i]) as f64 / n)
                        .collect()
                })
                .collect(),
        ))
    }

    /// Running estimates from the start of sampling, one per checkpoint
    /// after the first.
    pub fn running_marginals(&self) -> impl Iterator<Item = (&Checkpoint, Marginals)> + '_ {
        let first = &self.checkpoints[0];
        self.checkpoints[1..]
            .iter()
            .map(move |c| (c, self.marginals_between(first, c).expect("checkpoints advance")))
    }

    /// Trace CSV: `epoch,wall_ns,move_kind,block_id,accepted,log_joint`.
    pub fn write_moves_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "wall_ns", "move_kind", "block_id", "accepted", "log_joint"])?;
        for m in &self.moves {
            out.write_record([
                m.epoch.to_string(),
                m.wall_ns.to_string(),
                m.kind.as_str().to_string(),
                m.block_id.map_or(String::new(), |b| b.to_string()),
                (m.accepted as u8).to_string(),
                m.log_joint.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Empirical marginals after discarding the first `burn_in` fraction of
/// epochs (rounded down to the nearest checkpoint).
pub fn estimate_marginals(trace: &Trace, burn_in: f64) -> Result<Marginals> {
    if !(0.0..=1.0).contains(&burn_in) {
        return Err(Error::Usage(format!("burn-in fraction {burn_in} outside [0, 1]")));
    }
    let last = trace.checkpoints.last().unwrap();
    let cut = (burn_in * last.epoch as f64).floor() as u64;
    let from = trace.checkpoints.iter().rev().find(|c| c.epoch <= cut).unwrap();
    trace.marginals_between(from, last)
}

/// Runs one chain. The chain's randomness is stream `chain` of `seed`.
pub fn run_inference(
    model: &DiscreteModel,
    evidence: &PartialAssignment,
    schedule: &SamplerSchedule,
    kernel: BlockKernel<'_>,
    opts: &RunOptions,
    seed: u64,
    chain: u64,
) -> Result<Trace> {
    if let BlockKernel::Neural(lib) = kernel {
        for b in &schedule.blocks {
            if lib.get_by_tag(&b.tag).is_none() {
                return Err(Error::Schedule(format!("no trained proposal for motif {:?}", b.tag)));
            }
        }
    }
    let init = initialize(model, evidence, &mut rng::stream(seed, Purpose::Init, chain))?;
    let mut state = ChainState::new(init, rng::stream(seed, Purpose::Chain, chain));
    run_from(model, schedule, kernel, opts, &mut state)
}

/// Runs epochs from a given chain state.
pub fn run_from(
    model: &DiscreteModel,
    schedule: &SamplerSchedule,
    kernel: BlockKernel<'_>,
    opts: &RunOptions,
    state: &mut ChainState,
) -> Result<Trace> {
    let mut trace = Trace::new(model.cards(), state.states().to_vec());
    let start = Instant::now();
    let mut last_snapshot = Duration::ZERO;
    let mut counts = trace.checkpoints[0].counts.clone();
    for epoch in 1..=opts.epochs {
        for (i, &v) in schedule.latent.iter().enumerate() {
            let block = schedule.plan[i].filter(|_| schedule.mix_ratio >= 1.0 || state.rng.random::<f64>() < schedule.mix_ratio);
            let (kind, accepted) = match block {
                None => {
                    gibbs_update(model, state.assignment.states_mut(), v, &mut state.rng)?;
                    trace.stats.single += 1;
                    (MoveKind::Single, true)
                }
                Some(bi) => {
                    let b = &schedule.blocks[bi];
                    trace.stats.block_proposed += 1;
                    let (kind, accepted) = match kernel {
                        BlockKernel::Exact => {
                            exact_block_gibbs_step(model, &b.inst.b_vars, state)?;
                            (MoveKind::Exact, true)
                        }
                        BlockKernel::Neural(lib) => {
                            let o = neural_block_step(model, state, b, lib)?;
                            trace.stats.flagged += o.flagged as u64;
                            (MoveKind::Neural, o.accepted)
                        }
                        BlockKernel::Proposal(p) => {
                            let o = mh_step(model, state, &b.inst.b_vars, p)?;
                            trace.stats.flagged += o.flagged as u64;
                            (MoveKind::Neural, o.accepted)
                        }
                    };
                    trace.stats.block_accepted += accepted as u64;
                    (kind, accepted)
                }
            };
            if opts.record_moves {
                trace.moves.push(MoveRecord {
                    epoch,
                    wall_ns: start.elapsed().as_nanos() as u64,
                    kind,
                    block_id: block,
                    accepted,
                    log_joint: model.log_joint_states(state.states()).to_f64(),
                });
            }
        }
        state.epoch += 1;
        for (v, &s) in state.states().iter().enumerate() {
            counts[trace.offsets[v] + s] += 1;
        }
        if opts.record_samples {
            trace.samples.push(state.states().to_vec());
        }
        let elapsed = start.elapsed();
        let capped = opts.wall_cap.is_some_and(|cap| elapsed >= cap);
        let by_epoch = opts.checkpoint_every > 0 && epoch % opts.checkpoint_every == 0;
        let by_time = opts.checkpoint_interval.is_some_and(|d| elapsed - last_snapshot >= d);
        trace.epochs = epoch;
        if by_epoch || by_time || capped || epoch == opts.epochs {
            last_snapshot = elapsed;
            trace.checkpoints.push(Checkpoint { epoch, wall_ns: elapsed.as_nanos() as u64, counts: counts.clone() });
        }
        if capped {
            break;
        }
    }
    trace.wall_ns = start.elapsed().as_nanos() as u64;
    trace.final_state = state.states().to_vec();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdn::MdnParams;
    use crate::model::generate::{grid_bn, CptPrior, GridShape};
    use crate::motifs::{block_motif, grid_motif};
    use crate::oracle::enumerate_marginals;
    use crate::samplers::gibbs_sweep;

    fn grid(n: usize, seed: u64, prior: CptPrior) -> DiscreteModel {
        grid_bn(GridShape::new(n, n), 2, &prior, &mut rng::seeded(seed)).unwrap()
    }

    #[test]
    fn no_blocks_means_plain_gibbs() {
        let m = grid(3, 1, CptPrior::TRAINING);
        let ev = PartialAssignment::new();
        let lib = ProposalLibrary::new();
        let sched = SamplerSchedule::centered(&m, &ev, &[grid_motif()], 1.0).unwrap();
        assert!(sched.blocks().is_empty());
        let opts = RunOptions { epochs: 50, record_samples: true, ..RunOptions::default() };
        let t = run_inference(&m, &ev, &sched, BlockKernel::Neural(&lib), &opts, 5, 0).unwrap();
        let init = initialize(&m, &ev, &mut rng::stream(5, Purpose::Init, 0)).unwrap();
        let mut st = ChainState::new(init, rng::stream(5, Purpose::Chain, 0));
        let order: Vec<VarId> = (0..9).collect();
        for s in &t.samples {
            gibbs_sweep(&m, &mut st, &order).unwrap();
            assert_eq!(s.as_slice(), st.states());
        }
    }

    #[test]
    fn zero_epochs_keeps_initial_state() {
        let m = grid(3, 2, CptPrior::TRAINING);
        let ev = PartialAssignment::new();
        let sched = SamplerSchedule::single_site(&m, &ev);
        let opts = RunOptions { epochs: 0, ..RunOptions::default() };
        let t = run_inference(&m, &ev, &sched, BlockKernel::Exact, &opts, 1, 0).unwrap();
        assert_eq!(t.checkpoints.len(), 1);
        assert_eq!(t.final_state, t.initial);
        assert!(matches!(estimate_marginals(&t, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn every_latent_variable_is_updated_each_epoch() {
        let m = grid(7, 3, CptPrior::TRAINING);
        let mut ev = PartialAssignment::new();
        ev.insert(24, 1);
        let sched = SamplerSchedule::centered(&m, &ev, &[grid_motif()], 1.0).unwrap();
        assert_eq!(sched.latent().len(), 48);
        // Every 3×3 block of a 7×7 grid contains the centre variable.
        assert_eq!(sched.blocks().len(), 0);
        let ev = PartialAssignment::new();
        let sched = SamplerSchedule::centered(&m, &ev, &[grid_motif()], 1.0).unwrap();
        assert_eq!(sched.blocks().len(), 9);
        let opts = RunOptions { epochs: 3, record_moves: true, ..RunOptions::default() };
        let t = run_inference(&m, &ev, &sched, BlockKernel::Exact, &opts, 2, 0).unwrap();
        assert_eq!(t.moves.len(), 3 * 49);
        assert_eq!(t.stats.single + t.stats.block_proposed, 3 * 49);
        assert_eq!(t.stats.block_proposed, 27);
    }

    #[test]
    fn missing_library_entry_is_a_schedule_error() {
        let m = grid(5, 4, CptPrior::TRAINING);
        let ev = PartialAssignment::new();
        let sched = SamplerSchedule::centered(&m, &ev, &[grid_motif()], 1.0).unwrap();
        let lib = ProposalLibrary::new();
        let r = run_inference(&m, &ev, &sched, BlockKernel::Neural(&lib), &RunOptions::default(), 1, 0);
        assert!(matches!(r, Err(Error::Schedule(_))));
    }

    #[test]
    fn wrong_layout_rejected() {
        let motif = grid_motif();
        let params = MdnParams::init(motif.mdn_config(), &mut rng::seeded(1));
        let mut lib = ProposalLibrary::new();
        assert!(matches!(lib.insert_loaded(motif.clone(), params.clone(), "grid9/in106/out120/v0"), Err(Error::Version(_))));
        let chain = crate::motifs::chain_motif(2, 2).unwrap();
        assert!(matches!(lib.insert(chain, params), Err(Error::Version(_))));
    }

    #[test]
    fn reverse_density_uses_the_same_proposal() {
        let m = grid(5, 6, CptPrior::TRAINING);
        let ev = PartialAssignment::new();
        let motif = grid_motif();
        let mut lib = ProposalLibrary::new();
        lib.insert(motif.clone(), MdnParams::init(motif.mdn_config(), &mut rng::seeded(2))).unwrap();
        let sched = SamplerSchedule::centered(&m, &ev, &[motif], 1.0).unwrap();
        let b = &sched.blocks()[0];
        let init = initialize(&m, &ev, &mut rng::seeded(3)).unwrap();
        let mut st = ChainState::new(init, rng::seeded(4));
        for _ in 0..20 {
            let before = neural_proposal(b, &lib, st.states()).unwrap().fingerprint();
            let o = neural_block_step(&m, &mut st, b, &lib).unwrap();
            let after = neural_proposal(b, &lib, st.states()).unwrap().fingerprint();
            assert_eq!(before, after, "accepted = {}", o.accepted);
        }
    }

    #[test]
    fn random_network_chain_matches_oracle() {
        let m = grid(3, 7, CptPrior::new(0.0, [1.0, 1.0]).unwrap());
        let mut ev = PartialAssignment::new();
        ev.insert(8, 1);
        let (motif, inst) = block_motif(&m, &[0, 1, 3, 4]).unwrap();
        let mut lib = ProposalLibrary::new();
        lib.insert(motif.clone(), MdnParams::init(motif.mdn_config(), &mut rng::seeded(8))).unwrap();
        let sched = SamplerSchedule::with_blocks(&m, &ev, vec![(motif, inst)], 1.0).unwrap();
        assert_eq!(sched.blocks().len(), 1);
        let opts = RunOptions { epochs: 40_000, checkpoint_every: 0, ..RunOptions::default() };
        let t = run_inference(&m, &ev, &sched, BlockKernel::Neural(&lib), &opts, 9, 0).unwrap();
        let est = estimate_marginals(&t, 0.1).unwrap();
        let truth = enumerate_marginals(&m, &ev).unwrap();
        let worst = est.tv_per_var(&truth).into_iter().fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
        assert!(t.stats.block_accepted > 0);
    }
}
