//! Meta-training of motif proposals and held-out KL evaluation.
//!
//! Every minibatch element draws a fresh instantiation from the
//! distribution, samples the fragment jointly, and asks the network for the
//! block given the conditioning values. Element `i` of step `t` uses random
//! stream `t * batch + i`, so the result does not depend on how many threads
//! produce samples.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::{optimize, HeadValue, MdnParams, TrainHyper};
use crate::model::PartialAssignment;
use crate::motifs::{draw_training_example, encode_input, sample_instantiation, Fragment, InstantiationDistribution, Motif};
use crate::oracle::{sample_exact, BlockConditional};
use crate::rng::{self, Purpose};
use crate::samplers::unflatten;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainJob {
    pub motif: String,
    #[serde(default = "default_cardinality")]
    pub cardinality: usize,
    pub distribution: InstantiationDistribution,
    #[serde(default)]
    pub hyper: TrainHyper,
    #[serde(default)]
    pub seed: u64,
    /// Steps between held-out KL evaluations; 0 disables them.
    #[serde(default)]
    pub eval_every: usize,
    #[serde(default = "default_eval_size")]
    pub eval_instantiations: usize,
}

fn default_cardinality() -> usize {
    2
}

fn default_eval_size() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
    pub frac_at_most_1: f64,
    /// Upper bin edges; the last bin is open.
    pub bin_edges: Vec<f64>,
    pub bin_counts: Vec<usize>,
}

pub const KL_BIN_EDGES: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

impl KlSummary {
    pub fn from_values(values: &[f64]) -> KlSummary {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let q = |p: f64| if n == 0 { f64::NAN } else { s[((n - 1) as f64 * p).round() as usize] };
        let mut bin_counts = vec![0; KL_BIN_EDGES.len() + 1];
        for &v in &s {
            bin_counts[KL_BIN_EDGES.iter().position(|&e| v <= e).unwrap_or(KL_BIN_EDGES.len())] += 1;
        }
        KlSummary {
            n,
            mean: s.iter().sum::<f64>() / n.max(1) as f64,
            median: if n == 0 {
                f64::NAN
            } else if n % 2 == 1 {
                s[n / 2]
            } else {
                0.5 * (s[n / 2 - 1] + s[n / 2])
            },
            p90: q(0.9),
            max: s.last().copied().unwrap_or(f64::NAN),
            frac_at_most_1: s.iter().filter(|&&v| v <= 1.0).count() as f64 / n.max(1) as f64,
            bin_edges: KL_BIN_EDGES.to_vec(),
            bin_counts,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub motif: String,
    pub layout: String,
    pub seed: u64,
    pub hyper: TrainHyper,
    pub samples_drawn: usize,
    pub final_loss: f64,
    pub wall_secs: f64,
    pub losses: Vec<f64>,
    pub kl_checkpoints: Vec<(usize, KlSummary)>,
}

impl TrainReport {
    pub fn write_loss_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss"])?;
        for (i, l) in self.losses.iter().enumerate() {
            out.write_record([i.to_string(), l.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// The minibatch for optimizer step `step`.
pub fn training_batch(
    motif: &Motif,
    dist: &InstantiationDistribution,
    seed: u64,
    step: usize,
    batch: usize,
) -> Result<Vec<(Vec<f64>, Vec<HeadValue>)>> {
    (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, Purpose::TrainSample, (step * batch + i) as u64);
            let (x, b) = draw_training_example(motif, dist, &mut r)?;
            Ok((x, b.into_iter().map(HeadValue::Category).collect()))
        })
        .collect()
}

/// Trains from the seeded initialization.
pub fn train_proposal(motif: &Motif, job: &TrainJob) -> Result<(MdnParams, TrainReport)> {
    let init = MdnParams::init(motif.mdn_config(), &mut rng::stream(job.seed, Purpose::ParamInit, 0));
    train_proposal_from(motif, job, init, |_, _| {})
}

/// Trains from given parameters, reporting `(step, loss)` after each step.
pub fn train_proposal_from(
    motif: &Motif,
    job: &TrainJob,
    init: MdnParams,
    mut progress: impl FnMut(usize, f64),
) -> Result<(MdnParams, TrainReport)> {
    if let Some(name) = job.distribution.motif_name() {
        if name != motif.name {
            return Err(Error::Precondition(format!("distribution yields {name}, job trains {}", motif.name)));
        }
    }
    motif.check_config(&init.config)?;
    if job.hyper.batch_size == 0 {
        return Err(Error::Precondition("batch size must be positive".into()));
    }
    let start = Instant::now();
    let mut checkpoints = Vec::new();
    let mut eval_err = None;
    let outcome = optimize(
        init,
        &job.hyper,
        |step| training_batch(motif, &job.distribution, job.seed, step, job.hyper.batch_size),
        |step, loss, params| {
            progress(step, loss);
            if job.eval_every > 0 && (step + 1) % job.eval_every == 0 && eval_err.is_none() {
                match evaluate_kl(params, motif, &job.distribution, job.eval_instantiations, job.seed ^ 0x5eed) {
                    Ok(v) => checkpoints.push((step + 1, KlSummary::from_values(&v))),
                    Err(e) => eval_err = Some(e),
                }
            }
        },
    )?;
    if let Some(e) = eval_err {
        return Err(e);
    }
    let report = TrainReport {
        motif: motif.name.clone(),
        layout: motif.layout_tag(),
        seed: job.seed,
        hyper: job.hyper,
        samples_drawn: job.hyper.steps * job.hyper.batch_size,
        final_loss: outcome.losses.last().copied().unwrap_or(f64::NAN),
        wall_secs: start.elapsed().as_secs_f64(),
        losses: outcome.losses,
        kl_checkpoints: checkpoints,
    };
    Ok((outcome.params, report))
}

/// `D(p || q)` between an exact block conditional and proposal log
/// densities over the same row-major block assignments.
pub fn kl_divergence(p: &BlockConditional, log_q: &[f64]) -> f64 {
    p.probs()
        .iter()
        .zip(log_q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &lq)| pi * (pi.ln() - lq))
        .sum::<f64>()
        .max(0.0)
}

/// KL of an arbitrary proposal. `log_q(fragment, c_values, input)` returns
/// log densities of every block assignment, row-major.
pub fn evaluate_kl_with<F>(motif: &Motif, dist: &InstantiationDistribution, n: usize, seed: u64, log_q: F) -> Result<Vec<f64>>
where
    F: Fn(&Fragment, &[usize], &[f64]) -> Result<Vec<f64>> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, Purpose::EvalSample, i as u64);
            let frag = sample_instantiation(dist, &mut r)?;
            let joint = if frag.model.is_directed() {
                frag.model.sample_prior(&mut r)?.into_states()
            } else {
                sample_exact(&frag.model, &PartialAssignment::new(), &mut r)?
            };
            let c: Vec<usize> = frag.inst.c_vars.iter().map(|&v| joint[v]).collect();
            let p = frag.inst.exact_conditional(&frag.model, &c)?;
            let x = encode_input(motif, &frag.model, &frag.inst, &c)?;
            let lq = log_q(&frag, &c, &x)?;
            Ok(kl_divergence(&p, &lq))
        })
        .collect()
}

/// Log densities of a network proposal over every block assignment.
pub fn proposal_log_table(params: &MdnParams, input: &[f64], cards: &[usize]) -> Result<Vec<f64>> {
    let q = params.forward(input)?;
    let size: usize = cards.iter().product();
    (0..size).map(|idx| q.log_density_discrete(&unflatten(idx, cards))).collect()
}

/// KL values of a trained network on `n` fresh instantiations.
pub fn evaluate_kl(
    params: &MdnParams,
    motif: &Motif,
    dist: &InstantiationDistribution,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    motif.check_config(&params.config)?;
    evaluate_kl_with(motif, dist, n, seed, |_, _, x| proposal_log_table(params, x, &motif.b_cards))
}
