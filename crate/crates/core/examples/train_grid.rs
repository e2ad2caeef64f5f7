//! Trains the grid proposal and prints held-out KL as training goes.
//!
//! `cargo run --release --example train_grid -- STEPS OUT_PATH`

use blockmc::mdn::{io, TrainHyper};
use blockmc::motifs::{grid_motif, InstantiationDistribution};
use blockmc::model::generate::CptPrior;
use blockmc::train::{train_proposal_from, TrainJob};
use blockmc::rng::{self, Purpose};

fn main() -> blockmc::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map_or(2000, |s| s.parse().unwrap());
    let out = args.get(2).cloned().unwrap_or_else(|| "grid9.bin".into());
    let motif = grid_motif();
    let job = TrainJob {
        motif: motif.name.clone(),
        cardinality: 2,
        distribution: InstantiationDistribution::Grid { prior: CptPrior::TRAINING },
        hyper: TrainHyper { steps, ..TrainHyper::default() },
        seed: 1,
        eval_every: 500,
        eval_instantiations: 200,
    };
    let init = blockmc::mdn::MdnParams::init(motif.mdn_config(), &mut rng::stream(job.seed, Purpose::ParamInit, 0));
    let start = std::time::Instant::now();
    let (params, report) = train_proposal_from(&motif, &job, init, |step, loss| {
        if step % 100 == 0 {
            eprintln!("step {step} loss {loss:.4} t={:.1}s", start.elapsed().as_secs_f64());
        }
    })?;
    for (step, s) in &report.kl_checkpoints {
        println!("step {step}: median KL {:.4}, mean {:.4}, <=1: {:.3}", s.median, s.mean, s.frac_at_most_1);
    }
    io::save(std::path::Path::new(&out), &params, &motif.layout_tag())?;
    Ok(())
}
