//! Acceptance criteria, one line each.
//!
//! Trained parameters are cached under `target/blockmc-cache/`, keyed by a
//! hash of the training job; training is deterministic, so a cached file is
//! exactly what a fresh run would produce. Set `ACCEPTANCE_ONLY=3,4` to run
//! a subset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use blockmc::gmm::{self, GmmSampler, GmmSpec, GmmState, NeuralPairProposal};
use blockmc::harness::{EvidenceSource, Experiment, ExperimentConfig, ModelSource, ProposalRef, SamplerKind};
use blockmc::logprob::log_sum_exp_f64;
use blockmc::mdn::{grad_nll, io as params_io, Head, HeadValue, MdnConfig, MdnParams, TrainHyper};
use blockmc::model::generate::{chain_mrf, grid_bn, random_bn, random_evidence, CptPrior, GridShape, PotentialPrior};
use blockmc::model::{DiscreteModel, PartialAssignment};
use blockmc::motifs::{block_motif, chain_motif, encode_input, grid_motif, InstantiationDistribution};
use blockmc::neural::{estimate_marginals, run_inference, BlockKernel, ProposalLibrary, RunOptions, SamplerSchedule};
use blockmc::oracle::{enumerate_marginals, sample_exact, variable_elimination_marginals, VeOptions};
use blockmc::rng::{self, Purpose};
use blockmc::samplers::{initialize, mh_step, unflatten, ChainState, ExactBlockProposal};
use blockmc::train::{evaluate_kl, train_proposal, KlSummary, TrainJob};
use rand::Rng;

/// Optimizer steps (batch 256) for the grid proposal.
const GRID_STEPS: usize = 60_000;
/// Optimizer steps (batch 256) for the mixture pair proposal.
const GMM_STEPS: usize = 40_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn cache_dir() -> PathBuf {
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target"));
    let dir = target.join("blockmc-cache");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fnv(text: &str) -> u64 {
    text.bytes().fold(0xcbf29ce484222325, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Loads or trains, then caches.
fn cached(name: &str, key: &str, layout: &str, train: impl FnOnce() -> MdnParams) -> (MdnParams, PathBuf) {
    let path = cache_dir().join(format!("{name}-{:016x}.bin", fnv(key)));
    if let Ok((p, _)) = params_io::load(&path, Some(layout)) {
        return (p, path);
    }
    eprintln!("  training {name} (no cached parameters at {})", path.display());
    let p = train();
    params_io::save(&path, &p, layout).unwrap();
    (p, path)
}

fn grid_job() -> TrainJob {
    TrainJob {
        motif: "grid9".into(),
        cardinality: 2,
        distribution: InstantiationDistribution::Grid { prior: CptPrior::TRAINING },
        hyper: TrainHyper { steps: GRID_STEPS, ..TrainHyper::default() },
        seed: 1,
        eval_every: 0,
        eval_instantiations: 0,
    }
}

fn grid_params() -> (MdnParams, PathBuf) {
    let job = grid_job();
    let key = serde_json::to_string(&(&job.motif, &job.distribution, &job.hyper, job.seed)).unwrap();
    let motif = grid_motif();
    cached("grid9", &key, &motif.layout_tag(), || train_proposal(&motif, &job).unwrap().0)
}

fn gmm_params() -> (MdnParams, PathBuf) {
    let spec = GmmSpec::default();
    let hyper = TrainHyper { steps: GMM_STEPS, ..TrainHyper::default() };
    let key = serde_json::to_string(&(&spec, &hyper, 7u64)).unwrap();
    cached("gmm-pair", &key, &spec.layout_tag(), || gmm::train_pair_proposal(&spec, &hyper, 7, |_, _| {}).unwrap().0)
}

fn c1_oracle_soundness() -> Outcome {
    let mut worst = 0.0f64;
    let determs = [0.0, 0.5, 0.9];
    for i in 0..100u64 {
        let mut r = rng::stream(i, Purpose::ModelGen, 100);
        let prior = CptPrior::new(determs[i as usize % 3], [0.5, 0.5]).unwrap();
        let n = r.random_range(6..=12);
        let model = random_bn(n, 3, &prior, &mut r).unwrap();
        let ev = random_evidence(&model, r.random_range(0..=2), &mut r).unwrap();
        let a = enumerate_marginals(&model, &ev).unwrap();
        let b = variable_elimination_marginals(&model, &ev, &VeOptions::default()).unwrap();
        worst = worst.max(a.max_abs_diff(&b));
    }
    outcome(worst <= 1e-9, format!("max |enumeration - VE| over 100 models = {worst:.2e} (tol 1e-9)"))
}

fn c2_stationarity() -> Outcome {
    let prior = CptPrior::new(0.0, [1.0, 1.0]).unwrap();
    let shape = GridShape::new(3, 3);
    let steps = 1_000_000u64;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for m in 0..5u64 {
        let model = grid_bn(shape, 2, &prior, &mut rng::stream(m, Purpose::ModelGen, 200)).unwrap();
        let ev = random_evidence(&model, 2, &mut rng::stream(m, Purpose::ModelGen, 201)).unwrap();
        let truth = variable_elimination_marginals(&model, &ev, &VeOptions::default()).unwrap();
        let block: Vec<usize> = [0, 1, 3, 4].into_iter().filter(|&v| !ev.contains(v)).collect();
        let (motif, inst) = block_motif(&model, &block).unwrap();
        let params = MdnParams::init(motif.mdn_config(), &mut rng::stream(m, Purpose::ParamInit, 200));
        let mut lib = ProposalLibrary::new();
        lib.insert(motif.clone(), params).unwrap();
        let blocked = SamplerSchedule::with_blocks(&model, &ev, vec![(motif, inst)], 1.0).unwrap();
        let single = SamplerSchedule::single_site(&model, &ev);
        let epochs = steps / single.latent().len() as u64;
        let opts = RunOptions { epochs, checkpoint_every: epochs / 10, ..RunOptions::default() };
        let runs: [(&str, &SamplerSchedule, BlockKernel); 3] = [
            ("gibbs", &single, BlockKernel::Exact),
            ("block-exact", &blocked, BlockKernel::Exact),
            ("neural", &blocked, BlockKernel::Neural(&lib)),
        ];
        for (name, sched, kernel) in runs {
            for seed in 0..5u64 {
                let trace = run_inference(&model, &ev, sched, kernel, &opts, 1000 * m + seed, 0).unwrap();
                let est = estimate_marginals(&trace, 0.1).unwrap();
                let tv = est.tv_per_var(&truth).into_iter().fold(0.0, f64::max);
                let w = worst.entry(name).or_insert(0.0);
                *w = w.max(tv);
            }
        }
    }
    let pass = worst.values().all(|&w| w <= 0.02);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.4}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("worst per-variable TV over 5 models x 5 seeds: {detail} (tol 0.02)"))
}

fn c3_gibbs_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut missing = 0;
    for i in 0..1000u64 {
        let mut r = rng::stream(i, Purpose::ModelGen, 300);
        let prior = CptPrior::new(0.3, [0.5, 0.5]).unwrap();
        let model: DiscreteModel = if i % 2 == 0 {
            grid_bn(GridShape::new(4, 4), 2, &prior, &mut r).unwrap()
        } else {
            random_bn(10, 3, &prior, &mut r).unwrap()
        };
        let ev = random_evidence(&model, 2, &mut r).unwrap();
        let latent: Vec<usize> = (0..model.num_vars()).filter(|&v| !ev.contains(v)).collect();
        let size = r.random_range(1..=4);
        let block: Vec<usize> = rand::seq::index::sample(&mut r, latent.len(), size).into_iter().map(|k| latent[k]).collect();
        let init = initialize(&model, &ev, &mut r).unwrap();
        let mut state = ChainState::new(init, rng::stream(i, Purpose::Chain, 300));
        let o = mh_step(&model, &mut state, &block, &ExactBlockProposal).unwrap();
        match o.log_alpha.value() {
            Some(la) => worst = worst.max(la.abs()),
            None => missing += 1,
        }
    }
    outcome(worst <= 1e-9 && missing == 0, format!("max |log alpha| over 1000 cases = {worst:.2e}, zero-alpha cases {missing} (tol 1e-9)"))
}

fn c4_gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut floor_checked = 0;
    for cfg_i in 0..20u64 {
        let mut r = rng::stream(cfg_i, Purpose::Misc, 400);
        let input_dim = r.random_range(3..=8);
        let mut heads = Vec::new();
        for h in 0..r.random_range(1..=3) {
            heads.push(if (h + cfg_i as usize) % 2 == 0 {
                Head::Categorical { cardinality: r.random_range(2..=4) }
            } else {
                Head::Gaussian { dim: r.random_range(1..=3) }
            });
        }
        if !heads.iter().any(|h| matches!(h, Head::Gaussian { .. })) {
            heads.push(Head::Gaussian { dim: 2 });
        }
        let cfg = MdnConfig::sized(input_dim, heads.clone(), r.random_range(4..=6), 4.0);
        let mut params = MdnParams::init(cfg.clone(), &mut r);
        // Push one Gaussian variance of mixture component 0 deep below the floor.
        let mut off = cfg.n_mixtures;
        let mut floor_row = None;
        for h in &heads {
            if let Head::Gaussian { dim } = h {
                floor_row = Some(off + dim);
                break;
            }
            off += h.raw_len();
        }
        let floor_row = floor_row.unwrap();
        params.biases[2][floor_row] = -40.0;
        params.weights[2].row_mut(floor_row).fill(0.0);
        let batch: Vec<(Vec<f64>, Vec<HeadValue>)> = (0..4)
            .map(|_| {
                let x: Vec<f64> = (0..input_dim).map(|_| r.random_range(-2.0..2.0)).collect();
                let t = heads
                    .iter()
                    .map(|h| match h {
                        Head::Categorical { cardinality } => HeadValue::Category(r.random_range(0..*cardinality)),
                        Head::Gaussian { dim } => HeadValue::Point((0..*dim).map(|_| r.random_range(-1.0..1.0)).collect()),
                    })
                    .collect();
                (x, t)
            })
            .collect();
        let (_, g) = grad_nll(&params, &batch).unwrap();
        let analytic = g.flat();
        let base = params.flat();
        let n = base.len();
        let w2_len = params.weights[0].len() + params.weights[1].len() + params.weights[2].len();
        let floor_bias = w2_len + params.biases[0].len() + params.biases[1].len() + floor_row;
        let mut coords: Vec<usize> = (0..63).map(|_| r.random_range(0..n)).collect();
        coords.push(floor_bias);
        let mut floor_zero = false;
        for &c in &coords {
            let h = 1e-5 * base[c].abs().max(1.0);
            let mut p = params.clone();
            let mut f = base.clone();
            f[c] = base[c] + h;
            p.set_flat(&f).unwrap();
            let up = grad_nll(&p, &batch).unwrap().0;
            f[c] = base[c] - h;
            p.set_flat(&f).unwrap();
            let down = grad_nll(&p, &batch).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[c] - numeric).abs() / analytic[c].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            if c == floor_bias {
                floor_zero = analytic[c] == 0.0 && numeric == 0.0;
            }
        }
        floor_checked += floor_zero as usize;
    }
    outcome(
        worst < 1e-4 && floor_checked == 20,
        format!("max relative error over 20 configs x 64 coords = {worst:.2e} (tol 1e-4); floor-active heads with zero gradient: {floor_checked}/20"),
    )
}

fn c5_loss_consistency() -> Outcome {
    let model = chain_mrf(4, 2, &PotentialPrior::default(), &mut rng::stream(5, Purpose::ModelGen, 500)).unwrap();
    let motif = chain_motif(2, 2).unwrap();
    let inst = blockmc::motifs::detect_instantiations(&model, &motif, &PartialAssignment::new()).unwrap().remove(0);
    let params = MdnParams::init(motif.mdn_config(), &mut rng::stream(5, Purpose::ParamInit, 500));
    let lq = |c: &[usize], b: &[usize]| -> f64 {
        let x = encode_input(&motif, &model, &inst, c).unwrap();
        params.forward(&x).unwrap().log_density_discrete(b).unwrap()
    };
    // Enumerated E_C[KL] + E_C[H] = E[-log q(B | C)] under the joint.
    let cards = model.cards().to_vec();
    let joint: Vec<f64> = (0..16).map(|i| model.log_joint_states(&unflatten(i, &cards)).to_f64()).collect();
    let z = log_sum_exp_f64(&joint);
    let mut expected = 0.0;
    for (i, lj) in joint.iter().enumerate() {
        let s = unflatten(i, &cards);
        let c: Vec<usize> = inst.c_vars.iter().map(|&v| s[v]).collect();
        let b: Vec<usize> = inst.b_vars.iter().map(|&v| s[v]).collect();
        expected += (lj - z).exp() * -lq(&c, &b);
    }
    let n = 100_000;
    let mut r = rng::stream(5, Purpose::TrainSample, 500);
    let (mut sum, mut sq) = (0.0, 0.0);
    let mut table = BTreeMap::new();
    for _ in 0..n {
        let s = sample_exact(&model, &PartialAssignment::new(), &mut r).unwrap();
        let c: Vec<usize> = inst.c_vars.iter().map(|&v| s[v]).collect();
        let b: Vec<usize> = inst.b_vars.iter().map(|&v| s[v]).collect();
        let v = *table.entry((c.clone(), b.clone())).or_insert_with(|| -lq(&c, &b));
        sum += v;
        sq += v * v;
    }
    let mean = sum / n as f64;
    let sd = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    let dev = (mean - expected).abs();
    outcome(dev <= 3.0 * sd, format!("empirical {mean:.5} vs enumerated {expected:.5}; |diff| {dev:.2e} <= 3 sigma = {:.2e}", 3.0 * sd))
}

fn c6_training_quality() -> Outcome {
    let start = Instant::now();
    let (params, _) = grid_params();
    let motif = grid_motif();
    let trained = start.elapsed();
    let eval = |p: f64| -> KlSummary {
        let dist = InstantiationDistribution::grid(p, [0.5, 0.5]).unwrap();
        KlSummary::from_values(&evaluate_kl(&params, &motif, &dist, 1000, 6006).unwrap())
    };
    let base = eval(0.05);
    let hard = eval(0.8);
    let pass = base.median <= 0.5 && base.frac_at_most_1 >= 0.8 && hard.median <= 2.0 * base.median;
    outcome(
        pass,
        format!(
            "p_determ 0.05: median {:.3}, {:.1}% <= 1 nat; p_determ 0.8: median {:.3} ({:.2}x); {} steps x 256, load/train {:.0}s",
            base.median,
            100.0 * base.frac_at_most_1,
            hard.median,
            hard.median / base.median,
            GRID_STEPS,
            trained.as_secs_f64()
        ),
    )
}

struct GridRuns {
    gibbs_epoch: f64,
    mixed_epoch: f64,
    exact_epoch: f64,
    gibbs_time: f64,
    mixed_time: f64,
    exact_time: f64,
}

fn grid_comparisons() -> Vec<GridRuns> {
    let (_, params_path) = grid_params();
    let mut out = Vec::new();
    for m in 1..=10u64 {
        let model = ModelSource::Grid { rows: 8, cols: 8, p_determ: 0.5, alpha: [0.5, 0.5], seed: m };
        let base = |sampler: SamplerKind| {
            let mut c = ExperimentConfig::new(model.clone(), sampler);
            c.evidence = EvidenceSource::Random { count: 6, seed: m };
            c.seed = m;
            if sampler != SamplerKind::Gibbs {
                c.motifs = vec!["grid9".into()];
                c.mix_ratio = Some(0.5);
            }
            if sampler == SamplerKind::Mixed {
                c.proposals = vec![ProposalRef { motif: "grid9".into(), params: params_path.clone() }];
            }
            c
        };
        let run = |sampler: SamplerKind, timed: bool| -> f64 {
            let mut c = base(sampler);
            if timed {
                c.epochs = 0;
                c.wall_cap_secs = Some(60.0);
                c.checkpoint_every = 0;
                c.checkpoint_interval_secs = Some(0.05);
            } else {
                c.epochs = 500;
            }
            let c = c.materialize("acceptance").unwrap();
            let exp = Experiment::prepare(c, Path::new("/")).unwrap();
            let (_, r) = exp.run_chain(0).unwrap();
            if timed {
                r.integral_secs
            } else {
                r.integral_epochs
            }
        };
        let g = GridRuns {
            gibbs_epoch: run(SamplerKind::Gibbs, false),
            mixed_epoch: run(SamplerKind::Mixed, false),
            exact_epoch: run(SamplerKind::BlockExact, false),
            gibbs_time: run(SamplerKind::Gibbs, true),
            mixed_time: run(SamplerKind::Mixed, true),
            exact_time: run(SamplerKind::BlockExact, true),
        };
        eprintln!(
            "  model {m}: epochs gibbs {:.2} mixed {:.2} exact {:.2}; seconds gibbs {:.3} mixed {:.3} exact {:.3}",
            g.gibbs_epoch, g.mixed_epoch, g.exact_epoch, g.gibbs_time, g.mixed_time, g.exact_time
        );
        out.push(g);
    }
    out
}

fn c7_mixing(runs: &[GridRuns]) -> Outcome {
    let by_epoch = runs.iter().filter(|r| r.mixed_epoch < r.gibbs_epoch).count();
    let by_time = runs.iter().filter(|r| r.mixed_time < r.gibbs_time).count();
    outcome(
        by_epoch >= 8 && by_time >= 7,
        format!("mixed beats Gibbs on error-vs-epoch in {by_epoch}/10 (need 8), error-vs-time in {by_time}/10 (need 7)"),
    )
}

fn c8_exact_ordering(runs: &[GridRuns]) -> Outcome {
    let epoch_wins = runs.iter().filter(|r| r.exact_epoch < r.mixed_epoch).count();
    let time_losses = runs.iter().filter(|r| r.exact_time > r.mixed_time).count();
    let both = runs.iter().filter(|r| r.exact_epoch < r.mixed_epoch && r.exact_time > r.mixed_time).count();
    outcome(
        both >= 7,
        format!("exact beats neural by epoch and loses by time on {both}/10 (need 7); by epoch {epoch_wins}/10, loses by time {time_losses}/10"),
    )
}

fn c9_gmm_exploration() -> Outcome {
    let (params, path) = gmm_params();
    let motif = GmmSpec::default();
    let (_, layout) = params_io::load(&path, None).unwrap();
    let proposal = NeuralPairProposal::new(motif, params, &layout).unwrap();
    let x = gmm::synthetic_clusters(60, 3, 2.0, 0.1, &mut rng::stream(9, Purpose::ModelGen, 900));
    let spec = GmmSpec::default();
    let (mut neural_ok, mut gibbs_ok) = (0, 0);
    let mut neural_distinct = Vec::new();
    let mut gibbs_changes = Vec::new();
    for run in 0..10u64 {
        let m_init = 1 + (run as usize % 8);
        let (t, _) = gmm::run_gmm(&spec, &x, GmmSampler::Neural, Some(&proposal), 10_000, m_init, 9, run).unwrap();
        neural_distinct.push(t.distinct_m());
        neural_ok += (t.distinct_m() >= 3) as usize;
        let (t, _) = gmm::run_gmm(&spec, &x, GmmSampler::Gibbs, None, 10_000, m_init, 9, run).unwrap();
        gibbs_changes.push(t.m_changes());
        gibbs_ok += (t.m_changes() <= 1) as usize;
    }
    outcome(
        neural_ok >= 8 && gibbs_ok >= 8,
        format!(
            "neural runs visiting >= 3 values of M: {neural_ok}/10 {neural_distinct:?}; Gibbs runs changing M at most once: {gibbs_ok}/10 {gibbs_changes:?}"
        ),
    )
}

fn c10_collapsed_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..200u64 {
        let mut r = rng::stream(i, Purpose::Gmm, 1000);
        let spec = GmmSpec { m: r.random_range(1..=3), n: r.random_range(1..=6), ..GmmSpec::default() };
        let (state, x) = gmm::sample_prior(&spec, &mut r);
        let collapsed = gmm::collapsed_log_likelihood(&spec, &state.mu, &state.v, &x).unwrap();
        let (m, n) = (spec.m, spec.n);
        let terms: Vec<f64> = (0..m.pow(n as u32))
            .map(|code| {
                let z = (0..n).map(|k| (code / m.pow(k as u32)) % m).collect();
                gmm::full_log_joint(&spec, &GmmState { z, ..state.clone() }, &x).unwrap()
            })
            .collect();
        worst = worst.max((log_sum_exp_f64(&terms) - collapsed).abs());
    }
    outcome(worst <= 1e-10, format!("max |collapsed - enumerated| over 200 states = {worst:.2e} (tol 1e-10)"))
}

/// Drops timing fields from JSON and `wall_ns` columns from CSV.
fn strip_timing(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let stripped = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            fn scrub(v: &mut serde_json::Value) {
                match v {
                    serde_json::Value::Object(m) => {
                        for k in ["wall_ns", "wall_secs", "integral_secs"] {
                            m.remove(k);
                        }
                        m.values_mut().for_each(scrub);
                    }
                    serde_json::Value::Array(a) => a.iter_mut().for_each(scrub),
                    _ => {}
                }
            }
            let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
            scrub(&mut v);
            v.to_string()
        }
        Some("csv") => {
            let mut lines = text.lines();
            let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
            let skip = header.iter().position(|h| *h == "wall_ns");
            text.lines()
                .map(|l| l.split(',').enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, f)| f).collect::<Vec<_>>().join(","))
                .collect::<Vec<_>>()
                .join("\n")
        }
        _ => return bytes,
    };
    stripped.into_bytes()
}

fn pipeline(dir: &Path) {
    let bin = env!("CARGO_BIN_EXE_blockmc");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "blockmc {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    };
    let d = |s: &str| dir.join(s).display().to_string();
    run(&["gen-model", "--kind", "grid", "--rows", "5", "--cols", "5", "--evidence", "2", "--seed", "4", "--out", &d("model")]);
    run(&["oracle", "--model", &d("model/model.uai"), "--evidence", &d("model/model.uai.evid"), "--out", &d("truth")]);
    let job = r#"{"motif": "grid9", "distribution": {"kind": "grid", "prior": {"p_determ": 0.05, "alpha": [0.5, 0.5]}},
                  "hyper": {"optimizer": {"kind": "adam", "lr": 0.001, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
                            "batch_size": 16, "steps": 5, "divergence_threshold": 1e6}, "seed": 2}"#;
    std::fs::write(dir.join("job.json"), job).unwrap();
    run(&["train", "--config", &d("job.json"), "--out", &d("trained")]);
    run(&["eval-kl", "--params", &d("trained/params.bin"), "--instantiations", "20", "--seed", "3", "--out", &d("kl")]);
    let exp = serde_json::json!({
        "model": {"kind": "file", "path": "model/model.uai"},
        "evidence": {"kind": "file", "path": "model/model.uai.evid"},
        "truth": "truth/marginals.MAR",
        "sampler": "mixed",
        "proposals": [{"motif": "grid9", "params": "trained/params.bin"}],
        "epochs": 200,
        "chains": 2,
        "seed": 5
    });
    std::fs::write(dir.join("exp.json"), exp.to_string()).unwrap();
    run(&["sample", "--config", &d("exp.json"), "--out", &d("mixed")]);
    run(&["sample", "--config", &d("exp.json"), "--sampler", "gibbs", "--out", &d("gibbs")]);
    run(&["gen-model", "--kind", "gmm", "--n", "60", "--seed", "4", "--out", &d("gmm_data")]);
    run(&["gmm", "train", "--steps", "3", "--seed", "1", "--out", &d("gmm_params")]);
    run(&[
        "gmm", "sample", "--data", &d("gmm_data/points.csv"), "--params", &d("gmm_params/params.bin"), "--steps", "50",
        "--runs", "2", "--seed", "2", "--out", &d("gmm_trace"),
    ]);
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn c11_reproducibility() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let fa = files(a.path());
    let mut differing = Vec::new();
    for f in &fa {
        let rel = f.strip_prefix(a.path()).unwrap();
        let g = b.path().join(rel);
        if !g.exists() || strip_timing(f) != strip_timing(&g) {
            differing.push(rel.display().to_string());
        }
    }
    outcome(
        differing.is_empty() && fa.len() == files(b.path()).len(),
        format!("{} output files compared across two runs; differing: {differing:?}", fa.len()),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let want = |i: usize| only.as_ref().is_none_or(|o| o.contains(&i));
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |i: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if want(i) {
            let t = Instant::now();
            let o = f();
            let el = t.elapsed();
            println!("criterion {i:>2} {name}: {} ({}; {:.1}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, el.as_secs_f64());
            results.push((i, name, o, el));
        }
    };
    record(1, "oracle soundness", &mut c1_oracle_soundness);
    record(2, "MH stationarity", &mut c2_stationarity);
    record(3, "Gibbs-as-MH identity", &mut c3_gibbs_identity);
    record(4, "MDN gradient fidelity", &mut c4_gradients);
    record(5, "loss/KL consistency", &mut c5_loss_consistency);
    record(6, "grid training quality", &mut c6_training_quality);
    let runs = if want(7) || want(8) { grid_comparisons() } else { Vec::new() };
    record(7, "mixing advantage", &mut || c7_mixing(&runs));
    record(8, "exact-block ordering", &mut || c8_exact_ordering(&runs));
    record(9, "mixture exploration", &mut c9_gmm_exploration);
    record(10, "collapsed likelihood", &mut c10_collapsed_equivalence);
    record(11, "reproducibility", &mut c11_reproducibility);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
