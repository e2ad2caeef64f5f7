use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blockmc::gmm::{self, GmmSampler, GmmSpec, NeuralPairProposal, PairProposal};
use blockmc::harness::{write_series_csv, EvidenceSource, Experiment, ExperimentConfig, ModelSource, SamplerKind};
use blockmc::mdn::{io as params_io, TrainHyper};
use blockmc::model::uai::{parse_uai, parse_uai_evidence, to_evidence_string, to_uai_string};
use blockmc::model::PartialAssignment;
use blockmc::motifs::{motif_by_name, InstantiationDistribution};
use blockmc::oracle::{variable_elimination_marginals, VeOptions};
use blockmc::rng::{self, Purpose};
use blockmc::train::{evaluate_kl, train_proposal, KlSummary, TrainJob};
use blockmc::{Error, Result};

#[derive(Parser)]
#[command(name = "blockmc", version, about = "Block MCMC with learned proposals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random model (and evidence) or synthetic mixture data.
    GenModel(GenModel),
    /// Exact marginals for a model and evidence.
    Oracle(Oracle),
    /// Train a motif proposal from a job file.
    Train(Train),
    /// Held-out KL of trained parameters.
    EvalKl(EvalKl),
    /// Run a sampling experiment and score it against exact marginals.
    Sample(Sample),
    /// Open-universe mixture experiments.
    Gmm(Gmm),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Grid,
    ChainMrf,
    ChainBn,
    Gmm,
}

#[derive(Args)]
struct GenModel {
    #[arg(long, value_enum, default_value = "grid")]
    kind: ModelKind,
    /// JSON `{"model": ..., "evidence": ...}`; overrides the shape flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    rows: usize,
    #[arg(long, default_value_t = 8)]
    cols: usize,
    /// Chain length or number of mixture points.
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    cardinality: usize,
    #[arg(long, default_value_t = 0.5)]
    p_determ: f64,
    #[arg(long, num_args = 2, default_values_t = [0.5, 0.5])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    evidence: usize,
    /// Mixture clusters.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    /// Distance between neighbouring cluster centres.
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Oracle {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    evidence: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalKl {
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value = "grid9")]
    motif: String,
    #[arg(long, default_value_t = 2)]
    cardinality: usize,
    /// Instantiation distribution JSON; defaults to random grid CPTs.
    #[arg(long)]
    distribution: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    p_determ: f64,
    #[arg(long, num_args = 2, default_values_t = [0.5, 0.5])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    instantiations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sample {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    wall_cap_secs: Option<f64>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    mix_ratio: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Gmm {
    #[command(subcommand)]
    action: GmmAction,
}

#[derive(Subcommand)]
enum GmmAction {
    /// Train the pair proposal on model draws (m = 8, n = 60).
    Train {
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run chains on a data file and write `(M, log likelihood)` traces.
    Sample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "neural")]
        sampler: String,
        /// Truncation level.
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 10)]
        runs: u64,
        /// Initial number of components; defaults to `1 + run mod m`.
        #[arg(long)]
        m_init: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn gen_model(a: GenModel) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    if let ModelKind::Gmm = a.kind {
        let pts = gmm::synthetic_clusters(
            a.n,
            a.clusters,
            a.separation,
            GmmSpec::default().sigma2,
            &mut rng::stream(a.seed, Purpose::ModelGen, 0),
        );
        gmm::write_points_csv(&pts, fs::File::create(a.out.join("points.csv"))?)?;
        return Ok(());
    }
    let (model_src, ev_src) = match &a.config {
        Some(p) => {
            #[derive(serde::Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Spec {
                model: ModelSource,
                #[serde(default)]
                evidence: EvidenceSource,
            }
            let text = fs::read_to_string(p)?;
            let s: Spec = serde_json::from_str(&text)
                .map_err(|e| Error::Config { path: p.display().to_string(), message: e.to_string() })?;
            (s.model, s.evidence)
        }
        None => {
            let alpha = [a.alpha[0], a.alpha[1]];
            let m = match a.kind {
                ModelKind::Grid => {
                    ModelSource::Grid { rows: a.rows, cols: a.cols, p_determ: a.p_determ, alpha, seed: a.seed }
                }
                ModelKind::ChainMrf => {
                    ModelSource::ChainMrf { n: a.n, cardinality: a.cardinality, log_scale: 1.0, seed: a.seed }
                }
                ModelKind::ChainBn => ModelSource::ChainBn { n: a.n, order: 2, p_determ: a.p_determ, alpha, seed: a.seed },
                ModelKind::Gmm => unreachable!(),
            };
            let e = if a.evidence > 0 {
                EvidenceSource::Random { count: a.evidence, seed: a.seed }
            } else {
                EvidenceSource::None
            };
            (m, e)
        }
    };
    let base = a.config.as_deref().and_then(Path::parent).unwrap_or(Path::new("."));
    let model = model_src.build(base)?;
    let ev = ev_src.build(&model, base)?;
    fs::write(a.out.join("model.uai"), to_uai_string(&model))?;
    fs::write(a.out.join("model.uai.evid"), to_evidence_string(&ev))?;
    write_json(&a.out.join("model.json"), &serde_json::json!({ "model": model_src, "evidence": ev_src }))?;
    Ok(())
}

fn oracle(a: Oracle) -> Result<()> {
    let model = parse_uai(&fs::read_to_string(&a.model)?)?;
    let ev = match &a.evidence {
        Some(p) => parse_uai_evidence(&fs::read_to_string(p)?)?,
        None => PartialAssignment::new(),
    };
    let marg = variable_elimination_marginals(&model, &ev, &VeOptions::default())?;
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("marginals.MAR"), marg.to_mar_string())?;
    marg.write_csv(fs::File::create(a.out.join("marginals.csv"))?)?;
    Ok(())
}

fn train(a: Train) -> Result<()> {
    let path = a.config.display().to_string();
    let text = fs::read_to_string(&a.config).map_err(|e| Error::Config { path: path.clone(), message: e.to_string() })?;
    let mut job: TrainJob = serde_json::from_str(&text).map_err(|e| Error::Config { path, message: e.to_string() })?;
    if let Some(s) = a.seed {
        job.seed = s;
    }
    if let Some(s) = a.steps {
        job.hyper.steps = s;
    }
    let motif = motif_by_name(&job.motif, job.cardinality)?;
    let (params, report) = train_proposal(&motif, &job)?;
    fs::create_dir_all(&a.out)?;
    params_io::save(&a.out.join("params.bin"), &params, &motif.layout_tag())?;
    write_json(&a.out.join("job.json"), &job)?;
    write_json(&a.out.join("report.json"), &report)?;
    report.write_loss_csv(fs::File::create(a.out.join("losses.csv"))?)?;
    eprintln!("trained {} for {} steps, final loss {:.4}", motif.name, job.hyper.steps, report.final_loss);
    Ok(())
}

fn eval_kl(a: EvalKl) -> Result<()> {
    let motif = motif_by_name(&a.motif, a.cardinality)?;
    let dist: InstantiationDistribution = match &a.distribution {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
            .map_err(|e| Error::Config { path: p.display().to_string(), message: e.to_string() })?,
        None => InstantiationDistribution::grid(a.p_determ, [a.alpha[0], a.alpha[1]])?,
    };
    let (params, _) = params_io::load(&a.params, Some(&motif.layout_tag()))?;
    let values = evaluate_kl(&params, &motif, &dist, a.instantiations, a.seed)?;
    let summary = KlSummary::from_values(&values);
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("kl.json"), &summary)?;
    let mut w = csv::Writer::from_path(a.out.join("kl_values.csv")).map_err(blockmc::Error::from)?;
    w.write_record(["instantiation", "kl"]).map_err(Error::from)?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()]).map_err(Error::from)?;
    }
    w.flush()?;
    eprintln!("median KL {:.4}, {:.1}% <= 1 nat", summary.median, 100.0 * summary.frac_at_most_1);
    Ok(())
}

fn sample(a: Sample) -> Result<()> {
    let path = a.config.display().to_string();
    let text = fs::read_to_string(&a.config).map_err(|e| Error::Config { path: path.clone(), message: e.to_string() })?;
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config { path: path.clone(), message: e.to_string() })?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if a.wall_cap_secs.is_some() {
        cfg.wall_cap_secs = a.wall_cap_secs;
    }
    if let Some(s) = &a.sampler {
        let kind = SamplerKind::parse(s)?;
        if kind != cfg.sampler {
            cfg.mix_ratio = None;
        }
        cfg.sampler = kind;
    }
    if a.mix_ratio.is_some() {
        cfg.mix_ratio = a.mix_ratio;
    }
    let cfg = cfg.materialize(&path)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let exp = Experiment::prepare(cfg, base)?;
    let (traces, report) = exp.run()?;
    fs::create_dir_all(&a.out)?;
    for (t, r) in traces.iter().zip(&report.runs) {
        write_series_csv(&r.series, fs::File::create(a.out.join(format!("series_{}.csv", r.chain)))?)?;
        let m = blockmc::neural::estimate_marginals(t, 0.0)?;
        fs::write(a.out.join(format!("marginals_{}.MAR", r.chain)), m.to_mar_string())?;
    }
    write_json(&a.out.join("report.json"), &report)?;
    for r in &report.runs {
        eprintln!(
            "chain {}: {} epochs, final error {:.4}, error integral {:.3} (epochs) / {:.3} (s)",
            r.chain, r.epochs, r.final_error, r.integral_epochs, r.integral_secs
        );
    }
    Ok(())
}

fn gmm_cmd(a: Gmm) -> Result<()> {
    match a.action {
        GmmAction::Train { steps, seed, out } => {
            let spec = GmmSpec::default();
            let hyper = TrainHyper { steps, ..TrainHyper::default() };
            let (params, losses) = gmm::train_pair_proposal(&spec, &hyper, seed, |step, loss| {
                if step % 500 == 0 {
                    eprintln!("step {step} loss {loss:.4}");
                }
            })?;
            fs::create_dir_all(&out)?;
            params_io::save(&out.join("params.bin"), &params, &spec.layout_tag())?;
            let mut w = csv::Writer::from_path(out.join("losses.csv")).map_err(Error::from)?;
            w.write_record(["step", "loss"]).map_err(Error::from)?;
            for (i, l) in losses.iter().enumerate() {
                w.write_record([i.to_string(), l.to_string()]).map_err(Error::from)?;
            }
            w.flush()?;
            Ok(())
        }
        GmmAction::Sample { data, params, sampler, m, steps, runs, m_init, seed, out } => {
            let x = gmm::read_points_csv(fs::File::open(&data)?)?;
            let spec = GmmSpec { m, n: x.len(), ..GmmSpec::default() };
            let kind = match sampler.as_str() {
                "neural" => GmmSampler::Neural,
                "gibbs" => GmmSampler::Gibbs,
                other => return Err(Error::Usage(format!("unknown mixture sampler {other:?}; expected neural or gibbs"))),
            };
            let proposal = match (&kind, &params) {
                (GmmSampler::Neural, Some(p)) => {
                    let motif = GmmSpec::default();
                    let (params, layout) = params_io::load(p, None)?;
                    Some(NeuralPairProposal::new(motif, params, &layout)?)
                }
                (GmmSampler::Neural, None) => return Err(Error::Usage("--params is required for the neural sampler".into())),
                _ => None,
            };
            fs::create_dir_all(&out)?;
            let mut summary = Vec::new();
            for r in 0..runs {
                let init = m_init.unwrap_or(1 + (r as usize % m));
                let p = proposal.as_ref().map(|p| p as &dyn PairProposal);
                let (trace, _) = gmm::run_gmm(&spec, &x, kind, p, steps, init, seed, r)?;
                trace.write_csv(fs::File::create(out.join(format!("trace_{r}.csv")))?)?;
                summary.push(serde_json::json!({
                    "run": r,
                    "m_init": init,
                    "distinct_m": trace.distinct_m(),
                    "m_changes": trace.m_changes(),
                    "accepted": trace.accepted,
                    "final_m": trace.m.last(),
                }));
            }
            write_json(&out.join("summary.json"), &summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenModel(a) => gen_model(a),
        Command::Oracle(a) => oracle(a),
        Command::Train(a) => train(a),
        Command::EvalKl(a) => eval_kl(a),
        Command::Sample(a) => sample(a),
        Command::Gmm(a) => gmm_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
