//! Metrics and experiment plumbing.
//!
//! The marginal error of an estimate is the mean absolute deviation
//! `(1/N) sum_i |P_hat(X_i = 1) - P(X_i = 1)|` over the scored variables;
//! for variables with more than two states it generalizes to the mean total
//! variation distance, which coincides with the binary formula.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::io as params_io;
use crate::model::generate::{chain_bn, chain_mrf, grid_bn, random_evidence, CptPrior, GridShape, PotentialPrior};
use crate::model::uai::{parse_uai, parse_uai_evidence};
use crate::model::{DiscreteModel, PartialAssignment, VarId};
use crate::motifs::motif_by_name;
use crate::neural::{run_inference, BlockKernel, MoveStats, ProposalLibrary, RunOptions, SamplerSchedule, Trace};
use crate::oracle::{variable_elimination_marginals, Marginals, VeOptions};
use crate::rng::{self, Purpose};

/// Mean per-variable total variation over all variables.
pub fn marginal_error(est: &Marginals, truth: &Marginals) -> Result<f64> {
    let all: Vec<VarId> = (0..truth.num_vars()).collect();
    marginal_error_over(est, truth, &all)
}

/// Mean per-variable total variation over `vars`.
pub fn marginal_error_over(est: &Marginals, truth: &Marginals, vars: &[VarId]) -> Result<f64> {
    if est.num_vars() != truth.num_vars() {
        return Err(Error::Inconsistent(format!(
            "estimate covers {} variables, truth {}",
            est.num_vars(),
            truth.num_vars()
        )));
    }
    if vars.is_empty() {
        return Err(Error::Precondition("no variables to score".into()));
    }
    let mut total = 0.0;
    for &v in vars {
        let (a, b) = (est.as_slice().get(v), truth.as_slice().get(v));
        let (Some(a), Some(b)) = (a, b) else {
            return Err(Error::Inconsistent(format!("variable {v} missing from the tables")));
        };
        if a.len() != b.len() {
            return Err(Error::Inconsistent(format!("variable {v}: {} states vs {}", a.len(), b.len())));
        }
        total += 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok((total / vars.len() as f64).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub epoch: u64,
    pub wall_ns: u64,
    pub error: f64,
}

/// Marginal error of the running estimate at every checkpoint after the
/// first.
pub fn error_series(trace: &Trace, truth: &Marginals, vars: &[VarId]) -> Result<Vec<ErrorPoint>> {
    trace
        .running_marginals()
        .map(|(c, m)| Ok(ErrorPoint { epoch: c.epoch, wall_ns: c.wall_ns, error: marginal_error_over(&m, truth, vars)? }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Seconds.
    Time,
    Epochs,
}

fn coord(p: &ErrorPoint, axis: Axis) -> f64 {
    match axis {
        Axis::Time => p.wall_ns as f64 * 1e-9,
        Axis::Epochs => p.epoch as f64,
    }
}

/// Trapezoidal integral of the error from the first point up to `cap`.
/// A series that stops short of the cap is extended by its last value.
pub fn error_integral(series: &[ErrorPoint], axis: Axis, cap: f64) -> Result<f64> {
    let first = series.first().ok_or_else(|| Error::Precondition("empty error series".into()))?;
    if cap < coord(first, axis) {
        return Err(Error::Precondition(format!("cap {cap} precedes the first sample at {}", coord(first, axis))));
    }
    let mut total = 0.0;
    for w in series.windows(2) {
        let (x0, x1) = (coord(&w[0], axis), coord(&w[1], axis));
        if x0 >= cap {
            return Ok(total);
        }
        if x1 <= cap {
            total += 0.5 * (w[0].error + w[1].error) * (x1 - x0);
        } else {
            let t = (cap - x0) / (x1 - x0);
            let e_cap = w[0].error + t * (w[1].error - w[0].error);
            return Ok(total + 0.5 * (w[0].error + e_cap) * (cap - x0));
        }
    }
    let last = series.last().unwrap();
    Ok(total + last.error * (cap - coord(last, axis)).max(0.0))
}

/// Series CSV: `epoch,wall_ns,marginal_error`.
pub fn write_series_csv<W: Write>(series: &[ErrorPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["epoch", "wall_ns", "marginal_error"])?;
    for p in series {
        out.write_record([p.epoch.to_string(), p.wall_ns.to_string(), p.error.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Where the model comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSource {
    /// A `.uai` file.
    File { path: PathBuf },
    Grid { rows: usize, cols: usize, p_determ: f64, alpha: [f64; 2], seed: u64 },
    ChainMrf { n: usize, cardinality: usize, log_scale: f64, seed: u64 },
    ChainBn { n: usize, order: usize, p_determ: f64, alpha: [f64; 2], seed: u64 },
}

impl ModelSource {
    pub fn build(&self, base: &Path) -> Result<DiscreteModel> {
        match self {
            ModelSource::File { path } => parse_uai(&std::fs::read_to_string(base.join(path))?),
            ModelSource::Grid { rows, cols, p_determ, alpha, seed } => {
                let prior = CptPrior::new(*p_determ, *alpha)?;
                grid_bn(GridShape::new(*rows, *cols), 2, &prior, &mut rng::stream(*seed, Purpose::ModelGen, 0))
            }
            ModelSource::ChainMrf { n, cardinality, log_scale, seed } => chain_mrf(
                *n,
                *cardinality,
                &PotentialPrior { log_scale: *log_scale },
                &mut rng::stream(*seed, Purpose::ModelGen, 0),
            ),
            ModelSource::ChainBn { n, order, p_determ, alpha, seed } => {
                let prior = CptPrior::new(*p_determ, *alpha)?;
                chain_bn(*n, *order, 2, &prior, &mut rng::stream(*seed, Purpose::ModelGen, 0))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EvidenceSource {
    #[default]
    None,
    /// A `.uai.evid` file.
    File { path: PathBuf },
    /// `count` variables observed from one joint draw.
    Random { count: usize, seed: u64 },
}

impl EvidenceSource {
    pub fn build(&self, model: &DiscreteModel, base: &Path) -> Result<PartialAssignment> {
        let ev = match self {
            EvidenceSource::None => PartialAssignment::new(),
            EvidenceSource::File { path } => parse_uai_evidence(&std::fs::read_to_string(base.join(path))?)?,
            EvidenceSource::Random { count, seed } => {
                random_evidence(model, *count, &mut rng::stream(*seed, Purpose::ModelGen, 1))?
            }
        };
        ev.validate(model)?;
        Ok(ev)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Gibbs,
    BlockExact,
    Neural,
    Mixed,
}

impl SamplerKind {
    pub fn parse(s: &str) -> Result<SamplerKind> {
        match s {
            "gibbs" => Ok(SamplerKind::Gibbs),
            "block-exact" => Ok(SamplerKind::BlockExact),
            "neural" => Ok(SamplerKind::Neural),
            "mixed" => Ok(SamplerKind::Mixed),
            other => Err(Error::Usage(format!("unknown sampler {other:?}; expected gibbs, block-exact, neural or mixed"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SamplerKind::Gibbs => "gibbs",
            SamplerKind::BlockExact => "block-exact",
            SamplerKind::Neural => "neural",
            SamplerKind::Mixed => "mixed",
        }
    }

    /// Ratio used when the config leaves it open.
    pub fn default_mix_ratio(self) -> f64 {
        match self {
            SamplerKind::Mixed => 0.5,
            _ => 1.0,
        }
    }
}

/// A trained proposal on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalRef {
    pub motif: String,
    pub params: PathBuf,
}

fn default_epochs() -> u64 {
    500
}
fn default_chains() -> u64 {
    1
}
fn default_checkpoint_every() -> u64 {
    1
}

/// One sampling experiment. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    #[serde(default)]
    pub evidence: EvidenceSource,
    pub sampler: SamplerKind,
    #[serde(default)]
    pub mix_ratio: Option<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default)]
    pub wall_cap_secs: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub chains: u64,
    /// Motifs to place; defaults to the motifs of `proposals`.
    #[serde(default)]
    pub motifs: Vec<String>,
    #[serde(default)]
    pub proposals: Vec<ProposalRef>,
    /// `.MAR` truth file; exact inference when absent.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub checkpoint_interval_secs: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(model: ModelSource, sampler: SamplerKind) -> ExperimentConfig {
        ExperimentConfig {
            model,
            evidence: EvidenceSource::None,
            sampler,
            mix_ratio: None,
            epochs: default_epochs(),
            wall_cap_secs: None,
            seed: 0,
            chains: default_chains(),
            motifs: Vec::new(),
            proposals: Vec::new(),
            truth: None,
            checkpoint_every: default_checkpoint_every(),
            checkpoint_interval_secs: None,
        }
    }

    /// Parses and validates; errors name the file and the field.
    pub fn from_json(text: &str, path: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })?;
        cfg.materialize(path)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        ExperimentConfig::from_json(&text, &path.display().to_string())
    }

    /// Fills derived defaults and checks ranges.
    pub fn materialize(mut self, path: &str) -> Result<ExperimentConfig> {
        let bad = |field: &str, message: String| Error::Config { path: path.into(), message: format!("{field}: {message}") };
        let ratio = *self.mix_ratio.get_or_insert(self.sampler.default_mix_ratio());
        if !(0.0..=1.0).contains(&ratio) {
            return Err(bad("mix_ratio", format!("{ratio} outside [0, 1]")));
        }
        if self.motifs.is_empty() {
            self.motifs = self.proposals.iter().map(|p| p.motif.clone()).collect();
            self.motifs.dedup();
        }
        if self.sampler != SamplerKind::Gibbs && self.motifs.is_empty() {
            return Err(bad("motifs", format!("sampler {} needs at least one motif", self.sampler.as_str())));
        }
        if matches!(self.sampler, SamplerKind::Neural | SamplerKind::Mixed) {
            for m in &self.motifs {
                if !self.proposals.iter().any(|p| &p.motif == m) {
                    return Err(bad("proposals", format!("no trained proposal for motif {m:?}")));
                }
            }
        }
        if self.chains == 0 {
            return Err(bad("chains", "must be at least 1".into()));
        }
        if let Some(w) = self.wall_cap_secs {
            if !(w > 0.0) {
                return Err(bad("wall_cap_secs", format!("{w} is not positive")));
            }
        }
        if let Some(w) = self.checkpoint_interval_secs {
            if !(w > 0.0) {
                return Err(bad("checkpoint_interval_secs", format!("{w} is not positive")));
            }
        }
        if self.checkpoint_every == 0 && self.checkpoint_interval_secs.is_none() {
            return Err(bad("checkpoint_every", "0 needs checkpoint_interval_secs".into()));
        }
        Ok(self)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            epochs: if self.wall_cap_secs.is_some() && self.epochs == 0 { u64::MAX } else { self.epochs },
            wall_cap: self.wall_cap_secs.map(Duration::from_secs_f64),
            checkpoint_every: self.checkpoint_every,
            checkpoint_interval: self.checkpoint_interval_secs.map(Duration::from_secs_f64),
            record_moves: false,
            record_samples: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub chain: u64,
    pub series: Vec<ErrorPoint>,
    pub final_error: f64,
    pub integral_epochs: f64,
    pub integral_secs: f64,
    pub stats: MoveStats,
    pub acceptance_rate: Option<f64>,
    pub epochs: u64,
    pub wall_ns: u64,
}

/// Everything a sampling experiment reports, with the materialized config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub num_blocks: usize,
    pub scored_vars: usize,
    /// Some variable has more than two states; errors are mean TV.
    pub multistate: bool,
    pub runs: Vec<RunReport>,
}

/// A prepared experiment: model, evidence, truth and schedule.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: DiscreteModel,
    pub evidence: PartialAssignment,
    pub truth: Marginals,
    pub schedule: SamplerSchedule,
    pub library: ProposalLibrary,
}

impl Experiment {
    /// Builds the model and schedule, loads proposals and truth. Every
    /// referenced file must exist.
    pub fn prepare(config: ExperimentConfig, base: &Path) -> Result<Experiment> {
        let model = config.model.build(base)?;
        let evidence = config.evidence.build(&model, base)?;
        let truth = match &config.truth {
            Some(p) => Marginals::parse_mar(&std::fs::read_to_string(base.join(p))?)?,
            None => variable_elimination_marginals(&model, &evidence, &VeOptions::default())?,
        };
        if truth.num_vars() != model.num_vars() {
            return Err(Error::Inconsistent(format!(
                "truth covers {} variables, model has {}",
                truth.num_vars(),
                model.num_vars()
            )));
        }
        let card = model.cards().first().copied().unwrap_or(2);
        let motifs = config.motifs.iter().map(|m| motif_by_name(m, card)).collect::<Result<Vec<_>>>()?;
        let ratio = config.mix_ratio.unwrap_or(config.sampler.default_mix_ratio());
        let schedule = match config.sampler {
            SamplerKind::Gibbs => SamplerSchedule::single_site(&model, &evidence),
            _ => SamplerSchedule::centered(&model, &evidence, &motifs, ratio)?,
        };
        let mut library = ProposalLibrary::new();
        if matches!(config.sampler, SamplerKind::Neural | SamplerKind::Mixed) {
            for p in &config.proposals {
                let motif = motif_by_name(&p.motif, card)?;
                let (params, layout) = params_io::load(&base.join(&p.params), None)?;
                library.insert_loaded(motif, params, &layout)?;
            }
        }
        Ok(Experiment { config, model, evidence, truth, schedule, library })
    }

    pub fn kernel(&self) -> BlockKernel<'_> {
        match self.config.sampler {
            SamplerKind::BlockExact => BlockKernel::Exact,
            _ => BlockKernel::Neural(&self.library),
        }
    }

    pub fn scored_vars(&self) -> Vec<VarId> {
        self.schedule.latent().to_vec()
    }

    /// Runs chain `chain` and scores it.
    pub fn run_chain(&self, chain: u64) -> Result<(Trace, RunReport)> {
        let opts = self.config.run_options();
        let trace = run_inference(&self.model, &self.evidence, &self.schedule, self.kernel(), &opts, self.config.seed, chain)?;
        let series = error_series(&trace, &self.truth, &self.scored_vars())?;
        let last = *series.last().ok_or_else(|| Error::Usage("the run produced no samples".into()))?;
        let epoch_cap = if self.config.wall_cap_secs.is_some() { last.epoch as f64 } else { self.config.epochs as f64 };
        let time_cap = self.config.wall_cap_secs.unwrap_or(last.wall_ns as f64 * 1e-9);
        let report = RunReport {
            chain,
            final_error: last.error,
            integral_epochs: error_integral(&series, Axis::Epochs, epoch_cap)?,
            integral_secs: error_integral(&series, Axis::Time, time_cap.max(series[0].wall_ns as f64 * 1e-9))?,
            acceptance_rate: (trace.stats.block_proposed > 0).then(|| trace.stats.acceptance_rate()),
            stats: trace.stats.clone(),
            epochs: trace.epochs,
            wall_ns: trace.wall_ns,
            series,
        };
        Ok((trace, report))
    }

    pub fn run(&self) -> Result<(Vec<Trace>, EvalReport)> {
        let mut traces = Vec::new();
        let mut runs = Vec::new();
        for c in 0..self.config.chains {
            let (t, r) = self.run_chain(c)?;
            traces.push(t);
            runs.push(r);
        }
        let report = EvalReport {
            config: self.config.clone(),
            num_blocks: self.schedule.blocks().len(),
            scored_vars: self.scored_vars().len(),
            multistate: self.model.cards().iter().any(|&k| k > 2),
            runs,
        };
        Ok((traces, report))
    }
}
