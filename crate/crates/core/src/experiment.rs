//! Config-driven experiments: validation, runs with on-disk artifacts, and
//! likelihood slices.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{bayes_factor, summarize, BayesFactor, PosteriorSummary};
use crate::error::{Error, Result};
use crate::likelihood::{self, MhcEstimator};
use crate::models::{Dataset, ModelId, ModelSpec, ParamPoint};
use crate::rng::{make_stream, stream_id};
use crate::samplers::{
    self, debias, purpose, AbcConfig, AbcSummary, Chain, ChainConfig, MhcMode, Prior, Proposal,
    PseudoMarginal, Target,
};

/// Stream owner reserved for the ABC run that picks the initial value.
const PILOT_OWNER: u32 = 0x00FF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    NormalLs,
    Ricker,
    LotkaVolterra,
    Cir,
    ModelChoice,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::NormalLs,
        ExperimentId::Ricker,
        ExperimentId::LotkaVolterra,
        ExperimentId::Cir,
        ExperimentId::ModelChoice,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::NormalLs => "normal_ls",
            ExperimentId::Ricker => "ricker",
            ExperimentId::LotkaVolterra => "lotka_volterra",
            ExperimentId::Cir => "cir",
            ExperimentId::ModelChoice => "model_choice",
        }
    }

    pub fn model_id(self) -> ModelId {
        match self {
            ExperimentId::NormalLs => ModelId::NormalLs,
            ExperimentId::Ricker => ModelId::Ricker,
            ExperimentId::LotkaVolterra => ModelId::LotkaVolterra,
            ExperimentId::Cir => ModelId::Cir,
            ExperimentId::ModelChoice => ModelId::GaussChoice,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::NormalLs => "normal location-scale with a conjugate prior",
            ExperimentId::Ricker => "partially observed Ricker population dynamics",
            ExperimentId::LotkaVolterra => "stochastic predator-prey kinetics",
            ExperimentId::Cir => "discretely observed CIR diffusion",
            ExperimentId::ModelChoice => "choice between two Gaussian models",
        }
    }

    /// The shipped preset for this experiment at `scale`.
    pub fn preset(self, scale: Scale) -> &'static str {
        use ExperimentId::*;
        match (self, scale) {
            (NormalLs, Scale::Paper) => include_str!("../../../configs/normal_ls_paper.toml"),
            (NormalLs, Scale::Desk) => include_str!("../../../configs/normal_ls_desk.toml"),
            (Ricker, Scale::Paper) => include_str!("../../../configs/ricker_paper.toml"),
            (Ricker, Scale::Desk) => include_str!("../../../configs/ricker_desk.toml"),
            (LotkaVolterra, Scale::Paper) => include_str!("../../../configs/lotka_volterra_paper.toml"),
            (LotkaVolterra, Scale::Desk) => include_str!("../../../configs/lotka_volterra_desk.toml"),
            (Cir, Scale::Paper) => include_str!("../../../configs/cir_paper.toml"),
            (Cir, Scale::Desk) => include_str!("../../../configs/cir_desk.toml"),
            (ModelChoice, Scale::Paper) => include_str!("../../../configs/model_choice_paper.toml"),
            (ModelChoice, Scale::Desk) => include_str!("../../../configs/model_choice_desk.toml"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    MhcFixed,
    MhcRandom,
    MhcDebias,
    ExactMh,
    Mcwm,
    Abc,
    TwoSample,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::MhcFixed => "mhc_fixed",
            Algorithm::MhcRandom => "mhc_random",
            Algorithm::MhcDebias => "mhc_debias",
            Algorithm::ExactMh => "exact_mh",
            Algorithm::Mcwm => "mcwm",
            Algorithm::Abc => "abc",
            Algorithm::TwoSample => "two_sample",
        }
    }

    fn uses_mhc(self) -> bool {
        matches!(
            self,
            Algorithm::MhcFixed | Algorithm::MhcRandom | Algorithm::MhcDebias | Algorithm::TwoSample
        )
    }
}

/// Where chains start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Truth,
    Value {
        values: Vec<f64>,
    },
    /// Mean of the accepted set of a rejection-ABC run using the `[abc]` summary.
    AbcPilot {
        draws: usize,
        accept: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSection {
    pub summary: AbcSummary,
    pub draws: usize,
    pub accept: usize,
    #[serde(default = "default_pilot")]
    pub pilot: usize,
}

fn default_pilot() -> usize {
    200
}

fn default_chains() -> u32 {
    1
}

fn default_level() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub scale: Scale,
    pub seed: u64,
    /// Seed for the observed data; defaults to `seed`.
    #[serde(default)]
    pub data_seed: Option<u64>,
    /// Observed data CSV; simulated at `truth` when absent.
    #[serde(default)]
    pub data_file: Option<PathBuf>,
    /// Number of observations.
    pub n: usize,
    pub truth: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub iterations: usize,
    /// Draws discarded before summarising; defaults to a tenth of the chain.
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_chains")]
    pub chains: u32,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub init: InitSpec,
    pub model: ModelSpec,
    pub prior: Prior,
    pub proposal: Proposal,
    /// Proposal for exact MH when it differs from the others.
    #[serde(default)]
    pub exact_proposal: Option<Proposal>,
    #[serde(default)]
    pub mhc: Option<MhcEstimator>,
    #[serde(default)]
    pub mcwm: Option<PseudoMarginal>,
    #[serde(default)]
    pub abc: Option<AbcSection>,
}

/// A validation failure tied to a config key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets the dotted `key` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_override_value(raw));
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text after applying `KEY=VAL` overrides.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        if let Some(f) = &cfg.data_file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.data_file = Some(dir.join(f));
                }
            }
        }
        Ok(cfg)
    }

    pub fn preset(id: ExperimentId, scale: Scale) -> Result<Self> {
        Self::from_toml_str(id.preset(scale), &[])
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.iterations / 10)
    }

    pub fn truth_point(&self) -> ParamPoint {
        ParamPoint::new(self.truth.clone())
    }

    fn proposal_for(&self, alg: Algorithm) -> &Proposal {
        match (alg, &self.exact_proposal) {
            (Algorithm::ExactMh, Some(p)) => p,
            _ => &self.proposal,
        }
    }

    /// Every cross-field constraint, each tied to the offending key.
    pub fn validate(&self) -> std::result::Result<(), Vec<ConfigIssue>> {
        let mut issues = Vec::new();
        let mut push = |path: &str, message: String| {
            issues.push(ConfigIssue {
                path: path.to_string(),
                message,
            })
        };
        let model = &self.model;
        let dim = model.dim();
        if model.id() != self.experiment.model_id() {
            push(
                "model.model",
                format!(
                    "experiment {} needs model {}",
                    self.experiment.as_str(),
                    self.experiment.model_id().as_str()
                ),
            );
        }
        if let Err(e) = model.validate() {
            push("model", e.to_string());
        }
        if let ModelSpec::GaussChoice { n } = model {
            if *n != self.n {
                push("model.n", format!("must equal n = {}", self.n));
            }
        }
        if self.n == 0 {
            push("n", "must be positive".into());
        }
        if let Err(e) = model.check_theta(&self.truth_point()) {
            push("truth", e.to_string());
        }
        if self.iterations == 0 {
            push("iterations", "must be positive".into());
        }
        if self.burn_in() >= self.iterations.max(1) {
            push("burn_in", format!("must be below iterations = {}", self.iterations));
        }
        if self.chains == 0 {
            push("chains", "must be positive".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            push("level", "must lie in (0, 1)".into());
        }
        if let Err(e) = self.prior.validate(dim) {
            push("prior", e.to_string());
        }
        if let Err(e) = self.proposal.validate(dim) {
            push("proposal", e.to_string());
        }
        if let Some(p) = &self.exact_proposal {
            if let Err(e) = p.validate(dim) {
                push("exact_proposal", e.to_string());
            }
        }
        match &self.init {
            InitSpec::Truth => {}
            InitSpec::Value { values } => {
                if let Err(e) = model.check_theta(&ParamPoint::new(values.clone())) {
                    push("init.values", e.to_string());
                }
            }
            InitSpec::AbcPilot { draws, accept } => {
                if *accept == 0 || accept > draws {
                    push("init.accept", "must lie in 1..=draws".into());
                }
                if !self.prior.is_proper() {
                    push("init", "abc requires proper prior".into());
                }
                if self.abc.is_none() {
                    push("abc", "an abc_pilot init takes its summary from [abc]".into());
                }
            }
        }
        if self.algorithms.is_empty() {
            push("algorithms", "list at least one algorithm".into());
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.algorithms {
            if !seen.insert(*a) {
                push("algorithms", format!("{} listed twice", a.as_str()));
            }
        }
        if self.algorithms.iter().any(|a| a.uses_mhc()) {
            match &self.mhc {
                None => push("mhc", "required by the mhc algorithms".into()),
                Some(est) => {
                    if let Err(e) = est.validate() {
                        push("mhc", e.to_string());
                    }
                    if est.classifier.is_oracle() && !model.has_oracle() {
                        push("mhc.kind", format!("no oracle for {}", model.id().as_str()));
                    }
                    let raw = model.row_len();
                    if est.features.pcs() > raw {
                        push("mhc.features", format!("at most {raw} principal components"));
                    }
                }
            }
        }
        for a in &self.algorithms {
            match a {
                Algorithm::ExactMh if !model.has_oracle() => push(
                    "algorithms",
                    format!("exact_mh needs a tractable likelihood, {} has none", model.id().as_str()),
                ),
                Algorithm::Mcwm => match (model, &self.mcwm) {
                    (ModelSpec::LotkaVolterra { .. }, _) => push(
                        "algorithms",
                        "mcwm: lotka_volterra has no conditional-latent structure".into(),
                    ),
                    (ModelSpec::Cir { .. }, Some(PseudoMarginal::Bridge { m_steps, n_paths })) => {
                        if *m_steps < 2 || *n_paths == Some(0) {
                            push("mcwm", "needs m_steps >= 2 and n_paths >= 1".into());
                        }
                    }
                    (ModelSpec::Ricker { .. }, Some(PseudoMarginal::Paths { k })) => {
                        if *k == 0 {
                            push("mcwm.k", "must be positive".into());
                        }
                    }
                    (ModelSpec::Cir { .. } | ModelSpec::Ricker { .. }, None) => {
                        push("mcwm", "required by the mcwm algorithm".into())
                    }
                    (ModelSpec::Cir { .. } | ModelSpec::Ricker { .. }, Some(_)) => {
                        push("mcwm.kind", "cir uses bridge, ricker uses paths".into())
                    }
                    _ => push(
                        "algorithms",
                        format!("mcwm is defined for cir and ricker, not {}", model.id().as_str()),
                    ),
                },
                Algorithm::Abc => {
                    if !self.prior.is_proper() {
                        push("prior", "abc requires proper prior".into());
                    }
                    match &self.abc {
                        None => push("abc", "required by the abc algorithm".into()),
                        Some(s) => {
                            if s.accept == 0 || s.accept > s.draws {
                                push("abc.accept", "must lie in 1..=draws".into());
                            }
                        }
                    }
                }
                Algorithm::MhcDebias if model.discrete_coordinates().iter().any(|d| *d) => push(
                    "algorithms",
                    "mhc_debias is undefined for discrete parameters".into(),
                ),
                _ => {}
            }
        }
        if let Some(AbcSection {
            summary: AbcSummary::SeriesStats { n_series },
            ..
        }) = &self.abc
        {
            let raw = model.row_len();
            if *n_series == 0 || raw % n_series != 0 || raw / n_series < 3 {
                push("abc.summary.n_series", format!("rows of {raw} values do not split"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn validated(&self) -> Result<()> {
        self.validate().map_err(|issues| {
            Error::Config(
                issues
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })
    }
}

/// The observed data: read from `data_file` or simulated at the truth.
pub fn observed_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    if let Some(path) = &cfg.data_file {
        let f = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let d = Dataset::read_csv(std::io::BufReader::new(f))?;
        if d.p() != cfg.model.row_len() {
            return Err(Error::Config(format!(
                "data_file rows have {} values, model expects {}",
                d.p(),
                cfg.model.row_len()
            )));
        }
        return Ok(d);
    }
    let seed = cfg.data_seed.unwrap_or(cfg.seed);
    let mut s = make_stream(seed, stream_id(purpose::DATA, 0, 0));
    let latent = cfg.model.draw_latent(cfg.n, &mut s)?;
    cfg.model.simulate(&cfg.truth_point(), &latent, cfg.n)
}

/// Resolves the initial value, running the ABC pilot if asked.
pub fn initial_point(cfg: &ExperimentConfig, real: &Dataset) -> Result<ParamPoint> {
    match &cfg.init {
        InitSpec::Truth => Ok(cfg.truth_point()),
        InitSpec::Value { values } => Ok(ParamPoint::new(values.clone())),
        InitSpec::AbcPilot { draws, accept } => {
            let section = cfg
                .abc
                .as_ref()
                .ok_or_else(|| Error::Config("abc_pilot init needs [abc]".into()))?;
            let acfg = AbcConfig {
                draws: *draws,
                accept: *accept,
                pilot: section.pilot,
                seed: cfg.seed,
                chain_index: PILOT_OWNER,
            };
            let r = samplers::run_abc(&cfg.model, &cfg.prior, &section.summary, real, &acfg)?;
            let kept = r.accepted_draws();
            let mut mean = vec![0.0; cfg.model.dim()];
            for d in &kept {
                for (m, v) in mean.iter_mut().zip(d.iter()) {
                    *m += v / kept.len() as f64;
                }
            }
            Ok(ParamPoint::new(mean))
        }
    }
}

/// Runs one base algorithm for one chain.
pub fn run_algorithm(
    cfg: &ExperimentConfig,
    alg: Algorithm,
    real: &Dataset,
    init: &ParamPoint,
    chain_index: u32,
) -> Result<Chain> {
    let truth = cfg.truth_point();
    let target = Target {
        model: &cfg.model,
        prior: &cfg.prior,
        proposal: cfg.proposal_for(alg),
        real,
        truth: Some(&truth),
    };
    let ccfg = ChainConfig {
        iterations: cfg.iterations,
        init: init.clone(),
        seed: cfg.seed,
        chain_index,
    };
    let est = || {
        cfg.mhc
            .as_ref()
            .ok_or_else(|| Error::Config("missing [mhc]".into()))
    };
    match alg {
        Algorithm::MhcFixed => samplers::run_mhc(&target, MhcMode::Fixed, est()?, &ccfg),
        Algorithm::MhcRandom => samplers::run_mhc(&target, MhcMode::Random, est()?, &ccfg),
        Algorithm::TwoSample => samplers::run_mhc(&target, MhcMode::TwoSample, est()?, &ccfg),
        Algorithm::ExactMh => samplers::run_exact_mh(&target, &ccfg),
        Algorithm::Mcwm => {
            let kind = cfg
                .mcwm
                .ok_or_else(|| Error::Config("missing [mcwm]".into()))?;
            samplers::run_mcwm(&target, kind, &ccfg)
        }
        Algorithm::Abc => {
            let s = cfg
                .abc
                .as_ref()
                .ok_or_else(|| Error::Config("missing [abc]".into()))?;
            let acfg = AbcConfig {
                draws: s.draws,
                accept: s.accept,
                pilot: s.pilot,
                seed: cfg.seed,
                chain_index,
            };
            let start = std::time::Instant::now();
            let r = samplers::run_abc(&cfg.model, &cfg.prior, &s.summary, real, &acfg)?;
            let mut chain = r.to_chain(&cfg.model, &acfg);
            chain.wall_clock_secs = start.elapsed().as_secs_f64();
            Ok(chain)
        }
        Algorithm::MhcDebias => Err(Error::Contract(
            "mhc_debias combines the fixed and random chains".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub algorithm: String,
    pub chain: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub scale: Scale,
    pub seed: u64,
    pub complete: bool,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
}

/// A finished chain and its summary, as kept in memory after a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub chain_index: u32,
    pub chain: Chain,
    pub summary: PosteriorSummary,
    pub bayes_factor: Option<BayesFactor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<RunRecord>,
    pub init: ParamPoint,
}

#[derive(Serialize)]
struct Metadata<'a> {
    experiment: &'a str,
    scale: Scale,
    algorithm: &'a str,
    model: &'a ModelSpec,
    n: usize,
    truth: &'a [f64],
    init: &'a [f64],
    seed: u64,
    data_seed: u64,
    chain_index: u32,
    streams: &'a [(String, u64)],
    iterations: usize,
    burn_in: usize,
    prior: &'a Prior,
    proposal: &'a Proposal,
    mhc: Option<&'a MhcEstimator>,
    mcwm: Option<&'a PseudoMarginal>,
    abc: Option<&'a AbcSection>,
    acceptance_rate: f64,
    wall_clock_secs: f64,
    bayes_factor: Option<&'a BayesFactor>,
}

fn write_artifact(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<Artifact> {
    let path = out_dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(Artifact {
        path: name.to_string(),
        sha256: hex::encode(Sha256::digest(bytes)),
        bytes: bytes.len() as u64,
    })
}

fn summary_csv(summary: &PosteriorSummary, bf: Option<&BayesFactor>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    summary.write_csv(&mut buf)?;
    let Some(bf) = bf else {
        return Ok(buf);
    };
    let text = String::from_utf8(buf).expect("ascii csv");
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(&format!("{line},bf_model1,bf_model2,bayes_factor\n"));
        } else {
            out.push_str(&format!("{line},{},{},{}\n", bf.n1, bf.n2, bf.value));
        }
    }
    Ok(out.into_bytes())
}

fn file_stem(alg: Algorithm, chain: u32, chains: u32) -> String {
    if chains == 1 {
        alg.as_str().to_string()
    } else {
        format!("{}_c{chain}", alg.as_str())
    }
}

/// Runs every configured algorithm and chain, writing chain, metadata and
/// summary files plus `manifest.json` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, jobs: usize) -> Result<RunOutput> {
    cfg.validated()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let real = observed_data(cfg)?;
    let mut artifacts = Vec::new();
    let mut data_csv = Vec::new();
    real.write_csv(&mut data_csv)?;
    artifacts.push(write_artifact(out_dir, "data.csv", &data_csv)?);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let init = pool.install(|| initial_point(cfg, &real))?;

    let mut base: Vec<Algorithm> = Vec::new();
    for a in &cfg.algorithms {
        let needs: &[Algorithm] = match a {
            Algorithm::MhcDebias => &[Algorithm::MhcFixed, Algorithm::MhcRandom],
            other => std::slice::from_ref(other),
        };
        for n in needs {
            if !base.contains(n) {
                base.push(*n);
            }
        }
    }
    let tasks: Vec<(Algorithm, u32)> = (0..cfg.chains)
        .flat_map(|c| base.iter().map(move |a| (*a, c)))
        .collect();
    let results: Vec<Result<Chain>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(a, c)| run_algorithm(cfg, *a, &real, &init, *c))
            .collect()
    });

    let mut chains: Vec<(Algorithm, u32, Chain)> = Vec::new();
    let mut failures = Vec::new();
    for ((a, c), r) in tasks.iter().zip(results) {
        match r {
            Ok(chain) => chains.push((*a, *c, chain)),
            Err(e) => failures.push(Failure {
                algorithm: a.as_str().into(),
                chain: *c,
                error: e.to_string(),
            }),
        }
    }
    let burn_in = cfg.burn_in();
    if cfg.algorithms.contains(&Algorithm::MhcDebias) {
        for c in 0..cfg.chains {
            let find = |alg| chains.iter().find(|(a, ci, _)| *a == alg && *ci == c).map(|t| &t.2);
            match (find(Algorithm::MhcFixed), find(Algorithm::MhcRandom)) {
                (Some(f), Some(r)) => match debias(f, r, burn_in) {
                    Ok(d) => chains.push((Algorithm::MhcDebias, c, d)),
                    Err(e) => failures.push(Failure {
                        algorithm: "mhc_debias".into(),
                        chain: c,
                        error: e.to_string(),
                    }),
                },
                _ => failures.push(Failure {
                    algorithm: "mhc_debias".into(),
                    chain: c,
                    error: "an input chain failed".into(),
                }),
            }
        }
    }

    let mut records = Vec::new();
    let data_seed = cfg.data_seed.unwrap_or(cfg.seed);
    for (alg, c, chain) in chains {
        let chain_burn = if alg == Algorithm::Abc { 0 } else { burn_in };
        let summary = match summarize(&chain, chain_burn, cfg.level) {
            Ok(s) => s,
            Err(e) => {
                failures.push(Failure {
                    algorithm: alg.as_str().into(),
                    chain: c,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let bf = if cfg.experiment == ExperimentId::ModelChoice {
            bayes_factor(&chain.column(0)[chain_burn..]).ok()
        } else {
            None
        };
        let stem = file_stem(alg, c, cfg.chains);
        let mut body = Vec::new();
        chain.write_csv(&mut body)?;
        artifacts.push(write_artifact(out_dir, &format!("{stem}.chain.csv"), &body)?);
        artifacts.push(write_artifact(
            out_dir,
            &format!("{stem}.summary.csv"),
            &summary_csv(&summary, bf.as_ref())?,
        )?);
        let meta = Metadata {
            experiment: cfg.experiment.as_str(),
            scale: cfg.scale,
            algorithm: alg.as_str(),
            model: &cfg.model,
            n: real.n(),
            truth: &cfg.truth,
            init: &init,
            seed: cfg.seed,
            data_seed,
            chain_index: c,
            streams: &chain.streams,
            iterations: chain.len(),
            burn_in: chain_burn,
            prior: &cfg.prior,
            proposal: cfg.proposal_for(alg),
            mhc: cfg.mhc.as_ref().filter(|_| alg.uses_mhc()),
            mcwm: cfg.mcwm.as_ref().filter(|_| alg == Algorithm::Mcwm),
            abc: cfg.abc.as_ref().filter(|_| alg == Algorithm::Abc),
            acceptance_rate: chain.acceptance_rate(),
            wall_clock_secs: chain.wall_clock_secs,
            bayes_factor: bf.as_ref(),
        };
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
        artifacts.push(write_artifact(out_dir, &format!("{stem}.meta.json"), &json)?);
        records.push(RunRecord {
            algorithm: alg,
            chain_index: c,
            chain,
            summary,
            bayes_factor: bf,
        });
    }

    let manifest = RunManifest {
        experiment: cfg.experiment.as_str().into(),
        scale: cfg.scale,
        seed: cfg.seed,
        complete: failures.is_empty(),
        artifacts,
        failures,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(out_dir.join("manifest.json"), json)?;
    Ok(RunOutput {
        manifest,
        records,
        init,
    })
}

/// One axis of a likelihood slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceAxis {
    pub param: String,
    pub values: Vec<f64>,
}

impl SliceAxis {
    /// Parses `a:b:steps` into `steps` evenly spaced points from `a` to `b`.
    pub fn parse(param: &str, grid: &str) -> Result<SliceAxis> {
        let parts: Vec<&str> = grid.split(':').collect();
        let bad = || Error::Config(format!("grid {grid:?} is not a:b:steps"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        let values = if steps == 1 {
            vec![a]
        } else {
            (0..steps)
                .map(|i| a + (b - a) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Ok(SliceAxis {
            param: param.to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceTable {
    pub params: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    /// `log p_theta(X) - log p_truth(X)` where the model has a likelihood.
    pub oracle: Option<Vec<f64>>,
}

impl SliceTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = self.params.join(",");
        header.push_str(",eta,oracle_log_lik");
        writeln!(w, "{header}")?;
        for (i, p) in self.points.iter().enumerate() {
            let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let oracle = self
                .oracle
                .as_ref()
                .map(|o| o[i].to_string())
                .unwrap_or_default();
            writeln!(w, "{},{},{oracle}", coords.join(","), self.eta[i])?;
        }
        Ok(())
    }

    /// Index of the largest finite estimate.
    pub fn argmax(&self) -> Option<usize> {
        self.eta
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Estimated log-likelihood ratio over a grid in one or two coordinates, the
/// others held at the truth. One latent sample serves the whole grid.
pub fn slice(cfg: &ExperimentConfig, axes: &[SliceAxis]) -> Result<SliceTable> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::Config("a slice has one or two axes".into()));
    }
    let est = cfg
        .mhc
        .as_ref()
        .ok_or_else(|| Error::Config("slice needs [mhc]".into()))?;
    est.validate()?;
    let names = cfg.model.param_names();
    let idx: Vec<usize> = axes
        .iter()
        .map(|a| {
            names
                .iter()
                .position(|n| *n == a.param)
                .ok_or_else(|| Error::Config(format!("unknown parameter {}", a.param)))
        })
        .collect::<Result<_>>()?;
    let truth = cfg.truth_point();
    let mut points = Vec::new();
    let mut thetas = Vec::new();
    let second: Vec<f64> = axes.get(1).map(|a| a.values.clone()).unwrap_or(vec![f64::NAN]);
    for &v0 in &axes[0].values {
        for &v1 in &second {
            let mut t = truth.0.clone();
            t[idx[0]] = v0;
            let mut p = vec![v0];
            if axes.len() == 2 {
                t[idx[1]] = v1;
                p.push(v1);
            }
            let theta = ParamPoint::new(t);
            cfg.model.check_theta(&theta)?;
            points.push(p);
            thetas.push(theta);
        }
    }
    let real = observed_data(cfg)?;
    let mut ls = make_stream(cfg.seed, stream_id(purpose::LATENT, 0, 0));
    let latents = (0..est.nrep)
        .map(|_| cfg.model.draw_latent(est.m, &mut ls))
        .collect::<Result<Vec<_>>>()?;
    let fits = make_stream(cfg.seed, stream_id(purpose::FIT, 0, 0)).split(est.nrep)?;
    let eta: Vec<f64> = thetas
        .par_iter()
        .map(|theta| {
            match likelihood::estimate(&cfg.model, theta, Some(&truth), &real, &latents, est, &fits) {
                Ok(e) => Ok(e.eta),
                Err(Error::Explosion { .. }) => Ok(f64::NEG_INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let oracle = if cfg.model.has_oracle() {
        let base = cfg.model.oracle_log_lik(&truth, &real)?;
        Some(
            thetas
                .iter()
                .map(|t| Ok(cfg.model.oracle_log_lik(t, &real)? - base))
                .collect::<Result<Vec<f64>>>()?,
        )
    } else {
        None
    };
    Ok(SliceTable {
        params: axes.iter().map(|a| a.param.clone()).collect(),
        points,
        eta,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_validates() {
        for id in ExperimentId::ALL {
            for scale in [Scale::Paper, Scale::Desk] {
                let cfg = ExperimentConfig::preset(id, scale)
                    .unwrap_or_else(|e| panic!("{} {scale:?}: {e}", id.as_str()));
                assert_eq!(cfg.experiment, id);
                assert_eq!(cfg.scale, scale);
                if let Err(issues) = cfg.validate() {
                    panic!("{} {scale:?}: {issues:?}", id.as_str());
                }
            }
        }
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = ExperimentId::Cir.preset(Scale::Desk);
        let cfg = ExperimentConfig::from_toml_str(
            text,
            &[
                ("seed".into(), "99".into()),
                ("mhc.m".into(), "7".into()),
                ("algorithms".into(), "[\"exact_mh\"]".into()),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.mhc.unwrap().m, 7);
        assert_eq!(cfg.algorithms, vec![Algorithm::ExactMh]);
    }

    #[test]
    fn abc_with_improper_prior_is_rejected() {
        let mut cfg = ExperimentConfig::preset(ExperimentId::Cir, Scale::Desk).unwrap();
        cfg.algorithms.push(Algorithm::Abc);
        cfg.abc = Some(AbcSection {
            summary: AbcSummary::Mean,
            draws: 10,
            accept: 2,
            pilot: 5,
        });
        let issues = cfg.validate().unwrap_err();
        assert!(issues.iter().any(|i| i.message.contains("abc requires proper prior")));
    }

    #[test]
    fn mcwm_for_lotka_volterra_is_rejected() {
        let mut cfg = ExperimentConfig::preset(ExperimentId::LotkaVolterra, Scale::Desk).unwrap();
        cfg.algorithms = vec![Algorithm::Mcwm];
        let issues = cfg.validate().unwrap_err();
        assert!(issues
            .iter()
            .any(|i| i.message.contains("no conditional-latent structure")));
    }

    #[test]
    fn exact_mh_needs_a_likelihood() {
        let mut cfg = ExperimentConfig::preset(ExperimentId::Ricker, Scale::Desk).unwrap();
        cfg.algorithms = vec![Algorithm::ExactMh];
        let issues = cfg.validate().unwrap_err();
        assert_eq!(issues[0].path, "algorithms");
    }

    #[test]
    fn grid_parsing() {
        let a = SliceAxis::parse("alpha", "0.05:0.09:5").unwrap();
        assert_eq!(a.values.len(), 5);
        assert!((a.values[4] - 0.09).abs() < 1e-15);
        assert!(SliceAxis::parse("alpha", "0.05:0.09").is_err());
        assert!(SliceAxis::parse("alpha", "0.05:0.09:0").is_err());
    }
}
