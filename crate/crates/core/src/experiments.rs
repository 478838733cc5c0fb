//! Batch experiments: JSON configs in, CSV tables and JSON sidecars out.
//!
//! Every subcommand writes `<name>.csv` (header row, `.` decimals, `\n`
//! line endings) and `<name>.meta.json` holding the raw and resolved
//! config, the seed, the library version and a summary. Outputs depend
//! only on the config and the seed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::coherence::{coherence_bound_lemma8, max_admissible_sparsity, DesignMatrix};
use crate::dictionary::{sample_a1_alpha, sample_mixed_smoothness, Dictionary, DictionarySpec, SyntheticFunction, TrigDictionary};
use crate::error::{Error, Result};
use crate::functional_lab::{
    evaluate_pipeline, lemma8_sparsity_at_least_one, make_functional, rate_experiment, ClassSpec, Decoder, FunctionalKind,
    PipelineConfig, PipelineReport, RateSweep, ScalarMap,
};
use crate::rng::{derive_seed, trial_rng};
use crate::s_term_oracle::{best_s_term_exhaustive, omp, top_s_support};
use crate::sampling::{column_energy_check, discretization_probe, draw_samples, min_samples_lemma8, SampleSet};
use crate::sparse_coding::{encode, EncodeOptions};
use crate::stats::mean;
use crate::taylor_decoder::{active_cells, localized_taylor, partition_check, sup_error_on_sparse_grid, taylor_error_bound, RandomLipschitz};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcommand {
    CoherenceStudy,
    DiscretizeStudy,
    Recover,
    Oracle,
    TaylorCheck,
    Pipeline,
    Rates,
}

impl Subcommand {
    pub const ALL: [Subcommand; 7] = [
        Subcommand::CoherenceStudy,
        Subcommand::DiscretizeStudy,
        Subcommand::Recover,
        Subcommand::Oracle,
        Subcommand::TaylorCheck,
        Subcommand::Pipeline,
        Subcommand::Rates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::CoherenceStudy => "coherence-study",
            Subcommand::DiscretizeStudy => "discretize-study",
            Subcommand::Recover => "recover",
            Subcommand::Oracle => "oracle",
            Subcommand::TaylorCheck => "taylor-check",
            Subcommand::Pipeline => "pipeline",
            Subcommand::Rates => "rates",
        }
    }

    /// Monte Carlo subcommands; these require an explicit seed flag.
    pub fn is_study(self) -> bool {
        !matches!(self, Subcommand::Recover)
    }

    fn stem(self) -> String {
        self.name().replace('-', "_")
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand {s:?}")))
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    /// Worker threads; `None` or 0 means available parallelism.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

/// Parses a config, reporting the line and column of schema violations.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))
}

fn check_schema(version: u32) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Config(format!("schema_version {version} is not supported (expected {SCHEMA_VERSION})")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingSpec {
    /// Uniform tensor grid with `per_axis` periodic nodes.
    Grid { per_axis: usize },
    /// `m` i.i.d. uniform points.
    Random { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    A1Alpha { alpha: f64 },
    MixedSmooth { a: f64, b: f64, max_level: u32 },
    /// Leading coefficients, zero-padded to the dictionary size.
    Coefficients { values: Vec<f64> },
}

impl FunctionSpec {
    fn sample(&self, dict: &TrigDictionary, seed: u64) -> Result<SyntheticFunction> {
        match self {
            FunctionSpec::A1Alpha { alpha } => sample_a1_alpha(dict, *alpha, seed),
            FunctionSpec::MixedSmooth { a, b, max_level } => sample_mixed_smoothness(dict, *a, *b, *max_level, seed),
            FunctionSpec::Coefficients { values } => Ok(SyntheticFunction::custom(pad(values, dict.len())?)),
        }
    }
}

fn pad(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.len() > n {
        return Err(Error::DimensionMismatch { expected: n, got: values.len() });
    }
    let mut out = values.to_vec();
    out.resize(n, 0.0);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarMapSpec {
    Abs,
    Sin,
    PowAbs { beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    L2Norm,
    /// `g` as leading coefficients, zero-padded.
    InnerProduct { g: Vec<f64> },
    ScalarCompose { h: ScalarMapSpec, g: Vec<f64> },
}

impl FunctionalSpec {
    fn kind(&self, n: usize) -> Result<FunctionalKind> {
        Ok(match self {
            FunctionalSpec::L2Norm => FunctionalKind::L2Norm,
            FunctionalSpec::InnerProduct { g } => FunctionalKind::InnerProduct { g: pad(g, n)? },
            FunctionalSpec::ScalarCompose { h, g } => {
                let h = match h {
                    ScalarMapSpec::Abs => ScalarMap::abs(),
                    ScalarMapSpec::Sin => ScalarMap::sin(),
                    ScalarMapSpec::PowAbs { beta } => ScalarMap::pow_abs(*beta)?,
                };
                FunctionalKind::ScalarCompose { h, g: pad(g, n)? }
            }
        })
    }
}

fn default_eps() -> f64 {
    0.1
}

fn default_trials() -> usize {
    100
}

fn default_probes() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceStudyConfig {
    pub schema_version: u32,
    pub dictionary: DictionarySpec,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Defaults to the sampling-lemma minimum.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeStudyConfig {
    pub schema_version: u32,
    pub dictionary: DictionarySpec,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub m: Option<usize>,
    /// Defaults to the sampling-lemma sparsity, at least 1.
    #[serde(default)]
    pub s: Option<usize>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    pub schema_version: u32,
    pub dictionary: DictionarySpec,
    pub samples: SamplingSpec,
    pub function: FunctionSpec,
    /// Defaults to the largest admissible sparsity of the built design.
    #[serde(default)]
    pub s: Option<usize>,
    pub iterations: usize,
    /// Defaults to the exact `l1` residual of the best `s`-term truncation.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Defaults to the exact `|L^-1 w_s|_inf`.
    #[serde(default)]
    pub b: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub schema_version: u32,
    /// One-dimensional trigonometric dictionary with `2 max_freq + 1` elements.
    pub max_freq: u32,
    pub s: usize,
    /// Periodic grid size; defaults to `N`.
    #[serde(default)]
    pub grid: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_terms() -> usize {
    4
}

fn default_resolution() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaylorCheckConfig {
    pub schema_version: u32,
    pub dims: Vec<usize>,
    pub sparsities: Vec<usize>,
    pub n_cells: Vec<usize>,
    #[serde(default = "default_terms")]
    pub terms: usize,
    /// Points per active axis of the `A_s` test grid.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineStudyConfig {
    pub schema_version: u32,
    pub dictionary: DictionarySpec,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub m: Option<usize>,
    pub function: FunctionSpec,
    pub functional: FunctionalSpec,
    #[serde(default)]
    pub s: Option<usize>,
    pub iterations: usize,
    pub decoder: Decoder,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub schedule_bound: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub schema_version: u32,
    pub dictionary: DictionarySpec,
    pub class: ClassSpec,
    pub sweep: RateSweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

/// Runs `cmd` with the config text `config`, writing into `out_dir`.
pub fn run(cmd: Subcommand, config: &str, overrides: &Overrides, out_dir: &Path) -> Result<RunOutput> {
    let raw: serde_json::Value = parse_config(config)?;
    let seed = match (cmd.is_study(), overrides.seed) {
        (_, Some(seed)) => Some(seed),
        (true, None) => return Err(Error::Config(format!("{} requires --seed", cmd.name()))),
        (false, None) => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(overrides.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    fs::create_dir_all(out_dir)?;
    let trials = overrides.trials;
    let out = Emitter { dir: out_dir, stem: cmd.stem(), files: Vec::new() };
    pool.install(|| match cmd {
        Subcommand::CoherenceStudy => coherence_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
        Subcommand::DiscretizeStudy => discretize_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
        Subcommand::Recover => recover(parse_config(config)?, seed, out, raw),
        Subcommand::Oracle => oracle_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
        Subcommand::TaylorCheck => taylor_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
        Subcommand::Pipeline => pipeline_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
        Subcommand::Rates => rates_study(parse_config(config)?, trials, seed.unwrap_or_default(), out, raw),
    })
}

struct Emitter<'a> {
    dir: &'a Path,
    stem: String,
    files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Meta<'a, C: Serialize> {
    subcommand: String,
    library_version: &'static str,
    schema_version: u32,
    seed: Option<u64>,
    config: &'a serde_json::Value,
    resolved: &'a C,
    summary: &'a serde_json::Value,
    files: Vec<String>,
}

impl Emitter<'_> {
    fn csv<R: Serialize>(&mut self, rows: &[R]) -> Result<()> {
        let path = self.dir.join(format!("{}.csv", self.stem));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path)?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<()> {
        let path = self.dir.join(format!("{}_{suffix}.json", self.stem));
        write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn finish<C: Serialize>(
        mut self,
        raw: serde_json::Value,
        resolved: &C,
        seed: Option<u64>,
        summary: serde_json::Value,
    ) -> Result<RunOutput> {
        let path = self.dir.join(format!("{}.meta.json", self.stem));
        let meta = Meta {
            subcommand: self.stem.replace('_', "-"),
            library_version: env!("CARGO_PKG_VERSION"),
            schema_version: SCHEMA_VERSION,
            seed,
            config: &raw,
            resolved,
            summary: &summary,
            files: self
                .files
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
        };
        write_json(&path, &meta)?;
        self.files.push(path);
        Ok(RunOutput { files: self.files, summary })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

fn fraction(flags: impl Iterator<Item = bool>) -> f64 {
    let (hits, total) = flags.fold((0usize, 0usize), |(h, t), f| (h + f as usize, t + 1));
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn need_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CoherenceRow {
    trial: usize,
    m: usize,
    mu: f64,
    mu_bound: f64,
    mu_ok: bool,
    sbar: f64,
    s_lemma: usize,
    energy_min: f64,
    energy_max: f64,
    energy_lower: f64,
    energy_upper: f64,
    energy_ok: bool,
    pass: bool,
}

fn resolve_m(m: Option<usize>, dict: &TrigDictionary, eps: f64) -> Result<usize> {
    match m {
        Some(m) => Ok(m),
        None => min_samples_lemma8(dict.gamma(), dict.len(), eps),
    }
}

fn coherence_study(
    mut cfg: CoherenceStudyConfig,
    trials: Option<usize>,
    seed: u64,
    mut out: Emitter,
    raw: serde_json::Value,
) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let dict = cfg.dictionary.build()?;
    let m = resolve_m(cfg.m, &dict, cfg.eps)?;
    cfg.m = Some(m);
    let (gamma, n) = (dict.gamma(), dict.len());
    let mu_bound = coherence_bound_lemma8(gamma, m, n, cfg.eps)?;
    let s_lemma = lemma8_sparsity_at_least_one(gamma, m, n, cfg.eps)?;
    let rows: Vec<CoherenceRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let samples = draw_samples(dict.domain(), m, derive_seed(seed, 0, t as u64))?;
            let design = DesignMatrix::from_dictionary(&dict, &samples)?;
            let energy = column_energy_check(&design)?;
            let mu = design.mu();
            let mu_ok = mu <= mu_bound;
            Ok(CoherenceRow {
                trial: t,
                m,
                mu,
                mu_bound,
                mu_ok,
                sbar: design.sbar(),
                s_lemma,
                energy_min: energy.energies.iter().copied().fold(f64::INFINITY, f64::min),
                energy_max: energy.energies.iter().copied().fold(0.0, f64::max),
                energy_lower: energy.lower,
                energy_upper: energy.upper,
                energy_ok: energy.pass,
                pass: mu_ok && energy.pass,
            })
        })
        .collect::<Result<_>>()?;
    out.csv(&rows)?;
    let pass_rate = fraction(rows.iter().map(|r| r.pass));
    let summary = serde_json::json!({
        "m": m,
        "mu_bound": mu_bound,
        "s_lemma": s_lemma,
        "mu_pass_rate": fraction(rows.iter().map(|r| r.mu_ok)),
        "energy_pass_rate": fraction(rows.iter().map(|r| r.energy_ok)),
        "pass_rate": pass_rate,
        "target": 1.0 - cfg.eps,
        "meets_target": pass_rate >= 1.0 - cfg.eps,
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

#[derive(Debug, Serialize)]
struct DiscretizeRow {
    trial: usize,
    m: usize,
    s: usize,
    probes: usize,
    worst_lower: f64,
    worst_upper: f64,
    c1: f64,
    c2: f64,
    pass: bool,
}

fn discretize_study(
    mut cfg: DiscretizeStudyConfig,
    trials: Option<usize>,
    seed: u64,
    mut out: Emitter,
    raw: serde_json::Value,
) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let dict = cfg.dictionary.build()?;
    let m = resolve_m(cfg.m, &dict, cfg.eps)?;
    cfg.m = Some(m);
    let s = match cfg.s {
        Some(s) => s,
        None => lemma8_sparsity_at_least_one(dict.gamma(), m, dict.len(), cfg.eps)?,
    };
    cfg.s = Some(s);
    let rows: Vec<DiscretizeRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let samples = draw_samples(dict.domain(), m, derive_seed(seed, 0, t as u64))?;
            let entries = crate::coherence::evaluate(&dict, &samples)?;
            let rep = discretization_probe(&entries, dict.gamma(), s, 2.0, cfg.probes, &mut trial_rng(seed, 1, t as u64))?;
            Ok(DiscretizeRow {
                trial: t,
                m,
                s,
                probes: cfg.probes,
                worst_lower: rep.worst_lower,
                worst_upper: rep.worst_upper,
                c1: rep.c1,
                c2: rep.c2,
                pass: rep.pass,
            })
        })
        .collect::<Result<_>>()?;
    out.csv(&rows)?;
    let pass_rate = fraction(rows.iter().map(|r| r.pass));
    let summary = serde_json::json!({
        "m": m,
        "s": s,
        "pass_rate": pass_rate,
        "target": 1.0 - cfg.eps,
        "meets_target": pass_rate >= 1.0 - cfg.eps,
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

#[derive(Debug, Serialize)]
struct TraceCsvRow {
    k: usize,
    theta: f64,
    bound: f64,
    support_size: usize,
    l1_error: Option<f64>,
    support_contained: Option<bool>,
}

#[derive(Debug, Serialize)]
struct RecoverCode<'a> {
    function: &'a SyntheticFunction,
    target_support: Vec<usize>,
    code: &'a crate::sparse_coding::SparseCode,
    mu: f64,
    sbar: f64,
    rho: f64,
}

fn build_samples(spec: &SamplingSpec, dict: &TrigDictionary, seed: Option<u64>) -> Result<SampleSet> {
    match spec {
        SamplingSpec::Grid { per_axis } => Ok(SampleSet::uniform_grid(dict.domain(), *per_axis)),
        SamplingSpec::Random { m } => {
            let seed = seed.ok_or_else(|| Error::Config("random sampling requires a seed".into()))?;
            draw_samples(dict.domain(), *m, seed)
        }
    }
}

fn recover(mut cfg: RecoverConfig, seed: Option<u64>, mut out: Emitter, raw: serde_json::Value) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    let seed = seed.or(cfg.seed);
    cfg.seed = seed;
    let dict = cfg.dictionary.build()?;
    let samples = build_samples(&cfg.samples, &dict, seed.map(|v| derive_seed(v, 0, 0)))?;
    let f = cfg.function.sample(&dict, seed.map_or(0, |v| derive_seed(v, 1, 0)))?;
    let design = DesignMatrix::from_dictionary(&dict, &samples)?;
    let s = cfg.s.unwrap_or_else(|| max_admissible_sparsity(design.mu(), dict.len()).max(1));
    cfg.s = Some(s);
    let support = top_s_support(&f.coeffs, s);
    let mut w_s = vec![0.0; dict.len()];
    for &i in &support {
        w_s[i] = f.coeffs[i];
    }
    let y = design.entries() * DVector::from_column_slice(&f.coeffs);
    let delta = match cfg.delta {
        Some(v) => v,
        None => (&y - design.normalized() * DVector::from_iterator(dict.len(), w_s.iter().zip(design.normalizer().iter()).map(|(w, l)| w / l))).lp_norm(1),
    };
    cfg.delta = Some(delta);
    let b = cfg.b.unwrap_or_else(|| w_s.iter().zip(design.normalizer().iter()).map(|(w, l)| (w / l).abs()).fold(0.0, f64::max));
    cfg.b = Some(b);
    let res = encode(&design, y.as_slice(), &EncodeOptions::new(s, b, delta, cfg.iterations).with_oracle(w_s))?;
    let rows: Vec<TraceCsvRow> = res
        .trace
        .iter()
        .map(|r| TraceCsvRow {
            k: r.k,
            theta: r.theta,
            bound: r.bound,
            support_size: r.support_size,
            l1_error: r.l1_error,
            support_contained: r.support_contained,
        })
        .collect();
    out.csv(&rows)?;
    out.json(
        "code",
        &RecoverCode {
            function: &f,
            target_support: support,
            code: &res.code,
            mu: design.mu(),
            sbar: design.sbar(),
            rho: res.schedule.rho,
        },
    )?;
    let within = res.trace.iter().all(|r| r.l1_error.is_none_or(|e| e <= r.bound * (1.0 + 1e-9) + 1e-12));
    let summary = serde_json::json!({
        "m": design.m(),
        "n": design.n(),
        "s": s,
        "mu": design.mu(),
        "rho": res.schedule.rho,
        "final_l1_error": res.trace.last().and_then(|r| r.l1_error),
        "errors_within_bounds": within,
        "supports_contained": res.trace.iter().all(|r| r.support_contained != Some(false)),
    });
    out.finish(raw, &cfg, seed, summary)
}

#[derive(Debug, Serialize)]
struct OracleRow {
    trial: usize,
    s: usize,
    exhaustive_support: String,
    top_s_support: String,
    supports_equal: bool,
    exhaustive_residual: f64,
    omp_residual: f64,
    omp_ok: bool,
}

fn oracle_study(mut cfg: OracleConfig, trials: Option<usize>, seed: u64, mut out: Emitter, raw: serde_json::Value) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let dict = DictionarySpec { kind: crate::dictionary::DomainKind::UnitCube, d: 1, max_freq: cfg.max_freq }.build()?;
    let n = dict.len();
    let grid = cfg.grid.unwrap_or(n);
    cfg.grid = Some(grid);
    let samples = SampleSet::uniform_grid(dict.domain(), grid);
    let d = crate::coherence::evaluate(&dict, &samples)?;
    let s = cfg.s;
    let rows: Vec<OracleRow> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, 0, t as u64);
            let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y: Vec<f64> = (&d * DVector::from_column_slice(&c)).as_slice().to_vec();
            let ex = best_s_term_exhaustive(&d, &y, s, 2.0)?;
            let greedy = omp(&d, &y, s)?;
            let top = top_s_support(&c, s);
            Ok(OracleRow {
                trial: t,
                s,
                supports_equal: ex.support == top,
                exhaustive_support: join(&ex.support),
                top_s_support: join(&top),
                exhaustive_residual: ex.empirical_residual,
                omp_residual: greedy.empirical_residual,
                omp_ok: ex.empirical_residual <= greedy.empirical_residual + 1e-12,
            })
        })
        .collect::<Result<_>>()?;
    out.csv(&rows)?;
    let summary = serde_json::json!({
        "n": n,
        "grid": grid,
        "support_agreement": fraction(rows.iter().map(|r| r.supports_equal)),
        "omp_dominated": fraction(rows.iter().map(|r| r.omp_ok)),
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

#[derive(Debug, Serialize)]
struct TaylorRow {
    trial: usize,
    d: usize,
    s: usize,
    n_cells: usize,
    sup_error: f64,
    bound: f64,
    active_cells: usize,
    active_bound: f64,
    partition_deviation: f64,
    pass: bool,
}

fn taylor_study(mut cfg: TaylorCheckConfig, trials: Option<usize>, seed: u64, mut out: Emitter, raw: serde_json::Value) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let mut cases = Vec::new();
    for &d in &cfg.dims {
        for &s in cfg.sparsities.iter().filter(|&&s| 1 <= s && s <= d) {
            for &n in &cfg.n_cells {
                cases.push((d, s, n));
            }
        }
    }
    if cases.is_empty() {
        return Err(Error::Config("no (d, s, n_cells) case with 1 <= s <= d".into()));
    }
    let deviations: Vec<((usize, usize), f64)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.n_cells.iter().map(move |&n| (d, n)))
        .map(|(d, n)| Ok(((d, n), partition_check(n, d, 4 * n + 1)?)))
        .collect::<Result<_>>()?;
    let deviation = |d: usize, n: usize| deviations.iter().find(|(k, _)| *k == (d, n)).map_or(f64::NAN, |(_, v)| *v);
    let jobs: Vec<(usize, usize, usize, usize)> =
        (0..cfg.trials).flat_map(|t| cases.iter().map(move |&(d, s, n)| (t, d, s, n))).collect();
    let rows: Vec<TaylorRow> = jobs
        .par_iter()
        .map(|&(t, d, s, n)| {
            let f = RandomLipschitz::sample(d, cfg.terms, derive_seed(seed, d as u64, t as u64))?;
            let approx = localized_taylor(&f, 0, 1.0, n, s)?;
            let sup_error = sup_error_on_sparse_grid(&f, &approx, cfg.resolution);
            let bound = taylor_error_bound(d, 0, 1.0, n)?;
            let (cells, active_bound) = active_cells(d, n, s)?;
            let partition_deviation = deviation(d, n);
            Ok(TaylorRow {
                trial: t,
                d,
                s,
                n_cells: n,
                sup_error,
                bound,
                active_cells: cells.len(),
                active_bound,
                partition_deviation,
                pass: sup_error <= bound && cells.len() as f64 <= active_bound && partition_deviation <= 1e-12,
            })
        })
        .collect::<Result<_>>()?;
    out.csv(&rows)?;
    let summary = serde_json::json!({
        "cases": rows.len(),
        "pass_rate": fraction(rows.iter().map(|r| r.pass)),
        "max_error_ratio": rows.iter().map(|r| r.sup_error / r.bound).fold(0.0, f64::max),
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

#[derive(Debug, Serialize)]
struct PipelineRow {
    trial: usize,
    m: usize,
    s: usize,
    iterations: usize,
    mu: f64,
    l2_error: f64,
    p_f: f64,
    p_hat: f64,
    abs_error: f64,
    holder_bound: f64,
    encoder_bound: f64,
    sigma_hat: f64,
    composite_bound: f64,
    valid: bool,
    holder_ok: bool,
    composite_ok: bool,
}

fn pipeline_study(mut cfg: PipelineStudyConfig, trials: Option<usize>, seed: u64, mut out: Emitter, raw: serde_json::Value) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let dict = cfg.dictionary.build()?;
    let m = resolve_m(cfg.m, &dict, cfg.eps)?;
    cfg.m = Some(m);
    let functional = make_functional(cfg.functional.kind(dict.len())?, &dict)?;
    let reports: Vec<PipelineReport> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let samples = draw_samples(dict.domain(), m, derive_seed(seed, 0, t as u64))?;
            let f = cfg.function.sample(&dict, derive_seed(seed, 1, t as u64))?;
            let s = match cfg.s {
                Some(s) => s,
                None => max_admissible_sparsity(DesignMatrix::from_dictionary(&dict, &samples)?.mu(), dict.len()).max(1),
            };
            let pc = PipelineConfig {
                s,
                iterations: cfg.iterations,
                delta: cfg.delta,
                schedule_bound: cfg.schedule_bound,
                decoder: cfg.decoder,
            };
            evaluate_pipeline(&functional, &f, &dict, &samples, &pc)
        })
        .collect::<Result<_>>()?;
    let beta = functional.beta();
    let rows: Vec<PipelineRow> = reports
        .iter()
        .enumerate()
        .map(|(t, r)| PipelineRow {
            trial: t,
            m,
            s: r.s,
            iterations: r.iterations,
            mu: r.constants.mu,
            l2_error: r.l2_error,
            p_f: r.p_f,
            p_hat: r.p_hat,
            abs_error: r.abs_error,
            holder_bound: r.holder_bound,
            encoder_bound: r.encoder_bound,
            sigma_hat: r.sigma_hat,
            composite_bound: r.composite_bound,
            valid: r.valid,
            holder_ok: r.decoder.is_some() || r.abs_error <= r.holder_bound + 1e-10,
            composite_ok: !r.valid || r.abs_error <= r.composite_bound.powf(beta) + r.decoder.as_ref().map_or(0.0, |d| d.decoder_error),
        })
        .collect();
    out.csv(&rows)?;
    out.json("reports", &reports)?;
    let summary = serde_json::json!({
        "m": m,
        "valid_rate": fraction(rows.iter().map(|r| r.valid)),
        "holder_pass_rate": fraction(rows.iter().map(|r| r.holder_ok)),
        "composite_pass_rate": fraction(rows.iter().map(|r| r.composite_ok)),
        "mean_abs_error": mean(&rows.iter().map(|r| r.abs_error).collect::<Vec<_>>()),
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

fn rates_study(mut cfg: RatesConfig, trials: Option<usize>, seed: u64, mut out: Emitter, raw: serde_json::Value) -> Result<RunOutput> {
    check_schema(cfg.schema_version)?;
    cfg.trials = trials.unwrap_or(cfg.trials);
    need_trials(cfg.trials)?;
    let dict = cfg.dictionary.build()?;
    let table = rate_experiment(&cfg.class, &dict, &cfg.sweep, cfg.trials, seed)?;
    out.csv(&table.rows)?;
    let summary = serde_json::json!({
        "axis": table.axis,
        "slope": table.slope,
        "reference_slope": table.reference_slope,
    });
    out.finish(raw, &cfg, Some(seed), summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names_round_trip() {
        for c in Subcommand::ALL {
            assert_eq!(c.name().parse::<Subcommand>().unwrap(), c);
        }
        assert!("nope".parse::<Subcommand>().is_err());
    }

    #[test]
    fn config_errors_carry_position() {
        let text = "{\n  \"schema_version\": 1,\n  \"max_freq\": 3,\n  \"s\": 1,\n  \"bogus\": 2\n}";
        let err = parse_config::<OracleConfig>(text).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn schema_version_checked() {
        assert!(check_schema(1).is_ok());
        assert!(matches!(check_schema(2), Err(Error::Config(_))));
    }

    #[test]
    fn padding() {
        assert_eq!(pad(&[1.0], 3).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(pad(&[1.0; 4], 3).is_err());
    }
}
