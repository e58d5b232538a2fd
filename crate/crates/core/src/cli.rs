//! The `smallgan` command-line tool.
//!
//! Exit codes: 0 on success, 1 for data or format errors, 2 for usage
//! errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{greedy_coreset, PointSet};
use crate::metrics::ModeReport;
use crate::projection::{import_csv, load_cache, pool_for_cache, save_cache};
use crate::sampling::{CoresetMode, PriorSpec, SamplerConfig};
use crate::toygan::{
    eval_seed, evaluate, logs_to_csv, make_grid_mixture, save_checkpoint, train, GanConfig,
    DEFAULT_DATASET_SIZE, DEFAULT_HIDDEN_WIDTH, DEFAULT_LEARNING_RATE, DEFAULT_STEPS, EVAL_SAMPLES,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Header of the experiment results CSV.
pub const RESULTS_HEADER: [&str; 6] = [
    "arm",
    "seed",
    "modes",
    "recovered_pct",
    "high_quality_pct",
    "wall_s",
];

#[derive(Debug, Parser)]
#[command(name = "smallgan", version, about = "Core-set minibatch selection for GAN training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train core-set and random-batch GANs on grid mixtures and score mode recovery.
    Gmm(GmmArgs),
    /// Time greedy core-set selection at training-step sizes.
    Bench(BenchArgs),
    /// Select a core-set of dataset ids from an embedding cache.
    Coreset(CoresetArgs),
    /// Convert an `id,v0,v1,...` CSV into a binary embedding cache.
    ImportCsv(ImportArgs),
}

/// Projection dimension flag: a positive integer, or `none` for raw vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProjDim(pub Option<usize>);

fn parse_proj_dim(s: &str) -> Result<ProjDim, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(ProjDim(None));
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `none`, got `{s}`")),
        Ok(v) => Ok(ProjDim(Some(v))),
    }
}

#[derive(Debug, Clone, Args)]
pub struct GmmArgs {
    /// Mixture sizes (perfect squares), comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub modes: Vec<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 4)]
    pub prior_factor: usize,
    #[arg(long, default_value_t = 8)]
    pub target_factor: usize,
    /// Sampling sites compressed in the core-set arm.
    #[arg(long, default_value_t = CoresetMode::Both)]
    pub coreset: CoresetMode,
    #[arg(long, default_value = "32", value_parser = parse_proj_dim)]
    pub proj_dim: ProjDim,
    /// Number of seeds; runs use seeds `seed_base .. seed_base + seeds`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    /// Hidden layer width of both networks.
    #[arg(long, default_value_t = DEFAULT_HIDDEN_WIDTH)]
    pub hidden: usize,
    /// Adam learning rate for both networks.
    #[arg(long, default_value_t = DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    /// Size of the finite training set drawn from the mixture.
    #[arg(long, default_value_t = DEFAULT_DATASET_SIZE)]
    pub dataset_size: usize,
    #[arg(long, default_value_t = EVAL_SAMPLES)]
    pub eval_samples: usize,
    /// Results CSV; a JSON sidecar is written next to it as `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Write `wall_s` as 0 so repeated runs produce identical files.
    #[arg(long)]
    pub zero_timings: bool,
    /// Directory for per-run step-loss CSVs.
    #[arg(long)]
    pub logs_dir: Option<PathBuf>,
    /// Directory for final model checkpoints.
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Pool size for the per-call measurement (default: k x target factor).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 128)]
    pub k: usize,
    /// Dimension of the projected target embeddings.
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub prior_factor: usize,
    #[arg(long, default_value_t = 8)]
    pub target_factor: usize,
    #[arg(long, default_value_t = 100)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CoresetArgs {
    /// Binary embedding cache.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value = "32", value_parser = parse_proj_dim)]
    pub proj_dim: ProjDim,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Selected ids, one per line; a JSON sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Gmm(args) => cmd_gmm(&args).map(|_| ()),
        Command::Bench(args) => cmd_bench(&args).map(|_| ()),
        Command::Coreset(args) => cmd_coreset_file(&args).map(|_| ()),
        Command::ImportCsv(args) => {
            let cache = import_csv(&args.input)?;
            save_cache(&cache, &args.out)?;
            Ok(())
        }
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Coreset,
    Random,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Coreset => "coreset",
            Arm::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub modes: usize,
    pub wall_s: f64,
    pub report: ModeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub modes: usize,
    pub runs: usize,
    pub mean_recovered_pct: f64,
    pub mean_high_quality_pct: f64,
}

/// Everything `gmm` reports, as written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub sigma: f64,
    pub coreset_arm_mode: CoresetMode,
    pub seeds: Vec<u64>,
    pub modes: Vec<usize>,
    pub eval_samples: usize,
    pub config: GanConfig,
    pub runs: Vec<ArmRun>,
    pub summary: Vec<ArmSummary>,
}

impl ExperimentResult {
    pub fn summary_for(&self, arm: Arm, modes: usize) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm && s.modes == modes)
    }
}

/// Validated training configuration shared by both arms.
pub fn gmm_config(args: &GmmArgs) -> Result<GanConfig, CliError> {
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if args.eval_samples == 0 {
        return Err(usage("--eval-samples must be at least 1"));
    }
    if !(args.sigma.is_finite() && args.sigma > 0.0) {
        return Err(usage("--sigma must be positive"));
    }
    for &m in &args.modes {
        make_grid_mixture(m, args.sigma).map_err(|e| usage(format!("--modes {m}: {e}")))?;
    }
    let mut cfg = GanConfig {
        hidden_width: args.hidden,
        steps: args.steps,
        dataset_size: args.dataset_size,
        sampler: SamplerConfig {
            batch_size: args.batch,
            prior_factor: args.prior_factor,
            target_factor: args.target_factor,
            projection_dim: args.proj_dim.0,
            ..SamplerConfig::default()
        }
        .with_mode(args.coreset),
        ..GanConfig::default()
    };
    cfg.generator_opt.lr = args.lr;
    cfg.discriminator_opt.lr = args.lr;
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Trains every (modes, seed, arm) combination and writes the results CSV
/// plus its JSON sidecar.
pub fn cmd_gmm(args: &GmmArgs) -> Result<ExperimentResult, CliError> {
    let base = gmm_config(args)?;
    let seeds: Vec<u64> = (args.seed_base..args.seed_base + args.seeds).collect();

    let mut jobs = Vec::new();
    for &modes in &args.modes {
        for &seed in &seeds {
            for arm in [Arm::Coreset, Arm::Random] {
                jobs.push((modes, seed, arm));
            }
        }
    }

    let runs: Vec<ArmRun> = jobs
        .par_iter()
        .map(|&(modes, seed, arm)| -> Result<ArmRun, CliError> {
            let mixture = make_grid_mixture(modes, args.sigma)?;
            let mut cfg = base.clone();
            cfg.seed = seed;
            if arm == Arm::Random {
                cfg.sampler = cfg.sampler.with_mode(CoresetMode::None);
            }
            let start = Instant::now();
            let outcome = train(&cfg, &mixture)?;
            let wall_s = if args.zero_timings {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            };
            let report = evaluate(&outcome.model, &cfg.prior(), &mixture, args.eval_samples, eval_seed(seed))?;
            let tag = format!("{}_seed{}_modes{}", arm.as_str(), seed, modes);
            if let Some(dir) = &args.logs_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("{tag}.csv")), logs_to_csv(&outcome.logs))?;
            }
            if let Some(dir) = &args.models_dir {
                fs::create_dir_all(dir)?;
                save_checkpoint(&outcome.model, dir.join(format!("{tag}.sgck")))?;
            }
            Ok(ArmRun {
                arm,
                seed,
                modes,
                wall_s,
                report,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut summary = Vec::new();
    for &modes in &args.modes {
        for arm in [Arm::Coreset, Arm::Random] {
            let sel: Vec<&ArmRun> = runs.iter().filter(|r| r.arm == arm && r.modes == modes).collect();
            let n = sel.len() as f64;
            summary.push(ArmSummary {
                arm,
                modes,
                runs: sel.len(),
                mean_recovered_pct: sel.iter().map(|r| r.report.recovered_pct).sum::<f64>() / n,
                mean_high_quality_pct: sel.iter().map(|r| r.report.high_quality_pct).sum::<f64>() / n,
            });
        }
    }

    let result = ExperimentResult {
        sigma: args.sigma,
        coreset_arm_mode: args.coreset,
        seeds,
        modes: args.modes.clone(),
        eval_samples: args.eval_samples,
        config: base,
        runs,
        summary,
    };
    fs::write(&args.out, results_csv(&result.runs))?;
    fs::write(
        sidecar_path(&args.out),
        serde_json::to_string_pretty(&result).expect("serializable") + "\n",
    )?;
    for s in &result.summary {
        eprintln!(
            "modes={} arm={} runs={} recovered={:.2}% high_quality={:.2}%",
            s.modes,
            s.arm.as_str(),
            s.runs,
            s.mean_recovered_pct,
            s.mean_high_quality_pct
        );
    }
    Ok(result)
}

/// Results rows with header `arm,seed,modes,recovered_pct,high_quality_pct,wall_s`.
pub fn results_csv(runs: &[ArmRun]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER).expect("in-memory write");
    for r in runs {
        w.write_record([
            r.arm.as_str().to_string(),
            r.seed.to_string(),
            r.modes.to_string(),
            r.report.recovered_pct.to_string(),
            r.report.high_quality_pct.to_string(),
            r.wall_s.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// One parsed results row.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRow {
    pub arm: Arm,
    pub seed: u64,
    pub modes: usize,
    pub recovered_pct: f64,
    pub high_quality_pct: f64,
    pub wall_s: f64,
}

pub fn read_results_csv(text: &str) -> Result<Vec<ResultRow>, Error> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.map_err(|e| Error::format("csv", e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_s: f64,
    pub std_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

impl TimingStats {
    fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        TimingStats {
            mean_s: mean,
            std_s: var.sqrt(),
            min_s: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max_s: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub latent_dim: usize,
    pub prior_pool: usize,
    pub target_pool: usize,
    pub repeats: usize,
    pub warmup: usize,
    /// One `greedy_coreset(n x dim, k)` call.
    pub per_call: TimingStats,
    /// Prior plus target selection for one simulated training step.
    pub per_step: TimingStats,
    pub per_step_prior: TimingStats,
    pub per_step_target: TimingStats,
}

/// Discarded iterations before timing starts.
pub const BENCH_WARMUP: usize = 5;

fn timed_selection(points: &PointSet, k: usize, seed: u64) -> Result<f64, CliError> {
    let start = Instant::now();
    let sel = greedy_coreset(points, k, seed)?;
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(sel);
    Ok(elapsed)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<BenchReport, CliError> {
    if args.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    if args.k == 0 || args.dim == 0 || args.latent_dim == 0 {
        return Err(usage("--k, --dim and --latent-dim must be positive"));
    }
    if args.prior_factor == 0 || args.target_factor == 0 {
        return Err(usage("oversampling factors must be at least 1"));
    }
    let n = args.n.unwrap_or(args.k * args.target_factor);
    if n < args.k {
        return Err(usage(format!("--n {n} is smaller than --k {}", args.k)));
    }
    let prior_pool = args.k * args.prior_factor;
    let target_pool = args.k * args.target_factor;
    let prior = PriorSpec {
        dim: args.latent_dim,
        ..PriorSpec::default()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let gaussian = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        PointSet::new(Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal)))
    };

    let mut per_call = Vec::with_capacity(args.repeats);
    let mut prior_t = Vec::with_capacity(args.repeats);
    let mut target_t = Vec::with_capacity(args.repeats);
    for i in 0..BENCH_WARMUP + args.repeats {
        let pool = gaussian(n, args.dim, &mut rng)?;
        let t_call = timed_selection(&pool, args.k, rng.gen())?;

        let z = PointSet::new(Array2::from_shape_simple_fn((prior_pool, prior.dim), || {
            rng.gen_range(prior.low..=prior.high)
        }))?;
        let t_prior = timed_selection(&z, args.k, rng.gen())?;
        let emb = gaussian(target_pool, args.dim, &mut rng)?;
        let t_target = timed_selection(&emb, args.k, rng.gen())?;

        if i >= BENCH_WARMUP {
            per_call.push(t_call);
            prior_t.push(t_prior);
            target_t.push(t_target);
        }
    }
    let step: Vec<f64> = prior_t.iter().zip(&target_t).map(|(a, b)| a + b).collect();
    let report = BenchReport {
        n,
        k: args.k,
        dim: args.dim,
        latent_dim: args.latent_dim,
        prior_pool,
        target_pool,
        repeats: args.repeats,
        warmup: BENCH_WARMUP,
        per_call: TimingStats::from_samples(&per_call),
        per_step: TimingStats::from_samples(&step),
        per_step_prior: TimingStats::from_samples(&prior_t),
        per_step_target: TimingStats::from_samples(&target_t),
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    match &args.out {
        Some(path) => fs::write(path, json)?,
        None => print!("{json}"),
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoresetSidecar {
    pub input: String,
    pub n: usize,
    pub input_dim: usize,
    pub k: usize,
    pub proj_dim: Option<usize>,
    /// Dimension of the space the selection ran in.
    pub selection_dim: usize,
    pub seed: u64,
    pub coverage_radius: f64,
    /// Selected ids in greedy selection order.
    pub selection_order: Vec<u64>,
}

pub fn cmd_coreset_file(args: &CoresetArgs) -> Result<CoresetSidecar, CliError> {
    let cache = load_cache(&args.input)?;
    if args.k == 0 || args.k > cache.len() {
        return Err(usage(format!(
            "--k must be in 1..={} for this cache, got {}",
            cache.len(),
            args.k
        )));
    }
    let pool = pool_for_cache(&cache, args.proj_dim.0, args.seed)?;
    let sel = greedy_coreset(pool.points(), args.k, args.seed)?;

    let mut rows = sel.indices.clone();
    rows.sort_unstable();
    let mut ids_text = String::new();
    for r in rows {
        ids_text.push_str(&pool.ids()[r].to_string());
        ids_text.push('\n');
    }
    let sidecar = CoresetSidecar {
        input: args.input.display().to_string(),
        n: cache.len(),
        input_dim: cache.dim(),
        k: args.k,
        proj_dim: args.proj_dim.0,
        selection_dim: pool.points().dim(),
        seed: args.seed,
        coverage_radius: sel.coverage_radius,
        selection_order: sel.indices.iter().map(|&r| pool.ids()[r]).collect(),
    };
    fs::write(&args.out, ids_text)?;
    fs::write(
        sidecar_path(&args.out),
        serde_json::to_string_pretty(&sidecar).expect("serializable") + "\n",
    )?;
    Ok(sidecar)
}
