//! Command-line front end for the `sq` binary.
//!
//! Every command that writes files also writes `manifest.json`, which holds
//! the fully resolved arguments; `sq replay --manifest <file>` re-runs it.
//! Exit codes: 0 success, 1 usage error, 2 input-format error, 3 divergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{contrast_ratio, evaluate_with_labels, label_quants, EvaluationReport};
use crate::io;
use crate::kmeans::{
    run_generalized_gradient, run_lloyd, run_minibatch, run_stochastic_kmeans, EmptyClusterPolicy,
    KMeansAveraging, KMeansConfig, Seeding,
};
use crate::model::{Codebook, ConvergenceTrace, FeatureSet, LearningSchedule, ProjectionRegion};
use crate::objective::{empirical_objective, interchange_lower_bound};
use crate::optim::{BiasCorrection, Hyperparams, Variant};
use crate::sq::{run_multistart, Averaging, InitMode, SamplingMode, SqConfig};
use crate::synth::{generate, MixtureSpec};

pub const CODEBOOK_FILE: &str = "codebook.sqcb";
pub const TRACE_FILE: &str = "trace.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCATTER_FILE: &str = "scatter.csv";

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sq", version, about = "Stochastic Quantization and K-Means clustering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Train a codebook with single-sample stochastic quantization
    Quantize(QuantizeArgs),
    /// Run a K-Means family baseline
    Kmeans(KMeansArgs),
    /// Score a codebook as a nearest-quant classifier
    Evaluate(EvaluateArgs),
    /// Print the interchange lower bound for a set of center regions
    Bound(BoundArgs),
    /// Print the relative contrast of point-to-center distances
    Diagnose(DiagnoseArgs),
    /// Write a Gaussian mixture sample
    Synth(SynthArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Sgd,
    Momentum,
    Nag,
    Adagrad,
    Rmsprop,
    Adam,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Sgd => Variant::Sgd,
            VariantArg::Momentum => Variant::Momentum,
            VariantArg::Nag => Variant::Nag,
            VariantArg::Adagrad => Variant::AdaGrad,
            VariantArg::Rmsprop => Variant::RmsProp,
            VariantArg::Adam => Variant::Adam,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleArg {
    /// ρ_t = rate
    Constant,
    /// ρ_t = rate / (1 + t)^decay
    Poly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionArg {
    /// Bounding box of the data, widened by --margin times its width
    AutoBox,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageArg {
    None,
    Cesaro,
    GroupSize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitArg {
    /// K distinct data points
    Sample,
    /// One labeled point per class; K defaults to the class count
    PerLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingArg {
    /// Independent weighted draws
    Iid,
    /// A fresh permutation every I iterations
    Shuffle,
}

impl From<SamplingArg> for SamplingMode {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Iid => SamplingMode::IidWeighted,
            SamplingArg::Shuffle => SamplingMode::EpochShuffle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasArg {
    Literal,
    PowerT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Lloyd,
    Minibatch,
    Gradient,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedingArg {
    Random,
    Kmeanspp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyArg {
    Keep,
    Reseed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointsFormat {
    Csv,
    Embeddings,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct QuantizeArgs {
    /// Embedding file (SQEMB1) or comma-separated points
    #[arg(long)]
    pub input: PathBuf,
    /// Read the last CSV column as a class label (-1 for unlabeled)
    #[arg(long)]
    pub label_column: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "sgd")]
    pub variant: VariantArg,
    /// Number of quants; defaults to the class count with --init per-label
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub rank: f64,
    /// Order p of the l_p distance used for assignment and the objective
    #[arg(long, default_value_t = 2.0)]
    pub norm: f64,
    /// Base learning rate; defaults to the variant's standard rate
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum, default_value = "constant")]
    pub schedule: ScheduleArg,
    /// Exponent of the polynomial schedule
    #[arg(long, default_value_t = 0.75)]
    pub decay: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    pub region: RegionArg,
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    #[arg(long, value_enum, default_value = "none")]
    pub average: AverageArg,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value = "sample")]
    pub init: InitArg,
    #[arg(long, value_enum, default_value = "iid")]
    pub sampling: SamplingArg,
    /// Iterations between objective evaluations; defaults to I
    #[arg(long)]
    pub eval_stride: Option<u64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.9)]
    pub rms_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "literal")]
    pub bias_correction: BiasArg,
    /// Also write scatter.csv with points and centers
    #[arg(long)]
    pub scatter: bool,
    /// Leave wall-clock time out of the manifest
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct KMeansArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label_column: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "lloyd")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "kmeanspp")]
    pub seeding: SeedingArg,
    #[arg(long)]
    pub k: usize,
    /// Epochs (lloyd, gradient) or iterations (minibatch, stochastic)
    #[arg(long, default_value_t = 300)]
    pub iters: u64,
    /// Stop when no center moves farther than this
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Rank r for the gradient and stochastic modes
    #[arg(long, default_value_t = 2.0)]
    pub rank: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, value_enum, default_value = "poly")]
    pub schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.75)]
    pub decay: f64,
    /// Gradient mode: scale each center's rate by I / N_k
    #[arg(long)]
    pub scale_by_group_size: bool,
    #[arg(long, value_enum, default_value = "keep")]
    pub empty: EmptyArg,
    #[arg(long, value_enum, default_value = "none")]
    pub average: AverageArg,
    #[arg(long, value_enum, default_value = "none")]
    pub region: RegionArg,
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    #[arg(long, value_enum, default_value = "iid")]
    pub sampling: SamplingArg,
    #[arg(long)]
    pub eval_stride: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub scatter: bool,
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    /// Labeled test points
    #[arg(long)]
    pub test: PathBuf,
    /// Labeled points used to label the quants; defaults to the labels
    /// stored in the codebook file
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub label_column: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label_column: bool,
    /// JSON file: {"regions": [{"lower": [..], "upper": [..]}, ...]}
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub rank: f64,
    #[arg(long, default_value_t = 2.0)]
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub label_column: bool,
    #[arg(long)]
    pub codebook: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Component means, `;`-separated, coordinates `,`-separated
    #[arg(long, default_value = "0,0;6,0;3,5")]
    pub means: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: PointsFormat,
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Random generator behind every seeded draw.
    pub generator: String,
    pub seed: u64,
    /// Resolved arguments, defaults included.
    pub config: Command,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub final_objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// Maps an error to the process exit code.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Diverged(_) => EXIT_DIVERGED,
        Error::Format(_)
        | Error::Io(_)
        | Error::MissingLabels(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidFeatureSet(_)
        | Error::InvalidCodebook(_)
        | Error::InvalidRegion(_)
        | Error::UndefinedContrast { .. } => EXIT_INPUT,
        Error::InvalidConfig(_) | Error::InvalidSchedule(_) => EXIT_USAGE,
    }
}

/// Caps the worker pool at `SQ_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("SQ_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // fails only if the pool was already built, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses `args`, runs the command and returns the exit code. Results go to
/// `stdout`; diagnostics go to `stderr` as single lines.
pub fn main_with_args<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let rendered = e.to_string();
            let line = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            let _ = writeln!(stderr, "{line}");
            return EXIT_USAGE;
        }
    };
    match run(cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match command {
        Command::Quantize(a) => cmd_quantize(a, stdout, stderr),
        Command::Kmeans(a) => cmd_kmeans(a, stdout),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::Bound(a) => cmd_bound(a, stdout),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Replay(a) => cmd_replay(a, stdout, stderr),
    }
}

/// Reads an embedding file when the magic matches, plain points otherwise.
pub fn load_points(path: &Path, label_column: bool) -> Result<FeatureSet<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(io::EMBEDDING_MAGIC) {
        return io::decode_embeddings(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|e| crate::error::FormatError::Parse {
        line: 0,
        message: format!("not an embedding file and not UTF-8 text: {e}"),
    })?;
    io::parse_points(&text, label_column)
}

fn schedule(kind: ScheduleArg, rate: f64, decay: f64) -> LearningSchedule<f64> {
    match kind {
        ScheduleArg::Constant => LearningSchedule::constant(rate),
        ScheduleArg::Poly => LearningSchedule::polynomial(rate, decay),
    }
}

fn region(kind: RegionArg, data: &FeatureSet<f64>, margin: f64) -> Result<ProjectionRegion<f64>> {
    match kind {
        RegionArg::None => Ok(ProjectionRegion::Unbounded),
        RegionArg::AutoBox => {
            if !(margin >= 0.0) {
                return Err(Error::InvalidConfig(format!("margin {margin} < 0")));
            }
            ProjectionRegion::data_box(data, margin)
        }
    }
}

fn quant_labels(codebook: &Codebook<f64>, data: &FeatureSet<f64>) -> Result<Option<Vec<Option<u32>>>> {
    match data.labels() {
        Some(l) if l.labeled_count() > 0 => label_quants(codebook, data).map(Some),
        _ => Ok(None),
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn run_artifacts(
        &mut self,
        data: &FeatureSet<f64>,
        codebook: &Codebook<f64>,
        trace: &ConvergenceTrace<f64>,
        scatter: bool,
    ) -> Result<()> {
        let labels = quant_labels(codebook, data)?;
        io::write_codebook(self.path(CODEBOOK_FILE), codebook, labels.as_deref())?;
        io::write_trace(self.path(TRACE_FILE), trace)?;
        if scatter {
            fs::write(
                self.path(SCATTER_FILE),
                io::encode_scatter(data, codebook, labels.as_deref()),
            )?;
        }
        Ok(())
    }

    fn manifest(
        mut self,
        config: Command,
        seed: u64,
        inputs: Vec<PathBuf>,
        final_objective: Option<f64>,
        started: Option<Instant>,
    ) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        let manifest = RunManifest {
            tool: "sq".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            generator: "ChaCha8 (rand_chacha::ChaCha8Rng::seed_from_u64)".into(),
            seed,
            config,
            inputs,
            outputs: std::mem::take(&mut self.written),
            final_objective,
            wall_clock_seconds: started.map(|s| s.elapsed().as_secs_f64()),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Writes the partial trace of a diverged run, then passes the error on.
fn save_divergence(dir: &Path, error: Error) -> Error {
    if let Error::Diverged(d) = &error {
        if fs::create_dir_all(dir).is_ok() {
            let _ = io::write_trace(dir.join(TRACE_FILE), &d.trace);
        }
    }
    error
}

fn cmd_quantize(mut a: QuantizeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let data = load_points(&a.input, a.label_column)?;
    let variant: Variant = a.variant.into();
    let k = match (a.k, a.init) {
        (Some(k), _) => k,
        (None, InitArg::PerLabel) => data
            .labels()
            .map(|l| l.class_count() as usize)
            .ok_or_else(|| Error::MissingLabels("--init per-label needs labeled input".into()))?,
        (None, InitArg::Sample) => {
            return Err(Error::InvalidConfig("--k is required unless --init per-label".into()))
        }
    };
    a.k = Some(k);
    let rate = *a.rate.get_or_insert(variant.default_rate());
    let stride = *a.eval_stride.get_or_insert(data.len() as u64);
    if a.norm != 2.0 {
        let _ = writeln!(
            stderr,
            "warning: --norm {} changes assignment and objective; gradients stay Euclidean",
            a.norm
        );
    }
    let config = SqConfig {
        k,
        rank: a.rank,
        norm_order: a.norm,
        variant,
        hyper: Hyperparams {
            momentum: a.momentum,
            rms_decay: a.rms_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            epsilon: a.epsilon,
            bias_correction: match a.bias_correction {
                BiasArg::Literal => BiasCorrection::Literal,
                BiasArg::PowerT => BiasCorrection::PowerT,
            },
        },
        schedule: schedule(a.schedule, rate, a.decay),
        iterations: a.iters,
        region: region(a.region, &data, a.margin)?,
        sampling: a.sampling.into(),
        seed: a.seed,
        init: match a.init {
            InitArg::Sample => InitMode::SampleFromData,
            InitArg::PerLabel => InitMode::PerLabel,
        },
        averaging: match a.average {
            AverageArg::None => Averaging::None,
            AverageArg::Cesaro => Averaging::Cesaro,
            AverageArg::GroupSize => {
                return Err(Error::InvalidConfig(
                    "--average group-size is only available for kmeans".into(),
                ))
            }
        },
        eval_stride: Some(stride),
        restarts: a.restarts,
    };
    let run = run_multistart(&data, &config).map_err(|e| save_divergence(&a.out_dir, e))?;
    if !run.diverged.is_empty() {
        let _ = writeln!(stderr, "warning: restarts {:?} diverged", run.diverged);
    }
    let objective = empirical_objective(&data, &run.best.codebook)?;
    let mut out = Outputs::new(&a.out_dir)?;
    out.run_artifacts(&data, &run.best.codebook, &run.best.trace, a.scatter)?;
    let inputs = vec![a.input.clone()];
    let (seed, timing) = (a.seed, (!a.omit_timing).then_some(started));
    out.manifest(Command::Quantize(a), seed, inputs, Some(objective), timing)?;
    writeln!(stdout, "{objective}")?;
    Ok(())
}

fn cmd_kmeans(mut a: KMeansArgs, stdout: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let data = load_points(&a.input, a.label_column)?;
    let stride = *a.eval_stride.get_or_insert(match a.mode {
        ModeArg::Stochastic => data.len() as u64,
        ModeArg::Minibatch => data.len().div_ceil(a.batch.max(1)) as u64,
        ModeArg::Lloyd | ModeArg::Gradient => 1,
    });
    let config = KMeansConfig {
        k: a.k,
        max_iter: a.iters,
        tolerance: a.tol,
        seeding: match a.seeding {
            SeedingArg::Random => Seeding::UniformRandom,
            SeedingArg::Kmeanspp => Seeding::KMeansPlusPlus,
        },
        empty_policy: match a.empty {
            EmptyArg::Keep => EmptyClusterPolicy::Keep,
            EmptyArg::Reseed => EmptyClusterPolicy::ReseedFarthest,
        },
        rank: a.rank,
        schedule: schedule(a.schedule, a.rate, a.decay),
        scale_by_group_size: a.scale_by_group_size,
        batch_size: a.batch,
        seed: a.seed,
        region: region(a.region, &data, a.margin)?,
        sampling: a.sampling.into(),
        averaging: match a.average {
            AverageArg::None => KMeansAveraging::None,
            AverageArg::Cesaro => KMeansAveraging::Cesaro,
            AverageArg::GroupSize => KMeansAveraging::GroupSize,
        },
        eval_stride: Some(stride),
    };
    let (codebook, trace) = match a.mode {
        ModeArg::Lloyd => {
            let r = run_lloyd(&data, &config)?;
            (r.codebook, r.trace)
        }
        ModeArg::Minibatch => {
            let r = run_minibatch(&data, &config)?;
            (r.codebook, r.trace)
        }
        ModeArg::Gradient => {
            let r = run_generalized_gradient(&data, &config)
                .map_err(|e| save_divergence(&a.out_dir, e))?;
            (r.codebook, r.trace)
        }
        ModeArg::Stochastic => {
            let r = run_stochastic_kmeans(&data, &config)
                .map_err(|e| save_divergence(&a.out_dir, e))?;
            (r.codebook, r.trace)
        }
    };
    let objective = empirical_objective(&data, &codebook)?;
    let mut out = Outputs::new(&a.out_dir)?;
    out.run_artifacts(&data, &codebook, &trace, a.scatter)?;
    let inputs = vec![a.input.clone()];
    let (seed, timing) = (a.seed, (!a.omit_timing).then_some(started));
    out.manifest(Command::Kmeans(a), seed, inputs, Some(objective), timing)?;
    writeln!(stdout, "{objective}")?;
    Ok(())
}

fn write_report(report: &EvaluationReport, format: ReportFormat, out: &mut dyn Write) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, report).expect("report serializes");
            writeln!(out)?;
        }
        ReportFormat::Text => {
            writeln!(out, "weighted_f1 {:.6}", report.weighted_f1)?;
            writeln!(out, "macro_f1 {:.6}", report.macro_f1)?;
            writeln!(out, "micro_f1 {:.6}", report.micro_f1)?;
            writeln!(out, "evaluated {}", report.evaluated)?;
            let labels: Vec<String> = report
                .quant_labels
                .iter()
                .map(|l| l.map_or("-".into(), |c| c.to_string()))
                .collect();
            writeln!(out, "quant_labels {}", labels.join(" "))?;
            writeln!(out, "class precision recall f1 support")?;
            for (c, s) in report.per_class.iter().enumerate() {
                writeln!(
                    out,
                    "{c} {:.6} {:.6} {:.6} {}",
                    s.precision, s.recall, s.f1, s.support
                )?;
            }
            writeln!(out, "confusion (rows: truth, columns: predicted)")?;
            for row in &report.confusion_matrix {
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
    }
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = io::read_codebook(&a.codebook)?;
    let test = load_points(&a.test, a.label_column)?;
    let labels = match &a.train {
        Some(train) => label_quants(&file.codebook, &load_points(train, a.label_column)?)?,
        None => file.quant_labels.ok_or_else(|| {
            Error::MissingLabels("codebook has no quant labels; pass --train".into())
        })?,
    };
    let report = evaluate_with_labels(&file.codebook, &labels, &test)?;
    write_report(&report, a.format, stdout)
}

fn cmd_bound(a: BoundArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = load_points(&a.input, a.label_column)?;
    let regions = io::read_regions(&a.regions)?;
    let bound = interchange_lower_bound(&data, &regions, a.rank, a.norm)?;
    writeln!(stdout, "{bound}")?;
    Ok(())
}

fn cmd_diagnose(a: DiagnoseArgs, stdout: &mut dyn Write) -> Result<()> {
    let data = load_points(&a.input, a.label_column)?;
    let file = io::read_codebook(&a.codebook)?;
    let contrast = contrast_ratio(&data, &file.codebook)?;
    writeln!(stdout, "{contrast}")?;
    Ok(())
}

fn parse_means(text: &str) -> Result<Vec<Vec<f64>>> {
    text.split(';')
        .map(|m| {
            m.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidConfig(format!("--means {v:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

fn cmd_synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<()> {
    let started = Instant::now();
    let spec = MixtureSpec::isotropic(&parse_means(&a.means)?, a.sigma, a.samples, a.seed);
    let data = generate(&spec)?;
    let mut out = Outputs::new(&a.out_dir)?;
    let path = match a.format {
        PointsFormat::Csv => {
            let p = out.path("points.csv");
            io::write_points(&p, &data)?;
            p
        }
        PointsFormat::Embeddings => {
            let p = out.path("points.sqemb");
            io::write_embeddings(&p, &data)?;
            p
        }
    };
    let (seed, timing) = (a.seed, (!a.omit_timing).then_some(started));
    out.manifest(Command::Synth(a), seed, Vec::new(), None, timing)?;
    writeln!(stdout, "{}", path.display())?;
    Ok(())
}

fn cmd_replay(a: ReplayArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&a.manifest)?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
        crate::error::FormatError::Parse {
            line: e.line(),
            message: e.to_string(),
        }
    })?;
    let mut command = manifest.config;
    if let Some(dir) = a.out_dir {
        match &mut command {
            Command::Quantize(c) => c.out_dir = dir,
            Command::Kmeans(c) => c.out_dir = dir,
            Command::Synth(c) => c.out_dir = dir,
            _ => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(Error::InvalidConfig("a manifest cannot record a replay".into()));
    }
    run(command, stdout, stderr)
}
