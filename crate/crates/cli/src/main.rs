//! `trajkernel`: embed, compare, cluster and evaluate trajectory datasets.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "trajkernel", version, about = "Trajectory similarity and clustering with isolation distributional kernels")]
pub struct Cli {
    /// Seed for every random choice; reruns with the same seed write identical results.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: one per core). Recorded in the metadata.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Synth(SynthArgs),
    /// Map every trajectory to its kernel mean embedding.
    Embed(EmbedArgs),
    /// Pairwise distance matrix for external clusterers.
    Matrix(MatrixArgs),
    /// Cluster trajectories with TIDKC or TGDKC.
    Cluster(ClusterArgs),
    /// Nearest-neighbour retrieval precision@k.
    Retrieve(RetrieveArgs),
    /// Score a labeling (NMI, ARI) or run a sampling-rate sweep.
    Eval(EvalArgs),
    /// Scaleup timings on replicated data.
    Bench(BenchArgs),
}

#[derive(Args)]
pub struct InputArgs {
    /// Trajectory file: JSON lines, or long-format CSV when the name ends in .csv.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Use raw coordinates instead of min-max normalizing the pooled points.
    #[arg(long)]
    pub no_normalize: bool,
    /// Append the point index scaled to [0, WEIGHT] as an extra coordinate.
    #[arg(long, value_name = "WEIGHT")]
    pub order_weight: Option<f64>,
}

#[derive(Args, Clone, Copy)]
pub struct IkArgs {
    /// Isolation Kernel: Voronoi centers per partitioning.
    #[arg(long, default_value_t = 16)]
    pub psi: usize,
    /// Isolation Kernel: number of partitionings.
    #[arg(long, default_value_t = 100)]
    pub t: usize,
}

#[derive(Args, Clone, Copy)]
pub struct GdkArgs {
    /// Gaussian kernel gamma (default: median heuristic).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Nyström landmarks (default: min(1024, pooled points)).
    #[arg(long)]
    pub nystrom_samples: Option<usize>,
    /// Nyström feature rank (default: landmark count).
    #[arg(long)]
    pub nystrom_rank: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelArg {
    Idk,
    Gdk,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Bent polylines side by side, one label each.
    Separated,
    /// Routes travelled both ways, two labels each.
    DirectionPairs,
}

#[derive(Args)]
pub struct PresetArgs {
    #[arg(long, value_enum, default_value_t = Preset::Separated)]
    pub preset: Preset,
    /// Clusters (separated) or routes (direction-pairs).
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 50)]
    pub per_cluster: usize,
    /// Jitter standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
}

#[derive(Args)]
pub struct SynthArgs {
    /// TOML spec file; overrides the preset flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Output dataset (.jsonl or .csv); metadata goes to <out>.meta.json.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = KernelArg::Idk)]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub ik: IkArgs,
    #[command(flatten)]
    pub gdk: GdkArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureArg {
    Hausdorff,
    Dtw,
    Idk,
    Gdk,
}

#[derive(Args)]
pub struct MatrixArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub measure: MeasureArg,
    /// DTW Sakoe-Chiba band half-width.
    #[arg(long)]
    pub band: Option<usize>,
    #[command(flatten)]
    pub ik: IkArgs,
    #[command(flatten)]
    pub gdk: GdkArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Tidkc,
    Tgdkc,
}

#[derive(Args)]
pub struct TidkcArgs {
    /// Second-level kernel: IDK (tidkc) or Nyström GDK (tgdkc).
    #[arg(long, value_enum, default_value_t = Algo::Tidkc)]
    pub algo: Algo,
    /// Trajectory representation kernel.
    #[arg(long, value_enum, default_value_t = KernelArg::Idk)]
    pub kernel1: KernelArg,
    /// Threshold decay per growing iteration.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// Growing stops below this threshold.
    #[arg(long, default_value_t = 1e-5)]
    pub tau_floor: f64,
    #[arg(long, default_value_t = 16)]
    pub psi1: usize,
    #[arg(long, default_value_t = 100)]
    pub t1: usize,
    #[arg(long, default_value_t = 4)]
    pub psi2: usize,
    #[arg(long, default_value_t = 100)]
    pub t2: usize,
    /// Seed-selection subsample (default: min(n, 1000)).
    #[arg(long)]
    pub seed_subset: Option<usize>,
    /// Neighbours used for local contrast.
    #[arg(long, default_value_t = 10)]
    pub knn: usize,
}

#[derive(Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Number of clusters.
    #[arg(long, short)]
    pub k: usize,
    #[command(flatten)]
    pub tidkc: TidkcArgs,
    /// Score the result against the dataset labels (NMI, ARI in the metadata).
    #[arg(long)]
    pub eval: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum RetrieveMeasure {
    Idk,
    Gdk,
    Hausdorff,
    Dtw,
    /// Seeded uniform random similarities, a chance-level reference.
    Random,
}

#[derive(Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = RetrieveMeasure::Idk)]
    pub measure: RetrieveMeasure,
    /// Increasing neighbour counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub band: Option<usize>,
    #[command(flatten)]
    pub ik: IkArgs,
    #[command(flatten)]
    pub gdk: GdkArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionArg {
    All,
    Half,
    Both,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Predicted labels CSV (`id,cluster`) as written by `cluster`.
    #[arg(long, conflicts_with = "rates")]
    pub labels: Option<PathBuf>,
    /// Sampling rates for a sweep, comma separated.
    #[arg(long, value_delimiter = ',', requires = "k")]
    pub rates: Vec<f64>,
    /// Clusters for the sweep.
    #[arg(long, short)]
    pub k: Option<usize>,
    /// Which trajectories the sweep downsamples.
    #[arg(long, value_enum, default_value_t = SelectionArg::Both)]
    pub selection: SelectionArg,
    #[command(flatten)]
    pub tidkc: TidkcArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Base dataset; a synthetic preset is used when omitted.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub preset: PresetArgs,
    /// Targets, comma separated: idk_embed, gdk_embed, hausdorff_matrix, dtw_matrix, tidkc, tgdkc.
    #[arg(long, value_delimiter = ',', default_value = "idk_embed")]
    pub target: Vec<trajkernel_bench::Target>,
    /// Dataset size multipliers, increasing from 1.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub multipliers: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Jitter added to replicated trajectories.
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,
    /// Clusters for the clustering targets (default: dataset label count).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, short)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
