//! Scaleup and phase-timing harness.
//!
//! Datasets are grown by replicating the base set with small Gaussian jitter,
//! so a multiplier `m` yields `m * n` trajectories with the same structure.
//! Every target is timed `reps` times and the median is reported, together
//! with the rayon thread count so ratios are comparable across runs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use trajkernel::baselines::{pairwise_matrix, Measure};
use trajkernel::dist::{embed_dataset_gdk, embed_dataset_idk, gdk_fit_nystrom};
use trajkernel::tidkc::{cluster_timed, ClusteringResult, PhaseTimings, TidkcParams};
use trajkernel::{Error, GDKParams, IKParams, IsolationKernelModel, Result, Trajectory, TrajectoryDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    IdkEmbed,
    GdkEmbed,
    HausdorffMatrix,
    DtwMatrix,
    Tidkc,
    Tgdkc,
}

impl Target {
    pub const ALL: [Target; 6] = [
        Target::IdkEmbed,
        Target::GdkEmbed,
        Target::HausdorffMatrix,
        Target::DtwMatrix,
        Target::Tidkc,
        Target::Tgdkc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::IdkEmbed => "idk_embed",
            Target::GdkEmbed => "gdk_embed",
            Target::HausdorffMatrix => "hausdorff_matrix",
            Target::DtwMatrix => "dtw_matrix",
            Target::Tidkc => "tidkc",
            Target::Tgdkc => "tgdkc",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown bench target `{s}`")))
    }
}

/// Clustering phases, in execution order, plus the end-to-end total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    BuildIk,
    FeatureMap,
    SeedSelection,
    Growing,
    FinalAssign,
    Total,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::BuildIk,
        Phase::FeatureMap,
        Phase::SeedSelection,
        Phase::Growing,
        Phase::FinalAssign,
        Phase::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::BuildIk => "build_ik",
            Phase::FeatureMap => "feature_map",
            Phase::SeedSelection => "seed_selection",
            Phase::Growing => "growing",
            Phase::FinalAssign => "final_assign",
            Phase::Total => "total",
        }
    }

    fn of(self, t: &PhaseTimings) -> Duration {
        match self {
            Phase::BuildIk => t.build_ik,
            Phase::FeatureMap => t.feature_map,
            Phase::SeedSelection => t.seed_selection,
            Phase::Growing => t.growing,
            Phase::FinalAssign => t.final_assign,
            Phase::Total => t.total,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRecord {
    pub target: Target,
    pub phase: Phase,
    /// Trajectories in the timed dataset.
    pub n: usize,
    /// Pooled point count of the timed dataset.
    pub points: usize,
    /// Median wall time over the repetitions.
    pub seconds: f64,
    pub reps: usize,
    pub threads: usize,
    /// Growing iterations, for clustering targets.
    pub iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ScaleupConfig {
    pub reps: usize,
    /// Standard deviation of the per-coordinate jitter on replicas.
    pub jitter: f64,
    pub rng_seed: u64,
    pub ik: IKParams,
    /// Clustering parameters; `kernel2` is overridden per target.
    pub tidkc: TidkcParams,
}

impl ScaleupConfig {
    pub fn new(k: usize, rng_seed: u64) -> Self {
        let tidkc = TidkcParams::new(k, rng_seed);
        ScaleupConfig {
            reps: 3,
            jitter: 0.01,
            rng_seed,
            ik: tidkc.level1,
            tidkc,
        }
    }
}

/// `multiplier` copies of `base`; every copy after the first is jittered.
pub fn replicate(base: &TrajectoryDataset, multiplier: usize, jitter: f64, rng_seed: u64) -> Result<TrajectoryDataset> {
    if multiplier == 0 {
        return Err(Error::InvalidParameter("multiplier must be >= 1".into()));
    }
    let noise = Normal::new(0.0, jitter).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(base.len() * multiplier);
    for copy in 0..multiplier {
        for t in base {
            if copy == 0 {
                out.push(t.clone());
                continue;
            }
            let coords: Vec<f64> = t.coords().iter().map(|c| c + noise.sample(&mut rng)).collect();
            out.push(Trajectory::new(format!("{}#{copy}", t.id()), t.label(), t.dims(), coords)?);
        }
    }
    TrajectoryDataset::new(out)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs `target` once on `ds`, returning per-phase timings (only `total` is
/// meaningful for non-clustering targets) and growing iterations.
fn time_once(ds: &TrajectoryDataset, target: Target, config: &ScaleupConfig) -> Result<(PhaseTimings, Option<usize>)> {
    let start = Instant::now();
    let mut iterations = None;
    let mut timings = PhaseTimings::default();
    match target {
        Target::IdkEmbed => {
            let model = IsolationKernelModel::fit(&ds.pooled_points(), config.ik)?;
            embed_dataset_idk(&model, ds)?;
        }
        Target::GdkEmbed => {
            let pooled = ds.pooled_points();
            let map = gdk_fit_nystrom(&pooled, GDKParams::auto(&pooled, config.rng_seed)?)?;
            embed_dataset_gdk(&map, ds)?;
        }
        Target::HausdorffMatrix => {
            pairwise_matrix(ds, &Measure::Hausdorff)?;
        }
        Target::DtwMatrix => {
            pairwise_matrix(ds, &Measure::Dtw { band: None })?;
        }
        Target::Tidkc | Target::Tgdkc => {
            let params = TidkcParams {
                kernel2: if target == Target::Tidkc {
                    config.tidkc.kernel2
                } else {
                    trajkernel::KernelTag::GdkNystrom
                },
                ..config.tidkc.clone()
            };
            let (result, t) = cluster_timed(ds, &params)?;
            iterations = Some(result.iterations);
            timings = t;
        }
    }
    if !matches!(target, Target::Tidkc | Target::Tgdkc) {
        timings.total = start.elapsed();
    }
    Ok((timings, iterations))
}

/// Times `target` on `base` scaled by each multiplier. Clustering targets
/// report every phase; the others report `total` only.
pub fn scaleup_run(
    base: &TrajectoryDataset,
    multipliers: &[usize],
    target: Target,
    config: &ScaleupConfig,
) -> Result<Vec<TimingRecord>> {
    if multipliers.first() != Some(&1) || multipliers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "multipliers must be increasing and start at 1".into(),
        ));
    }
    if config.reps == 0 {
        return Err(Error::InvalidParameter("reps must be >= 1".into()));
    }
    let phases: &[Phase] = match target {
        Target::Tidkc | Target::Tgdkc => &Phase::ALL,
        _ => &[Phase::Total],
    };
    let threads = rayon::current_num_threads();
    // Untimed warm-up so the smallest size does not absorb cold-start costs.
    time_once(base, target, config)?;
    let mut records = Vec::new();
    for &m in multipliers {
        let ds = replicate(base, m, config.jitter, config.rng_seed.wrapping_add(m as u64))?;
        let mut runs = Vec::with_capacity(config.reps);
        for _ in 0..config.reps {
            runs.push(time_once(&ds, target, config)?);
        }
        for &phase in phases {
            records.push(TimingRecord {
                target,
                phase,
                n: ds.len(),
                points: ds.pooled_point_count(),
                seconds: median(runs.iter().map(|(t, _)| phase.of(t).as_secs_f64()).collect()),
                reps: config.reps,
                threads,
                iterations: runs[0].1,
            });
        }
    }
    Ok(records)
}

/// One instrumented clustering run, one record per phase.
pub fn phase_breakdown(ds: &TrajectoryDataset, params: &TidkcParams) -> Result<(Vec<TimingRecord>, ClusteringResult)> {
    let (result, timings) = cluster_timed(ds, params)?;
    let target = if params.kernel2 == trajkernel::KernelTag::GdkNystrom {
        Target::Tgdkc
    } else {
        Target::Tidkc
    };
    let threads = rayon::current_num_threads();
    let records = Phase::ALL
        .iter()
        .map(|&phase| TimingRecord {
            target,
            phase,
            n: ds.len(),
            points: ds.pooled_point_count(),
            seconds: phase.of(&timings).as_secs_f64(),
            reps: 1,
            threads,
            iterations: Some(result.iterations),
        })
        .collect();
    Ok((records, result))
}

/// CSV with columns `target,phase,n,points,seconds,reps,threads`.
pub fn write_csv<W: Write>(records: &[TimingRecord], w: W) -> Result<()> {
    let fail = |e: csv::Error| Error::Format(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["target", "phase", "n", "points", "seconds", "reps", "threads"])
        .map_err(fail)?;
    for r in records {
        out.write_record([
            r.target.name().to_string(),
            r.phase.name().to_string(),
            r.n.to_string(),
            r.points.to_string(),
            format!("{:.6}", r.seconds),
            r.reps.to_string(),
            r.threads.to_string(),
        ])
        .map_err(fail)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}
