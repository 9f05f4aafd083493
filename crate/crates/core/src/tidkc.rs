//! Two-level distributional kernel clustering of trajectories (TIDKC / TGDKC).
//!
//! Level 1 maps every trajectory to the kernel mean map of its points, using a
//! kernel fit on the pooled point set. Level 2 fits a second kernel on those
//! mean maps and grows `k` clusters from seeds: every iteration the threshold
//! `tau` decays geometrically and each unassigned point joins its most similar
//! cluster if that similarity exceeds `tau`. Cluster similarity of a point `g`
//! is `<phi2(g), mean of phi2 over the cluster>`, i.e. the level-2
//! distributional kernel between the Dirac measure at `g` and the cluster.
//!
//! Assignment within one iteration always reads the cluster state from the
//! start of that iteration, so results do not depend on visitation order.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryDataset;
use crate::dist::{self, GDKParams, KernelTag, MeanMapVector, NystromMap};
use crate::error::{Error, Result};
use crate::ik::{IKParams, IsolationKernelModel, SparseFeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidkcParams {
    /// Number of clusters.
    pub k: usize,
    /// Growth rate: `tau <- rho * tau` every iteration.
    pub rho: f64,
    /// Growing stops once `tau` drops below this.
    pub tau_floor: f64,
    pub level1: IKParams,
    pub level2: IKParams,
    /// Subsample size for seed selection; `None` means `min(n, 1000)`.
    pub seed_subset: Option<usize>,
    /// Neighbours inspected when scoring local contrast.
    pub knn_for_contrast: usize,
    pub kernel1: KernelTag,
    pub kernel2: KernelTag,
    /// Nyström settings when a level uses GDK; `None` means median-heuristic defaults.
    pub gdk1: Option<GDKParams>,
    pub gdk2: Option<GDKParams>,
    pub rng_seed: u64,
}

pub const DEFAULT_SEED_SUBSET: usize = 1000;

impl TidkcParams {
    /// Defaults: rho 0.9, tau floor 1e-5, psi 16 / 4 at levels 1 / 2, t = 100,
    /// knn 10, IDK at both levels.
    pub fn new(k: usize, rng_seed: u64) -> Self {
        TidkcParams {
            k,
            rho: 0.9,
            tau_floor: 1e-5,
            level1: IKParams {
                psi: 16,
                t: 100,
                rng_seed,
            },
            level2: IKParams {
                psi: 4,
                t: 100,
                rng_seed: rng_seed.wrapping_add(0x9e37_79b9_7f4a_7c15),
            },
            seed_subset: None,
            knn_for_contrast: 10,
            kernel1: KernelTag::Idk,
            kernel2: KernelTag::Idk,
            gdk1: None,
            gdk2: None,
            rng_seed,
        }
    }

    /// TGDKC: GDK grows the clusters, IDK still represents trajectories.
    pub fn tgdkc(k: usize, rng_seed: u64) -> Self {
        TidkcParams {
            kernel2: KernelTag::GdkNystrom,
            ..Self::new(k, rng_seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::invalid(format!("rho must be in (0, 1), got {}", self.rho)));
        }
        if !(self.tau_floor > 0.0) {
            return Err(Error::invalid("tau floor must be > 0"));
        }
        if self.knn_for_contrast < 1 {
            return Err(Error::invalid("knn for local contrast must be >= 1"));
        }
        if self.seed_subset == Some(0) {
            return Err(Error::invalid("seed subset must be non-empty"));
        }
        self.level1.validate()?;
        self.level2.validate()?;
        for gdk in [&self.gdk1, &self.gdk2].into_iter().flatten() {
            gdk.validate()?;
        }
        Ok(())
    }
}

/// A fitted point-level kernel with an explicit feature map.
#[derive(Debug, Clone)]
pub enum KernelModel {
    Idk(IsolationKernelModel),
    Gdk(NystromMap),
}

impl KernelModel {
    pub fn fit<P: AsRef<[f64]>>(
        points: &[P],
        tag: KernelTag,
        ik: IKParams,
        gdk: Option<GDKParams>,
    ) -> Result<Self> {
        match tag {
            KernelTag::Idk => Ok(KernelModel::Idk(IsolationKernelModel::fit(points, ik)?)),
            KernelTag::GdkNystrom => {
                let params = match gdk {
                    Some(p) => p,
                    None => GDKParams::auto(points, ik.rng_seed)?,
                };
                Ok(KernelModel::Gdk(dist::gdk_fit_nystrom(points, params)?))
            }
        }
    }

    pub fn tag(&self) -> KernelTag {
        match self {
            KernelModel::Idk(_) => KernelTag::Idk,
            KernelModel::Gdk(_) => KernelTag::GdkNystrom,
        }
    }

    /// Mean map of every trajectory's point set.
    pub fn embed_sets(&self, ds: &TrajectoryDataset) -> Result<Vec<MeanMapVector>> {
        match self {
            KernelModel::Idk(m) => dist::embed_dataset_idk(m, ds),
            KernelModel::Gdk(m) => dist::embed_dataset_gdk(m, ds),
        }
    }

    /// Per-point feature maps, the space level-2 growing runs in.
    pub fn space<P: AsRef<[f64]> + Sync>(&self, points: &[P]) -> Result<Level2Space> {
        let features = match self {
            KernelModel::Idk(m) => Features::Idk {
                t: m.params().t,
                maps: m.feature_maps(points)?,
            },
            KernelModel::Gdk(m) => Features::Gdk {
                z: m.features_many(points)?,
            },
        };
        Ok(Level2Space { features })
    }
}

#[derive(Debug, Clone)]
enum Features {
    Idk { t: usize, maps: Vec<SparseFeatureVector> },
    Gdk { z: Vec<Vec<f64>> },
}

/// Level-2 feature maps of the embedded trajectories `G`.
///
/// Cluster sums are kept as dense accumulators. For IDK the accumulator holds
/// integer cell counts (scaled at read time), so incremental updates are exact.
#[derive(Debug, Clone)]
pub struct Level2Space {
    features: Features,
}

impl Level2Space {
    pub fn len(&self) -> usize {
        match &self.features {
            Features::Idk { maps, .. } => maps.len(),
            Features::Gdk { z } => z.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tag(&self) -> KernelTag {
        match &self.features {
            Features::Idk { .. } => KernelTag::Idk,
            Features::Gdk { .. } => KernelTag::GdkNystrom,
        }
    }

    fn accumulator_dim(&self) -> usize {
        match &self.features {
            Features::Idk { maps, .. } => maps.first().map_or(0, SparseFeatureVector::dimension),
            Features::Gdk { z } => z.first().map_or(0, Vec::len),
        }
    }

    fn accumulate(&self, i: usize, acc: &mut [f64]) {
        match &self.features {
            Features::Idk { maps, .. } => {
                for idx in maps[i].active_indices() {
                    acc[idx] += 1.0;
                }
            }
            Features::Gdk { z } => {
                for (a, v) in acc.iter_mut().zip(&z[i]) {
                    *a += v;
                }
            }
        }
    }

    /// `<phi2(g_i), acc>` where `acc` is a sum of feature maps.
    fn dot_sum(&self, i: usize, acc: &[f64]) -> f64 {
        match &self.features {
            Features::Idk { t, maps } => {
                maps[i].active_indices().map(|idx| acc[idx]).sum::<f64>() / *t as f64
            }
            Features::Gdk { z } => dist::dot(&z[i], acc),
        }
    }

    /// Level-2 point kernel between `g_i` and `g_j`.
    pub fn point_similarity(&self, i: usize, j: usize) -> f64 {
        match &self.features {
            Features::Idk { maps, .. } => maps[i].dot(&maps[j]),
            Features::Gdk { z } => dist::dot(&z[i], &z[j]),
        }
    }

    /// Kernel-induced distance between `g_i` and `g_j`.
    pub fn point_distance(&self, i: usize, j: usize) -> f64 {
        let d2 = self.point_similarity(i, i) + self.point_similarity(j, j) - 2.0 * self.point_similarity(i, j);
        d2.max(0.0).sqrt()
    }

    /// Sum of feature maps over `members`.
    fn sum_of(&self, members: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.accumulator_dim()];
        for i in members {
            self.accumulate(i, &mut acc);
        }
        acc
    }

    /// `K2(delta(g_i), P_S)` for an arbitrary member set `S`.
    pub fn similarity_to_set(&self, i: usize, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        self.dot_sum(i, &self.sum_of(members.iter().copied())) / members.len() as f64
    }
}

/// Level-1 mean maps `g_i` of every trajectory, kernel fit on the pooled points.
pub fn embed_level1(ds: &TrajectoryDataset, params: &TidkcParams) -> Result<Vec<MeanMapVector>> {
    let model = fit_level1(ds, params)?;
    model.embed_sets(ds)
}

fn fit_level1(ds: &TrajectoryDataset, params: &TidkcParams) -> Result<KernelModel> {
    KernelModel::fit(&ds.pooled_points(), params.kernel1, params.level1, params.gdk1)
}

/// Fits the level-2 kernel on `G` and maps every `g_i`.
pub fn fit_level2(g: &[MeanMapVector], params: &TidkcParams) -> Result<Level2Space> {
    let model = KernelModel::fit(g, params.kernel2, params.level2, params.gdk2)?;
    model.space(g)
}

/// Seed selection by local contrast.
///
/// On a uniform subsample, each point's density is its mean level-2 similarity
/// to the subsample, and its local contrast (LC) counts how many of its `knn`
/// nearest neighbours (kernel-induced distance) have strictly lower density.
/// Points are ranked by (LC desc, density desc, index asc). As in density-peak
/// selection, each point's separation is its distance to the nearest
/// higher-ranked point (the top point takes its largest distance), and the `k`
/// points with the largest `(LC + 1) * separation` become seeds, ties resolved
/// by rank. Returned indices are sorted ascending.
pub fn select_seeds(
    space: &Level2Space,
    k: usize,
    subset: usize,
    knn: usize,
    rng_seed: u64,
) -> Result<Vec<usize>> {
    let n = space.len();
    if k == 0 || n < k {
        return Err(Error::InsufficientPoints { needed: k, available: n });
    }
    if knn == 0 {
        return Err(Error::invalid("knn must be >= 1"));
    }
    let s = subset.clamp(k, n);
    let sample: Vec<usize> = if s == n {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, s).into_vec();
        idx.sort_unstable();
        idx
    };
    if s == k {
        return Ok(sample);
    }

    let sample_sum = space.sum_of(sample.iter().copied());
    let density: Vec<f64> = sample
        .par_iter()
        .map(|&i| space.dot_sum(i, &sample_sum) / s as f64)
        .collect();
    let distances: Vec<Vec<f64>> = (0..s)
        .into_par_iter()
        .map(|a| (0..s).map(|b| space.point_distance(sample[a], sample[b])).collect())
        .collect();

    let knn = knn.min(s - 1);
    let contrast: Vec<usize> = (0..s)
        .into_par_iter()
        .map(|a| {
            let mut others: Vec<usize> = (0..s).filter(|&b| b != a).collect();
            others.sort_by(|&x, &y| distances[a][x].total_cmp(&distances[a][y]).then(x.cmp(&y)));
            others[..knn].iter().filter(|&&b| density[b] < density[a]).count()
        })
        .collect();

    let mut rank: Vec<usize> = (0..s).collect();
    rank.sort_by(|&a, &b| {
        contrast[b]
            .cmp(&contrast[a])
            .then(density[b].total_cmp(&density[a]))
            .then(a.cmp(&b))
    });
    let mut separation = vec![0.0; s];
    for (pos, &a) in rank.iter().enumerate() {
        separation[a] = if pos == 0 {
            distances[a].iter().copied().fold(0.0, f64::max)
        } else {
            rank[..pos]
                .iter()
                .map(|&b| distances[a][b])
                .fold(f64::INFINITY, f64::min)
        };
    }
    let score = |a: usize| (contrast[a] + 1) as f64 * separation[a];
    let position: Vec<usize> = {
        let mut p = vec![0; s];
        for (pos, &a) in rank.iter().enumerate() {
            p[a] = pos;
        }
        p
    };
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(position[a].cmp(&position[b])));
    let mut seeds: Vec<usize> = order[..k].iter().map(|&a| sample[a]).collect();
    seeds.sort_unstable();
    Ok(seeds)
}

/// One growing iteration: threshold used and total points assigned after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub tau: f64,
    pub assigned: usize,
}

/// Partial assignment of `G` to `k` growing clusters.
#[derive(Debug, Clone)]
pub struct ClusterState {
    /// 0-based cluster index per point, `None` while unassigned.
    assignments: Vec<Option<usize>>,
    /// Sum of level-2 feature maps per cluster.
    sums: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    seeds: Vec<usize>,
    tau: f64,
    history: Vec<IterationRecord>,
}

impl ClusterState {
    fn new(space: &Level2Space, seeds: &[usize]) -> Result<Self> {
        let n = space.len();
        let mut assignments = vec![None; n];
        for (c, &s) in seeds.iter().enumerate() {
            if s >= n {
                return Err(Error::invalid(format!("seed {s} out of range for {n} points")));
            }
            if assignments[s].is_some() {
                return Err(Error::invalid(format!("duplicate seed {s}")));
            }
            assignments[s] = Some(c);
        }
        if seeds.is_empty() {
            return Err(Error::invalid("need at least one seed"));
        }
        let sums = seeds.iter().map(|&s| space.sum_of([s])).collect();
        Ok(ClusterState {
            assignments,
            sums,
            sizes: vec![1; seeds.len()],
            seeds: seeds.to_vec(),
            tau: f64::NAN,
            history: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.seeds.len()
    }

    pub fn assignments(&self) -> &[Option<usize>] {
        &self.assignments
    }

    pub fn seeds(&self) -> &[usize] {
        &self.seeds
    }

    /// Current threshold; NaN if growing never ran (no unassigned points).
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[IterationRecord] {
        &self.history
    }

    pub fn unassigned(&self) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i].is_none())
            .collect()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == Some(cluster))
            .collect()
    }

    /// Current level-2 mean map of a cluster (sum over members / size).
    pub fn cluster_mean(&self, cluster: usize) -> Vec<f64> {
        let n = self.sizes[cluster] as f64;
        self.sums[cluster].iter().map(|v| v / n).collect()
    }

    /// Cluster sums recomputed from scratch, for checking the incremental ones.
    pub fn recomputed_sums(&self, space: &Level2Space) -> Vec<Vec<f64>> {
        (0..self.k()).map(|c| space.sum_of(self.members(c))).collect()
    }

    pub fn sums(&self) -> &[Vec<f64>] {
        &self.sums
    }

    fn similarity(&self, space: &Level2Space, i: usize, cluster: usize) -> f64 {
        space.dot_sum(i, &self.sums[cluster]) / self.sizes[cluster] as f64
    }

    /// Most similar cluster for point `i`, ties to the lowest cluster index.
    fn best_cluster(&self, space: &Level2Space, i: usize) -> (usize, f64) {
        let mut best = (0, self.similarity(space, i, 0));
        for c in 1..self.k() {
            let s = self.similarity(space, i, c);
            if s > best.1 {
                best = (c, s);
            }
        }
        best
    }

    fn assign_batch(&mut self, space: &Level2Space, batch: &[(usize, usize)]) {
        for &(i, c) in batch {
            self.assignments[i] = Some(c);
            self.sizes[c] += 1;
            space.accumulate(i, &mut self.sums[c]);
        }
    }
}

/// Grows clusters from `seeds` with geometric threshold decay.
pub fn grow_clusters(space: &Level2Space, seeds: &[usize], rho: f64, tau_floor: f64) -> Result<ClusterState> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid(format!("rho must be in (0, 1), got {rho}")));
    }
    let mut state = ClusterState::new(space, seeds)?;
    let mut pending = state.unassigned();
    if pending.is_empty() {
        return Ok(state);
    }
    let mut tau = pending
        .par_iter()
        .map(|&i| state.best_cluster(space, i).1)
        .reduce(|| f64::NEG_INFINITY, f64::max);
    loop {
        tau *= rho;
        let decisions: Vec<(usize, usize, bool)> = pending
            .par_iter()
            .map(|&i| {
                let (c, s) = state.best_cluster(space, i);
                (i, c, s > tau)
            })
            .collect();
        let batch: Vec<(usize, usize)> = decisions
            .iter()
            .filter(|d| d.2)
            .map(|&(i, c, _)| (i, c))
            .collect();
        state.assign_batch(space, &batch);
        pending.retain(|&i| state.assignments[i].is_none());
        state.tau = tau;
        state.history.push(IterationRecord {
            tau,
            assigned: space.len() - pending.len(),
        });
        if pending.is_empty() || tau < tau_floor {
            break;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    /// Cluster id in `1..=k` per trajectory, dataset order.
    pub labels: Vec<usize>,
    /// Sum over clusters and members of `K2(delta(g), P_C)`.
    pub objective: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Seed index per cluster (cluster `j` grew from `seeds[j - 1]`).
    pub seeds: Vec<usize>,
    /// Points still unassigned when growing stopped.
    pub residual: usize,
}

/// Value of the clustering objective for the given 1-based labels.
pub fn objective(space: &Level2Space, labels: &[usize], k: usize) -> f64 {
    (1..=k)
        .map(|c| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                return 0.0;
            }
            let sum = space.sum_of(members.iter().copied());
            members
                .iter()
                .map(|&i| space.dot_sum(i, &sum) / members.len() as f64)
                .sum::<f64>()
        })
        .sum()
}

/// Assigns leftovers to their most similar cluster regardless of `tau`.
pub fn final_assign(state: &ClusterState, space: &Level2Space) -> ClusteringResult {
    let residual = state.unassigned();
    let extra: Vec<(usize, usize)> = residual
        .par_iter()
        .map(|&i| (i, state.best_cluster(space, i).0))
        .collect();
    let mut labels: Vec<usize> = state.assignments.iter().map(|a| a.map_or(0, |c| c + 1)).collect();
    for (i, c) in extra {
        labels[i] = c + 1;
    }
    ClusteringResult {
        objective: objective(space, &labels, state.k()),
        labels,
        iterations: state.iterations(),
        history: state.history.clone(),
        seeds: state.seeds.clone(),
        residual: residual.len(),
    }
}

/// Wall-clock time of each clustering phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub build_ik: Duration,
    pub feature_map: Duration,
    pub seed_selection: Duration,
    pub growing: Duration,
    pub final_assign: Duration,
    pub total: Duration,
}

pub fn cluster(ds: &TrajectoryDataset, params: &TidkcParams) -> Result<ClusteringResult> {
    cluster_timed(ds, params).map(|(r, _)| r)
}

/// [`cluster`] with per-phase wall-clock timings.
pub fn cluster_timed(ds: &TrajectoryDataset, params: &TidkcParams) -> Result<(ClusteringResult, PhaseTimings)> {
    params.validate()?;
    let n = ds.len();
    if n < params.k {
        return Err(Error::InsufficientPoints {
            needed: params.k,
            available: n,
        });
    }
    let mut timings = PhaseTimings::default();
    let start = Instant::now();

    let mut clock = Instant::now();
    let level1 = fit_level1(ds, params)?;
    timings.build_ik += clock.elapsed();

    clock = Instant::now();
    let g = level1.embed_sets(ds)?;
    timings.feature_map += clock.elapsed();

    clock = Instant::now();
    let level2 = KernelModel::fit(&g, params.kernel2, params.level2, params.gdk2)?;
    timings.build_ik += clock.elapsed();

    clock = Instant::now();
    let space = level2.space(&g)?;
    timings.feature_map += clock.elapsed();

    clock = Instant::now();
    let subset = params.seed_subset.unwrap_or(n.min(DEFAULT_SEED_SUBSET));
    let seeds = select_seeds(&space, params.k, subset, params.knn_for_contrast, params.rng_seed)?;
    timings.seed_selection = clock.elapsed();

    clock = Instant::now();
    let state = grow_clusters(&space, &seeds, params.rho, params.tau_floor)?;
    timings.growing = clock.elapsed();

    clock = Instant::now();
    let result = final_assign(&state, &space);
    timings.final_assign = clock.elapsed();

    timings.total = start.elapsed();
    Ok((result, timings))
}
