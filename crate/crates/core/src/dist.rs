//! Kernel mean embeddings of point sets.
//!
//! A point set is represented by the average of its points' feature maps. With
//! Isolation Kernel features this gives the Isolation Distributional Kernel
//! (IDK); with Nyström-approximated Gaussian features it gives the Gaussian
//! Distributional Kernel (GDK). Set similarity is then a single dot product,
//! independent of the set sizes.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::ik::IsolationKernelModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTag {
    Idk,
    GdkNystrom,
}

impl std::fmt::Display for KernelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelTag::Idk => "idk",
            KernelTag::GdkNystrom => "gdk_nystrom",
        })
    }
}

/// Mean feature map of a point set.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMapVector {
    values: Vec<f64>,
    source_size: usize,
    kernel_tag: KernelTag,
}

impl MeanMapVector {
    pub fn new(values: Vec<f64>, source_size: usize, kernel_tag: KernelTag) -> Self {
        MeanMapVector {
            values,
            source_size,
            kernel_tag,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn kernel_tag(&self) -> KernelTag {
        self.kernel_tag
    }

    pub fn norm_squared(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.kernel_tag != other.kernel_tag {
            return Err(Error::KernelMismatch(format!(
                "{} vs {}",
                self.kernel_tag, other.kernel_tag
            )));
        }
        if self.values.len() != other.values.len() {
            return Err(Error::dims(self.values.len(), other.values.len()));
        }
        Ok(())
    }
}

impl AsRef<[f64]> for MeanMapVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(1/|S|) sum phi(x)` over the set.
pub fn embed_set_idk<P: AsRef<[f64]>>(model: &IsolationKernelModel, pts: &[P]) -> Result<MeanMapVector> {
    if pts.is_empty() {
        return Err(Error::Empty("cannot embed an empty point set".into()));
    }
    let mut counts = vec![0u32; model.feature_dim()];
    for p in pts {
        for i in model.feature_map(p.as_ref())?.active_indices() {
            counts[i] += 1;
        }
    }
    let scale = 1.0 / ((model.params().t as f64).sqrt() * pts.len() as f64);
    Ok(MeanMapVector {
        values: counts.into_iter().map(|c| f64::from(c) * scale).collect(),
        source_size: pts.len(),
        kernel_tag: KernelTag::Idk,
    })
}

/// IDK mean maps of every trajectory, in dataset order.
pub fn embed_dataset_idk(model: &IsolationKernelModel, ds: &TrajectoryDataset) -> Result<Vec<MeanMapVector>> {
    ds.trajectories()
        .par_iter()
        .map(|t| embed_set_idk(model, &t.points().collect::<Vec<_>>()))
        .collect()
}

/// Unnormalized distributional similarity, `<a, b>`.
pub fn idk_similarity(a: &MeanMapVector, b: &MeanMapVector) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(dot(&a.values, &b.values))
}

/// Cosine-normalized similarity `<a, b> / (|a| |b|)`.
pub fn normalized_similarity(a: &MeanMapVector, b: &MeanMapVector) -> Result<f64> {
    a.check_compatible(b)?;
    let (na, nb) = (a.norm_squared(), b.norm_squared());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("normalized similarity of a zero vector"));
    }
    Ok(dot(&a.values, &b.values) / (na.sqrt() * nb.sqrt()))
}

/// Kernel-induced distance `sqrt(k(a,a) + k(b,b) - 2 k(a,b))`, clamped at zero.
pub fn kernel_distance(a: &MeanMapVector, b: &MeanMapVector) -> Result<f64> {
    a.check_compatible(b)?;
    let d2 = a.norm_squared() + b.norm_squared() - 2.0 * dot(&a.values, &b.values);
    Ok(d2.max(0.0).sqrt())
}

pub fn gaussian_kernel(gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GDKParams {
    /// Gaussian bandwidth in `exp(-gamma |x - y|^2)`.
    pub gamma: f64,
    /// Landmark count `m`.
    pub nystrom_samples: usize,
    /// Feature dimensionality `l <= m`.
    pub nystrom_rank: usize,
    pub rng_seed: u64,
}

const MEDIAN_SUBSAMPLE: usize = 1000;
const DEFAULT_LANDMARKS: usize = 1024;
const RIDGE: f64 = 1e-10;
const EIGEN_FLOOR: f64 = 1e-12;

impl GDKParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.nystrom_samples == 0 || self.nystrom_rank == 0 || self.nystrom_rank > self.nystrom_samples {
            return Err(Error::invalid(format!(
                "need 1 <= rank ({}) <= samples ({})",
                self.nystrom_rank, self.nystrom_samples
            )));
        }
        Ok(())
    }

    /// Median-heuristic bandwidth, `m = min(1024, |points|)` and `l = m`.
    pub fn auto<P: AsRef<[f64]>>(points: &[P], rng_seed: u64) -> Result<Self> {
        let m = points.len().min(DEFAULT_LANDMARKS);
        Ok(GDKParams {
            gamma: median_heuristic_gamma(points, rng_seed)?,
            nystrom_samples: m,
            nystrom_rank: m,
            rng_seed,
        })
    }
}

/// `1 / (2 median^2)` of pairwise distances on a subsample of at most 1000 points.
pub fn median_heuristic_gamma<P: AsRef<[f64]>>(points: &[P], rng_seed: u64) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("median heuristic needs points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x6d65_6469_616e);
    let idx: Vec<usize> = if points.len() > MEDIAN_SUBSAMPLE {
        rand::seq::index::sample(&mut rng, points.len(), MEDIAN_SUBSAMPLE).into_vec()
    } else {
        (0..points.len()).collect()
    };
    let mut dists = Vec::with_capacity(idx.len() * idx.len().saturating_sub(1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d2: f64 = points[i]
                .as_ref()
                .iter()
                .zip(points[j].as_ref())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    Ok(if median > 0.0 { 1.0 / (2.0 * median * median) } else { 1.0 })
}

/// Low-rank approximate Gaussian feature map from sampled landmarks.
///
/// With landmark kernel matrix `K = U diag(lambda) U^T`, the map is
/// `z(x) = diag(lambda)^{-1/2} U^T k(x)` where `k(x)` holds the kernel values
/// between `x` and each landmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromMap {
    gamma: f64,
    dims: usize,
    landmarks: Vec<f64>,
    rank: usize,
    /// `rank x m`, row-major.
    projection: Vec<f64>,
}

impl NystromMap {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Dimensionality of `z(x)`. Can be below the requested rank when the
    /// landmark kernel matrix has eigenvalues under the numerical floor.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len() / self.dims
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dims {
            return Err(Error::dims(self.dims, x.len()));
        }
        Ok(self.features_unchecked(x))
    }

    fn features_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self
            .landmarks
            .chunks_exact(self.dims)
            .map(|l| gaussian_kernel(self.gamma, x, l))
            .collect();
        self.projection
            .chunks_exact(k.len())
            .map(|row| dot(row, &k))
            .collect()
    }

    pub fn features_many<P: AsRef<[f64]> + Sync>(&self, points: &[P]) -> Result<Vec<Vec<f64>>> {
        if let Some(p) = points.iter().find(|p| p.as_ref().len() != self.dims) {
            return Err(Error::dims(self.dims, p.as_ref().len()));
        }
        Ok(points.par_iter().map(|p| self.features_unchecked(p.as_ref())).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&NystromFile {
            format: NYSTROM_FORMAT.into(),
            version: 1,
            map: self.clone(),
        })
        .expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NystromFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != NYSTROM_FORMAT || file.version != 1 {
            return Err(Error::Format("unsupported Nystrom map format".into()));
        }
        let m = file.map;
        if m.dims == 0 || m.landmarks.len() % m.dims != 0 || m.projection.len() != m.rank * m.landmark_count() {
            return Err(Error::Format("inconsistent Nystrom buffers".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

const NYSTROM_FORMAT: &str = "nystrom-gaussian";

#[derive(Serialize, Deserialize)]
struct NystromFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    map: NystromMap,
}

pub fn gdk_fit_nystrom<P: AsRef<[f64]>>(points: &[P], params: GDKParams) -> Result<NystromMap> {
    params.validate()?;
    let m = params.nystrom_samples;
    if points.len() < m {
        return Err(Error::InsufficientPoints {
            needed: m,
            available: points.len(),
        });
    }
    let dims = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dims) {
        return Err(Error::dims(dims, p.as_ref().len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut idx = rand::seq::index::sample(&mut rng, points.len(), m).into_vec();
    idx.sort_unstable();
    let landmarks: Vec<f64> = idx
        .iter()
        .flat_map(|&i| points[i].as_ref().iter().copied())
        .collect();

    let lm = |i: usize| &landmarks[i * dims..(i + 1) * dims];
    let kmm = DMatrix::from_fn(m, m, |i, j| {
        gaussian_kernel(params.gamma, lm(i), lm(j)) + if i == j { RIDGE } else { 0.0 }
    });
    let eig = SymmetricEigen::new(kmm);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let kept: Vec<usize> = order
        .into_iter()
        .take(params.nystrom_rank)
        .filter(|&i| eig.eigenvalues[i] > EIGEN_FLOOR)
        .collect();
    if kept.is_empty() {
        return Err(Error::SingularKernel);
    }
    let mut projection = Vec::with_capacity(kept.len() * m);
    for &c in &kept {
        let inv_sqrt = 1.0 / eig.eigenvalues[c].sqrt();
        projection.extend(eig.eigenvectors.column(c).iter().map(|u| u * inv_sqrt));
    }
    Ok(NystromMap {
        gamma: params.gamma,
        dims,
        landmarks,
        rank: kept.len(),
        projection,
    })
}

/// Mean of `z(x)` over the set.
pub fn embed_set_gdk<P: AsRef<[f64]>>(map: &NystromMap, pts: &[P]) -> Result<MeanMapVector> {
    if pts.is_empty() {
        return Err(Error::Empty("cannot embed an empty point set".into()));
    }
    let mut acc = vec![0.0; map.rank()];
    for p in pts {
        for (a, z) in acc.iter_mut().zip(map.features(p.as_ref())?) {
            *a += z;
        }
    }
    let n = pts.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(MeanMapVector {
        values: acc,
        source_size: pts.len(),
        kernel_tag: KernelTag::GdkNystrom,
    })
}

pub fn embed_dataset_gdk(map: &NystromMap, ds: &TrajectoryDataset) -> Result<Vec<MeanMapVector>> {
    ds.trajectories()
        .par_iter()
        .map(|t| embed_set_gdk(map, &t.points().collect::<Vec<_>>()))
        .collect()
}

/// Writes one row per embedding: `id,v0,v1,...` with a header.
pub fn write_embeddings_csv<W: std::io::Write>(ids: &[&str], maps: &[MeanMapVector], w: W) -> Result<()> {
    if ids.len() != maps.len() {
        return Err(Error::dims(maps.len(), ids.len()));
    }
    let fail = |e: csv::Error| Error::Format(e.to_string());
    let mut out = csv::Writer::from_writer(w);
    let dim = maps.first().map_or(0, MeanMapVector::dim);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|j| format!("v{j}")));
    out.write_record(&header).map_err(fail)?;
    for (id, m) in ids.iter().zip(maps) {
        let mut row = vec![id.to_string()];
        row.extend(m.values().iter().map(f64::to_string));
        out.write_record(&row).map_err(fail)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}
