//! Isolation Kernel built from random Voronoi partitionings.
//!
//! Each of the `t` partitionings samples `psi` distinct points of the fit set
//! as Voronoi centers. A point's feature map marks, in every partitioning, the
//! cell of its nearest center, scaled by `1/sqrt(t)` so that the dot product of
//! two feature maps is the fraction of partitionings in which the points share
//! a cell.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IKParams {
    /// Centers per partitioning.
    pub psi: usize,
    /// Number of partitionings.
    pub t: usize,
    pub rng_seed: u64,
}

impl IKParams {
    pub fn new(psi: usize, t: usize, rng_seed: u64) -> Result<Self> {
        let p = IKParams { psi, t, rng_seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.psi < 2 {
            return Err(Error::invalid(format!("psi must be >= 2, got {}", self.psi)));
        }
        if self.t < 1 {
            return Err(Error::invalid("t must be >= 1"));
        }
        Ok(())
    }

    /// `t * psi`, the feature-space dimensionality.
    pub fn feature_dim(&self) -> usize {
        self.t * self.psi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationKernelModel {
    params: IKParams,
    dims: usize,
    /// `t` blocks of `psi` centers, row-major.
    centers: Vec<f64>,
}

/// Sparse feature map: one active cell per partitioning, each worth `1/sqrt(t)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseFeatureVector {
    psi: usize,
    cells: Vec<u32>,
}

impl SparseFeatureVector {
    pub fn dimension(&self) -> usize {
        self.psi * self.cells.len()
    }

    pub fn t(&self) -> usize {
        self.cells.len()
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    /// Value stored at every active index.
    pub fn value(&self) -> f64 {
        1.0 / (self.cells.len() as f64).sqrt()
    }

    /// Cell index within each partitioning's block.
    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(j, &c)| j * self.psi + c as usize)
    }

    /// Number of partitionings in which both points share a cell.
    pub fn shared_cells(&self, other: &Self) -> usize {
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a == b)
            .count()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.shared_cells(other) as f64 / self.cells.len() as f64
    }

    /// Dot product with a dense vector of the same dimension.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.active_indices().map(|i| dense[i]).sum::<f64>() * self.value()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension()];
        let value = self.value();
        for i in self.active_indices() {
            v[i] = value;
        }
        v
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl IsolationKernelModel {
    /// Samples `t` independent sets of `psi` distinct Voronoi centers from `points`.
    pub fn fit<P: AsRef<[f64]>>(points: &[P], params: IKParams) -> Result<Self> {
        params.validate()?;
        if points.len() < params.psi {
            return Err(Error::InsufficientPoints {
                needed: params.psi,
                available: points.len(),
            });
        }
        let dims = points[0].as_ref().len();
        if dims == 0 {
            return Err(Error::invalid("points have zero dimensions"));
        }
        if let Some(p) = points.iter().find(|p| p.as_ref().len() != dims) {
            return Err(Error::dims(dims, p.as_ref().len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let mut centers = Vec::with_capacity(params.feature_dim() * dims);
        for _ in 0..params.t {
            for i in rand::seq::index::sample(&mut rng, points.len(), params.psi) {
                centers.extend_from_slice(points[i].as_ref());
            }
        }
        Ok(IsolationKernelModel {
            params,
            dims,
            centers,
        })
    }

    pub fn params(&self) -> &IKParams {
        &self.params
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn feature_dim(&self) -> usize {
        self.params.feature_dim()
    }

    /// Center `c` of partitioning `j`.
    pub fn center(&self, j: usize, c: usize) -> &[f64] {
        let start = (j * self.params.psi + c) * self.dims;
        &self.centers[start..start + self.dims]
    }

    /// Nearest-center cell per partitioning; ties go to the lowest center index.
    fn cells_unchecked(&self, x: &[f64]) -> Vec<u32> {
        let block = self.params.psi * self.dims;
        self.centers
            .chunks_exact(block)
            .map(|centers| {
                let mut best = 0u32;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.chunks_exact(self.dims).enumerate() {
                    let d = squared_distance(x, center);
                    if d < best_d {
                        best_d = d;
                        best = c as u32;
                    }
                }
                best
            })
            .collect()
    }

    pub fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims {
            return Err(Error::dims(self.dims, x.len()));
        }
        Ok(())
    }

    pub fn feature_map(&self, x: &[f64]) -> Result<SparseFeatureVector> {
        self.check_dims(x)?;
        Ok(SparseFeatureVector {
            psi: self.params.psi,
            cells: self.cells_unchecked(x),
        })
    }

    /// Feature maps for many points, computed in parallel.
    pub fn feature_maps<P: AsRef<[f64]> + Sync>(&self, points: &[P]) -> Result<Vec<SparseFeatureVector>> {
        points.iter().try_for_each(|p| self.check_dims(p.as_ref()))?;
        Ok(points
            .par_iter()
            .map(|p| SparseFeatureVector {
                psi: self.params.psi,
                cells: self.cells_unchecked(p.as_ref()),
            })
            .collect())
    }

    pub fn similarity(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.feature_map(x)?.dot(&self.feature_map(y)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        let m = file.model;
        m.params.validate()?;
        if m.dims == 0 || m.centers.len() != m.params.feature_dim() * m.dims {
            return Err(Error::Format("center buffer does not match params".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const MODEL_FORMAT: &str = "isolation-kernel";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: IsolationKernelModel,
}

/// `<phi(x), phi(y)>` under `model`.
pub fn ik_similarity(model: &IsolationKernelModel, x: &[f64], y: &[f64]) -> Result<f64> {
    model.similarity(x, y)
}
