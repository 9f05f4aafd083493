//! Trajectory data model, file formats, preprocessing and synthetic data.
//!
//! A trajectory is an ordered sequence of `d`-dimensional points. Coordinates
//! are stored contiguously; [`Trajectory::point`] hands out `&[f64]` views so
//! every downstream kernel works directly on slices.

mod io;
mod preprocess;
mod synth;

use std::collections::HashSet;

pub use io::{load_dataset, save_dataset, FileFormat};
pub use preprocess::{augment_order_dimension, downsample, min_max_normalize, Selection};
pub use synth::{generate_synthetic, ClusterTemplate, SyntheticSpec};

use crate::error::{Error, Result};

/// Class label attached to a trajectory. Only evaluation reads it.
pub type Label = i64;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    label: Option<Label>,
    dims: usize,
    coords: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from a flat, row-major coordinate buffer.
    pub fn new(
        id: impl Into<String>,
        label: Option<Label>,
        dims: usize,
        coords: Vec<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if dims == 0 {
            return Err(Error::invalid(format!("trajectory `{id}` has zero dimensions")));
        }
        if coords.is_empty() {
            return Err(Error::Empty(format!("trajectory `{id}` has no points")));
        }
        if coords.len() % dims != 0 {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: coords.len() % dims,
                context: Some(format!("trajectory `{id}`")),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { id });
        }
        Ok(Trajectory {
            id,
            label,
            dims,
            coords,
        })
    }

    pub fn from_points<P: AsRef<[f64]>>(
        id: impl Into<String>,
        label: Option<Label>,
        points: &[P],
    ) -> Result<Self> {
        let id = id.into();
        let dims = points
            .first()
            .map(|p| p.as_ref().len())
            .ok_or_else(|| Error::Empty(format!("trajectory `{id}` has no points")))?;
        let mut coords = Vec::with_capacity(dims * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: p.len(),
                    context: Some(format!("trajectory `{id}`")),
                });
            }
            coords.extend_from_slice(p);
        }
        Trajectory::new(id, label, dims, coords)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of points; always at least one.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dims)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Same id and label, new coordinates. Used by the preprocessing steps.
    pub(crate) fn with_coords(&self, dims: usize, coords: Vec<f64>) -> Result<Self> {
        Trajectory::new(self.id.clone(), self.label, dims, coords)
    }
}

/// A non-empty collection of trajectories sharing one dimensionality.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
    dims: usize,
}

impl TrajectoryDataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let dims = trajectories
            .first()
            .map(Trajectory::dims)
            .ok_or_else(|| Error::Empty("dataset has no trajectories".into()))?;
        let mut seen = HashSet::with_capacity(trajectories.len());
        for t in &trajectories {
            if t.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: t.dims(),
                    context: Some(format!("trajectory `{}`", t.id())),
                });
            }
            if !seen.insert(t.id()) {
                return Err(Error::DuplicateId(t.id().to_string()));
            }
        }
        Ok(TrajectoryDataset { trajectories, dims })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Trajectory> {
        self.trajectories.iter()
    }

    pub fn pooled_point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// The pooled point set `S`, every point of every trajectory in order.
    pub fn pooled_points(&self) -> Vec<&[f64]> {
        self.trajectories.iter().flat_map(|t| t.points()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.trajectories.iter().map(Trajectory::id).collect()
    }

    /// All labels, or `None` if any trajectory is unlabeled.
    pub fn labels(&self) -> Option<Vec<Label>> {
        self.trajectories.iter().map(Trajectory::label).collect()
    }

    pub fn into_trajectories(self) -> Vec<Trajectory> {
        self.trajectories
    }
}

impl<'a> IntoIterator for &'a TrajectoryDataset {
    type Item = &'a Trajectory;
    type IntoIter = std::slice::Iter<'a, Trajectory>;

    fn into_iter(self) -> Self::IntoIter {
        self.trajectories.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let err = Trajectory::from_points("a", None, &[[0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(Trajectory::from_points::<[f64; 2]>("a", None, &[]).is_err());
        let ragged: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0]];
        assert!(matches!(
            Trajectory::from_points("a", None, &ragged),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dataset_invariants() {
        let a = Trajectory::from_points("a", Some(0), &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let b = Trajectory::from_points("a", Some(1), &[[0.0, 0.0]]).unwrap();
        assert!(matches!(
            TrajectoryDataset::new(vec![a.clone(), b]),
            Err(Error::DuplicateId(_))
        ));
        let c = Trajectory::from_points("c", None, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            TrajectoryDataset::new(vec![a.clone(), c]),
            Err(Error::DimensionMismatch { .. })
        ));
        let ds = TrajectoryDataset::new(vec![a]).unwrap();
        assert_eq!(ds.pooled_point_count(), 2);
        assert_eq!(ds.labels(), Some(vec![0]));
        assert!(TrajectoryDataset::new(vec![]).is_err());
    }
}
