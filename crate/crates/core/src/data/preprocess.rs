use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Label, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

/// Which trajectories [`downsample`] shortens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    /// For every label, a random `floor(count / 2)` of its trajectories.
    HalfPerCluster,
}

/// Rescales every axis so the pooled points span `[0, 1]`; constant axes map to 0.5.
pub fn min_max_normalize(ds: &TrajectoryDataset) -> TrajectoryDataset {
    let d = ds.dims();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in ds.iter().flat_map(Trajectory::points) {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let trajectories = ds
        .iter()
        .map(|t| {
            let coords = t
                .points()
                .flat_map(|p| {
                    (0..d).map(|j| {
                        let span = hi[j] - lo[j];
                        if span > 0.0 {
                            (p[j] - lo[j]) / span
                        } else {
                            0.5
                        }
                    })
                })
                .collect();
            t.with_coords(d, coords).expect("affine image of valid trajectory")
        })
        .collect();
    TrajectoryDataset::new(trajectories).expect("same ids and dims")
}

/// Number of points kept when sampling `n` points at `rate`.
pub(crate) fn kept_len(n: usize, rate: f64) -> usize {
    // The epsilon keeps products like 0.3 * 10 from rounding up past 3.
    let m = (rate * n as f64 - 1e-9).ceil() as usize;
    m.clamp(1, n)
}

/// Uniformly strided indices into `0..n`, first and last included when `m >= 2`.
pub(crate) fn strided_indices(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    if m == 1 {
        return vec![0];
    }
    // round(i * (n-1) / (m-1)) in integer arithmetic; strictly increasing since m <= n.
    (0..m)
        .map(|i| (2 * i * (n - 1) + (m - 1)) / (2 * (m - 1)))
        .collect()
}

fn shorten(t: &Trajectory, rate: f64) -> Trajectory {
    let idx = strided_indices(t.len(), kept_len(t.len(), rate));
    let coords = idx.iter().flat_map(|&i| t.point(i).iter().copied()).collect();
    t.with_coords(t.dims(), coords).expect("subset of valid trajectory")
}

/// Simulates a lower sensor sampling rate by uniform index striding.
pub fn downsample(
    ds: &TrajectoryDataset,
    rate: f64,
    selection: Selection,
    rng_seed: u64,
) -> Result<TrajectoryDataset> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::invalid(format!("sampling rate {rate} not in (0, 1]")));
    }
    let selected: Vec<bool> = match selection {
        Selection::All => vec![true; ds.len()],
        Selection::HalfPerCluster => {
            let labels = ds.labels().ok_or_else(|| {
                Error::MissingLabels("half-per-cluster downsampling needs labels".into())
            })?;
            let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.into_iter().enumerate() {
                by_label.entry(l).or_default().push(i);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut selected = vec![false; ds.len()];
            for members in by_label.values() {
                for k in rand::seq::index::sample(&mut rng, members.len(), members.len() / 2) {
                    selected[members[k]] = true;
                }
            }
            selected
        }
    };
    let trajectories = ds
        .iter()
        .zip(&selected)
        .map(|(t, &sel)| if sel { shorten(t, rate) } else { t.clone() })
        .collect();
    TrajectoryDataset::new(trajectories)
}

/// Appends an order coordinate `weight * i / max(n - 1, 1)` to every point.
pub fn augment_order_dimension(ds: &TrajectoryDataset, weight: f64) -> Result<TrajectoryDataset> {
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::invalid(format!("order weight {weight} must be positive")));
    }
    let d = ds.dims();
    let trajectories = ds
        .iter()
        .map(|t| {
            let denom = (t.len().max(2) - 1) as f64;
            let mut coords = Vec::with_capacity(t.len() * (d + 1));
            for (i, p) in t.points().enumerate() {
                coords.extend_from_slice(p);
                coords.push(weight * i as f64 / denom);
            }
            t.with_coords(d + 1, coords)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(id: &str, label: Option<Label>, pts: &[[f64; 2]]) -> Trajectory {
        Trajectory::from_points(id, label, pts).unwrap()
    }

    fn line(id: &str, label: Option<Label>, n: usize) -> Trajectory {
        let pts: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, -(i as f64)]).collect();
        traj(id, label, &pts)
    }

    #[test]
    fn normalize_affine() {
        let ds = TrajectoryDataset::new(vec![traj("a", None, &[[0.0, -5.0], [10.0, 5.0], [2.5, 0.0]])])
            .unwrap();
        let n = min_max_normalize(&ds);
        assert_eq!(n.get(0).point(0), &[0.0, 0.0]);
        assert_eq!(n.get(0).point(1), &[1.0, 1.0]);
        assert_eq!(n.get(0).point(2), &[0.25, 0.5]);
    }

    #[test]
    fn normalize_constant_and_identity() {
        let ds = TrajectoryDataset::new(vec![traj("a", None, &[[3.0, 3.0], [3.0, 3.0]])]).unwrap();
        let n = min_max_normalize(&ds);
        assert!(n.get(0).coords().iter().all(|&c| c == 0.5));

        let unit = TrajectoryDataset::new(vec![traj("a", None, &[[0.0, 1.0], [1.0, 0.0], [0.5, 0.25]])])
            .unwrap();
        assert_eq!(min_max_normalize(&unit), unit);
    }

    #[test]
    fn downsample_identity_and_length() {
        let ds = TrajectoryDataset::new(vec![line("a", None, 10), line("b", None, 1)]).unwrap();
        assert_eq!(downsample(&ds, 1.0, Selection::All, 0).unwrap(), ds);
        let half = downsample(&ds, 0.5, Selection::All, 0).unwrap();
        let a = half.get(0);
        assert_eq!(a.len(), 5);
        assert_eq!(a.point(0), ds.get(0).point(0));
        assert_eq!(a.point(4), ds.get(0).point(9));
        assert_eq!(half.get(1).len(), 1);
        assert_eq!(downsample(&ds, 0.3, Selection::All, 0).unwrap().get(0).len(), 3);
    }

    #[test]
    fn downsample_errors() {
        let ds = TrajectoryDataset::new(vec![line("a", None, 10)]).unwrap();
        assert!(matches!(
            downsample(&ds, 0.5, Selection::HalfPerCluster, 0),
            Err(Error::MissingLabels(_))
        ));
        assert!(downsample(&ds, 0.0, Selection::All, 0).is_err());
        assert!(downsample(&ds, 1.5, Selection::All, 0).is_err());
    }

    #[test]
    fn half_per_cluster_counts() {
        // 5 trajectories with label 0, 4 with label 1, 1 with label 2.
        let labels = [0, 0, 1, 0, 1, 2, 0, 1, 0, 1];
        let trajs: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| line(&format!("t{i}"), Some(l), 10))
            .collect();
        let ds = TrajectoryDataset::new(trajs).unwrap();
        for seed in 0..20 {
            let out = downsample(&ds, 0.3, Selection::HalfPerCluster, seed).unwrap();
            let mut shortened = BTreeMap::<Label, usize>::new();
            for t in &out {
                if t.len() < 10 {
                    assert_eq!(t.len(), 3);
                    *shortened.entry(t.label().unwrap()).or_default() += 1;
                }
            }
            assert_eq!(shortened.get(&0).copied().unwrap_or(0), 2);
            assert_eq!(shortened.get(&1).copied().unwrap_or(0), 2);
            assert_eq!(shortened.get(&2).copied().unwrap_or(0), 0);
        }
    }

    #[test]
    fn order_dimension_ramp() {
        let ds = TrajectoryDataset::new(vec![
            traj("a", None, &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
            traj("b", None, &[[7.0, 7.0]]),
        ])
        .unwrap();
        let aug = augment_order_dimension(&ds, 1.0).unwrap();
        assert_eq!(aug.dims(), 3);
        let order: Vec<f64> = aug.get(0).points().map(|p| p[2]).collect();
        assert_eq!(order, vec![0.0, 0.5, 1.0]);
        assert_eq!(aug.get(1).point(0), &[7.0, 7.0, 0.0]);
    }

    #[test]
    fn order_dimension_separates_reversals() {
        let fwd = [[0.0, 0.0], [1.0, 0.5], [2.0, 2.0]];
        let mut rev = fwd;
        rev.reverse();
        let ds = TrajectoryDataset::new(vec![traj("f", None, &fwd), traj("r", None, &rev)]).unwrap();
        let as_set = |t: &Trajectory| {
            let mut v: Vec<Vec<u64>> = t.points().map(|p| p.iter().map(|c| c.to_bits()).collect()).collect();
            v.sort();
            v
        };
        assert_eq!(as_set(ds.get(0)), as_set(ds.get(1)));
        let aug = augment_order_dimension(&ds, 1.0).unwrap();
        assert_ne!(as_set(aug.get(0)), as_set(aug.get(1)));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(coords in prop::collection::vec(-1e3f64..1e3, 2..40)) {
            let mut coords = coords;
            coords.truncate(coords.len() / 2 * 2);
            let ds = TrajectoryDataset::new(vec![Trajectory::new("a", None, 2, coords).unwrap()]).unwrap();
            let once = min_max_normalize(&ds);
            let twice = min_max_normalize(&once);
            for (a, b) in once.get(0).coords().iter().zip(twice.get(0).coords()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn downsample_length_is_ceil(n in 2usize..200, rate in 0.01f64..=1.0) {
            let ds = TrajectoryDataset::new(vec![line("a", None, n)]).unwrap();
            let out = downsample(&ds, rate, Selection::All, 1).unwrap();
            let expected = ((rate * n as f64) - 1e-9).ceil().max(1.0) as usize;
            prop_assert_eq!(out.get(0).len(), expected);
            prop_assert_eq!(out.get(0).point(0), ds.get(0).point(0));
            if expected >= 2 {
                prop_assert_eq!(out.get(0).point(expected - 1), ds.get(0).point(n - 1));
            }
        }

        #[test]
        fn augmentation_preserves_original(n in 1usize..30, w in 0.1f64..5.0) {
            let ds = TrajectoryDataset::new(vec![line("a", None, n), line("b", None, 3)]).unwrap();
            let aug = augment_order_dimension(&ds, w).unwrap();
            prop_assert_eq!(aug.len(), ds.len());
            for (t, a) in ds.iter().zip(aug.iter()) {
                prop_assert_eq!(t.len(), a.len());
                for (p, q) in t.points().zip(a.points()) {
                    prop_assert_eq!(p, &q[..2]);
                }
            }
        }
    }
}
