//! Point-based trajectory distances and distance-matrix export.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Trajectory, TrajectoryDataset};
use crate::dist::{self, GDKParams, MeanMapVector};
use crate::error::{Error, Result};
use crate::ik::{IKParams, IsolationKernelModel};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_pair(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("trajectory has no points".into()));
    }
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    Ok(())
}

fn directed_hausdorff(a: &Trajectory, b: &Trajectory) -> f64 {
    a.points()
        .map(|p| b.points().map(|q| euclidean(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the point sets of two trajectories.
pub fn hausdorff(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    check_pair(a, b)?;
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

/// Dynamic time warping with Euclidean point cost and the symmetric
/// match/insert/delete recurrence. `band` is a Sakoe-Chiba half-width.
pub fn dtw(a: &Trajectory, b: &Trajectory, band: Option<usize>) -> Result<f64> {
    check_pair(a, b)?;
    let (n, m) = (a.len(), b.len());
    let w = match band {
        Some(w) if w < n.abs_diff(m) => {
            return Err(Error::invalid(format!(
                "band {w} narrower than length difference {}",
                n.abs_diff(m)
            )))
        }
        Some(w) => w,
        None => n.max(m),
    };
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(w).max(1);
        let hi = (i + w).min(m);
        let p = a.point(i - 1);
        for j in lo..=hi {
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = euclidean(p, b.point(j - 1)) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m])
}

/// Trajectory distance used to build a [`DistanceMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "measure", rename_all = "snake_case")]
pub enum Measure {
    Hausdorff,
    Dtw {
        band: Option<usize>,
    },
    /// Kernel-induced distance of IDK mean maps, IK fit on the pooled points.
    IdkDistance {
        ik: IKParams,
    },
    /// Kernel-induced distance of Nyström GDK mean maps. `None` picks
    /// median-heuristic defaults on the pooled points.
    GdkDistance {
        params: Option<GDKParams>,
        rng_seed: u64,
    },
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Hausdorff => "hausdorff",
            Measure::Dtw { .. } => "dtw",
            Measure::IdkDistance { .. } => "idk",
            Measure::GdkDistance { .. } => "gdk",
        }
    }
}

/// Symmetric `n x n` distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds from a full row-major buffer, checking the matrix invariants.
    pub fn from_values(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if values.len() != n * n {
            return Err(Error::dims(n * n, values.len()));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::invalid("distance matrix diagonal must be zero"));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= 0.0) || (v - values[j * n + i]).abs() > 1e-12 {
                    return Err(Error::invalid("distance matrix must be symmetric and nonnegative"));
                }
            }
        }
        Ok(DistanceMatrix { ids, values })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV with a header row and a leading column of ids.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let to_err = |e: csv::Error| Error::Format(e.to_string());
        let mut header = vec!["id".to_string()];
        header.extend(self.ids.iter().cloned());
        wtr.write_record(&header).map_err(to_err)?;
        for (i, id) in self.ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.row(i).iter().map(f64::to_string));
            wtr.write_record(&row).map_err(to_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<output>", e))
    }
}

/// Fills the upper triangle in parallel and mirrors it.
fn symmetric_from_pairs<F>(ids: Vec<String>, f: F) -> Result<DistanceMatrix>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let n = ids.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    f(i, j).map_err(|e| Error::Pair {
                        a: ids[i].clone(),
                        b: ids[j].clone(),
                        source: Box::new(e),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(DistanceMatrix { ids, values })
}

/// Kernel-induced distance matrix from precomputed mean maps.
pub fn kernel_distance_matrix(ids: Vec<String>, maps: &[MeanMapVector]) -> Result<DistanceMatrix> {
    symmetric_from_pairs(ids, |i, j| dist::kernel_distance(&maps[i], &maps[j]))
}

pub fn pairwise_matrix(ds: &TrajectoryDataset, measure: &Measure) -> Result<DistanceMatrix> {
    let ids: Vec<String> = ds.ids().into_iter().map(str::to_string).collect();
    let t = ds.trajectories();
    match measure {
        Measure::Hausdorff => symmetric_from_pairs(ids, |i, j| hausdorff(&t[i], &t[j])),
        Measure::Dtw { band } => symmetric_from_pairs(ids, |i, j| dtw(&t[i], &t[j], *band)),
        Measure::IdkDistance { ik } => {
            let model = IsolationKernelModel::fit(&ds.pooled_points(), *ik)?;
            let maps = dist::embed_dataset_idk(&model, ds)?;
            kernel_distance_matrix(ids, &maps)
        }
        Measure::GdkDistance { params, rng_seed } => {
            let pooled = ds.pooled_points();
            let params = match params {
                Some(p) => *p,
                None => GDKParams::auto(&pooled, *rng_seed)?,
            };
            let map = dist::gdk_fit_nystrom(&pooled, params)?;
            let maps = dist::embed_dataset_gdk(&map, ds)?;
            kernel_distance_matrix(ids, &maps)
        }
    }
}

/// K-medoids-style reference clusterer on a distance matrix: k-means++ style
/// medoid seeding, then alternating nearest-medoid assignment and medoid
/// update until stable. Returns 0-based cluster indices.
pub fn nearest_medoid_baseline(matrix: &DistanceMatrix, k: usize, rng_seed: u64) -> Result<Vec<usize>> {
    let n = matrix.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| {
                let d = medoids.iter().map(|&m| matrix.get(i, m)).fold(f64::INFINITY, f64::min);
                d * d
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            (0..n).find(|i| !medoids.contains(i)).expect("k <= n")
        };
        medoids.push(next);
    }
    let assign = |medoids: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                let mut best = 0;
                for c in 1..medoids.len() {
                    if matrix.get(i, medoids[c]) < matrix.get(i, medoids[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&medoids);
    for _ in 0..100 {
        let mut changed = false;
        for (c, medoid) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            let cost = |cand: usize| members.iter().map(|&i| matrix.get(cand, i)).sum::<f64>();
            if let Some(&best) = members.iter().min_by(|&&a, &&b| cost(a).total_cmp(&cost(b))) {
                if cost(best) < cost(*medoid) {
                    *medoid = best;
                    changed = true;
                }
            }
        }
        let next = assign(&medoids);
        if !changed && next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(id: &str, pts: &[[f64; 2]]) -> Trajectory {
        Trajectory::from_points(id, None, pts).unwrap()
    }

    #[test]
    fn hausdorff_basics() {
        let a = traj("a", &[[0.0, 0.0], [1.0, 2.0]]);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(
            hausdorff(&traj("a", &[[0.0, 0.0]]), &traj("b", &[[3.0, 4.0]])).unwrap(),
            5.0
        );
        let c = Trajectory::from_points("c", None, &[[0.0, 0.0, 0.0]]).unwrap();
        assert!(hausdorff(&a, &c).is_err());
    }

    #[test]
    fn dtw_basics() {
        let a = traj("a", &[[0.0, 0.0], [1.0, 0.0], [2.0, 1.0]]);
        assert_eq!(dtw(&a, &a, None).unwrap(), 0.0);
        let a = traj("a", &[[0.0, 0.0], [1.0, 0.0]]);
        let b = traj("b", &[[0.0, 0.0]]);
        assert_eq!(dtw(&a, &b, None).unwrap(), 1.0);
        assert_eq!(dtw(&a, &b, Some(1)).unwrap(), 1.0);
        assert!(dtw(&a, &b, Some(0)).is_err());
    }

    #[test]
    fn band_zero_equal_lengths_is_lockstep() {
        let a = traj("a", &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let b = traj("b", &[[0.0, 1.0], [2.0, 0.0], [2.0, 0.0]]);
        let lockstep: f64 = a.points().zip(b.points()).map(|(p, q)| euclidean(p, q)).sum();
        assert_eq!(dtw(&a, &b, Some(0)).unwrap(), lockstep);
        assert!(dtw(&a, &b, None).unwrap() <= lockstep);
    }

    #[test]
    fn matrix_shapes() {
        let ds = TrajectoryDataset::new(vec![traj("a", &[[0.0, 0.0]])]).unwrap();
        let m = pairwise_matrix(&ds, &Measure::Hausdorff).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.get(0, 0), 0.0);

        let ds = TrajectoryDataset::new(vec![
            traj("a", &[[0.0, 0.0], [1.0, 1.0]]),
            traj("b", &[[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]]),
            traj("c", &[[5.0, 5.0]]),
        ])
        .unwrap();
        let m = pairwise_matrix(&ds, &Measure::Dtw { band: None }).unwrap();
        assert_eq!(m.get(0, 2), m.get(2, 0));
        assert_eq!(m.get(1, 2), dtw(ds.get(1), ds.get(2), None).unwrap());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "id,a,b,c");
        assert_eq!(text.lines().count(), 4);

        let idk = pairwise_matrix(&ds, &Measure::IdkDistance { ik: IKParams::new(2, 50, 0).unwrap() }).unwrap();
        for i in 0..3 {
            assert_eq!(idk.get(i, i), 0.0);
        }
    }

    #[test]
    fn pair_errors_name_ids() {
        let ds = TrajectoryDataset::new(vec![
            traj("short", &[[0.0, 0.0]]),
            traj("long", &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]),
        ])
        .unwrap();
        match pairwise_matrix(&ds, &Measure::Dtw { band: Some(1) }) {
            Err(Error::Pair { a, b, .. }) => assert_eq!((a.as_str(), b.as_str()), ("short", "long")),
            other => panic!("expected pair error, got {other:?}"),
        }
    }

    #[test]
    fn medoid_baseline_separates_blobs() {
        let mut trajs = Vec::new();
        for i in 0..10 {
            let off = if i < 5 { 0.0 } else { 50.0 };
            trajs.push(traj(&format!("t{i}"), &[[off + i as f64 * 0.1, 0.0]]));
        }
        let ds = TrajectoryDataset::new(trajs).unwrap();
        let m = pairwise_matrix(&ds, &Measure::Hausdorff).unwrap();
        let labels = nearest_medoid_baseline(&m, 2, 3).unwrap();
        assert!(labels[..5].iter().all(|&l| l == labels[0]));
        assert!(labels[5..].iter().all(|&l| l == labels[5]));
        assert_ne!(labels[0], labels[5]);
        assert!(nearest_medoid_baseline(&m, 11, 0).is_err());
    }
}
