//! External clustering indices, retrieval precision and sampling sweeps.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::DistanceMatrix;
use crate::data::{downsample, Label, Selection, TrajectoryDataset};
use crate::dist::{self, MeanMapVector};
use crate::error::{Error, Result};
use crate::tidkc::{self, TidkcParams};

/// Counts of co-occurring (true, predicted) labels.
///
/// Rows follow distinct true labels, columns distinct predicted labels, both
/// in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    rows: Vec<u64>,
    cols: Vec<u64>,
    n: u64,
}

fn dense_ids<T: Hash + Eq>(labels: &[T]) -> (Vec<usize>, usize) {
    let mut seen: HashMap<&T, usize> = HashMap::new();
    let ids = labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(l).or_insert(next)
        })
        .collect();
    (ids, seen.len())
}

impl ContingencyTable {
    pub fn new<A: Hash + Eq, B: Hash + Eq>(truth: &[A], pred: &[B]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: pred.len(),
                context: Some("label vectors".into()),
            });
        }
        if truth.is_empty() {
            return Err(Error::Empty("label vectors".into()));
        }
        let (r, nr) = dense_ids(truth);
        let (c, nc) = dense_ids(pred);
        let mut counts = vec![vec![0u64; nc]; nr];
        for (&i, &j) in r.iter().zip(&c) {
            counts[i][j] += 1;
        }
        let rows = counts.iter().map(|row| row.iter().sum()).collect();
        let cols = (0..nc).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            rows,
            cols,
            n: truth.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn row_marginals(&self) -> &[u64] {
        &self.rows
    }

    pub fn col_marginals(&self) -> &[u64] {
        &self.cols
    }

    pub fn total(&self) -> u64 {
        self.n
    }
}

fn entropy(marginals: &[u64], n: f64) -> f64 {
    marginals
        .iter()
        .filter(|&&m| m > 0)
        .map(|&m| {
            let p = m as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(U;V) / sqrt(H(U) H(V))`, natural logs.
pub fn nmi<A: Hash + Eq, B: Hash + Eq>(truth: &[A], pred: &[B]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    let n = table.n as f64;
    let hu = entropy(&table.rows, n);
    let hv = entropy(&table.cols, n);
    // A single cluster on a side has exactly zero entropy.
    match (table.rows.len() == 1, table.cols.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (table.rows[i] as f64 * table.cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

fn pairs(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index by pair counting.
pub fn ari<A: Hash + Eq, B: Hash + Eq>(truth: &[A], pred: &[B]) -> Result<f64> {
    let table = ContingencyTable::new(truth, pred)?;
    if table.n < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let index: f64 = table.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = table.rows.iter().map(|&c| pairs(c)).sum();
    let b: f64 = table.cols.iter().map(|&c| pairs(c)).sum();
    let expected = a * b / pairs(table.n);
    let max = (a + b) / 2.0;
    if max == expected {
        // Both partitions trivial (all singletons or one block) and hence identical.
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCurve {
    pub ks: Vec<usize>,
    pub precision: Vec<f64>,
}

impl PrecisionCurve {
    /// Two-column `k,precision` CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let fail = |e: csv::Error| Error::Format(e.to_string());
        out.write_record(["k", "precision"]).map_err(fail)?;
        for (k, p) in self.ks.iter().zip(&self.precision) {
            out.write_record([k.to_string(), p.to_string()]).map_err(fail)?;
        }
        out.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// What ranks the neighbours of a query.
#[derive(Debug, Clone, Copy)]
pub enum Ranking<'a> {
    /// Dot products of mean maps, larger is nearer.
    Embeddings(&'a [MeanMapVector]),
    Distances(&'a DistanceMatrix),
    /// Row-major `n x n` similarities, larger is nearer.
    Similarities(&'a [f64]),
}

impl Ranking<'_> {
    fn len(&self) -> usize {
        match self {
            Ranking::Embeddings(m) => m.len(),
            Ranking::Distances(d) => d.len(),
            Ranking::Similarities(s) => (s.len() as f64).sqrt().round() as usize,
        }
    }

    /// Larger is nearer.
    fn score(&self, i: usize, j: usize) -> f64 {
        match self {
            Ranking::Embeddings(m) => dist::dot(m[i].values(), m[j].values()),
            Ranking::Distances(d) => -d.get(i, j),
            Ranking::Similarities(s) => s[i * self.len() + j],
        }
    }
}

/// Mean over queries of the fraction of the `k` nearest others sharing the
/// query's label. Ranking ties go to the lower index; a query never counts itself.
pub fn precision_at_k(ranking: Ranking<'_>, labels: &[Label], ks: &[usize]) -> Result<PrecisionCurve> {
    let n = ranking.len();
    if let Ranking::Similarities(s) = ranking {
        if s.len() != n * n {
            return Err(Error::invalid("similarity matrix must be square"));
        }
    }
    if labels.len() != n {
        return Err(Error::dims(n, labels.len()));
    }
    if ks.is_empty() {
        return Err(Error::invalid("no k values given"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(Error::invalid("k values must be positive and increasing"));
    }
    let kmax = *ks.last().unwrap();
    if kmax >= n {
        return Err(Error::invalid(format!("k = {kmax} must be below n = {n}")));
    }
    let hits: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|q| {
            let scores: Vec<f64> = (0..n).map(|j| ranking.score(q, j)).collect();
            let mut others: Vec<usize> = (0..n).filter(|&j| j != q).collect();
            others.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            let mut cumulative = Vec::with_capacity(kmax);
            let mut count = 0;
            for &j in &others[..kmax] {
                count += usize::from(labels[j] == labels[q]);
                cumulative.push(count);
            }
            cumulative
        })
        .collect();
    let precision = ks
        .iter()
        .map(|&k| hits.iter().map(|h| h[k - 1] as f64 / k as f64).sum::<f64>() / n as f64)
        .collect();
    Ok(PrecisionCurve {
        ks: ks.to_vec(),
        precision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub selection: Selection,
    pub rate: f64,
    pub nmi: f64,
}

/// Downsamples, clusters and scores NMI for every (selection, rate) pair.
/// Rows come out grouped by selection, rates in the order given.
pub fn run_sampling_sweep(
    ds: &TrajectoryDataset,
    rates: &[f64],
    selections: &[Selection],
    params: &TidkcParams,
    rng_seed: u64,
) -> Result<Vec<SweepRow>> {
    let truth = ds
        .labels()
        .ok_or_else(|| Error::MissingLabels("sampling sweep needs labeled trajectories".into()))?;
    let mut rows = Vec::new();
    for &selection in selections {
        for &rate in rates {
            let sampled = downsample(ds, rate, selection, rng_seed)?;
            let result = tidkc::cluster(&sampled, params)?;
            rows.push(SweepRow {
                selection,
                rate,
                nmi: nmi(&truth, &result.labels)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert!((nmi(&[0, 0, 1, 1, 2], &[7, 7, 3, 3, 9]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[1, 1, 1], &[2, 2, 2]).unwrap(), 1.0);
        assert_eq!(nmi(&[1, 1, 1], &[1, 2, 3]).unwrap(), 0.0);
        assert!(nmi(&[1, 2], &[1]).is_err());
        assert!(nmi::<i32, i32>(&[], &[]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[5, 5, 4, 4]).unwrap(), 1.0);
        // Pairs: same-same none, truth pairs {01,23}, pred pairs {02,13}:
        // index 0, expected 2*2/6, max 2 -> (0 - 2/3) / (2 - 2/3) = -0.5.
        assert!((ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap() + 0.5).abs() < 1e-12);
        assert_eq!(ari(&[0, 1, 2], &[5, 6, 7]).unwrap(), 1.0);
        assert!(ari(&[0], &[0]).is_err());
    }

    #[test]
    fn contingency_marginals() {
        let t = ContingencyTable::new(&[0, 0, 1, 2, 2, 2], &["a", "b", "b", "b", "c", "c"]).unwrap();
        assert_eq!(t.row_marginals(), &[2, 1, 3]);
        assert_eq!(t.col_marginals(), &[1, 3, 2]);
        assert_eq!(t.total(), 6);
        assert_eq!(t.counts()[2], vec![0, 1, 2]);
    }

    #[test]
    fn shuffled_ari_is_near_zero() {
        let truth: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pred = truth.clone();
        let mut total = 0.0;
        for _ in 0..1000 {
            pred.shuffle(&mut rng);
            total += ari(&truth, &pred).unwrap();
        }
        assert!((total / 1000.0).abs() < 0.05);
    }

    #[test]
    fn precision_examples() {
        let sim = vec![1.0; 16];
        let curve = precision_at_k(Ranking::Similarities(&sim), &[3, 3, 3, 3], &[1, 2, 3]).unwrap();
        assert_eq!(curve.precision, vec![1.0; 3]);

        // Two classes of 3, zero cross-class similarity.
        let labels = [0, 0, 0, 1, 1, 1];
        let sim: Vec<f64> = (0..36)
            .map(|x| if labels[x / 6] == labels[x % 6] { 0.5 } else { 0.0 })
            .collect();
        let curve = precision_at_k(Ranking::Similarities(&sim), &labels, &[1, 2, 4, 5]).unwrap();
        assert_eq!(curve.precision[..2], [1.0, 1.0]);
        assert!(curve.precision[2] <= 2.0 / 4.0 + 1e-12);
        assert!(curve.precision[3] <= 2.0 / 5.0 + 1e-12);

        assert!(precision_at_k(Ranking::Similarities(&sim), &labels, &[6]).is_err());
        assert!(precision_at_k(Ranking::Similarities(&sim), &labels, &[2, 1]).is_err());
    }

    #[test]
    fn precision_ties_prefer_lower_index() {
        // Query 0 is equidistant to 1 (other label) and 2 (same label): 1 wins.
        let sim = vec![0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let curve = precision_at_k(Ranking::Similarities(&sim), &[0, 1, 0], &[1]).unwrap();
        // Query 0 -> 1 (miss), query 1 -> 0 (miss), query 2 -> 0 (hit).
        assert!((curve.precision[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
