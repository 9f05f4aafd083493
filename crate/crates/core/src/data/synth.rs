//! Labeled synthetic trajectory datasets.
//!
//! Each cluster is a polyline backbone. A trajectory is the backbone resampled
//! at a random number of points, evenly spaced by arc length, with Gaussian
//! jitter on every coordinate. A *direction pair* template emits the backbone
//! twice under two labels: once as drawn and once traversed in reverse.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Label, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTemplate {
    pub backbone: Vec<Vec<f64>>,
    #[serde(default)]
    pub direction_pair: bool,
    /// Overrides [`SyntheticSpec::per_cluster`] for this template.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub per_cluster: usize,
    /// Standard deviation of the per-coordinate jitter.
    pub noise: f64,
    pub length_min: usize,
    pub length_max: usize,
    #[serde(rename = "template")]
    pub templates: Vec<ClusterTemplate>,
}

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SyntheticSpec =
            toml::from_str(text).map_err(|e| Error::invalid(format!("synthetic spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// `k` bent polylines laid side by side, far apart relative to their extent.
    pub fn separated_lines(k: usize, per_cluster: usize, noise: f64) -> Self {
        let templates = (0..k)
            .map(|c| {
                let x0 = 3.0 * c as f64;
                let bend = if c % 2 == 0 { 0.4 } else { -0.4 };
                ClusterTemplate {
                    backbone: vec![vec![x0, 0.0], vec![x0 + 0.5 + bend, 1.0], vec![x0 + 1.0, 2.0]],
                    direction_pair: false,
                    count: None,
                }
            })
            .collect();
        SyntheticSpec {
            per_cluster,
            noise,
            length_min: 20,
            length_max: 40,
            templates,
        }
    }

    /// Direction-sensitive analog of a road scene: `backbones` distinct routes,
    /// each travelled in both directions, giving `2 * backbones` labels.
    pub fn direction_pairs(backbones: usize, per_cluster: usize, noise: f64) -> Self {
        let templates = (0..backbones)
            .map(|c| {
                let y0 = 3.0 * c as f64;
                ClusterTemplate {
                    backbone: vec![
                        vec![0.0, y0],
                        vec![1.0, y0 + 1.0],
                        vec![2.0, y0 + 0.5],
                        vec![3.0, y0 + 1.5],
                    ],
                    direction_pair: true,
                    count: None,
                }
            })
            .collect();
        SyntheticSpec {
            per_cluster,
            noise,
            length_min: 30,
            length_max: 50,
            templates,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.templates.is_empty() {
            return Err(Error::invalid("synthetic spec has zero clusters"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid(format!("noise {} must be >= 0", self.noise)));
        }
        if self.length_min == 0 || self.length_min > self.length_max {
            return Err(Error::invalid(format!(
                "length range [{}, {}] is invalid",
                self.length_min, self.length_max
            )));
        }
        let dims = self.templates[0].backbone.first().map_or(0, Vec::len);
        if dims == 0 {
            return Err(Error::invalid("backbone must have at least one point"));
        }
        for t in &self.templates {
            if t.backbone.is_empty() || t.backbone.iter().any(|p| p.len() != dims) {
                return Err(Error::invalid("backbones must be non-empty and share dimensionality"));
            }
            if t.backbone.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::invalid("backbone coordinates must be finite"));
            }
            if t.count.unwrap_or(self.per_cluster) == 0 {
                return Err(Error::invalid("clusters need at least one trajectory"));
            }
        }
        Ok(())
    }

    /// Total number of distinct labels the spec generates.
    pub fn label_count(&self) -> usize {
        self.templates
            .iter()
            .map(|t| if t.direction_pair { 2 } else { 1 })
            .sum()
    }
}

/// Point at arc-length fraction `s` along a polyline.
fn along(backbone: &[Vec<f64>], cumulative: &[f64], s: f64) -> Vec<f64> {
    let total = *cumulative.last().unwrap();
    if backbone.len() == 1 || total == 0.0 {
        return backbone[0].clone();
    }
    let target = s * total;
    let seg = cumulative
        .windows(2)
        .position(|w| target <= w[1])
        .unwrap_or(backbone.len() - 2);
    let len = cumulative[seg + 1] - cumulative[seg];
    let f = if len > 0.0 {
        ((target - cumulative[seg]) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    backbone[seg]
        .iter()
        .zip(&backbone[seg + 1])
        .map(|(a, b)| a + f * (b - a))
        .collect()
}

fn resample(backbone: &[Vec<f64>], len: usize) -> Vec<Vec<f64>> {
    let mut cumulative = vec![0.0];
    for w in backbone.windows(2) {
        let seg: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        cumulative.push(cumulative.last().unwrap() + seg);
    }
    let denom = (len.max(2) - 1) as f64;
    (0..len)
        .map(|i| along(backbone, &cumulative, i as f64 / denom))
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng_seed: u64) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut trajectories = Vec::new();
    let mut label: Label = 0;
    for template in &spec.templates {
        let count = template.count.unwrap_or(spec.per_cluster);
        let directions: &[bool] = if template.direction_pair {
            &[false, true]
        } else {
            &[false]
        };
        for &reversed in directions {
            for j in 0..count {
                let len = rng.random_range(spec.length_min..=spec.length_max);
                let mut pts = resample(&template.backbone, len);
                if reversed {
                    pts.reverse();
                }
                if spec.noise > 0.0 {
                    for c in pts.iter_mut().flatten() {
                        *c += noise.sample(&mut rng);
                    }
                }
                trajectories.push(Trajectory::from_points(
                    format!("c{label}_{j}"),
                    Some(label),
                    &pts,
                )?);
            }
            label += 1;
        }
    }
    TrajectoryDataset::new(trajectories)
}
