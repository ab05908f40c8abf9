//! Deterministic synthetic fixtures: diagonal Gaussian mixtures, uniform
//! cubes and an outlier-contaminated cluster.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{FeatureSet, Labels};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Per-coordinate standard deviation; zero places every draw at the mean.
    pub scale: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
    pub samples: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// Equal-weight components with isotropic scale `sigma`.
    pub fn isotropic(means: &[Vec<f64>], sigma: f64, samples: usize, seed: u64) -> Self {
        let w = 1.0 / means.len() as f64;
        Self {
            components: means
                .iter()
                .map(|m| Component {
                    mean: m.clone(),
                    scale: vec![sigma; m.len()],
                    weight: w,
                })
                .collect(),
            samples,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.components.is_empty() || dim == 0 || self.samples == 0 {
            return Err(Error::InvalidConfig(
                "mixture needs components, a positive dimension and samples".into(),
            ));
        }
        for (j, c) in self.components.iter().enumerate() {
            if c.mean.len() != dim || c.scale.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: if c.mean.len() != dim { c.mean.len() } else { c.scale.len() },
                });
            }
            if !c.mean.iter().all(|m| m.is_finite()) {
                return Err(Error::InvalidConfig(format!("component {j} has a non-finite mean")));
            }
            if !c.scale.iter().all(|s| s.is_finite() && *s >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "component {j} needs finite non-negative scales"
                )));
            }
            if !(c.weight > 0.0) {
                return Err(Error::InvalidConfig(format!("component {j} weight must be > 0")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }
}

/// Draws `samples` points; each point's label is the id of the component
/// that generated it.
pub fn generate(spec: &MixtureSpec) -> Result<FeatureSet<f64>> {
    spec.validate()?;
    let mut rng = seeded(spec.seed);
    let weights: Vec<f64> = spec.components.iter().map(|c| c.weight).collect();
    let pick = WeightedIndex::new(&weights)
        .map_err(|e| Error::InvalidConfig(format!("mixture weights: {e}")))?;
    let dim = spec.dim();
    let mut points = Vec::with_capacity(spec.samples * dim);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let j = pick.sample(&mut rng);
        let c = &spec.components[j];
        for (m, s) in c.mean.iter().zip(&c.scale) {
            let z: f64 = StandardNormal.sample(&mut rng);
            points.push(m + s * z);
        }
        labels.push(Some(j as u32));
    }
    FeatureSet::new(points, dim)?.with_labels(Labels::new(labels, spec.components.len() as u32)?)
}

/// `samples` iid points uniform on `[0, 1]^dim`.
pub fn uniform_cube(dim: usize, samples: usize, seed: u64) -> Result<FeatureSet<f64>> {
    let mut rng = seeded(seed);
    FeatureSet::new((0..dim * samples).map(|_| rng.random::<f64>()).collect(), dim)
}

/// `inliers` Gaussian points around `center` with scale `sigma`, followed
/// by a single point at `outlier`. Labels: 0 for inliers, 1 for the outlier.
pub fn outlier_fixture(
    center: &[f64],
    sigma: f64,
    inliers: usize,
    outlier: &[f64],
    seed: u64,
) -> Result<FeatureSet<f64>> {
    if center.len() != outlier.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            found: outlier.len(),
        });
    }
    let mut rng = seeded(seed);
    let mut points = Vec::with_capacity((inliers + 1) * center.len());
    for _ in 0..inliers {
        for &m in center {
            let z: f64 = StandardNormal.sample(&mut rng);
            points.push(m + sigma * z);
        }
    }
    points.extend_from_slice(outlier);
    let mut labels = vec![0; inliers];
    labels.push(1);
    FeatureSet::new(points, center.len())?.with_labels(Labels::from_dense(&labels))
}
