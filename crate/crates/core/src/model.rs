//! Data model shared by every solver: weighted point clouds, codebooks,
//! projection regions, step-size schedules and convergence traces.

use crate::error::{Error, Result};
use crate::scalar::{ordered_sum, Scalar};

/// Optional class labels attached to a [`FeatureSet`]. A point without a
/// label is `None`; there is no sentinel class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    values: Vec<Option<u32>>,
    class_count: u32,
}

impl Labels {
    pub fn new(values: Vec<Option<u32>>, class_count: u32) -> Result<Self> {
        if let Some((i, l)) = values
            .iter()
            .enumerate()
            .find_map(|(i, l)| l.filter(|&l| l >= class_count).map(|l| (i, l)))
        {
            return Err(Error::InvalidFeatureSet(format!(
                "label {l} of point {i} outside [0, {class_count})"
            )));
        }
        Ok(Self {
            values,
            class_count,
        })
    }

    /// Builds labels from fully labeled data; the class count is `max + 1`.
    pub fn from_dense(values: &[u32]) -> Self {
        let class_count = values.iter().max().map_or(0, |&m| m + 1);
        Self {
            values: values.iter().map(|&v| Some(v)).collect(),
            class_count,
        }
    }

    pub fn get(&self, i: usize) -> Option<u32> {
        self.values[i]
    }

    pub fn values(&self) -> &[Option<u32>] {
        &self.values
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn labeled_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Weighted point cloud `{ξ_i}` with probabilities `{p_i}`.
///
/// Points are stored row-major. Weights are strictly positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    points: Vec<T>,
    dim: usize,
    weights: Vec<T>,
    labels: Option<Labels>,
}

fn weight_tolerance<T: Scalar>(count: usize) -> T {
    let eps = T::epsilon() * T::from_usize_lossy(count.max(1)) * T::lit(4.0);
    eps.max(T::lit(1e-9))
}

impl<T: Scalar> FeatureSet<T> {
    /// Points with uniform weights `1/I`.
    pub fn new(points: Vec<T>, dim: usize) -> Result<Self> {
        let count = Self::check_points(&points, dim)?;
        let w = T::one() / T::from_usize_lossy(count);
        Ok(Self {
            points,
            dim,
            weights: vec![w; count],
            labels: None,
        })
    }

    /// Points with explicit weights. Weights must be positive and sum to one
    /// within `1e-9` (or a few ulps per point for `f32`).
    pub fn with_weights(points: Vec<T>, dim: usize, weights: Vec<T>) -> Result<Self> {
        let count = Self::check_points(&points, dim)?;
        if weights.len() != count {
            return Err(Error::DimensionMismatch {
                expected: count,
                found: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > T::zero())) {
            return Err(Error::InvalidFeatureSet(format!(
                "weight {i} is not strictly positive"
            )));
        }
        let total = ordered_sum(weights.iter().copied());
        if (total - T::one()).abs() > weight_tolerance::<T>(count) {
            return Err(Error::InvalidFeatureSet(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            points,
            dim,
            weights,
            labels: None,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(rows.concat(), dim)
    }

    pub fn with_labels(mut self, labels: Labels) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    fn check_points(points: &[T], dim: usize) -> Result<usize> {
        if dim == 0 {
            return Err(Error::InvalidFeatureSet("dimension must be >= 1".into()));
        }
        if points.is_empty() || points.len() % dim != 0 {
            return Err(Error::InvalidFeatureSet(format!(
                "{} coordinates do not form a non-empty set of {dim}-vectors",
                points.len()
            )));
        }
        if let Some(j) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidFeatureSet(format!(
                "non-finite coordinate in point {}",
                j / dim
            )));
        }
        Ok(points.len() / dim)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn label(&self, i: usize) -> Option<u32> {
        self.labels.as_ref().and_then(|l| l.get(i))
    }

    /// Component-wise `(min, max)` over all points.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for row in self.rows() {
            for ((l, h), &x) in lo.iter_mut().zip(hi.iter_mut()).zip(row) {
                *l = l.min(x);
                *h = h.max(x);
            }
        }
        (lo, hi)
    }

    /// Weighted mean `Σ p_i ξ_i`.
    pub fn weighted_mean(&self) -> Vec<T> {
        let mut mean = vec![T::zero(); self.dim];
        for (row, &w) in self.rows().zip(&self.weights) {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += w * x;
            }
        }
        mean
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> FeatureSet<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        FeatureSet {
            points: conv(&self.points),
            dim: self.dim,
            weights: conv(&self.weights),
            labels: self.labels.clone(),
        }
    }
}

/// The `K` centers `{y_k}` together with the rank `r` and norm order `p` of
/// the objective they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    centers: Vec<T>,
    dim: usize,
    rank: T,
    norm_order: T,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(centers: Vec<T>, dim: usize, rank: T, norm_order: T) -> Result<Self> {
        if dim == 0 || centers.is_empty() || centers.len() % dim != 0 {
            return Err(Error::InvalidCodebook(format!(
                "{} coordinates do not form K >= 1 centers of dimension {dim}",
                centers.len()
            )));
        }
        if centers.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCodebook("non-finite coordinate".into()));
        }
        if !(rank >= T::one()) {
            return Err(Error::InvalidCodebook(format!("rank {rank} < 1")));
        }
        if !(norm_order >= T::one()) {
            return Err(Error::InvalidCodebook(format!("norm order {norm_order} < 1")));
        }
        Ok(Self {
            centers,
            dim,
            rank,
            norm_order,
        })
    }

    /// Euclidean codebook with the K-Means objective (`r = 2`, `p = 2`).
    pub fn euclidean(centers: Vec<T>, dim: usize) -> Result<Self> {
        Self::new(centers, dim, T::lit(2.0), T::lit(2.0))
    }

    pub fn from_rows(rows: &[Vec<T>], rank: T, norm_order: T) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidCodebook("ragged rows".into()));
        }
        Self::new(rows.concat(), dim, rank, norm_order)
    }

    pub fn len(&self) -> usize {
        self.centers.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> T {
        self.rank
    }

    pub fn norm_order(&self) -> T {
        self.norm_order
    }

    pub fn center(&self, k: usize) -> &[T] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    pub fn center_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.centers[k * self.dim..(k + 1) * self.dim]
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.centers.chunks_exact(self.dim)
    }

    pub fn with_rank(mut self, rank: T) -> Result<Self> {
        if !(rank >= T::one()) {
            return Err(Error::InvalidCodebook(format!("rank {rank} < 1")));
        }
        self.rank = rank;
        Ok(self)
    }

    /// Appends a center; used by seeding routines and the monotonicity checks.
    pub fn push(&mut self, center: &[T]) -> Result<()> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: center.len(),
            });
        }
        self.centers.extend_from_slice(center);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.centers.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Codebook<U> {
        Codebook {
            centers: self.centers.iter().map(|x| U::lit(x.as_f64())).collect(),
            dim: self.dim,
            rank: U::lit(self.rank.as_f64()),
            norm_order: U::lit(self.norm_order.as_f64()),
        }
    }
}

/// Convex compact set `Y` the centers are projected onto.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionRegion<T> {
    Unbounded,
    Box { lower: Vec<T>, upper: Vec<T> },
}

impl<T: Scalar> ProjectionRegion<T> {
    pub fn new_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidRegion("empty box".into()));
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(Error::InvalidRegion(format!(
                    "coordinate {j}: lower {l} > upper {u} or not finite"
                )));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    /// Bounding box of the data, each side widened by `margin · width`
    /// (`margin ≥ 0`). Every global optimum lies in the convex hull of the
    /// data, so the unmargined box already contains it.
    pub fn data_box(data: &FeatureSet<T>, margin: T) -> Result<Self> {
        if !(margin >= T::zero()) {
            return Err(Error::InvalidRegion(format!("negative margin {margin}")));
        }
        let (mut lo, mut hi) = data.bounding_box();
        for (l, h) in lo.iter_mut().zip(hi.iter_mut()) {
            let pad = (*h - *l) * margin;
            *l -= pad;
            *h += pad;
        }
        Self::new_box(lo, hi)
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Self::Box { .. })
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Unbounded => None,
            Self::Box { lower, .. } => Some(lower.len()),
        }
    }

    pub fn contains(&self, point: &[T]) -> bool {
        match self {
            Self::Unbounded => true,
            Self::Box { lower, upper } => point
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (l, u))| l <= x && x <= u),
        }
    }

    /// In-place Euclidean projection.
    pub fn project_in_place(&self, point: &mut [T]) {
        if let Self::Box { lower, upper } = self {
            for (x, (&l, &u)) in point.iter_mut().zip(lower.iter().zip(upper)) {
                *x = x.max(l).min(u);
            }
        }
    }
}

/// Euclidean projection `Π_Y(point)`; for a box this is a component-wise clamp.
pub fn project<T: Scalar>(point: &[T], region: &ProjectionRegion<T>) -> Vec<T> {
    let mut out = point.to_vec();
    region.project_in_place(&mut out);
    out
}

/// Step-size sequence `ρ_t`, `t = 0, 1, …`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearningSchedule<T> {
    Constant { base_rate: T },
    /// `ρ_t = ρ_0 / (1 + t)^γ`.
    PolynomialDecay { base_rate: T, decay_exponent: T },
}

impl<T: Scalar> LearningSchedule<T> {
    pub fn constant(base_rate: T) -> Self {
        Self::Constant { base_rate }
    }

    pub fn polynomial(base_rate: T, decay_exponent: T) -> Self {
        Self::PolynomialDecay {
            base_rate,
            decay_exponent,
        }
    }

    pub fn base_rate(&self) -> T {
        match *self {
            Self::Constant { base_rate } | Self::PolynomialDecay { base_rate, .. } => base_rate,
        }
    }

    pub fn rate(&self, t: u64) -> T {
        match *self {
            Self::Constant { base_rate } => base_rate,
            Self::PolynomialDecay {
                base_rate,
                decay_exponent,
            } => base_rate / (T::one() + T::lit(t as f64)).powf(decay_exponent),
        }
    }
}

/// Which step-size condition fails for a schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleViolation {
    /// `Σ ρ_t < ∞`: the steps die out before reaching a stationary point.
    SumConverges,
    /// `Σ ρ_t² = ∞`: noise is never averaged out.
    SquareSumDiverges,
}

impl std::fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SumConverges => "Σρ_t converges",
            Self::SquareSumDiverges => "Σρ_t² diverges",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleReport {
    /// `ρ_t > 0`, `Σ ρ_t = ∞`, `Σ ρ_t² < ∞`: the stochastic method's conditions.
    pub theorem1_compliant: bool,
    /// `ρ_t → 0`, `Σ ρ_t = ∞`: the weaker full-batch gradient conditions.
    pub batch_compliant: bool,
    pub reason: Option<ScheduleViolation>,
}

/// Classifies a schedule analytically against the step-size conditions.
pub fn validate_schedule<T: Scalar>(schedule: &LearningSchedule<T>) -> Result<ScheduleReport> {
    let base = schedule.base_rate();
    if !(base.is_finite() && base > T::zero()) {
        return Err(Error::InvalidSchedule(format!(
            "base rate {base} must be positive"
        )));
    }
    Ok(match *schedule {
        LearningSchedule::Constant { .. } => ScheduleReport {
            theorem1_compliant: false,
            batch_compliant: false,
            reason: Some(ScheduleViolation::SquareSumDiverges),
        },
        LearningSchedule::PolynomialDecay { decay_exponent, .. } => {
            if !decay_exponent.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "decay exponent {decay_exponent} is not finite"
                )));
            }
            let half = T::lit(0.5);
            if decay_exponent > T::one() {
                ScheduleReport {
                    theorem1_compliant: false,
                    batch_compliant: false,
                    reason: Some(ScheduleViolation::SumConverges),
                }
            } else if decay_exponent <= half {
                ScheduleReport {
                    theorem1_compliant: false,
                    batch_compliant: decay_exponent > T::zero(),
                    reason: Some(ScheduleViolation::SquareSumDiverges),
                }
            } else {
                ScheduleReport {
                    theorem1_compliant: true,
                    batch_compliant: true,
                    reason: None,
                }
            }
        }
    })
}

/// One sampled point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<T> {
    /// Number of updates applied so far.
    pub iteration: u64,
    pub objective: T,
    pub step_size: T,
    /// Centers changed by the most recent update.
    pub updated: Vec<usize>,
}

/// Objective samples taken every `eval_stride` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace<T> {
    pub eval_stride: u64,
    records: Vec<TraceRecord<T>>,
}

impl<T: Scalar> ConvergenceTrace<T> {
    pub fn new(eval_stride: u64) -> Self {
        Self {
            eval_stride,
            records: Vec::new(),
        }
    }

    /// Appends a record; iterations must increase strictly and the objective
    /// must be finite.
    pub fn push(&mut self, record: TraceRecord<T>) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.iteration <= last.iteration {
                return Err(Error::InvalidConfig(format!(
                    "trace iteration {} not after {}",
                    record.iteration, last.iteration
                )));
            }
        }
        if !record.objective.is_finite() {
            return Err(Error::InvalidConfig("non-finite objective in trace".into()));
        }
        self.records.push(record);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, record: TraceRecord<T>) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord<T>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_objective(&self) -> Option<T> {
        self.records.first().map(|r| r.objective)
    }

    pub fn last_objective(&self) -> Option<T> {
        self.records.last().map(|r| r.objective)
    }

    pub fn to_f64(&self) -> ConvergenceTrace<f64> {
        ConvergenceTrace {
            eval_stride: self.eval_stride,
            records: self
                .records
                .iter()
                .map(|r| TraceRecord {
                    iteration: r.iteration,
                    objective: r.objective.as_f64(),
                    step_size: r.step_size.as_f64(),
                    updated: r.updated.clone(),
                })
                .collect(),
        }
    }
}
