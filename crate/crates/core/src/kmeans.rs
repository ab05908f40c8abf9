//! K-Means family baselines: Lloyd iteration, K-Means++ seeding,
//! mini-batch K-Means, full-batch generalized gradient descent, stochastic
//! K-Means, and group-size weighted trajectory averaging.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gradients::gradient_from_groups;
use crate::model::{
    validate_schedule, Codebook, ConvergenceTrace, FeatureSet, LearningSchedule,
    ProjectionRegion, TraceRecord,
};
use crate::objective::{nearest_index, objective_unchecked, partition_unchecked, squared_euclidean};
use crate::optim::Variant;
use crate::rng::{seeded, seeded_stream, SqRng};
use crate::scalar::Scalar;
use crate::sq::{
    diverged, run_sq, sample_distinct_points, Averaging, CesaroAverager, InitMode, SamplingMode,
    SqConfig, SqRun, DIVERGENCE_FACTOR,
};

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Seeding<T> {
    /// `K` distinct data points drawn uniformly.
    UniformRandom,
    #[default]
    KMeansPlusPlus,
    /// Row-major `K × n` positions.
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyClusterPolicy {
    /// Centers with no assigned points stay where they are.
    #[default]
    Keep,
    /// Centers with no assigned points jump to the worst-served point.
    ReseedFarthest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KMeansAveraging {
    #[default]
    None,
    /// Step-size weighted average (gradient paths only).
    Cesaro,
    /// Per-center average weighted by `1 / N_k`.
    GroupSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig<T> {
    pub k: usize,
    /// Epochs for Lloyd and the full-batch gradient path; iterations for the
    /// mini-batch and stochastic paths.
    pub max_iter: u64,
    /// Stop once no center moves farther than this.
    pub tolerance: T,
    pub seeding: Seeding<T>,
    pub empty_policy: EmptyClusterPolicy,
    /// Rank `r` of the gradient paths. Lloyd and mini-batch always use `r = 2`.
    pub rank: T,
    pub schedule: LearningSchedule<T>,
    /// Gradient path: multiply `ρ_t` by `I / N_k^t` for each center.
    pub scale_by_group_size: bool,
    pub batch_size: usize,
    pub seed: u64,
    pub region: ProjectionRegion<T>,
    pub sampling: SamplingMode,
    pub averaging: KMeansAveraging,
    pub eval_stride: Option<u64>,
}

impl<T: Scalar> KMeansConfig<T> {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            max_iter: 300,
            tolerance: T::lit(1e-6),
            seeding: Seeding::default(),
            empty_policy: EmptyClusterPolicy::default(),
            rank: T::lit(2.0),
            schedule: LearningSchedule::polynomial(T::lit(0.5), T::lit(0.75)),
            scale_by_group_size: false,
            batch_size: 32,
            seed: 0,
            region: ProjectionRegion::Unbounded,
            sampling: SamplingMode::default(),
            averaging: KMeansAveraging::default(),
            eval_stride: None,
        }
    }

    fn validate(&self, data: &FeatureSet<T>) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        if !(self.tolerance >= T::zero()) {
            return Err(Error::InvalidConfig("tolerance must be >= 0".into()));
        }
        if !(self.rank >= T::one()) {
            return Err(Error::InvalidConfig(format!("rank {} < 1", self.rank)));
        }
        if let Some(d) = self.region.dim() {
            if d != data.dim() {
                return Err(Error::DimensionMismatch {
                    expected: data.dim(),
                    found: d,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun<T> {
    pub codebook: Codebook<T>,
    pub trace: ConvergenceTrace<T>,
    /// Epochs or iterations actually performed.
    pub iterations: u64,
    /// Whether the movement tolerance stopped the run.
    pub converged: bool,
}

/// K-Means++ seeding with a fresh generator for `seed`.
pub fn seed_kmeanspp<T: Scalar>(data: &FeatureSet<T>, k: usize, seed: u64) -> Result<Codebook<T>> {
    kmeanspp_with_rng(data, k, &mut seeded(seed))
}

/// First center uniform over the data; each further center drawn with
/// probability proportional to the squared Euclidean distance to the nearest
/// chosen center. If every point coincides with a chosen center the
/// remaining draws are uniform.
pub fn kmeanspp_with_rng<T: Scalar>(
    data: &FeatureSet<T>,
    k: usize,
    rng: &mut SqRng,
) -> Result<Codebook<T>> {
    if k == 0 || k > data.len() {
        return Err(Error::InvalidConfig(format!(
            "K = {k} must be in [1, I = {}]",
            data.len()
        )));
    }
    let first = rng.random_range(0..data.len());
    let mut centers = data.point(first).to_vec();
    let mut nearest_sq: Vec<T> = data
        .rows()
        .map(|x| squared_euclidean(x, data.point(first)))
        .collect();
    for _ in 1..k {
        let probs = seeding_probabilities(&nearest_sq);
        let pick = match probs {
            Some(p) => WeightedIndex::new(&p)
                .map_err(|e| Error::InvalidFeatureSet(format!("seeding weights: {e}")))?
                .sample(rng),
            None => rng.random_range(0..data.len()),
        };
        let chosen = data.point(pick);
        centers.extend_from_slice(chosen);
        for (d, x) in nearest_sq.iter_mut().zip(data.rows()) {
            *d = d.min(squared_euclidean(x, chosen));
        }
    }
    Codebook::euclidean(centers, data.dim())
}

/// `q_j = D_j² / Σ_i D_i²`, or `None` when every `D_j` is zero.
pub fn seeding_probabilities<T: Scalar>(nearest_sq: &[T]) -> Option<Vec<f64>> {
    let total: f64 = nearest_sq.iter().map(|d| d.as_f64()).sum();
    if !(total > 0.0) {
        return None;
    }
    Some(nearest_sq.iter().map(|d| d.as_f64() / total).collect())
}

fn seed_codebook<T: Scalar>(
    data: &FeatureSet<T>,
    config: &KMeansConfig<T>,
    rank: T,
    rng: &mut SqRng,
) -> Result<Codebook<T>> {
    let centers = match &config.seeding {
        Seeding::Explicit(v) => {
            if v.len() != config.k * data.dim() {
                return Err(Error::InvalidConfig(format!(
                    "explicit seeding has {} coordinates, expected {}",
                    v.len(),
                    config.k * data.dim()
                )));
            }
            v.clone()
        }
        Seeding::UniformRandom => sample_distinct_points(data, config.k, rng)?,
        Seeding::KMeansPlusPlus => kmeanspp_with_rng(data, config.k, rng)?.centers().to_vec(),
    };
    Codebook::new(centers, data.dim(), rank, T::lit(2.0))
}

/// One Lloyd step.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydStep<T> {
    pub codebook: Codebook<T>,
    /// Groups `I_k` of the input codebook.
    pub groups: Vec<Vec<usize>>,
    /// Largest Euclidean displacement of any center.
    pub moved: T,
}

/// Partitions the data by nearest center and moves each non-empty group's
/// center to the group's weighted mean (the plain mean for uniform weights).
pub fn lloyd_iterate<T: Scalar>(
    data: &FeatureSet<T>,
    codebook: &Codebook<T>,
    policy: EmptyClusterPolicy,
) -> Result<LloydStep<T>> {
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: data.dim(),
        });
    }
    let groups = partition_unchecked(data, codebook);
    let mut next = codebook.clone();
    let dim = data.dim();
    for (k, group) in groups.iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let mut mean = vec![T::zero(); dim];
        let mut mass = T::zero();
        for &i in group {
            let w = data.weight(i);
            mass += w;
            for (m, &x) in mean.iter_mut().zip(data.point(i)) {
                *m += w * x;
            }
        }
        for (c, m) in next.center_mut(k).iter_mut().zip(mean) {
            *c = m / mass;
        }
    }
    if policy == EmptyClusterPolicy::ReseedFarthest && groups.iter().any(Vec::is_empty) {
        let mut dist: Vec<(usize, T)> = groups
            .iter()
            .enumerate()
            .flat_map(|(k, g)| {
                g.iter()
                    .map(move |&i| (i, squared_euclidean(data.point(i), codebook.center(k))))
            })
            .collect();
        // farthest first, lower index on ties
        dist.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
        let mut donors = dist.into_iter().map(|(i, _)| i);
        for (k, group) in groups.iter().enumerate() {
            if group.is_empty() {
                if let Some(i) = donors.next() {
                    next.center_mut(k).copy_from_slice(data.point(i));
                }
            }
        }
    }
    let moved = max_displacement(codebook, &next);
    Ok(LloydStep {
        codebook: next,
        groups,
        moved,
    })
}

fn max_displacement<T: Scalar>(a: &Codebook<T>, b: &Codebook<T>) -> T {
    a.rows()
        .zip(b.rows())
        .map(|(x, y)| squared_euclidean(x, y).sqrt())
        .fold(T::zero(), T::max)
}

fn non_empty(groups: &[Vec<usize>]) -> Vec<usize> {
    groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(k, _)| k)
        .collect()
}

/// Per-center running average with weights `1 / N_k^s`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSizeAverager<T> {
    mean: Vec<T>,
    inverse_sum: Vec<T>,
    dim: usize,
}

impl<T: Scalar> GroupSizeAverager<T> {
    /// Starts from `initial`; a center keeps its initial position until its
    /// first iterate with a non-empty group.
    pub fn new(initial: &Codebook<T>) -> Self {
        Self {
            mean: initial.centers().to_vec(),
            inverse_sum: vec![T::zero(); initial.len()],
            dim: initial.dim(),
        }
    }

    /// Folds in an iterate whose center `k` was produced from `counts[k]`
    /// points. Centers with a zero count are skipped.
    pub fn push(&mut self, iterate: &Codebook<T>, counts: &[usize]) {
        for (k, &n) in counts.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let inv = T::one() / T::from_usize_lossy(n);
            self.inverse_sum[k] += inv;
            let sigma = inv / self.inverse_sum[k];
            let row = &mut self.mean[k * self.dim..(k + 1) * self.dim];
            for (m, &y) in row.iter_mut().zip(iterate.center(k)) {
                *m = (T::one() - sigma) * *m + sigma * y;
            }
        }
    }

    pub fn codebook(&self, like: &Codebook<T>) -> Result<Codebook<T>> {
        Codebook::new(self.mean.clone(), self.dim, like.rank(), like.norm_order())
    }
}

/// Group-size weighted average of a stored trajectory.
pub fn nk_weighted_average<T: Scalar>(
    iterates: &[Codebook<T>],
    counts: &[Vec<usize>],
) -> Result<Codebook<T>> {
    let first = iterates
        .first()
        .ok_or_else(|| Error::InvalidConfig("no iterates to average".into()))?;
    if counts.len() != iterates.len() {
        return Err(Error::DimensionMismatch {
            expected: iterates.len(),
            found: counts.len(),
        });
    }
    let mut avg = GroupSizeAverager::new(first);
    for (cb, n) in iterates.iter().zip(counts) {
        avg.push(cb, n);
    }
    avg.codebook(first)
}

/// Lloyd's algorithm until the largest center movement is within tolerance.
pub fn run_lloyd<T: Scalar>(data: &FeatureSet<T>, config: &KMeansConfig<T>) -> Result<KMeansRun<T>> {
    config.validate(data)?;
    let mut rng = seeded(config.seed);
    let codebook = seed_codebook(data, config, T::lit(2.0), &mut rng)?;
    run_lloyd_from(data, config, codebook)
}

fn run_lloyd_from<T: Scalar>(
    data: &FeatureSet<T>,
    config: &KMeansConfig<T>,
    mut codebook: Codebook<T>,
) -> Result<KMeansRun<T>> {
    let mut trace = ConvergenceTrace::new(1);
    trace.push_unchecked(TraceRecord {
        iteration: 0,
        objective: objective_unchecked(data, &codebook),
        step_size: T::zero(),
        updated: Vec::new(),
    });
    let mut averager = (config.averaging == KMeansAveraging::GroupSize)
        .then(|| GroupSizeAverager::new(&codebook));
    let mut converged = false;
    let mut epochs = 0;
    while epochs < config.max_iter {
        let step = lloyd_iterate(data, &codebook, config.empty_policy)?;
        epochs += 1;
        codebook = step.codebook;
        if let Some(avg) = averager.as_mut() {
            let counts: Vec<usize> = step.groups.iter().map(Vec::len).collect();
            avg.push(&codebook, &counts);
        }
        trace.push_unchecked(TraceRecord {
            iteration: epochs,
            objective: objective_unchecked(data, &codebook),
            step_size: step.moved,
            updated: non_empty(&step.groups),
        });
        if step.moved <= config.tolerance {
            converged = true;
            break;
        }
    }
    if let Some(avg) = averager {
        codebook = avg.codebook(&codebook)?;
    }
    Ok(KMeansRun {
        codebook,
        trace,
        iterations: epochs,
        converged,
    })
}

/// Mini-batch K-Means. Each iteration draws `m` distinct points uniformly,
/// assigns them to the current centers, and moves every touched center
/// toward its batch-group mean with rate `b_k / v_k`, where `b_k` is the
/// center's share of the batch and `v_k` its cumulative count. This equals
/// applying per-point updates with rate `1 / v_k` one at a time.
pub fn run_minibatch<T: Scalar>(data: &FeatureSet<T>, config: &KMeansConfig<T>) -> Result<KMeansRun<T>> {
    config.validate(data)?;
    let m = config.batch_size;
    if m == 0 || m >= data.len() {
        return Err(Error::InvalidConfig(format!(
            "batch size {m} must be in [1, I = {})",
            data.len()
        )));
    }
    let mut rng = seeded(config.seed);
    let mut codebook = seed_codebook(data, config, T::lit(2.0), &mut rng)?;
    let dim = data.dim();
    let k_count = codebook.len();
    let stride = config
        .eval_stride
        .unwrap_or(data.len().div_ceil(m) as u64)
        .max(1);
    let mut trace = ConvergenceTrace::new(stride);
    trace.push_unchecked(TraceRecord {
        iteration: 0,
        objective: objective_unchecked(data, &codebook),
        step_size: T::zero(),
        updated: Vec::new(),
    });
    let mut seen = vec![0usize; k_count];
    let mut sums = vec![T::zero(); k_count * dim];
    let mut batch_counts = vec![0usize; k_count];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        sums.iter_mut().for_each(|s| *s = T::zero());
        batch_counts.iter_mut().for_each(|c| *c = 0);
        for i in rand::seq::index::sample(&mut rng, data.len(), m) {
            let x = data.point(i);
            let (k, _) = nearest_index(x, &codebook);
            batch_counts[k] += 1;
            for (s, &v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let before = codebook.clone();
        for k in 0..k_count {
            let b = batch_counts[k];
            if b == 0 {
                continue;
            }
            seen[k] += b;
            let eta = T::from_usize_lossy(b) / T::from_usize_lossy(seen[k]);
            let inv_b = T::one() / T::from_usize_lossy(b);
            for (c, &s) in codebook.center_mut(k).iter_mut().zip(&sums[k * dim..(k + 1) * dim]) {
                *c = (T::one() - eta) * *c + eta * (s * inv_b);
            }
        }
        iterations += 1;
        let moved = max_displacement(&before, &codebook);
        let stop = moved <= config.tolerance;
        if iterations % stride == 0 || iterations == config.max_iter || stop {
            trace.push_unchecked(TraceRecord {
                iteration: iterations,
                objective: objective_unchecked(data, &codebook),
                step_size: moved,
                updated: (0..k_count).filter(|&k| batch_counts[k] > 0).collect(),
            });
        }
        if stop {
            converged = true;
            break;
        }
    }
    Ok(KMeansRun {
        codebook,
        trace,
        iterations,
        converged,
    })
}

/// Full-batch generalized gradient descent on `F` for any `r ≥ 1`:
/// `y_k ← Π_Y(y_k − ρ_{t,k} g_k(y))`, empty groups untouched, with
/// `ρ_{t,k} = ρ_t` or `ρ_t · I / N_k^t`. The schedule must satisfy
/// `ρ_t → 0` and `Σ ρ_t = ∞`.
pub fn run_generalized_gradient<T: Scalar>(
    data: &FeatureSet<T>,
    config: &KMeansConfig<T>,
) -> Result<KMeansRun<T>> {
    config.validate(data)?;
    let report = validate_schedule(&config.schedule)?;
    if !report.batch_compliant {
        return Err(Error::InvalidSchedule(format!(
            "gradient method needs ρ_t → 0 and Σρ_t = ∞ ({})",
            report.reason.map(|r| r.to_string()).unwrap_or_default()
        )));
    }
    let mut rng = seeded(config.seed);
    let mut codebook = seed_codebook(data, config, config.rank, &mut rng)?;
    for row in codebook.centers().to_vec().chunks_exact(data.dim()).enumerate() {
        let mut p = row.1.to_vec();
        config.region.project_in_place(&mut p);
        codebook.center_mut(row.0).copy_from_slice(&p);
    }
    let dim = data.dim();
    let total = T::from_usize_lossy(data.len());
    let mut trace = ConvergenceTrace::new(1);
    let initial = objective_unchecked(data, &codebook);
    trace.push_unchecked(TraceRecord {
        iteration: 0,
        objective: initial,
        step_size: T::zero(),
        updated: Vec::new(),
    });
    let limit = T::lit(DIVERGENCE_FACTOR) * initial;
    let mut cesaro = (config.averaging == KMeansAveraging::Cesaro)
        .then(|| CesaroAverager::new(codebook.centers().len()));
    let mut by_size = (config.averaging == KMeansAveraging::GroupSize)
        .then(|| GroupSizeAverager::new(&codebook));
    let mut converged = false;
    let mut epochs = 0;
    while epochs < config.max_iter {
        let groups = partition_unchecked(data, &codebook);
        let grad = gradient_from_groups(data, &codebook, &groups);
        let rate = config.schedule.rate(epochs);
        let before = codebook.clone();
        let mut last_rate = rate;
        for (k, group) in groups.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let rho = if config.scale_by_group_size {
                rate * total / T::from_usize_lossy(group.len())
            } else {
                rate
            };
            last_rate = rho;
            let center = codebook.center_mut(k);
            for (y, &g) in center.iter_mut().zip(&grad[k * dim..(k + 1) * dim]) {
                *y -= rho * g;
            }
            config.region.project_in_place(center);
        }
        epochs += 1;
        if !codebook.is_finite() {
            return Err(diverged(epochs, "center became non-finite".into(), &trace));
        }
        let f = objective_unchecked(data, &codebook);
        if !f.is_finite() || (initial > T::zero() && f > limit) {
            return Err(diverged(epochs, format!("objective reached {f}"), &trace));
        }
        if let Some(avg) = cesaro.as_mut() {
            avg.push(codebook.centers(), config.schedule.rate(epochs));
        }
        if let Some(avg) = by_size.as_mut() {
            let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
            avg.push(&codebook, &counts);
        }
        trace.push_unchecked(TraceRecord {
            iteration: epochs,
            objective: f,
            step_size: last_rate,
            updated: non_empty(&groups),
        });
        if max_displacement(&before, &codebook) <= config.tolerance {
            converged = true;
            break;
        }
    }
    if let Some(avg) = cesaro {
        codebook = Codebook::new(avg.mean().to_vec(), dim, config.rank, T::lit(2.0))?;
    }
    if let Some(avg) = by_size {
        codebook = avg.codebook(&codebook)?;
    }
    Ok(KMeansRun {
        codebook,
        trace,
        iterations: epochs,
        converged,
    })
}

/// Stochastic K-Means: the single-sample generalized gradient method with
/// plain SGD steps. It is exactly the SQ loop with the SGD rule, so it is
/// delegated to [`run_sq`]. K-Means++ seeding draws from ChaCha stream 1 of
/// the seed, leaving stream 0 for sampling.
pub fn run_stochastic_kmeans<T: Scalar>(
    data: &FeatureSet<T>,
    config: &KMeansConfig<T>,
) -> Result<SqRun<T>> {
    config.validate(data)?;
    let report = validate_schedule(&config.schedule)?;
    if !report.theorem1_compliant {
        return Err(Error::InvalidSchedule(format!(
            "stochastic K-Means needs ρ_t > 0, Σρ_t = ∞, Σρ_t² < ∞ ({})",
            report.reason.map(|r| r.to_string()).unwrap_or_default()
        )));
    }
    let init = match &config.seeding {
        Seeding::Explicit(v) => InitMode::Explicit(v.clone()),
        Seeding::UniformRandom => InitMode::SampleFromData,
        Seeding::KMeansPlusPlus => InitMode::Explicit(
            kmeanspp_with_rng(data, config.k, &mut seeded_stream(config.seed, 1))?
                .centers()
                .to_vec(),
        ),
    };
    let averaging = match config.averaging {
        KMeansAveraging::None => Averaging::None,
        KMeansAveraging::Cesaro => Averaging::Cesaro,
        KMeansAveraging::GroupSize => {
            return Err(Error::InvalidConfig(
                "group-size averaging needs full-batch group counts".into(),
            ))
        }
    };
    let mut sq = SqConfig::new(config.k, config.max_iter);
    sq.rank = config.rank;
    sq.variant = Variant::Sgd;
    sq.schedule = config.schedule;
    sq.region = config.region.clone();
    sq.sampling = config.sampling;
    sq.seed = config.seed;
    sq.init = init;
    sq.averaging = averaging;
    sq.eval_stride = config.eval_stride;
    run_sq(data, &sq)
}
