//! The Stochastic Quantization training loop.
//!
//! Each iteration draws one sample, finds its nearest center, computes the
//! partial generalized gradient of `‖ξ − y_k‖^r` for that center alone and
//! hands it to the configured update rule, which ends with a projection onto
//! the region. Only one codebook row changes per iteration.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;

use crate::error::{Divergence, Error, Result};
use crate::gradients::partial_gradient_into;
use crate::model::{
    validate_schedule, Codebook, ConvergenceTrace, FeatureSet, LearningSchedule,
    ProjectionRegion, TraceRecord,
};
use crate::objective::{nearest_index, objective_unchecked};
use crate::optim::{Hyperparams, OptimizerState, Variant};
use crate::rng::{seeded, seeded_stream, SqRng};
use crate::scalar::Scalar;

/// A run is declared diverged once the objective exceeds this multiple of
/// its initial value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent draws `i ~ p`.
    #[default]
    IidWeighted,
    /// Epochs of `I` iterations, each visiting a fresh permutation of the points.
    EpochShuffle,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitMode<T> {
    /// `K` distinct data points drawn uniformly.
    #[default]
    SampleFromData,
    /// One uniformly drawn labeled point per class, classes in id order.
    /// Requires `K` equal to the class count.
    PerLabel,
    /// Row-major `K × n` positions.
    Explicit(Vec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    #[default]
    None,
    /// Step-size weighted trajectory average (Cesàro).
    Cesaro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqConfig<T> {
    pub k: usize,
    pub rank: T,
    pub norm_order: T,
    pub variant: Variant,
    pub hyper: Hyperparams<T>,
    pub schedule: LearningSchedule<T>,
    /// Number of single-sample updates `T`. Zero returns the initial codebook.
    pub iterations: u64,
    pub region: ProjectionRegion<T>,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub init: InitMode<T>,
    pub averaging: Averaging,
    /// Objective sampling period; `None` means once per `I` iterations.
    pub eval_stride: Option<u64>,
    pub restarts: usize,
}

impl<T: Scalar> SqConfig<T> {
    /// Plain SGD with the variant's default rate, unbounded region, `r = 2`.
    pub fn new(k: usize, iterations: u64) -> Self {
        let variant = Variant::Sgd;
        Self {
            k,
            rank: T::lit(2.0),
            norm_order: T::lit(2.0),
            variant,
            hyper: Hyperparams::default(),
            schedule: LearningSchedule::constant(T::lit(variant.default_rate())),
            iterations,
            region: ProjectionRegion::Unbounded,
            sampling: SamplingMode::default(),
            seed: 0,
            init: InitMode::default(),
            averaging: Averaging::default(),
            eval_stride: None,
            restarts: 1,
        }
    }

    pub fn validate(&self, data: &FeatureSet<T>) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("K must be >= 1".into()));
        }
        if !(self.rank >= T::one()) {
            return Err(Error::InvalidConfig(format!("rank {} < 1", self.rank)));
        }
        if !(self.norm_order >= T::one()) {
            return Err(Error::InvalidConfig(format!("norm order {} < 1", self.norm_order)));
        }
        validate_schedule(&self.schedule)?;
        self.hyper.validate()?;
        if let Some(d) = self.region.dim() {
            if d != data.dim() {
                return Err(Error::DimensionMismatch {
                    expected: data.dim(),
                    found: d,
                });
            }
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if self.eval_stride == Some(0) {
            return Err(Error::InvalidConfig("eval stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Gradients are Euclidean; with another norm order the update direction
    /// is not a generalized gradient of the configured objective.
    pub fn gradient_matches_norm(&self) -> bool {
        self.norm_order == T::lit(2.0)
    }

    pub fn stride(&self, data_len: usize) -> u64 {
        self.eval_stride.unwrap_or(data_len as u64).max(1)
    }
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct SqRun<T> {
    pub codebook: Codebook<T>,
    pub trace: ConvergenceTrace<T>,
}

/// Initial codebook, projected onto the configured region.
pub fn initialize<T: Scalar>(
    data: &FeatureSet<T>,
    config: &SqConfig<T>,
    rng: &mut SqRng,
) -> Result<Codebook<T>> {
    let dim = data.dim();
    let mut centers = match &config.init {
        InitMode::Explicit(positions) => {
            if positions.len() != config.k * dim {
                return Err(Error::InvalidConfig(format!(
                    "explicit init has {} coordinates, expected K·n = {}",
                    positions.len(),
                    config.k * dim
                )));
            }
            positions.clone()
        }
        InitMode::SampleFromData => sample_distinct_points(data, config.k, rng)?,
        InitMode::PerLabel => per_label_points(data, config.k, rng)?,
    };
    for row in centers.chunks_exact_mut(dim) {
        config.region.project_in_place(row);
    }
    Codebook::new(centers, dim, config.rank, config.norm_order)
}

pub(crate) fn sample_distinct_points<T: Scalar>(
    data: &FeatureSet<T>,
    k: usize,
    rng: &mut SqRng,
) -> Result<Vec<T>> {
    if k > data.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot draw K = {k} distinct points from I = {}",
            data.len()
        )));
    }
    let picks = rand::seq::index::sample(rng, data.len(), k);
    Ok(picks.iter().flat_map(|i| data.point(i).to_vec()).collect())
}

fn per_label_points<T: Scalar>(data: &FeatureSet<T>, k: usize, rng: &mut SqRng) -> Result<Vec<T>> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::MissingLabels("per-label initialization".into()))?;
    let classes = labels.class_count() as usize;
    if k != classes {
        return Err(Error::InvalidConfig(format!(
            "per-label initialization needs K = L, got K = {k}, L = {classes}"
        )));
    }
    let mut members = vec![Vec::new(); classes];
    for (i, l) in labels.values().iter().enumerate() {
        if let Some(l) = l {
            members[*l as usize].push(i);
        }
    }
    let mut out = Vec::with_capacity(k * data.dim());
    for (class, idx) in members.iter().enumerate() {
        let &i = idx
            .choose(rng)
            .ok_or_else(|| Error::MissingLabels(format!("class {class} has no labeled points")))?;
        out.extend_from_slice(data.point(i));
    }
    Ok(out)
}

/// Draws sample indices in either sampling mode.
pub(crate) enum Sampler {
    Weighted(WeightedIndex<f64>),
    Shuffle { order: Vec<usize>, cursor: usize },
}

impl Sampler {
    pub(crate) fn new<T: Scalar>(data: &FeatureSet<T>, mode: SamplingMode) -> Result<Self> {
        Ok(match mode {
            SamplingMode::IidWeighted => {
                let w: Vec<f64> = data.weights().iter().map(|w| w.as_f64()).collect();
                Sampler::Weighted(
                    WeightedIndex::new(&w)
                        .map_err(|e| Error::InvalidFeatureSet(format!("weights: {e}")))?,
                )
            }
            SamplingMode::EpochShuffle => Sampler::Shuffle {
                order: (0..data.len()).collect(),
                cursor: data.len(),
            },
        })
    }

    pub(crate) fn next(&mut self, rng: &mut SqRng) -> usize {
        match self {
            Sampler::Weighted(w) => w.sample(rng),
            Sampler::Shuffle { order, cursor } => {
                if *cursor == order.len() {
                    order.shuffle(rng);
                    *cursor = 0;
                }
                *cursor += 1;
                order[*cursor - 1]
            }
        }
    }
}

/// Online step-size weighted average of iterates:
/// `ȳ ← (1 − σ) ȳ + σ y`, `σ = ρ / Σ ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CesaroAverager<T> {
    mean: Vec<T>,
    rate_sum: T,
}

impl<T: Scalar> CesaroAverager<T> {
    pub fn new(len: usize) -> Self {
        Self {
            mean: vec![T::zero(); len],
            rate_sum: T::zero(),
        }
    }

    /// Folds in `iterate` with weight `rate`. The first push copies the iterate.
    pub fn push(&mut self, iterate: &[T], rate: T) {
        self.rate_sum += rate;
        let sigma = rate / self.rate_sum;
        for (m, &y) in self.mean.iter_mut().zip(iterate) {
            *m = (T::one() - sigma) * *m + sigma * y;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rate_sum == T::zero()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }
}

/// Cesàro average of a stored trajectory; `rates[s]` weights `iterates[s]`.
pub fn cesaro_average<T: Scalar>(iterates: &[Codebook<T>], rates: &[T]) -> Result<Codebook<T>> {
    let first = iterates
        .first()
        .ok_or_else(|| Error::InvalidConfig("no iterates to average".into()))?;
    if rates.len() != iterates.len() {
        return Err(Error::DimensionMismatch {
            expected: iterates.len(),
            found: rates.len(),
        });
    }
    let mut avg = CesaroAverager::new(first.centers().len());
    for (cb, &rate) in iterates.iter().zip(rates) {
        avg.push(cb.centers(), rate);
    }
    Codebook::new(avg.mean, first.dim(), first.rank(), first.norm_order())
}

pub(crate) fn diverged<T: Scalar>(iteration: u64, reason: String, trace: &ConvergenceTrace<T>) -> Error {
    Error::Diverged(Box::new(Divergence {
        iteration,
        reason,
        trace: trace.to_f64(),
    }))
}

/// Trains one codebook. Deterministic for a fixed `config.seed`.
pub fn run_sq<T: Scalar>(data: &FeatureSet<T>, config: &SqConfig<T>) -> Result<SqRun<T>> {
    config.validate(data)?;
    run_with_rng(data, config, &mut seeded(config.seed))
}

fn run_with_rng<T: Scalar>(
    data: &FeatureSet<T>,
    config: &SqConfig<T>,
    rng: &mut SqRng,
) -> Result<SqRun<T>> {
    let mut codebook = initialize(data, config, rng)?;
    let stride = config.stride(data.len());
    let mut trace = ConvergenceTrace::new(stride);
    let initial = objective_unchecked(data, &codebook);
    if !initial.is_finite() {
        return Err(diverged(0, "initial objective not finite".into(), &trace));
    }
    trace.push_unchecked(TraceRecord {
        iteration: 0,
        objective: initial,
        step_size: T::zero(),
        updated: Vec::new(),
    });
    if config.iterations == 0 {
        return Ok(SqRun { codebook, trace });
    }

    let limit = T::lit(DIVERGENCE_FACTOR) * initial;
    let mut state = OptimizerState::new(config.variant, config.hyper, codebook.centers(), data.dim())?;
    let mut sampler = Sampler::new(data, config.sampling)?;
    let mut averager = match config.averaging {
        Averaging::Cesaro => Some(CesaroAverager::new(codebook.centers().len())),
        Averaging::None => None,
    };
    let mut grad = vec![T::zero(); data.dim()];
    let rank = codebook.rank();

    for t in 0..config.iterations {
        let i = sampler.next(rng);
        let x = data.point(i);
        let (k, _) = nearest_index(x, &codebook);
        partial_gradient_into(x, codebook.center(k), rank, &mut grad);
        let rate = config.schedule.rate(t);
        let effective = state.step(k, codebook.center_mut(k), &grad, rate, &config.region);
        if codebook.center(k).iter().any(|v| !v.is_finite()) {
            return Err(diverged(t + 1, format!("center {k} became non-finite"), &trace));
        }
        if let Some(avg) = averager.as_mut() {
            avg.push(codebook.centers(), config.schedule.rate(t + 1));
        }
        let done = t + 1;
        if done % stride == 0 || done == config.iterations {
            let f = objective_unchecked(data, &codebook);
            if !f.is_finite() || (initial > T::zero() && f > limit) {
                return Err(diverged(done, format!("objective reached {f}"), &trace));
            }
            trace.push_unchecked(TraceRecord {
                iteration: done,
                objective: f,
                step_size: effective,
                updated: vec![k],
            });
        }
    }

    if let Some(avg) = averager {
        codebook = Codebook::new(avg.mean, data.dim(), config.rank, config.norm_order)?;
    }
    Ok(SqRun { codebook, trace })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartSummary<T> {
    pub restart: usize,
    pub objective: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistartRun<T> {
    pub best: SqRun<T>,
    pub best_restart: usize,
    pub best_objective: T,
    /// Final objective of every successful restart, sorted descending so the
    /// best run comes last.
    pub objectives: Vec<RestartSummary<T>>,
    /// Restarts that diverged.
    pub diverged: Vec<usize>,
}

/// `config.restarts` independent runs; restart `j` uses ChaCha stream `j` of
/// `config.seed`, so restart 0 reproduces [`run_sq`]. Returns the run with
/// the lowest final objective (ties go to the lower restart index).
pub fn run_multistart<T: Scalar>(data: &FeatureSet<T>, config: &SqConfig<T>) -> Result<MultistartRun<T>> {
    config.validate(data)?;
    let results: Vec<Result<(SqRun<T>, T)>> = (0..config.restarts)
        .into_par_iter()
        .map(|j| {
            let run = run_with_rng(data, config, &mut seeded_stream(config.seed, j as u64))?;
            let f = objective_unchecked(data, &run.codebook);
            Ok((run, f))
        })
        .collect();

    let mut best: Option<(usize, SqRun<T>, T)> = None;
    let mut objectives = Vec::new();
    let mut diverged = Vec::new();
    let mut first_error = None;
    for (j, res) in results.into_iter().enumerate() {
        match res {
            Ok((run, f)) => {
                objectives.push(RestartSummary {
                    restart: j,
                    objective: f,
                });
                if best.as_ref().is_none_or(|(_, _, bf)| f < *bf) {
                    best = Some((j, run, f));
                }
            }
            Err(e @ Error::Diverged(_)) => {
                diverged.push(j);
                first_error.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    let Some((best_restart, best, best_objective)) = best else {
        return Err(first_error.expect("at least one restart"));
    };
    objectives.sort_by(|a, b| {
        b.objective
            .partial_cmp(&a.objective)
            .expect("finite objectives")
            .then(b.restart.cmp(&a.restart))
    });
    Ok(MultistartRun {
        best,
        best_restart,
        best_objective,
        objectives,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Labels;
    use crate::objective::empirical_objective;

    fn two_pairs() -> FeatureSet<f64> {
        FeatureSet::new(vec![0.0, 0.0, 0.0, 1.0, 10.0, 10.0, 10.0, 11.0], 2).unwrap()
    }

    #[test]
    fn k1_converges_to_mean() {
        let data: FeatureSet<f64> = FeatureSet::with_weights(
            vec![0.0, 0.0, 4.0, 0.0, 1.0, 3.0, -1.0, 1.0],
            2,
            vec![0.4, 0.1, 0.3, 0.2],
        )
        .unwrap();
        // ρ_t = 0.5 / (1 + t) makes the iterate the running mean of the samples
        let mut cfg = SqConfig::new(1, 200_000);
        cfg.schedule = LearningSchedule::polynomial(0.5, 1.0);
        cfg.seed = 3;
        let run = run_sq(&data, &cfg).unwrap();
        let mean = data.weighted_mean();
        for (c, m) in run.codebook.center(0).iter().zip(&mean) {
            assert!((c - m).abs() < 1e-2, "{c} vs {m}");
        }
    }

    #[test]
    fn two_pairs_every_variant() {
        let data = two_pairs();
        // optimum: centers at pair means, F = 0.25
        for variant in Variant::ALL {
            let mut cfg = SqConfig::new(2, 20_000);
            cfg.variant = variant;
            cfg.schedule = LearningSchedule::polynomial(variant.default_rate() * 20.0, 0.6);
            cfg.init = InitMode::Explicit(vec![0.0, 0.0, 10.0, 10.0]);
            cfg.seed = 1;
            let run = run_sq(&data, &cfg).unwrap();
            let f = empirical_objective(&data, &run.codebook).unwrap();
            assert!(f <= 0.25 * 1.05, "{variant}: {f}");
        }
    }

    #[test]
    fn zero_iterations_returns_init() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 0);
        cfg.init = InitMode::Explicit(vec![1.0, 2.0, 3.0, 4.0]);
        let run = run_sq(&data, &cfg).unwrap();
        assert_eq!(run.codebook.centers(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(run.trace.len(), 1);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 500);
        cfg.variant = Variant::Adam;
        cfg.seed = 99;
        cfg.eval_stride = Some(7);
        let a = run_sq(&data, &cfg).unwrap();
        let b = run_sq(&data, &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 100;
        assert_ne!(run_sq(&data, &cfg).unwrap().trace, a.trace);
    }

    #[test]
    fn one_center_changes_per_iteration() {
        let data = two_pairs();
        for variant in Variant::ALL {
            let mut prev: Option<Vec<f64>> = None;
            for iters in 0..30u64 {
                let mut cfg = SqConfig::new(2, iters);
                cfg.variant = variant;
                cfg.seed = 5;
                let cb = run_sq(&data, &cfg).unwrap().codebook;
                if let Some(p) = prev {
                    let changed = (0..2)
                        .filter(|&k| p[k * 2..k * 2 + 2] != cb.centers()[k * 2..k * 2 + 2])
                        .count();
                    assert!(changed <= 1, "{variant}");
                }
                prev = Some(cb.centers().to_vec());
            }
        }
    }

    #[test]
    fn initialization_modes() {
        let data = two_pairs()
            .with_labels(Labels::new(vec![Some(0), Some(0), Some(1), None], 2).unwrap())
            .unwrap();
        let mut cfg = SqConfig::<f64>::new(2, 0);
        cfg.init = InitMode::PerLabel;
        let cb = initialize(&data, &cfg, &mut seeded(1)).unwrap();
        assert!(cb.center(0)[0] == 0.0);
        assert_eq!(cb.center(1), &[10.0, 10.0]);

        cfg.k = 3;
        assert!(initialize(&data, &cfg, &mut seeded(1)).is_err());
        cfg.init = InitMode::SampleFromData;
        cfg.k = 5;
        assert!(initialize(&data, &cfg, &mut seeded(1)).is_err());
        cfg.k = 4;
        let a = initialize(&data, &cfg, &mut seeded(1)).unwrap();
        let b = initialize(&data, &cfg, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        let mut rows: Vec<Vec<u64>> = a.rows().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect();
        rows.sort();
        rows.dedup();
        assert_eq!(rows.len(), 4);

        let unlabeled = two_pairs();
        cfg.k = 2;
        cfg.init = InitMode::PerLabel;
        assert!(matches!(
            initialize(&unlabeled, &cfg, &mut seeded(1)),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn cesaro_examples() {
        let cb = |v: f64| Codebook::euclidean(vec![v], 1).unwrap();
        let its: Vec<_> = [1.0, 2.0, 3.0, 6.0].iter().map(|&v| cb(v)).collect();
        let avg = cesaro_average(&its, &[0.3; 4]).unwrap();
        assert!((avg.centers()[0] - 3.0).abs() < 1e-15);

        assert_eq!(cesaro_average(&its[..1], &[0.7]).unwrap().centers(), &[1.0]);

        // ρ_s = 1/(s+1), s = 1..5: direct weighted sum
        let values = [2.0, -1.0, 4.0, 0.5, 3.0];
        let rates: Vec<f64> = (1..=5).map(|s| 1.0 / (s as f64 + 1.0)).collect();
        let its: Vec<_> = values.iter().map(|&v| cb(v)).collect();
        let avg = cesaro_average(&its, &rates).unwrap();
        let direct: f64 = values.iter().zip(&rates).map(|(v, r)| v * r).sum::<f64>()
            / rates.iter().sum::<f64>();
        assert!((avg.centers()[0] - direct).abs() < 1e-14);
    }

    #[test]
    fn epoch_shuffle_visits_each_point_once_per_epoch() {
        let data = FeatureSet::new((0..7).map(f64::from).collect(), 1).unwrap();
        let mut sampler = Sampler::new(&data, SamplingMode::EpochShuffle).unwrap();
        let mut rng = seeded(4);
        for _ in 0..5 {
            let mut seen: Vec<usize> = (0..7).map(|_| sampler.next(&mut rng)).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn divergence_detected() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 1000);
        cfg.rank = 3.0;
        cfg.schedule = LearningSchedule::constant(50.0);
        cfg.eval_stride = Some(1);
        cfg.init = InitMode::Explicit(vec![5.0, 5.0, 6.0, 6.0]);
        match run_sq(&data, &cfg) {
            Err(Error::Diverged(d)) => assert!(!d.trace.is_empty()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn multistart_single_restart_matches_run_sq() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 300);
        cfg.seed = 17;
        let single = run_sq(&data, &cfg).unwrap();
        let multi = run_multistart(&data, &cfg).unwrap();
        assert_eq!(multi.best, single);
        assert_eq!(multi.objectives.len(), 1);
    }

    #[test]
    fn multistart_reports_sorted_objectives() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 200);
        cfg.restarts = 6;
        cfg.seed = 2;
        let m = run_multistart(&data, &cfg).unwrap();
        assert_eq!(m.objectives.len(), 6);
        assert!(m.objectives.windows(2).all(|w| w[0].objective >= w[1].objective));
        assert_eq!(m.objectives.last().unwrap().objective, m.best_objective);
        assert_eq!(m.objectives.last().unwrap().restart, m.best_restart);
    }

    #[test]
    fn box_region_keeps_centers_inside() {
        let data = two_pairs();
        let mut cfg = SqConfig::new(2, 2000);
        cfg.region = ProjectionRegion::data_box(&data, 0.0).unwrap();
        cfg.schedule = LearningSchedule::constant(0.9);
        cfg.rank = 3.0;
        let run = run_sq(&data, &cfg).unwrap();
        assert!(run.codebook.rows().all(|c| cfg.region.contains(c)));
    }
}
