//! Generalized gradients of `F(y) = Σ_i p_i min_k ‖ξ_i − y_k‖^r`.
//!
//! The per-center term is `g_k(ξ) = r ‖ξ − y_k‖^{r−2} (y_k − ξ)`. Gradients
//! always use the Euclidean norm, whatever norm order the codebook carries.
//! Where several centers tie for nearest, the lowest index is selected; this
//! is a vertex of the generalized gradient set and therefore admissible.

use crate::error::{Error, Result};
use crate::model::{Codebook, FeatureSet};
use crate::objective::{nearest_index, partition_unchecked, squared_euclidean};
use crate::scalar::Scalar;

/// `r ‖ξ − y‖^{r−2} (y − ξ)`, written into `out`.
///
/// At `ξ = y` the result is zero for every `r ≥ 1`; for `r < 2` the formula is
/// singular there, and zero is the minimizer of `‖ξ − ·‖^r`.
pub fn partial_gradient_into<T: Scalar>(sample: &[T], center: &[T], rank: T, out: &mut [T]) {
    let sq = squared_euclidean(sample, center);
    if sq == T::zero() {
        out.iter_mut().for_each(|g| *g = T::zero());
        return;
    }
    let two = T::lit(2.0);
    let scale = if rank == two {
        two
    } else {
        rank * sq.sqrt().powf(rank - two)
    };
    for ((g, &y), &x) in out.iter_mut().zip(center).zip(sample) {
        *g = scale * (y - x);
    }
}

pub fn partial_gradient<T: Scalar>(sample: &[T], center: &[T], rank: T) -> Result<Vec<T>> {
    if sample.len() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            found: sample.len(),
        });
    }
    if !(rank >= T::one()) {
        return Err(Error::InvalidConfig(format!("rank {rank} < 1")));
    }
    let mut out = vec![T::zero(); center.len()];
    partial_gradient_into(sample, center, rank, &mut out);
    Ok(out)
}

/// Stochastic generalized gradient `G(ξ)`: nonzero only in the rows listed.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient<T> {
    pub entries: Vec<(usize, Vec<T>)>,
    /// Index of the sample that produced this gradient, when known.
    pub sample: Option<usize>,
}

impl<T: Scalar> SparseGradient<T> {
    /// Dense `K × n` form, row-major.
    pub fn to_dense(&self, centers: usize, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); centers * dim];
        for (k, g) in &self.entries {
            for (o, &v) in out[k * dim..(k + 1) * dim].iter_mut().zip(g) {
                *o += v;
            }
        }
        out
    }
}

/// Single-sample gradient: one entry at the canonical nearest center.
pub fn stochastic_gradient<T: Scalar>(
    sample: &[T],
    codebook: &Codebook<T>,
) -> Result<SparseGradient<T>> {
    if sample.len() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: sample.len(),
        });
    }
    let (k, _) = nearest_index(sample, codebook);
    let mut g = vec![T::zero(); codebook.dim()];
    partial_gradient_into(sample, codebook.center(k), codebook.rank(), &mut g);
    Ok(SparseGradient {
        entries: vec![(k, g)],
        sample: None,
    })
}

/// Full-batch generalized gradient, `K × n` row-major. Row `k` is
/// `Σ_{i ∈ I_k} p_i g_k(ξ_i)`; rows of empty groups are zero.
pub fn full_gradient<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> Result<Vec<T>> {
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: data.dim(),
        });
    }
    let groups = partition_unchecked(data, codebook);
    Ok(gradient_from_groups(data, codebook, &groups))
}

/// Mean of the dense stochastic gradients of the listed samples, `K × n`
/// row-major. Indices may repeat.
pub fn minibatch_gradient<T: Scalar>(
    data: &FeatureSet<T>,
    codebook: &Codebook<T>,
    indices: &[usize],
) -> Result<Vec<T>> {
    if data.dim() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            expected: codebook.dim(),
            found: data.dim(),
        });
    }
    if indices.is_empty() {
        return Err(Error::InvalidConfig("empty mini-batch".into()));
    }
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::InvalidConfig(format!("sample {i} out of range")));
    }
    let dim = codebook.dim();
    let mut out = vec![T::zero(); codebook.len() * dim];
    let mut term = vec![T::zero(); dim];
    for &i in indices {
        let x = data.point(i);
        let (k, _) = nearest_index(x, codebook);
        partial_gradient_into(x, codebook.center(k), codebook.rank(), &mut term);
        for (o, &t) in out[k * dim..(k + 1) * dim].iter_mut().zip(&term) {
            *o += t;
        }
    }
    let scale = T::one() / T::from_usize_lossy(indices.len());
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}

pub(crate) fn gradient_from_groups<T: Scalar>(
    data: &FeatureSet<T>,
    codebook: &Codebook<T>,
    groups: &[Vec<usize>],
) -> Vec<T> {
    let dim = codebook.dim();
    let mut out = vec![T::zero(); codebook.len() * dim];
    let mut term = vec![T::zero(); dim];
    for (k, group) in groups.iter().enumerate() {
        let row = &mut out[k * dim..(k + 1) * dim];
        for &i in group {
            partial_gradient_into(data.point(i), codebook.center(k), codebook.rank(), &mut term);
            let w = data.weight(i);
            for (o, &t) in row.iter_mut().zip(&term) {
                *o += w * t;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::empirical_objective;

    #[test]
    fn partial_gradient_examples() {
        assert_eq!(partial_gradient(&[0.0, 0.0], &[1.0, 1.0], 2.0).unwrap(), vec![2.0, 2.0]);
        assert_eq!(partial_gradient(&[0.0, 0.0], &[1.0, 0.0], 3.0).unwrap(), vec![3.0, 0.0]);
        assert_eq!(partial_gradient(&[1.0, 2.0], &[1.0, 2.0], 2.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(partial_gradient(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), vec![0.0, 0.0]);
        // r = 1: unit vector toward the center
        let g = partial_gradient(&[0.0f64, 0.0], &[3.0, 4.0], 1.0).unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        assert!(partial_gradient(&[0.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn stochastic_gradient_examples() {
        let cb = Codebook::euclidean(vec![1.0, 0.0, 5.0, 0.0], 2).unwrap();
        let g = stochastic_gradient(&[0.0, 0.0], &cb).unwrap();
        assert_eq!(g.entries, vec![(0, vec![2.0, 0.0])]);
        let g = stochastic_gradient(&[5.0, 0.0], &cb).unwrap();
        assert_eq!(g.entries, vec![(1, vec![0.0, 0.0])]);
        let g = stochastic_gradient(&[3.0, 0.0], &cb).unwrap();
        assert_eq!(g.entries.len(), 1);
        assert_eq!(g.entries[0].0, 0);
    }

    #[test]
    fn full_gradient_zero_at_group_means() {
        let data: FeatureSet<f64> =
            FeatureSet::new(vec![0.0, 0.0, 1.0, 0.0, 10.0, 10.0, 11.0, 12.0, 10.0, 11.0], 2)
                .unwrap();
        let cb = Codebook::euclidean(vec![0.5, 0.0, 31.0 / 3.0, 11.0], 2).unwrap();
        let g = full_gradient(&data, &cb).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10), "{g:?}");
    }

    #[test]
    fn full_gradient_single_point() {
        let data = FeatureSet::new(vec![1.0, -2.0], 2).unwrap();
        let cb = Codebook::euclidean(vec![3.0, 1.0], 2).unwrap();
        assert_eq!(full_gradient(&data, &cb).unwrap(), vec![4.0, 6.0]);
    }

    #[test]
    fn stochastic_gradient_average_equals_full_gradient() {
        let data: FeatureSet<f64> = FeatureSet::with_weights(
            vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5, 4.0, 4.0, 3.0, 5.0],
            2,
            vec![0.1, 0.2, 0.3, 0.25, 0.15],
        )
        .unwrap();
        let cb = Codebook::new(vec![0.2, 0.3, 3.5, 4.2], 2, 1.5, 2.0).unwrap();
        let mut avg = vec![0.0; 4];
        for i in 0..data.len() {
            let g = stochastic_gradient(data.point(i), &cb).unwrap().to_dense(2, 2);
            for (a, v) in avg.iter_mut().zip(g) {
                *a += data.weight(i) * v;
            }
        }
        let full = full_gradient(&data, &cb).unwrap();
        for (a, f) in avg.iter().zip(&full) {
            assert!((a - f).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_r3() {
        let pts = [
            0.1, 0.2, 0.9, 0.4, 0.3, 0.8, 2.1, 2.2, 2.5, 1.9, 1.8, 2.6, -0.4, 0.1,
        ];
        let data: FeatureSet<f64> = FeatureSet::new(pts.to_vec(), 2).unwrap();
        let cb = Codebook::new(vec![0.3, 0.4, 2.0, 2.0], 2, 3.0, 2.0).unwrap();
        let g = full_gradient(&data, &cb).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = cb.centers().to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            let fp = empirical_objective(&data, &Codebook::new(plus, 2, 3.0, 2.0).unwrap()).unwrap();
            let fm =
                empirical_objective(&data, &Codebook::new(minus, 2, 3.0, 2.0).unwrap()).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-3), "{j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn minibatch_gradient_over_all_points() {
        let data: FeatureSet<f64> =
            FeatureSet::new(vec![0.0, 0.0, 1.0, 0.0, 4.0, 4.0, 5.0, 5.0], 2).unwrap();
        let cb = Codebook::euclidean(vec![0.2, 0.1, 4.0, 5.0], 2).unwrap();
        // uniform weights: the batch of every point reproduces the full gradient
        let g = minibatch_gradient(&data, &cb, &[0, 1, 2, 3]).unwrap();
        let full = full_gradient(&data, &cb).unwrap();
        for (a, b) in g.iter().zip(&full) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(minibatch_gradient(&data, &cb, &[]).is_err());
        assert!(minibatch_gradient(&data, &cb, &[4]).is_err());
    }
}
