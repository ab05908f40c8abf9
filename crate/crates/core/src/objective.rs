//! Distances, nearest-center assignment, the empirical objective and the
//! interchange-relaxation lower bound.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Codebook, FeatureSet, ProjectionRegion};
use crate::scalar::{ordered_sum, Scalar};

/// Below this many `I·K·n` operations the point scan runs on the calling thread.
const PARALLEL_WORK: usize = 1 << 16;

/// `l_p` distance `(Σ_j |a_j − b_j|^p)^(1/p)`.
pub fn distance<T: Scalar>(a: &[T], b: &[T], norm_order: T) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if !(norm_order >= T::one()) {
        return Err(Error::InvalidConfig(format!("norm order {norm_order} < 1")));
    }
    Ok(lp_distance(a, b, norm_order))
}

pub(crate) fn lp_distance<T: Scalar>(a: &[T], b: &[T], p: T) -> T {
    if p == T::lit(2.0) {
        return squared_euclidean(a, b).sqrt();
    }
    if p == T::one() {
        return ordered_sum(a.iter().zip(b).map(|(&x, &y)| (x - y).abs()));
    }
    ordered_sum(a.iter().zip(b).map(|(&x, &y)| (x - y).abs().powf(p))).powf(T::one() / p)
}

pub(crate) fn squared_euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    ordered_sum(a.iter().zip(b).map(|(&x, &y)| {
        let d = x - y;
        d * d
    }))
}

/// Nearest center of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Nearest<T> {
    /// Canonical representative of the argmin set: its lowest index.
    pub index: usize,
    pub distance: T,
    /// Full argmin set `S(ξ, y)`, ascending.
    pub ties: Vec<usize>,
}

/// Nearest center with its full tie set.
pub fn nearest<T: Scalar>(point: &[T], codebook: &Codebook<T>) -> Result<Nearest<T>> {
    check_dim(point.len(), codebook.dim())?;
    let dists: Vec<T> = codebook
        .rows()
        .map(|c| lp_distance(point, c, codebook.norm_order()))
        .collect();
    let (index, distance) = argmin(&dists);
    let ties = dists
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == distance)
        .map(|(k, _)| k)
        .collect();
    Ok(Nearest {
        index,
        distance,
        ties,
    })
}

/// Canonical nearest center and its distance, without building the tie set.
pub(crate) fn nearest_index<T: Scalar>(point: &[T], codebook: &Codebook<T>) -> (usize, T) {
    let p = codebook.norm_order();
    let mut best = (0, lp_distance(point, codebook.center(0), p));
    for (k, c) in codebook.rows().enumerate().skip(1) {
        let d = lp_distance(point, c, p);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn argmin<T: Scalar>(values: &[T]) -> (usize, T) {
    let mut best = (0, values[0]);
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (k, v);
        }
    }
    best
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Applies `f` to every point index. Large scans are split across the rayon
/// pool; results come back in index order, so downstream reductions are
/// independent of the worker count.
pub(crate) fn map_points<T, R, F>(data: &FeatureSet<T>, work_per_point: usize, f: F) -> Vec<R>
where
    T: Scalar,
    R: Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
{
    if data.len().saturating_mul(work_per_point) < PARALLEL_WORK {
        data.rows().enumerate().map(|(i, x)| f(i, x)).collect()
    } else {
        data.points()
            .par_chunks_exact(data.dim())
            .enumerate()
            .map(|(i, x)| f(i, x))
            .collect()
    }
}

/// Nearest-center assignment of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<T> {
    pub nearest_index: Vec<usize>,
    pub nearest_distance: Vec<T>,
    /// `(point, S(ξ_i, y))` for every point whose argmin set has more than one center.
    pub tie_sets: Vec<(usize, Vec<usize>)>,
}

pub fn assign<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> Result<Assignment<T>> {
    check_dim(data.dim(), codebook.dim())?;
    let rows = map_points(data, codebook.len() * data.dim(), |i, x| {
        let n = nearest(x, codebook).expect("dimensions checked");
        (i, n)
    });
    let mut out = Assignment {
        nearest_index: Vec::with_capacity(rows.len()),
        nearest_distance: Vec::with_capacity(rows.len()),
        tie_sets: Vec::new(),
    };
    for (i, n) in rows {
        out.nearest_index.push(n.index);
        out.nearest_distance.push(n.distance);
        if n.ties.len() > 1 {
            out.tie_sets.push((i, n.ties));
        }
    }
    Ok(out)
}

/// `F(y) = Σ_i p_i · (min_k d(ξ_i, y_k))^r`.
///
/// The minimum is taken over un-raised distances and raised to `r` once.
pub fn empirical_objective<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> Result<T> {
    check_dim(data.dim(), codebook.dim())?;
    Ok(objective_unchecked(data, codebook))
}

pub(crate) fn objective_unchecked<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> T {
    let r = codebook.rank();
    let terms = map_points(data, codebook.len() * data.dim(), |i, x| {
        data.weight(i) * pow_rank(nearest_index(x, codebook).1, r)
    });
    ordered_sum(terms)
}

pub(crate) fn pow_rank<T: Scalar>(d: T, r: T) -> T {
    if r == T::lit(2.0) {
        d * d
    } else if r == T::one() {
        d
    } else {
        d.powf(r)
    }
}

/// Mutually exclusive, exhaustive index groups `I_k` under canonical tie
/// breaking. Groups may be empty.
pub fn partition<T: Scalar>(data: &FeatureSet<T>, codebook: &Codebook<T>) -> Result<Vec<Vec<usize>>> {
    check_dim(data.dim(), codebook.dim())?;
    Ok(partition_unchecked(data, codebook))
}

pub(crate) fn partition_unchecked<T: Scalar>(
    data: &FeatureSet<T>,
    codebook: &Codebook<T>,
) -> Vec<Vec<usize>> {
    let owner = map_points(data, codebook.len() * data.dim(), |_, x| {
        nearest_index(x, codebook).0
    });
    let mut groups = vec![Vec::new(); codebook.len()];
    for (i, k) in owner.into_iter().enumerate() {
        groups[k].push(i);
    }
    groups
}

/// Lower bound on `min F(y)` over `y_k ∈ Y_k` obtained by interchanging the
/// minimum over regions with the minimum over centers:
/// `Σ_i p_i · min_k d(ξ_i, Π_{Y_k}(ξ_i))^r`.
pub fn interchange_lower_bound<T: Scalar>(
    data: &FeatureSet<T>,
    regions: &[ProjectionRegion<T>],
    rank: T,
    norm_order: T,
) -> Result<T> {
    if regions.is_empty() {
        return Err(Error::InvalidRegion("no regions given".into()));
    }
    if !(rank >= T::one()) || !(norm_order >= T::one()) {
        return Err(Error::InvalidConfig("rank and norm order must be >= 1".into()));
    }
    for (k, region) in regions.iter().enumerate() {
        match region.dim() {
            None => {
                return Err(Error::InvalidRegion(format!(
                    "region {k} is unbounded; the bound would be trivially 0"
                )))
            }
            Some(d) => check_dim(data.dim(), d)?,
        }
    }
    let terms = map_points(data, regions.len() * data.dim(), |i, x| {
        let mut projected = x.to_vec();
        let mut best = T::infinity();
        for region in regions {
            projected.copy_from_slice(x);
            region.project_in_place(&mut projected);
            best = best.min(lp_distance(x, &projected, norm_order));
        }
        data.weight(i) * pow_rank(best, rank)
    });
    Ok(ordered_sum(terms))
}
