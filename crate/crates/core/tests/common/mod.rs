//! Independent reference computations used by the integration tests. Nothing
//! here calls into the solvers; only data containers and the objective are
//! shared.
#![allow(dead_code)]

use rand::Rng;
use sq_core::objective::empirical_objective;
use sq_core::rng::seeded;
use sq_core::{Codebook64, FeatureSet64};

/// Weighted squared-error cost of one group with its center at the weighted mean.
fn group_cost(data: &FeatureSet64, group: &[usize]) -> f64 {
    if group.is_empty() {
        return 0.0;
    }
    let dim = data.dim();
    let mass: f64 = group.iter().map(|&i| data.weight(i)).sum();
    let mut mean = vec![0.0; dim];
    for &i in group {
        for (m, x) in mean.iter_mut().zip(data.point(i)) {
            *m += data.weight(i) * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= mass);
    group
        .iter()
        .map(|&i| {
            let d2: f64 = data.point(i).iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum();
            data.weight(i) * d2
        })
        .sum()
}

/// Global minimum of the `r = 2` objective with `K` centers, found by
/// enumerating all `K^I` labelings with centers at the group means.
pub fn brute_force_optimum(data: &FeatureSet64, k: usize) -> f64 {
    let n = data.len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    let mut groups = vec![Vec::with_capacity(n); k];
    for code in 0..total {
        groups.iter_mut().for_each(Vec::clear);
        let mut c = code;
        for i in 0..n {
            groups[c % k].push(i);
            c /= k;
        }
        let f: f64 = groups.iter().map(|g| group_cost(data, g)).sum();
        best = best.min(f);
    }
    best
}

/// Optimal `r = 2` cost of uniformly weighted 1-D data with `K` clusters.
/// Optimal 1-D clusters are contiguous in sorted order, so a dynamic program
/// over split points is exact.
pub fn optimum_1d(values: &[f64], k: usize) -> f64 {
    let mut xs = values.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    let seg = |a: usize, b: usize| -> f64 {
        let s = &xs[a..b];
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|x| (x - m).powi(2)).sum()
    };
    // cost[j][i]: best cost of the first i points in j clusters
    let mut cost = vec![vec![f64::INFINITY; n + 1]; k + 1];
    cost[0][0] = 0.0;
    for j in 1..=k {
        for i in j..=n {
            for split in (j - 1)..i {
                let c = cost[j - 1][split] + seg(split, i);
                if c < cost[j][i] {
                    cost[j][i] = c;
                }
            }
        }
    }
    cost[k][n] / n as f64
}

/// Central finite differences of the objective with respect to every center
/// coordinate; the step is `h · max(1, |y|)`.
pub fn central_difference(data: &FeatureSet64, codebook: &Codebook64, h: f64) -> Vec<f64> {
    let base = codebook.centers().to_vec();
    (0..base.len())
        .map(|j| {
            let step = h * base[j].abs().max(1.0);
            let eval = |delta: f64| {
                let mut c = base.clone();
                c[j] += delta;
                let cb = Codebook64::new(c, codebook.dim(), codebook.rank(), codebook.norm_order())
                    .unwrap();
                empirical_objective(data, &cb).unwrap()
            };
            (eval(step) - eval(-step)) / (2.0 * step)
        })
        .collect()
}

/// Smallest gap between the nearest and second-nearest center distance over
/// all points. Large gaps mean every tie set is a singleton with room to spare.
pub fn assignment_margin(data: &FeatureSet64, codebook: &Codebook64) -> f64 {
    data.rows()
        .map(|x| {
            let mut d: Vec<f64> = codebook
                .rows()
                .map(|y| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if d.len() < 2 {
                f64::INFINITY
            } else {
                d[1] - d[0]
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `n` points uniform on `[lo, hi]^dim`.
pub fn uniform_points(seed: u64, n: usize, dim: usize, lo: f64, hi: f64) -> FeatureSet64 {
    let mut rng = seeded(seed);
    FeatureSet64::new((0..n * dim).map(|_| rng.random_range(lo..hi)).collect(), dim).unwrap()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
