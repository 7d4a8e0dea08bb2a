//! Exact 1-D and sliced Wasserstein-2 distances, plus moment summaries.

use rayon::prelude::*;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::{fill_normal, seeded};

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// `W₂` between two equal-size empirical measures on the line: the sorted
/// matching is the optimal coupling.
pub fn w2_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.is_empty() {
        return Ok(0.0);
    }
    Ok(sq_matched(&sorted(xs), &sorted(ys)).sqrt())
}

fn sq_matched(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Empirical quantile function (left-continuous inverse CDF) evaluated at
/// levels `(i + ½)/m`. Returns the input unchanged when `m` equals its length.
fn quantiles(sorted: &[f64], m: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == m {
        return sorted.to_vec();
    }
    (0..m)
        .map(|i| {
            let idx = ((2 * i + 1) * n) / (2 * m);
            sorted[idx.min(n - 1)]
        })
        .collect()
}

/// Squared 1-D `W₂` for possibly unequal sizes, through common quantiles at
/// `max(n, m)` levels.
pub fn w2_1d_sq_general(xs: &[f64], ys: &[f64]) -> f64 {
    let m = xs.len().max(ys.len());
    if xs.is_empty() || ys.is_empty() {
        return 0.0;
    }
    sq_matched(&quantiles(&sorted(xs), m), &quantiles(&sorted(ys), m))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicedW2Config {
    pub n_projections: usize,
    pub seed: u64,
}

impl Default for SlicedW2Config {
    fn default() -> Self {
        Self { n_projections: 2000, seed: 0x5eed }
    }
}

/// Unit directions drawn as normalized Gaussians from the metric's own seed.
pub fn projections(d: usize, cfg: &SlicedW2Config) -> Vec<f64> {
    let mut rng = seeded(cfg.seed);
    let mut dirs = vec![0.0; cfg.n_projections * d];
    for u in dirs.chunks_exact_mut(d) {
        loop {
            fill_normal(&mut rng, u);
            let norm = u.iter().map(|z| z * z).sum::<f64>().sqrt();
            if norm > 0.0 {
                u.iter_mut().for_each(|z| *z /= norm);
                break;
            }
        }
    }
    dirs
}

fn project(data: &[f64], d: usize, u: &[f64]) -> Vec<f64> {
    data.chunks_exact(d).map(|r| r.iter().zip(u).map(|(x, w)| x * w).sum()).collect()
}

/// `√(mean_u W₂²(u·A, u·B))` for row-major `a` (`n × d`) and `b` (`m × d`).
pub fn sliced_w2(a: &[f64], b: &[f64], d: usize, cfg: &SlicedW2Config) -> Result<f64> {
    if d == 0 || a.len() % d != 0 || b.len() % d != 0 {
        return Err(Error::DimensionMismatch { left: a.len(), right: d });
    }
    if cfg.n_projections == 0 {
        return Err(Error::Config("n_projections must be at least 1".into()));
    }
    let dirs = projections(d, cfg);
    let per: Vec<f64> = dirs
        .par_chunks_exact(d)
        .map(|u| w2_1d_sq_general(&project(a, d, u), &project(b, d, u)))
        .collect();
    Ok((per.iter().sum::<f64>() / cfg.n_projections as f64).sqrt())
}

pub fn sliced_w2_datasets(a: &Dataset, b: &Dataset, cfg: &SlicedW2Config) -> Result<f64> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch { left: a.d, right: b.d });
    }
    sliced_w2(&a.data, &b.data, a.d, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub mean: Vec<f64>,
    /// Unbiased per-coordinate variance.
    pub var: Vec<f64>,
    /// Mean of `‖x‖²`.
    pub second_moment: f64,
}

pub fn moment_report(data: &[f64], d: usize) -> MomentReport {
    let n = data.len() / d;
    let mut mean = vec![0.0; d];
    for r in data.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut var = vec![0.0; d];
    let mut second = 0.0;
    for r in data.chunks_exact(d) {
        for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
            *v += (x - m) * (x - m);
            second += x * x;
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    var.iter_mut().for_each(|v| *v /= denom);
    MomentReport { mean, var, second_moment: second / n.max(1) as f64 }
}
