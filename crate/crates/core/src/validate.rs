//! Statistical comparison of whiff statistics between a template and a
//! simulation: peak-normalized 2-D histograms, sliced Wasserstein-1 over
//! (distance, value) pairs, and a permutation null.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, UnitCircle};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::ingest::{Statistic, WhiffStatsTable};
use crate::rng::{seeded, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    /// `counts[ix][iy]`.
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
    /// Samples falling outside the edges.
    pub excluded: usize,
}

impl Histogram2D {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CosmosError::InvalidInput("histogram edges must be strictly increasing".into()));
    }
    Ok(())
}

/// Bin index with right-open bins and a closed last bin.
fn locate(edges: &[f64], v: f64) -> Option<usize> {
    let last = *edges.last()?;
    if !(v >= edges[0] && v <= last) {
        return None;
    }
    if v == last {
        return Some(edges.len() - 2);
    }
    Some(edges.partition_point(|&e| e <= v) - 1)
}

fn peak_normalize(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let peak = counts.iter().flatten().copied().max().unwrap_or(0);
    counts
        .iter()
        .map(|row| {
            row.iter()
                .map(|&c| if peak > 0 { c as f64 / peak as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn hist2d(samples: &[[f64; 2]], x_edges: &[f64], y_edges: &[f64]) -> Result<Histogram2D> {
    check_edges(x_edges)?;
    check_edges(y_edges)?;
    let mut counts = vec![vec![0u64; y_edges.len() - 1]; x_edges.len() - 1];
    let mut excluded = 0;
    for s in samples {
        match (locate(x_edges, s[0]), locate(y_edges, s[1])) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => excluded += 1,
        }
    }
    let normalized = peak_normalize(&counts);
    Ok(Histogram2D { x_edges: x_edges.to_vec(), y_edges: y_edges.to_vec(), counts, normalized, excluded })
}

/// `n + 1` evenly spaced edges over `[lo, hi]`, widened when degenerate.
pub fn linear_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let w = (hi - lo) / n as f64;
    let mut edges: Vec<f64> = (0..=n).map(|i| lo + i as f64 * w).collect();
    edges[n] = hi;
    edges
}

/// `n` unit directions drawn uniformly on the circle from `seed`.
pub fn projection_directions(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = seeded(seed);
    (0..n).map(|_| UnitCircle.sample(&mut rng)).collect()
}

/// Per-axis population standard deviation over the union of both sets,
/// computed on sorted values so it does not depend on argument order.
fn pooled_scale(a: &[[f64; 2]], b: &[[f64; 2]]) -> [f64; 2] {
    let mut out = [1.0; 2];
    for (axis, o) in out.iter_mut().enumerate() {
        let mut v: Vec<f64> = a.iter().chain(b).map(|p| p[axis]).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
        dev.sort_by(f64::total_cmp);
        let sd = (dev.iter().sum::<f64>() / n).sqrt();
        if sd > 0.0 && sd.is_finite() {
            *o = sd;
        }
    }
    out
}

/// Pooled samples projected on each direction and sorted once; any split of
/// the pool into two labelled groups then has an O(n) W1 per direction.
struct SlicedPool {
    /// Per direction, pool indices in ascending projected order.
    order: Vec<Vec<u32>>,
    /// Per direction, gaps between consecutive sorted projections.
    gaps: Vec<Vec<f64>>,
}

impl SlicedPool {
    fn new(points: &[[f64; 2]], scale: [f64; 2], directions: &[[f64; 2]]) -> Self {
        let mut order = Vec::with_capacity(directions.len());
        let mut gaps = Vec::with_capacity(directions.len());
        for d in directions {
            let proj: Vec<f64> = points
                .iter()
                .map(|p| p[0] / scale[0] * d[0] + p[1] / scale[1] * d[1])
                .collect();
            let mut idx: Vec<u32> = (0..points.len() as u32).collect();
            idx.sort_by(|&i, &j| proj[i as usize].total_cmp(&proj[j as usize]));
            let g = idx.windows(2).map(|w| proj[w[1] as usize] - proj[w[0] as usize]).collect();
            order.push(idx);
            gaps.push(g);
        }
        Self { order, gaps }
    }

    /// Mean over directions of `integral |F_a - F_b|` where `in_a` labels
    /// the pool.
    fn distance(&self, in_a: &[bool], n_a: usize) -> f64 {
        let n_b = in_a.len() - n_a;
        let (wa, wb) = (1.0 / n_a as f64, 1.0 / n_b as f64);
        let mut total = 0.0;
        for (order, gaps) in self.order.iter().zip(&self.gaps) {
            let (mut ca, mut cb) = (0usize, 0usize);
            let mut w = 0.0;
            for (k, &g) in gaps.iter().enumerate() {
                if in_a[order[k] as usize] {
                    ca += 1;
                } else {
                    cb += 1;
                }
                w += (ca as f64 * wa - cb as f64 * wb).abs() * g;
            }
            total += w;
        }
        total / self.order.len() as f64
    }
}

fn pool(a: &[[f64; 2]], b: &[[f64; 2]]) -> (Vec<[f64; 2]>, Vec<bool>) {
    let mut points = Vec::with_capacity(a.len() + b.len());
    points.extend_from_slice(a);
    points.extend_from_slice(b);
    let mut labels = vec![true; a.len()];
    labels.resize(a.len() + b.len(), false);
    (points, labels)
}

/// Sliced Wasserstein-1 between two 2-D point sets after per-axis scaling by
/// the pooled standard deviation.
pub fn wasserstein_2d(a: &[[f64; 2]], b: &[[f64; 2]], n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CosmosError::InvalidInput("wasserstein_2d needs two non-empty sets".into()));
    }
    if n_projections == 0 {
        return Err(CosmosError::Config("n_projections must be >= 1".into()));
    }
    let directions = projection_directions(n_projections, seed);
    Ok(sliced_unscaled(a, b, pooled_scale(a, b), &directions))
}

fn sliced_unscaled(a: &[[f64; 2]], b: &[[f64; 2]], scale: [f64; 2], directions: &[[f64; 2]]) -> f64 {
    let (points, labels) = pool(a, b);
    SlicedPool::new(&points, scale, directions).distance(&labels, a.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub observed: f64,
    pub null: Vec<f64>,
    pub p_value: f64,
}

/// Permutation null: the pool is re-split into groups of the original sizes
/// `iterations` times. Iteration `i` draws from substream `(seed, i)`.
pub fn bootstrap_null(
    a: &[[f64; 2]],
    b: &[[f64; 2]],
    iterations: usize,
    n_projections: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if iterations == 0 {
        return Err(CosmosError::Config("bootstrap needs at least one iteration".into()));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(CosmosError::InsufficientData(format!(
            "bootstrap groups need >= 2 samples (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if n_projections == 0 {
        return Err(CosmosError::Config("n_projections must be >= 1".into()));
    }
    let directions = projection_directions(n_projections, seed);
    let (points, labels) = pool(a, b);
    let sp = SlicedPool::new(&points, pooled_scale(a, b), &directions);
    let observed = sp.distance(&labels, a.len());
    let n = points.len();
    let null: Vec<f64> = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            let (chosen, _) = idx.partial_shuffle(&mut rng, a.len());
            let mut in_a = vec![false; n];
            for &k in chosen.iter() {
                in_a[k] = true;
            }
            sp.distance(&in_a, a.len())
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    let p_value = (1 + exceed) as f64 / (iterations + 1) as f64;
    Ok(BootstrapResult { observed, null, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub bootstrap_iterations: usize,
    pub n_projections: usize,
    pub distance_bins: usize,
    pub value_bins: usize,
    pub wf_window_s: f64,
    pub wma_window: usize,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            bootstrap_iterations: 1000,
            n_projections: 64,
            distance_bins: 20,
            value_bins: 20,
            wf_window_s: 2.0,
            wma_window: 14,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

impl NullSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Self { mean, sd, q05: quantile(&s, 0.05), q95: quantile(&s, 0.95) }
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticComparison {
    pub statistic: Statistic,
    pub observed: f64,
    pub p: f64,
    pub null_summary: NullSummary,
    pub null: Vec<f64>,
    pub template_hist: Histogram2D,
    pub simulated_hist: Histogram2D,
}

/// Peak-normalized per-distance-bin profile for both sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub edges: Vec<f64>,
    pub template: Vec<f64>,
    pub simulated: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub statistics: Vec<StatisticComparison>,
    pub whiff_count_vs_distance: DistanceProfile,
    pub mean_concentration_vs_distance: DistanceProfile,
    pub template_whiffs: usize,
    pub simulated_whiffs: usize,
    /// False when the two distance ranges do not intersect.
    pub supports_overlap: bool,
    pub bootstrap_iterations: usize,
    pub seed: u64,
}

impl ComparisonReport {
    pub fn get(&self, stat: Statistic) -> Option<&StatisticComparison> {
        self.statistics.iter().find(|s| s.statistic == stat)
    }

    pub fn count_above(&self, alpha: f64) -> usize {
        self.statistics.iter().filter(|s| s.p > alpha).count()
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn profile(table: &WhiffStatsTable, edges: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let nb = edges.len() - 1;
    let mut count = vec![0u64; nb];
    let mut sum = vec![0.0; nb];
    for r in &table.rows {
        if let Some(i) = locate(edges, r.distance) {
            count[i] += 1;
            sum[i] += r.wc;
        }
    }
    let peak = count.iter().copied().max().unwrap_or(0).max(1) as f64;
    let counts = count.iter().map(|&c| c as f64 / peak).collect();
    let means: Vec<f64> = count
        .iter()
        .zip(&sum)
        .map(|(&c, &s)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mpeak = means.iter().copied().fold(0.0, f64::max);
    let means = means.iter().map(|m| if mpeak > 0.0 { m / mpeak } else { 0.0 }).collect();
    (counts, means)
}

/// Compares all five whiff statistics of a simulation against a template.
pub fn compare(template: &WhiffStatsTable, simulated: &WhiffStatsTable, cfg: &ValidateConfig) -> Result<ComparisonReport> {
    if template.is_empty() || simulated.is_empty() {
        return Err(CosmosError::InsufficientData(format!(
            "comparison needs whiffs on both sides (template {}, simulated {})",
            template.len(),
            simulated.len()
        )));
    }
    let (ta, tb) = range(template.rows.iter().map(|r| r.distance));
    let (sa, sb) = range(simulated.rows.iter().map(|r| r.distance));
    let supports_overlap = ta <= sb && sa <= tb;
    if !supports_overlap {
        log::warn!("template distances [{ta}, {tb}] and simulated [{sa}, {sb}] do not overlap");
    }
    let d_edges = linear_edges(ta.min(sa), tb.max(sb), cfg.distance_bins);

    let mut statistics = Vec::with_capacity(Statistic::ALL.len());
    for (k, &stat) in Statistic::ALL.iter().enumerate() {
        let a = template.pairs(stat);
        let b = simulated.pairs(stat);
        let (lo, hi) = range(a.iter().chain(&b).map(|p| p[1]));
        let v_edges = linear_edges(lo, hi, cfg.value_bins);
        let boot = bootstrap_null(
            &a,
            &b,
            cfg.bootstrap_iterations,
            cfg.n_projections,
            crate::rng::derive_seed(cfg.seed, k as u64),
        )?;
        statistics.push(StatisticComparison {
            statistic: stat,
            observed: boot.observed,
            p: boot.p_value,
            null_summary: NullSummary::of(&boot.null),
            null: boot.null,
            template_hist: hist2d(&a, &d_edges, &v_edges)?,
            simulated_hist: hist2d(&b, &d_edges, &v_edges)?,
        });
    }
    let (tc, tm) = profile(template, &d_edges);
    let (sc, sm) = profile(simulated, &d_edges);
    Ok(ComparisonReport {
        statistics,
        whiff_count_vs_distance: DistanceProfile { edges: d_edges.clone(), template: tc, simulated: sc },
        mean_concentration_vs_distance: DistanceProfile { edges: d_edges, template: tm, simulated: sm },
        template_whiffs: template.len(),
        simulated_whiffs: simulated.len(),
        supports_overlap,
        bootstrap_iterations: cfg.bootstrap_iterations,
        seed: cfg.seed,
    })
}
