//! Spatially binned empirical whiff statistics.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::ingest::{TemplateDataset, WhiffEvent};

/// Square-binned grid anchored at `(x_min, y_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsGeometry {
    pub x_min: f64,
    pub y_min: f64,
    pub bin_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl StatsGeometry {
    pub fn covering(extent: [f64; 4], bin_size: f64) -> Result<Self> {
        if !(bin_size > 0.0) {
            return Err(CosmosError::Config("stats bin size must be positive".into()));
        }
        let [x0, x1, y0, y1] = extent;
        let count = |lo: f64, hi: f64| (((hi - lo) / bin_size).ceil() as usize).max(1);
        Ok(Self {
            x_min: x0,
            y_min: y0,
            bin_size,
            nx: count(x0, x1),
            ny: count(y0, y1),
        })
    }

    #[inline]
    pub fn bin(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.x_min) / self.bin_size;
        let fy = (y - self.y_min) / self.bin_size;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.nx && iy < self.ny).then_some(iy * self.nx + ix)
    }

    pub fn center(&self, idx: usize) -> (f64, f64) {
        let (ix, iy) = (idx % self.nx, idx / self.nx);
        (
            self.x_min + (ix as f64 + 0.5) * self.bin_size,
            self.y_min + (iy as f64 + 0.5) * self.bin_size,
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Empirical values observed in one bin. `concentrations[i]` and
/// `std_devs[i]` come from the same whiff and are sampled together.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsBin {
    pub durations_s: Vec<f64>,
    pub concentrations: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub intermittencies_s: Vec<f64>,
    /// Standard deviation of the bin's blank-state samples.
    pub blank_wsd: Option<f64>,
    #[serde(skip)]
    below_median: Vec<f64>,
}

impl StatsBin {
    pub fn new(
        durations_s: Vec<f64>,
        concentrations: Vec<f64>,
        std_devs: Vec<f64>,
        intermittencies_s: Vec<f64>,
        blank_wsd: Option<f64>,
    ) -> Self {
        Self { durations_s, concentrations, std_devs, intermittencies_s, blank_wsd, below_median: Vec::new() }
    }

    fn prepare(&mut self) {
        self.below_median.clear();
        if self.intermittencies_s.is_empty() {
            return;
        }
        let med = median(&self.intermittencies_s);
        self.below_median
            .extend(self.intermittencies_s.iter().copied().filter(|&v| v < med));
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Per-bin empirical whiff durations, (WC, WSD) pairs, intermittencies and
/// blank-state spread, plus pooled fallbacks for empty bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsGrid {
    pub geometry: StatsGeometry,
    pub bins: Vec<StatsBin>,
    /// Threshold the statistics were segmented with; also used to flag
    /// whiffs in simulated output.
    pub whiff_threshold: f64,
    pub mean_wd: f64,
    pub median_wi: f64,
    pub mean_wc: f64,
    pub mean_wsd: f64,
    pub blank_wsd: f64,
}

impl StatsGrid {
    /// Assembles a grid from already-binned values and computes the pooled
    /// fallbacks.
    pub fn from_bins(
        geometry: StatsGeometry,
        bins: Vec<StatsBin>,
        whiff_threshold: f64,
        global_blank_wsd: f64,
        fallback_wi: f64,
    ) -> Result<Self> {
        if bins.len() != geometry.len() {
            return Err(CosmosError::InvalidInput("bin count does not match geometry".into()));
        }
        let pool = |f: &dyn Fn(&StatsBin) -> &Vec<f64>| -> Vec<f64> {
            bins.iter().flat_map(|b| f(b).iter().copied()).collect()
        };
        let durations = pool(&|b| &b.durations_s);
        if durations.is_empty() {
            return Err(CosmosError::InsufficientData("no whiffs to build statistics from".into()));
        }
        let all_values = bins.iter().flat_map(|b| {
            b.durations_s
                .iter()
                .chain(&b.concentrations)
                .chain(&b.std_devs)
                .chain(&b.intermittencies_s)
                .chain(b.blank_wsd.iter())
        });
        if all_values.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CosmosError::InvalidInput("statistics must be finite and non-negative".into()));
        }
        if bins.iter().any(|b| b.concentrations.len() != b.std_devs.len()) {
            return Err(CosmosError::InvalidInput("WC and WSD lists must pair up".into()));
        }
        let wis = pool(&|b| &b.intermittencies_s);
        let mut grid = Self {
            geometry,
            mean_wd: mean(&durations),
            median_wi: if wis.is_empty() { fallback_wi } else { median(&wis) },
            mean_wc: mean(&pool(&|b| &b.concentrations)),
            mean_wsd: mean(&pool(&|b| &b.std_devs)),
            blank_wsd: global_blank_wsd,
            whiff_threshold,
            bins,
        };
        grid.prepare();
        Ok(grid)
    }

    /// Bins the template's whiffs by onset location. Blank-state samples are
    /// those below threshold and more than `transition_margin` samples away
    /// from any whiff sample.
    pub fn from_template(
        dataset: &TemplateDataset,
        events: &[WhiffEvent],
        bin_size: f64,
        transition_margin: usize,
    ) -> Result<Self> {
        let (x0, x1, y0, y1) = dataset.extent();
        let geometry = StatsGeometry::covering([x0, x1, y0, y1], bin_size)?;
        let mut bins = vec![StatsBin::default(); geometry.len()];
        for e in events {
            if let Some(b) = geometry.bin(e.onset_xy[0], e.onset_xy[1]) {
                let bin = &mut bins[b];
                bin.durations_s.push(e.duration_s);
                bin.concentrations.push(e.mean_conc);
                bin.std_devs.push(e.std_conc);
                if let Some(wi) = e.following_intermittency_s {
                    bin.intermittencies_s.push(wi);
                }
            }
        }

        // distance (in samples) to the nearest whiff sample, two sweeps
        let n = dataset.len();
        let mut near = vec![usize::MAX; n];
        let mut last = None;
        for i in 0..n {
            if dataset.whiff_flag[i] {
                last = Some(i);
            }
            if let Some(l) = last {
                near[i] = i - l;
            }
        }
        last = None;
        for i in (0..n).rev() {
            if dataset.whiff_flag[i] {
                last = Some(i);
            }
            if let Some(l) = last {
                near[i] = near[i].min(l - i);
            }
        }
        let mut blank_samples: Vec<Vec<f64>> = vec![Vec::new(); geometry.len()];
        let mut pooled = Vec::new();
        for i in 0..n {
            if near[i] > transition_margin {
                let c = dataset.records[i].c;
                pooled.push(c);
                if let Some(b) = geometry.bin(dataset.sx[i], dataset.sy[i]) {
                    blank_samples[b].push(c);
                }
            }
        }
        for (bin, samples) in bins.iter_mut().zip(&blank_samples) {
            if samples.len() >= 2 {
                bin.blank_wsd = Some(population_std(samples));
            }
        }
        Self::from_bins(
            geometry,
            bins,
            dataset.whiff_threshold,
            population_std(&pooled),
            dataset.duration_s(),
        )
    }

    fn prepare(&mut self) {
        self.bins.iter_mut().for_each(StatsBin::prepare);
    }

    #[inline]
    pub fn bin_at(&self, x: f64, y: f64) -> Option<&StatsBin> {
        self.geometry.bin(x, y).map(|i| &self.bins[i])
    }

    /// Whiff duration in seconds: a uniform pick from the bin, or the pooled
    /// mean for an empty bin.
    pub fn sample_duration_s<R: Rng + ?Sized>(&self, x: f64, y: f64, rng: &mut R) -> f64 {
        match self.bin_at(x, y) {
            Some(b) if !b.durations_s.is_empty() => b.durations_s[rng.random_range(0..b.durations_s.len())],
            _ => self.mean_wd,
        }
    }

    /// Coupled `(WC, WSD)` pick from the bin, or the pooled means.
    pub fn sample_whiff_target<R: Rng + ?Sized>(&self, x: f64, y: f64, rng: &mut R) -> (f64, f64) {
        match self.bin_at(x, y) {
            Some(b) if !b.concentrations.is_empty() => {
                let i = rng.random_range(0..b.concentrations.len());
                (b.concentrations[i], b.std_devs[i])
            }
            _ => (self.mean_wc, self.mean_wsd),
        }
    }

    /// Blank-state spread at a location.
    #[inline]
    pub fn blank_wsd_at(&self, x: f64, y: f64) -> f64 {
        self.bin_at(x, y).and_then(|b| b.blank_wsd).unwrap_or(self.blank_wsd)
    }

    /// Intermittency in seconds. With `restrict_low` the pick is limited to
    /// the bin's values strictly below its median (falling back to the whole
    /// list when none are). Empty bins give the pooled median.
    pub fn sample_intermittency_s<R: Rng + ?Sized>(
        &self,
        x: f64,
        y: f64,
        restrict_low: bool,
        rng: &mut R,
    ) -> f64 {
        match self.bin_at(x, y) {
            Some(b) if !b.intermittencies_s.is_empty() => {
                let pool = if restrict_low && !b.below_median.is_empty() {
                    &b.below_median
                } else {
                    &b.intermittencies_s
                };
                pool[rng.random_range(0..pool.len())]
            }
            _ => self.median_wi,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| CosmosError::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| CosmosError::io(path, e))?;
        let grid: Self = serde_json::from_reader(std::io::BufReader::new(f))?;
        Self::from_bins(grid.geometry, grid.bins, grid.whiff_threshold, grid.blank_wsd, grid.median_wi)
    }
}
