//! Spatial whiff-onset probability field.
//!
//! Onsets and observations are binned on a regular grid, a Gaussian plume
//! is fitted to the binned counts by binomial maximum likelihood, and the
//! fitted model is evaluated on the grid and smoothed with a Gaussian
//! kernel to give the field the generator samples from.

pub mod lbfgsb;
mod model;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::filters::gaussian_filter_2d;
use crate::ingest::{TemplateDataset, WhiffEvent};

pub use model::{plume_probability, ramp, sigma_y, PlumeBounds, PlumeParams, PROB_EPS};

/// Regular grid over `extent = [x_min, x_max, y_min, y_max]`. Cell values
/// are stored row-major with x fastest: `values[iy * nx + ix]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub nx: usize,
    pub ny: usize,
    pub extent: [f64; 4],
}

impl GridGeometry {
    pub fn new(nx: usize, ny: usize, extent: [f64; 4]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(CosmosError::Config(format!("grid needs at least 2x2 bins, got {nx}x{ny}")));
        }
        let [x0, x1, y0, y1] = extent;
        if !(x1 > x0 && y1 > y0) || extent.iter().any(|v| !v.is_finite()) {
            return Err(CosmosError::Config(format!("degenerate grid extent {extent:?}")));
        }
        Ok(Self { nx, ny, extent })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.extent[1] - self.extent[0]) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.extent[3] - self.extent[2]) / self.ny as f64
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, x1, y0, y1] = self.extent;
        x >= x0 && x <= x1 && y >= y0 && y <= y1
    }

    /// Bin indices `(ix, iy)`; the upper edges belong to the last bin.
    pub fn bin(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !self.contains(x, y) {
            return None;
        }
        let ix = (((x - self.extent[0]) / self.dx()) as usize).min(self.nx - 1);
        let iy = (((y - self.extent[2]) / self.dy()) as usize).min(self.ny - 1);
        Some((ix, iy))
    }

    pub fn center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.extent[0] + (ix as f64 + 0.5) * self.dx(),
            self.extent[2] + (iy as f64 + 0.5) * self.dy(),
        )
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }
}

/// Binned onset counts `k`, observation counts `n` and `p_tilde = k / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityGrid {
    pub geometry: GridGeometry,
    pub k: Vec<u64>,
    pub n: Vec<u64>,
    pub p_tilde: Vec<f64>,
    pub out_of_extent: usize,
}

impl ProbabilityGrid {
    /// Builds a grid directly from counts.
    pub fn from_counts(geometry: GridGeometry, k: Vec<u64>, n: Vec<u64>) -> Result<Self> {
        if k.len() != geometry.len() || n.len() != geometry.len() {
            return Err(CosmosError::InvalidInput("count arrays do not match grid".into()));
        }
        if k.iter().zip(&n).any(|(a, b)| a > b) {
            return Err(CosmosError::InvalidInput("onset count exceeds observations".into()));
        }
        let p_tilde = k
            .iter()
            .zip(&n)
            .map(|(&k, &n)| if n > 0 { k as f64 / n as f64 } else { 0.0 })
            .collect();
        Ok(Self { geometry, k, n, p_tilde, out_of_extent: 0 })
    }

    pub fn total_observations(&self) -> u64 {
        self.n.iter().sum()
    }
}

/// Every record increments `n` of its bin, every onset increments `k`.
/// Records outside the extent are tallied in `out_of_extent`.
pub fn bin_onsets(
    dataset: &TemplateDataset,
    events: &[WhiffEvent],
    geometry: GridGeometry,
) -> Result<ProbabilityGrid> {
    let geometry = GridGeometry::new(geometry.nx, geometry.ny, geometry.extent)?;
    let mut k = vec![0u64; geometry.len()];
    let mut n = vec![0u64; geometry.len()];
    let mut out = 0usize;
    for i in 0..dataset.len() {
        match geometry.bin(dataset.sx[i], dataset.sy[i]) {
            Some((ix, iy)) => n[geometry.index(ix, iy)] += 1,
            None => out += 1,
        }
    }
    for e in events {
        if let Some((ix, iy)) = geometry.bin(e.onset_xy[0], e.onset_xy[1]) {
            k[geometry.index(ix, iy)] += 1;
        }
    }
    let mut grid = ProbabilityGrid::from_counts(geometry, k, n)?;
    grid.out_of_extent = out;
    Ok(grid)
}

/// Non-empty bins flattened for likelihood evaluation.
struct Observations {
    x: Vec<f64>,
    y: Vec<f64>,
    k: Vec<f64>,
    n: Vec<f64>,
}

impl Observations {
    fn new(grid: &ProbabilityGrid) -> Self {
        let g = &grid.geometry;
        let mut obs = Observations { x: vec![], y: vec![], k: vec![], n: vec![] };
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                let idx = g.index(ix, iy);
                if grid.n[idx] > 0 {
                    let (x, y) = g.center(ix, iy);
                    obs.x.push(x);
                    obs.y.push(y);
                    obs.k.push(grid.k[idx] as f64);
                    obs.n.push(grid.n[idx] as f64);
                }
            }
        }
        obs
    }

    fn nll(&self, params: &PlumeParams) -> f64 {
        let mut total = 0.0;
        for i in 0..self.x.len() {
            let p = plume_probability(self.x[i], self.y[i], params).clamp(PROB_EPS, 1.0 - PROB_EPS);
            total -= self.k[i] * p.ln() + (self.n[i] - self.k[i]) * (1.0 - p).ln();
        }
        total
    }
}

/// Binomial negative log-likelihood of the grid counts under `params`,
/// summed over bins with observations. Probabilities are clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn negative_log_likelihood(params: &PlumeParams, grid: &ProbabilityGrid) -> f64 {
    Observations::new(grid).nll(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub params: PlumeParams,
    pub nll: f64,
    pub nll_init: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration budget ran out; `params` is then the best
    /// point reached.
    pub converged: bool,
}

/// The default optimizer start: `A = max(p_tilde)`, `sigma_y0 = 1`,
/// `d_y = 1`, `lambda = 0.1`, source at the origin; any value outside
/// its bounds is replaced by the bound midpoint.
pub fn default_init(grid: &ProbabilityGrid, bounds: &PlumeBounds) -> PlumeParams {
    let a = grid.p_tilde.iter().cloned().fold(0.0, f64::max);
    let fix = |v: f64, (lo, hi): (f64, f64)| if v >= lo && v <= hi { v } else { 0.5 * (lo + hi) };
    PlumeParams {
        amplitude: fix(a, bounds.amplitude),
        x0: 0.0,
        y0: 0.0,
        sigma_y0: fix(1.0, bounds.sigma_y0),
        d_y: fix(1.0, bounds.d_y),
        lambda: fix(0.1, bounds.lambda),
    }
}

/// Maximum-likelihood plume fit with the source held at `(init.x0, init.y0)`.
/// The four free parameters are optimized in bound-normalized coordinates.
pub fn fit_plume(
    grid: &ProbabilityGrid,
    bounds: &PlumeBounds,
    init: &PlumeParams,
    max_iter: usize,
) -> Result<FitOutcome> {
    if grid.n.iter().all(|&n| n == 0) {
        return Err(CosmosError::InsufficientData("every grid bin is empty".into()));
    }
    let obs = Observations::new(grid);
    let (lo, hi) = bounds.as_arrays();
    let to_params = |u: &[f64]| {
        let v: Vec<f64> = (0..4).map(|i| lo[i] + u[i] * (hi[i] - lo[i])).collect();
        PlumeParams {
            amplitude: v[0],
            x0: init.x0,
            y0: init.y0,
            sigma_y0: v[1],
            d_y: v[2],
            lambda: v[3],
        }
    };
    let start = [init.amplitude, init.sigma_y0, init.d_y, init.lambda];
    let u0: Vec<f64> = (0..4)
        .map(|i| {
            let w = hi[i] - lo[i];
            if w > 0.0 {
                ((start[i] - lo[i]) / w).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let objective = |u: &[f64]| obs.nll(&to_params(u));
    let nll_init = objective(&u0);
    let opts = lbfgsb::LbfgsbOptions { max_iter, ..Default::default() };
    let res = lbfgsb::minimize(&objective, &u0, &[0.0; 4], &[1.0; 4], &opts);
    if !res.converged {
        log::warn!("plume fit stopped after {} iterations without converging", res.iterations);
    }
    let moved = res.iterations > 0 && res.f < nll_init;
    let (params, nll) = if moved {
        (to_params(&res.x), res.f)
    } else if bounds.contains(init) {
        // the start is returned bit-exact when no step improved on it
        (*init, nll_init)
    } else {
        (to_params(&u0), nll_init)
    };
    Ok(FitOutcome {
        params,
        nll,
        nll_init,
        iterations: res.iterations,
        evaluations: res.evaluations,
        converged: res.converged,
    })
}

/// Gaussian smoothing with reflective boundaries, clipped to `[0, 1]`.
pub fn smooth_field(values: &[f64], geometry: &GridGeometry, sigma_bins: f64) -> Result<Vec<f64>> {
    if !(sigma_bins >= 0.0) {
        return Err(CosmosError::Config(format!("smoothing sigma {sigma_bins} must be >= 0")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CosmosError::InvalidInput("field contains non-finite values".into()));
    }
    Ok(gaussian_filter_2d(values, geometry.nx, geometry.ny, sigma_bins)
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect())
}

/// Fitted parameters plus the smoothed onset-probability field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlumeFieldModel {
    pub params: PlumeParams,
    pub bounds: PlumeBounds,
    pub nll: f64,
    pub converged: bool,
    pub geometry: GridGeometry,
    pub smoothing_sigma: f64,
    /// Row-major, x fastest.
    pub field: Vec<f64>,
}

impl PlumeFieldModel {
    /// Evaluates the plume model at the bin centers and smooths it.
    pub fn from_params(
        params: PlumeParams,
        geometry: GridGeometry,
        smoothing_sigma: f64,
    ) -> Result<Self> {
        let mut raw = vec![0.0; geometry.len()];
        for iy in 0..geometry.ny {
            for ix in 0..geometry.nx {
                let (x, y) = geometry.center(ix, iy);
                raw[geometry.index(ix, iy)] = plume_probability(x, y, &params);
            }
        }
        let field = smooth_field(&raw, &geometry, smoothing_sigma)?;
        Ok(Self {
            params,
            bounds: PlumeBounds::default(),
            nll: f64::NAN,
            converged: true,
            geometry,
            smoothing_sigma,
            field,
        })
    }

    /// A spatially constant field, mostly for tests and benchmarks.
    pub fn uniform(value: f64, geometry: GridGeometry) -> Self {
        Self {
            params: PlumeParams { amplitude: value, ..Default::default() },
            bounds: PlumeBounds::default(),
            nll: f64::NAN,
            converged: true,
            geometry,
            smoothing_sigma: 0.0,
            field: vec![value.clamp(0.0, 1.0); geometry.len()],
        }
    }

    /// Bilinear interpolation between bin centers. Points outside the extent
    /// give 0; between the extent edge and the outermost centers the edge
    /// value is held.
    #[inline]
    pub fn query(&self, x: f64, y: f64) -> f64 {
        let g = &self.geometry;
        if !g.contains(x, y) {
            return 0.0;
        }
        let fx = ((x - g.extent[0]) / g.dx() - 0.5).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((y - g.extent[2]) / g.dy() - 0.5).clamp(0.0, (g.ny - 1) as f64);
        let ix = (fx as usize).min(g.nx - 2);
        let iy = (fy as usize).min(g.ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v00 = self.field[g.index(ix, iy)];
        let v10 = self.field[g.index(ix + 1, iy)];
        let v01 = self.field[g.index(ix, iy + 1)];
        let v11 = self.field[g.index(ix + 1, iy + 1)];
        let lower = v00 + tx * (v10 - v00);
        let upper = v01 + tx * (v11 - v01);
        lower + ty * (upper - lower)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| CosmosError::io(path, e))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| CosmosError::io(path, e))?;
        let model: Self = serde_json::from_reader(std::io::BufReader::new(f))?;
        if model.field.len() != model.geometry.len() {
            return Err(CosmosError::Schema("field length does not match grid".into()));
        }
        Ok(model)
    }
}

/// Alias kept for the query operation name.
pub fn query_field(model: &PlumeFieldModel, x: f64, y: f64) -> f64 {
    model.query(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub nx: usize,
    pub ny: usize,
    /// `[x_min, x_max, y_min, y_max]`; the template bounding box when unset.
    pub extent: Option<[f64; 4]>,
    pub smoothing_sigma: f64,
    pub max_iter: usize,
    pub bounds: PlumeBounds,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            nx: 50,
            ny: 50,
            extent: None,
            smoothing_sigma: 1.0,
            max_iter: 500,
            bounds: PlumeBounds::default(),
        }
    }
}

/// Bins a template, fits the plume and builds the smoothed field.
pub fn fit_template(
    dataset: &TemplateDataset,
    events: &[WhiffEvent],
    cfg: &FitConfig,
) -> Result<(ProbabilityGrid, FitOutcome, PlumeFieldModel)> {
    let extent = match cfg.extent {
        Some(e) => e,
        None => {
            let (x0, x1, y0, y1) = dataset.extent();
            [x0, x1, y0, y1]
        }
    };
    let geometry = GridGeometry::new(cfg.nx, cfg.ny, extent)?;
    let grid = bin_onsets(dataset, events, geometry)?;
    let init = default_init(&grid, &cfg.bounds);
    let fit = fit_plume(&grid, &cfg.bounds, &init, cfg.max_iter)?;
    let mut model = PlumeFieldModel::from_params(fit.params, geometry, cfg.smoothing_sigma)?;
    model.bounds = cfg.bounds;
    model.nll = fit.nll;
    model.converged = fit.converged;
    Ok((grid, fit, model))
}
