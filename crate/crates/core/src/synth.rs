//! Ground-truth templates made by the generator itself: a lawnmower scan
//! over the analytic plume field with a distance-dependent statistics prior.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::generator::{simulate, OdorTrace, SimConfig, StatsBin, StatsGeometry, StatsGrid, Trajectory};
use crate::ingest::RawRecord;
use crate::plume_fit::{GridGeometry, PlumeBounds, PlumeFieldModel, PlumeParams};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateSpec {
    /// Streakline-frame scan area `[x_min, x_max, y_min, y_max]`.
    pub extent: [f64; 4],
    /// Downwind spacing between crosswind passes.
    pub lane_spacing: f64,
    pub speed: f64,
    /// Constant wind along +x.
    pub wind_speed: f64,
    /// World coordinates of the source.
    pub source: [f64; 2],
    pub stats_bin_size: f64,
    /// Prior values drawn per bin for each statistic.
    pub samples_per_bin: usize,
    /// Cell size of the gridded analytic field.
    pub field_resolution: f64,
    pub whiff_threshold: f64,
}

impl Default for TemplateSpec {
    fn default() -> Self {
        Self {
            extent: [-5.0, 50.0, -25.0, 25.0],
            lane_spacing: 2.5,
            speed: 1.0,
            wind_speed: 1.0,
            source: [0.0, 0.0],
            stats_bin_size: 5.0,
            samples_per_bin: 12,
            field_resolution: 0.5,
            whiff_threshold: 4.5,
        }
    }
}

impl TemplateSpec {
    pub fn validate(&self) -> Result<()> {
        let [x0, x1, y0, y1] = self.extent;
        if !(x1 > x0 && y1 > y0) {
            return Err(CosmosError::Config("template extent is empty".into()));
        }
        if !(self.lane_spacing > 0.0 && self.speed > 0.0 && self.field_resolution > 0.0) {
            return Err(CosmosError::Config(
                "lane_spacing, speed and field_resolution must be positive".into(),
            ));
        }
        if !(self.stats_bin_size > 0.0) || self.samples_per_bin == 0 {
            return Err(CosmosError::Config("stats prior needs a positive bin size and samples".into()));
        }
        Ok(())
    }

    /// Default plume parameters used for synthetic templates.
    pub fn default_theta() -> PlumeParams {
        PlumeParams { amplitude: 0.02, x0: 0.0, y0: 0.0, sigma_y0: 1.5, d_y: 0.8, lambda: 0.05 }
    }
}

/// Boustrophedon scan: crosswind passes at `lane_spacing` downwind steps,
/// sampled at constant speed.
pub fn lawnmower(extent: [f64; 4], lane_spacing: f64, speed: f64, rows_per_second: f64) -> Trajectory {
    let [x0, x1, y0, y1] = extent;
    let mut vertices = vec![[x0, y0]];
    let mut x = x0;
    let mut up = true;
    loop {
        vertices.push([x, if up { y1 } else { y0 }]);
        up = !up;
        x += lane_spacing;
        if x > x1 + 1e-9 {
            break;
        }
        vertices.push([x, if up { y0 } else { y1 }]);
    }
    let step = speed / rows_per_second;
    let dt = 1.0 / rows_per_second;
    let mut traj = Trajectory::default();
    let mut carry = 0.0;
    let mut i = 0usize;
    for w in vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let mut s = carry;
        while s < len {
            let f = s / len;
            traj.t.push(i as f64 * dt);
            traj.x.push(a[0] + f * (b[0] - a[0]));
            traj.y.push(a[1] + f * (b[1] - a[1]));
            i += 1;
            s += step;
        }
        carry = s - len;
    }
    let last = vertices[vertices.len() - 1];
    traj.t.push(i as f64 * dt);
    traj.x.push(last[0]);
    traj.y.push(last[1]);
    traj
}

/// A statistics grid whose values depend on distance from the source:
/// whiffs shorten and gaps lengthen downwind.
pub fn synthetic_prior_stats(
    geometry: StatsGeometry,
    samples_per_bin: usize,
    whiff_threshold: f64,
    seed: u64,
) -> Result<StatsGrid> {
    let mut rng = seeded(seed);
    let mut bins = Vec::with_capacity(geometry.len());
    for idx in 0..geometry.len() {
        let (cx, cy) = geometry.center(idx);
        let d = cx.hypot(cy);
        let near = (-d / 30.0).exp();
        let wd = LogNormal::new((0.2 + 0.15 * near).ln(), 0.35).expect("valid lognormal");
        let gap = Exp::new(1.0 / (0.4 + 0.02 * d)).expect("valid rate");
        let mut b = StatsBin::default();
        for _ in 0..samples_per_bin {
            b.durations_s.push(wd.sample(&mut rng).clamp(0.05, 2.0));
            b.concentrations.push(rng.random_range(7.9..8.9) - 0.4 * (1.0 - near));
            b.std_devs.push(rng.random_range(0.3..0.6));
            let wi = if rng.random::<f64>() < 0.4 {
                rng.random_range(0.01..0.05)
            } else {
                0.05 + gap.sample(&mut rng)
            };
            b.intermittencies_s.push(wi);
        }
        b.blank_wsd = Some(0.1);
        bins.push(b);
    }
    StatsGrid::from_bins(geometry, bins, whiff_threshold, 0.1, 1.0)
}

/// Analytic field from `theta`, gridded over `extent` without smoothing.
pub fn analytic_field(theta: PlumeParams, extent: [f64; 4], resolution: f64) -> Result<PlumeFieldModel> {
    let nx = (((extent[1] - extent[0]) / resolution).round() as usize).max(2);
    let ny = (((extent[3] - extent[2]) / resolution).round() as usize).max(2);
    PlumeFieldModel::from_params(theta, GridGeometry::new(nx, ny, extent)?, 0.0)
}

#[derive(Debug, Clone)]
pub struct SyntheticTemplate {
    pub records: Vec<RawRecord>,
    pub trace: OdorTrace,
    pub field: PlumeFieldModel,
    pub stats: StatsGrid,
}

/// Runs the generator over a lawnmower scan of the analytic field. Records
/// are in world coordinates with the constant wind attached.
pub fn make_synthetic_template(
    theta: PlumeParams,
    sim: &SimConfig,
    spec: &TemplateSpec,
    seed: u64,
) -> Result<SyntheticTemplate> {
    spec.validate()?;
    if !PlumeBounds::default().contains(&theta) {
        return Err(CosmosError::InvalidInput(format!("theta {theta:?} outside the fit bounds")));
    }
    let field = analytic_field(theta, spec.extent, spec.field_resolution)?;
    let geometry = StatsGeometry::covering(spec.extent, spec.stats_bin_size)?;
    let stats = synthetic_prior_stats(
        geometry,
        spec.samples_per_bin,
        spec.whiff_threshold,
        derive_seed(seed, 1),
    )?;
    let traj = lawnmower(spec.extent, spec.lane_spacing, spec.speed, sim.rows_per_second);
    let cfg = SimConfig { seed, ..sim.clone() };
    let trace = simulate(&traj, &field, &stats, &cfg)?;
    let records = (0..trace.len())
        .map(|i| RawRecord {
            t: trace.t[i],
            px: trace.x[i] + spec.source[0],
            py: trace.y[i] + spec.source[1],
            u_wind: spec.wind_speed,
            v_wind: 0.0,
            c: trace.c[i],
        })
        .collect();
    Ok(SyntheticTemplate { records, trace, field, stats })
}

/// Writes records as a `t,px,py,u,v,c` template CSV.
pub fn write_template_csv<W: Write>(records: &[RawRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["t", "px", "py", "u", "v", "c"])?;
    for r in records {
        wtr.write_record(&[
            r.t.to_string(),
            r.px.to_string(),
            r.py.to_string(),
            r.u_wind.to_string(),
            r.v_wind.to_string(),
            r.c.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| CosmosError::io("<template>", e))?;
    Ok(())
}

pub fn save_template(records: &[RawRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| CosmosError::io(path, e))?;
    write_template_csv(records, std::io::BufWriter::new(f))
}
