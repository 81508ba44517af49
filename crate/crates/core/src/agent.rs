//! Cast-and-surge tracking agents driven online by the generator, plus
//! trajectory features and cluster-similarity metrics.

use std::collections::VecDeque;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::generator::{SimConfig, Simulator, StatsGrid};
use crate::plume_fit::{sigma_y, PlumeFieldModel};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Ground speed in m/s.
    pub speed: f64,
    pub surge_duration_s: f64,
    pub cast_base_amplitude: f64,
    /// Amplitude multiplier applied after each completed cast.
    pub cast_growth: f64,
    pub success_radius: f64,
    pub max_steps: usize,
    /// Used by single runs; batches draw their own starts.
    pub start_xy: [f64; 2],
    /// Unit vector the wind blows toward (streakline frame: +x).
    pub wind_direction: [f64; 2],
    /// Concentration at or above which the detector reports a whiff.
    pub detection_threshold: f64,
    /// Trailing samples averaged by the detector.
    pub detection_window: usize,
    /// Downwind range `[min, max]` for batch start positions.
    pub start_x_range: [f64; 2],
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            surge_duration_s: 0.5,
            cast_base_amplitude: 1.0,
            cast_growth: 1.2,
            success_radius: 1.0,
            max_steps: 36_000,
            start_xy: [20.0, 0.0],
            wind_direction: [1.0, 0.0],
            detection_threshold: 4.5,
            detection_window: 14,
            start_x_range: [10.0, 40.0],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) || !(self.success_radius > 0.0) || self.max_steps == 0 {
            return Err(CosmosError::Config(
                "agent speed, success_radius and max_steps must be positive".into(),
            ));
        }
        if !(self.surge_duration_s >= 0.0 && self.cast_base_amplitude > 0.0 && self.cast_growth >= 1.0) {
            return Err(CosmosError::Config("invalid surge/cast parameters".into()));
        }
        let n = self.wind_direction[0].hypot(self.wind_direction[1]);
        if !(n > 0.0) || !n.is_finite() {
            return Err(CosmosError::Config("wind_direction must be a non-zero vector".into()));
        }
        if self.detection_window == 0 {
            return Err(CosmosError::Config("detection_window must be >= 1".into()));
        }
        if !(self.start_x_range[1] >= self.start_x_range[0]) {
            return Err(CosmosError::Config("start_x_range must be ordered".into()));
        }
        Ok(())
    }

    fn wind_unit(&self) -> [f64; 2] {
        let n = self.wind_direction[0].hypot(self.wind_direction[1]);
        [self.wind_direction[0] / n, self.wind_direction[1] / n]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AgentMode {
    Surge,
    Cast,
    Done,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub position: [f64; 2],
    pub mode: AgentMode,
    pub surge_steps_remaining: u32,
    /// Crosswind coordinate the current cast sequence is centred on.
    pub cast_center: f64,
    pub cast_direction: f64,
    pub cast_amplitude: f64,
    pub steps: usize,
    pub success: bool,
}

impl AgentState {
    pub fn new(start: [f64; 2]) -> Self {
        Self {
            position: start,
            mode: AgentMode::Cast,
            surge_steps_remaining: 0,
            cast_center: f64::NAN,
            cast_direction: 1.0,
            cast_amplitude: 0.0,
            steps: 0,
            success: false,
        }
    }
}

/// Advances the agent by one step of length `speed * dt`. Success is checked
/// before moving, so a start inside the success radius ends at step 0.
pub fn cast_and_surge_step(
    state: &mut AgentState,
    whiff_now: bool,
    source: [f64; 2],
    cfg: &AgentConfig,
    dt: f64,
) -> AgentMode {
    if state.mode == AgentMode::Done {
        return AgentMode::Done;
    }
    let [px, py] = state.position;
    if (px - source[0]).hypot(py - source[1]) <= cfg.success_radius {
        state.success = true;
        state.mode = AgentMode::Done;
        return AgentMode::Done;
    }
    if state.steps >= cfg.max_steps {
        state.mode = AgentMode::Done;
        return AgentMode::Done;
    }
    let w = cfg.wind_unit();
    let cross = [-w[1], w[0]];
    let step = cfg.speed * dt;

    if whiff_now {
        state.mode = AgentMode::Surge;
        state.surge_steps_remaining = ((cfg.surge_duration_s / dt).round() as u32).max(1);
    }
    match state.mode {
        AgentMode::Surge => {
            state.position = [px - w[0] * step, py - w[1] * step];
            state.surge_steps_remaining -= 1;
            if state.surge_steps_remaining == 0 {
                state.mode = AgentMode::Cast;
                state.cast_center = f64::NAN;
            }
        }
        AgentMode::Cast => {
            let c = (px - source[0]) * cross[0] + (py - source[1]) * cross[1];
            if state.cast_center.is_nan() {
                state.cast_center = c;
                state.cast_amplitude = cfg.cast_base_amplitude;
                state.cast_direction = -state.cast_direction;
            }
            let target = state.cast_center + state.cast_direction * state.cast_amplitude;
            let remaining = (target - c) * state.cast_direction;
            let mv = step.min(remaining.max(0.0));
            let d = state.cast_direction * mv;
            state.position = [px + cross[0] * d, py + cross[1] * d];
            if remaining <= step {
                state.cast_direction = -state.cast_direction;
                state.cast_amplitude *= cfg.cast_growth;
            }
        }
        AgentMode::Done => unreachable!(),
    }
    state.steps += 1;
    state.mode
}

/// Causal whiff detector: trailing mean of the raw concentration against a
/// threshold.
#[derive(Debug, Clone)]
struct Detector {
    buf: VecDeque<f64>,
    sum: f64,
    window: usize,
    threshold: f64,
}

impl Detector {
    fn new(window: usize, threshold: f64) -> Self {
        Self { buf: VecDeque::with_capacity(window), sum: 0.0, window, threshold }
    }

    fn push(&mut self, c: f64) -> bool {
        if self.buf.len() == self.window {
            self.sum -= self.buf.pop_front().unwrap_or(0.0);
        }
        self.buf.push_back(c);
        self.sum += c;
        self.sum / self.buf.len() as f64 >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub start: [f64; 2],
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Raw generator concentration at each recorded position.
    pub c: Vec<f64>,
    pub detected: Vec<bool>,
    pub success: bool,
    pub steps: usize,
}

/// Runs one agent from `start`, querying the generator at its position
/// every step.
pub fn run_tracking(
    field: &PlumeFieldModel,
    stats: &StatsGrid,
    sim_cfg: &SimConfig,
    cfg: &AgentConfig,
    start: [f64; 2],
) -> Result<TrackingRun> {
    cfg.validate()?;
    let source = [field.params.x0, field.params.y0];
    let dt = sim_cfg.dt();
    let mut sim = Simulator::new(field, stats, sim_cfg)?;
    let mut det = Detector::new(cfg.detection_window, cfg.detection_threshold);
    let mut state = AgentState::new(start);
    let mut run = TrackingRun {
        start,
        t: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        c: Vec::new(),
        detected: Vec::new(),
        success: false,
        steps: 0,
    };
    loop {
        let [x, y] = state.position;
        let out = sim.step(x, y);
        let hit = det.push(out.concentration);
        run.t.push(state.steps as f64 * dt);
        run.x.push(x);
        run.y.push(y);
        run.c.push(out.concentration);
        run.detected.push(hit);
        if cast_and_surge_step(&mut state, hit, source, cfg, dt) == AgentMode::Done {
            break;
        }
    }
    run.success = state.success;
    run.steps = state.steps;
    Ok(run)
}

/// Start positions drawn uniformly over the downwind range and, at each
/// distance, within one plume width of the centreline.
pub fn draw_start<R: Rng + ?Sized>(field: &PlumeFieldModel, cfg: &AgentConfig, rng: &mut R) -> [f64; 2] {
    let p = &field.params;
    let [lo, hi] = cfg.start_x_range;
    let along = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let half = sigma_y(p.x0 + along, p);
    let across = rng.random_range(-half..=half);
    let w = cfg.wind_unit();
    [p.x0 + w[0] * along - w[1] * across, p.y0 + w[1] * along + w[0] * across]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingBatch {
    pub runs: Vec<TrackingRun>,
    pub seed: u64,
}

impl TrackingBatch {
    pub fn success_rate(&self) -> f64 {
        self.runs.iter().filter(|r| r.success).count() as f64 / self.runs.len().max(1) as f64
    }
}

/// Independent runs from seeded starts. Run `i` draws its start from
/// substream `(seed, i)` and drives the generator with `derive_seed(seed, i)`.
pub fn run_tracking_batch(
    field: &PlumeFieldModel,
    stats: &StatsGrid,
    sim_cfg: &SimConfig,
    cfg: &AgentConfig,
    n_starts: usize,
    seed: u64,
) -> Result<TrackingBatch> {
    if n_starts == 0 {
        return Err(CosmosError::InvalidInput("n_starts must be >= 1".into()));
    }
    cfg.validate()?;
    sim_cfg.validate()?;
    let runs = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let start = draw_start(field, cfg, &mut rng);
            let sc = SimConfig { seed: derive_seed(seed, i as u64), ..sim_cfg.clone() };
            run_tracking(field, stats, &sc, cfg, start)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrackingBatch { runs, seed })
}

pub const FEATURE_NAMES: [&str; 11] = [
    "v_x",
    "v_y",
    "speed",
    "acceleration",
    "crosswind_distance",
    "upwind_distance",
    "heading",
    "angular_velocity",
    "curvature",
    "path_length",
    "turn_rate",
];

pub const SUMMARY_NAMES: [&str; 10] = [
    "sum",
    "median",
    "mean",
    "length",
    "standard_deviation",
    "variance",
    "root_mean_square",
    "minimum",
    "maximum",
    "absolute_maximum",
];

const HEADING: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFeatures {
    /// One series per entry of [`FEATURE_NAMES`].
    pub series: Vec<Vec<f64>>,
    /// Ten statistics per feature, feature-major.
    pub summary: Vec<f64>,
}

/// `numpy.gradient`-style derivative: central inside, one-sided at the ends.
fn gradient(f: &[f64], t: &[f64]) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            (f[b] - f[a]) / (t[b] - t[a])
        })
        .collect()
}

fn unwrap_angles(theta: &[f64]) -> Vec<f64> {
    use std::f64::consts::{PI, TAU};
    let mut out = Vec::with_capacity(theta.len());
    let mut offset = 0.0;
    for (i, &a) in theta.iter().enumerate() {
        if i > 0 {
            let d = a - theta[i - 1];
            if d > PI {
                offset -= TAU * ((d + PI) / TAU).floor();
            } else if d < -PI {
                offset += TAU * ((-d + PI) / TAU).floor();
            }
        }
        out.push(a + offset);
    }
    out
}

/// The ten summary statistics of one series (population variance).
pub fn summarize(v: &[f64]) -> [f64; 10] {
    let n = v.len() as f64;
    let sum: f64 = v.iter().sum();
    let mean = sum / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    let median = if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) };
    [sum, median, mean, n, var.sqrt(), var, rms, min, max, min.abs().max(max.abs())]
}

fn summary_of(series: &[Vec<f64>]) -> Vec<f64> {
    series.iter().flat_map(|s| summarize(s)).collect()
}

pub fn extract_features(
    t: &[f64],
    x: &[f64],
    y: &[f64],
    source: [f64; 2],
    wind_direction: [f64; 2],
) -> Result<TrajectoryFeatures> {
    let n = t.len();
    if n < 3 || x.len() != n || y.len() != n {
        return Err(CosmosError::InvalidInput(format!(
            "feature extraction needs >= 3 aligned samples (got {n})"
        )));
    }
    let wn = wind_direction[0].hypot(wind_direction[1]);
    if !(wn > 0.0) {
        return Err(CosmosError::InvalidInput("wind_direction must be non-zero".into()));
    }
    let w = [wind_direction[0] / wn, wind_direction[1] / wn];
    let vx = gradient(x, t);
    let vy = gradient(y, t);
    let ax = gradient(&vx, t);
    let ay = gradient(&vy, t);
    let speed: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| a.hypot(*b)).collect();
    let accel = ax.iter().zip(&ay).map(|(a, b)| a.hypot(*b)).collect();
    let rel: Vec<[f64; 2]> = x.iter().zip(y).map(|(x, y)| [x - source[0], y - source[1]]).collect();
    let crosswind = rel.iter().map(|r| -w[1] * r[0] + w[0] * r[1]).collect();
    let upwind = rel.iter().map(|r| w[0] * r[0] + w[1] * r[1]).collect();
    let heading: Vec<f64> = vx.iter().zip(&vy).map(|(a, b)| b.atan2(*a)).collect();
    let omega = gradient(&unwrap_angles(&heading), t);
    let curvature = (0..n)
        .map(|i| {
            let s = speed[i];
            if s < 1e-9 {
                0.0
            } else {
                (vx[i] * ay[i] - vy[i] * ax[i]).abs() / (s * s * s)
            }
        })
        .collect();
    let mut path = Vec::with_capacity(n);
    let mut l = 0.0;
    path.push(0.0);
    for i in 1..n {
        l += (x[i] - x[i - 1]).hypot(y[i] - y[i - 1]);
        path.push(l);
    }
    let turn_rate = gradient(&heading, t);
    let series = vec![vx, vy, speed, accel, crosswind, upwind, heading, omega, curvature, path, turn_rate];
    let summary = summary_of(&series);
    Ok(TrajectoryFeatures { series, summary })
}

/// Heading mapped to `[-1, 1)` via `(theta mod 2 pi) / pi - 1`.
pub fn normalize_angle(theta: f64) -> f64 {
    theta.rem_euclid(std::f64::consts::TAU) / std::f64::consts::PI - 1.0
}

/// Scales every non-angular series by its pooled maximum absolute value,
/// maps headings into `[-1, 1)`, then summarizes each trajectory into one
/// 110-value row.
pub fn normalize_features(features: &[TrajectoryFeatures]) -> Vec<Vec<f64>> {
    let nf = FEATURE_NAMES.len();
    let mut scale = vec![0.0f64; nf];
    for f in features {
        for (k, s) in f.series.iter().enumerate() {
            for v in s {
                scale[k] = scale[k].max(v.abs());
            }
        }
    }
    features
        .iter()
        .map(|f| {
            let series: Vec<Vec<f64>> = f
                .series
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    if k == HEADING {
                        s.iter().map(|&v| normalize_angle(v)).collect()
                    } else if scale[k] > 0.0 {
                        s.iter().map(|v| v / scale[k]).collect()
                    } else {
                        s.clone()
                    }
                })
                .collect();
            summary_of(&series)
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn centroid(m: &[Vec<f64>]) -> Vec<f64> {
    let mut c = vec![0.0; m[0].len()];
    for row in m {
        for (ci, v) in c.iter_mut().zip(row) {
            *ci += v;
        }
    }
    c.iter_mut().for_each(|v| *v /= m.len() as f64);
    c
}

/// Silhouette score with batch labels and the centroid distance normalized
/// by the mean distance-to-centroid of the two batches.
pub fn cluster_similarity(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CosmosError::InsufficientData("each batch needs >= 2 rows".into()));
    }
    let dim = a[0].len();
    if a.iter().chain(b).any(|r| r.len() != dim) {
        return Err(CosmosError::InvalidInput("feature rows differ in length".into()));
    }
    let silhouette = |own: &[Vec<f64>], other: &[Vec<f64>]| -> f64 {
        own.par_iter()
            .enumerate()
            .map(|(i, p)| {
                let a_i = own
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| dist(p, q))
                    .sum::<f64>()
                    / (own.len() - 1) as f64;
                let b_i = other.iter().map(|q| dist(p, q)).sum::<f64>() / other.len() as f64;
                let m = a_i.max(b_i);
                if m > 0.0 {
                    (b_i - a_i) / m
                } else {
                    0.0
                }
            })
            .sum::<f64>()
    };
    let a_s = (silhouette(a, b) + silhouette(b, a)) / (a.len() + b.len()) as f64;
    let (ca, cb) = (centroid(a), centroid(b));
    let spread = |m: &[Vec<f64>], c: &[f64]| m.iter().map(|r| dist(r, c)).sum::<f64>() / m.len() as f64;
    let denom = 0.5 * (spread(a, &ca) + spread(b, &cb));
    let gap = dist(&ca, &cb);
    let d_norm = if denom > 0.0 { gap / denom } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
    Ok((a_s, d_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{StatsBin, StatsGeometry};
    use crate::plume_fit::GridGeometry;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand_distr::StandardNormal;

    const DT: f64 = 0.005;

    #[test]
    fn perpetual_whiff_surges_straight_upwind() {
        let cfg = AgentConfig::default();
        let mut s = AgentState::new([10.0, 0.5]);
        for _ in 0..1000 {
            cast_and_surge_step(&mut s, true, [0.0, 0.0], &cfg, DT);
            assert_eq!(s.position[1], 0.5);
        }
        assert_abs_diff_eq!(s.position[0], 5.0, epsilon = 1e-9);
    }

    #[test]
    fn casting_zigzags_with_growing_extremes() {
        let cfg = AgentConfig::default();
        let mut s = AgentState::new([10.0, 0.0]);
        let mut ys = Vec::new();
        for _ in 0..20_000 {
            cast_and_surge_step(&mut s, false, [0.0, 0.0], &cfg, DT);
            assert_eq!(s.position[0], 10.0);
            ys.push(s.position[1]);
        }
        let mut extremes = Vec::new();
        for w in ys.windows(3) {
            if (w[1] - w[0]) * (w[2] - w[1]) < 0.0 || (w[1] == w[2] && w[0] != w[1]) {
                extremes.push(w[1].abs());
            }
        }
        assert!(extremes.len() > 4);
        assert!(extremes.windows(2).all(|e| e[1] > e[0]), "{extremes:?}");
    }

    #[test]
    fn start_inside_radius_succeeds_immediately() {
        let cfg = AgentConfig::default();
        let mut s = AgentState::new([0.5, 0.0]);
        assert_eq!(cast_and_surge_step(&mut s, false, [0.0, 0.0], &cfg, DT), AgentMode::Done);
        assert!(s.success);
        assert_eq!(s.steps, 0);
    }

    fn stats() -> StatsGrid {
        let geometry = StatsGeometry::covering([-5.0, 50.0, -25.0, 25.0], 5.0).unwrap();
        let bin = StatsBin::new(vec![0.2, 0.3], vec![8.0, 8.5], vec![0.3, 0.4], vec![0.02, 0.3, 0.5], Some(0.1));
        StatsGrid::from_bins(geometry, vec![bin; geometry.len()], 4.5, 0.1, 0.3).unwrap()
    }

    fn field(a: f64) -> PlumeFieldModel {
        let theta = crate::plume_fit::PlumeParams { amplitude: a, x0: 0.0, y0: 0.0, sigma_y0: 1.5, d_y: 0.8, lambda: 0.05 };
        PlumeFieldModel::from_params(theta, GridGeometry::new(110, 100, [-5.0, 50.0, -25.0, 25.0]).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn batch_is_deterministic() {
        let cfg = AgentConfig { max_steps: 4000, ..Default::default() };
        let f = field(0.02);
        let a = run_tracking_batch(&f, &stats(), &SimConfig::default(), &cfg, 6, 3).unwrap();
        let b = run_tracking_batch(&f, &stats(), &SimConfig::default(), &cfg, 6, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn source_edge_start_succeeds() {
        let cfg = AgentConfig { start_x_range: [0.5, 0.5], ..Default::default() };
        let f = field(0.02);
        let batch = run_tracking_batch(&f, &stats(), &SimConfig::default(), &cfg, 1, 0).unwrap();
        assert!(batch.runs[0].success);
    }

    #[test]
    fn odorless_field_never_succeeds() {
        let cfg = AgentConfig { max_steps: 3000, ..Default::default() };
        let batch = run_tracking_batch(&field(0.0), &stats(), &SimConfig::default(), &cfg, 8, 1).unwrap();
        assert_eq!(batch.success_rate(), 0.0);
    }

    #[test]
    fn straight_line_has_no_turning() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let x: Vec<f64> = t.iter().map(|t| 1.0 + 2.0 * t).collect();
        let y: Vec<f64> = t.iter().map(|t| -0.5 * t).collect();
        let f = extract_features(&t, &x, &y, [0.0, 0.0], [1.0, 0.0]).unwrap();
        for k in [7, 8, 10] {
            assert!(f.series[k].iter().all(|v| v.abs() < 1e-9), "{}", FEATURE_NAMES[k]);
        }
        assert_eq!(f.summary.len(), 110);
        for k in 0..11 {
            assert_eq!(f.summary[k * 10 + 3], 50.0);
        }
    }

    #[test]
    fn circle_curvature_is_inverse_radius() {
        let r = 3.0;
        let t: Vec<f64> = (0..2000).map(|i| i as f64 * 0.005).collect();
        let x: Vec<f64> = t.iter().map(|t| r * t.cos()).collect();
        let y: Vec<f64> = t.iter().map(|t| r * t.sin()).collect();
        let f = extract_features(&t, &x, &y, [0.0, 0.0], [1.0, 0.0]).unwrap();
        for k in 2..1998 {
            assert!((f.series[8][k] - 1.0 / r).abs() < 1e-3);
            assert!((f.series[7][k] - 1.0).abs() < 1e-3);
        }
        assert!(extract_features(&t[..2], &x[..2], &y[..2], [0.0, 0.0], [1.0, 0.0]).is_err());
    }

    #[test]
    fn angle_normalization_cases() {
        assert_eq!(normalize_angle(std::f64::consts::PI), 0.0);
        assert_eq!(normalize_angle(0.0), -1.0);
        assert_abs_diff_eq!(normalize_angle(-std::f64::consts::FRAC_PI_2), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn max_abs_scaling() {
        let mk = |v: f64| TrajectoryFeatures { series: vec![vec![v, -v / 2.0]; 11], summary: vec![] };
        let rows = normalize_features(&[mk(4.0), mk(2.0)]);
        // maximum of v_x over both trajectories is 4
        assert_eq!(rows[0][8], 1.0);
        assert_eq!(rows[1][8], 0.5);
        let zero = TrajectoryFeatures { series: vec![vec![0.0, 0.0]; 11], summary: vec![] };
        let rows = normalize_features(&[zero]);
        for (i, v) in rows[0][..10].iter().enumerate() {
            assert_eq!(*v, if i == 3 { 2.0 } else { 0.0 });
        }
    }

    fn gaussian_rows(n: usize, dim: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect())
            .collect()
    }

    #[test]
    fn similarity_cases() {
        let a = gaussian_rows(30, 5, 0.0, 1);
        let (_, d) = cluster_similarity(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        let far = gaussian_rows(30, 5, 100.0, 2);
        let (s, _) = cluster_similarity(&a, &far).unwrap();
        assert!(s > 0.95);
        let b = gaussian_rows(150, 110, 0.0, 3);
        let c = gaussian_rows(150, 110, 0.0, 4);
        let (s, d) = cluster_similarity(&b, &c).unwrap();
        assert!(s.abs() < 0.1 && d < 0.3, "{s} {d}");
        assert!(cluster_similarity(&a[..1], &b).is_err());
    }

    proptest! {
        #[test]
        fn kinematics_translation_invariant(dx in -50.0f64..50.0, dy in -50.0f64..50.0, w in 0.1f64..2.0) {
            let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
            let x: Vec<f64> = t.iter().map(|t| (w * t).sin() * 2.0 + t).collect();
            let y: Vec<f64> = t.iter().map(|t| (w * t).cos()).collect();
            let xs: Vec<f64> = x.iter().map(|v| v + dx).collect();
            let ys: Vec<f64> = y.iter().map(|v| v + dy).collect();
            let a = extract_features(&t, &x, &y, [0.0, 0.0], [1.0, 0.0]).unwrap();
            let b = extract_features(&t, &xs, &ys, [0.0, 0.0], [1.0, 0.0]).unwrap();
            for k in [2usize, 7, 8] {
                for (p, q) in a.series[k].iter().zip(&b.series[k]) {
                    prop_assert!((p - q).abs() < 1e-6 * (1.0 + p.abs()));
                }
            }
        }

        #[test]
        fn normalized_rows_are_bounded(v in prop::collection::vec(-100.0f64..100.0, 3..30)) {
            let f = TrajectoryFeatures { series: vec![v.clone(); 11], summary: vec![] };
            let rows = normalize_features(&[f]);
            // min, max, absolute max, mean and median of every feature
            for k in 0..11 {
                for s in [1usize, 2, 7, 8, 9] {
                    prop_assert!(rows[0][k * 10 + s].abs() <= 1.0 + 1e-12);
                }
            }
        }

        #[test]
        fn similarity_symmetric(seed in 0u64..1000) {
            let a = gaussian_rows(8, 3, 0.0, seed);
            let b = gaussian_rows(10, 3, 0.5, seed + 1);
            let (s1, d1) = cluster_similarity(&a, &b).unwrap();
            let (s2, d2) = cluster_similarity(&b, &a).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((d1 - d2).abs() < 1e-12);
        }
    }
}
