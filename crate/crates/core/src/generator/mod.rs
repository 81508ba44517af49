//! The stochastic whiff/blank state machine.
//!
//! Each step the simulator either counts down an active whiff, counts down
//! the blank gap that follows it, or (once the gap has expired) asks the
//! spatial field whether a new whiff starts here. A logit-space AR(2) chain
//! pulls the concentration toward the current target (the whiff's WC, or
//! the baseline during blanks) with WSD-scaled noise. The finished trace is
//! smoothed with a centered rolling mean followed by a Gaussian filter.

mod concentration;
mod stats;

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};
use crate::filters::{centered_rolling_mean, gaussian_filter_1d};
use crate::plume_fit::PlumeFieldModel;
use crate::rng::{seeded, SimRng};

pub use concentration::{
    ar_characteristic_roots, ar_is_stationary, distance_noise_scale, inv_logit, logit,
    logit_noise_sigma, ArHistory, LOGIT_EPS,
};
pub use stats::{StatsBin, StatsGeometry, StatsGrid};

/// Simulator hyper-parameters. Field names follow the published parameter
/// table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rows_per_second: f64,
    pub density_scaler: f64,
    /// `alpha` in the onset posterior.
    pub whiff_transition_prob: f64,
    pub base_odor_level: f64,
    /// Intermittencies below this many seconds count as "low".
    pub low_threshold: f64,
    pub ar1: f64,
    pub ar2: f64,
    /// Steps without a whiff after which the memory factor gets its 1.5 boost.
    pub lookback_history: usize,
    pub history_intermittency: usize,
    pub window_size: usize,
    /// Final Gaussian smoothing width in samples.
    pub sigma: f64,
    pub c_min: f64,
    pub c_max: f64,
    /// Steps over which recent onsets are counted.
    pub whiff_count_window: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rows_per_second: 200.0,
            density_scaler: 1.0,
            whiff_transition_prob: 0.85,
            base_odor_level: 0.6,
            low_threshold: 0.05,
            ar1: 0.85,
            ar2: -0.17,
            lookback_history: 50,
            history_intermittency: 7,
            window_size: 14,
            sigma: 0.8,
            c_min: 0.0,
            c_max: 10.0,
            whiff_count_window: 20,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CosmosError::Config(m));
        if !(self.rows_per_second > 0.0) {
            return fail("rows_per_second must be positive".into());
        }
        if !(self.whiff_transition_prob > 0.0 && self.whiff_transition_prob <= 1.0) {
            return fail("whiff_transition_prob must lie in (0, 1]".into());
        }
        if !(self.density_scaler >= 0.0) {
            return fail("density_scaler must be non-negative".into());
        }
        if !(self.c_min < self.c_max) {
            return fail("c_min must be below c_max".into());
        }
        if !(self.base_odor_level > self.c_min && self.base_odor_level < self.c_max) {
            return fail("base_odor_level must lie inside (c_min, c_max)".into());
        }
        if !ar_is_stationary(self.ar1, self.ar2) {
            return fail(format!(
                "AR(2) coefficients ar1={} ar2={} are not stationary",
                self.ar1, self.ar2
            ));
        }
        if self.history_intermittency == 0 || self.whiff_count_window == 0 {
            return fail("history_intermittency and whiff_count_window must be >= 1".into());
        }
        if self.window_size == 0 {
            return fail("window_size must be >= 1".into());
        }
        if !(self.sigma >= 0.0) {
            return fail("sigma must be >= 0".into());
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rows_per_second
    }

    fn seconds_to_steps(&self, s: f64) -> u32 {
        ((s * self.rows_per_second).round() as u32).max(1)
    }
}

/// `(1 + N_W) * (1.5 if t_W > lookback else 1.0)`.
#[inline]
pub fn memory_factor(recent_onsets: usize, steps_since_whiff: u64, lookback: usize) -> f64 {
    let boost = if steps_since_whiff > lookback as u64 { 1.5 } else { 1.0 };
    (1.0 + recent_onsets as f64) * boost
}

/// `clamp(alpha * density_scaler * field * H, 0, 1)`.
#[inline]
pub fn onset_probability(field_value: f64, memory: f64, cfg: &SimConfig) -> f64 {
    (cfg.whiff_transition_prob * cfg.density_scaler * field_value * memory).clamp(0.0, 1.0)
}

/// One uniform draw; onset iff `u < p`.
#[inline]
pub fn decide_onset<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Whiff,
    Blank,
}

/// Fixed-length window of boolean flags with a running count.
#[derive(Debug, Clone)]
struct FlagWindow {
    buf: VecDeque<bool>,
    cap: usize,
    count: usize,
}

impl FlagWindow {
    fn new(cap: usize) -> Self {
        Self { buf: VecDeque::with_capacity(cap), cap, count: 0 }
    }

    fn push(&mut self, v: bool) {
        if self.buf.len() == self.cap && self.buf.pop_front() == Some(true) {
            self.count -= 1;
        }
        self.buf.push_back(v);
        self.count += v as usize;
    }
}

/// Evolving generator state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub mode: Mode,
    pub whiff_steps_remaining: u32,
    pub intermittency_steps_remaining: u32,
    pub target_conc: f64,
    pub target_wsd: f64,
    pub history: ArHistory,
    recent_onsets: FlagWindow,
    pub steps_since_last_whiff: u64,
    recent_intermittencies: VecDeque<f64>,
    pub rng: SimRng,
}

impl SimState {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            mode: Mode::Blank,
            whiff_steps_remaining: 0,
            intermittency_steps_remaining: 0,
            target_conc: cfg.base_odor_level,
            target_wsd: 0.0,
            history: ArHistory::at(logit(cfg.base_odor_level, cfg.c_min, cfg.c_max)),
            recent_onsets: FlagWindow::new(cfg.whiff_count_window),
            steps_since_last_whiff: u64::MAX / 2,
            recent_intermittencies: VecDeque::with_capacity(cfg.history_intermittency),
            rng: seeded(cfg.seed),
        }
    }

    pub fn recent_onset_count(&self) -> usize {
        self.recent_onsets.count
    }

    pub fn memory_factor(&self, cfg: &SimConfig) -> f64 {
        memory_factor(self.recent_onsets.count, self.steps_since_last_whiff, cfg.lookback_history)
    }

    pub fn recent_intermittencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.recent_intermittencies.iter().copied()
    }

    /// Seeds the intermittency memory, oldest first.
    pub fn set_recent_intermittencies(&mut self, values: &[f64], cfg: &SimConfig) {
        self.recent_intermittencies.clear();
        for &v in values {
            self.remember_intermittency(v, cfg);
        }
    }

    fn remember_intermittency(&mut self, v: f64, cfg: &SimConfig) {
        if self.recent_intermittencies.len() == cfg.history_intermittency {
            self.recent_intermittencies.pop_front();
        }
        self.recent_intermittencies.push_back(v);
    }

    /// True when more than half of the intermittency memory is below
    /// `low_threshold`.
    pub fn bursting(&self, cfg: &SimConfig) -> bool {
        let low = self
            .recent_intermittencies
            .iter()
            .filter(|&&v| v < cfg.low_threshold)
            .count();
        2 * low > cfg.history_intermittency
    }
}

/// Draws the next intermittency (seconds) and records it in the memory.
pub fn sample_intermittency(
    stats: &StatsGrid,
    x: f64,
    y: f64,
    state: &mut SimState,
    cfg: &SimConfig,
) -> f64 {
    let restrict = state.bursting(cfg);
    let wi = stats.sample_intermittency_s(x, y, restrict, &mut state.rng);
    state.remember_intermittency(wi, cfg);
    wi
}

/// Whiff duration in steps (at least one).
pub fn sample_duration<R: Rng + ?Sized>(
    stats: &StatsGrid,
    x: f64,
    y: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> u32 {
    cfg.seconds_to_steps(stats.sample_duration_s(x, y, rng))
}

/// Target `(concentration, spread)` for a mode at a location. Whiff targets
/// are drawn; blank targets are the baseline with the bin's blank spread.
pub fn sample_concentration_target<R: Rng + ?Sized>(
    stats: &StatsGrid,
    x: f64,
    y: f64,
    mode: Mode,
    cfg: &SimConfig,
    rng: &mut R,
) -> (f64, f64) {
    match mode {
        Mode::Whiff => stats.sample_whiff_target(x, y, rng),
        Mode::Blank => (cfg.base_odor_level, stats.blank_wsd_at(x, y)),
    }
}

/// Output of one simulator step (before smoothing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub concentration: f64,
    pub mode: Mode,
    pub onset: bool,
    /// Field value when an onset decision was made this step.
    pub field_value: Option<f64>,
}

/// Streaming simulator; the caller supplies one streakline-frame position
/// per step.
pub struct Simulator<'a> {
    field: &'a PlumeFieldModel,
    stats: &'a StatsGrid,
    cfg: SimConfig,
    state: SimState,
}

impl<'a> Simulator<'a> {
    pub fn new(field: &'a PlumeFieldModel, stats: &'a StatsGrid, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { field, stats, cfg: cfg.clone(), state: SimState::new(cfg) })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn step(&mut self, x: f64, y: f64) -> StepOutput {
        let cfg = &self.cfg;
        let st = &mut self.state;
        let mut onset = false;
        let mut field_value = None;

        if st.mode == Mode::Blank {
            if st.intermittency_steps_remaining > 0 {
                st.intermittency_steps_remaining -= 1;
            } else {
                let fv = self.field.query(x, y);
                field_value = Some(fv);
                let p = onset_probability(fv, st.memory_factor(cfg), cfg);
                if decide_onset(p, &mut st.rng) {
                    onset = true;
                    st.mode = Mode::Whiff;
                    st.whiff_steps_remaining = sample_duration(self.stats, x, y, cfg, &mut st.rng);
                    let (wc, wsd) = self.stats.sample_whiff_target(x, y, &mut st.rng);
                    st.target_conc = wc;
                    st.target_wsd = wsd;
                }
            }
        }

        let (c_obs, wsd) = match st.mode {
            Mode::Whiff => (st.target_conc, st.target_wsd),
            Mode::Blank => (cfg.base_odor_level, self.stats.blank_wsd_at(x, y)),
        };
        let z_obs = logit(c_obs, cfg.c_min, cfg.c_max);
        let sigma_noise = logit_noise_sigma(c_obs, wsd, cfg.c_min, cfg.c_max);
        let distance = (x - self.field.params.x0).hypot(y - self.field.params.y0);
        let xi: f64 = st.rng.sample(StandardNormal);
        let noise = distance_noise_scale(sigma_noise, distance) * xi;
        let z = st.history.advance(z_obs, cfg.ar1, cfg.ar2, noise);
        let concentration = inv_logit(z, cfg.c_min, cfg.c_max);
        let mode = st.mode;

        if st.mode == Mode::Whiff {
            st.steps_since_last_whiff = 0;
            st.whiff_steps_remaining -= 1;
            if st.whiff_steps_remaining == 0 {
                let wi = sample_intermittency(self.stats, x, y, st, cfg);
                st.intermittency_steps_remaining = cfg.seconds_to_steps(wi);
                st.mode = Mode::Blank;
            }
        } else {
            st.steps_since_last_whiff = st.steps_since_last_whiff.saturating_add(1);
        }
        st.recent_onsets.push(onset);

        StepOutput { concentration, mode, onset, field_value }
    }
}

/// A trajectory in the streakline frame (source at the field's origin).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Straight line at constant speed, sampled at `rows_per_second`.
    pub fn straight(start: [f64; 2], velocity: [f64; 2], steps: usize, rows_per_second: f64) -> Self {
        let dt = 1.0 / rows_per_second;
        let t: Vec<f64> = (0..steps).map(|i| i as f64 * dt).collect();
        let x = t.iter().map(|t| start[0] + velocity[0] * t).collect();
        let y = t.iter().map(|t| start[1] + velocity[1] * t).collect();
        Self { t, x, y }
    }

    /// Reads a `t,x,y` CSV (header keyed).
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CosmosError::Schema(format!("trajectory missing column `{name}`")))
        };
        let (it, ix, iy) = (col("t")?, col("x")?, col("y")?);
        let mut traj = Trajectory::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                let raw = rec.get(i).unwrap_or("");
                let v: f64 = raw
                    .parse()
                    .map_err(|_| CosmosError::Format(format!("row {}: bad number `{raw}`", row + 2)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CosmosError::Format(format!("row {}: non-finite value", row + 2)))
                }
            };
            traj.t.push(get(it)?);
            traj.x.push(get(ix)?);
            traj.y.push(get(iy)?);
        }
        Ok(traj)
    }

    /// Checks that consecutive timestamps are exactly `1 / rows_per_second`
    /// apart.
    pub fn check_rate(&self, rows_per_second: f64) -> Result<()> {
        if self.is_empty() {
            return Err(CosmosError::InvalidInput("trajectory is empty".into()));
        }
        if self.x.len() != self.len() || self.y.len() != self.len() {
            return Err(CosmosError::InvalidInput("trajectory columns differ in length".into()));
        }
        let dt = 1.0 / rows_per_second;
        for (i, w) in self.t.windows(2).enumerate() {
            let step = w[1] - w[0];
            if (step - dt).abs() > 1e-9 + 1e-12 * w[1].abs() {
                log::warn!("trajectory step {step} at row {} does not match {rows_per_second} Hz", i + 1);
                return Err(CosmosError::InvalidInput(format!(
                    "trajectory sampled at dt={step}, expected {dt}; resampling is not supported"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetRecord {
    pub step: usize,
    pub field_value: f64,
}

/// A simulated odor experience. `c` is the smoothed output; `whiff` flags
/// `c >= whiff_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdorTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub c: Vec<f64>,
    pub whiff: Vec<bool>,
    pub raw_c: Vec<f64>,
    pub onsets: Vec<OnsetRecord>,
    pub whiff_threshold: f64,
}

impl OdorTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes `t,x,y,c,whiff` with whiff as 0/1.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "x", "y", "c", "whiff"])?;
        for i in 0..self.len() {
            wtr.write_record(&[
                self.t[i].to_string(),
                self.x[i].to_string(),
                self.y[i].to_string(),
                self.c[i].to_string(),
                (self.whiff[i] as u8).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| CosmosError::io("<trace>", e))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| CosmosError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads a `t,x,y,c,whiff` trace. Flags are recomputed from `c`.
    pub fn read_csv<R: std::io::Read>(r: R, whiff_threshold: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        let mut cols = [0usize; 4];
        for (slot, name) in cols.iter_mut().zip(["t", "x", "y", "c"]) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CosmosError::Schema(format!("trace missing column `{name}`")))?;
        }
        let mut v: [Vec<f64>; 4] = Default::default();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (k, &i) in cols.iter().enumerate() {
                let raw = rec.get(i).unwrap_or("");
                let x: f64 = raw
                    .parse()
                    .map_err(|_| CosmosError::Format(format!("row {}: bad number `{raw}`", row + 2)))?;
                v[k].push(x);
            }
        }
        let [t, x, y, c] = v;
        Ok(Self {
            whiff: c.iter().map(|&v| v >= whiff_threshold).collect(),
            t,
            x,
            y,
            raw_c: Vec::new(),
            c,
            onsets: Vec::new(),
            whiff_threshold,
        })
    }
}

/// Applies the output smoothing: centered rolling mean, then Gaussian.
pub fn smooth_output(raw: &[f64], cfg: &SimConfig) -> Vec<f64> {
    gaussian_filter_1d(&centered_rolling_mean(raw, cfg.window_size), cfg.sigma)
}

/// Runs the generator along a whole trajectory.
pub fn simulate(
    trajectory: &Trajectory,
    field: &PlumeFieldModel,
    stats: &StatsGrid,
    cfg: &SimConfig,
) -> Result<OdorTrace> {
    trajectory.check_rate(cfg.rows_per_second)?;
    let mut sim = Simulator::new(field, stats, cfg)?;
    let n = trajectory.len();
    let mut raw = Vec::with_capacity(n);
    let mut onsets = Vec::new();
    for i in 0..n {
        let out = sim.step(trajectory.x[i], trajectory.y[i]);
        raw.push(out.concentration);
        if out.onset {
            onsets.push(OnsetRecord { step: i, field_value: out.field_value.unwrap_or(f64::NAN) });
        }
    }
    let c = smooth_output(&raw, cfg);
    let whiff = c.iter().map(|&v| v >= stats.whiff_threshold).collect();
    Ok(OdorTrace {
        t: trajectory.t.clone(),
        x: trajectory.x.clone(),
        y: trajectory.y.clone(),
        c,
        whiff,
        raw_c: raw,
        onsets,
        whiff_threshold: stats.whiff_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plume_fit::GridGeometry;

    fn flat_stats() -> StatsGrid {
        let geometry = StatsGeometry::covering([0.0, 20.0, -10.0, 10.0], 5.0).unwrap();
        let bin = StatsBin::new(
            vec![0.1, 0.2],
            vec![7.0, 8.0],
            vec![0.5, 0.3],
            vec![0.01, 0.02, 0.3, 0.6],
            Some(0.1),
        );
        StatsGrid::from_bins(geometry, vec![bin; geometry.len()], 4.5, 0.1, 0.3).unwrap()
    }

    fn field(v: f64) -> PlumeFieldModel {
        PlumeFieldModel::uniform(v, GridGeometry::new(10, 10, [0.0, 20.0, -10.0, 10.0]).unwrap())
    }

    #[test]
    fn memory_factor_cases() {
        assert_eq!(memory_factor(0, 10, 50), 1.0);
        assert_eq!(memory_factor(0, 51, 50), 1.5);
        assert_eq!(memory_factor(0, 50, 50), 1.0);
        assert_eq!(memory_factor(2, 60, 50), 4.5);
    }

    #[test]
    fn onset_probability_cases() {
        let cfg = SimConfig::default();
        assert_eq!(onset_probability(0.0, 4.5, &cfg), 0.0);
        assert!((onset_probability(0.4, 1.0, &cfg) - 0.34).abs() < 1e-15);
        assert_eq!(onset_probability(0.9, 4.5, &cfg), 1.0);
    }

    #[test]
    fn onset_decisions() {
        let mut rng = seeded(5);
        assert!((0..10_000).all(|_| !decide_onset(0.0, &mut rng)));
        assert!((0..10_000).all(|_| decide_onset(1.0, &mut rng)));
        let n = 1_000_000;
        let hits = (0..n).filter(|_| decide_onset(0.3, &mut rng)).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.002);
    }

    #[test]
    fn decide_onset_uses_one_draw() {
        let mut a = seeded(9);
        let mut b = seeded(9);
        decide_onset(0.5, &mut a);
        let _: f64 = b.random();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn intermittency_memory_biases_draws() {
        let cfg = SimConfig::default();
        let stats = flat_stats();
        let mut st = SimState::new(&cfg);
        st.set_recent_intermittencies(&[0.01, 0.01, 0.01, 0.01, 0.2, 0.3, 0.4], &cfg);
        assert!(st.bursting(&cfg));
        for _ in 0..200 {
            st.set_recent_intermittencies(&[0.01, 0.01, 0.01, 0.01, 0.2, 0.3, 0.4], &cfg);
            let wi = sample_intermittency(&stats, 1.0, 0.0, &mut st, &cfg);
            assert!(wi < 0.165, "{wi}");
        }
        st.set_recent_intermittencies(&[0.01, 0.01, 0.01, 0.2, 0.2, 0.3, 0.4], &cfg);
        assert!(!st.bursting(&cfg));
        let mut long = false;
        for _ in 0..200 {
            st.set_recent_intermittencies(&[0.01, 0.01, 0.01, 0.2, 0.2, 0.3, 0.4], &cfg);
            long |= sample_intermittency(&stats, 1.0, 0.0, &mut st, &cfg) > 0.165;
        }
        assert!(long);
        // ring buffer never exceeds its capacity
        assert_eq!(st.recent_intermittencies().count(), cfg.history_intermittency);
        // empty region falls back to the pooled median
        let wi = sample_intermittency(&stats, 500.0, 0.0, &mut st, &cfg);
        assert_eq!(wi, stats.median_wi);
    }

    #[test]
    fn blank_target_is_baseline() {
        let cfg = SimConfig::default();
        let mut rng = seeded(0);
        let (c, wsd) = sample_concentration_target(&flat_stats(), 1.0, 1.0, Mode::Blank, &cfg, &mut rng);
        assert_eq!(c, 0.6);
        assert_eq!(wsd, 0.1);
    }

    #[test]
    fn zero_field_produces_no_whiffs() {
        let cfg = SimConfig::default();
        let traj = Trajectory::straight([1.0, 0.0], [1.0, 0.0], 4000, 200.0);
        let trace = simulate(&traj, &field(0.0), &flat_stats(), &cfg).unwrap();
        assert!(trace.onsets.is_empty());
        assert!(trace.whiff.iter().all(|w| !w));
        let mean = trace.c.iter().sum::<f64>() / trace.len() as f64;
        assert!((mean - 0.6).abs() < 0.2, "{mean}");
    }

    #[test]
    fn simulation_is_deterministic_and_bounded() {
        let cfg = SimConfig { seed: 77, ..Default::default() };
        let traj = Trajectory::straight([1.0, -5.0], [0.5, 1.0], 20_000, 200.0);
        let a = simulate(&traj, &field(0.05), &flat_stats(), &cfg).unwrap();
        let b = simulate(&traj, &field(0.05), &flat_stats(), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.onsets.is_empty());
        assert!(a.c.iter().all(|&c| c > 0.0 && c < 10.0));
        assert!(a.whiff.iter().any(|&w| w));
        let other = simulate(&traj, &field(0.05), &flat_stats(), &SimConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a.c, other.c);
    }

    #[test]
    fn onsets_wait_for_intermittency() {
        let cfg = SimConfig::default();
        let stats = flat_stats();
        let f = field(1.0);
        let mut sim = Simulator::new(&f, &stats, &cfg).unwrap();
        let mut prev_mode = Mode::Blank;
        for _ in 0..20_000 {
            let blocked = sim.state().mode == Mode::Blank && sim.state().intermittency_steps_remaining > 0;
            let out = sim.step(2.0, 0.0);
            if blocked || prev_mode == Mode::Whiff && out.mode == Mode::Whiff && !out.onset {
                assert!(!out.onset);
            }
            if out.onset {
                assert_eq!(out.field_value, Some(1.0));
            }
            prev_mode = out.mode;
        }
    }

    #[test]
    fn noiseless_chain_converges_to_target() {
        let mut h = ArHistory::at(logit(0.6, 0.0, 10.0));
        let target = logit(7.0, 0.0, 10.0);
        let mut last = 0.0;
        for _ in 0..200 {
            last = h.advance(target, 0.85, -0.17, 0.0);
        }
        assert!((last - target).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig { ar1: 1.1, ar2: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { whiff_transition_prob: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { c_min: 5.0, c_max: 5.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_or_misrated_trajectories_are_rejected() {
        let cfg = SimConfig::default();
        let empty = Trajectory::default();
        assert!(simulate(&empty, &field(0.1), &flat_stats(), &cfg).is_err());
        let slow = Trajectory::straight([0.0, 0.0], [1.0, 0.0], 10, 100.0);
        assert!(simulate(&slow, &field(0.1), &flat_stats(), &cfg).is_err());
    }
}
