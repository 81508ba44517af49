//! Template ingestion: CSV parsing, streakline coordinates, whiff
//! segmentation and per-whiff statistics.

mod streakline;

use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CosmosError, Result};

pub use streakline::{streakline_transform, Streakline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub rows_per_second: f64,
    pub whiff_threshold: f64,
    pub source_x: f64,
    pub source_y: f64,
    /// Sensor range; concentrations are clipped into it.
    pub c_min: f64,
    pub c_max: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            rows_per_second: 200.0,
            whiff_threshold: 4.5,
            source_x: 0.0,
            source_y: 0.0,
            c_min: 0.0,
            c_max: 10.0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rows_per_second > 0.0) {
            return Err(CosmosError::Config("rows_per_second must be positive".into()));
        }
        if !(self.c_min < self.c_max) {
            return Err(CosmosError::Config("c_min must be below c_max".into()));
        }
        if !(self.whiff_threshold > self.c_min && self.whiff_threshold <= self.c_max) {
            return Err(CosmosError::Config(format!(
                "whiff_threshold {} outside sensor range ({}, {}]",
                self.whiff_threshold, self.c_min, self.c_max
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rows_per_second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub u_wind: f64,
    pub v_wind: f64,
    pub c: f64,
}

/// A template odor experience in the streakline frame.
#[derive(Debug, Clone)]
pub struct TemplateDataset {
    pub records: Vec<RawRecord>,
    pub sx: Vec<f64>,
    pub sy: Vec<f64>,
    pub whiff_flag: Vec<bool>,
    pub source_xy: [f64; 2],
    pub dt: f64,
    pub whiff_threshold: f64,
    /// Rows dropped during parsing because a value was not finite.
    pub rejected_rows: usize,
}

impl TemplateDataset {
    /// Builds a dataset whose coordinates are already in the streakline
    /// frame (source at the origin), e.g. a simulated trace.
    pub fn from_streakline_series(
        t: &[f64],
        x: &[f64],
        y: &[f64],
        c: &[f64],
        dt: f64,
        whiff_threshold: f64,
    ) -> Result<Self> {
        let n = t.len();
        if x.len() != n || y.len() != n || c.len() != n {
            return Err(CosmosError::InvalidInput("series lengths differ".into()));
        }
        if n < 2 {
            return Err(CosmosError::InsufficientData(format!("{n} samples")));
        }
        let records = (0..n)
            .map(|i| RawRecord {
                t: t[i],
                px: x[i],
                py: y[i],
                u_wind: 0.0,
                v_wind: 0.0,
                c: c[i],
            })
            .collect();
        Ok(Self {
            records,
            sx: x.to_vec(),
            sy: y.to_vec(),
            whiff_flag: c.iter().map(|&v| v >= whiff_threshold).collect(),
            source_xy: [0.0, 0.0],
            dt,
            whiff_threshold,
            rejected_rows: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn concentrations(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.c).collect()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    /// Streakline-frame bounding box `(x_min, x_max, y_min, y_max)`.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let fold = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
        };
        let (x0, x1) = fold(&self.sx);
        let (y0, y1) = fold(&self.sy);
        (x0, x1, y0, y1)
    }
}

const COLUMNS: [&str; 6] = ["t", "px", "py", "u", "v", "c"];

pub fn load_template(path: impl AsRef<Path>, cfg: &IngestConfig) -> Result<TemplateDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CosmosError::io(path, e))?;
    parse_template(file, cfg)
}

/// Parses the header-keyed `t,px,py,u,v,c` CSV and builds the dataset.
pub fn parse_template<R: Read>(reader: R, cfg: &IngestConfig) -> Result<TemplateDataset> {
    cfg.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 6];
    for (k, name) in COLUMNS.iter().enumerate() {
        idx[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| CosmosError::Schema(format!("missing column `{name}`")))?;
    }

    let dt = cfg.dt();
    let mut records = Vec::new();
    let mut rejected = 0usize;
    let mut last: Option<(usize, f64)> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0f64; 6];
        for k in 0..6 {
            let raw = rec.get(idx[k]).unwrap_or("");
            vals[k] = raw.parse::<f64>().map_err(|_| {
                CosmosError::Format(format!("row {}: cannot parse `{raw}` as {}", row + 2, COLUMNS[k]))
            })?;
        }
        if vals.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            continue;
        }
        let t = vals[0];
        if let Some((prev_row, prev_t)) = last {
            let expected = (row - prev_row) as f64 * dt;
            let step = t - prev_t;
            if step <= 0.0 {
                return Err(CosmosError::Format(format!(
                    "row {}: time {t} does not increase",
                    row + 2
                )));
            }
            if (step - expected).abs() > 1e-9 + 1e-12 * t.abs() {
                return Err(CosmosError::Format(format!(
                    "row {}: time step {step} inconsistent with {} rows/s",
                    row + 2,
                    cfg.rows_per_second
                )));
            }
        }
        last = Some((row, t));
        records.push(RawRecord {
            t,
            px: vals[1],
            py: vals[2],
            u_wind: vals[3],
            v_wind: vals[4],
            c: vals[5].clamp(cfg.c_min, cfg.c_max),
        });
    }
    if rejected > 0 {
        log::warn!("rejected {rejected} rows with non-finite values");
    }
    if records.len() < 2 {
        return Err(CosmosError::InsufficientData(format!(
            "template has {} usable rows, need at least 2",
            records.len()
        )));
    }
    build_dataset(records, cfg, rejected)
}

/// Computes streakline coordinates and whiff flags for parsed records.
pub fn build_dataset(
    records: Vec<RawRecord>,
    cfg: &IngestConfig,
    rejected_rows: usize,
) -> Result<TemplateDataset> {
    let source = [cfg.source_x, cfg.source_y];
    let points: Vec<[f64; 2]> = records.iter().map(|r| [r.px, r.py]).collect();
    let wind: Vec<[f64; 2]> = records.iter().map(|r| [r.u_wind, r.v_wind]).collect();
    let (sx, sy) = streakline_transform(&points, source, &wind, cfg.dt())?;
    let whiff_flag = records.iter().map(|r| r.c >= cfg.whiff_threshold).collect();
    Ok(TemplateDataset {
        records,
        sx,
        sy,
        whiff_flag,
        source_xy: source,
        dt: cfg.dt(),
        whiff_threshold: cfg.whiff_threshold,
        rejected_rows,
    })
}

/// One maximal run of samples at or above the whiff threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiffEvent {
    pub onset_index: usize,
    pub sample_count: usize,
    pub duration_s: f64,
    pub mean_conc: f64,
    /// Population standard deviation over the run.
    pub std_conc: f64,
    /// Streakline-frame onset location.
    pub onset_xy: [f64; 2],
    pub distance_from_source: f64,
    /// Gap from the end of this whiff to the next onset; `None` for the
    /// last whiff.
    pub following_intermittency_s: Option<f64>,
}

impl WhiffEvent {
    pub fn end_index(&self) -> usize {
        self.onset_index + self.sample_count
    }
}

pub fn segment_whiffs(dataset: &TemplateDataset, whiff_threshold: f64) -> Vec<WhiffEvent> {
    let n = dataset.len();
    let mut events: Vec<WhiffEvent> = Vec::new();
    let mut i = 0;
    while i < n {
        if dataset.records[i].c < whiff_threshold {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && dataset.records[i].c >= whiff_threshold {
            i += 1;
        }
        let run = &dataset.records[start..i];
        let len = run.len() as f64;
        let mean = run.iter().map(|r| r.c).sum::<f64>() / len;
        let var = run.iter().map(|r| (r.c - mean).powi(2)).sum::<f64>() / len;
        let (x, y) = (dataset.sx[start], dataset.sy[start]);
        if let Some(prev) = events.last_mut() {
            prev.following_intermittency_s = Some((start - prev.end_index()) as f64 * dataset.dt);
        }
        events.push(WhiffEvent {
            onset_index: start,
            sample_count: run.len(),
            duration_s: len * dataset.dt,
            mean_conc: mean,
            std_conc: var.max(0.0).sqrt(),
            onset_xy: [x, y],
            distance_from_source: x.hypot(y),
            following_intermittency_s: None,
        });
    }
    events
}

/// The five distance-correlated whiff statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "WD")]
    Duration,
    #[serde(rename = "WF")]
    Frequency,
    #[serde(rename = "WC")]
    Concentration,
    #[serde(rename = "WMA")]
    MovingAverage,
    #[serde(rename = "WSD")]
    StdDev,
}

impl Statistic {
    pub const ALL: [Statistic; 5] = [
        Statistic::Duration,
        Statistic::Frequency,
        Statistic::Concentration,
        Statistic::MovingAverage,
        Statistic::StdDev,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Statistic::Duration => "WD",
            Statistic::Frequency => "WF",
            Statistic::Concentration => "WC",
            Statistic::MovingAverage => "WMA",
            Statistic::StdDev => "WSD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiffStatsRow {
    pub distance: f64,
    #[serde(rename = "WD")]
    pub wd: f64,
    #[serde(rename = "WF")]
    pub wf: f64,
    #[serde(rename = "WC")]
    pub wc: f64,
    #[serde(rename = "WMA")]
    pub wma: f64,
    #[serde(rename = "WSD")]
    pub wsd: f64,
}

impl WhiffStatsRow {
    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Duration => self.wd,
            Statistic::Frequency => self.wf,
            Statistic::Concentration => self.wc,
            Statistic::MovingAverage => self.wma,
            Statistic::StdDev => self.wsd,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WhiffStatsTable {
    pub rows: Vec<WhiffStatsRow>,
}

const STATS_COLUMNS: [&str; 6] = ["distance", "WD", "WF", "WC", "WMA", "WSD"];

impl WhiffStatsTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(distance, value)` pairs for one statistic.
    pub fn pairs(&self, stat: Statistic) -> Vec<[f64; 2]> {
        self.rows.iter().map(|r| [r.distance, r.get(stat)]).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        if self.rows.is_empty() {
            wtr.write_record(STATS_COLUMNS)?;
        }
        wtr.flush().map_err(|e| CosmosError::io("<stats table>", e))?;
        Ok(())
    }

    /// Reads a stats table; every statistic column must be present.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        for col in STATS_COLUMNS {
            if !headers.iter().any(|h| h == col) {
                return Err(CosmosError::Schema(format!("stats table missing column `{col}`")));
            }
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<WhiffStatsRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Per-whiff statistics. WF is the onset count in the trailing
/// `wf_window_s` window (inclusive of the whiff itself) divided by the
/// window length. WMA is the mean raw concentration over the
/// `wma_window` samples starting at the onset.
pub fn compute_whiff_stats_table(
    dataset: &TemplateDataset,
    events: &[WhiffEvent],
    wf_window_s: f64,
    wma_window: usize,
) -> Result<WhiffStatsTable> {
    if !(wf_window_s > 0.0) {
        return Err(CosmosError::Config("wf_window_s must be positive".into()));
    }
    if wma_window == 0 {
        return Err(CosmosError::Config("wma_window must be at least 1".into()));
    }
    let onset_t: Vec<f64> = events.iter().map(|e| dataset.records[e.onset_index].t).collect();
    let n = dataset.len();
    let mut first = 0usize;
    let rows = events
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let t = onset_t[k];
            while onset_t[first] < t - wf_window_s - 1e-9 {
                first += 1;
            }
            let count = k + 1 - first;
            let hi = (e.onset_index + wma_window).min(n);
            let window = &dataset.records[e.onset_index..hi];
            let wma = window.iter().map(|r| r.c).sum::<f64>() / window.len() as f64;
            WhiffStatsRow {
                distance: e.distance_from_source,
                wd: e.duration_s,
                wf: count as f64 / wf_window_s,
                wc: e.mean_conc,
                wma,
                wsd: e.std_conc,
            }
        })
        .collect();
    Ok(WhiffStatsTable { rows })
}
