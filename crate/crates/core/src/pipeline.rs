//! Glue between the stages, shared by the command-line tool and tests.

use crate::config::CosmosConfig;
use crate::error::Result;
use crate::generator::{OdorTrace, StatsGrid, Trajectory};
use crate::ingest::{compute_whiff_stats_table, segment_whiffs, TemplateDataset, WhiffStatsTable};
use crate::plume_fit::{fit_template, FitOutcome, PlumeFieldModel};
use crate::validate::ValidateConfig;

/// Everything learned from one template.
#[derive(Debug, Clone)]
pub struct LearnedModel {
    pub fit: FitOutcome,
    pub field: PlumeFieldModel,
    pub stats: StatsGrid,
    pub whiff_count: usize,
}

/// Fits the onset field and bins the whiff statistics of a template.
pub fn learn(dataset: &TemplateDataset, cfg: &CosmosConfig) -> Result<LearnedModel> {
    let events = segment_whiffs(dataset, dataset.whiff_threshold);
    let (_, fit, field) = fit_template(dataset, &events, &cfg.fit)?;
    let stats = StatsGrid::from_template(dataset, &events, cfg.stats.bin_size, cfg.stats.transition_margin)?;
    Ok(LearnedModel { fit, field, stats, whiff_count: events.len() })
}

/// The template's own path in the streakline frame.
pub fn template_trajectory(dataset: &TemplateDataset) -> Trajectory {
    Trajectory {
        t: dataset.records.iter().map(|r| r.t).collect(),
        x: dataset.sx.clone(),
        y: dataset.sy.clone(),
    }
}

/// Treats a simulated trace as a dataset already in the streakline frame.
pub fn trace_dataset(trace: &OdorTrace, dt: f64) -> Result<TemplateDataset> {
    TemplateDataset::from_streakline_series(&trace.t, &trace.x, &trace.y, &trace.c, dt, trace.whiff_threshold)
}

/// Segments a dataset and tabulates its per-whiff statistics.
pub fn whiff_table(dataset: &TemplateDataset, cfg: &ValidateConfig) -> Result<WhiffStatsTable> {
    let events = segment_whiffs(dataset, dataset.whiff_threshold);
    compute_whiff_stats_table(dataset, &events, cfg.wf_window_s, cfg.wma_window)
}
