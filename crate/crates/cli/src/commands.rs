use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cosmos::agent::{cluster_similarity, extract_features, normalize_features, run_tracking_batch, AgentConfig, TrackingBatch, FEATURE_NAMES, SUMMARY_NAMES};
use cosmos::config::CosmosConfig;
use cosmos::generator::{simulate, OdorTrace, Simulator, StatsGeometry, StatsGrid, Trajectory};
use cosmos::ingest::{load_template, streakline_transform};
use cosmos::pipeline;
use cosmos::plume_fit::{PlumeFieldModel, PlumeParams};
use cosmos::rng::derive_seed;
use cosmos::synth::{analytic_field, make_synthetic_template, save_template, synthetic_prior_stats, TemplateSpec};
use cosmos::validate::compare;
use cosmos::CosmosError;
use serde::Serialize;

use crate::manifest::{self, InputDigest, RunManifest};
use crate::{alloc_count, plots, Cli, Command};

struct Context_ {
    cfg: CosmosConfig,
    seed: Option<u64>,
    started_at: String,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    CosmosError::Config(msg.into()).into()
}

fn prepare(cli: &Cli) -> Result<Context_> {
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut cfg = match &cli.config {
        Some(p) => CosmosConfig::load(p)?,
        None => CosmosConfig::default(),
    };
    if cli.strict_repro && cli.seed.is_none() {
        return Err(config_error("--strict-repro requires an explicit --seed"));
    }
    if let Some(s) = cli.seed {
        cfg.simulation.seed = s;
        cfg.validate.seed = s;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_error("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(Context_ { cfg, seed: cli.seed, started_at })
}

fn out_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Fit { .. } => "fit",
        Command::Simulate { .. } => "simulate",
        Command::Validate { .. } => "validate",
        Command::Track { .. } => "track",
        Command::Bench { .. } => "bench",
        Command::MakeTemplate { .. } => "make-template",
    }
}

/// Digests inputs, enforcing the strict-reproducibility check against any
/// manifest already in `dir`.
fn begin(cli: &Cli, dir: &Path, inputs: &[&Path]) -> Result<Vec<InputDigest>> {
    let digests = manifest::digest_inputs(inputs)?;
    if cli.strict_repro {
        manifest::check_previous(dir, command_name(&cli.command), &digests)?;
    }
    Ok(digests)
}

fn finish(cli: &Cli, ctx: &Context_, dir: &Path, inputs: Vec<InputDigest>, outputs: Vec<PathBuf>) -> Result<()> {
    let m = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        args: std::env::args().collect(),
        config: ctx.cfg.clone(),
        inputs,
        seed: ctx.seed,
        started_at: ctx.started_at.clone(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs,
    };
    manifest::write(dir, &m)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).map_err(|e| CosmosError::io(path, e))?;
    Ok(BufReader::new(f))
}

pub fn run(cli: &Cli) -> Result<()> {
    let ctx = prepare(cli)?;
    match &cli.command {
        Command::Fit { template, stats_out } => cmd_fit(cli, &ctx, template, stats_out.as_deref()),
        Command::Simulate { model, stats, traj, wind } => cmd_simulate(cli, &ctx, model, stats, traj, wind.as_deref()),
        Command::Validate { template, trace, plots } => cmd_validate(cli, &ctx, template, trace, plots.as_deref()),
        Command::Track { model, stats, agent, n } => cmd_track(cli, &ctx, model, stats, agent.as_deref(), *n),
        Command::Bench { steps, model, stats } => cmd_bench(cli, &ctx, *steps, model.as_deref(), stats.as_deref()),
        Command::MakeTemplate { amplitude, sigma_y0, d_y, lambda } => {
            let d = TemplateSpec::default_theta();
            let theta = PlumeParams {
                amplitude: amplitude.unwrap_or(d.amplitude),
                sigma_y0: sigma_y0.unwrap_or(d.sigma_y0),
                d_y: d_y.unwrap_or(d.d_y),
                lambda: lambda.unwrap_or(d.lambda),
                ..d
            };
            cmd_make_template(cli, &ctx, theta)
        }
    }
}

fn cmd_fit(cli: &Cli, ctx: &Context_, template: &Path, stats_out: Option<&Path>) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("model.json"));
    let dir = out_dir(&out);
    let stats_path = stats_out.map(Path::to_path_buf).unwrap_or_else(|| dir.join("stats.json"));
    let inputs = begin(cli, &dir, &[template])?;
    let ds = load_template(template, &ctx.cfg.ingest)?;
    let learned = pipeline::learn(&ds, &ctx.cfg)?;
    std::fs::create_dir_all(&dir)?;
    learned.field.save(&out)?;
    learned.stats.save(&stats_path)?;
    let p = learned.fit.params;
    println!(
        "{}",
        serde_json::json!({
            "whiffs": learned.whiff_count,
            "A": p.amplitude, "sigma_y0": p.sigma_y0, "d_y": p.d_y, "lambda": p.lambda,
            "nll": learned.fit.nll, "converged": learned.fit.converged,
        })
    );
    finish(cli, ctx, &dir, inputs, vec![out, stats_path])
}

fn read_wind(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CosmosError::Schema(format!("wind file missing column `{name}`")))
    };
    let (iu, iv) = (col("u")?, col("v")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse().map_err(|_| CosmosError::Format(format!("bad wind value `{raw}`")).into())
        };
        out.push([get(iu)?, get(iv)?]);
    }
    Ok(out)
}

fn cmd_simulate(cli: &Cli, ctx: &Context_, model: &Path, stats: &Path, traj_path: &Path, wind: Option<&Path>) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    let dir = out_dir(&out);
    let mut input_paths = vec![model, stats, traj_path];
    if let Some(w) = wind {
        input_paths.push(w);
    }
    let inputs = begin(cli, &dir, &input_paths)?;
    let field = PlumeFieldModel::load(model)?;
    let grid = StatsGrid::load(stats)?;
    let mut traj = Trajectory::read_csv(open(traj_path)?)?;
    if let Some(w) = wind {
        let wind = read_wind(w)?;
        if wind.len() != traj.len() {
            bail!(CosmosError::InvalidInput(format!(
                "wind has {} rows, trajectory {}",
                wind.len(),
                traj.len()
            )));
        }
        let pts: Vec<[f64; 2]> = traj.x.iter().zip(&traj.y).map(|(x, y)| [*x, *y]).collect();
        let source = [ctx.cfg.ingest.source_x, ctx.cfg.ingest.source_y];
        let (sx, sy) = streakline_transform(&pts, source, &wind, ctx.cfg.simulation.dt())?;
        traj.x = sx;
        traj.y = sy;
    }
    let trace = simulate(&traj, &field, &grid, &ctx.cfg.simulation)?;
    std::fs::create_dir_all(&dir)?;
    trace.save(&out)?;
    log::info!("{} steps, {} onsets", trace.len(), trace.onsets.len());
    finish(cli, ctx, &dir, inputs, vec![out])
}

fn cmd_validate(cli: &Cli, ctx: &Context_, template: &Path, trace_path: &Path, plot_dir: Option<&Path>) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("report.json"));
    let dir = out_dir(&out);
    let inputs = begin(cli, &dir, &[template, trace_path])?;
    let ds = load_template(template, &ctx.cfg.ingest)?;
    let tpl_table = pipeline::whiff_table(&ds, &ctx.cfg.validate)?;
    let trace = OdorTrace::read_csv(open(trace_path)?, ctx.cfg.ingest.whiff_threshold)?;
    let sim_ds = pipeline::trace_dataset(&trace, ctx.cfg.ingest.dt())?;
    let sim_table = pipeline::whiff_table(&sim_ds, &ctx.cfg.validate)?;
    let report = compare(&tpl_table, &sim_table, &ctx.cfg.validate)?;
    write_json(&out, &report)?;
    let mut outputs = vec![out];
    if let Some(p) = plot_dir {
        outputs.extend(plots::write_histograms(&report, p)?);
    }
    let summary: Vec<_> = report
        .statistics
        .iter()
        .map(|s| serde_json::json!({"statistic": s.statistic, "observed": s.observed, "p": s.p}))
        .collect();
    println!("{}", serde_json::json!({ "statistics": summary, "supports_overlap": report.supports_overlap }));
    finish(cli, ctx, &dir, inputs, outputs)
}

#[derive(Serialize)]
struct TrackMetrics {
    a_s: f64,
    d_norm: f64,
    success_rate: f64,
    reference_success_rate: f64,
    runs: usize,
    reference_seed: u64,
}

fn write_runs(batch: &TrackingBatch, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (i, r) in batch.runs.iter().enumerate() {
        let path = dir.join(format!("run_{i:04}.csv"));
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        w.write_record(["t", "x", "y", "c", "detected"])?;
        for k in 0..r.t.len() {
            w.write_record(&[
                r.t[k].to_string(),
                r.x[k].to_string(),
                r.y[k].to_string(),
                r.c[k].to_string(),
                (r.detected[k] as u8).to_string(),
            ])?;
        }
        w.flush()?;
        paths.push(path);
    }
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
    w.write_record(["run", "start_x", "start_y", "success", "steps"])?;
    for (i, r) in batch.runs.iter().enumerate() {
        w.write_record(&[
            i.to_string(),
            r.start[0].to_string(),
            r.start[1].to_string(),
            (r.success as u8).to_string(),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    paths.push(path);
    Ok(paths)
}

fn cmd_track(cli: &Cli, ctx: &Context_, model: &Path, stats: &Path, agent: Option<&Path>, n: usize) -> Result<()> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("track"));
    let mut input_paths = vec![model, stats];
    if let Some(a) = agent {
        input_paths.push(a);
    }
    let inputs = begin(cli, &dir, &input_paths)?;
    let agent_cfg: AgentConfig = match agent {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CosmosError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CosmosError::Config(e.to_string()))?
        }
        None => ctx.cfg.agent.clone(),
    };
    agent_cfg.validate()?;
    let field = PlumeFieldModel::load(model)?;
    let grid = StatsGrid::load(stats)?;
    let seed = ctx.cfg.simulation.seed;
    let reference_seed = derive_seed(seed, 1);
    let batch = run_tracking_batch(&field, &grid, &ctx.cfg.simulation, &agent_cfg, n, seed)?;
    let reference = run_tracking_batch(&field, &grid, &ctx.cfg.simulation, &agent_cfg, n, reference_seed)?;

    let source = [field.params.x0, field.params.y0];
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (label, b) in [(0u8, &batch), (1u8, &reference)] {
        for r in b.runs.iter().filter(|r| r.t.len() >= 3) {
            feats.push(extract_features(&r.t, &r.x, &r.y, source, agent_cfg.wind_direction)?);
            labels.push(label);
        }
    }
    let rows = normalize_features(&feats);
    let (a, b): (Vec<_>, Vec<_>) = rows.iter().cloned().zip(&labels).partition(|(_, l)| **l == 0);
    let a: Vec<Vec<f64>> = a.into_iter().map(|(r, _)| r).collect();
    let b: Vec<Vec<f64>> = b.into_iter().map(|(r, _)| r).collect();
    let (a_s, d_norm) = cluster_similarity(&a, &b)?;

    std::fs::create_dir_all(&dir)?;
    let mut outputs = write_runs(&batch, &dir)?;
    let fpath = dir.join("features.csv");
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&fpath)?));
    let mut header = vec!["batch".to_string()];
    for f in FEATURE_NAMES {
        for s in SUMMARY_NAMES {
            header.push(format!("{f}__{s}"));
        }
    }
    w.write_record(&header)?;
    for (row, l) in rows.iter().zip(&labels) {
        let mut rec = vec![l.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    outputs.push(fpath);
    let metrics = TrackMetrics {
        a_s,
        d_norm,
        success_rate: batch.success_rate(),
        reference_success_rate: reference.success_rate(),
        runs: n,
        reference_seed,
    };
    let mpath = dir.join("metrics.json");
    write_json(&mpath, &metrics)?;
    outputs.push(mpath);
    println!("{}", serde_json::to_string(&metrics)?);
    finish(cli, ctx, &dir, inputs, outputs)
}

#[derive(Serialize)]
struct BenchReport {
    steps: usize,
    seconds: f64,
    steps_per_second: f64,
    allocations_during_run: u64,
    allocation_free: bool,
}

fn cmd_bench(cli: &Cli, ctx: &Context_, steps: usize, model: Option<&Path>, stats: Option<&Path>) -> Result<()> {
    if steps == 0 {
        bail!(CosmosError::InvalidInput("bench needs at least one step".into()));
    }
    let spec = &ctx.cfg.template;
    let field = match model {
        Some(p) => PlumeFieldModel::load(p)?,
        None => analytic_field(TemplateSpec::default_theta(), spec.extent, spec.field_resolution)?,
    };
    let grid = match stats {
        Some(p) => StatsGrid::load(p)?,
        None => synthetic_prior_stats(
            StatsGeometry::covering(spec.extent, spec.stats_bin_size)?,
            spec.samples_per_bin,
            spec.whiff_threshold,
            derive_seed(ctx.cfg.simulation.seed, 1),
        )?,
    };
    let report = bench_steps(&field, &grid, ctx, steps)?;
    let text = serde_json::to_string(&report)?;
    println!("{text}");
    if let Some(out) = &cli.out {
        let dir = out_dir(out);
        let mut input_paths: Vec<&Path> = Vec::new();
        input_paths.extend(model);
        input_paths.extend(stats);
        let inputs = begin(cli, &dir, &input_paths)?;
        write_json(out, &report)?;
        finish(cli, ctx, &dir, inputs, vec![out.clone()])?;
    }
    Ok(())
}

/// Streams a straight diagonal line across the field extent through the
/// simulator and counts allocations made while stepping.
fn bench_steps(field: &PlumeFieldModel, grid: &StatsGrid, ctx: &Context_, steps: usize) -> Result<BenchReport> {
    let [x0, x1, y0, y1] = field.geometry.extent;
    let start = [x0 + 0.05 * (x1 - x0), y0 + 0.05 * (y1 - y0)];
    let span = [0.9 * (x1 - x0), 0.9 * (y1 - y0)];
    let mut sim = Simulator::new(field, grid, &ctx.cfg.simulation)?;
    let inv = 1.0 / steps as f64;
    let mut checksum = 0.0;
    for i in 0..1000usize.min(steps) {
        checksum += sim.step(start[0], start[1] + i as f64 * 1e-6).concentration;
    }
    let before = alloc_count::allocations();
    let t0 = Instant::now();
    for i in 0..steps {
        let f = i as f64 * inv;
        checksum += sim.step(start[0] + f * span[0], start[1] + f * span[1]).concentration;
    }
    let seconds = t0.elapsed().as_secs_f64();
    let allocations = alloc_count::allocations() - before;
    std::hint::black_box(checksum);
    Ok(BenchReport {
        steps,
        seconds,
        steps_per_second: steps as f64 / seconds,
        allocations_during_run: allocations,
        allocation_free: allocations == 0,
    })
}

fn cmd_make_template(cli: &Cli, ctx: &Context_, theta: PlumeParams) -> Result<()> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("template.csv"));
    let dir = out_dir(&out);
    let inputs = begin(cli, &dir, &[])?;
    let tpl = make_synthetic_template(theta, &ctx.cfg.simulation, &ctx.cfg.template, ctx.cfg.simulation.seed)?;
    std::fs::create_dir_all(&dir)?;
    save_template(&tpl.records, &out)?;
    let whiffs = tpl.trace.whiff.windows(2).filter(|w| !w[0] && w[1]).count() + tpl.trace.whiff.first().map_or(0, |&w| w as usize);
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", serde_json::json!({ "rows": tpl.records.len(), "whiffs": whiffs }))?;
    finish(cli, ctx, &dir, inputs, vec![out])
}
