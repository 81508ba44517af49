use cosmos::config::CosmosConfig;
use cosmos::generator::{simulate, OdorTrace, SimConfig, StatsGeometry, Trajectory};
use cosmos::ingest::{parse_template, segment_whiffs, TemplateDataset};
use cosmos::pipeline;
use cosmos::plume_fit::PlumeBounds;
use cosmos::synth::{analytic_field, make_synthetic_template, synthetic_prior_stats, write_template_csv, TemplateSpec};
use proptest::prelude::*;

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = CosmosConfig::default();
    cfg.simulation.seed = 42;
    cfg.agent.cast_growth = 1.5;
    let text = cfg.to_toml_string().unwrap();
    let back = CosmosConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn mismatched_rates_are_rejected() {
    let err = CosmosConfig::from_toml_str("[simulation]\nrows_per_second = 100\n").unwrap_err();
    assert_eq!(err.kind(), "config");
}

#[test]
fn learned_model_is_in_bounds_and_drives_the_generator() {
    let cfg = CosmosConfig::default();
    let tpl = make_synthetic_template(TemplateSpec::default_theta(), &cfg.simulation, &cfg.template, 3).unwrap();
    let mut csv = Vec::new();
    write_template_csv(&tpl.records, &mut csv).unwrap();
    let ds = parse_template(&csv[..], &cfg.ingest).unwrap();
    assert_eq!(ds.len(), tpl.records.len());
    let learned = pipeline::learn(&ds, &cfg).unwrap();
    assert!(PlumeBounds::default().contains(&learned.fit.params));
    assert!(learned.whiff_count > 100);

    let traj = pipeline::template_trajectory(&ds);
    let trace = simulate(&traj, &learned.field, &learned.stats, &cfg.simulation).unwrap();
    assert_eq!(trace.len(), ds.len());
    assert!(!trace.onsets.is_empty());
}

#[test]
fn trace_csv_round_trip_keeps_flags() {
    let spec = TemplateSpec::default();
    let field = analytic_field(TemplateSpec::default_theta(), spec.extent, spec.field_resolution).unwrap();
    let stats =
        synthetic_prior_stats(StatsGeometry::covering(spec.extent, 5.0).unwrap(), 12, 4.5, 1).unwrap();
    let cfg = SimConfig { seed: 5, ..SimConfig::default() };
    let traj = Trajectory::straight([2.0, 0.5], [0.5, 0.0], 8000, cfg.rows_per_second);
    let trace = simulate(&traj, &field, &stats, &cfg).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let back = OdorTrace::read_csv(&buf[..], trace.whiff_threshold).unwrap();
    assert_eq!(back.whiff, trace.whiff);
    assert_eq!(back.c, trace.c);

    let ds = pipeline::trace_dataset(&back, cfg.dt()).unwrap();
    let table = pipeline::whiff_table(&ds, &Default::default()).unwrap();
    assert_eq!(table.len(), segment_whiffs(&ds, 4.5).len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmentation_partitions_the_series(c in prop::collection::vec(0.0f64..10.0, 2..400)) {
        let n = c.len();
        let dt = 0.005;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let zeros = vec![0.0; n];
        let ds = TemplateDataset::from_streakline_series(&t, &t, &zeros, &c, dt, 4.5).unwrap();
        let events = segment_whiffs(&ds, 4.5);
        let mut flags = vec![false; n];
        let mut covered = 0;
        for (i, e) in events.iter().enumerate() {
            prop_assert!(e.sample_count > 0);
            if i > 0 {
                // whiffs are maximal, so consecutive ones are separated
                prop_assert!(e.onset_index > events[i - 1].end_index());
            }
            for f in &mut flags[e.onset_index..e.end_index()] {
                *f = true;
            }
            covered += e.sample_count;
        }
        prop_assert_eq!(&flags, &ds.whiff_flag);
        prop_assert_eq!(covered, ds.whiff_flag.iter().filter(|&&f| f).count());
    }
}
