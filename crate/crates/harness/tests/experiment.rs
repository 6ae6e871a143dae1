use std::fs;

use asyncfo::config::SimConfig;
use asyncfo::experiment::{
    metrics_csv, run_experiment, simulate, sweep, verify_run, SweepParam, METRICS_HEADER,
};
use asyncfo::presets::preset_qp;

fn small(seed: u64) -> SimConfig {
    let mut cfg = preset_qp(seed);
    cfg.name = "small".into();
    cfg.input_dims = vec![1; 3];
    cfg.output_dims = vec![1; 3];
    cfg.epoch_count = 3;
    cfg.kappa = vec![40];
    cfg.p_update = 0.4;
    cfg.p_measure = 0.4;
    cfg.p_communicate = 0.4;
    cfg.gamma = vec![0.05];
    cfg
}

#[test]
fn metrics_csv_has_one_row_per_tick() {
    let exp = simulate(&small(1)).unwrap();
    let csv = metrics_csv(&exp);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    assert!(METRICS_HEADER.starts_with("k,ell,alpha,beta,delta"));
    assert_eq!(lines.count(), *exp.series.eta.last().unwrap());
}

#[test]
fn summary_matches_series() {
    let exp = simulate(&small(2)).unwrap();
    let s = &exp.summary;
    assert_eq!(s.alpha_at_eta.len(), 3);
    for ell in 0..3 {
        assert_eq!(s.alpha_at_eta[ell], exp.series.alpha_at_eta(ell));
        assert_eq!(s.alpha_after_change[ell], exp.series.alpha_after_change(ell));
    }
    assert!(s.lemma_checks.is_some());
    assert_eq!(s.config_hash, small(2).hash());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&small(3), &a).unwrap();
    run_experiment(&small(3), &b).unwrap();
    for name in ["config.toml", "metrics.csv", "epochs.csv", "trace.csv", "schedule.txt", "constants.txt"] {
        let (x, y) = (fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
    let strip = |p: std::path::PathBuf| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    assert_eq!(strip(a.join("summary.json")), strip(b.join("summary.json")));
}

#[test]
fn verify_accepts_written_runs_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small(4), dir.path()).unwrap();
    assert!(verify_run(dir.path()).unwrap().passed());

    // Dropping every event of the schedule removes the forced events.
    let path = dir.path().join("schedule.txt");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.truncate(3);
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let v = verify_run(dir.path()).unwrap();
    assert!(!v.passed());
    assert!(!v.schedule_violations.is_empty());
}

#[test]
fn sweep_matches_serial_runs() {
    let values = [1.0, 4.0];
    let rows = sweep(&small, SweepParam::B, &values, 3, None).unwrap();
    for (row, b) in rows.iter().zip(values) {
        for seed in 0..3 {
            let mut cfg = small(seed);
            cfg.b = b as usize;
            cfg.delay_max = cfg.b - 1;
            let serial = simulate(&cfg).unwrap().summary.mean_alpha;
            assert_eq!(row.per_seed[seed as usize].to_bits(), serial.to_bits());
        }
    }
}

#[test]
fn sweep_writes_per_seed_directories() {
    let dir = tempfile::tempdir().unwrap();
    sweep(&small, SweepParam::Gamma, &[0.01], 2, Some(dir.path())).unwrap();
    assert!(dir.path().join("sweep.csv").exists());
    assert!(dir.path().join("Gamma=0.01").join("seed=1").join("metrics.csv").exists());
}

#[test]
fn invalid_sweep_value_is_a_config_error() {
    let err = sweep(&small, SweepParam::B, &[3.0], 1, None).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
