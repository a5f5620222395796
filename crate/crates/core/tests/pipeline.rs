use macrozip::bounds::lzw_bit_bound;
use macrozip::harness::report::{conditions_from_metrics, metrics_csv, read_metrics, METRICS_HEADER};
use macrozip::harness::{emit_report, run_pipeline, Condition, ExperimentConfig};
use macrozip::lzw::{lzw_build, lzw_encoded_bits};

fn tiny_maze() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::maze_default();
    cfg.seeds = vec![5, 6];
    cfg.train_task_count = 3;
    cfg.test_task_count = 2;
    cfg.episodes = 30;
    cfg.train_episodes = Some(200);
    cfg.maze.width = 12;
    cfg.maze.height = 12;
    cfg.maze.pitch = 3;
    cfg.maze.map_count = 1;
    cfg
}

fn tiny_mountain_car() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::mountain_car_default();
    cfg.seeds = vec![2];
    cfg.train_task_count = 3;
    cfg.test_task_count = 1;
    cfg.episodes = 10;
    cfg
}

#[test]
fn repeated_runs_are_identical() {
    for cfg in [tiny_maze(), tiny_mountain_car()] {
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&cfg).unwrap();
        assert_eq!(metrics_csv(&a.conditions).unwrap(), metrics_csv(&b.conditions).unwrap());
        assert_eq!(a.runs[0].corpus, b.runs[0].corpus);
    }
}

#[test]
fn every_condition_sees_every_test_task() {
    let cfg = tiny_maze();
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.conditions.len(), Condition::ALL.len());
    for c in &report.conditions {
        assert_eq!(c.curves.len(), cfg.seeds.len() * cfg.test_task_count);
        assert!(c.curves.iter().all(|tc| tc.curve.len() == cfg.episodes));
    }
}

#[test]
fn empty_test_set_yields_header_only_metrics() {
    let mut cfg = tiny_maze();
    cfg.test_task_count = 0;
    let report = run_pipeline(&cfg).unwrap();
    assert!(report.conditions.iter().all(|c| c.curves.is_empty()));
    assert_eq!(metrics_csv(&report.conditions).unwrap(), format!("{METRICS_HEADER}\n"));
}

#[test]
fn metrics_file_reproduces_summaries() {
    let report = run_pipeline(&tiny_maze()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path()).unwrap();
    let rows = read_metrics(&std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap()).unwrap();
    let back = conditions_from_metrics(&rows).unwrap();
    for (a, b) in report.conditions.iter().zip(&back) {
        assert_eq!(a.condition, b.condition);
        assert_eq!(a.jumpstart.to_bits(), b.jumpstart.to_bits());
        assert_eq!(a.total_reward.to_bits(), b.total_reward.to_bits());
        assert_eq!(a.mean_curve, b.mean_curve);
    }
}

#[test]
fn emit_report_fails_on_unwritable_directory() {
    let report = run_pipeline(&tiny_mountain_car()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    assert!(emit_report(&report, &blocker.join("out")).is_err());
}

#[test]
fn mountain_car_symbols_stay_within_registry() {
    let report = run_pipeline(&tiny_mountain_car()).unwrap();
    let run = &report.runs[0];
    let clusters = run.registry.as_ref().unwrap().len();
    assert_eq!(run.alphabet_size, clusters);
    for t in &run.corpus {
        assert!(t.actions.as_discrete().unwrap().iter().all(|&s| (s as usize) < clusters));
    }
}

/// Two grown entries cannot save the six symbols the closed form assumes.
#[test]
fn lzw_closed_form_fails_on_short_corpus() {
    let tau: &[u32] = &[0, 1, 0, 1, 2, 3, 4, 5];
    let build = lzw_build(&[tau], 6, 3).unwrap();
    assert_eq!(build.codebook.len(), 8);
    let bits = lzw_encoded_bits(&[tau], &build.codebook).unwrap();
    let bound = lzw_bit_bound(build.codebook.len(), 6, &[tau.len()], 3).unwrap();
    assert_eq!((bits, bound), (18, 6));
}
