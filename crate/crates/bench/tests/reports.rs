use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use flowprobe_bench::matrix::load_fields;
use flowprobe_bench::report::{runs_csv, CSV_HEADER};
use flowprobe_bench::{emit_reports, run_matrix, sweep_epsilon, sweep_horizon, ExperimentConfig, Format, ReportBundle, RunOptions};

const MINI: &str = r#"
seed = 5
runs = 3
timing_repeats = 1

[[field]]
name = "drift"
spec = { kind = "constant", velocity = [1.0, -0.5] }

[[field]]
name = "spin"
spec = { kind = "rotation", omega = 1.5 }

[[solver]]
method = "euler"
steps = 4

[[solver]]
method = "adaptive"

[sweep]
epsilons = [0.001, 0.008]
horizons = [0.25, 0.5]
"#;

fn mini() -> ExperimentConfig {
    ExperimentConfig::from_toml(MINI).unwrap()
}

fn opts() -> RunOptions {
    RunOptions {
        serial_timing: false,
        with_sweeps: true,
    }
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn normalized_bundle_matches_golden() {
    let bundle = run_matrix(&mini(), opts()).unwrap().normalized();
    let mut json = bundle.to_json();
    json = json.replace(env!("CARGO_PKG_VERSION"), "<version>");
    let path = golden("mini_bundle.json");
    if std::env::var_os("FLOWPROBE_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &json).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(json, expected, "rerun with FLOWPROBE_UPDATE_GOLDEN=1 after an intended schema change");
}

#[test]
fn csv_schema_and_row_count() {
    let bundle = run_matrix(&mini(), opts()).unwrap();
    let text = runs_csv(&bundle.runs).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, CSV_HEADER);
    assert_eq!(&header[..10], [
        "run_id", "solver", "field", "steps", "nfe", "solver_time_s", "error", "success", "probe_similarity", "scheduled_N"
    ]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), bundle.cells.len() * 3);
    for row in &rows {
        let is_euler = &row[1] == "euler-4";
        // optional cells are empty, not zero
        assert_eq!(row[8].is_empty(), is_euler);
        assert_eq!(row[9].is_empty(), is_euler);
    }
}

#[test]
fn json_round_trips_and_cells_are_unique() {
    let bundle = run_matrix(&mini(), opts()).unwrap();
    assert_eq!(ReportBundle::from_json(&bundle.to_json()).unwrap(), bundle);
    let cells: BTreeSet<(String, String)> = bundle.cells.iter().map(|c| (c.field.clone(), c.solver.clone())).collect();
    assert_eq!(cells.len(), bundle.cells.len());
    assert_eq!(cells.len(), 4);
    let keys: Vec<_> = bundle.runs.iter().map(|r| (r.field.clone(), r.solver.clone(), r.run_id)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn starts_are_paired_across_solvers() {
    let cfg = ExperimentConfig::from_toml(&MINI.replace("runs = 3", "runs = 8")).unwrap();
    let bundle = run_matrix(&cfg, RunOptions::default()).unwrap();
    let mut by_row: BTreeMap<(String, usize), BTreeSet<String>> = BTreeMap::new();
    for r in &bundle.runs {
        by_row.entry((r.field.clone(), r.run_id)).or_default().insert(r.x0_sha256.clone());
    }
    assert!(by_row.values().all(|hashes| hashes.len() == 1));
    let distinct: BTreeSet<&String> = bundle.runs.iter().map(|r| &r.x0_sha256).collect();
    assert_eq!(distinct.len(), 16);
}

#[test]
fn reruns_are_identical_after_normalization() {
    let a = run_matrix(&mini(), opts()).unwrap().normalized();
    let b = run_matrix(&mini(), RunOptions { serial_timing: true, ..opts() }).unwrap().normalized();
    assert_eq!(a.to_json(), b.to_json());
    let mut other = mini();
    other.seed = 6;
    assert_ne!(run_matrix(&other, opts()).unwrap().normalized().runs, a.runs);
}

#[test]
fn emit_writes_requested_formats_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = run_matrix(&mini(), opts()).unwrap();
    let only_csv: BTreeSet<Format> = [Format::Csv].into();
    let written = emit_reports(&bundle, dir.path(), &only_csv).unwrap();
    let names: BTreeSet<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert!(names.contains("runs.csv") && !names.contains("bundle.json"));
    for f in ["epsilon_steps.dat", "horizon_failure.dat", "horizon_steps.dat", "schedule_vs_similarity.dat"] {
        assert!(names.contains(f), "{f}");
    }
    let steps = std::fs::read_to_string(dir.path().join("epsilon_steps.dat")).unwrap();
    for line in steps.lines() {
        let cols: Vec<f64> = line.split_whitespace().map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols.len(), 2);
    }

    let blocked = dir.path().join("runs.csv").join("sub");
    let err = emit_reports(&bundle, &blocked, &only_csv).unwrap_err();
    assert!(err.to_string().contains("runs.csv"), "{err}");
}

#[test]
fn constant_field_cell_example() {
    let text = r#"
runs = 10
[[field]]
name = "drift"
spec = { kind = "constant", velocity = [0.6, 0.8] }
[[solver]]
method = "euler"
steps = 50
[[solver]]
method = "adaptive"
"#;
    let bundle = run_matrix(&ExperimentConfig::from_toml(text).unwrap(), RunOptions::default()).unwrap();
    let cell = |s: &str| bundle.cells.iter().find(|c| c.solver == s).unwrap().aggregate.clone().unwrap();
    assert_eq!(cell("adaptive").mean_steps, 2.0);
    assert_eq!(cell("euler-50").mean_steps, 50.0);
    assert!(cell("adaptive").mean_error < 1e-12 && cell("euler-50").mean_error < 1e-12);
}

#[test]
fn rotation_corpus_schedules_between_bounds() {
    let text = r#"
runs = 40
[[field]]
name = "rot"
preset = "rotation"
[[solver]]
method = "adaptive"
"#;
    let bundle = run_matrix(&ExperimentConfig::from_toml(text).unwrap(), RunOptions::default()).unwrap();
    let steps = bundle.cells[0].aggregate.as_ref().unwrap().mean_steps;
    assert!(steps > 2.0 && steps < 10.0, "{steps}");
}

#[test]
fn epsilon_sweep_examples() {
    let cfg = mini();
    let fields = load_fields(&cfg).unwrap();
    let rows = sweep_epsilon(&cfg, &fields, &[0.001, 0.008]).unwrap();
    assert!(rows[0].mean_steps >= rows[1].mean_steps);

    // only the curved field: extremes saturate the clip in both directions
    let curved = ExperimentConfig::from_toml(&MINI.replace("kind = \"constant\", velocity = [1.0, -0.5]", "kind = \"rotation\", omega = 0.2")).unwrap();
    let fields = load_fields(&curved).unwrap();
    let rows = sweep_epsilon(&curved, &fields, &[1e6, 1e-12]).unwrap();
    assert_eq!(rows[0].mean_steps, 2.0);
    assert_eq!(rows[1].mean_steps, 10.0);
    assert!(sweep_epsilon(&curved, &fields, &[0.01]).is_err());
}

#[test]
fn horizon_sweep_examples() {
    let text = r#"
runs = 6
[[field]]
name = "drift"
spec = { kind = "constant", velocity = [1.0, 2.0] }
[[solver]]
method = "adaptive"
"#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let fields = load_fields(&cfg).unwrap();
    let dts = [0.1, 0.3, 0.5, 0.7, 0.9];
    let rows = sweep_horizon(&cfg, &fields, &dts).unwrap();
    assert!(rows.iter().all(|r| r.mean_steps == 2.0 && r.failure_rate == 0.0));
    let single = sweep_horizon(&cfg, &fields, &[0.5]).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0], rows[2]);
    assert!(sweep_horizon(&cfg, &fields, &[1.0]).is_err());
}
