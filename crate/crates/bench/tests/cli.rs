use std::path::Path;
use std::process::Command;

fn flowprobe(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_flowprobe")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn shipped_example_config_validates() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example.toml");
    let (code, out, err) = flowprobe(&["validate-config", "--config", path]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("ok:"));
}

#[test]
fn run_writes_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "runs = 2\n[[field]]\nname = \"d\"\nspec = { kind = \"constant\", velocity = [1.0] }\n[[solver]]\nmethod = \"adaptive\"\n",
    );
    let out = dir.path().join("out");
    let (code, _, err) = flowprobe(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3", "--format", "json"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("bundle.json").exists());
    assert!(!out.join("runs.csv").exists());
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing_weights = write(
        dir.path(),
        "w.toml",
        "[[field]]\nname = \"net\"\nweights = \"absent.fpw\"\n[[solver]]\nmethod = \"adaptive\"\n",
    );
    let (code, _, err) = flowprobe(&["run", "--config", &missing_weights]);
    assert_eq!(code, 1);
    assert!(err.contains("'net'"), "{err}");

    let (code, _, _) = flowprobe(&["validate-config", "--config", dir.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(code, 1);

    let no_solver = write(dir.path(), "s.toml", "[[field]]\nname = \"d\"\nspec = { kind = \"rotation\", omega = 1.0 }\nsolver = []\n");
    let (code, _, _) = flowprobe(&["validate-config", "--config", &no_solver]);
    assert_eq!(code, 1);
}

#[test]
fn cell_with_no_successful_run_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // the state overflows on the second Euler step
    let cfg = write(
        dir.path(),
        "b.toml",
        "runs = 2\n[[field]]\nname = \"blowup\"\nspec = { kind = \"affine\", rate = 1e200, offset = [1.0] }\n[[solver]]\nmethod = \"euler\"\nsteps = 2\n",
    );
    let out = dir.path().join("out");
    let (code, stdout, _) = flowprobe(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{stdout}");
    let csv = std::fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn train_then_run_learned_field() {
    let dir = tempfile::tempdir().unwrap();
    let train_cfg = write(
        dir.path(),
        "t.toml",
        "batch_size = 16\nsteps = 50\nlearning_rate = 0.002\nseed = 1\nhidden = [8]\n[dataset]\nname = \"two-moons\"\nnoise = 0.05\n",
    );
    let (code, _, err) = flowprobe(&["train", "--config", &train_cfg, "--out", dir.path().join("net").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let run_cfg = write(
        dir.path(),
        "r.toml",
        "runs = 3\ntiming_repeats = 1\n[[field]]\nname = \"moons\"\nweights = \"net/weights.fpw\"\n[[solver]]\nmethod = \"adaptive\"\n",
    );
    let (code, stdout, err) = flowprobe(&["run", "--config", &run_cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("moons"));
}
