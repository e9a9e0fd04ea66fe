use std::path::Path;
use std::process::{Command, Output};

use mobility_core::pipeline::PipelineConfig;
use s2m::commands;
use s2m::config;
use serde_json::Value;

fn s2m(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2m")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = s2m(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_to(dir: &Path, archetype: &str, seed: &str) -> std::path::PathBuf {
    let file = dir.join(format!("{archetype}_{seed}.json"));
    ok(&["gen", "--archetype", archetype, "--seed", seed, "--out", path(&file)]);
    file
}

#[test]
fn run_reports_against_annotated_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = gen_to(dir.path(), "laptop", "42");
    let stdout = ok(&["run", "--input", path(&input)]);
    let doc: Value = serde_json::from_slice(&stdout).unwrap();
    assert!(doc["parts"].as_array().unwrap().len() >= 2);
    assert!(doc["report"]["iou"].as_f64().unwrap() >= 0.95, "{}", doc["report"]);
    assert_eq!(doc["report"]["proposal_recall"].as_f64(), Some(1.0));
}

#[test]
fn missing_input_exits_with_two() {
    let out = s2m(&["run", "--input", "/nonexistent/shape.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read input"));
}

#[test]
fn gen_run_and_eval_are_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&["gen", "--archetype", "drawer", "--seed", "3"]);
    let b = ok(&["gen", "--archetype", "drawer", "--seed", "3"]);
    assert_eq!(a, b);
    let file = gen_to(dir.path(), "drawer", "3");
    assert_eq!(std::fs::read(&file).unwrap(), a);

    let r1 = ok(&["run", "--input", path(&file)]);
    let r2 = ok(&["run", "--input", path(&file)]);
    assert_eq!(r1, r2);

    let pred = dir.path().join("pred.json");
    std::fs::write(&pred, &r1).unwrap();
    let e1 = ok(&["eval", "--pred", path(&pred), "--gt", path(&file)]);
    let e2 = ok(&["eval", "--pred", path(&pred), "--gt", path(&file)]);
    assert_eq!(e1, e2);
    let report: Value = serde_json::from_slice(&e1).unwrap();
    assert_eq!(report["ta"].as_f64(), Some(1.0));

    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    gen_to(&data, "laptop", "1");
    gen_to(&data, "door", "1");
    let d1 = ok(&["eval", "--dataset", path(&data), "--workers", "1"]);
    let d2 = ok(&["eval", "--dataset", path(&data), "--workers", "2"]);
    assert_eq!(d1, d2);
}

#[test]
fn dataset_generation_writes_an_index() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("set");
    ok(&["gen", "--dataset", path(&data), "--seeds", "0", "--points", "512"]);
    let shapes = commands::load_dataset(&data).unwrap();
    assert_eq!(shapes.len(), 7);
    assert!(shapes.iter().all(|s| s.cloud.len() == 512));
}

#[test]
fn sweep_prints_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    gen_to(dir.path(), "laptop", "0");
    gen_to(dir.path(), "drawer", "0");
    let json = dir.path().join("sweep").with_extension("out");
    let stdout = ok(&[
        "sweep", "--dataset", path(dir.path()), "--param", "tau_conf", "--values", "0.3,0.5,0.7", "--out", path(&json),
    ]);
    let text = String::from_utf8(stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert!(lines[0].starts_with("tau_conf"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);

    // a one-value sweep at the default matches a plain evaluation
    let shapes = commands::load_dataset(dir.path()).unwrap();
    let config = PipelineConfig::default();
    let rows = commands::sweep(&shapes, &config, "tau_conf", &["0.5".into()], Some(1)).unwrap();
    let report = commands::eval_dataset(&shapes, &config, Some(1)).unwrap();
    assert_eq!(rows[0].mean_iou, report.mean_iou);
    assert_eq!(rows[0].recall, report.proposal_recall);
}

#[test]
fn sweep_of_an_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = s2m(&["sweep", "--dataset", path(dir.path()), "--param", "tau_conf", "--values", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no shapes found"));
}

#[test]
fn unknown_setting_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = gen_to(dir.path(), "laptop", "0");
    let out = s2m(&["run", "--input", path(&input), "--set", "no_such_knob=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown parameter 'no_such_knob'"));

    let out = s2m(&["run", "--input", path(&input), "--set", "tau_conf=2.0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"));
}

#[test]
fn shipped_config_matches_defaults() {
    let file = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    assert_eq!(config::load(Some(&file), &[]).unwrap(), PipelineConfig::default());
    let text = config::to_toml(&PipelineConfig::default());
    let reparsed = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(reparsed.path(), text).unwrap();
    assert_eq!(config::load(Some(reparsed.path()), &[]).unwrap(), PipelineConfig::default());
}

#[test]
fn overrides_coerce_and_apply_in_order() {
    let c = config::load(None, &["rotation_delta=45".into(), "top_r=5".into(), "rotation_delta=60".into()]).unwrap();
    assert_eq!(c.rotation_delta, 60.0);
    assert_eq!(c.top_r, 5);
    let c = config::load(None, &["scales=[0.02, 0.03]".into()]).unwrap();
    assert_eq!(c.scales, vec![0.02, 0.03]);
    assert!(config::load(None, &["tau_conf".into()]).is_err());
}

#[test]
fn xyz_input_runs_without_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let gt = mobility_core::bench::generate(mobility_core::bench::Archetype::Laptop, 5, 2048).unwrap();
    let text: String = (0..gt.cloud.len())
        .map(|i| {
            let p = gt.cloud.point(i);
            format!("{} {} {}\n", p.x, p.y, p.z)
        })
        .collect();
    let file = dir.path().join("scan.xyz");
    std::fs::write(&file, format!("# laptop\n{text}")).unwrap();
    let doc: Value = serde_json::from_slice(&ok(&["run", "--input", path(&file)])).unwrap();
    assert_eq!(doc["shape_id"], "scan");
    assert!(doc.get("report").is_none());

    assert!(commands::parse_xyz("1 2").is_err());
    assert!(commands::parse_xyz("1 2 3 0 0 1\n4 5 6\n").is_err());
}

#[test]
fn augment_writes_posed_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let input = gen_to(dir.path(), "laptop", "2");
    let out = dir.path().join("posed");
    ok(&["augment", "--input", path(&input), "--poses", "2", "--out-dir", path(&out)]);
    let shapes = commands::load_dataset(&out).unwrap();
    assert_eq!(shapes.len(), 2);
}
