use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn duio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_duio"))
        .args(args)
        .output()
        .expect("spawn duio")
}

fn code(args: &[&str]) -> i32 {
    duio(args).status.code().unwrap_or(-1)
}

fn benchmark_toml() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/benchmark.toml")).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", &benchmark_toml());
    let data = tmp.path().join("data");
    let design = tmp.path().join("design");
    let run = tmp.path().join("run");
    assert_eq!(code(&["collect", "--config", s(&cfg), "--out", s(&data)]), 0);
    assert!(data.join("node1/X.csv").exists());
    assert_eq!(code(&["check", s(&data), "--config", s(&cfg)]), 0);
    for method in ["model", "data", "id"] {
        let out = design.join(method);
        let mut args = vec!["design", "--config", s(&cfg), "--method", method, "--out", s(&out)];
        if method != "model" {
            args.extend(["--data", s(&data)]);
        }
        assert_eq!(code(&args), 0, "{method}");
        assert!(out.join("gains.json").exists());
    }
    let gains = design.join("data/gains.json");
    assert_eq!(code(&["run", "--config", s(&cfg), "--gains", s(&gains), "--out", s(&run)]), 0);
    for f in ["trajectory.csv", "errors.csv", "summary.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(run.join("errors.csv")).unwrap();
    assert!(header.starts_with("t,e1,e2,e3,e4,e5,spread"));
}

#[test]
fn too_few_samples_is_an_excitation_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let text = benchmark_toml().replace("samples = 50", "samples = 3");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    assert_eq!(code(&["collect", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]), 2);
}

#[test]
fn identification_without_grant_is_a_design_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &benchmark_toml().replace("id_grant = true", "id_grant = false"));
    let data = tmp.path().join("data");
    assert_eq!(code(&["collect", "--config", s(&cfg), "--out", s(&data)]), 0);
    let out = tmp.path().join("d");
    assert_eq!(
        code(&["design", "--config", s(&cfg), "--method", "id", "--data", s(&data), "--out", s(&out)]),
        5
    );
}

#[test]
fn missing_data_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &benchmark_toml());
    assert_eq!(code(&["check", s(&tmp.path().join("nowhere")), "--config", s(&cfg)]), 4);
}

#[test]
fn blind_output_derivative_fails_the_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &benchmark_toml());
    let data = tmp.path().join("data");
    assert_eq!(code(&["collect", "--config", s(&cfg), "--out", s(&data)]), 0);
    // zero every output derivative of node 2
    let path = data.join("node2/Ydot.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let zeros: Vec<&str> = line.split(',').map(|_| "0").collect();
        out.push_str(&zeros.join(","));
        out.push('\n');
    }
    std::fs::write(&path, out).unwrap();
    let res = duio(&["check", s(&data), "--config", s(&cfg), "--explain"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn gains_for_another_plant_are_a_dimension_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let bench = write_config(tmp.path(), "b.toml", &benchmark_toml());
    let out = tmp.path().join("d");
    assert_eq!(code(&["design", "--config", s(&bench), "--method", "model", "--out", s(&out)]), 0);

    let small = r#"
seed = 1
[plant]
a = [[0.0, 1.0], [-2.0, -0.5]]
b = [[0.0], [1.0]]
e = [[1.0], [0.0]]
nodes = [
  { c = [[1.0, 0.0], [0.0, 1.0]], known_inputs = [0], b_p = [[1.0], [0.0]] },
  { c = [[1.0, 1.0], [0.0, 1.0]], known_inputs = [0], b_p = [[1.0], [0.0]] },
]
[graph]
kind = "path"
"#;
    let other = write_config(tmp.path(), "s.toml", small);
    let gains = out.join("gains.json");
    let run = tmp.path().join("r");
    assert_eq!(code(&["run", "--config", s(&other), "--gains", s(&gains), "--out", s(&run)]), 6);
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{}\nbogus = 1\n", benchmark_toml()));
    let c = code(&["design", "--config", s(&cfg), "--method", "model", "--out", s(&tmp.path().join("o"))]);
    assert_ne!(c, 0);
}
