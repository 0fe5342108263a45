use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bme680-surrogates"));
    c.env_remove("BME680_OUT_DIR");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    let o = bin().args(args).arg("--out").arg(out).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn quadratic_temperature_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    run(&["train", "--family", "quadratic", "--quantity", "temperature"], out);
    assert!(out.join("models/temperature/quadratic/seed1000.json").is_file());
    let o = run(&["evaluate", "--family", "quadratic", "--quantity", "temperature"], out);
    assert!(stdout(&o).starts_with("seeds: master 0 train [1000, 1016"));
    let rec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("records/temperature_quadratic.json")).unwrap()).unwrap();
    assert!(rec["norm_rmse"].as_f64().unwrap() < 1e-6);
}

#[test]
fn unknown_family_is_a_machine_readable_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["train", "--family", "transformer", "--quantity", "pressure", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
    let err = String::from_utf8(o.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("E:cli:unknown_family:"), "{err}");
}

#[test]
fn unknown_quantity_and_bad_config_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["gen-data", "--quantity", "gas", "--out"]).arg(dir.path()).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("E:"));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"nonsense\": 1}").unwrap();
    let o = bin().args(["pareto", "--config"]).arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().starts_with("E:"));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
  "master_seed": 3,
  "roster": {"temperature": ["original", "linear", "quadratic"], "pressure": ["linear", "lut20"]},
  "evaluation": {"sequence_length": 300, "dataset_count": 2, "seeds": 2}
}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn pipeline_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let mut trees = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        run(&["--config", cfg, "gen-data", "--quantity", "humidity", "--kind", "sequence", "--length", "200"], &out);
        run(&["--config", cfg, "gen-data", "--quantity", "pressure"], &out);
        run(&["--config", cfg, "evaluate", "--quantity", "temperature"], &out);
        run(&["--config", cfg, "evaluate", "--quantity", "pressure"], &out);
        let p = run(&["--config", cfg, "pareto"], &out);
        let line = stdout(&p).lines().find(|l| l.starts_with("temperature frontier:")).unwrap().to_string();
        assert!(line.contains("linear") && line.contains("quadratic") && line.contains("original"), "{line}");
        run(&["--config", cfg, "emit-c", "--quantity", "pressure", "--family", "lut20", "--vectors", "50"], &out);
        let r = run(&["--config", cfg, "report", "--quantity", "pressure"], &out);
        assert!(stdout(&r).starts_with("seeds: master 3 train [1003, 1019] test [2003, 2019]"));
        trees.push(tree(&out));
    }
    assert_eq!(trees[0], trees[1]);
    let names: Vec<&str> = trees[0].iter().map(|(n, _)| n.as_str()).collect();
    for want in [
        "data/humidity_seq1003.csv",
        "data/pressure_mesh20.json",
        "records/temperature_quadratic.json",
        "pareto.csv",
        "kernels/bme680_pressure_lut20.c",
        "kernels/vectors_bme680_pressure_lut20.csv",
        "report.json",
        "plot_data.csv",
    ] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
}

#[test]
fn env_var_sets_the_output_dir_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env");
    let o = bin()
        .env("BME680_OUT_DIR", &env_out)
        .args(["gen-data", "--quantity", "temperature", "--levels", "5"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("data/temperature_mesh5.csv").is_file());
    let flag_out = dir.path().join("flag");
    let o = bin()
        .env("BME680_OUT_DIR", &env_out)
        .args(["gen-data", "--quantity", "humidity", "--levels", "5", "--out"])
        .arg(&flag_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag_out.join("data/humidity_mesh5.csv").is_file());
    assert!(!env_out.join("data/humidity_mesh5.csv").exists());
}

#[test]
fn sequence_families_are_opt_in_for_pressure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"evaluation": {"train": {"sequence_length": 200}}}"#).unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .args(["--config"])
        .arg(&cfg)
        .args(["train", "--quantity", "pressure", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trained: Vec<String> = std::fs::read_dir(out.join("models/pressure"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(trained.len(), 12);
    assert!(trained.iter().all(|f| !f.starts_with("arma") && !f.starts_with("gru") && !f.starts_with("rnn")));
}
