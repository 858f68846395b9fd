use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mhc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mhc"))
        .args(args)
        .env_remove("MHC_OUT_DIR")
        .output()
        .expect("spawn mhc")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(suffix))
        .collect();
    out.sort();
    out
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn csv_hashes(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["path"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .filter(|(p, _)| p.ends_with(".csv"))
        .collect()
}

#[test]
fn run_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut hashes = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("r{k}"));
        let o = mhc(&[
            "run",
            "--config",
            &config("normal_ls_desk.toml"),
            "--seed",
            "7",
            "--set",
            "iterations=60",
            "--set",
            "burn_in=10",
            "--set",
            "mhc.m=500",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(manifest(&out)["complete"], true);
        hashes.push(csv_hashes(&out));
    }
    assert!(hashes[0].len() >= 7, "{:?}", hashes[0]);
    assert_eq!(hashes[0], hashes[1]);
}

#[test]
fn model_choice_summaries_carry_bayes_factors() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mhc(&[
        "run",
        "--config",
        &config("model_choice_desk.toml"),
        "--set",
        "iterations=200",
        "--set",
        "burn_in=50",
        "--set",
        "abc.draws=2000",
        "--set",
        "abc.accept=100",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summaries = files_with_suffix(tmp.path(), ".summary.csv");
    assert_eq!(summaries.len(), 4);
    for s in summaries {
        let text = fs::read_to_string(&s).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.ends_with("bf_model1,bf_model2,bayes_factor"), "{}: {header}", s.display());
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row.split(',').count(), header.split(',').count());
    }
}

#[test]
fn cir_two_algorithms_give_two_chains() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mhc(&[
        "run",
        "--config",
        &config("cir_desk.toml"),
        "--set",
        "algorithms=[\"exact_mh\", \"mhc_random\"]",
        "--set",
        "iterations=20",
        "--set",
        "burn_in=5",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chains = files_with_suffix(tmp.path(), ".chain.csv");
    let summaries = files_with_suffix(tmp.path(), ".summary.csv");
    let names: Vec<String> = chains
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["exact_mh.chain.csv", "mhc_random.chain.csv"]);
    assert_eq!(summaries.len(), 2);
    assert!(tmp.path().join("manifest.json").exists());
    assert!(tmp.path().join("data.csv").exists());
}

#[test]
fn validate_reports_field_errors() {
    let ok = mhc(&["validate", "--config", &config("cir_paper.toml")]);
    assert!(ok.status.success(), "{}", stderr(&ok));

    let abc = mhc(&[
        "validate",
        "--config",
        &config("cir_desk.toml"),
        "--set",
        "algorithms=[\"abc\"]",
        "--set",
        "abc.summary.kind=\"mean\"",
        "--set",
        "abc.draws=100",
        "--set",
        "abc.accept=10",
    ]);
    assert_eq!(abc.status.code(), Some(1));
    assert!(stderr(&abc).contains("abc requires proper prior"), "{}", stderr(&abc));

    let mcwm = mhc(&[
        "validate",
        "--config",
        &config("lotka_volterra_desk.toml"),
        "--set",
        "algorithms=[\"mcwm\"]",
    ]);
    assert_eq!(mcwm.status.code(), Some(1));
    assert!(stderr(&mcwm).contains("no conditional-latent structure"), "{}", stderr(&mcwm));
}

#[test]
fn bad_override_is_an_error() {
    let o = mhc(&["validate", "--config", &config("cir_desk.toml"), "--set", "no_such_key=1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = mhc(&["validate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

fn slice_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| if v.is_empty() { f64::NAN } else { v.parse().unwrap() })
                .collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn constant_classifier_slice_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("slice.csv");
    let o = mhc(&[
        "slice",
        "--config",
        &config("normal_ls_desk.toml"),
        "--param",
        "mu",
        "--grid",
        "-0.2:0.2:5",
        "--constant-half",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = slice_rows(&out);
    assert_eq!(header, ["mu", "eta", "oracle_log_lik"]);
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] == 0.0));
}

#[test]
fn cir_oracle_slice_peaks_at_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fs::read_to_string(config("cir_desk.toml"))
        .unwrap()
        .replace("kind = \"logistic_l1_cv\"", "kind = \"oracle\"")
        .replace("folds = 10", "clip = 1e-15");
    let cfg_path = tmp.path().join("cir_oracle.toml");
    fs::write(&cfg_path, cfg).unwrap();
    let out = tmp.path().join("alpha.csv");
    let o = mhc(&[
        "slice",
        "--config",
        cfg_path.to_str().unwrap(),
        "--param",
        "alpha",
        "--grid",
        "0.05:0.09:9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = slice_rows(&out);
    let best = rows
        .iter()
        .max_by(|a, b| a[1].total_cmp(&b[1]))
        .unwrap();
    assert!((best[0] - 0.07).abs() <= 0.005 + 1e-12, "peak at {}", best[0]);
    for r in &rows {
        assert!((r[1] - r[2]).abs() < 1e-8 * r[2].abs().max(1.0), "{r:?}");
    }
}

#[test]
fn summarize_matches_run_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mhc(&[
        "run",
        "--config",
        &config("normal_ls_desk.toml"),
        "--set",
        "algorithms=[\"exact_mh\"]",
        "--set",
        "iterations=100",
        "--set",
        "burn_in=10",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain = tmp.path().join("exact_mh.chain.csv");
    let out = tmp.path().join("again.csv");
    let s = mhc(&[
        "summarize",
        "--chain",
        chain.to_str().unwrap(),
        "--burn-in",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(s.status.success(), "{}", stderr(&s));
    assert_eq!(
        fs::read_to_string(out).unwrap(),
        fs::read_to_string(tmp.path().join("exact_mh.summary.csv")).unwrap()
    );
}

#[test]
fn list_experiments_names_all_five() {
    let o = mhc(&["list-experiments"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["normal_ls", "ricker", "lotka_volterra", "cir", "model_choice"] {
        assert!(text.contains(id), "{text}");
    }
}

#[test]
fn lotka_volterra_linear_slice_spikes_near_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("lv.csv");
    let o = mhc(&[
        "slice",
        "--config",
        &config("lotka_volterra_desk.toml"),
        "--set",
        "mhc.classifier={kind=\"logistic_l1_cv\"}",
        "--param",
        "theta1",
        "--grid",
        "0.002:0.02:10",
        "--param",
        "theta4",
        "--grid",
        "0.002:0.02:10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = slice_rows(&out);
    assert_eq!(header[..3], ["theta1", "theta4", "eta"]);
    assert_eq!(rows.len(), 100);
    let best = rows.iter().max_by(|a, b| a[2].total_cmp(&b[2])).unwrap();
    let step = 0.002 + 1e-12;
    assert!(
        (best[0] - 0.01).abs() <= step && (best[1] - 0.01).abs() <= step,
        "max cell at ({}, {})",
        best[0],
        best[1]
    );
}
