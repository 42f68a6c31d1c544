use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fbound::closed_form::bessel_cobb_douglas;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn specs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn fbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbound"))
        .args(args)
        .env_remove("FB_THREADS")
        .output()
        .expect("binary runs")
}

fn spec(name: &str) -> String {
    specs().join(name).display().to_string()
}

fn write_spec(dir: &TempDir, name: &str, json: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, json).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Header fields and data rows of a CSV artifact.
fn parse_csv(text: &str) -> (Vec<String>, Vec<String>, Vec<Vec<String>>) {
    let comments: Vec<String> = text.lines().take_while(|l| l.starts_with('#')).map(String::from).collect();
    let body: String = text.lines().skip(comments.len()).map(|l| format!("{l}\n")).collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (comments, header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const CASES: [(&str, &str); 6] = [
    (r#"{"kind":"gbm","mu":0.0,"sigma":1.0,"r":0.5}"#, r#"{"kind":"cobb_douglas","alpha":0.5,"beta":0.5}"#),
    (r#"{"kind":"bessel3","r":0.5}"#, r#"{"kind":"cobb_douglas","alpha":0.5,"beta":0.5}"#),
    (r#"{"kind":"cev","r":0.5,"sigma":1.0,"gamma":0.5}"#, r#"{"kind":"cobb_douglas","alpha":0.5,"beta":0.5}"#),
    (r#"{"kind":"gbm","mu":0.0,"sigma":1.0,"r":1.5}"#, r#"{"kind":"ces","n":2}"#),
    (r#"{"kind":"bessel3","r":1.5}"#, r#"{"kind":"ces","n":3}"#),
    (r#"{"kind":"cev","r":1.5,"sigma":1.0,"gamma":0.5}"#, r#"{"kind":"ces","n":5}"#),
];

#[test]
fn both_methods_agree_on_gbm_cobb_douglas() {
    let o = fbound(&["boundary", "--spec", &spec("gbm_cd.json"), "--method", "both"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (comments, header, rows) = parse_csv(&stdout(&o));
    assert_eq!(comments[0], "# schema: fb/1");
    assert_eq!(header, ["x", "b", "b_generic", "rel_diff"]);
    assert_eq!(rows.len(), 200);
    let gap = column(&header, &rows, "rel_diff").into_iter().fold(0.0, f64::max);
    assert!(gap <= 1e-6, "max disagreement {gap}");
}

#[test]
fn figure_one_table_matches_the_closed_form() {
    let o = fbound(&[
        "boundary",
        "--spec",
        &spec("fig1_bessel_cd.json"),
        "--grid-min",
        "0.1",
        "--grid-max",
        "10",
        "--grid-points",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, header, rows) = parse_csv(&stdout(&o));
    let x = column(&header, &rows, "x");
    let b = column(&header, &rows, "b");
    assert_eq!(x.len(), 9);
    for (x, b) in x.iter().zip(&b) {
        let want = bessel_cobb_douglas(*x, 0.5, 0.5, 0.5).unwrap();
        assert!((b / want - 1.0).abs() < 1e-12, "{x}: {b} vs {want}");
    }
    assert!(b.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn figure_two_table_is_json_with_schema() {
    let o = fbound(&["boundary", "--spec", &spec("fig2_cev_cd.json"), "--format", "json", "--grid-points", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["schema"], "fb/1");
    assert_eq!(v["manifest"]["problem"]["diffusion"]["kind"], "cev");
    assert_eq!(v["result"]["b"].as_array().unwrap().len(), 7);
}

#[test]
fn manifest_hash_matches_embedded_manifest() {
    let o = fbound(&["boundary", "--spec", &spec("gbm_cd.json"), "--grid-points", "3"]);
    let (comments, _, _) = parse_csv(&stdout(&o));
    let hash = comments[1].strip_prefix("# manifest_sha256: ").unwrap();
    let manifest = comments[2].strip_prefix("# manifest: ").unwrap();
    assert_eq!(hash, hex::encode(Sha256::digest(manifest.as_bytes())));

    let j = fbound(&["boundary", "--spec", &spec("gbm_cd.json"), "--grid-points", "3", "--format", "json"]);
    let v: Value = serde_json::from_str(&stdout(&j)).unwrap();
    assert_eq!(v["manifest_sha256"], hash);
    assert_eq!(serde_json::to_string(&v["manifest"]).unwrap().len(), manifest.len());
}

#[test]
fn closed_method_on_a_mix_is_unsupported() {
    let o = fbound(&["boundary", "--spec", &spec("bessel_mix.json"), "--method", "closed"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no closed-form boundary"), "{}", stderr(&o));
    let g = fbound(&["boundary", "--spec", &spec("bessel_mix.json"), "--method", "generic", "--grid-points", "5"]);
    assert!(g.status.success(), "{}", stderr(&g));
}

#[test]
fn discount_below_saturation_is_an_assumption_violation() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(
        &dir,
        "bad.json",
        r#"{"diffusion":{"kind":"bessel3","r":0.9},"profit":{"kind":"ces","n":2}}"#,
    );
    for method in ["closed", "generic", "both"] {
        let o = fbound(&["boundary", "--spec", &path, "--method", method]);
        assert_eq!(o.status.code(), Some(3), "{method}: {}", stderr(&o));
    }
}

#[test]
fn malformed_inputs_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let path = write_spec(&dir, "bad.json", r#"{"diffusion":{"kind":"bessel3"}}"#);
    assert_eq!(fbound(&["boundary", "--spec", &path]).status.code(), Some(2));
    assert_eq!(
        fbound(&["boundary", "--spec", &spec("gbm_cd.json"), "--grid-min", "-1"]).status.code(),
        Some(2)
    );
    let o = Command::new(env!("CARGO_BIN_EXE_fbound"))
        .args(["boundary", "--spec", &spec("gbm_cd.json")])
        .env("FB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn residual_suite_passes_on_all_six_closed_forms() {
    let dir = TempDir::new().unwrap();
    for (i, (d, p)) in CASES.iter().enumerate() {
        let path = write_spec(&dir, &format!("c{i}.json"), &format!(r#"{{"diffusion":{d},"profit":{p}}}"#));
        let o = fbound(&["verify", "--spec", &path, "--suite", "residual", "--grid-points", "20"]);
        assert!(o.status.success(), "case {i}: {}", stderr(&o));
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["result"]["pass"], true);
        assert!(v["result"]["suites"][0]["detail"]["max_abs_residual"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn a_wrong_boundary_fails_verification_by_name() {
    let dir = TempDir::new().unwrap();
    let o = fbound(&["boundary", "--spec", &spec("gbm_cd.json"), "--format", "json", "--grid-points", "50"]);
    let mut v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, v.to_string()).unwrap();
    let ok = fbound(&["verify", "--spec", &spec("gbm_cd.json"), "--boundary", good.to_str().unwrap(), "--suite", "residual"]);
    assert!(ok.status.success(), "{}", stderr(&ok));

    for b in v["result"]["b"].as_array_mut().unwrap() {
        *b = Value::from(b.as_f64().unwrap() * 1.01);
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = dir.path().join("report.json");
    let o = fbound(&[
        "verify",
        "--spec",
        &spec("gbm_cd.json"),
        "--boundary",
        bad.to_str().unwrap(),
        "--suite",
        "residual",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("residual: residual x="), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(report["result"]["pass"], false);
}

#[test]
fn backward_suite_passes_on_gbm_at_full_scale() {
    let o = fbound(&["verify", "--spec", &spec("gbm_cd.json"), "--suite", "backward", "--paths", "100000", "--seed", "11"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let check = &v["result"]["suites"][0]["checks"][0];
    assert_eq!(check["samples"], 100000);
    assert_eq!(v["manifest"]["monte_carlo"]["seed"], 11);
}

#[test]
fn joint_law_suite_passes_on_gbm() {
    let o = fbound(&["verify", "--spec", &spec("gbm_cd.json"), "--suite", "jointlaw", "--seed", "12"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["result"]["suites"][0]["detail"]["expected_coverage"].as_f64().unwrap() >= 0.999);
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let run = |threads: Option<&str>| {
        let out = dir.path().join("sim.csv");
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fbound"));
        cmd.args(["simulate", "--spec", &spec("gbm_cd.json"), "--paths", "4000", "--seed", "3", "--compare"])
            .args(["--format", "csv", "--out", out.to_str().unwrap()]);
        match threads {
            Some(t) => cmd.env("FB_THREADS", t),
            None => cmd.env_remove("FB_THREADS"),
        };
        let o = cmd.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run(None);
    assert_eq!(a, run(None));
    assert_eq!(a, run(Some("1")));
    assert_eq!(a, run(Some("3")));
    let (_, header, rows) = parse_csv(std::str::from_utf8(&a).unwrap());
    assert_eq!(column(&header, &rows, "factor"), [1.0, 0.5, 2.0]);
    let j = column(&header, &rows, "estimate");
    assert!(j[0] > j[1] && j[0] > j[2], "{j:?}");
}

#[test]
fn large_initial_capacity_costs_nothing() {
    let o = fbound(&["simulate", "--spec", &spec("fig1_bessel_cd.json"), "--y", "1e6", "--paths", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["result"]["outcome"]["cost_term"], 0.0);
    assert_eq!(v["result"]["outcome"]["mean_final_capacity"], 1e6);
    assert!(v["result"]["outcome"].get("per_path").is_none());
}
