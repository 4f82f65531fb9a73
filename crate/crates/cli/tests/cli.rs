use std::io::Write;
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use prefdens_core::db::UtilityDatabase;
use prefdens_core::mixture::log_likelihood;
use prefdens_core::model_file::ModelFile;
use prefdens_core::projection::map_project;
use serde_json::Value;
use tempfile::TempDir;

fn prefdens(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefdens"))
        .current_dir(dir)
        .env_remove("PREFDENS_PORT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Synthetic data plus a model fitted with the true structure.
fn fixture() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&prefdens(
        d,
        &[
            "gen",
            "--n",
            "120",
            "--seed",
            "3",
            "--missing",
            "0.2",
            "--out",
            "db.csv",
            "--domain-out",
            "domain.json",
        ],
    ));
    std::fs::write(d.join("structure.json"), r#"[{"clusters":[["X1","X2"],["X2","X3"]]}]"#).unwrap();
    ok(&prefdens(d, &learn_fixed("model.json")));
    dir
}

fn learn_fixed(out: &str) -> Vec<&str> {
    vec![
        "learn",
        "--domain",
        "domain.json",
        "--db",
        "db.csv",
        "--structure",
        "structure.json",
        "--seed",
        "4",
        "--out",
        out,
    ]
}

fn load_model(path: PathBuf) -> ModelFile {
    ModelFile::load(&path).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(&prefdens(dir.path(), &["gen", "--n", "5", "--seed", "7"]));
    let b = ok(&prefdens(dir.path(), &["gen", "--n", "5", "--seed", "7"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 6);
    assert!(a.starts_with("respondent,"));
    let c = ok(&prefdens(dir.path(), &["gen", "--n", "5", "--seed", "8"]));
    assert_ne!(a, c);
}

#[test]
fn learn_writes_model_and_trace_deterministically() {
    let dir = fixture();
    let d = dir.path();
    assert!(d.join("model.trace.jsonl").exists());
    ok(&prefdens(d, &learn_fixed("again.json")));
    let a = std::fs::read(d.join("model.json")).unwrap();
    let b = std::fs::read(d.join("again.json")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical models");

    let file = load_model(d.join("model.json"));
    assert_eq!(file.types.len(), 1);
    assert_eq!(file.provenance.seed, 4);
    file.to_model().unwrap();
    let trace = std::fs::read_to_string(d.join("model.trace.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first["scores"].as_array().unwrap().len() > 1);
}

#[test]
fn learn_with_structure_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&prefdens(
        d,
        &[
            "gen",
            "--truth",
            "additive",
            "--n",
            "40",
            "--seed",
            "1",
            "--out",
            "db.csv",
            "--domain-out",
            "domain.json",
        ],
    ));
    let args = [
        "learn",
        "--domain",
        "domain.json",
        "--db",
        "db.csv",
        "--structure-search",
        "--restarts",
        "1",
        "--seed",
        "2",
    ];
    ok(&prefdens(d, &[&args[..], &["--out", "a.json"]].concat()));
    ok(&prefdens(d, &[&args[..], &["--out", "b.json"]].concat()));
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("a.trace.jsonl")).unwrap(),
        std::fs::read(d.join("b.trace.jsonl")).unwrap()
    );
    let file = load_model(d.join("a.json"));
    assert_eq!(file.types[0].structure.clusters, [["X1"], ["X2"], ["X3"]]);
    assert_eq!(file.provenance.config["mode"], "search");
}

#[test]
fn learn_rejects_bad_inputs() {
    let dir = fixture();
    let d = dir.path();
    let code = |args: &[&str]| prefdens(d, args).status.code();
    assert_eq!(
        code(&["learn", "--domain", "domain.json", "--db", "missing.csv"]),
        Some(2)
    );
    std::fs::write(d.join("bad.json"), "{").unwrap();
    assert_eq!(code(&["learn", "--domain", "bad.json", "--db", "db.csv"]), Some(2));
    std::fs::write(d.join("bad_structure.json"), r#"[{"clusters":[["Q"]]}]"#).unwrap();
    assert_eq!(
        code(&[
            "learn",
            "--domain",
            "domain.json",
            "--db",
            "db.csv",
            "--structure",
            "bad_structure.json"
        ]),
        Some(2)
    );
    assert_eq!(code(&["learn", "--domain", "domain.json"]), Some(2));

    // no usable records: EM cannot run
    let header = std::fs::read_to_string(d.join("db.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(d.join("empty.csv"), format!("{header}\nr0{}\n", ",".repeat(12))).unwrap();
    let out = prefdens(
        d,
        &[
            "learn",
            "--domain",
            "domain.json",
            "--db",
            "empty.csv",
            "--structure",
            "structure.json",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn project_map_matches_library() {
    let dir = fixture();
    let d = dir.path();
    let u: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.4).collect();
    std::fs::write(d.join("u.json"), serde_json::to_string(&u).unwrap()).unwrap();
    let out: Value = serde_json::from_str(&ok(&prefdens(
        d,
        &[
            "project",
            "--model",
            "model.json",
            "--utility",
            "u.json",
            "--method",
            "map",
        ],
    )))
    .unwrap();

    let model = load_model(d.join("model.json")).to_model().unwrap();
    let ty = &model.types[0];
    let expected = map_project(&u, &ty.params, ty.design_matrix()).unwrap();
    let got: Vec<f64> = serde_json::from_value(out["weights"].clone()).unwrap();
    assert_eq!(got, expected.iter().copied().collect::<Vec<_>>());
    assert_eq!(out["type"], 0);

    // partial vectors go through the posterior; least squares needs all entries
    std::fs::write(
        d.join("partial.json"),
        "[0.1,null,0.3,null,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2]",
    )
    .unwrap();
    let post: Value = serde_json::from_str(&ok(&prefdens(
        d,
        &[
            "project",
            "--model",
            "model.json",
            "--utility",
            "partial.json",
            "--method",
            "posterior",
        ],
    )))
    .unwrap();
    assert_eq!(post["cov"].as_array().unwrap().len(), got.len());
    let ls = prefdens(
        d,
        &[
            "project",
            "--model",
            "model.json",
            "--utility",
            "partial.json",
            "--method",
            "ls",
        ],
    );
    assert_eq!(ls.status.code(), Some(2));

    let all: Value = serde_json::from_str(&ok(&prefdens(
        d,
        &["project", "--model", "model.json", "--db", "db.csv"],
    )))
    .unwrap();
    assert_eq!(all.as_array().unwrap().len(), 120);
    assert_eq!(all[0]["respondent"], "r0");
}

#[test]
fn project_and_score_detect_domain_mismatch() {
    let dir = fixture();
    let d = dir.path();
    std::fs::write(d.join("short.json"), "[0.1,0.2,0.3]").unwrap();
    let code = |args: &[&str]| prefdens(d, args).status.code();
    assert_eq!(
        code(&["project", "--model", "model.json", "--utility", "short.json"]),
        Some(4)
    );

    ok(&prefdens(
        d,
        &[
            "gen",
            "--truth",
            "curve",
            "--n",
            "5",
            "--out",
            "other.csv",
            "--domain-out",
            "other_domain.json",
        ],
    ));
    std::fs::write(d.join("u.json"), "[0,0,0,0,0,0,0,0,0,0,0,0]").unwrap();
    assert_eq!(
        code(&[
            "project",
            "--model",
            "model.json",
            "--utility",
            "u.json",
            "--domain",
            "other_domain.json"
        ]),
        Some(4)
    );
    assert_eq!(code(&["score", "--model", "model.json", "--db", "other.csv"]), Some(4));

    let mut file = load_model(d.join("model.json"));
    file.types[0].mean[0] += 1.0;
    file.save(&d.join("tampered.json")).unwrap();
    assert_eq!(code(&["score", "--model", "tampered.json", "--db", "db.csv"]), Some(4));
}

#[test]
fn score_matches_library() {
    let dir = fixture();
    let d = dir.path();
    let out: Value = serde_json::from_str(&ok(&prefdens(
        d,
        &["score", "--model", "model.json", "--db", "db.csv", "--cs"],
    )))
    .unwrap();
    let model = load_model(d.join("model.json")).to_model().unwrap();
    let db = UtilityDatabase::load(&model.domain, &d.join("db.csv")).unwrap();
    let (per_record, total) = log_likelihood(&model, &db).unwrap();
    assert_eq!(out["total"].as_f64().unwrap(), total);
    let got: Vec<f64> = out["per_record"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["log_likelihood"].as_f64().unwrap())
        .collect();
    assert_eq!(got, per_record);
    let cs = &out["cs"];
    let c = &cs["components"];
    let sum = c["completed_marginal"].as_f64().unwrap() + c["observed_log_likelihood"].as_f64().unwrap()
        - c["completed_log_likelihood"].as_f64().unwrap();
    assert!((cs["score"].as_f64().unwrap() - sum).abs() < 1e-9);
}

#[test]
fn experiments_write_reports_and_specs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: [&[&str]; 3] = [
        &[
            "curve",
            "--ns",
            "20,40",
            "--test-size",
            "20",
            "--seeds",
            "2",
            "--out",
            "curve.csv",
        ],
        &[
            "recover",
            "--truth",
            "additive",
            "--ns",
            "10",
            "--seeds",
            "2",
            "--search-restarts",
            "1",
            "--out",
            "recover.csv",
        ],
        &[
            "compare",
            "--ns",
            "10,50",
            "--test-size",
            "20",
            "--seeds",
            "2",
            "--out",
            "compare.csv",
        ],
    ];
    for args in runs {
        ok(&prefdens(d, args));
        let name = args.last().unwrap().trim_end_matches(".csv");
        let csv = std::fs::read_to_string(d.join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with("condition,metric,value"), "{name}");
        assert!(csv.lines().count() > 2, "{name}");
        let spec: Value =
            serde_json::from_str(&std::fs::read_to_string(d.join(format!("{name}.spec.json"))).unwrap()).unwrap();
        assert!(spec["types"].is_array());
    }
    let curve = std::fs::read_to_string(d.join("curve.csv")).unwrap();
    assert!(curve.contains("heldout_ll"));
    let compare = std::fs::read_to_string(d.join("compare.csv")).unwrap();
    assert!(compare.contains("map_error") && compare.contains("ls_error"));
    assert_eq!(prefdens(d, &["curve", "--ns", "0"]).status.code(), Some(2));
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port()
}

fn start_server(dir: &Path, port: u16) -> Server {
    let child = Command::new(env!("CARGO_BIN_EXE_prefdens"))
        .current_dir(dir)
        .env("PREFDENS_PORT", port.to_string())
        .args(["serve", "--model", "model.json", "--port", "1", "--noise-sd", "0.001"])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let server = Server(child);
    let start = Instant::now();
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(start.elapsed() < Duration::from_secs(30), "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    }
    server
}

#[test]
fn serve_and_elicit_round_trip() {
    let dir = fixture();
    let d = dir.path();
    let port = free_port();
    let _server = start_server(d, port);

    let mut child = Command::new(env!("CARGO_BIN_EXE_prefdens"))
        .current_dir(d)
        .args(["elicit", "--server", &format!("http://127.0.0.1:{port}")])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let answers: String = (0..12).map(|i| format!("{}\n", 0.05 * i as f64)).collect();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(format!("oops\n{answers}").as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    let text = ok(&out);
    assert!(text.starts_with("session "));
    assert!(text.contains("not a number: `oops`"));
    assert!(text.contains("type weights [1.000]"));
    assert!(text.contains("predictions:"));

    // a second server on the same port cannot start
    let busy = Command::new(env!("CARGO_BIN_EXE_prefdens"))
        .current_dir(d)
        .args(["serve", "--model", "model.json", "--port", &port.to_string()])
        .env_remove("PREFDENS_PORT")
        .output()
        .unwrap();
    assert!(!busy.status.success());
    assert!(String::from_utf8_lossy(&busy.stderr).contains("cannot listen"));
}

#[test]
fn serve_rejects_bad_model() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), "{}").unwrap();
    let out = prefdens(dir.path(), &["serve", "--model", "model.json", "--port", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
