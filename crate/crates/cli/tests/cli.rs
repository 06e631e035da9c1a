use std::path::Path;
use std::process::{Command, Output};

use hbvm::io::to_json_string;
use hbvm::tableau::{hbvm_tableau, HbvmSpec, TableauRecord};
use serde_json::Value;

fn hbvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbvm"))
        .args(args)
        .env("HBVM_NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tableau_midpoint() {
    let out = hbvm(&["tableau", "--k", "1", "--s", "1", "--family", "gauss"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["A"][0][0].as_f64(), Some(0.5));
    assert_eq!(v["b"][0].as_f64(), Some(1.0));
    assert_eq!(v["c"][0].as_f64(), Some(0.5));
    assert_eq!(v["family"], "gauss");
}

#[test]
fn tableau_gauss_two_entries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g2.json");
    let out = hbvm(&["tableau", "--k", "2", "--s", "2", "--out", path_str(&path)]);
    assert_eq!(code(&out), 0);
    let v = json_file(&path);
    let r = 3f64.sqrt() / 6.0;
    let a = [[0.25, 0.25 - r], [0.25 + r, 0.25]];
    for i in 0..2 {
        for j in 0..2 {
            let x = v["A"][i][j].as_f64().unwrap();
            assert!((x - a[i][j]).abs() <= 1e-15, "A[{i}][{j}] = {x}");
        }
    }
    assert!((v["c"][0].as_f64().unwrap() - (0.5 - r)).abs() <= 1e-15);
}

#[test]
fn tableau_output_matches_library_bytes() {
    let out = hbvm(&["tableau", "--k", "7", "--s", "3", "--family", "lobatto"]);
    assert_eq!(code(&out), 0);
    let spec = HbvmSpec::lobatto(7, 3).unwrap();
    let rec = TableauRecord::from_spec(&spec, &hbvm_tableau(&spec).unwrap());
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        to_json_string(&rec).unwrap()
    );
}

#[test]
fn tableau_weak_custom_quadrature_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let out = hbvm(&[
        "tableau",
        "--k",
        "3",
        "--s",
        "2",
        "--family",
        "custom",
        "--nodes",
        "0.2,0.5,0.8",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("quadrature too weak"));
    assert!(!path.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn custom_tableau_with_enough_nodes() {
    let out = hbvm(&[
        "tableau",
        "--k",
        "4",
        "--s",
        "2",
        "--family",
        "custom",
        "--nodes",
        "0.1,0.4,0.6,0.9",
    ]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["family"], "custom");
    assert_eq!(v["c"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_arguments_exit_two() {
    let cases: &[&[&str]] = &[
        &["frobnicate"],
        &["tableau", "--k", "2"],
        &["tableau", "--k", "0", "--s", "1"],
        &["tableau", "--k", "3", "--s", "4"],
        &["tableau", "--k", "13", "--s", "2"],
        &["tableau", "--k", "3", "--s", "1", "--family", "radau"],
        &["tableau", "--k", "3", "--s", "1", "--family", "custom"],
        &["tableau", "--k", "3", "--s", "1", "--nodes", "0.1,0.5,0.9"],
        &["verify", "--smax", "7"],
        &["verify", "--kmax", "13"],
        &["verify", "--tol", "-1"],
        &[
            "integrate",
            "--problem",
            "nope",
            "--k",
            "2",
            "--s",
            "2",
            "--h",
            "0.1",
            "--steps",
            "3",
        ],
        &[
            "integrate",
            "--problem",
            "harmonic",
            "--k",
            "2",
            "--s",
            "2",
            "--h",
            "-0.1",
            "--steps",
            "3",
        ],
        &[
            "integrate",
            "--problem",
            "harmonic",
            "--k",
            "2",
            "--s",
            "2",
            "--h",
            "0.1",
            "--steps",
            "0",
        ],
        &[
            "integrate",
            "--problem",
            "harmonic",
            "--k",
            "2",
            "--s",
            "2",
            "--h",
            "0.1",
            "--steps",
            "3",
            "--mode",
            "foo",
        ],
        &[
            "order",
            "--problem",
            "harmonic",
            "--k",
            "2",
            "--s",
            "1",
            "--hmax",
            "0.3",
            "--t-end",
            "1",
        ],
        &[
            "order",
            "--problem",
            "harmonic",
            "--k",
            "2",
            "--s",
            "1",
            "--levels",
            "2",
        ],
        &["stability", "--k", "2", "--s", "1", "--tol", "0"],
    ];
    for args in cases {
        let out = hbvm(args);
        assert_eq!(
            code(&out),
            2,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn missing_output_directory_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("t.json");
    let out = hbvm(&["tableau", "--k", "2", "--s", "1", "--out", path_str(&path)]);
    assert_eq!(code(&out), 2);
    assert!(!path.exists());
}

#[test]
fn verify_moderate_matrix_passes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = hbvm(&[
        "verify",
        "--smax",
        "3",
        "--kmax",
        "8",
        "--tol",
        "1e-10",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report = json_file(&path);
    let entries = report.as_array().unwrap();
    assert!(!entries.is_empty());
    let mut keys = Vec::new();
    for e in entries {
        for field in [
            "spec",
            "zero_count",
            "max_match_distance",
            "subspace_residual",
            "wtransform_residuals",
            "a_stability_max_deviation",
        ] {
            assert!(e.get(field).is_some(), "{field}");
        }
        let s = e["spec"]["s"].as_u64().unwrap();
        let k = e["spec"]["k"].as_u64().unwrap();
        assert_eq!(e["zero_count"].as_u64().unwrap(), k - s);
        let fam = match e["spec"]["family"].as_str().unwrap() {
            "gauss" => 0,
            "lobatto" => 1,
            _ => 2,
        };
        keys.push((s, k, fam, e["spec"]["sample"].as_u64()));
    }
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(keys.iter().any(|k| k.2 == 2));
}

#[test]
fn verify_trivial_matrix() {
    let out = hbvm(&["verify", "--smax", "1", "--kmax", "1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1);
}

#[test]
fn verify_seed_controls_custom_nodes() {
    let nodes = |seed: &str| {
        let out = hbvm(&["verify", "--smax", "1", "--kmax", "3", "--seed", seed]);
        assert_eq!(code(&out), 0);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v.as_array()
            .unwrap()
            .iter()
            .filter(|e| e["spec"]["family"] == "custom")
            .map(|e| e["spec"]["nodes"].clone())
            .collect::<Vec<_>>()
    };
    let default = {
        let out = hbvm(&["verify", "--smax", "1", "--kmax", "3"]);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        v.as_array()
            .unwrap()
            .iter()
            .filter(|e| e["spec"]["family"] == "custom")
            .map(|e| e["spec"]["nodes"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(default, nodes("42"));
    assert_ne!(nodes("7"), nodes("42"));
}

#[test]
fn verify_tampered_tableau_fails_but_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let tab = dir.path().join("t.json");
    let report = dir.path().join("r.json");
    assert_eq!(
        code(&hbvm(&[
            "tableau",
            "--k",
            "4",
            "--s",
            "2",
            "--out",
            path_str(&tab)
        ])),
        0
    );
    let clean = hbvm(&[
        "verify",
        "--smax",
        "1",
        "--kmax",
        "1",
        "--tableau-file",
        path_str(&tab),
    ]);
    assert_eq!(code(&clean), 0);

    let mut v = json_file(&tab);
    let a00 = v["A"][0][0].as_f64().unwrap();
    v["A"][0][0] = Value::from(a00 + 1e-6);
    std::fs::write(&tab, serde_json::to_string(&v).unwrap()).unwrap();
    let out = hbvm(&[
        "verify",
        "--smax",
        "1",
        "--kmax",
        "1",
        "--tableau-file",
        path_str(&tab),
        "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 1);
    let r = json_file(&report);
    let injected = r
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["spec"].get("source").is_some())
        .unwrap();
    assert_eq!(injected["passed"], false);
}

#[test]
fn verify_rejects_unreadable_tableau_file() {
    let dir = tempfile::tempdir().unwrap();
    let tab = dir.path().join("t.json");
    std::fs::write(&tab, "{\"k\": 2}").unwrap();
    let report = dir.path().join("r.json");
    let out = hbvm(&[
        "verify",
        "--smax",
        "1",
        "--kmax",
        "1",
        "--tableau-file",
        path_str(&tab),
        "--out",
        path_str(&report),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!report.exists());
    let missing = dir.path().join("none.json");
    assert_eq!(
        code(&hbvm(&[
            "verify",
            "--smax",
            "1",
            "--kmax",
            "1",
            "--tableau-file",
            path_str(&missing)
        ])),
        2
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn integrate_sextic_conserves_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = hbvm(&[
        "integrate",
        "--problem",
        "sextic",
        "--k",
        "6",
        "--s",
        "2",
        "--h",
        "0.1",
        "--steps",
        "1000",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = read_csv(&path);
    assert_eq!(header, ["t", "y_1", "y_2", "H", "iters"]);
    assert_eq!(rows.len(), 1001);
    let h0 = rows[0][3];
    let drift = rows.iter().fold(0.0f64, |m, r| m.max((r[3] - h0).abs())) / h0.abs();
    assert!(drift <= 1e-11, "{drift:e}");
    assert!((rows[1000][0] - 100.0).abs() < 1e-9);
    assert!(String::from_utf8_lossy(&out.stdout).contains("relative energy drift"));
}

#[test]
fn integrate_modes_and_solvers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut finals = Vec::new();
    for (mode, solver) in [
        ("rk", "fixed-point"),
        ("gamma", "fixed-point"),
        ("rk", "newton"),
        ("gamma", "newton"),
    ] {
        let path = dir.path().join(format!("{mode}-{solver}.csv"));
        let out = hbvm(&[
            "integrate",
            "--problem",
            "henon-heiles",
            "--k",
            "6",
            "--s",
            "2",
            "--h",
            "0.1",
            "--steps",
            "20",
            "--mode",
            mode,
            "--solver",
            solver,
            "--out",
            path_str(&path),
        ]);
        assert_eq!(code(&out), 0);
        let (header, rows) = read_csv(&path);
        assert_eq!(header.len(), 7);
        finals.push(rows.last().unwrap()[1..5].to_vec());
    }
    for f in &finals[1..] {
        for (a, b) in f.iter().zip(&finals[0]) {
            assert!((a - b).abs() <= 1e-11);
        }
    }
}

#[test]
fn integrate_non_convergence_exits_one() {
    let out = hbvm(&[
        "integrate",
        "--problem",
        "harmonic",
        "--k",
        "2",
        "--s",
        "2",
        "--h",
        "20",
        "--steps",
        "3",
    ]);
    assert_eq!(code(&out), 1);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Newton"));
}

#[test]
fn order_kepler_slope() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("order.json");
    let out = hbvm(&[
        "order",
        "--problem",
        "kepler",
        "--k",
        "4",
        "--s",
        "2",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0);
    let slope = json_file(&path)["slope"].as_f64().unwrap();
    assert!((3.8..=4.2).contains(&slope), "{slope}");
    let text = String::from_utf8_lossy(&out.stdout);
    let printed: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("slope "))
        .and_then(|l| l.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((3.8..=4.2).contains(&printed));
}

#[test]
fn order_without_closed_form_uses_fine_reference() {
    let out = hbvm(&[
        "order",
        "--problem",
        "pendulum",
        "--k",
        "4",
        "--s",
        "2",
        "--hmax",
        "0.4",
        "--levels",
        "4",
        "--t-end",
        "3.2",
    ]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let slope = v["slope"].as_f64().unwrap();
    assert!((3.5..=4.5).contains(&slope), "{slope}");
}

#[test]
fn stability_midpoint() {
    let out = hbvm(&["stability", "--k", "1", "--s", "1"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_axis_deviation"].as_f64().unwrap() <= 1e-12);
    assert!(v["max_left_modulus"].as_f64().unwrap() <= 1.0);
}

#[test]
fn spectrum_reports_zero_eigenvalues() {
    let out = hbvm(&["spectrum", "--k", "6", "--s", "2", "--family", "lobatto"]);
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["zero_count"], 4);
    assert_eq!(v["eigenvalues"].as_array().unwrap().len(), 6);
}

#[test]
fn no_color_in_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let out = hbvm(&[
        "stability",
        "--k",
        "3",
        "--s",
        "2",
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("PASS"));
    assert!(!text.contains('\x1b'));
}
