use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_smfpca");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fit_fixture(dir: &Path, extra: &[&str]) -> Output {
    let mesh = fixture("icosphere2.off");
    let data = fixture("demo_data.csv");
    let mut args = vec![
        "fit",
        "--mesh",
        p(&mesh),
        "--data",
        p(&data),
        "--output",
        p(dir),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn fixture_fit_gives_three_components() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fit_fixture(tmp.path(), &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc = json(&tmp.path().join("result.json"));
    let comps = doc["components"].as_array().unwrap();
    assert_eq!(comps.len(), 3);
    assert_eq!(doc["vertexCount"], 162);
    for c in comps {
        assert_eq!(c["vertexValues"].as_array().unwrap().len(), 162);
        assert_eq!(c["scores"].as_array().unwrap().len(), 30);
        assert_eq!(c["selection"].as_array().unwrap().len(), 1);
    }
    let adj: Vec<f64> = doc["adjustedVariance"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(adj[0] > adj[1] && adj[1] > adj[2], "{adj:?}");
    for name in [
        "scores.csv",
        "vertex_values.csv",
        "selection.csv",
        "manifest.json",
    ] {
        assert!(tmp.path().join(name).is_file(), "{name}");
    }
    let scores = fs::read_to_string(tmp.path().join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 31);
    assert_eq!(scores.lines().next().unwrap(), "function,pc1,pc2,pc3");
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(
        fit_fixture(&a, &["--selection", "gcv", "--components", "2"])
            .status
            .success()
    );
    let manifest = a.join("manifest.json");
    let out = run(&["fit", "--config", p(&manifest), "--output", p(&b)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(a.join("result.json")).unwrap(),
        fs::read(b.join("result.json")).unwrap()
    );
    assert_eq!(json(&b.join("manifest.json"))["selection"], "gcv");
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    assert!(fit_fixture(&one, &["--threads", "1"]).status.success());
    assert!(fit_fixture(&four, &["--threads", "4"]).status.success());
    assert_eq!(
        fs::read(one.join("result.json")).unwrap(),
        fs::read(four.join("result.json")).unwrap()
    );
}

#[test]
fn missing_mesh_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture("demo_data.csv");
    let out = run(&[
        "fit",
        "--mesh",
        "/nonexistent/mesh.off",
        "--data",
        p(&data),
        "--output",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("/nonexistent/mesh.off"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn bad_cell_reports_row_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("demo_data.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<&str> = lines[3].split(',').collect();
    cells[4] = "abc";
    lines[3] = cells.join(",");
    let data = tmp.path().join("bad.csv");
    fs::write(&data, lines.join("\n")).unwrap();
    let mesh = fixture("icosphere2.off");
    let out = run(&[
        "fit",
        "--mesh",
        p(&mesh),
        "--data",
        p(&data),
        "--output",
        p(&tmp.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("row 4, column 5"), "{msg}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn column_count_must_match_locations() {
    let tmp = tempfile::tempdir().unwrap();
    let data = fixture("demo_data.csv");
    let out = run(&[
        "fit",
        "--mesh",
        "icosphere:1",
        "--data",
        p(&data),
        "--output",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("162 columns"), "{}", stderr(&out));
}

#[test]
fn missing_cells_use_the_incomplete_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture("demo_data.csv")).unwrap();
    let lines: Vec<String> = text
        .lines()
        .enumerate()
        .map(|(r, line)| {
            if r == 0 {
                return line.to_string();
            }
            line.split(',')
                .enumerate()
                .map(|(c, cell)| if (r * 7 + c) % 5 == 0 { "" } else { cell })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let data = tmp.path().join("holes.csv");
    fs::write(&data, lines.join("\n")).unwrap();
    let mesh = fixture("icosphere2.off");
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "fit",
        "--mesh",
        p(&mesh),
        "--data",
        p(&data),
        "--components",
        "2",
        "--output",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        json(&out_dir.join("result.json"))["components"]
            .as_array()
            .unwrap()
            .len(),
        2
    );

    let out = run(&[
        "fit",
        "--mesh",
        p(&mesh),
        "--data",
        p(&data),
        "--selection",
        "gcv",
        "--output",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.conf");
    fs::write(&config, "mesh = icosphere:1\nbogus = 3\n").unwrap();
    let out = run(&["mesh-info", "--config", p(&config)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for generator in ["eigen", "sphere", "misaligned"] {
        let dirs: Vec<PathBuf> = (0..2)
            .map(|i| tmp.path().join(format!("{generator}{i}")))
            .collect();
        for dir in &dirs {
            let out = run(&[
                "simulate",
                "--mesh",
                "icosphere:2",
                "--generator",
                generator,
                "--n",
                "12",
                "--seed",
                "9",
                "--output",
                p(dir),
            ]);
            assert!(out.status.success(), "{generator}: {}", stderr(&out));
        }
        for name in ["data.csv", "truth.json"] {
            assert_eq!(
                fs::read(dirs[0].join(name)).unwrap(),
                fs::read(dirs[1].join(name)).unwrap(),
                "{generator} {name}"
            );
        }
        let mut manifests: Vec<Value> = dirs
            .iter()
            .map(|d| json(&d.join("manifest.json")))
            .collect();
        for m in &mut manifests {
            m.as_object_mut().unwrap().remove("output");
        }
        assert_eq!(manifests[0], manifests[1]);
    }
}

#[test]
fn sphere_generators_reject_other_meshes() {
    let tmp = tempfile::tempdir().unwrap();
    let mesh = tmp.path().join("square.off");
    fs::write(
        &mesh,
        "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n",
    )
    .unwrap();
    for generator in ["sphere", "misaligned"] {
        let out = run(&[
            "simulate",
            "--mesh",
            p(&mesh),
            "--generator",
            generator,
            "--output",
            p(&tmp.path().join("out")),
        ]);
        assert_eq!(out.status.code(), Some(2), "{generator}: {}", stderr(&out));
    }
}

#[test]
fn evaluate_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let fit_dir = tmp.path().join("fit");
    assert!(fit_fixture(&fit_dir, &[]).status.success());
    let mesh = fixture("icosphere2.off");
    let truth = fixture("demo_truth.json");
    let ev = tmp.path().join("ev");
    let out = run(&[
        "evaluate",
        "--mesh",
        p(&mesh),
        "--result",
        p(&fit_dir.join("result.json")),
        "--truth",
        p(&truth),
        "--output",
        p(&ev),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&ev.join("report.json"));
    for key in ["pcFunctionMse", "scoreMse", "explainedVarianceCurve"] {
        assert_eq!(report[key].as_array().unwrap().len(), 3, "{key}");
    }
    let angle = report["principalAngle"].as_f64().unwrap();
    assert!((0.0..0.3).contains(&angle), "{angle}");
    assert!(report["signalMse"].as_f64().unwrap() >= 0.0);
    let curve: Vec<f64> = report["explainedVarianceCurve"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(
        curve.windows(2).all(|w| w[0] <= w[1]) && curve[2] <= 1.0 + 1e-9,
        "{curve:?}"
    );
    let csv = fs::read_to_string(ev.join("evaluation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn evaluate_rejects_mismatched_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let fit_dir = tmp.path().join("fit");
    assert!(fit_fixture(&fit_dir, &["--components", "1"])
        .status
        .success());
    let sim = tmp.path().join("sim");
    assert!(run(&[
        "simulate",
        "--mesh",
        "icosphere:2",
        "--n",
        "10",
        "--output",
        p(&sim)
    ])
    .status
    .success());
    let mesh = fixture("icosphere2.off");
    let out = run(&[
        "evaluate",
        "--mesh",
        p(&mesh),
        "--result",
        p(&fit_dir.join("result.json")),
        "--truth",
        p(&sim.join("truth.json")),
        "--output",
        p(&tmp.path().join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn rank_deficient_estimate_is_a_numerical_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fit_dir = tmp.path().join("fit");
    assert!(fit_fixture(&fit_dir, &[]).status.success());
    let mut doc = json(&fit_dir.join("result.json"));
    let first = doc["components"][0]["vertexValues"].clone();
    doc["components"][1]["vertexValues"] = first;
    let result = tmp.path().join("rank.json");
    fs::write(&result, serde_json::to_string(&doc).unwrap()).unwrap();
    let mesh = fixture("icosphere2.off");
    let truth = fixture("demo_truth.json");
    let out = run(&[
        "evaluate",
        "--mesh",
        p(&mesh),
        "--result",
        p(&result),
        "--truth",
        p(&truth),
        "--output",
        p(&tmp.path().join("ev")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn study_writes_one_row_per_method_and_replicate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "evaluate",
        "--study",
        "true",
        "--mesh",
        "icosphere:2",
        "--n",
        "20",
        "--output",
        p(tmp.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(tmp.path().join("replicates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 41);
    assert!(lines[0].starts_with("replicate,seed,method,principal_angle,signal_mse"));
    assert_eq!(lines.iter().filter(|l| l.contains(",smfpca,")).count(), 20);
    let summary = json(&tmp.path().join("study.json"));
    assert_eq!(summary["replicates"], 20);
    let wins = summary["smfpcaAngleWins"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&wins));
}

#[test]
fn mesh_info_reports_counts() {
    let mesh = fixture("icosphere2.off");
    let out = run(&["mesh-info", "--mesh", p(&mesh)]);
    assert!(out.status.success());
    let info: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(info["vertices"], 162);
    assert_eq!(info["triangles"], 320);
    assert_eq!(info["eulerCharacteristic"], 2);
    assert_eq!(info["closed"], true);
}

#[test]
fn bad_usage_exits_with_input_status() {
    assert_eq!(run(&["fit", "--components", "x"]).status.code(), Some(2));
    assert_eq!(run(&["nope"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["fit", "--mesh", "icosphere:1", "--output", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("data"));
}
