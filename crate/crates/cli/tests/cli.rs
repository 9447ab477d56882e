use std::path::Path;
use std::process::{Command, Output};

fn loadnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = loadnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--synth-curves-per-template", "8", "--synth-days-per-household", "4"];

fn prepare(dir: &Path) {
    ok(dir, &[&["synth"], SMALL].concat());
    ok(dir, &["ingest", "--input", "out/synth.readings.csv"]);
    ok(dir, &["distances"]);
    ok(dir, &["graph"]);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(loadnet(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(loadnet(dir.path(), &["graph", "--lambda", "-1"]).status.code(), Some(1));
    assert_eq!(loadnet(dir.path(), &["graph", "--edge-rule", "both"]).status.code(), Some(1));
    assert_eq!(loadnet(dir.path(), &["ingest"]).status.code(), Some(1));
    assert_eq!(loadnet(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(loadnet(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn missing_upstream_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = loadnet(dir.path(), &["cluster"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("loadnet graph"), "{}", stderr(&out));

    let out = loadnet(dir.path(), &["ingest", "--input", "nope.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stale_artifacts_are_detected() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    ok(dir.path(), &["cluster"]);

    // different window than the matrix was built with
    let out = loadnet(dir.path(), &["cluster", "--window", "6"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("loadnet distances"), "{}", stderr(&out));

    // tampered upstream file
    let edges = dir.path().join("out/graph.edges.csv");
    let mut text = std::fs::read_to_string(&edges).unwrap();
    text.push_str("0,1,0.5\n");
    std::fs::write(&edges, text).unwrap();
    let out = loadnet(dir.path(), &["tlp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("stale"), "{}", stderr(&out));

    // --force skips the checks
    ok(dir.path(), &["graph", "--force"]);
    ok(dir.path(), &["cluster"]);
    ok(dir.path(), &["tlp"]);
}

#[test]
fn up_to_date_stages_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    assert!(ok(dir.path(), &["graph"]).contains("up to date"));
    assert!(!ok(dir.path(), &["graph", "--lambda", "0.6"]).contains("up to date"));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    std::fs::write(dir.path().join("run.cfg"), "# test\ngamma = 0.5\nedge-rule=union\n").unwrap();
    ok(dir.path(), &["cluster", "--config", "run.cfg"]);
    let meta = std::fs::read_to_string(dir.path().join("out/cluster.json")).unwrap();
    assert!(meta.contains("\"gamma\": 0.5"), "{meta}");
    ok(dir.path(), &["cluster", "--config", "run.cfg", "--gamma", "0.9"]);
    let meta = std::fs::read_to_string(dir.path().join("out/cluster.json")).unwrap();
    assert!(meta.contains("\"gamma\": 0.9"), "{meta}");

    std::fs::write(dir.path().join("bad.cfg"), "colour = blue\n").unwrap();
    assert_eq!(loadnet(dir.path(), &["cluster", "--config", "bad.cfg"]).status.code(), Some(1));
}

#[test]
fn validate_both_matches_k() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    ok(dir.path(), &["cluster"]);
    ok(dir.path(), &["tlp"]);
    ok(dir.path(), &["baseline"]);
    ok(dir.path(), &["validate", "--method", "both"]);
    let csv = std::fs::read_to_string(dir.path().join("out/validity.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,k,center_mode,db,vcn,s_dbw,sf,cop,mean_entropy");
    assert_eq!(lines.len(), 3);
    let k = |l: &str| l.split(',').nth(1).unwrap().to_string();
    assert!(lines[1].starts_with("cicd,"));
    assert!(lines[2].starts_with("baseline,"));
    assert_eq!(k(lines[1]), k(lines[2]));
    assert!(lines[2].contains(",medoid,"));

    ok(dir.path(), &["validate", "--method", "baseline", "--force-dba", "true"]);
    let csv = std::fs::read_to_string(dir.path().join("out/validity.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("baseline,5,averaged"), "{csv}");
}

#[test]
fn directory_with_defaults_has_three_layers() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    ok(dir.path(), &["sweep"]);
    let sweep = std::fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 32);
    assert_eq!(sweep.lines().next().unwrap(), "gamma,k,vcn,Q,variance");
    ok(dir.path(), &["directory"]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/directory.json")).unwrap()).unwrap();
    assert_eq!(json["layers"].as_array().unwrap().len(), 3);
    assert_eq!(json["layers"][0]["interval"], "[1,10)");
}

#[test]
fn manifests_record_hashes() {
    let dir = tempfile::tempdir().unwrap();
    prepare(dir.path());
    let m: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/distances.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(m["stage"], "distances");
    assert_eq!(m["config"]["window"], "4");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"][0]["path"], "curves.csv");
    assert_eq!(m["inputs"][0]["producer"], "ingest");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}
