mod common;

use std::fs;

use common::{binary, manifest_text, run_ok, small_planted, write_planted};
use rationale_cli::report::{csv_body, manifest_hash_of, TABLE_IDS};
use rationale_core::corpus::{compute_stats, load_jsonl};

const CONLL: &str = "\
-DOCSTART- -X- -X- O

He PRP B-NP
quickly RB B-ADVP
left VBD B-VP
. . O

She PRP B-NP
stayed VBD B-VP
. . O
";

#[test]
fn ingest_conll_chunk_marks_target_spans() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("chunks.conll");
    fs::write(&src, CONLL).unwrap();
    let out_path = dir.path().join("advp.jsonl");
    let out = run_ok(
        binary()
            .args([
                "ingest",
                "--format",
                "conll-chunk",
                "--tag",
                "ADVP",
                "--out",
            ])
            .arg(&out_path)
            .arg(&src),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("instances=2"), "{stdout}");
    assert!(stdout.contains("class_counts=0:1,1:1"), "{stdout}");
    let ds = load_jsonl(&out_path).unwrap();
    assert_eq!(ds.instances[0].rationale_mask, vec![0, 1, 0, 0]);
    assert_eq!(ds.instances[0].label, 1);
    assert_eq!(ds.instances[1].label, 0);
}

#[test]
fn ingest_conll_requires_tag() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("chunks.conll");
    fs::write(&src, CONLL).unwrap();
    let out = binary()
        .args(["ingest", "--format", "conll-ner", "--out"])
        .arg(dir.path().join("x.jsonl"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tag"));
}

#[test]
fn ingest_multi_annotator_union_is_denser_than_intersection() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("ann.jsonl");
    let records = [
        r#"{"id":"a","tokens":["x","y","z"],"annotators":[{"label":1,"rationale":[1,1,0]},{"label":1,"rationale":[0,1,1]},{"label":0,"rationale":[0,1,0]}]}"#,
        r#"{"id":"b","tokens":["p","q"],"annotators":[{"label":0,"rationale":[1,0]},{"label":0,"rationale":[1,1]}]}"#,
        r#"{"id":"tie","tokens":["p","q"],"annotators":[{"label":0,"rationale":[1,0]},{"label":1,"rationale":[1,1]}]}"#,
    ];
    fs::write(&src, records.join("\n")).unwrap();
    let mut density = Vec::new();
    for mode in ["union", "intersection"] {
        let out_path = dir.path().join(format!("{mode}.jsonl"));
        let out = run_ok(
            binary()
                .args([
                    "ingest",
                    "--format",
                    "multi-annotator",
                    "--aggregate",
                    mode,
                    "--out",
                ])
                .arg(&out_path)
                .arg(&src),
        );
        assert!(String::from_utf8_lossy(&out.stdout).contains("dropped=1"));
        let ds = load_jsonl(&out_path).unwrap();
        assert_eq!(ds.len(), 2);
        density.push(compute_stats(&ds).unwrap().density);
    }
    assert!(density[0] >= density[1], "{density:?}");
    assert!((density[0] - (1.0 + 1.0) / 2.0).abs() < 1e-12);
    assert!((density[1] - (1.0 / 3.0 + 0.5) / 2.0).abs() < 1e-12);
}

#[test]
fn ingest_sentiment_trees_derives_labels() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("trees.jsonl");
    let records = [
        r#"{"id":"pos","tokens":["a","great","film"],"tree":{"score":2,"span":[0,2],"children":[{"score":0,"span":[0,0]},{"score":1,"span":[1,2],"children":[{"score":2,"span":[1,1]},{"score":0,"span":[2,2]}]}]}}"#,
        r#"{"id":"neutral","tokens":["a","film"],"tree":{"score":0,"span":[0,1],"children":[{"score":0,"span":[0,0]},{"score":0,"span":[1,1]}]}}"#,
        r#"{"id":"neg","tokens":["dull"],"tree":{"score":-2,"span":[0,0]}}"#,
    ];
    fs::write(&src, records.join("\n")).unwrap();
    let out_path = dir.path().join("sst.jsonl");
    run_ok(
        binary()
            .args(["ingest", "--format", "sentiment-tree", "--out"])
            .arg(&out_path)
            .arg(&src),
    );
    let ds = load_jsonl(&out_path).unwrap();
    let ids: Vec<&str> = ds.instances.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, ["pos", "neg"]);
    assert_eq!(ds.instances[0].label, 1);
    assert_eq!(ds.instances[0].rationale_mask, vec![1, 1, 1]);
    assert_eq!(ds.instances[1].label, 0);
}

#[test]
fn ingest_reports_record_line_on_bad_json() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("ann.jsonl");
    fs::write(&src, "\n{\"id\":\"a\"}\n").unwrap();
    let out = binary()
        .args(["ingest", "--format", "multi-annotator", "--out"])
        .arg(dir.path().join("x.jsonl"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ann.jsonl:2"));
}

#[test]
fn unknown_format_is_a_usage_error() {
    let out = binary()
        .args(["ingest", "--format", "xml", "--out", "x.jsonl", "in.xml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown format"));
}

#[test]
fn run_then_report_tables() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), &small_planted());
    let manifest = dir.path().join("exp.manifest");
    fs::write(&manifest, manifest_text("")).unwrap();
    let out = run_ok(
        binary()
            .args(["run", "--workers", "2", "--manifest"])
            .arg(&manifest),
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cells=3 failed=0"), "{stdout}");

    let report = dir.path().join("report");
    let hash = fs::read_to_string(report.join("ci-records.csv")).unwrap();
    let hash = manifest_hash_of(&hash).unwrap().to_string();
    assert_eq!(hash.len(), 64);
    for id in TABLE_IDS {
        let csv = fs::read_to_string(report.join(format!("{id}.csv"))).unwrap();
        assert_eq!(manifest_hash_of(&csv), Some(hash.as_str()), "{id}");
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(report.join(format!("{id}.json"))).unwrap())
                .unwrap();
        assert_eq!(json["manifest_sha256"], hash.as_str(), "{id}");
    }

    let overview = run_ok(
        binary()
            .args(["report", "--table", "ci-overview", "--out"])
            .arg(&report),
    );
    let text = String::from_utf8(overview.stdout).unwrap();
    let body = csv_body(&text);
    assert!(body.starts_with(
        "task,provider,strategy,runs,instances,mean_suff,std_suff,failed_instances\n"
    ));
    assert_eq!(body.lines().count(), 3, "{body}");

    let intervals = run_ok(
        binary()
            .args(["report", "--table", "intervals", "--format", "json"])
            .env("RATIONALE_OUT", &report),
    );
    let json: serde_json::Value = serde_json::from_slice(&intervals.stdout).unwrap();
    let ar = json["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["metric"] == "AR")
        .unwrap();
    assert_eq!(ar["runs"], 3);
    assert!(ar["lower"].as_f64().unwrap() <= ar["upper"].as_f64().unwrap());

    let grid = fs::read_to_string(report.join("tc-ar-grid.csv")).unwrap();
    assert!(csv_body(&grid).starts_with("task,metric,runs,baseline_f1,model_f1,ratio,normalised\n"));
    let delta = fs::read_to_string(report.join("delta-pred.csv")).unwrap();
    assert_eq!(csv_body(&delta).lines().count(), 1 + 3 * 2);
    let kappa = fs::read_to_string(report.join("kappa.csv")).unwrap();
    assert_eq!(csv_body(&kappa).lines().count(), 1 + 2);
}

#[test]
fn unknown_table_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary()
        .args(["report", "--table", "figure-9", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown table"));
}

#[test]
fn failed_cells_are_isolated_and_set_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), &small_planted());
    let manifest = dir.path().join("exp.manifest");
    let dead = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = dead.local_addr().unwrap().port();
    drop(dead);
    let extra = format!(
        "provider.down.kind = remote\nprovider.down.endpoint = http://127.0.0.1:{port}/predict\nprovider.down.timeout_ms = 500\n"
    );
    fs::write(
        &manifest,
        manifest_text(&extra).replace("seeds = 0, 1, 2", "seeds = 4"),
    )
    .unwrap();
    let out_dir = dir.path().join("elsewhere");
    let out = binary()
        .args(["run", "--manifest"])
        .arg(&manifest)
        .env("RATIONALE_OUT", &out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cells=2 failed=1"), "{stdout}");
    assert!(stdout.contains("provider=down"), "{stdout}");

    let failures = fs::read_to_string(out_dir.join("failures.csv")).unwrap();
    assert_eq!(csv_body(&failures).lines().count(), 2);
    let records = fs::read_to_string(out_dir.join("ci-records.csv")).unwrap();
    assert!(records.contains("attn:toy_attention:reserved_symbol"));
}

#[test]
fn seed_flag_overrides_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), &small_planted());
    let manifest = dir.path().join("exp.manifest");
    fs::write(&manifest, manifest_text("provider.bow.kind = toy_bow\n")).unwrap();
    let out = run_ok(
        binary()
            .args(["run", "--seed", "9", "--manifest"])
            .arg(&manifest),
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("cells=2 failed=0"));
    let runs = fs::read_to_string(dir.path().join("report/learnability-runs.csv")).unwrap();
    let body = csv_body(&runs);
    assert_eq!(body.lines().count(), 2);
    assert!(body.lines().nth(1).unwrap().starts_with("planted,9,"));
}

#[test]
fn invalid_manifest_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bad.manifest");
    fs::write(&manifest, "seeds = 1\nmystery = 3\n").unwrap();
    let out = binary()
        .args(["run", "--manifest"])
        .arg(&manifest)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
