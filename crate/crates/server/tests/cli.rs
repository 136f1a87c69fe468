use std::path::Path;
use std::process::{Command, Output};

use phonolearn_core::analytics::{export_csv, ExistenceCode, ItemStats};
use serde_json::Value;

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/ghazal_001.json")
        .display()
        .to_string()
}

fn run(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phonolearn"))
        .arg("--store")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn ingest_generate_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["ingest", &fixture()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "ingested 6 lines, 51 words\n");

    let out = run(dir.path(), &["gen-tasks", "--seed", "7"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        stdout(&out),
        "published 22 tasks: 20 disambiguation, 2 correction, 0 completion\n"
    );

    let out = run(dir.path(), &["export"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "task_id,pwld,word_length,existence_code,n_responses,n_incorrect,error_rate,weight\r\n"
    );

    let target = dir.path().join("items.csv");
    let out = run(dir.path(), &["export", "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(target.exists());

    let out = run(dir.path(), &["score"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "");
}

#[test]
fn score_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["score", "tær", "sær"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["total_cost"].as_f64(), Some(2.0 / 15.0));

    let out = run(dir.path(), &["--indel-cost", "2", "score", "duːst", "duːs"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["total_cost"].as_f64(), Some(2.0));
}

#[test]
fn fit_exported_items() {
    let dir = tempfile::tempdir().unwrap();
    let items: Vec<ItemStats> = (0..22u64)
        .map(|i| ItemStats {
            task_id: format!("x-w{i:03}"),
            n_responses: 10,
            n_incorrect: (i * 7) % 11,
            error_rate: ((i * 7) % 11) as f64 / 10.0,
            weight: 10,
            pwld: (i % 5) as f64 / 15.0 + if i % 3 == 0 { 0.0625 } else { 0.0 },
            word_length: 2 + i % 6,
            existence_code: ExistenceCode::from_listed(i < 20),
        })
        .collect();
    let path = dir.path().join("items.csv");
    std::fs::write(&path, export_csv(&items)).unwrap();
    let out = run(dir.path(), &["fit", path.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["df"], serde_json::json!([3.0, 216.0]));

    std::fs::write(&path, "task_id,pwld\r\nx,1\r\n").unwrap();
    assert_eq!(
        run(dir.path(), &["fit", path.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad_ipa = run(dir.path(), &["score", "tær", "sXr"]);
    assert_eq!(bad_ipa.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_ipa.stderr).contains("position 1"));

    assert_eq!(
        run(dir.path(), &["--indel-cost", "11", "score", "a", "b"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["score", "tær"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        run(dir.path(), &["gen-tasks", "--rate", "2"]).status.code(),
        Some(1)
    );

    let doc = dir.path().join("bad.json");
    std::fs::write(
        &doc,
        r#"{"line_id":"b","source_text":"x","ipa_text":"qqW","audio_ref":"b.mp3",
            "words":[{"index":0,"source_token":"x","ipa_token":"qqW","start_ms":0,"end_ms":10}]}"#,
    )
    .unwrap();
    assert_eq!(
        run(dir.path(), &["ingest", doc.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn io_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        run(dir.path(), &["ingest", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let file = dir.path().join("plain-file");
    std::fs::write(&file, "").unwrap();
    assert_eq!(run(&file, &["export"]).status.code(), Some(2));

    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(
        run(dir.path(), &["export", "-o", unwritable.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
