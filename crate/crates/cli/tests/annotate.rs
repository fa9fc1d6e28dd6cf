use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/data/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn annotate(annotations: &Path, input: &str) -> i32 {
    let mut child = Command::new(env!("CARGO_BIN_EXE_divdist"))
        .args([
            "annotate",
            "--lexicon",
            &fixture("lexicon.json"),
            "--corpus",
            &fixture("corpus.jsonl"),
        ])
        .args(["--target", "engineer", "--annotator", "tester", "--annotations"])
        .arg(annotations)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait().unwrap().code().unwrap()
}

fn lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn interrupted_session_resumes_with_pending_contexts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ann.jsonl");

    assert_eq!(annotate(&path, "1\n2\nquit\n"), 0);
    let first = lines(&path);
    assert_eq!(first.len(), 2);
    assert_eq!(first[0]["label"], "female");
    assert_eq!(first[1]["label"], "male");

    // the fixture has 14 engineer contexts; the rest are labeled none
    assert_eq!(annotate(&path, &"0\n".repeat(20)), 0);
    let all = lines(&path);
    assert_eq!(all.len(), 14);
    let mut ids: Vec<&str> = all.iter().map(|r| r["context_id"].as_str().unwrap()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 14);
    assert!(all[2..].iter().all(|r| r["label"] == "none"));
}

#[test]
fn unknown_target_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_divdist"))
        .args([
            "annotate",
            "--lexicon",
            &fixture("lexicon.json"),
            "--corpus",
            &fixture("corpus.jsonl"),
        ])
        .args(["--target", "astronaut", "--annotator", "x", "--annotations"])
        .arg(dir.path().join("a.jsonl"))
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}
