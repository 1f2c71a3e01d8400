//! The `dialogmap` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TRANSCRIPT: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/task1_mental_health.jsonl");

fn dialogmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialogmap"))
        .args(args)
        .env_remove("DIALOGMAP_HTTP_ENDPOINT")
        .env_remove("DIALOGMAP_HTTP_MODEL")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn replay(dir: &Path, name: &str, mode: &str, transcript: &str) -> (Output, PathBuf) {
    let out = dir.join(name);
    let o = dialogmap(&[
        "replay",
        "--transcript",
        transcript,
        "--mode",
        mode,
        "--provider",
        "mock",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    (o, out)
}

fn log_of(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.log", out.display()))
}

#[test]
fn replay_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, out_a) = replay(dir.path(), "a.json", "ai", TRANSCRIPT);
    let (b, out_b) = replay(dir.path(), "b.json", "ai", TRANSCRIPT);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert!(stdout(&a).starts_with("nodes="));
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
    assert_eq!(std::fs::read(log_of(&out_a)).unwrap(), std::fs::read(log_of(&out_b)).unwrap());
}

#[test]
fn human_map_export_has_no_links() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = replay(dir.path(), "h.json", "human", TRANSCRIPT);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(" links=0 "));
    let export: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(export["links"].as_array().unwrap().len(), 0);
    assert!(!export["nodes"].as_array().unwrap().is_empty());
}

#[test]
fn out_of_order_transcript_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(TRANSCRIPT).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(6, 7);
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let (o, _) = replay(dir.path(), "x.json", "ai", bad.to_str().unwrap());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"));
}

#[test]
fn unknown_flags_are_errors() {
    let o = dialogmap(&["validate", "--log", "x", "--verbose"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_and_export_a_replayed_log() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = replay(dir.path(), "m.json", "ai", TRANSCRIPT);
    let log = log_of(&out);
    let v = dialogmap(&["validate", "--log", log.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0), "{}", String::from_utf8_lossy(&v.stderr));
    assert!(stdout(&v).starts_with("valid records="));

    let e = dialogmap(&["export", "--log", log.to_str().unwrap(), "--format", "canonical"]);
    assert_eq!(e.status.code(), Some(0));
    assert_eq!(e.stdout, std::fs::read(&out).unwrap());

    let g = dialogmap(&["export", "--log", log.to_str().unwrap(), "--format", "graph"]);
    assert!(stdout(&g).starts_with("digraph map {"));
}

#[test]
fn duplicated_seq_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (_, out) = replay(dir.path(), "m.json", "ai", TRANSCRIPT);
    let text = std::fs::read_to_string(log_of(&out)).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(5, lines[4]);
    let bad = dir.path().join("dup.log");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let v = dialogmap(&["validate", "--log", bad.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(4));
    assert!(stdout(&v).contains("invariant=seq-gap-free"));
}

#[test]
fn merge_in_human_map_log_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ai_out) = replay(dir.path(), "ai.json", "ai", TRANSCRIPT);
    let (_, human_out) = replay(dir.path(), "human.json", "human", TRANSCRIPT);
    let ai_log = std::fs::read_to_string(log_of(&ai_out)).unwrap();
    let human_log = std::fs::read_to_string(log_of(&human_out)).unwrap();

    // Append the AI session's first merge, renumbered, to the Human-Map log.
    let merge = ai_log.lines().find(|l| l.contains("MergeGeneratedMap")).unwrap();
    let mut merge: serde_json::Value = serde_json::from_str(merge).unwrap();
    let next = human_log.lines().count() as u64; // header + records
    merge["server_seq"] = next.into();
    merge["payload"]["op"]["server_seq"] = next.into();
    let injected = format!("{human_log}{}\n", dialogmap::canonical::to_canonical_string(&merge).unwrap());
    let bad = dir.path().join("mode.log");
    std::fs::write(&bad, injected).unwrap();

    let v = dialogmap(&["validate", "--log", bad.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(4));
    assert!(stdout(&v).contains("invariant=mode-separation"), "{}", stdout(&v));
}

#[test]
fn missing_log_is_bad_input() {
    let v = dialogmap(&["validate", "--log", "/nonexistent/session.log"]);
    assert_eq!(v.status.code(), Some(2));
}

#[test]
fn http_provider_failures_exit_3() {
    // Nothing listens on this port, so every call fails at the transport.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.jsonl");
    let text = std::fs::read_to_string(TRANSCRIPT).unwrap();
    std::fs::write(&transcript, text.lines().take(3).collect::<Vec<_>>().join("\n")).unwrap();
    let out = dir.path().join("o.json");
    let o = dialogmap(&[
        "replay",
        "--transcript",
        transcript.to_str().unwrap(),
        "--mode",
        "ai",
        "--provider",
        "http",
        "--endpoint",
        &url,
        "--model",
        "m",
        "--timeout-ms",
        "500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    // The session still completed and wrote a valid log.
    let v = dialogmap(&["validate", "--log", log_of(&out).to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
}
