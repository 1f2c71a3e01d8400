//! Records a session to a log file, then rebuilds it from the log alone and
//! checks every invariant record by record.
//!
//! ```text
//! cargo run --example replay_and_validate
//! ```

use dialogmap::pipeline::MockProvider;
use dialogmap::session::record::{read_log, FileLog};
use dialogmap::session::{replay, validate_log, Session, SessionOptions};
use dialogmap::transcript::{parse_transcript, run_transcript, BUNDLED_TRANSCRIPT};
use dialogmap::types::{Mode, SessionConfig, SessionId};

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("task1-demo.log");

    let mut session = Session::new(
        SessionId::new("task1-demo"),
        SessionConfig::mock(Mode::AiMap, 1),
        Box::new(FileLog::create(&path).expect("log file")),
        SessionOptions::default(),
    )
    .expect("session starts");
    let events = parse_transcript(BUNDLED_TRANSCRIPT).expect("bundled transcript parses");
    run_transcript(&mut session, &events, &MockProvider::new(1)).expect("transcript runs");
    let live = session.state().snapshot();

    let (header, records) = read_log(&path).expect("log reads back");
    let mut kinds = std::collections::BTreeMap::<&str, usize>::new();
    for r in &records {
        *kinds.entry(r.payload.name()).or_default() += 1;
    }
    println!("{} records: {kinds:?}", records.len());

    let rebuilt = replay(&header, &records).expect("log replays");
    println!("replayed snapshot equals live snapshot: {}", rebuilt.state().snapshot() == live);

    match validate_log(&header, &records) {
        Ok(core) => println!("valid, last seq {}", core.state().last_seq()),
        Err(v) => println!("invalid: {v}"),
    }

    // Drop one record in the middle and validate again.
    let mut gapped = records.clone();
    gapped.remove(gapped.len() / 2);
    match validate_log(&header, &gapped) {
        Ok(_) => println!("gapped log unexpectedly valid"),
        Err(v) => println!("gapped log: invariant {} broken at seq {}", v.name, v.server_seq),
    }
}
