//! Exports a finished map as canonical JSON and as a Graphviz digraph.
//!
//! ```text
//! cargo run --example export_graph > map.dot && dot -Tsvg map.dot -o map.svg
//! ```

use dialogmap::engine::export::MapExport;
use dialogmap::pipeline::MockProvider;
use dialogmap::session::record::MemoryLog;
use dialogmap::session::{Session, SessionOptions};
use dialogmap::transcript::{parse_transcript, run_transcript, BUNDLED_TRANSCRIPT};
use dialogmap::types::{Mode, SessionConfig, SessionId};

fn main() {
    let mut session = Session::new(
        SessionId::new("task1-demo"),
        SessionConfig::mock(Mode::AiMap, 1),
        Box::new(MemoryLog::new()),
        SessionOptions::default(),
    )
    .expect("session starts");
    let events = parse_transcript(BUNDLED_TRANSCRIPT).expect("bundled transcript parses");
    run_transcript(&mut session, &events, &MockProvider::new(1)).expect("transcript runs");

    let export = MapExport::of(session.state());
    let json = export.to_canonical().expect("exports serialize");
    eprintln!("{} ({} bytes of canonical JSON)", export.summary_line(), json.len());
    print!("{}", export.to_dot());
}
