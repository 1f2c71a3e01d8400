//! AI-Map mode: each time a topic closes, its palette nodes are linked by
//! the provider and merged onto the canvas as one block.
//!
//! ```text
//! cargo run --example ai_map_session
//! ```

use dialogmap::pipeline::MockProvider;
use dialogmap::session::protocol::ServerMessage;
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
    let messages = run_transcript(&mut session, &events, &MockProvider::new(1)).expect("transcript runs");

    let state = session.state();
    for m in &messages {
        match m {
            ServerMessage::TopicUpdated { server_seq, topic, closed: Some(closed), .. } => {
                println!("#{server_seq} topic {:?} closed, {:?} opened", closed.label, topic.label);
            }
            ServerMessage::MapGenerated { server_seq, topic_id, placements, links, .. } => {
                println!("#{server_seq} merged topic {topic_id}: {} nodes, {} links", placements.len(), links.len());
                for l in links {
                    let from = state.node(l.from).map(|n| n.summary.as_str()).unwrap_or("?");
                    let to = state.node(l.to).map(|n| n.summary.as_str()).unwrap_or("?");
                    println!("      {from:?} --{}--> {to:?}", l.label);
                }
            }
            _ => {}
        }
    }
    if let Some(open) = state.open_topic() {
        println!(
            "still open: {:?} with {} nodes in the palette",
            open.label,
            state.palette_nodes_of(open.topic_id).len()
        );
    }
}
