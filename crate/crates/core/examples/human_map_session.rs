//! Human-Map mode: the provider only produces nodes, which wait in the
//! palette until a participant places them.
//!
//! ```text
//! cargo run --example human_map_session
//! ```

use dialogmap::pipeline::MockProvider;
use dialogmap::session::record::MemoryLog;
use dialogmap::session::{Session, SessionOptions};
use dialogmap::transcript::{parse_transcript, run_transcript, BUNDLED_TRANSCRIPT};
use dialogmap::types::{MapOp, Mode, OpKind, Point, SessionConfig, SessionId, UserId};

fn main() {
    let mut session = Session::new(
        SessionId::new("task1-demo"),
        SessionConfig::mock(Mode::HumanMap, 1),
        Box::new(MemoryLog::new()),
        SessionOptions::default(),
    )
    .expect("session starts");
    let events = parse_transcript(BUNDLED_TRANSCRIPT).expect("bundled transcript parses");
    run_transcript(&mut session, &events, &MockProvider::new(1)).expect("transcript runs");

    let state = session.state();
    println!("palette ({} nodes, chronological):", state.palette_order().len());
    for id in state.palette_order() {
        let n = state.node(*id).expect("palette nodes exist");
        println!("  {:>2} {:<8} {:<5} {}", id.0, n.tag.as_str(), n.speaker_id.as_str(), n.summary);
    }

    // A participant drags the first two palette nodes onto the canvas and
    // links them by hand.
    let ana = UserId::new("ana");
    let first: Vec<_> = state.palette_order().iter().take(2).copied().collect();
    for (i, id) in first.iter().enumerate() {
        let op = MapOp::user(format!("place-{i}"), &ana, OpKind::MoveNode {
            node_id: *id,
            position: Point::new(i as f64 * 240.0, 0.0),
        });
        session.submit_op(op).expect("placement accepted");
    }
    let link = MapOp::user("link-0", &ana, OpKind::CreateLink {
        link_id: None,
        from: first[1],
        to: first[0],
        label: "Answers".into(),
    });
    session.submit_op(link).expect("link accepted");

    let state = session.state();
    println!(
        "after placing: {} on canvas, {} in palette, {} links, {} topics",
        state.live_nodes().filter(|n| n.location.canvas_position().is_some()).count(),
        state.palette_order().len(),
        state.links().len(),
        state.topics().len()
    );
}
