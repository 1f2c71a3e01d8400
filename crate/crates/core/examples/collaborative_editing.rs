//! Three clients edit one map through a session while their messages are
//! delivered late and out of order; every mirror ends equal to the server.
//!
//! ```text
//! cargo run --example collaborative_editing
//! ```

use dialogmap::session::protocol::ServerMessage;
use dialogmap::session::record::MemoryLog;
use dialogmap::session::{Mirror, Session, SessionOptions};
use dialogmap::types::{IbisTag, MapOp, Mode, NodeId, OpKind, Point, SessionConfig, SessionId, UserId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut server = Session::new(
        SessionId::new("whiteboard"),
        SessionConfig::mock(Mode::HumanMap, 1),
        Box::new(MemoryLog::new()),
        SessionOptions::default(),
    )
    .expect("session starts");

    let users: Vec<UserId> = ["ana", "ben", "cy"].into_iter().map(UserId::new).collect();
    let mut mirrors: Vec<Mirror> = Vec::new();
    let mut inboxes: Vec<Vec<ServerMessage>> = Vec::new();
    for u in &users {
        inboxes.push(vec![server.join(u.clone(), u.as_str()).expect("room for three")]);
        mirrors.push(Mirror::new());
    }

    let (mut accepted, mut rejected) = (0, 0);
    for i in 0..300 {
        let who = rng.gen_range(0..users.len());
        let nodes: Vec<NodeId> = server.state().live_nodes().map(|n| n.node_id).collect();
        let kind = match (rng.gen_range(0..4), nodes.choose(&mut rng)) {
            (0, _) | (_, None) => OpKind::CreateNode {
                node_id: None,
                tag: IbisTag::Idea,
                summary: format!("idea {i}"),
                position: Point::new(rng.gen_range(0.0..600.0), rng.gen_range(0.0..400.0)),
            },
            (1, Some(&id)) => OpKind::MoveNode {
                node_id: id,
                position: Point::new(rng.gen_range(0.0..600.0), rng.gen_range(0.0..400.0)),
            },
            (2, Some(&id)) => OpKind::DeleteNode { node_id: id },
            (_, Some(&id)) => OpKind::CreateLink {
                link_id: None,
                from: id,
                to: *nodes.choose(&mut rng).expect("non-empty"),
                label: "Support".into(),
            },
        };
        match server.submit_op(MapOp::user(format!("op-{i}"), &users[who], kind)) {
            Ok(messages) => {
                accepted += 1;
                for inbox in inboxes.iter_mut() {
                    inbox.extend(messages.iter().cloned());
                }
            }
            Err(_) => rejected += 1,
        }
        // Each client sometimes catches up on a shuffled backlog.
        for (m, inbox) in mirrors.iter_mut().zip(inboxes.iter_mut()) {
            if rng.gen_bool(0.2) {
                inbox.shuffle(&mut rng);
                for msg in inbox.drain(..) {
                    m.receive(msg).expect("mirror applies server messages");
                }
            }
        }
    }
    for (m, inbox) in mirrors.iter_mut().zip(inboxes.iter_mut()) {
        for msg in inbox.drain(..) {
            m.receive(msg).expect("mirror applies server messages");
        }
    }

    let truth = server.state().snapshot();
    println!("{accepted} ops accepted, {rejected} rejected (self links, stale ids)");
    for (u, m) in users.iter().zip(&mirrors) {
        let same = m.state().map(|s| s.snapshot()) == Some(truth.clone());
        println!("{:<4} at seq {:?}: {}", u.as_str(), m.applied_seq(), if same { "converged" } else { "DIVERGED" });
    }
}
