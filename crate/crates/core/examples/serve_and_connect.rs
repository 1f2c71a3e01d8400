//! Starts the session server on a local port, connects two clients and
//! streams part of the transcript through one of them.
//!
//! ```text
//! cargo run --example serve_and_connect
//! ```

use dialogmap::config::ServerConfig;
use dialogmap::server::{Client, Server};
use dialogmap::session::protocol::{ClientMessage, ServerMessage};
use dialogmap::session::Mirror;
use dialogmap::transcript::{parse_transcript, BUNDLED_TRANSCRIPT};
use dialogmap::types::{Mode, SessionConfig, SessionId, UserId};
use std::time::Duration;
use tokio::time::timeout;

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let config = ServerConfig {
        listen: "127.0.0.1:0".into(),
        log_dir: dir.path().to_path_buf(),
        ..ServerConfig::default()
    };
    let server = Server::new(config);
    let listener = server.bind().await?;
    let addr = listener.local_addr()?;
    tokio::spawn(server.run(listener));
    println!("server on {addr}");

    let join = |user: &str, config| ClientMessage::Join {
        session_id: SessionId::new("demo"),
        user_id: UserId::new(user),
        display_name: user.to_string(),
        config,
    };
    let mut ana = Client::connect(addr).await?;
    ana.send(&join("ana", Some(SessionConfig::mock(Mode::AiMap, 1)))).await?;
    let mut ben = Client::connect(addr).await?;
    ben.send(&join("ben", None)).await?;

    let events = parse_transcript(BUNDLED_TRANSCRIPT).expect("bundled transcript parses");
    for e in events.iter().take(12) {
        let mut e = e.clone();
        e.session_id = SessionId::new("demo");
        ana.send(&ClientMessage::SubmitTranscriptEvent { event: e }).await?;
    }
    ana.send(&ClientMessage::CloseTranscript).await?;

    // ben follows the broadcast until it goes quiet.
    let mut mirror = Mirror::new();
    while let Ok(next) = timeout(Duration::from_millis(500), ben.recv()).await {
        let Some(msg) = next? else { break };
        if !matches!(msg, ServerMessage::TranscriptAppended { .. }) {
            println!("ben <- {} seq={:?}", msg.name(), msg.server_seq());
        }
        mirror.receive(msg).expect("mirror applies");
    }
    let state = mirror.state().expect("snapshot received");
    println!("ben sees {} nodes in {} topics", state.live_nodes().count(), state.topics().len());
    Ok(())
}
