//! Wire messages exchanged with session clients.
//!
//! Each frame is a 4-byte big-endian length followed by one canonical JSON
//! message. Every server message that reflects a logged change carries the
//! `server_seq` of its log record, so clients can order messages and detect
//! gaps. See `docs/PROTOCOL.md` for the field-level description.

use super::record::Subject;
use crate::canonical::{from_canonical, to_canonical, CanonicalError};
use crate::engine::MapState;
use crate::pipeline::Task;
use crate::types::{
    Link, MapOp, Node, OpId, Placement, SessionConfig, SessionId, SpeakerId, Topic, TopicId,
    TranscriptEvent, TurnId, TurnRef, UserId,
};
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest frame either side accepts.
pub const MAX_FRAME_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ClientMessage {
    /// Must be the first message on a connection. `config` is used only
    /// when the session does not exist yet.
    Join {
        session_id: SessionId,
        user_id: UserId,
        display_name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<SessionConfig>,
    },
    /// A map edit. The op must not carry a server seq.
    SubmitOp { op: MapOp },
    SubmitTranscriptEvent { event: TranscriptEvent },
    /// No more transcript events will follow; the pending turn is flushed.
    CloseTranscript,
    SetAgenda { text: String },
    GetTurnTranscript { turn_id: TurnId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub user_id: UserId,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    /// Full state as of `server_seq`; every later message has a larger seq.
    Snapshot {
        protocol_version: u32,
        server_seq: u64,
        state: MapState,
        agenda: Option<String>,
        participants: Vec<Participant>,
    },
    OpApplied {
        server_seq: u64,
        op: MapOp,
    },
    TranscriptAppended {
        server_seq: u64,
        event: TranscriptEvent,
    },
    TranscriptClosed {
        server_seq: u64,
    },
    AgendaSet {
        server_seq: u64,
        text: String,
    },
    /// Annotation of one turn landed. `nodes` may be empty.
    NodesGenerated {
        server_seq: u64,
        turn: TurnRef,
        nodes: Vec<Node>,
    },
    /// A topic decision for `turn` was applied; `topic` is the open topic
    /// afterwards and `closed` the topic it ended, if any.
    TopicUpdated {
        server_seq: u64,
        turn: TurnRef,
        topic: Topic,
        closed: Option<Topic>,
    },
    /// A closed topic's palette nodes moved to the canvas.
    MapGenerated {
        server_seq: u64,
        op_id: OpId,
        topic_id: TopicId,
        placements: Vec<Placement>,
        links: Vec<Link>,
        flagged: bool,
    },
    TurnTranscript {
        turn_id: TurnId,
        speaker_id: SpeakerId,
        text: String,
    },
    /// Rejections and provider faults. A fault carries the seq of its log
    /// record and what it was about; a rejected op carries its op id.
    Error {
        code: String,
        detail: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        server_seq: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        op_id: Option<OpId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        task: Option<Task>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject: Option<Subject>,
    },
}

impl ServerMessage {
    /// Seq of the logged change this message reflects, if any.
    pub fn server_seq(&self) -> Option<u64> {
        match self {
            ServerMessage::Snapshot { .. } | ServerMessage::TurnTranscript { .. } => None,
            ServerMessage::OpApplied { server_seq, .. }
            | ServerMessage::TranscriptAppended { server_seq, .. }
            | ServerMessage::TranscriptClosed { server_seq }
            | ServerMessage::AgendaSet { server_seq, .. }
            | ServerMessage::NodesGenerated { server_seq, .. }
            | ServerMessage::TopicUpdated { server_seq, .. }
            | ServerMessage::MapGenerated { server_seq, .. } => Some(*server_seq),
            ServerMessage::Error { server_seq, .. } => *server_seq,
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
            server_seq: None,
            op_id: None,
            task: None,
            subject: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ServerMessage::Snapshot { .. } => "Snapshot",
            ServerMessage::OpApplied { .. } => "OpApplied",
            ServerMessage::TranscriptAppended { .. } => "TranscriptAppended",
            ServerMessage::TranscriptClosed { .. } => "TranscriptClosed",
            ServerMessage::AgendaSet { .. } => "AgendaSet",
            ServerMessage::NodesGenerated { .. } => "NodesGenerated",
            ServerMessage::TopicUpdated { .. } => "TopicUpdated",
            ServerMessage::MapGenerated { .. } => "MapGenerated",
            ServerMessage::TurnTranscript { .. } => "TurnTranscript",
            ServerMessage::Error { .. } => "Error",
        }
    }
}

pub fn encode<T: Serialize>(message: &T) -> Result<Vec<u8>, CanonicalError> {
    to_canonical(message)
}

pub fn decode<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T, CanonicalError> {
    from_canonical(bytes)
}
