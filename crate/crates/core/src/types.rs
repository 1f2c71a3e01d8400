//! Domain types shared by every layer of the engine.
//!
//! Everything here is a plain value: cloneable, comparable and serializable
//! through [`crate::canonical`]. Identifiers are opaque newtypes; nothing in
//! the crate inspects their contents beyond equality and ordering.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Default number of accumulated words after which the next sentence end
/// closes a turn.
pub const DEFAULT_CHECKPOINT_WORDS: usize = 50;
/// Default word limit for node summaries.
pub const DEFAULT_SUMMARY_WORD_LIMIT: usize = 6;
/// Word limit for topic labels.
pub const TOPIC_LABEL_WORD_LIMIT: usize = 6;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

macro_rules! counter_id {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

string_id!(
    /// Identifies one meeting session.
    SessionId
);
string_id!(
    /// Identifies a speaker in the transcript; also the color identity of nodes.
    SpeakerId
);
string_id!(
    /// Identifies a connected participant.
    UserId
);
string_id!(
    /// Client-chosen correlation id for a submitted operation.
    OpId
);

counter_id!(TurnId, "turn-");
counter_id!(NodeId, "n");
counter_id!(LinkId, "l");
counter_id!(TopicId, "topic-");

impl From<&UserId> for SpeakerId {
    fn from(user: &UserId) -> Self {
        SpeakerId(user.0.clone())
    }
}

/// Number of whitespace-separated tokens. Punctuation stays attached to words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Collapses every run of Unicode whitespace to a single space and trims.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The first `limit` whitespace tokens of `text`, joined by single spaces.
pub fn first_words(text: &str, limit: usize) -> String {
    text.split_whitespace()
        .take(limit)
        .collect::<Vec<_>>()
        .join(" ")
}

/// One ASR fragment as delivered by the speech service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub session_id: SessionId,
    pub seq: u64,
    pub speaker_id: SpeakerId,
    pub text: String,
    pub is_sentence_final: bool,
    pub timestamp_ms: u64,
}

impl TranscriptEvent {
    /// Empty text is only allowed on sentence-final punctuation events.
    pub fn is_well_formed(&self) -> bool {
        !self.text.trim().is_empty() || self.is_sentence_final
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitReason {
    SpeakerChange,
    LengthCheckpoint,
    StreamEnd,
}

/// A finalized utterance: the unit sent for annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: TurnId,
    /// Position of the turn in its session, starting at 1.
    pub seq: u64,
    pub speaker_id: SpeakerId,
    pub text: String,
    pub word_count: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub split_reason: SplitReason,
}

impl Turn {
    pub fn reference(&self) -> TurnRef {
        TurnRef {
            turn_id: self.turn_id,
            turn_seq: self.seq,
            speaker_id: self.speaker_id.clone(),
        }
    }
}

/// The parts of a turn that records and messages need to place its results.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRef {
    pub turn_id: TurnId,
    pub turn_seq: u64,
    pub speaker_id: SpeakerId,
}

/// The four node categories of the IBIS notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IbisTag {
    Question,
    Idea,
    Pro,
    Con,
}

impl IbisTag {
    pub const ALL: [IbisTag; 4] = [IbisTag::Question, IbisTag::Idea, IbisTag::Pro, IbisTag::Con];

    pub fn as_str(self) -> &'static str {
        match self {
            IbisTag::Question => "Question",
            IbisTag::Idea => "Idea",
            IbisTag::Pro => "Pro",
            IbisTag::Con => "Con",
        }
    }

    /// The bracketed tag used in provider prompts and outputs.
    pub fn prompt_tag(self) -> &'static str {
        match self {
            IbisTag::Question => "[$Question]",
            IbisTag::Idea => "[$Position]",
            IbisTag::Pro => "[$Pro]",
            IbisTag::Con => "[$Con]",
        }
    }
}

impl fmt::Display for IbisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A canvas position. Coordinates are held at millesimal precision so that
/// the canonical text form round-trips exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPoint")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    x: f64,
    y: f64,
}

impl From<RawPoint> for Point {
    fn from(raw: RawPoint) -> Self {
        Point::new(raw.x, raw.y)
    }
}

fn quantize(v: f64) -> f64 {
    if !v.is_finite() {
        return 0.0;
    }
    // `+ 0.0` folds negative zero.
    (v * 1000.0).round() / 1000.0 + 0.0
}

impl Point {
    /// Non-finite inputs are mapped to the origin axis.
    pub fn new(x: f64, y: f64) -> Self {
        Point {
            x: quantize(x),
            y: quantize(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeOrigin {
    AiGenerated { turn_id: TurnId, quote: String },
    UserCreated { user_id: UserId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Location {
    /// Held in the temporary palette; `chrono_index` is the source turn's seq.
    Palette { chrono_index: u64 },
    Canvas { position: Point },
    Deleted,
}

impl Location {
    pub fn is_deleted(&self) -> bool {
        matches!(self, Location::Deleted)
    }

    pub fn is_palette(&self) -> bool {
        matches!(self, Location::Palette { .. })
    }

    pub fn canvas_position(&self) -> Option<Point> {
        match self {
            Location::Canvas { position } => Some(*position),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: NodeId,
    pub tag: IbisTag,
    pub summary: String,
    pub origin: NodeOrigin,
    pub speaker_id: SpeakerId,
    pub location: Location,
    pub topic_id: Option<TopicId>,
    /// Set when the node needs a human look: its summary was truncated, or
    /// its generated links were rejected.
    pub flagged: bool,
}

impl Node {
    pub fn quote(&self) -> Option<&str> {
        match &self.origin {
            NodeOrigin::AiGenerated { quote, .. } => Some(quote),
            NodeOrigin::UserCreated { .. } => None,
        }
    }

    pub fn turn_id(&self) -> Option<TurnId> {
        match &self.origin {
            NodeOrigin::AiGenerated { turn_id, .. } => Some(*turn_id),
            NodeOrigin::UserCreated { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Actor {
    User { user_id: UserId },
    Ai,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub link_id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    pub label: String,
    pub created_by: Actor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub topic_id: TopicId,
    pub label: String,
    pub first_turn_seq: u64,
    pub last_turn_seq: u64,
    pub status: TopicStatus,
    /// The label was truncated after the provider kept exceeding the limit.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub node_id: NodeId,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OpKind {
    /// User-created nodes go straight to the canvas. `node_id` is assigned
    /// by the server; clients submit `None`.
    CreateNode {
        node_id: Option<NodeId>,
        tag: IbisTag,
        summary: String,
        position: Point,
    },
    EditNode {
        node_id: NodeId,
        summary: Option<String>,
        tag: Option<IbisTag>,
    },
    DeleteNode {
        node_id: NodeId,
    },
    /// Palette to canvas, or a position change on the canvas.
    MoveNode {
        node_id: NodeId,
        position: Point,
    },
    CreateLink {
        link_id: Option<LinkId>,
        from: NodeId,
        to: NodeId,
        label: String,
    },
    EditLink {
        link_id: LinkId,
        label: String,
    },
    DeleteLink {
        link_id: LinkId,
    },
    /// Moves a closed topic's palette nodes onto the canvas with their
    /// generated links.
    MergeGeneratedMap {
        topic_id: TopicId,
        placements: Vec<Placement>,
        links: Vec<Link>,
        /// The generated link batch was rejected; nodes were placed unlinked.
        flagged: bool,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::CreateNode { .. } => "CreateNode",
            OpKind::EditNode { .. } => "EditNode",
            OpKind::DeleteNode { .. } => "DeleteNode",
            OpKind::MoveNode { .. } => "MoveNode",
            OpKind::CreateLink { .. } => "CreateLink",
            OpKind::EditLink { .. } => "EditLink",
            OpKind::DeleteLink { .. } => "DeleteLink",
            OpKind::MergeGeneratedMap { .. } => "MergeGeneratedMap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOp {
    pub op_id: OpId,
    pub actor: Actor,
    pub kind: OpKind,
    /// Assigned on acceptance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_seq: Option<u64>,
}

impl MapOp {
    pub fn user(op_id: impl Into<String>, user: &UserId, kind: OpKind) -> Self {
        MapOp {
            op_id: OpId(op_id.into()),
            actor: Actor::User {
                user_id: user.clone(),
            },
            kind,
            server_seq: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// The assistant only generates nodes.
    HumanMap,
    /// The assistant also generates a linked sub-map per closed topic.
    AiMap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProviderConfig {
    Mock {
        seed: u64,
    },
    Http {
        endpoint: String,
        model: String,
        timeout_ms: u64,
        max_retries: u32,
    },
}

impl ProviderConfig {
    pub fn max_retries(&self) -> u32 {
        match self {
            ProviderConfig::Mock { .. } => 1,
            ProviderConfig::Http { max_retries, .. } => *max_retries,
        }
    }

    pub fn timeout_ms(&self) -> u64 {
        match self {
            ProviderConfig::Mock { .. } => 0,
            ProviderConfig::Http { timeout_ms, .. } => *timeout_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub mode: Mode,
    pub checkpoint_words: usize,
    pub summary_word_limit: usize,
    pub provider: ProviderConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("checkpoint_words must be at least 1")]
    CheckpointWords,
    #[error("summary_word_limit must be at least 1")]
    SummaryWordLimit,
    #[error("http provider needs a non-empty endpoint")]
    Endpoint,
}

impl SessionConfig {
    pub fn new(mode: Mode, provider: ProviderConfig) -> Self {
        SessionConfig {
            mode,
            checkpoint_words: DEFAULT_CHECKPOINT_WORDS,
            summary_word_limit: DEFAULT_SUMMARY_WORD_LIMIT,
            provider,
        }
    }

    pub fn mock(mode: Mode, seed: u64) -> Self {
        Self::new(mode, ProviderConfig::Mock { seed })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.checkpoint_words < 1 {
            return Err(ConfigError::CheckpointWords);
        }
        if self.summary_word_limit < 1 {
            return Err(ConfigError::SummaryWordLimit);
        }
        if let ProviderConfig::Http { endpoint, .. } = &self.provider {
            if endpoint.trim().is_empty() {
                return Err(ConfigError::Endpoint);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_count_uses_unicode_whitespace() {
        assert_eq!(word_count("  Agreed. "), 1);
        assert_eq!(word_count("a\u{00A0}b\u{2003}c\td\ne"), 5);
        assert_eq!(word_count("well , then"), 3);
        assert_eq!(word_count(""), 0);
    }

    #[test]
    fn first_words_truncates_and_normalizes() {
        assert_eq!(first_words("one  two\tthree four", 2), "one two");
        assert_eq!(first_words("short", 6), "short");
    }

    #[test]
    fn point_quantizes_to_millesimal() {
        let p = Point::new(1.23456, -0.0);
        assert_eq!(p.x, 1.235);
        assert!(p.y.is_sign_positive());
        assert_eq!(Point::new(f64::NAN, f64::INFINITY), Point::new(0.0, 0.0));
    }

    #[test]
    fn empty_fragment_must_be_final() {
        let mut ev = TranscriptEvent {
            session_id: "s".into(),
            seq: 1,
            speaker_id: "a".into(),
            text: "   ".into(),
            is_sentence_final: false,
            timestamp_ms: 0,
        };
        assert!(!ev.is_well_formed());
        ev.is_sentence_final = true;
        assert!(ev.is_well_formed());
    }

    #[test]
    fn config_rejects_zero_limits() {
        let mut cfg = SessionConfig::mock(Mode::AiMap, 1);
        assert!(cfg.validate().is_ok());
        cfg.checkpoint_words = 0;
        assert_eq!(cfg.validate(), Err(ConfigError::CheckpointWords));
        cfg.checkpoint_words = 50;
        cfg.summary_word_limit = 0;
        assert_eq!(cfg.validate(), Err(ConfigError::SummaryWordLimit));
    }
}
