//! A client-side copy of the map, kept in step from server messages.
//!
//! Messages may arrive in any order; the mirror holds early ones back and
//! applies each exactly when its `server_seq` is next. Applying uses the
//! same engine calls as the server, so once the mirror has seen every
//! message up to seq S its state equals the server's at S.

use super::protocol::ServerMessage;
use super::record::Subject;
use crate::engine::{MapError, MapState};
use crate::pipeline::{Task, TopicDecision};
use crate::types::{Actor, MapOp, OpKind};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MirrorError {
    #[error("no snapshot received yet")]
    NoSnapshot,
    #[error("message {seq} diverges from the server: {reason}")]
    Diverged { seq: u64, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct Mirror {
    state: Option<MapState>,
    agenda: Option<String>,
    held: BTreeMap<u64, ServerMessage>,
}

impl Mirror {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> Option<&MapState> {
        self.state.as_ref()
    }

    pub fn agenda(&self) -> Option<&str> {
        self.agenda.as_deref()
    }

    /// Seq of the last applied message; `None` before the snapshot.
    pub fn applied_seq(&self) -> Option<u64> {
        self.state.as_ref().map(MapState::last_seq)
    }

    /// Messages received ahead of a gap.
    pub fn held_back(&self) -> usize {
        self.held.len()
    }

    /// Takes one message. Non-state messages such as replies are ignored.
    pub fn receive(&mut self, message: ServerMessage) -> Result<(), MirrorError> {
        if let ServerMessage::Snapshot {
            server_seq,
            state,
            agenda,
            ..
        } = message
        {
            if state.last_seq() != server_seq {
                return Err(MirrorError::Diverged {
                    seq: server_seq,
                    reason: "snapshot seq does not match its state".into(),
                });
            }
            self.state = Some(state);
            self.agenda = agenda;
            self.held = self.held.split_off(&(server_seq + 1));
            return self.drain();
        }
        let Some(seq) = message.server_seq() else {
            return Ok(());
        };
        if self.applied_seq().is_some_and(|applied| seq <= applied) {
            return Ok(());
        }
        self.held.insert(seq, message);
        if self.state.is_some() {
            self.drain()
        } else {
            Ok(())
        }
    }

    fn drain(&mut self) -> Result<(), MirrorError> {
        loop {
            let next = self.state.as_ref().ok_or(MirrorError::NoSnapshot)?.next_server_seq();
            let Some(message) = self.held.remove(&next) else {
                return Ok(());
            };
            self.apply(next, message).map_err(|reason| MirrorError::Diverged { seq: next, reason })?;
        }
    }

    fn apply(&mut self, seq: u64, message: ServerMessage) -> Result<(), String> {
        let state = self.state.as_mut().expect("drain checks for a snapshot");
        let map = |e: MapError| e.to_string();
        match message {
            ServerMessage::OpApplied { op, .. } => {
                state.apply_op(op).map_err(map)?;
            }
            ServerMessage::MapGenerated {
                op_id,
                topic_id,
                placements,
                links,
                flagged,
                ..
            } => {
                let op = MapOp {
                    op_id,
                    actor: Actor::Ai,
                    kind: OpKind::MergeGeneratedMap {
                        topic_id,
                        placements,
                        links,
                        flagged,
                    },
                    server_seq: Some(seq),
                };
                state.apply_op(op).map_err(map)?;
            }
            ServerMessage::NodesGenerated { nodes, .. } => {
                state.insert_generated_nodes(&nodes).map_err(map)?;
                state.advance_seq(seq).map_err(map)?;
            }
            ServerMessage::TopicUpdated { turn, topic, .. } => {
                let continues = state.open_topic().is_some_and(|t| t.topic_id == topic.topic_id);
                let decision = if continues {
                    TopicDecision::Continuation {
                        revised_label: topic.label.clone(),
                    }
                } else {
                    TopicDecision::NewTopic {
                        label: topic.label.clone(),
                    }
                };
                let change = state
                    .apply_topic_decision(&turn, &decision, topic.degraded)
                    .map_err(map)?;
                if change.topic != topic {
                    return Err(format!("topic {} differs after applying", topic.topic_id));
                }
                state.advance_seq(seq).map_err(map)?;
            }
            ServerMessage::Error {
                task: Some(task),
                subject: Some(subject),
                ..
            } => {
                match (task, subject) {
                    (Task::TopicSegment, Subject::Turn { turn }) => {
                        state.apply_topic_fault(&turn).map_err(map)?;
                    }
                    (Task::AnnotateTurn, Subject::Turn { turn }) => state.mark_unannotated(turn.turn_id),
                    _ => {}
                }
                state.advance_seq(seq).map_err(map)?;
            }
            ServerMessage::AgendaSet { text, .. } => {
                self.agenda = Some(text);
                state.advance_seq(seq).map_err(map)?;
            }
            ServerMessage::TranscriptAppended { .. }
            | ServerMessage::TranscriptClosed { .. }
            | ServerMessage::Error { .. } => {
                state.advance_seq(seq).map_err(map)?;
            }
            ServerMessage::Snapshot { .. } | ServerMessage::TurnTranscript { .. } => {}
        }
        Ok(())
    }
}
