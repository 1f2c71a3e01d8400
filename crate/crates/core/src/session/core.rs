//! Applying log records to session state.
//!
//! [`SessionCore`] is the only place a record changes anything. The live
//! session, log replay and validation all go through [`SessionCore::apply`],
//! so a replayed log cannot drift from the session that wrote it.

use super::record::{ProviderResultBody, RecordPayload, SessionLogRecord, Subject};
use crate::engine::{MapError, MapState, TopicChange};
use crate::pipeline::Task;
use crate::segmenter::{SegmentError, Segmenter};
use crate::types::{MapOp, Node, SessionConfig, SessionId, Topic, Turn, TurnId, TurnRef};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error("inconsistent record: {0}")]
    Inconsistent(String),
}

impl CoreError {
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::Map(e) => e.code(),
            CoreError::Segment(_) => "BadTranscriptEvent",
            CoreError::Inconsistent(_) => "InconsistentRecord",
        }
    }
}

fn inconsistent(what: impl Into<String>) -> CoreError {
    CoreError::Inconsistent(what.into())
}

/// What applying one record changed.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    /// Turns the segmenter emitted for a transcript event or the close.
    Turns(Vec<Turn>),
    Agenda,
    Op(MapOp),
    /// `None` when a failed classification found no topic to extend.
    Topic(Option<TopicChange>),
    Nodes(Vec<Node>),
    Fault,
}

#[derive(Debug, Clone)]
pub struct SessionCore {
    session_id: SessionId,
    config: SessionConfig,
    state: MapState,
    segmenter: Segmenter,
    turns: BTreeMap<TurnId, Turn>,
    agenda: Option<String>,
    transcript_closed: bool,
    last_classified_turn: u64,
    annotated_turns: BTreeSet<u64>,
}

impl SessionCore {
    pub fn new(session_id: SessionId, config: SessionConfig) -> Self {
        SessionCore {
            segmenter: Segmenter::new(session_id.clone(), config.checkpoint_words),
            state: MapState::new(config.mode, config.summary_word_limit),
            session_id,
            config,
            turns: BTreeMap::new(),
            agenda: None,
            transcript_closed: false,
            last_classified_turn: 0,
            annotated_turns: BTreeSet::new(),
        }
    }

    pub fn session_id(&self) -> &SessionId {
        &self.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &MapState {
        &self.state
    }

    pub fn turns(&self) -> &BTreeMap<TurnId, Turn> {
        &self.turns
    }

    pub fn turn(&self, turn_id: TurnId) -> Option<&Turn> {
        self.turns.get(&turn_id)
    }

    /// Turn with ordinal `seq`. Turn ids and ordinals share one counter.
    pub fn turn_by_seq(&self, seq: u64) -> Option<&Turn> {
        self.turns.get(&TurnId(seq))
    }

    pub fn agenda(&self) -> Option<&str> {
        self.agenda.as_deref()
    }

    pub fn transcript_closed(&self) -> bool {
        self.transcript_closed
    }

    pub fn last_classified_turn(&self) -> u64 {
        self.last_classified_turn
    }

    pub fn is_annotated(&self, turn_seq: u64) -> bool {
        self.annotated_turns.contains(&turn_seq)
    }

    fn known_turn(&self, turn: &TurnRef) -> Result<(), CoreError> {
        match self.turns.get(&turn.turn_id) {
            Some(t) if t.reference() == *turn => Ok(()),
            Some(_) => Err(inconsistent(format!("{} does not match the transcript", turn.turn_id))),
            None => Err(inconsistent(format!("{} has not been segmented", turn.turn_id))),
        }
    }

    /// Applies one record. On error nothing changes.
    pub fn apply(&mut self, record: &SessionLogRecord) -> Result<Applied, CoreError> {
        self.state.expect_seq(record.server_seq)?;
        let seq = record.server_seq;
        match &record.payload {
            RecordPayload::TranscriptEvent { event } => {
                if self.transcript_closed {
                    return Err(inconsistent("transcript event after close"));
                }
                let turns = self.segmenter.ingest(event.clone())?;
                self.state.advance_seq(seq)?;
                Ok(self.keep_turns(turns))
            }
            RecordPayload::TranscriptClosed => {
                if self.transcript_closed {
                    return Err(inconsistent("transcript closed twice"));
                }
                self.state.advance_seq(seq)?;
                self.transcript_closed = true;
                let turns = self.segmenter.flush().into_iter().collect();
                Ok(self.keep_turns(turns))
            }
            RecordPayload::AgendaSet { text } => {
                self.state.advance_seq(seq)?;
                self.agenda = Some(text.clone());
                Ok(Applied::Agenda)
            }
            RecordPayload::AcceptedOp { op } => {
                if op.server_seq != Some(seq) {
                    return Err(inconsistent("op seq differs from record seq"));
                }
                Ok(Applied::Op(self.state.apply_op(op.clone())?))
            }
            RecordPayload::ProviderResult {
                task,
                subject,
                result,
            } => match (task, subject, result) {
                (Task::TopicSegment, Subject::Turn { turn }, ProviderResultBody::Topic { outcome }) => {
                    self.check_classify_order(turn)?;
                    let change =
                        self.state
                            .apply_topic_decision(turn, &outcome.decision, outcome.degraded)?;
                    self.state.advance_seq(seq)?;
                    self.last_classified_turn = turn.turn_seq;
                    Ok(Applied::Topic(Some(change)))
                }
                (Task::AnnotateTurn, Subject::Turn { turn }, ProviderResultBody::Nodes { drafts }) => {
                    self.check_annotate_order(turn)?;
                    let nodes = self.state.add_ai_nodes(turn, drafts)?;
                    self.state.advance_seq(seq)?;
                    self.annotated_turns.insert(turn.turn_seq);
                    Ok(Applied::Nodes(nodes))
                }
                _ => Err(inconsistent(format!("unexpected {} result", task.as_str()))),
            },
            RecordPayload::ProviderFault {
                task,
                subject,
                error: _,
            } => match (task, subject) {
                (Task::TopicSegment, Subject::Turn { turn }) => {
                    self.check_classify_order(turn)?;
                    let extended = self.state.apply_topic_fault(turn)?;
                    self.state.advance_seq(seq)?;
                    self.last_classified_turn = turn.turn_seq;
                    Ok(Applied::Topic(extended.map(|topic: Topic| TopicChange {
                        topic,
                        closed: None,
                    })))
                }
                (Task::AnnotateTurn, Subject::Turn { turn }) => {
                    self.check_annotate_order(turn)?;
                    self.state.advance_seq(seq)?;
                    self.state.mark_unannotated(turn.turn_id);
                    self.annotated_turns.insert(turn.turn_seq);
                    Ok(Applied::Fault)
                }
                (Task::IdentifyLinks, Subject::Topic { topic_id }) => {
                    if self.state.topic(*topic_id).is_none() {
                        return Err(MapError::UnknownEntity(topic_id.to_string()).into());
                    }
                    self.state.advance_seq(seq)?;
                    Ok(Applied::Fault)
                }
                _ => Err(inconsistent(format!("unexpected {} fault", task.as_str()))),
            },
        }
    }

    fn check_classify_order(&self, turn: &TurnRef) -> Result<(), CoreError> {
        self.known_turn(turn)?;
        if turn.turn_seq != self.last_classified_turn + 1 {
            return Err(inconsistent(format!(
                "topic for turn {} arrives after turn {}",
                turn.turn_seq, self.last_classified_turn
            )));
        }
        if self.last_classified_turn > 0 && !self.annotated_turns.contains(&self.last_classified_turn) {
            return Err(inconsistent(format!(
                "turn {} was classified before turn {} was annotated",
                turn.turn_seq, self.last_classified_turn
            )));
        }
        Ok(())
    }

    fn check_annotate_order(&self, turn: &TurnRef) -> Result<(), CoreError> {
        self.known_turn(turn)?;
        if turn.turn_seq != self.last_classified_turn || self.annotated_turns.contains(&turn.turn_seq) {
            return Err(inconsistent(format!(
                "annotation for turn {} is out of order",
                turn.turn_seq
            )));
        }
        Ok(())
    }

    fn keep_turns(&mut self, turns: Vec<Turn>) -> Applied {
        for t in &turns {
            self.turns.insert(t.turn_id, t.clone());
        }
        Applied::Turns(turns)
    }
}
