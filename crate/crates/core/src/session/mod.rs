//! Live sessions: ordering provider work, logging, and producing the
//! messages clients see.
//!
//! [`Session`] does no I/O of its own apart from its log sink. Provider
//! calls are handed out as [`Job`]s; whoever runs them (a thread pool in the
//! server, a plain loop in the replay command) reports back through
//! [`Session::complete_job`]. Results are applied strictly in turn order, so
//! the log, and therefore the map, does not depend on completion order.

pub mod core;
pub mod mirror;
pub mod protocol;
pub mod record;
pub mod replay;

use self::core::{Applied, CoreError, SessionCore};
use crate::engine::{MapError, MapState};
use crate::pipeline::{
    run, AnnotateAnalysis, LinkAnalysis, LinkDraft, LinkInput, NodeDraft, PipelineError,
    Provider, RetryPolicy, Task, TopicAnalysis, TopicOutcome,
};
use crate::types::{
    Actor, MapOp, Mode, NodeId, OpId, OpKind, SessionConfig, SessionId, TopicId, TranscriptEvent,
    Turn, TurnId, TurnRef, UserId,
};
use protocol::{Participant, ServerMessage, PROTOCOL_VERSION};
use record::{
    encode_line, LogHeader, LogSink, ProviderResultBody, RecordPayload, SessionLogRecord, Subject,
};
use std::collections::{BTreeMap, VecDeque};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub use mirror::Mirror;
pub use replay::{replay, validate_log, ReplayError, Violation};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("session is full ({0} participants)")]
    SessionFull(usize),
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown job {0}")]
    UnknownJob(u64),
    #[error("log write failed: {0}")]
    Log(#[from] std::io::Error),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::Core(e) => e.code(),
            SessionError::SessionFull(_) => "SessionFull",
            SessionError::BadRequest(_) => "InvalidPayload",
            SessionError::UnknownJob(_) => "UnknownJob",
            SessionError::Log(_) => "LogFailure",
        }
    }
}

impl From<MapError> for SessionError {
    fn from(e: MapError) -> Self {
        SessionError::Core(CoreError::Map(e))
    }
}

/// Source of `wall_ms` for log records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clock {
    System,
    /// Timestamp of the latest transcript event; keeps logs reproducible.
    Transcript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOptions {
    pub max_in_flight: usize,
    pub max_participants: usize,
    pub clock: Clock,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            max_in_flight: 8,
            max_participants: 16,
            clock: Clock::System,
        }
    }
}

#[derive(Debug, Clone)]
pub enum JobWork {
    Classify { turn: TurnRef, analysis: TopicAnalysis },
    Annotate { turn: TurnRef, analysis: AnnotateAnalysis },
    Links { topic_id: TopicId, keyed: Vec<(u64, NodeId)>, analysis: LinkAnalysis },
}

/// One provider-backed analysis waiting to run.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: u64,
    pub policy: RetryPolicy,
    pub work: JobWork,
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobOutcome {
    Topic(Result<TopicOutcome, PipelineError>),
    Nodes(Result<Vec<NodeDraft>, PipelineError>),
    Links(Result<Vec<LinkDraft>, PipelineError>),
}

impl Job {
    pub fn task(&self) -> Task {
        match self.work {
            JobWork::Classify { .. } => Task::TopicSegment,
            JobWork::Annotate { .. } => Task::AnnotateTurn,
            JobWork::Links { .. } => Task::IdentifyLinks,
        }
    }

    /// Runs the analysis, retries included. Safe to call from any thread.
    pub fn run(&self, provider: &dyn Provider) -> JobOutcome {
        match &self.work {
            JobWork::Classify { analysis, .. } => JobOutcome::Topic(run(analysis, provider, &self.policy)),
            JobWork::Annotate { analysis, .. } => JobOutcome::Nodes(run(analysis, provider, &self.policy)),
            JobWork::Links { analysis, .. } => JobOutcome::Links(run(analysis, provider, &self.policy)),
        }
    }
}

#[derive(Debug)]
struct PendingTurn {
    turn: Turn,
    classify_issued: bool,
    topic: Option<Result<TopicOutcome, PipelineError>>,
    nodes: Option<Result<Vec<NodeDraft>, PipelineError>>,
}

pub struct Session {
    core: SessionCore,
    sink: Box<dyn LogSink>,
    options: SessionOptions,
    policy: RetryPolicy,
    wall_ms: u64,
    next_job_id: u64,
    queued: VecDeque<Job>,
    in_flight: BTreeMap<u64, Job>,
    pending: BTreeMap<u64, PendingTurn>,
    next_turn: u64,
    participants: BTreeMap<UserId, Participant>,
    outbox: Vec<ServerMessage>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", self.core.session_id())
            .field("last_seq", &self.core.state().last_seq())
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Starts a session and writes the log header.
    pub fn new(
        session_id: SessionId,
        config: SessionConfig,
        mut sink: Box<dyn LogSink>,
        options: SessionOptions,
    ) -> Result<Self, SessionError> {
        config
            .validate()
            .map_err(|e| SessionError::BadRequest(e.to_string()))?;
        sink.append(&encode_line(&LogHeader::new(session_id.clone(), config.clone())))?;
        sink.sync()?;
        let policy = RetryPolicy {
            max_retries: config.provider.max_retries(),
            timeout_ms: config.provider.timeout_ms(),
        };
        Ok(Session {
            core: SessionCore::new(session_id, config),
            sink,
            options,
            policy,
            wall_ms: 0,
            next_job_id: 1,
            queued: VecDeque::new(),
            in_flight: BTreeMap::new(),
            pending: BTreeMap::new(),
            next_turn: 1,
            participants: BTreeMap::new(),
            outbox: Vec::new(),
        })
    }

    pub fn core(&self) -> &SessionCore {
        &self.core
    }

    pub fn state(&self) -> &MapState {
        self.core.state()
    }

    pub fn session_id(&self) -> &SessionId {
        self.core.session_id()
    }

    pub fn participants(&self) -> Vec<Participant> {
        self.participants.values().cloned().collect()
    }

    /// No queued or running jobs and no turn waiting for results.
    pub fn is_idle(&self) -> bool {
        self.queued.is_empty() && self.in_flight.is_empty() && self.pending.is_empty()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn snapshot_message(&self) -> ServerMessage {
        ServerMessage::Snapshot {
            protocol_version: PROTOCOL_VERSION,
            server_seq: self.state().last_seq(),
            state: self.state().clone(),
            agenda: self.core.agenda().map(str::to_string),
            participants: self.participants(),
        }
    }

    /// Admits a participant and returns the snapshot they start from.
    /// Joining again under the same id updates the display name.
    pub fn join(&mut self, user_id: UserId, display_name: &str) -> Result<ServerMessage, SessionError> {
        if !self.participants.contains_key(&user_id)
            && self.participants.len() >= self.options.max_participants
        {
            return Err(SessionError::SessionFull(self.options.max_participants));
        }
        self.participants.insert(
            user_id.clone(),
            Participant {
                user_id,
                display_name: display_name.to_string(),
            },
        );
        Ok(self.snapshot_message())
    }

    pub fn leave(&mut self, user_id: &UserId) {
        self.participants.remove(user_id);
    }

    pub fn ingest(&mut self, event: TranscriptEvent) -> Result<Vec<ServerMessage>, SessionError> {
        if self.options.clock == Clock::Transcript {
            self.wall_ms = self.wall_ms.max(event.timestamp_ms);
        }
        let turns = match self.commit(RecordPayload::TranscriptEvent { event })? {
            Applied::Turns(turns) => turns,
            _ => unreachable!("transcript records yield turns"),
        };
        self.accept_turns(turns);
        self.finish()
    }

    /// Flushes the segmenter. Later transcript events are rejected.
    pub fn end_transcript(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        let turns = match self.commit(RecordPayload::TranscriptClosed)? {
            Applied::Turns(turns) => turns,
            _ => unreachable!("transcript records yield turns"),
        };
        self.accept_turns(turns);
        self.finish()
    }

    pub fn set_agenda(&mut self, text: &str) -> Result<Vec<ServerMessage>, SessionError> {
        self.commit(RecordPayload::AgendaSet {
            text: text.to_string(),
        })?;
        self.finish()
    }

    /// Validates and applies a user op. A rejected op changes nothing and
    /// is not logged.
    pub fn submit_op(&mut self, mut op: MapOp) -> Result<Vec<ServerMessage>, SessionError> {
        if op.actor == Actor::Ai {
            return Err(MapError::InvalidPayload("user operations must carry a user actor".into()).into());
        }
        if op.server_seq.is_some() {
            return Err(MapError::InvalidPayload("server_seq is assigned by the server".into()).into());
        }
        op.server_seq = Some(self.state().next_server_seq());
        self.commit(RecordPayload::AcceptedOp { op })?;
        self.finish()
    }

    pub fn turn_transcript(&self, turn_id: TurnId) -> Result<ServerMessage, SessionError> {
        let turn = self
            .core
            .turn(turn_id)
            .ok_or_else(|| MapError::UnknownEntity(turn_id.to_string()))?;
        Ok(ServerMessage::TurnTranscript {
            turn_id,
            speaker_id: turn.speaker_id.clone(),
            text: turn.text.clone(),
        })
    }

    /// Hands out queued jobs, keeping at most `max_in_flight` running.
    pub fn take_jobs(&mut self) -> Vec<Job> {
        let mut out = Vec::new();
        while self.in_flight.len() < self.options.max_in_flight.max(1) {
            let Some(job) = self.queued.pop_front() else {
                break;
            };
            self.in_flight.insert(job.id, job.clone());
            out.push(job);
        }
        out
    }

    pub fn complete_job(&mut self, job_id: u64, outcome: JobOutcome) -> Result<Vec<ServerMessage>, SessionError> {
        let job = self
            .in_flight
            .remove(&job_id)
            .ok_or(SessionError::UnknownJob(job_id))?;
        match (job.work, outcome) {
            (JobWork::Classify { turn, .. }, JobOutcome::Topic(result)) => {
                if let Some(p) = self.pending.get_mut(&turn.turn_seq) {
                    p.topic = Some(result);
                }
                self.drive()?;
            }
            (JobWork::Annotate { turn, .. }, JobOutcome::Nodes(result)) => {
                if let Some(p) = self.pending.get_mut(&turn.turn_seq) {
                    p.nodes = Some(result);
                }
                self.drive()?;
            }
            (JobWork::Links { topic_id, keyed, .. }, JobOutcome::Links(result)) => {
                self.merge(topic_id, &keyed, result)?;
            }
            (work, _) => {
                let restored = Job { id: job_id, policy: job.policy, work };
                self.in_flight.insert(job_id, restored);
                return Err(SessionError::BadRequest(format!("job {job_id} got the wrong kind of outcome")));
            }
        }
        self.finish()
    }

    /// Runs every job to completion on the calling thread.
    pub fn run_pending(&mut self, provider: &dyn Provider) -> Result<Vec<ServerMessage>, SessionError> {
        let mut messages = Vec::new();
        loop {
            let jobs = self.take_jobs();
            if jobs.is_empty() {
                return Ok(messages);
            }
            for job in jobs {
                let outcome = job.run(provider);
                messages.extend(self.complete_job(job.id, outcome)?);
            }
        }
    }

    fn finish(&mut self) -> Result<Vec<ServerMessage>, SessionError> {
        // Nothing leaves before the records behind it are durable.
        self.sink.sync()?;
        Ok(std::mem::take(&mut self.outbox))
    }

    fn now(&self) -> u64 {
        match self.options.clock {
            Clock::Transcript => self.wall_ms,
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }

    fn commit(&mut self, payload: RecordPayload) -> Result<Applied, SessionError> {
        let mut record = SessionLogRecord {
            server_seq: self.state().next_server_seq(),
            wall_ms: self.now(),
            payload,
        };
        let applied = self.core.apply(&record)?;
        if let Applied::Op(op) = &applied {
            // Log the op with the ids the engine assigned.
            record.payload = RecordPayload::AcceptedOp { op: op.clone() };
        }
        self.sink.append(&encode_line(&record))?;
        self.outbox.push(message_for(&record, &applied));
        Ok(applied)
    }

    fn queue(&mut self, work: JobWork) {
        let id = self.next_job_id;
        self.next_job_id += 1;
        self.queued.push_back(Job {
            id,
            policy: self.policy,
            work,
        });
    }

    fn accept_turns(&mut self, turns: Vec<Turn>) {
        for turn in turns {
            self.queue(JobWork::Annotate {
                turn: turn.reference(),
                analysis: AnnotateAnalysis {
                    turn: turn.clone(),
                    summary_word_limit: self.core.config().summary_word_limit,
                },
            });
            self.pending.insert(
                turn.seq,
                PendingTurn {
                    turn,
                    classify_issued: false,
                    topic: None,
                    nodes: None,
                },
            );
        }
        self.issue_classify();
    }

    /// Classification of a turn waits until the previous turn is applied,
    /// because it needs the topic list that turn produced.
    fn issue_classify(&mut self) {
        let k = self.next_turn;
        let Some(p) = self.pending.get_mut(&k) else {
            return;
        };
        if p.classify_issued {
            return;
        }
        p.classify_issued = true;
        let new_turn = p.turn.clone();
        let analysis = TopicAnalysis {
            previous_turn: self.core.turn_by_seq(k - 1).cloned(),
            new_turn: new_turn.clone(),
            topics: self.state().topics().to_vec(),
        };
        self.queue(JobWork::Classify {
            turn: new_turn.reference(),
            analysis,
        });
    }

    /// Applies finished turns in order.
    fn drive(&mut self) -> Result<(), SessionError> {
        loop {
            let k = self.next_turn;
            let ready = self
                .pending
                .get(&k)
                .is_some_and(|p| p.topic.is_some() && p.nodes.is_some());
            if !ready {
                return Ok(());
            }
            let p = self.pending.remove(&k).expect("checked");
            let turn = p.turn.reference();
            let subject = Subject::Turn { turn: turn.clone() };

            let topic_payload = match p.topic.expect("checked") {
                Ok(outcome) => RecordPayload::ProviderResult {
                    task: Task::TopicSegment,
                    subject: subject.clone(),
                    result: ProviderResultBody::Topic { outcome },
                },
                Err(error) => RecordPayload::ProviderFault {
                    task: Task::TopicSegment,
                    subject: subject.clone(),
                    error,
                },
            };
            let closed = match self.commit(topic_payload)? {
                Applied::Topic(Some(change)) => change.closed,
                _ => None,
            };

            let nodes_payload = match p.nodes.expect("checked") {
                Ok(drafts) => RecordPayload::ProviderResult {
                    task: Task::AnnotateTurn,
                    subject,
                    result: ProviderResultBody::Nodes { drafts },
                },
                Err(error) => RecordPayload::ProviderFault {
                    task: Task::AnnotateTurn,
                    subject,
                    error,
                },
            };
            self.commit(nodes_payload)?;

            if let (Some(closed), Mode::AiMap) = (closed, self.state().mode()) {
                self.schedule_links(closed.topic_id)?;
            }
            self.next_turn += 1;
            self.issue_classify();
        }
    }

    fn schedule_links(&mut self, topic_id: TopicId) -> Result<(), SessionError> {
        let nodes: Vec<LinkInput> = self
            .state()
            .palette_nodes_of(topic_id)
            .iter()
            .enumerate()
            .map(|(i, n)| LinkInput {
                key: i as u64 + 1,
                tag: n.tag,
                summary: n.summary.clone(),
            })
            .collect();
        let keyed: Vec<(u64, NodeId)> = self
            .state()
            .palette_nodes_of(topic_id)
            .iter()
            .enumerate()
            .map(|(i, n)| (i as u64 + 1, n.node_id))
            .collect();
        if nodes.len() < 2 {
            // Nothing to link; the nodes move without a provider call.
            return self.merge(topic_id, &keyed, Ok(Vec::new()));
        }
        self.queue(JobWork::Links {
            topic_id,
            keyed,
            analysis: LinkAnalysis { nodes },
        });
        Ok(())
    }

    fn merge(
        &mut self,
        topic_id: TopicId,
        keyed: &[(u64, NodeId)],
        result: Result<Vec<LinkDraft>, PipelineError>,
    ) -> Result<(), SessionError> {
        if let Err(error) = &result {
            self.commit(RecordPayload::ProviderFault {
                task: Task::IdentifyLinks,
                subject: Subject::Topic { topic_id },
                error: error.clone(),
            })?;
        }
        let op_id = OpId(format!("merge-{topic_id}"));
        let (mut op, _) = self.state().plan_merge(topic_id, keyed, result, op_id)?;
        op.server_seq = Some(self.state().next_server_seq());
        self.commit(RecordPayload::AcceptedOp { op })?;
        Ok(())
    }
}

/// The broadcast for one applied record.
pub fn message_for(record: &SessionLogRecord, applied: &Applied) -> ServerMessage {
    let server_seq = record.server_seq;
    match (&record.payload, applied) {
        (RecordPayload::TranscriptEvent { event }, _) => ServerMessage::TranscriptAppended {
            server_seq,
            event: event.clone(),
        },
        (RecordPayload::TranscriptClosed, _) => ServerMessage::TranscriptClosed { server_seq },
        (RecordPayload::AgendaSet { text }, _) => ServerMessage::AgendaSet {
            server_seq,
            text: text.clone(),
        },
        (_, Applied::Op(op)) => match &op.kind {
            OpKind::MergeGeneratedMap {
                topic_id,
                placements,
                links,
                flagged,
            } => ServerMessage::MapGenerated {
                server_seq,
                op_id: op.op_id.clone(),
                topic_id: *topic_id,
                placements: placements.clone(),
                links: links.clone(),
                flagged: *flagged,
            },
            _ => ServerMessage::OpApplied {
                server_seq,
                op: op.clone(),
            },
        },
        (RecordPayload::ProviderResult { subject: Subject::Turn { turn }, .. }, Applied::Topic(Some(change))) => {
            ServerMessage::TopicUpdated {
                server_seq,
                turn: turn.clone(),
                topic: change.topic.clone(),
                closed: change.closed.clone(),
            }
        }
        (RecordPayload::ProviderResult { subject: Subject::Turn { turn }, .. }, Applied::Nodes(nodes)) => {
            ServerMessage::NodesGenerated {
                server_seq,
                turn: turn.clone(),
                nodes: nodes.clone(),
            }
        }
        (RecordPayload::ProviderFault { task, subject, error }, _) => ServerMessage::Error {
            code: error.code().to_string(),
            detail: error.to_string(),
            server_seq: Some(server_seq),
            op_id: None,
            task: Some(*task),
            subject: Some(subject.clone()),
        },
        (payload, _) => unreachable!("{} record produced no message", payload.name()),
    }
}
