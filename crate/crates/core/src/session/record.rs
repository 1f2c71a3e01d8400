//! The append-only session log: one header line, then one canonical JSON
//! record per line, numbered by a gap-free server seq starting at 1.

use crate::canonical::{from_canonical, to_canonical};
use crate::pipeline::{NodeDraft, PipelineError, Task, TopicOutcome};
use crate::types::{MapOp, SessionConfig, SessionId, TopicId, TranscriptEvent, TurnRef};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use thiserror::Error;

pub const LOG_FORMAT: &str = "dialogmap-log/1";

/// First line of every log. Replay starts from the empty state it implies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub session_id: SessionId,
    pub config: SessionConfig,
}

impl LogHeader {
    pub fn new(session_id: SessionId, config: SessionConfig) -> Self {
        LogHeader {
            format: LOG_FORMAT.to_string(),
            session_id,
            config,
        }
    }
}

/// What a provider result is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Subject {
    Turn { turn: TurnRef },
    Topic { topic_id: TopicId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ProviderResultBody {
    Topic { outcome: TopicOutcome },
    Nodes { drafts: Vec<NodeDraft> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RecordPayload {
    TranscriptEvent {
        event: TranscriptEvent,
    },
    /// The transcript ended; the segmenter flushes its pending turn.
    TranscriptClosed,
    AgendaSet {
        text: String,
    },
    AcceptedOp {
        op: MapOp,
    },
    ProviderResult {
        task: Task,
        subject: Subject,
        result: ProviderResultBody,
    },
    ProviderFault {
        task: Task,
        subject: Subject,
        error: PipelineError,
    },
}

impl RecordPayload {
    pub fn name(&self) -> &'static str {
        match self {
            RecordPayload::TranscriptEvent { .. } => "TranscriptEvent",
            RecordPayload::TranscriptClosed => "TranscriptClosed",
            RecordPayload::AgendaSet { .. } => "AgendaSet",
            RecordPayload::AcceptedOp { .. } => "AcceptedOp",
            RecordPayload::ProviderResult { .. } => "ProviderResult",
            RecordPayload::ProviderFault { .. } => "ProviderFault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogRecord {
    pub server_seq: u64,
    pub wall_ms: u64,
    pub payload: RecordPayload,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses a whole log. Blank lines are not allowed.
pub fn parse_log(text: &str) -> Result<(LogHeader, Vec<SessionLogRecord>), LogError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or(LogError::Empty)?;
    let header: LogHeader = from_canonical(first.as_bytes()).map_err(|e| LogError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != LOG_FORMAT {
        return Err(LogError::Malformed {
            line: 1,
            message: format!("unsupported log format {:?}", header.format),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let record = from_canonical(line.as_bytes()).map_err(|e| LogError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok((header, records))
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<SessionLogRecord>), LogError> {
    parse_log(&std::fs::read_to_string(path)?)
}

/// Where a session writes its log lines.
pub trait LogSink: Send {
    fn append(&mut self, line: &[u8]) -> io::Result<()>;
    /// Makes everything appended so far durable.
    fn sync(&mut self) -> io::Result<()>;
}

/// In-memory log whose lines stay readable through any clone.
#[derive(Debug, Clone, Default)]
pub struct MemoryLog {
    lines: Arc<Mutex<Vec<String>>>,
}

impl MemoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().expect("log lock").clone()
    }

    /// The log as file text, newline-terminated.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for line in self.lines.lock().expect("log lock").iter() {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

impl LogSink for MemoryLog {
    fn append(&mut self, line: &[u8]) -> io::Result<()> {
        let line = String::from_utf8(line.to_vec())
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        self.lines.lock().expect("log lock").push(line);
        Ok(())
    }

    fn sync(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Log file fsynced on every [`LogSink::sync`].
pub struct FileLog {
    writer: BufWriter<File>,
}

impl FileLog {
    /// Creates or truncates `path`.
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(FileLog {
            writer: BufWriter::new(File::create(path)?),
        })
    }
}

impl LogSink for FileLog {
    fn append(&mut self, line: &[u8]) -> io::Result<()> {
        self.writer.write_all(line)?;
        self.writer.write_all(b"\n")
    }

    fn sync(&mut self) -> io::Result<()> {
        self.writer.flush()?;
        self.writer.get_ref().sync_data()
    }
}

pub(crate) fn encode_line<T: Serialize>(value: &T) -> Vec<u8> {
    to_canonical(value).expect("log records always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Mode, SpeakerId};

    #[test]
    fn malformed_lines_are_numbered() {
        let header = LogHeader::new(SessionId::new("s"), SessionConfig::mock(Mode::AiMap, 1));
        let record = SessionLogRecord {
            server_seq: 1,
            wall_ms: 5,
            payload: RecordPayload::TranscriptEvent {
                event: TranscriptEvent {
                    session_id: SessionId::new("s"),
                    seq: 1,
                    speaker_id: SpeakerId::new("a"),
                    text: "Hello.".into(),
                    is_sentence_final: true,
                    timestamp_ms: 5,
                },
            },
        };
        let mut text = String::new();
        for line in [encode_line(&header), encode_line(&record)] {
            text.push_str(std::str::from_utf8(&line).unwrap());
            text.push('\n');
        }
        let (h, records) = parse_log(&text).unwrap();
        assert_eq!(h, header);
        assert_eq!(records, vec![record]);

        text.push_str("{\"server_seq\":2\n");
        match parse_log(&text) {
            Err(LogError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_log(""), Err(LogError::Empty)));
    }
}
