//! Transcript files: one [`TranscriptEvent`] JSON object per line.

use crate::pipeline::Provider;
use crate::session::protocol::ServerMessage;
use crate::session::{Session, SessionError};
use crate::types::TranscriptEvent;
use thiserror::Error;

/// Scripted two-person discussion of the campus mental-health agenda.
pub const BUNDLED_TRANSCRIPT: &str = include_str!("../data/task1_mental_health.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TranscriptError {
    pub line: usize,
    pub message: String,
}

/// Parses a transcript. Blank lines are skipped. Events must be well
/// formed, share one session id and have strictly increasing seqs.
pub fn parse_transcript(text: &str) -> Result<Vec<TranscriptEvent>, TranscriptError> {
    let mut events: Vec<TranscriptEvent> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fail = |message: String| TranscriptError { line, message };
        let event: TranscriptEvent = serde_json::from_str(raw).map_err(|e| fail(e.to_string()))?;
        if !event.is_well_formed() {
            return Err(fail(format!("event {} is not well formed", event.seq)));
        }
        if let Some(prev) = events.last() {
            if event.session_id != prev.session_id {
                return Err(fail(format!(
                    "session {} differs from {}",
                    event.session_id, prev.session_id
                )));
            }
            if event.seq <= prev.seq {
                return Err(fail(format!("seq {} is not after {}", event.seq, prev.seq)));
            }
        }
        events.push(event);
    }
    Ok(events)
}

/// Feeds every event through `session`, running provider work to
/// completion after each one, then closes the transcript.
pub fn run_transcript(
    session: &mut Session,
    events: &[TranscriptEvent],
    provider: &dyn Provider,
) -> Result<Vec<ServerMessage>, SessionError> {
    let mut messages = Vec::new();
    for event in events {
        messages.extend(session.ingest(event.clone())?);
        messages.extend(session.run_pending(provider)?);
    }
    messages.extend(session.end_transcript()?);
    messages.extend(session.run_pending(provider)?);
    Ok(messages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_transcript_parses() {
        let events = parse_transcript(BUNDLED_TRANSCRIPT).unwrap();
        assert!(events.len() > 20);
        assert_eq!(events[0].seq, 1);
    }

    #[test]
    fn out_of_order_seq_names_the_line() {
        let mut lines: Vec<&str> = BUNDLED_TRANSCRIPT.lines().collect();
        lines.swap(3, 4);
        let err = parse_transcript(&lines.join("\n")).unwrap_err();
        assert_eq!(err.line, 5);
        assert!(err.message.contains("is not after"));
        assert_eq!(parse_transcript("{oops").unwrap_err().line, 1);
    }
}
