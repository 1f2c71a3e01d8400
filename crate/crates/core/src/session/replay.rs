//! Rebuilding and checking sessions from their logs. No provider is ever
//! called here; logged results are applied as recorded.

use super::core::{CoreError, SessionCore};
use super::record::{LogHeader, RecordPayload, SessionLogRecord, LOG_FORMAT};
use crate::engine::MapError;
use crate::types::{Mode, OpKind};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("corrupt log at record {server_seq}: {reason}")]
    CorruptLog { server_seq: u64, reason: String },
}

/// Replays a whole log into a fresh core.
pub fn replay(header: &LogHeader, records: &[SessionLogRecord]) -> Result<SessionCore, ReplayError> {
    if header.format != LOG_FORMAT {
        return Err(ReplayError::CorruptLog {
            server_seq: 0,
            reason: format!("unsupported log format {:?}", header.format),
        });
    }
    let mut core = SessionCore::new(header.session_id.clone(), header.config.clone());
    for record in records {
        core.apply(record).map_err(|e| ReplayError::CorruptLog {
            server_seq: record.server_seq,
            reason: e.to_string(),
        })?;
    }
    Ok(core)
}

/// The first invariant a log breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant `{name}` violated at record {server_seq}: {detail}")]
pub struct Violation {
    pub name: String,
    pub server_seq: u64,
    pub detail: String,
}

fn violation(name: &str, server_seq: u64, detail: impl Into<String>) -> Violation {
    Violation {
        name: name.to_string(),
        server_seq,
        detail: detail.into(),
    }
}

/// Replays the log, checking every map invariant after each record.
/// Returns the final core when everything holds.
pub fn validate_log(header: &LogHeader, records: &[SessionLogRecord]) -> Result<SessionCore, Violation> {
    if header.format != LOG_FORMAT {
        return Err(violation("log-format", 0, format!("unsupported format {:?}", header.format)));
    }
    header
        .config
        .validate()
        .map_err(|e| violation("session-config", 0, e.to_string()))?;
    let mut core = SessionCore::new(header.session_id.clone(), header.config.clone());
    for (i, record) in records.iter().enumerate() {
        let expected = i as u64 + 1;
        if record.server_seq != expected {
            return Err(violation(
                "seq-gap-free",
                record.server_seq,
                format!("expected seq {expected}"),
            ));
        }
        if header.config.mode == Mode::HumanMap {
            if let RecordPayload::AcceptedOp { op } = &record.payload {
                if matches!(op.kind, OpKind::MergeGeneratedMap { .. }) {
                    return Err(violation(
                        "mode-separation",
                        record.server_seq,
                        "generated map merged in a Human-Map session",
                    ));
                }
            }
        }
        if let Err(e) = core.apply(record) {
            let name = match &e {
                CoreError::Map(MapError::WrongMode(_)) => "mode-separation",
                CoreError::Map(MapError::SeqMismatch { .. }) => "seq-gap-free",
                _ => "record-applies",
            };
            return Err(violation(name, record.server_seq, e.to_string()));
        }
        core.state()
            .check_invariants()
            .map_err(|v| violation(v.name, record.server_seq, v.detail))?;
    }
    Ok(core)
}
