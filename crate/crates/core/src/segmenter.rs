//! Turn segmentation over the ordered transcript event stream.
//!
//! A turn ends when another speaker starts talking, or when a sentence
//! closes after the pending speech has reached the checkpoint word count.
//! There is no minimum turn length and no silence timeout: splits depend
//! only on the event sequence, so replaying the same events always yields
//! the same turns.

use crate::types::{
    word_count, SessionId, SpeakerId, SplitReason, TranscriptEvent, Turn, TurnId,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("event seq {got} does not follow previous seq {previous}")]
    OutOfOrderEvent { previous: u64, got: u64 },
    #[error("event for session {got} fed to segmenter of session {expected}")]
    SessionMismatch { expected: SessionId, got: SessionId },
    #[error("event seq {0} has empty text but is not sentence-final")]
    EmptyFragment(u64),
}

/// Per-session segmentation state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmenter {
    session_id: SessionId,
    checkpoint_words: usize,
    last_seq: Option<u64>,
    pending: Vec<TranscriptEvent>,
    pending_words: usize,
    next_turn: u64,
}

impl Segmenter {
    pub fn new(session_id: SessionId, checkpoint_words: usize) -> Self {
        Segmenter {
            session_id,
            checkpoint_words: checkpoint_words.max(1),
            last_seq: None,
            pending: Vec::new(),
            pending_words: 0,
            next_turn: 1,
        }
    }

    pub fn checkpoint_words(&self) -> usize {
        self.checkpoint_words
    }

    pub fn pending_speaker(&self) -> Option<&SpeakerId> {
        self.pending.first().map(|ev| &ev.speaker_id)
    }

    pub fn pending_fragments(&self) -> &[TranscriptEvent] {
        &self.pending
    }

    pub fn pending_word_count(&self) -> usize {
        self.pending_words
    }

    pub fn pending_start_ms(&self) -> Option<u64> {
        self.pending.first().map(|ev| ev.timestamp_ms)
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    /// Checks `ev` without changing any state.
    pub fn check(&self, ev: &TranscriptEvent) -> Result<(), SegmentError> {
        if ev.session_id != self.session_id {
            return Err(SegmentError::SessionMismatch {
                expected: self.session_id.clone(),
                got: ev.session_id.clone(),
            });
        }
        if let Some(previous) = self.last_seq {
            if ev.seq <= previous {
                return Err(SegmentError::OutOfOrderEvent {
                    previous,
                    got: ev.seq,
                });
            }
        }
        if !ev.is_well_formed() {
            return Err(SegmentError::EmptyFragment(ev.seq));
        }
        Ok(())
    }

    /// Feeds one event and returns the turns it finalizes (zero, one, or two
    /// when a speaker change coincides with a checkpoint-qualifying event).
    pub fn ingest(&mut self, ev: TranscriptEvent) -> Result<Vec<Turn>, SegmentError> {
        self.check(&ev)?;
        self.last_seq = Some(ev.seq);

        let words = word_count(&ev.text);
        let same_speaker = self.pending_speaker() == Some(&ev.speaker_id);
        let mut turns = Vec::new();

        if words == 0 {
            // Punctuation-only events only close the pending sentence of the
            // same speaker; anything else has nothing to attach to.
            if !same_speaker {
                return Ok(turns);
            }
        } else if !self.pending.is_empty() && !same_speaker {
            turns.extend(self.emit(SplitReason::SpeakerChange));
        }

        let is_final = ev.is_sentence_final;
        self.pending.push(ev);
        self.pending_words += words;
        if is_final && self.pending_words >= self.checkpoint_words {
            turns.extend(self.emit(SplitReason::LengthCheckpoint));
        }
        Ok(turns)
    }

    /// Emits whatever is pending as a [`SplitReason::StreamEnd`] turn.
    pub fn flush(&mut self) -> Option<Turn> {
        self.emit(SplitReason::StreamEnd)
    }

    fn emit(&mut self, split_reason: SplitReason) -> Option<Turn> {
        let fragments = std::mem::take(&mut self.pending);
        self.pending_words = 0;
        let first = fragments.first()?;
        let last = fragments.last()?;
        let text = fragments
            .iter()
            .map(|ev| ev.text.trim())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        let seq = self.next_turn;
        self.next_turn += 1;
        Some(Turn {
            turn_id: TurnId(seq),
            seq,
            speaker_id: first.speaker_id.clone(),
            word_count: word_count(&text),
            text,
            start_ms: first.timestamp_ms,
            end_ms: last.timestamp_ms,
            split_reason,
        })
    }
}
