//! Splits the bundled transcript into turns and prints each one.
//!
//! ```text
//! cargo run --example segment_transcript
//! ```

use dialogmap::segmenter::Segmenter;
use dialogmap::transcript::{parse_transcript, BUNDLED_TRANSCRIPT};
use dialogmap::types::DEFAULT_CHECKPOINT_WORDS;

fn main() {
    let events = parse_transcript(BUNDLED_TRANSCRIPT).expect("bundled transcript parses");
    let mut seg = Segmenter::new(events[0].session_id.clone(), DEFAULT_CHECKPOINT_WORDS);
    let mut turns = Vec::new();
    for e in events {
        turns.extend(seg.ingest(e).expect("events are in order"));
    }
    turns.extend(seg.flush());

    for t in &turns {
        println!(
            "turn {:>2} {:<5} {:>3} words  {:?}",
            t.seq,
            t.speaker_id.as_str(),
            t.word_count,
            t.split_reason
        );
        println!("         {}", t.text);
    }
}
