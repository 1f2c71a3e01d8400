//! Deterministic stand-in for a hosted model.
//!
//! The mock applies fixed rule tables to the request payload and answers in
//! the same output formats a real provider must use, so everything
//! downstream of the provider runs unchanged. Output is a pure function of
//! `(seed, task, payload, attempt)`.
//!
//! Seeds at or above [`CORRUPTION_SEED_BASE`] also corrupt a share of their
//! answers: seed `CORRUPTION_SEED_BASE + p * 1000 + salt` corrupts roughly
//! `p` percent of calls, with `salt` varying which ones.

use super::{Provider, ProviderError, ProviderRequest, Task};
use crate::canonical::to_canonical;
use crate::types::{first_words, IbisTag};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;

pub const CORRUPTION_SEED_BASE: u64 = 1_000_000;

/// Whole-turn replies that never produce a node (compared case-folded,
/// punctuation stripped).
pub const BACKCHANNEL: [&str; 4] = ["yeah", "agreed", "ok", "mm-hmm"];
pub const IDEA_PHRASES: [&str; 4] = ["we could", "i think", "how about", "propose"];
pub const PRO_KEYWORDS: [&str; 5] = ["benefit", "advantage", "helps", "cheap", "accurate"];
pub const CON_KEYWORDS: [&str; 4] = ["problem", "concern", "expensive", "risk"];

/// Tokens ignored when comparing two turns for shared content.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "again", "agreed", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "being", "but", "by", "can", "could", "did", "do", "does", "don't",
    "for", "from", "get", "good", "had", "has", "have", "he", "her", "here", "him", "his", "how",
    "i", "i'm", "if", "in", "into", "is", "it", "it's", "its", "just", "let", "let's", "like",
    "make", "many", "may", "me", "might", "mm-hmm", "more", "most", "moving", "much", "must",
    "my", "no", "not", "now", "of", "ok", "okay", "on", "one", "only", "or", "our", "out", "over",
    "really", "right", "she", "should", "so", "some", "sure", "than", "that", "that's", "the",
    "their", "them", "then", "there", "these", "they", "think", "this", "those", "to", "too",
    "uh", "um", "up", "us", "very", "was", "we", "we're", "well", "were", "what", "what's",
    "when", "where", "which", "who", "why", "will", "with", "would", "yeah", "yes", "you",
    "your",
];

const FALLBACK_LABEL: &str = "General discussion";
const LABEL_WORDS: usize = 6;

/// Percentage of calls a seed corrupts.
pub fn corruption_percent(seed: u64) -> u64 {
    if seed < CORRUPTION_SEED_BASE {
        0
    } else {
        ((seed - CORRUPTION_SEED_BASE) / 1000).min(100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockProvider {
    pub seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed }
    }

    /// A provider corrupting about `percent` of its answers.
    pub fn corrupting(percent: u64, salt: u64) -> Self {
        MockProvider {
            seed: CORRUPTION_SEED_BASE + percent.min(100) * 1000 + salt % 1000,
        }
    }
}

impl Provider for MockProvider {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        Ok(mock_response(self.seed, request.task, &request.payload, request.attempt))
    }
}

/// Lowercases and trims surrounding punctuation, keeping inner `-` and `'`.
fn bare(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Non-stopword tokens of `text`, case-folded.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    text.split_whitespace()
        .map(bare)
        .filter(|t| !t.is_empty() && !is_stopword(t))
        .collect()
}

/// Splits on tokens ending in `.`, `?` or `!`. Sentences are returned with
/// single spaces between words.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for token in text.split_whitespace() {
        current.push(token);
        let end = token.trim_end_matches(['"', '\'', ')', ']']);
        if end.ends_with(['.', '?', '!']) {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

pub fn is_backchannel(text: &str) -> bool {
    let folded: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || *c == '-' || c.is_whitespace())
        .collect();
    let folded = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    BACKCHANNEL.contains(&folded.as_str())
}

/// Tag rule for one sentence; the first matching rule wins.
pub fn sentence_tag(sentence: &str) -> Option<IbisTag> {
    let lower = sentence.to_lowercase();
    if sentence.trim_end().ends_with('?') {
        Some(IbisTag::Question)
    } else if IDEA_PHRASES.iter().any(|p| lower.contains(p)) {
        Some(IbisTag::Idea)
    } else if PRO_KEYWORDS.iter().any(|p| lower.contains(p)) {
        Some(IbisTag::Pro)
    } else if CON_KEYWORDS.iter().any(|p| lower.contains(p)) {
        Some(IbisTag::Con)
    } else {
        None
    }
}

fn strip_trailing_punct(s: &str) -> String {
    s.trim_end_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn label_words<'a>(tokens: impl Iterator<Item = &'a str>) -> String {
    let mut words = Vec::new();
    for token in tokens {
        let b = token.trim_matches(|c: char| !c.is_alphanumeric());
        if !b.is_empty() {
            words.push(b.to_string());
        }
        if words.len() == LABEL_WORDS || token.ends_with(['.', '?', '!']) {
            break;
        }
    }
    words.join(" ")
}

/// Label introduced by "moving on", taken from the rest of that sentence.
fn shift_label(text: &str) -> Option<String> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let at = tokens
        .windows(2)
        .position(|w| bare(w[0]) == "moving" && bare(w[1]) == "on")?;
    let label = label_words(tokens[at + 2..].iter().copied());
    Some(if label.is_empty() {
        opening_label(text)
    } else {
        label
    })
}

fn opening_label(text: &str) -> String {
    let label = label_words(text.split_whitespace());
    if label.is_empty() {
        FALLBACK_LABEL.to_string()
    } else {
        label
    }
}

fn payload_text<'a>(payload: &'a Value, pointer: &str) -> &'a str {
    payload.pointer(pointer).and_then(Value::as_str).unwrap_or("")
}

/// Topic rule: "moving on" opens a topic named by the words after it; an
/// empty topic list opens one named by the turn's first words; two turns
/// that both carry content words but share none start a new topic; anything
/// else continues the open topic under its current label.
pub fn mock_topic(payload: &Value) -> (bool, String) {
    let new_text = payload_text(payload, "/new_turn/text");
    let prev_text = payload_text(payload, "/previous_turn/text");
    let topics: Vec<&str> = payload
        .get("topics")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();

    if let Some(label) = shift_label(new_text) {
        return (true, label);
    }
    let Some(open) = topics.last() else {
        return (true, opening_label(new_text));
    };
    let new_tokens = content_tokens(new_text);
    let prev_tokens = content_tokens(prev_text);
    if new_tokens.is_empty() || prev_tokens.is_empty() || !new_tokens.is_disjoint(&prev_tokens) {
        (false, open.to_string())
    } else {
        (true, opening_label(new_text))
    }
}

/// `(tag, summary, quote)` per argumentative sentence of the turn.
pub fn mock_annotations(text: &str, limit: usize) -> Vec<(IbisTag, String, String)> {
    if is_backchannel(text) {
        return Vec::new();
    }
    split_sentences(text)
        .into_iter()
        .filter_map(|sentence| {
            let tag = sentence_tag(&sentence)?;
            let summary = strip_trailing_punct(&first_words(&sentence, limit));
            Some((tag, summary, sentence))
        })
        .collect()
}

/// Each idea answers the latest earlier question; each pro or con argues
/// the latest earlier idea.
pub fn mock_links(nodes: &[(u64, IbisTag)]) -> Vec<(u64, u64, &'static str)> {
    let mut last_question = None;
    let mut last_idea = None;
    let mut out = Vec::new();
    for &(key, tag) in nodes {
        match tag {
            IbisTag::Question => last_question = Some(key),
            IbisTag::Idea => {
                if let Some(q) = last_question {
                    out.push((key, q, "Answers"));
                }
                last_idea = Some(key);
            }
            IbisTag::Pro => {
                if let Some(i) = last_idea {
                    out.push((key, i, "Support"));
                }
            }
            IbisTag::Con => {
                if let Some(i) = last_idea {
                    out.push((key, i, "Oppose"));
                }
            }
        }
    }
    out
}

fn link_nodes(payload: &Value) -> Vec<(u64, IbisTag)> {
    payload
        .get("nodes")
        .and_then(Value::as_array)
        .map(|nodes| {
            nodes
                .iter()
                .filter_map(|n| {
                    let key = n.get("key")?.as_u64()?;
                    let tag = super::parse::parse_tag(n.get("tag")?.as_str()?).ok()?;
                    Some((key, tag))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn clean_output(task: Task, payload: &Value) -> Value {
    match task {
        Task::TopicSegment => {
            let (is_new, label) = mock_topic(payload);
            json!({
                "Identified topic": label,
                "Continuation/New Topic Tag": if is_new { "$N-New" } else { "$C-Continuation" },
            })
        }
        Task::AnnotateTurn => {
            let limit = payload
                .get("summary_word_limit")
                .and_then(Value::as_u64)
                .unwrap_or(crate::types::DEFAULT_SUMMARY_WORD_LIMIT as u64) as usize;
            let items: Vec<Value> = mock_annotations(payload_text(payload, "/text"), limit)
                .into_iter()
                .map(|(tag, summary, quote)| {
                    json!({ "Tag": tag.prompt_tag(), "Summary": summary, "Quotes": quote })
                })
                .collect();
            json!({ "dialogueTagArray": items })
        }
        Task::IdentifyLinks => {
            let links: Vec<Value> = mock_links(&link_nodes(payload))
                .into_iter()
                .map(|(from, to, text)| json!({ "from": from, "to": to, "text": text }))
                .collect();
            json!({ "linkDataArray": links })
        }
    }
}

/// Kinds of corrupted answers the mock can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFault {
    Truncated,
    MissingField,
    ProseOnly,
    OverLongText,
    UnknownTag,
    ForeignQuote,
    DanglingKey,
    DuplicateFrom,
    Cycle,
}

pub fn faults_for(task: Task) -> &'static [MockFault] {
    use MockFault::*;
    match task {
        Task::TopicSegment => &[Truncated, MissingField, ProseOnly, OverLongText],
        Task::AnnotateTurn => &[Truncated, MissingField, UnknownTag, ForeignQuote, OverLongText],
        Task::IdentifyLinks => &[MissingField, DanglingKey, DuplicateFrom, Cycle, Truncated],
    }
}

fn to_text(v: &Value) -> String {
    String::from_utf8(to_canonical(v).expect("json values serialize")).expect("utf-8")
}

fn corrupt(fault: MockFault, task: Task, payload: &Value, clean: &Value) -> String {
    let clean_text = to_text(clean);
    match fault {
        MockFault::Truncated => clean_text[..clean_text.len() / 2].to_string(),
        MockFault::ProseOnly => "I am not able to analyze this exchange.".to_string(),
        MockFault::MissingField => {
            let mut v = clean.clone();
            if let Some(obj) = v.as_object_mut() {
                let key = match task {
                    Task::TopicSegment => "Continuation/New Topic Tag",
                    Task::AnnotateTurn => "dialogueTagArray",
                    Task::IdentifyLinks => "linkDataArray",
                };
                obj.remove(key);
            }
            to_text(&v)
        }
        MockFault::OverLongText => {
            let long = "this text deliberately runs far past every word limit";
            match task {
                Task::TopicSegment => to_text(&json!({
                    "Identified topic": long,
                    "Continuation/New Topic Tag": "$N-New",
                })),
                _ => {
                    let quote = payload_text(payload, "/text");
                    to_text(&json!({ "dialogueTagArray": [
                        { "Tag": "[$Position]", "Summary": long, "Quotes": quote }
                    ]}))
                }
            }
        }
        MockFault::UnknownTag => to_text(&json!({ "dialogueTagArray": [
            { "Tag": "[$Argument]", "Summary": "Unclassified remark", "Quotes": payload_text(payload, "/text") }
        ]})),
        MockFault::ForeignQuote => to_text(&json!({ "dialogueTagArray": [
            { "Tag": "[$Question]", "Summary": "Invented question", "Quotes": "Nobody ever said this sentence?" }
        ]})),
        MockFault::DanglingKey | MockFault::DuplicateFrom | MockFault::Cycle => {
            let keys: Vec<u64> = link_nodes(payload).iter().map(|(k, _)| *k).collect();
            let (a, b) = match keys.as_slice() {
                [a, b, ..] => (*a, *b),
                _ => return corrupt(MockFault::MissingField, task, payload, clean),
            };
            let missing = keys.iter().max().copied().unwrap_or(0) + 1;
            let links = match fault {
                MockFault::DanglingKey => json!([{ "from": b, "to": missing, "text": "Support" }]),
                MockFault::DuplicateFrom => json!([
                    { "from": b, "to": a, "text": "Support" },
                    { "from": b, "to": a, "text": "Answers" }
                ]),
                _ => json!([
                    { "from": a, "to": b, "text": "Support" },
                    { "from": b, "to": a, "text": "Support" }
                ]),
            };
            to_text(&json!({ "linkDataArray": links }))
        }
    }
}

fn call_digest(seed: u64, task: Task, payload: &Value, attempt: u32) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(task.as_str().as_bytes());
    hasher.update(to_canonical(payload).expect("json values serialize"));
    hasher.update(attempt.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// The mock's raw answer to one call.
pub fn mock_response(seed: u64, task: Task, payload: &Value, attempt: u32) -> String {
    let clean = clean_output(task, payload);
    let percent = corruption_percent(seed);
    if percent > 0 {
        let h = call_digest(seed, task, payload, attempt);
        if h % 100 < percent {
            let kinds = faults_for(task);
            let fault = kinds[((h >> 16) % kinds.len() as u64) as usize];
            return corrupt(fault, task, payload, &clean);
        }
    }
    to_text(&clean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{parse_provider_output, ProviderOutput};

    fn annotate_payload(text: &str) -> Value {
        json!({ "speaker": "a", "text": text, "summary_word_limit": 6 })
    }

    #[test]
    fn same_call_same_bytes() {
        let p = annotate_payload("Cameras are accurate. But they are expensive.");
        assert_eq!(
            mock_response(1, Task::AnnotateTurn, &p, 0),
            mock_response(1, Task::AnnotateTurn, &p, 0)
        );
    }

    #[test]
    fn two_sentence_turn_gives_two_drafts() {
        let text = "Cameras are accurate. But they are expensive.";
        let got = mock_annotations(text, 6);
        assert_eq!(
            got,
            vec![
                (IbisTag::Pro, "Cameras are accurate".into(), "Cameras are accurate.".into()),
                (IbisTag::Con, "But they are expensive".into(), "But they are expensive.".into()),
            ]
        );
    }

    #[test]
    fn backchannel_turns_are_skipped() {
        for t in ["Yeah!", "agreed.", "OK", "Mm-hmm."] {
            assert!(mock_annotations(t, 6).is_empty(), "{t}");
        }
        assert_eq!(mock_annotations("Yeah, but is it cheap?", 6).len(), 1);
    }

    #[test]
    fn question_mark_wins() {
        let raw = mock_response(7, Task::AnnotateTurn, &annotate_payload("How about cameras?"), 0);
        let ProviderOutput::Drafts(d) = parse_provider_output(Task::AnnotateTurn, &raw).unwrap()
        else {
            panic!()
        };
        assert_eq!(d[0].tag, IbisTag::Question);
    }

    #[test]
    fn moving_on_names_the_new_topic() {
        let payload = json!({
            "previous_turn": {"speaker": "a", "text": "Cameras are accurate."},
            "new_turn": {"speaker": "b", "text": "Okay, moving on to the budget for new lights, please."},
            "topics": ["Cameras"],
        });
        assert_eq!(mock_topic(&payload), (true, "to the budget for new lights".into()));
    }

    #[test]
    fn shared_content_continues() {
        let payload = json!({
            "previous_turn": {"speaker": "a", "text": "Cameras are accurate."},
            "new_turn": {"speaker": "b", "text": "The cameras cost a lot."},
            "topics": ["Old", "Camera accuracy"],
        });
        assert_eq!(mock_topic(&payload), (false, "Camera accuracy".into()));
        let payload = json!({
            "previous_turn": {"speaker": "a", "text": "Cameras are accurate."},
            "new_turn": {"speaker": "b", "text": "Lunch menus differ."},
            "topics": ["Camera accuracy"],
        });
        assert_eq!(mock_topic(&payload), (true, "Lunch menus differ".into()));
    }

    #[test]
    fn link_rule_matches_example() {
        assert_eq!(
            mock_links(&[(1, IbisTag::Question), (2, IbisTag::Idea), (3, IbisTag::Pro)]),
            vec![(2, 1, "Answers"), (3, 2, "Support")]
        );
    }

    #[test]
    fn corruption_rate_tracks_seed() {
        assert_eq!(corruption_percent(1), 0);
        assert_eq!(corruption_percent(MockProvider::corrupting(30, 7).seed), 30);
        let p = annotate_payload("We could add cameras.");
        let seed = MockProvider::corrupting(30, 0).seed;
        let faulty = (0..1000u32)
            .filter(|a| {
                parse_provider_output(Task::AnnotateTurn, &mock_response(seed, Task::AnnotateTurn, &p, *a))
                    .ok()
                    != parse_provider_output(Task::AnnotateTurn, &mock_response(1, Task::AnnotateTurn, &p, 0)).ok()
            })
            .count();
        assert!((220..380).contains(&faulty), "{faulty}");
    }
}
