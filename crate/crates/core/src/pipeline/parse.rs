//! Parsing and validation of raw provider output.

use super::lenient::extract_object;
use super::{LinkDraft, NodeDraft, PipelineError, Task, TopicDecision};
use crate::types::{first_words, normalize_whitespace, word_count, IbisTag};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};

pub const TOPIC_LABEL_FIELD: &str = "Identified topic";
pub const TOPIC_TAG_FIELD: &str = "Continuation/New Topic Tag";
pub const TAG_ARRAY_FIELD: &str = "dialogueTagArray";
pub const LINK_ARRAY_FIELD: &str = "linkDataArray";

/// Structurally valid output of one task, before context checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderOutput {
    Topic(TopicDecision),
    Drafts(Vec<NodeDraft>),
    Links(Vec<LinkDraft>),
}

fn malformed(msg: impl Into<String>) -> PipelineError {
    PipelineError::MalformedProviderOutput(msg.into())
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, at: &str) -> Result<&'a Value, PipelineError> {
    obj.get(name).ok_or_else(|| {
        let found: Vec<&str> = obj.keys().map(String::as_str).collect();
        malformed(format!("missing field \"{name}\" in {at} (found {found:?})"))
    })
}

fn string_field(obj: &Map<String, Value>, name: &str, at: &str) -> Result<String, PipelineError> {
    match field(obj, name, at)? {
        Value::String(s) => Ok(s.clone()),
        // Some models return the quoted sentences as a list.
        Value::Array(items) if items.iter().all(Value::is_string) => Ok(items
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join(" ")),
        other => Err(malformed(format!(
            "field \"{name}\" in {at} should be a string, got {other}"
        ))),
    }
}

/// Trims whitespace and trailing separators a model leaves behind.
fn clean_text(s: &str) -> String {
    normalize_whitespace(s)
        .trim_end_matches([',', ';', ':', '.'])
        .trim()
        .to_string()
}

/// Maps a prompt tag to its category. Accepts `[$Question]`, `[$Question1]`,
/// `$Position`, `Pro` and so on; anything outside the four prompt tags is
/// rejected.
pub fn parse_tag(raw: &str) -> Result<IbisTag, PipelineError> {
    let core = raw
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .trim()
        .trim_start_matches('\\')
        .trim_start_matches('$')
        .trim_end_matches(|c: char| c.is_ascii_digit())
        .to_ascii_lowercase();
    match core.as_str() {
        "question" => Ok(IbisTag::Question),
        "position" => Ok(IbisTag::Idea),
        "pro" => Ok(IbisTag::Pro),
        "con" => Ok(IbisTag::Con),
        _ => Err(PipelineError::UnknownTag(raw.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TopicTag {
    Continuation,
    New,
}

fn parse_topic_tag(raw: &str) -> Result<TopicTag, PipelineError> {
    let norm = raw
        .trim()
        .trim_start_matches('\\')
        .trim_start_matches('$')
        .to_ascii_lowercase();
    match norm.as_str() {
        "c-continuation" | "continuation" | "c" => Ok(TopicTag::Continuation),
        "n-new" | "new" | "new topic" | "n" => Ok(TopicTag::New),
        // The bare template: nothing says a new topic started.
        "" => Ok(TopicTag::Continuation),
        _ => Err(malformed(format!(
            "\"{TOPIC_TAG_FIELD}\" must be $C-Continuation or $N-New, got {raw:?}"
        ))),
    }
}

/// Extracts the single structured object in `raw` and reads the fields of
/// `task`'s output format.
pub fn parse_provider_output(task: Task, raw: &str) -> Result<ProviderOutput, PipelineError> {
    let value = extract_object(raw).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(malformed("top-level value is not an object"));
    };
    match task {
        Task::TopicSegment => {
            let label = clean_text(&string_field(&obj, TOPIC_LABEL_FIELD, "output")?);
            let tag = parse_topic_tag(&string_field(&obj, TOPIC_TAG_FIELD, "output")?)?;
            Ok(ProviderOutput::Topic(match tag {
                TopicTag::Continuation => TopicDecision::Continuation {
                    revised_label: label,
                },
                TopicTag::New => TopicDecision::NewTopic { label },
            }))
        }
        Task::AnnotateTurn => {
            let Value::Array(items) = field(&obj, TAG_ARRAY_FIELD, "output")? else {
                return Err(malformed(format!("\"{TAG_ARRAY_FIELD}\" is not an array")));
            };
            let mut drafts = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let at = format!("{TAG_ARRAY_FIELD}[{i}]");
                let Value::Object(entry) = item else {
                    return Err(malformed(format!("{at} is not an object")));
                };
                let tag = parse_tag(&string_field(entry, "Tag", &at)?)?;
                let summary = clean_text(&string_field(entry, "Summary", &at)?);
                let quote = normalize_whitespace(&string_field(entry, "Quotes", &at)?);
                if summary.is_empty() {
                    return Err(malformed(format!("empty Summary in {at}")));
                }
                if quote.is_empty() {
                    return Err(malformed(format!("empty Quotes in {at}")));
                }
                drafts.push(NodeDraft {
                    tag,
                    summary,
                    quote,
                    degraded: false,
                });
            }
            Ok(ProviderOutput::Drafts(drafts))
        }
        Task::IdentifyLinks => {
            let Value::Array(items) = field(&obj, LINK_ARRAY_FIELD, "output")? else {
                return Err(malformed(format!("\"{LINK_ARRAY_FIELD}\" is not an array")));
            };
            let mut links = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                let at = format!("{LINK_ARRAY_FIELD}[{i}]");
                let Value::Object(entry) = item else {
                    return Err(malformed(format!("{at} is not an object")));
                };
                links.push(LinkDraft {
                    from_key: key_field(entry, "from", &at)?,
                    to_key: key_field(entry, "to", &at)?,
                    label: normalize_whitespace(&string_field(entry, "text", &at)?),
                });
            }
            Ok(ProviderOutput::Links(links))
        }
    }
}

fn key_field(obj: &Map<String, Value>, name: &str, at: &str) -> Result<u64, PipelineError> {
    let v = field(obj, name, at)?;
    let parsed = match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    };
    parsed.ok_or_else(|| malformed(format!("field \"{name}\" in {at} is not a node key: {v}")))
}

/// Checks a topic decision against the current topic list.
///
/// With no open topic the decision is always a new topic. A continuation
/// with an empty label keeps the open label. Returns the decision and
/// whether it was truncated.
pub fn validate_topic(
    decision: TopicDecision,
    open_label: Option<&str>,
    limit: usize,
    truncate: bool,
) -> Result<(TopicDecision, bool), PipelineError> {
    let decision = match (decision, open_label) {
        (TopicDecision::Continuation { revised_label }, None) => {
            TopicDecision::NewTopic { label: revised_label }
        }
        (TopicDecision::Continuation { revised_label }, Some(open)) if revised_label.is_empty() => {
            TopicDecision::Continuation {
                revised_label: open.to_string(),
            }
        }
        (d, _) => d,
    };
    let label = decision.label();
    if label.is_empty() {
        return Err(malformed(format!("empty \"{TOPIC_LABEL_FIELD}\" for a new topic")));
    }
    let words = word_count(label);
    if words <= limit {
        return Ok((decision, false));
    }
    if !truncate {
        return Err(PipelineError::LabelTooLong { words, limit });
    }
    let cut = first_words(label, limit);
    let decision = match decision {
        TopicDecision::Continuation { .. } => TopicDecision::Continuation { revised_label: cut },
        TopicDecision::NewTopic { .. } => TopicDecision::NewTopic { label: cut },
    };
    Ok((decision, true))
}

/// Checks that every draft quotes the turn and fits the summary limit.
pub fn validate_drafts(
    drafts: Vec<NodeDraft>,
    turn_text: &str,
    limit: usize,
    truncate: bool,
) -> Result<Vec<NodeDraft>, PipelineError> {
    let haystack = normalize_whitespace(turn_text);
    let mut out = Vec::with_capacity(drafts.len());
    for mut draft in drafts {
        if !haystack.contains(&normalize_whitespace(&draft.quote)) {
            return Err(PipelineError::QuoteNotInTurn(draft.quote));
        }
        let words = word_count(&draft.summary);
        if words > limit {
            if !truncate {
                return Err(PipelineError::SummaryTooLong { words, limit });
            }
            draft.summary = first_words(&draft.summary, limit);
            draft.degraded = true;
        }
        out.push(draft);
    }
    Ok(out)
}

/// Checks a link batch: known keys, at most one outgoing link per key and
/// no cycles, so the batch forms a forest.
pub fn validate_links(
    links: Vec<LinkDraft>,
    keys: &BTreeSet<u64>,
) -> Result<Vec<LinkDraft>, PipelineError> {
    let mut parent: BTreeMap<u64, u64> = BTreeMap::new();
    for link in &links {
        for key in [link.from_key, link.to_key] {
            if !keys.contains(&key) {
                return Err(PipelineError::DanglingKey(key));
            }
        }
        if link.from_key == link.to_key {
            return Err(PipelineError::CycleDetected(link.from_key));
        }
        if parent.insert(link.from_key, link.to_key).is_some() {
            return Err(PipelineError::DuplicateFromKey(link.from_key));
        }
    }
    // Out-degree is at most one, so following parents either ends or loops.
    for &start in parent.keys() {
        let mut seen = BTreeSet::new();
        let mut at = start;
        while let Some(&next) = parent.get(&at) {
            if !seen.insert(at) {
                return Err(PipelineError::CycleDetected(at));
            }
            at = next;
        }
    }
    Ok(links)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_alias_table() {
        assert_eq!(parse_tag("[$Question1]"), Ok(IbisTag::Question));
        assert_eq!(parse_tag("[$Position]"), Ok(IbisTag::Idea));
        assert_eq!(parse_tag("[\\$Pro2]"), Ok(IbisTag::Pro));
        assert_eq!(parse_tag("$Con"), Ok(IbisTag::Con));
        assert_eq!(parse_tag("con"), Ok(IbisTag::Con));
        for bad in ["[$Idea]", "[$Argument]", "", "[$]", "Questions"] {
            assert!(matches!(parse_tag(bad), Err(PipelineError::UnknownTag(_))), "{bad}");
        }
    }

    #[test]
    fn reference_topic_payload_shape() {
        let raw = r#"{
    "Identified topic": "Mandatory counseling visit for freshmen",
    "Continuation/New Topic Tag": "$N-New",
}"#;
        assert_eq!(
            parse_provider_output(Task::TopicSegment, raw),
            Ok(ProviderOutput::Topic(TopicDecision::NewTopic {
                label: "Mandatory counseling visit for freshmen".into()
            }))
        );
    }

    #[test]
    fn empty_template_continues_or_is_rejected() {
        let raw = r#"{ "Identified topic": "", "Continuation/New Topic Tag": "", }"#;
        let Ok(ProviderOutput::Topic(decision)) = parse_provider_output(Task::TopicSegment, raw)
        else {
            panic!("template should parse")
        };
        assert_eq!(
            validate_topic(decision.clone(), Some("Budget"), 6, false),
            Ok((TopicDecision::Continuation { revised_label: "Budget".into() }, false))
        );
        assert!(matches!(
            validate_topic(decision, None, 6, false),
            Err(PipelineError::MalformedProviderOutput(_))
        ));
    }

    #[test]
    fn prose_wrapper_is_stripped() {
        let raw = "Sure, here is the analysis: {\"linkDataArray\": [{\"from\": \"2\", \"to\": 1, \"text\": \"Support\"}]}";
        assert_eq!(
            parse_provider_output(Task::IdentifyLinks, raw),
            Ok(ProviderOutput::Links(vec![LinkDraft {
                from_key: 2,
                to_key: 1,
                label: "Support".into()
            }]))
        );
    }

    #[test]
    fn missing_field_diagnostic_names_it() {
        let err = parse_provider_output(Task::IdentifyLinks, r#"{"links": []}"#).unwrap_err();
        let PipelineError::MalformedProviderOutput(msg) = err else {
            panic!("wrong error");
        };
        assert!(msg.contains("linkDataArray") && msg.contains("links"), "{msg}");
    }

    #[test]
    fn link_validation_order_and_cycles() {
        let keys: BTreeSet<u64> = [1, 2, 3].into();
        let l = |f, t| LinkDraft {
            from_key: f,
            to_key: t,
            label: "x".into(),
        };
        assert_eq!(
            validate_links(vec![l(1, 9)], &keys),
            Err(PipelineError::DanglingKey(9))
        );
        assert_eq!(
            validate_links(vec![l(1, 1)], &keys),
            Err(PipelineError::CycleDetected(1))
        );
        assert!(matches!(
            validate_links(vec![l(1, 2), l(2, 3), l(3, 1)], &keys),
            Err(PipelineError::CycleDetected(_))
        ));
        assert!(validate_links(vec![l(2, 1), l(3, 1)], &keys).is_ok());
    }

    #[test]
    fn quotes_must_come_from_the_turn() {
        let d = NodeDraft {
            tag: IbisTag::Pro,
            summary: "Fine".into(),
            quote: "cameras   are accurate.".into(),
            degraded: false,
        };
        assert!(validate_drafts(vec![d.clone()], "Cameras are accurate.", 6, false).is_err());
        assert!(validate_drafts(vec![d], "So cameras are\naccurate. Yes.", 6, false).is_ok());
    }
}
