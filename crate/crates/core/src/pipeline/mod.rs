//! Provider-backed analyses: topic segmentation, turn tagging and
//! summarization, and link identification.
//!
//! Each analysis is a typed contract. A request payload goes out, the raw
//! text that comes back is parsed leniently and then validated strictly;
//! a batch is either accepted whole or rejected with a typed error. The
//! retry policy lives in [`step`] so the synchronous helpers here and the
//! session's job queue share exactly one implementation of it.

pub mod http;
pub mod lenient;
pub mod mock;
pub mod parse;
pub mod prompts;

use crate::types::{IbisTag, Topic, Turn, TOPIC_LABEL_WORD_LIMIT};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeSet;
use thiserror::Error;

pub use mock::MockProvider;
pub use parse::{parse_provider_output, ProviderOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    TopicSegment,
    AnnotateTurn,
    IdentifyLinks,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::TopicSegment => "TopicSegment",
            Task::AnnotateTurn => "AnnotateTurn",
            Task::IdentifyLinks => "IdentifyLinks",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub task: Task,
    pub payload: Value,
    pub timeout_ms: u64,
    /// Zero for the first call.
    pub attempt: u32,
    /// Extra instruction appended on a corrective retry.
    pub corrective: Option<String>,
}

/// Transport-level failures. Output problems are [`PipelineError`]s.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider timed out")]
    Timeout,
    #[error("provider transport failed: {0}")]
    Transport(String),
    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },
}

/// A model endpoint. Implementations must be callable from any thread.
pub trait Provider: Send + Sync {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PipelineError {
    #[error("provider timed out")]
    ProviderTimeout,
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider output: {0}")]
    MalformedProviderOutput(String),
    #[error("unknown dialogue tag {0:?}")]
    UnknownTag(String),
    #[error("topic label has {words} words, limit is {limit}")]
    LabelTooLong { words: usize, limit: usize },
    #[error("summary has {words} words, limit is {limit}")]
    SummaryTooLong { words: usize, limit: usize },
    #[error("quote does not appear in the turn: {0:?}")]
    QuoteNotInTurn(String),
    #[error("link references unknown key {0}")]
    DanglingKey(u64),
    #[error("key {0} appears more than once as a link source")]
    DuplicateFromKey(u64),
    #[error("links form a cycle through key {0}")]
    CycleDetected(u64),
    #[error("no nodes to link")]
    EmptyInput,
}

impl PipelineError {
    /// Stable short name used in logs and wire errors.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::ProviderTimeout => "ProviderTimeout",
            PipelineError::ProviderUnavailable(_) => "ProviderUnavailable",
            PipelineError::MalformedProviderOutput(_) => "MalformedProviderOutput",
            PipelineError::UnknownTag(_) => "UnknownTag",
            PipelineError::LabelTooLong { .. } => "LabelTooLong",
            PipelineError::SummaryTooLong { .. } => "SummaryTooLong",
            PipelineError::QuoteNotInTurn(_) => "QuoteNotInTurn",
            PipelineError::DanglingKey(_) => "DanglingKey",
            PipelineError::DuplicateFromKey(_) => "DuplicateFromKey",
            PipelineError::CycleDetected(_) => "CycleDetected",
            PipelineError::EmptyInput => "EmptyInput",
        }
    }

    fn is_over_limit(&self) -> bool {
        matches!(
            self,
            PipelineError::LabelTooLong { .. } | PipelineError::SummaryTooLong { .. }
        )
    }

    /// Link-structure rejections are final; everything else gets one more try.
    fn is_retryable(&self) -> bool {
        !matches!(
            self,
            PipelineError::DanglingKey(_)
                | PipelineError::DuplicateFromKey(_)
                | PipelineError::CycleDetected(_)
                | PipelineError::EmptyInput
        )
    }

    /// True for errors that reflect the transport rather than the output.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            PipelineError::ProviderTimeout | PipelineError::ProviderUnavailable(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TopicDecision {
    Continuation { revised_label: String },
    NewTopic { label: String },
}

impl TopicDecision {
    pub fn label(&self) -> &str {
        match self {
            TopicDecision::Continuation { revised_label } => revised_label,
            TopicDecision::NewTopic { label } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDraft {
    pub tag: IbisTag,
    pub summary: String,
    pub quote: String,
    /// The summary was truncated to the limit after a failed corrective retry.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDraft {
    pub from_key: u64,
    pub to_key: u64,
    pub label: String,
}

/// One node offered to link identification under its batch key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkInput {
    pub key: u64,
    pub tag: IbisTag,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicOutcome {
    pub decision: TopicDecision,
    pub degraded: bool,
}

/// What a provider-backed analysis needs: a payload to send and a way to
/// turn raw output into a validated result.
pub trait Analysis {
    type Output;

    fn task(&self) -> Task;

    fn payload(&self) -> Value;

    /// `truncate` is set on the final attempt, when over-limit text is cut
    /// down instead of rejected.
    fn interpret(&self, raw: &str, truncate: bool) -> Result<Self::Output, PipelineError>;

    fn corrective_instruction(&self, error: &PipelineError) -> String {
        format!(
            "Your previous answer was rejected ({error}). Answer again in the same JSON format and keep every label and summary within the word limit."
        )
    }
}

fn turn_json(turn: &Turn) -> Value {
    json!({ "speaker": turn.speaker_id.as_str(), "text": turn.text })
}

/// Decides whether a new turn continues the open topic.
#[derive(Debug, Clone)]
pub struct TopicAnalysis {
    pub previous_turn: Option<Turn>,
    pub new_turn: Turn,
    pub topics: Vec<Topic>,
}

impl Analysis for TopicAnalysis {
    type Output = TopicOutcome;

    fn task(&self) -> Task {
        Task::TopicSegment
    }

    fn payload(&self) -> Value {
        json!({
            "previous_turn": self.previous_turn.as_ref().map(turn_json),
            "new_turn": turn_json(&self.new_turn),
            "topics": self.topics.iter().map(|t| t.label.as_str()).collect::<Vec<_>>(),
        })
    }

    fn interpret(&self, raw: &str, truncate: bool) -> Result<TopicOutcome, PipelineError> {
        let ProviderOutput::Topic(decision) = parse_provider_output(Task::TopicSegment, raw)?
        else {
            unreachable!("parser returns the variant of the requested task")
        };
        let open_label = self.topics.last().map(|t| t.label.as_str());
        let (decision, degraded) =
            parse::validate_topic(decision, open_label, TOPIC_LABEL_WORD_LIMIT, truncate)?;
        Ok(TopicOutcome { decision, degraded })
    }
}

/// Tags a turn and summarizes its argumentative sentences.
#[derive(Debug, Clone)]
pub struct AnnotateAnalysis {
    pub turn: Turn,
    pub summary_word_limit: usize,
}

impl Analysis for AnnotateAnalysis {
    type Output = Vec<NodeDraft>;

    fn task(&self) -> Task {
        Task::AnnotateTurn
    }

    fn payload(&self) -> Value {
        json!({
            "speaker": self.turn.speaker_id.as_str(),
            "text": self.turn.text,
            "summary_word_limit": self.summary_word_limit,
        })
    }

    fn interpret(&self, raw: &str, truncate: bool) -> Result<Vec<NodeDraft>, PipelineError> {
        let ProviderOutput::Drafts(drafts) = parse_provider_output(Task::AnnotateTurn, raw)?
        else {
            unreachable!("parser returns the variant of the requested task")
        };
        parse::validate_drafts(drafts, &self.turn.text, self.summary_word_limit, truncate)
    }
}

/// Proposes links among the nodes of one topic.
#[derive(Debug, Clone)]
pub struct LinkAnalysis {
    pub nodes: Vec<LinkInput>,
}

impl LinkAnalysis {
    pub fn keys(&self) -> BTreeSet<u64> {
        self.nodes.iter().map(|n| n.key).collect()
    }
}

impl Analysis for LinkAnalysis {
    type Output = Vec<LinkDraft>;

    fn task(&self) -> Task {
        Task::IdentifyLinks
    }

    fn payload(&self) -> Value {
        json!({
            "nodes": self.nodes.iter().map(|n| json!({
                "key": n.key,
                "tag": n.tag.prompt_tag(),
                "summary": n.summary,
            })).collect::<Vec<_>>(),
        })
    }

    fn interpret(&self, raw: &str, _truncate: bool) -> Result<Vec<LinkDraft>, PipelineError> {
        let ProviderOutput::Links(links) = parse_provider_output(Task::IdentifyLinks, raw)? else {
            unreachable!("parser returns the variant of the requested task")
        };
        parse::validate_links(links, &self.keys())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 1,
            timeout_ms: 0,
        }
    }
}

impl RetryPolicy {
    pub fn first_request<A: Analysis + ?Sized>(&self, analysis: &A) -> ProviderRequest {
        ProviderRequest {
            task: analysis.task(),
            payload: analysis.payload(),
            timeout_ms: self.timeout_ms,
            attempt: 0,
            corrective: None,
        }
    }
}

/// The next move after a provider call returned.
#[derive(Debug, Clone, PartialEq)]
pub enum Step<T> {
    Done(T),
    Retry(ProviderRequest),
    Failed(PipelineError),
}

/// Applies the retry policy to one provider response.
///
/// Timeouts and malformed output are retried once as-is. Over-limit text is
/// retried with a corrective instruction and, when that also fails, cut to
/// the limit. Link-structure rejections fail immediately.
pub fn step<A: Analysis + ?Sized>(
    analysis: &A,
    policy: &RetryPolicy,
    request: &ProviderRequest,
    response: Result<String, ProviderError>,
) -> Step<A::Output> {
    let can_retry = request.attempt < policy.max_retries;
    let retry = |corrective: Option<String>| {
        Step::Retry(ProviderRequest {
            attempt: request.attempt + 1,
            corrective,
            ..request.clone()
        })
    };
    let raw = match response {
        Ok(raw) => raw,
        Err(err) => {
            if can_retry {
                return retry(None);
            }
            return Step::Failed(match err {
                ProviderError::Timeout => PipelineError::ProviderTimeout,
                other => PipelineError::ProviderUnavailable(other.to_string()),
            });
        }
    };
    match analysis.interpret(&raw, false) {
        Ok(out) => Step::Done(out),
        Err(err) if err.is_over_limit() => {
            if can_retry {
                retry(Some(analysis.corrective_instruction(&err)))
            } else {
                match analysis.interpret(&raw, true) {
                    Ok(out) => Step::Done(out),
                    Err(err) => Step::Failed(err),
                }
            }
        }
        Err(err) if err.is_retryable() && can_retry => retry(None),
        Err(err) => Step::Failed(err),
    }
}

/// Runs an analysis to completion against `provider`, retrying per policy.
pub fn run<A: Analysis + ?Sized>(
    analysis: &A,
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> Result<A::Output, PipelineError> {
    let mut request = policy.first_request(analysis);
    loop {
        let response = provider.complete(&request);
        match step(analysis, policy, &request, response) {
            Step::Done(out) => return Ok(out),
            Step::Failed(err) => return Err(err),
            Step::Retry(next) => request = next,
        }
    }
}

/// Classifies `new_turn` against the topic list. An empty list always
/// yields a new topic.
pub fn classify_topic(
    previous_turn: Option<&Turn>,
    new_turn: &Turn,
    topics: &[Topic],
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> Result<TopicOutcome, PipelineError> {
    let analysis = TopicAnalysis {
        previous_turn: previous_turn.cloned(),
        new_turn: new_turn.clone(),
        topics: topics.to_vec(),
    };
    run(&analysis, provider, policy)
}

/// Produces zero or more node drafts for a finalized turn.
pub fn annotate_turn(
    turn: &Turn,
    summary_word_limit: usize,
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> Result<Vec<NodeDraft>, PipelineError> {
    let analysis = AnnotateAnalysis {
        turn: turn.clone(),
        summary_word_limit,
    };
    run(&analysis, provider, policy)
}

/// Proposes links among `nodes`. A single node needs no provider call.
pub fn identify_links(
    nodes: &[LinkInput],
    provider: &dyn Provider,
    policy: &RetryPolicy,
) -> Result<Vec<LinkDraft>, PipelineError> {
    let keys: BTreeSet<u64> = nodes.iter().map(|n| n.key).collect();
    if nodes.is_empty() || keys.len() != nodes.len() {
        return Err(PipelineError::EmptyInput);
    }
    if nodes.len() == 1 {
        return Ok(Vec::new());
    }
    let analysis = LinkAnalysis {
        nodes: nodes.to_vec(),
    };
    run(&analysis, provider, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{SplitReason, TopicId, TopicStatus, TurnId};
    use std::sync::Mutex;

    /// Replays a fixed list of responses, then repeats the last one.
    struct Scripted {
        responses: Vec<Result<String, ProviderError>>,
        calls: Mutex<Vec<ProviderRequest>>,
    }

    impl Scripted {
        fn new(responses: Vec<Result<String, ProviderError>>) -> Self {
            Scripted {
                responses,
                calls: Mutex::new(Vec::new()),
            }
        }

        fn calls(&self) -> Vec<ProviderRequest> {
            self.calls.lock().unwrap().clone()
        }
    }

    impl Provider for Scripted {
        fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
            let mut calls = self.calls.lock().unwrap();
            let i = calls.len().min(self.responses.len() - 1);
            calls.push(request.clone());
            self.responses[i].clone()
        }
    }

    fn turn(text: &str) -> Turn {
        Turn {
            turn_id: TurnId(1),
            seq: 1,
            speaker_id: "alex".into(),
            text: text.into(),
            word_count: crate::types::word_count(text),
            start_ms: 0,
            end_ms: 10,
            split_reason: SplitReason::SpeakerChange,
        }
    }

    fn topic(label: &str) -> Topic {
        Topic {
            topic_id: TopicId(1),
            label: label.into(),
            first_turn_seq: 1,
            last_turn_seq: 1,
            status: TopicStatus::Open,
            degraded: false,
        }
    }

    const D2_EXAMPLE: &str = r#"{
"dialogueTagArray":[
{"Tag": "[$Question1]", "Summary": "Invitation to discuss products," "Quotes": "Does anyone want to talk about their products?"},
],
}"#;

    #[test]
    fn annotate_accepts_reference_payload() {
        let provider = Scripted::new(vec![Ok(D2_EXAMPLE.into())]);
        let drafts = annotate_turn(
            &turn("Does anyone want to talk about their products?"),
            6,
            &provider,
            &RetryPolicy::default(),
        )
        .unwrap();
        assert_eq!(
            drafts,
            vec![NodeDraft {
                tag: IbisTag::Question,
                summary: "Invitation to discuss products".into(),
                quote: "Does anyone want to talk about their products?".into(),
                degraded: false,
            }]
        );
    }

    #[test]
    fn timeout_is_retried_once_then_fails() {
        let provider = Scripted::new(vec![Err(ProviderError::Timeout)]);
        let err = annotate_turn(&turn("x"), 6, &provider, &RetryPolicy::default()).unwrap_err();
        assert_eq!(err, PipelineError::ProviderTimeout);
        let calls = provider.calls();
        assert_eq!(calls.len(), 2);
        assert_eq!(calls[1].attempt, 1);
        assert!(calls[1].corrective.is_none());
    }

    #[test]
    fn malformed_then_valid_succeeds() {
        let provider = Scripted::new(vec![
            Ok("{\"dialogueTagArray\": [".into()),
            Ok(r#"{"dialogueTagArray": []}"#.into()),
        ]);
        let drafts = annotate_turn(&turn("Yeah!"), 6, &provider, &RetryPolicy::default()).unwrap();
        assert!(drafts.is_empty());
    }

    #[test]
    fn over_limit_summary_gets_corrective_retry_then_truncation() {
        let long = r#"{"dialogueTagArray": [{"Tag": "[$Pro]", "Summary": "one two three four five six seven", "Quotes": "x is good"}]}"#;
        let provider = Scripted::new(vec![Ok(long.into())]);
        let drafts =
            annotate_turn(&turn("x is good"), 6, &provider, &RetryPolicy::default()).unwrap();
        assert_eq!(drafts[0].summary, "one two three four five six");
        assert!(drafts[0].degraded);
        let calls = provider.calls();
        assert_eq!(calls.len(), 2);
        assert!(calls[1].corrective.as_deref().unwrap().contains("word limit"));
    }

    #[test]
    fn link_rejections_are_not_retried() {
        let dup = r#"{"linkDataArray": [{"from": 2, "to": 1, "text": "Support"}, {"from": 2, "to": 3, "text": "Support"}]}"#;
        let provider = Scripted::new(vec![Ok(dup.into())]);
        let nodes: Vec<LinkInput> = (1..=3)
            .map(|k| LinkInput {
                key: k,
                tag: IbisTag::Idea,
                summary: format!("n{k}"),
            })
            .collect();
        let err = identify_links(&nodes, &provider, &RetryPolicy::default()).unwrap_err();
        assert_eq!(err, PipelineError::DuplicateFromKey(2));
        assert_eq!(provider.calls().len(), 1);
    }

    #[test]
    fn single_node_needs_no_call() {
        let provider = Scripted::new(vec![Err(ProviderError::Timeout)]);
        let nodes = vec![LinkInput {
            key: 1,
            tag: IbisTag::Question,
            summary: "q".into(),
        }];
        assert!(identify_links(&nodes, &provider, &RetryPolicy::default())
            .unwrap()
            .is_empty());
        assert!(provider.calls().is_empty());
        assert_eq!(
            identify_links(&[], &provider, &RetryPolicy::default()),
            Err(PipelineError::EmptyInput)
        );
    }

    #[test]
    fn empty_topic_list_forces_new_topic() {
        let cont = r#"{"Identified topic": "Budget talk", "Continuation/New Topic Tag": "$C-Continuation"}"#;
        let provider = Scripted::new(vec![Ok(cont.into())]);
        let out = classify_topic(
            None,
            &turn("Budget first."),
            &[],
            &provider,
            &RetryPolicy::default(),
        )
        .unwrap();
        assert_eq!(
            out.decision,
            TopicDecision::NewTopic {
                label: "Budget talk".into()
            }
        );
        let out = classify_topic(
            None,
            &turn("More budget."),
            &[topic("Budget talk")],
            &provider,
            &RetryPolicy::default(),
        )
        .unwrap();
        assert!(matches!(out.decision, TopicDecision::Continuation { .. }));
    }
}
