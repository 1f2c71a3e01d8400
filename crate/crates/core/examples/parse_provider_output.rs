//! Feeds raw model answers through the lenient parser and the validators,
//! showing what is accepted and which typed error the rest get.
//!
//! ```text
//! cargo run --example parse_provider_output
//! ```

use dialogmap::pipeline::parse::{validate_drafts, validate_links};
use dialogmap::pipeline::{parse_provider_output, ProviderOutput, Task};
use std::collections::BTreeSet;

const TURN: &str = "Should every freshman visit CAPS? I think a single visit helps.";

fn main() {
    let answers = [
        // Wrapped in prose, with a trailing comma.
        (
            Task::AnnotateTurn,
            r#"Sure, here it is: {"dialogueTagArray": [{"Tag": "[$Question1]", "Summary": "Mandatory CAPS visit for freshmen", "Quotes": "Should every freshman visit CAPS?"},]}"#,
        ),
        (
            Task::AnnotateTurn,
            r#"{"dialogueTagArray": [{"Tag": "[$Claim]", "Summary": "Visits", "Quotes": "I think a single visit helps."}]}"#,
        ),
        (Task::IdentifyLinks, r#"{"linkDataArray": [{"from": 2, "to": 1, "text": "Answers"}]}"#),
        (
            Task::IdentifyLinks,
            r#"{"linkDataArray": [{"from": 2, "to": 1, "text": "Answers"}, {"from": 2, "to": 3, "text": "Support"}]}"#,
        ),
        (Task::TopicSegment, r#"{"Identified topic": "CAPS visits", "Continuation/New Topic Tag": "$N-New""#),
    ];
    let keys: BTreeSet<u64> = [1, 2, 3].into();

    for (task, raw) in answers {
        let result = parse_provider_output(task, raw).and_then(|out| match out {
            ProviderOutput::Drafts(d) => validate_drafts(d, TURN, 6, false).map(ProviderOutput::Drafts),
            ProviderOutput::Links(l) => validate_links(l, &keys).map(ProviderOutput::Links),
            topic => Ok(topic),
        });
        match result {
            Ok(out) => println!("{:<13} accepted  {out:?}", task.as_str()),
            Err(e) => println!("{:<13} rejected  {}: {e}", task.as_str(), e.code()),
        }
    }
}
