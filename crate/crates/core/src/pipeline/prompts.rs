//! Versioned prompt templates for the HTTP provider.

use super::{ProviderRequest, Task};
use crate::canonical::to_canonical_string;

pub const PROMPT_VERSION: &str = "v1";

const TOPIC_SEGMENTATION: &str = include_str!("../../prompts/topic_segmentation.v1.txt");
const TAGGING_SUMMARIZATION: &str = include_str!("../../prompts/tagging_summarization.v1.txt");
const LINK_IDENTIFICATION: &str = include_str!("../../prompts/link_identification.v1.txt");

pub fn system_prompt(task: Task) -> &'static str {
    match task {
        Task::TopicSegment => TOPIC_SEGMENTATION,
        Task::AnnotateTurn => TAGGING_SUMMARIZATION,
        Task::IdentifyLinks => LINK_IDENTIFICATION,
    }
}

/// The user message: the request payload in canonical form, followed by the
/// corrective instruction on a retry.
pub fn user_message(request: &ProviderRequest) -> String {
    let mut msg = to_canonical_string(&request.payload).expect("json values serialize");
    if let Some(extra) = &request.corrective {
        msg.push_str("\n\n");
        msg.push_str(extra);
    }
    msg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_name_their_output_fields() {
        assert!(system_prompt(Task::TopicSegment).contains("\"Continuation/New Topic Tag\""));
        assert!(system_prompt(Task::AnnotateTurn).contains("\"dialogueTagArray\""));
        assert!(system_prompt(Task::IdentifyLinks).contains("\"linkDataArray\""));
    }
}
