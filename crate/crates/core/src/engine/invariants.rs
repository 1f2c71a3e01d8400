//! Structural checks over a [`MapState`].
//!
//! Each check has a stable name so that log validation can report which
//! invariant a log breaks first.

use super::MapState;
use crate::types::{word_count, Actor, Location, Mode, NodeId, NodeOrigin, TopicStatus};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invariant `{name}` violated: {detail}")]
pub struct InvariantViolation {
    pub name: &'static str,
    pub detail: String,
}

fn fail(name: &'static str, detail: impl Into<String>) -> Result<(), InvariantViolation> {
    Err(InvariantViolation {
        name,
        detail: detail.into(),
    })
}

impl MapState {
    /// Runs every check, returning the first violation.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        self.check_id_counters()?;
        self.check_links()?;
        self.check_palette()?;
        self.check_nodes()?;
        self.check_topics()?;
        self.check_mode_separation()?;
        self.check_generated_forest()
    }

    fn check_id_counters(&self) -> Result<(), InvariantViolation> {
        if self.next_server_seq == 0 {
            return fail("id-counters", "server seq counter is zero");
        }
        for (id, n) in &self.nodes {
            if *id != n.node_id || id.0 == 0 || id.0 >= self.next_node_id {
                return fail("id-counters", format!("node key {id} out of range"));
            }
        }
        for (id, l) in &self.links {
            if *id != l.link_id || id.0 == 0 || id.0 >= self.next_link_id {
                return fail("id-counters", format!("link key {id} out of range"));
            }
            if self.deleted_links.contains(id) {
                return fail("id-counters", format!("{id} is both live and deleted"));
            }
        }
        for t in &self.topics {
            if t.topic_id.0 == 0 || t.topic_id.0 >= self.next_topic_id {
                return fail("id-counters", format!("{} out of range", t.topic_id));
            }
        }
        Ok(())
    }

    fn check_links(&self) -> Result<(), InvariantViolation> {
        let mut pairs = BTreeSet::new();
        for l in self.links.values() {
            if l.from == l.to {
                return fail("no-self-loop", format!("{} points at its own source", l.link_id));
            }
            for end in [l.from, l.to] {
                match self.nodes.get(&end) {
                    Some(n) if !n.location.is_deleted() => {}
                    _ => return fail("link-endpoints", format!("{} touches missing {end}", l.link_id)),
                }
            }
            if !pairs.insert((l.from, l.to)) {
                return fail("no-duplicate-link", format!("{} -> {} appears twice", l.from, l.to));
            }
        }
        Ok(())
    }

    fn check_palette(&self) -> Result<(), InvariantViolation> {
        let listed: BTreeSet<NodeId> = self.palette_order.iter().copied().collect();
        if listed.len() != self.palette_order.len() {
            return fail("palette-membership", "a node is listed twice");
        }
        let located: BTreeSet<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.location.is_palette())
            .map(|n| n.node_id)
            .collect();
        if listed != located {
            return fail("palette-membership", "palette order disagrees with node locations");
        }
        let mut last = 0;
        for id in &self.palette_order {
            if let Location::Palette { chrono_index } = self.nodes[id].location {
                if chrono_index < last {
                    return fail("palette-chronological", format!("{id} is out of order"));
                }
                last = chrono_index;
            }
        }
        Ok(())
    }

    fn check_nodes(&self) -> Result<(), InvariantViolation> {
        let topic_ids: BTreeSet<_> = self.topics.iter().map(|t| t.topic_id).collect();
        for n in self.nodes.values() {
            if let Some(t) = n.topic_id {
                if !topic_ids.contains(&t) {
                    return fail("topic-reference", format!("{} names unknown {t}", n.node_id));
                }
            }
            let words = word_count(&n.summary);
            if words == 0 || words > self.summary_word_limit {
                return fail(
                    "summary-word-limit",
                    format!("{} has a {words}-word summary", n.node_id),
                );
            }
            match &n.origin {
                NodeOrigin::AiGenerated { quote, .. } if quote.trim().is_empty() => {
                    return fail("generated-node-provenance", format!("{} has no quote", n.node_id));
                }
                NodeOrigin::UserCreated { .. } if n.location.is_palette() => {
                    return fail("generated-node-provenance", format!("{} is a user node in the palette", n.node_id));
                }
                _ => {}
            }
            if let (Some(t), true) = (n.topic_id, n.location.is_palette()) {
                if self.merged_topics.contains(&t) {
                    return fail("merged-topic-palette", format!("{} still waits in the palette", n.node_id));
                }
            }
        }
        Ok(())
    }

    fn check_topics(&self) -> Result<(), InvariantViolation> {
        let open = self.topics.iter().filter(|t| t.status == TopicStatus::Open).count();
        if open > 1 {
            return fail("single-open-topic", format!("{open} topics are open"));
        }
        if let Some(pos) = self.topics.iter().position(|t| t.status == TopicStatus::Open) {
            if pos + 1 != self.topics.len() {
                return fail("single-open-topic", "the open topic is not the latest");
            }
        }
        for (i, t) in self.topics.iter().enumerate() {
            if t.first_turn_seq > t.last_turn_seq {
                return fail("topic-ranges", format!("{} ends before it starts", t.topic_id));
            }
            if i > 0 {
                let prev = &self.topics[i - 1];
                if t.first_turn_seq <= prev.last_turn_seq || t.topic_id.0 <= prev.topic_id.0 {
                    return fail("topic-ranges", format!("{} overlaps {}", t.topic_id, prev.topic_id));
                }
            }
            if self.merged_topics.contains(&t.topic_id) && t.status != TopicStatus::Closed {
                return fail("topic-ranges", format!("{} merged while open", t.topic_id));
            }
        }
        for id in &self.merged_topics {
            if !self.topics.iter().any(|t| t.topic_id == *id) {
                return fail("topic-reference", format!("merged {id} does not exist"));
            }
        }
        Ok(())
    }

    fn check_mode_separation(&self) -> Result<(), InvariantViolation> {
        if self.mode != Mode::HumanMap {
            return Ok(());
        }
        if let Some(l) = self.links.values().find(|l| l.created_by == Actor::Ai) {
            return fail("mode-separation", format!("{} was generated in Human-Map", l.link_id));
        }
        if let Some(t) = self.merged_topics.iter().next() {
            return fail("mode-separation", format!("{t} was merged in Human-Map"));
        }
        Ok(())
    }

    fn check_generated_forest(&self) -> Result<(), InvariantViolation> {
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for l in self.links.values().filter(|l| l.created_by == Actor::Ai) {
            if parent.insert(l.from, l.to).is_some() {
                return fail("generated-forest", format!("{} has two generated parents", l.from));
            }
        }
        for &start in parent.keys() {
            let mut seen = BTreeSet::new();
            let mut at = start;
            while let Some(&next) = parent.get(&at) {
                if !seen.insert(at) {
                    return fail("generated-forest", format!("cycle through {start}"));
                }
                at = next;
            }
        }
        Ok(())
    }
}
