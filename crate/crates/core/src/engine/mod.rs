//! The authoritative per-session map state.
//!
//! [`MapState`] holds the palette, the canvas, the links and the topic
//! timeline, and is mutated only through the methods here. Every mutation
//! validates fully before touching anything, so a rejected call leaves the
//! state exactly as it was. The same methods are used by the live session,
//! by log replay and by client mirrors, which is what keeps the three in
//! lockstep.

pub mod export;
pub mod invariants;
pub mod layout;

use crate::canonical::{from_canonical, to_canonical};
use crate::pipeline::parse::validate_links;
use crate::pipeline::{LinkDraft, NodeDraft, PipelineError, TopicDecision};
use crate::types::{
    word_count, Actor, IbisTag, Link, LinkId, Location, MapOp, Mode, Node, NodeId, NodeOrigin,
    OpId, OpKind, Placement, SpeakerId, Topic, TopicId, TopicStatus, TurnId, TurnRef,
    TOPIC_LABEL_WORD_LIMIT,
};
use layout::{anchor_below, auto_layout, BoundingBox};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub use invariants::InvariantViolation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("target was deleted: {0}")]
    StaleTarget(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("not allowed in this mode: {0}")]
    WrongMode(String),
    #[error("expected server seq {expected}, got {got}")]
    SeqMismatch { expected: u64, got: u64 },
}

impl MapError {
    pub fn code(&self) -> &'static str {
        match self {
            MapError::UnknownEntity(_) => "UnknownEntity",
            MapError::StaleTarget(_) => "StaleTarget",
            MapError::InvalidPayload(_) => "InvalidPayload",
            MapError::WrongMode(_) => "WrongMode",
            MapError::SeqMismatch { .. } => "SeqMismatch",
        }
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// Result of applying a topic decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicChange {
    /// The open topic after the decision.
    pub topic: Topic,
    /// The topic the decision closed, if any.
    pub closed: Option<Topic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapState {
    mode: Mode,
    summary_word_limit: usize,
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeMap<LinkId, Link>,
    palette_order: Vec<NodeId>,
    topics: Vec<Topic>,
    next_server_seq: u64,
    next_node_id: u64,
    next_link_id: u64,
    next_topic_id: u64,
    deleted_links: BTreeSet<LinkId>,
    unannotated_turns: BTreeSet<TurnId>,
    merged_topics: BTreeSet<TopicId>,
}

fn unknown(what: impl std::fmt::Display) -> MapError {
    MapError::UnknownEntity(what.to_string())
}

fn invalid(what: impl Into<String>) -> MapError {
    MapError::InvalidPayload(what.into())
}

impl MapState {
    pub fn new(mode: Mode, summary_word_limit: usize) -> Self {
        MapState {
            mode,
            summary_word_limit,
            nodes: BTreeMap::new(),
            links: BTreeMap::new(),
            palette_order: Vec::new(),
            topics: Vec::new(),
            next_server_seq: 1,
            next_node_id: 1,
            next_link_id: 1,
            next_topic_id: 1,
            deleted_links: BTreeSet::new(),
            unannotated_turns: BTreeSet::new(),
            merged_topics: BTreeSet::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn summary_word_limit(&self) -> usize {
        self.summary_word_limit
    }

    /// All nodes, including deleted ones.
    pub fn nodes(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn live_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values().filter(|n| !n.location.is_deleted())
    }

    pub fn links(&self) -> &BTreeMap<LinkId, Link> {
        &self.links
    }

    pub fn palette_order(&self) -> &[NodeId] {
        &self.palette_order
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn open_topic(&self) -> Option<&Topic> {
        self.topics.iter().find(|t| t.status == TopicStatus::Open)
    }

    pub fn topic(&self, id: TopicId) -> Option<&Topic> {
        self.topics.iter().find(|t| t.topic_id == id)
    }

    pub fn unannotated_turns(&self) -> &BTreeSet<TurnId> {
        &self.unannotated_turns
    }

    pub fn merged_topics(&self) -> &BTreeSet<TopicId> {
        &self.merged_topics
    }

    /// Seq of the last applied record; zero on a fresh state.
    pub fn last_seq(&self) -> u64 {
        self.next_server_seq - 1
    }

    pub fn next_server_seq(&self) -> u64 {
        self.next_server_seq
    }

    pub fn canvas_bounds(&self) -> Option<BoundingBox> {
        BoundingBox::of(self.nodes.values().filter_map(|n| n.location.canvas_position()))
    }

    /// Checks that `seq` is the next server seq.
    pub fn expect_seq(&self, seq: u64) -> Result<(), MapError> {
        if seq == self.next_server_seq {
            Ok(())
        } else {
            Err(MapError::SeqMismatch {
                expected: self.next_server_seq,
                got: seq,
            })
        }
    }

    /// Consumes a seq for a record that does not touch the map.
    pub fn advance_seq(&mut self, seq: u64) -> Result<(), MapError> {
        self.expect_seq(seq)?;
        self.next_server_seq += 1;
        Ok(())
    }

    fn live_node(&self, id: NodeId) -> Result<&Node, MapError> {
        let node = self.nodes.get(&id).ok_or_else(|| unknown(id))?;
        if node.location.is_deleted() {
            return Err(MapError::StaleTarget(id.to_string()));
        }
        Ok(node)
    }

    fn existing_link(&self, id: LinkId) -> Result<&Link, MapError> {
        match self.links.get(&id) {
            Some(link) => Ok(link),
            None if self.deleted_links.contains(&id) => Err(MapError::StaleTarget(id.to_string())),
            None => Err(unknown(id)),
        }
    }

    fn check_summary(&self, summary: &str) -> Result<(), MapError> {
        let words = word_count(summary);
        if words == 0 {
            return Err(invalid("empty summary"));
        }
        if words > self.summary_word_limit {
            return Err(invalid(format!(
                "summary has {words} words, limit is {}",
                self.summary_word_limit
            )));
        }
        Ok(())
    }

    fn has_link_between(&self, from: NodeId, to: NodeId) -> bool {
        self.links.values().any(|l| l.from == from && l.to == to)
    }

    fn check_assigned<T: PartialEq + std::fmt::Display>(
        given: Option<T>,
        next: T,
        what: &str,
    ) -> Result<(), MapError> {
        match given {
            Some(id) if id != next => Err(invalid(format!("{what} {id} is not the next id {next}"))),
            _ => Ok(()),
        }
    }

    /// Applies a user operation or an already-accepted operation from the
    /// log. Assigns the server seq and any new ids; the returned op carries
    /// them.
    pub fn apply_op(&mut self, mut op: MapOp) -> Result<MapOp, MapError> {
        let seq = op.server_seq.unwrap_or(self.next_server_seq);
        self.expect_seq(seq)?;
        self.validate_op(&op)?;

        match &mut op.kind {
            OpKind::CreateNode {
                node_id,
                tag,
                summary,
                position,
            } => {
                let Actor::User { user_id } = &op.actor else {
                    unreachable!("validated");
                };
                let id = NodeId(self.next_node_id);
                self.next_node_id += 1;
                *node_id = Some(id);
                self.nodes.insert(
                    id,
                    Node {
                        node_id: id,
                        tag: *tag,
                        summary: summary.clone(),
                        origin: NodeOrigin::UserCreated {
                            user_id: user_id.clone(),
                        },
                        speaker_id: SpeakerId::from(user_id),
                        location: Location::Canvas {
                            position: *position,
                        },
                        topic_id: None,
                        flagged: false,
                    },
                );
            }
            OpKind::EditNode {
                node_id,
                summary,
                tag,
            } => {
                let node = self.nodes.get_mut(node_id).expect("validated");
                if let Some(s) = summary {
                    node.summary = s.clone();
                }
                if let Some(t) = tag {
                    node.tag = *t;
                }
                node.flagged = false;
            }
            OpKind::DeleteNode { node_id } => {
                let id = *node_id;
                self.nodes.get_mut(&id).expect("validated").location = Location::Deleted;
                self.palette_order.retain(|n| *n != id);
                let incident: Vec<LinkId> = self
                    .links
                    .values()
                    .filter(|l| l.from == id || l.to == id)
                    .map(|l| l.link_id)
                    .collect();
                for link_id in incident {
                    self.links.remove(&link_id);
                    self.deleted_links.insert(link_id);
                }
            }
            OpKind::MoveNode { node_id, position } => {
                let id = *node_id;
                self.nodes.get_mut(&id).expect("validated").location = Location::Canvas {
                    position: *position,
                };
                self.palette_order.retain(|n| *n != id);
            }
            OpKind::CreateLink {
                link_id,
                from,
                to,
                label,
            } => {
                let id = LinkId(self.next_link_id);
                self.next_link_id += 1;
                *link_id = Some(id);
                self.links.insert(
                    id,
                    Link {
                        link_id: id,
                        from: *from,
                        to: *to,
                        label: label.clone(),
                        created_by: op.actor.clone(),
                    },
                );
            }
            OpKind::EditLink { link_id, label } => {
                self.links.get_mut(link_id).expect("validated").label = label.clone();
            }
            OpKind::DeleteLink { link_id } => {
                self.links.remove(link_id);
                self.deleted_links.insert(*link_id);
            }
            OpKind::MergeGeneratedMap {
                topic_id,
                placements,
                links,
                flagged,
            } => {
                let moved: BTreeSet<NodeId> = placements.iter().map(|p| p.node_id).collect();
                for p in placements.iter() {
                    let node = self.nodes.get_mut(&p.node_id).expect("validated");
                    node.location = Location::Canvas {
                        position: p.position,
                    };
                    if *flagged {
                        node.flagged = true;
                    }
                }
                self.palette_order.retain(|n| !moved.contains(n));
                for link in links.iter() {
                    self.next_link_id = link.link_id.0 + 1;
                    self.links.insert(link.link_id, link.clone());
                }
                self.merged_topics.insert(*topic_id);
            }
        }

        op.server_seq = Some(seq);
        self.next_server_seq += 1;
        Ok(op)
    }

    /// Alias of [`MapState::apply_op`] for operations submitted by users.
    pub fn apply_user_op(&mut self, op: MapOp) -> Result<MapOp, MapError> {
        if op.actor == Actor::Ai {
            return Err(invalid("user operations must carry a user actor"));
        }
        self.apply_op(op)
    }

    fn validate_op(&self, op: &MapOp) -> Result<(), MapError> {
        let is_ai = op.actor == Actor::Ai;
        match &op.kind {
            OpKind::CreateNode {
                node_id, summary, ..
            } => {
                if is_ai {
                    return Err(invalid("generated nodes enter through the palette"));
                }
                self.check_summary(summary)?;
                Self::check_assigned(*node_id, NodeId(self.next_node_id), "node id")?;
            }
            OpKind::EditNode {
                node_id,
                summary,
                tag,
            } => {
                if summary.is_none() && tag.is_none() {
                    return Err(invalid("edit changes nothing"));
                }
                self.live_node(*node_id)?;
                if let Some(s) = summary {
                    self.check_summary(s)?;
                }
            }
            OpKind::DeleteNode { node_id } => {
                self.live_node(*node_id)?;
            }
            OpKind::MoveNode { node_id, .. } => {
                self.live_node(*node_id)?;
            }
            OpKind::CreateLink {
                link_id, from, to, ..
            } => {
                if is_ai && self.mode == Mode::HumanMap {
                    return Err(MapError::WrongMode("generated links in Human-Map".into()));
                }
                if from == to {
                    return Err(invalid("a link cannot connect a node to itself"));
                }
                self.live_node(*from)?;
                self.live_node(*to)?;
                if self.has_link_between(*from, *to) {
                    return Err(invalid(format!("link {from} -> {to} already exists")));
                }
                Self::check_assigned(*link_id, LinkId(self.next_link_id), "link id")?;
            }
            OpKind::EditLink { link_id, .. } | OpKind::DeleteLink { link_id } => {
                self.existing_link(*link_id)?;
            }
            OpKind::MergeGeneratedMap {
                topic_id,
                placements,
                links,
                ..
            } => {
                if self.mode == Mode::HumanMap {
                    return Err(MapError::WrongMode("generated maps in Human-Map".into()));
                }
                if !is_ai {
                    return Err(invalid("only the assistant merges generated maps"));
                }
                self.validate_merge(*topic_id, placements, links)?;
            }
        }
        Ok(())
    }

    fn validate_merge(
        &self,
        topic_id: TopicId,
        placements: &[Placement],
        links: &[Link],
    ) -> Result<(), MapError> {
        let topic = self.topic(topic_id).ok_or_else(|| unknown(topic_id))?;
        if topic.status != TopicStatus::Closed {
            return Err(invalid(format!("{topic_id} is still open")));
        }
        if self.merged_topics.contains(&topic_id) {
            return Err(invalid(format!("{topic_id} was already merged")));
        }
        let expected: BTreeSet<NodeId> = self
            .palette_order
            .iter()
            .copied()
            .filter(|id| self.nodes[id].topic_id == Some(topic_id))
            .collect();
        let placed: BTreeSet<NodeId> = placements.iter().map(|p| p.node_id).collect();
        if placed.len() != placements.len() || placed != expected {
            return Err(invalid(format!(
                "placements must cover exactly the palette nodes of {topic_id}"
            )));
        }

        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut pairs: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
        for (i, link) in links.iter().enumerate() {
            let want = LinkId(self.next_link_id + i as u64);
            if link.link_id != want {
                return Err(invalid(format!("link id {} is not the next id {want}", link.link_id)));
            }
            if link.created_by != Actor::Ai {
                return Err(invalid("merged links must be generated"));
            }
            if link.from == link.to {
                return Err(invalid("a link cannot connect a node to itself"));
            }
            for end in [link.from, link.to] {
                let node = self.live_node(end)?;
                if node.topic_id != Some(topic_id) {
                    return Err(invalid(format!("{end} is not part of {topic_id}")));
                }
            }
            if self.has_link_between(link.from, link.to) || !pairs.insert((link.from, link.to)) {
                return Err(invalid(format!("link {} -> {} already exists", link.from, link.to)));
            }
            if parent.insert(link.from, link.to).is_some() {
                return Err(invalid(format!("{} is the source of two generated links", link.from)));
            }
        }
        for &start in parent.keys() {
            let mut seen = BTreeSet::new();
            let mut at = start;
            while let Some(&next) = parent.get(&at) {
                if !seen.insert(at) {
                    return Err(invalid("generated links form a cycle"));
                }
                at = next;
            }
        }
        Ok(())
    }

    /// Builds and applies the merge of a closed topic's palette nodes.
    ///
    /// `keyed` maps the batch keys sent to link identification to node ids.
    /// A rejected batch (here or upstream) still moves the nodes, unlinked
    /// and flagged; the rejection is returned alongside the applied op.
    pub fn close_topic_and_merge(
        &mut self,
        topic_id: TopicId,
        keyed: &[(u64, NodeId)],
        links: Result<Vec<LinkDraft>, PipelineError>,
        op_id: OpId,
    ) -> Result<(MapOp, Option<PipelineError>), MapError> {
        let (op, rejection) = self.plan_merge(topic_id, keyed, links, op_id)?;
        let applied = self.apply_op(op)?;
        Ok((applied, rejection))
    }

    /// Builds the merge op [`MapState::close_topic_and_merge`] would apply,
    /// without applying it.
    pub fn plan_merge(
        &self,
        topic_id: TopicId,
        keyed: &[(u64, NodeId)],
        links: Result<Vec<LinkDraft>, PipelineError>,
        op_id: OpId,
    ) -> Result<(MapOp, Option<PipelineError>), MapError> {
        if self.mode != Mode::AiMap {
            return Err(MapError::WrongMode("generated maps in Human-Map".into()));
        }
        let keys: BTreeSet<u64> = keyed.iter().map(|(k, _)| *k).collect();
        let by_key: BTreeMap<u64, NodeId> = keyed.iter().copied().collect();
        let (drafts, rejection) = match links.and_then(|l| validate_links(l, &keys)) {
            Ok(drafts) => (drafts, None),
            Err(err) => (Vec::new(), Some(err)),
        };

        let usable = |id: NodeId| {
            self.nodes
                .get(&id)
                .is_some_and(|n| !n.location.is_deleted() && n.topic_id == Some(topic_id))
        };
        let mut resolved: Vec<(NodeId, NodeId, String)> = Vec::new();
        for d in drafts {
            let (Some(&from), Some(&to)) = (by_key.get(&d.from_key), by_key.get(&d.to_key)) else {
                continue;
            };
            // Users may have deleted or linked these nodes since the request.
            if usable(from) && usable(to) && !self.has_link_between(from, to) {
                resolved.push((from, to, d.label));
            }
        }

        let order: Vec<NodeId> = self
            .palette_order
            .iter()
            .copied()
            .filter(|id| self.nodes[id].topic_id == Some(topic_id))
            .collect();
        let pairs: Vec<(NodeId, NodeId)> = resolved.iter().map(|(f, t, _)| (*f, *t)).collect();
        let placements = auto_layout(&order, &pairs, anchor_below(self.canvas_bounds()))
            .into_iter()
            .map(|(node_id, position)| Placement { node_id, position })
            .collect();
        let links = resolved
            .into_iter()
            .enumerate()
            .map(|(i, (from, to, label))| Link {
                link_id: LinkId(self.next_link_id + i as u64),
                from,
                to,
                label,
                created_by: Actor::Ai,
            })
            .collect();

        let op = MapOp {
            op_id,
            actor: Actor::Ai,
            kind: OpKind::MergeGeneratedMap {
                topic_id,
                placements,
                links,
                flagged: rejection.is_some(),
            },
            server_seq: None,
        };
        self.validate_op(&op)?;
        Ok((op, rejection))
    }

    /// Turns validated drafts into palette nodes under the open topic.
    /// Does not consume a seq.
    pub fn add_ai_nodes(&mut self, turn: &TurnRef, drafts: &[NodeDraft]) -> Result<Vec<Node>, MapError> {
        let topic_id = self.open_topic().map(|t| t.topic_id);
        let nodes: Vec<Node> = drafts
            .iter()
            .enumerate()
            .map(|(i, d)| Node {
                node_id: NodeId(self.next_node_id + i as u64),
                tag: d.tag,
                summary: d.summary.clone(),
                origin: NodeOrigin::AiGenerated {
                    turn_id: turn.turn_id,
                    quote: d.quote.clone(),
                },
                speaker_id: turn.speaker_id.clone(),
                location: Location::Palette {
                    chrono_index: turn.turn_seq,
                },
                topic_id,
                flagged: d.degraded,
            })
            .collect();
        self.insert_generated_nodes(&nodes)?;
        Ok(nodes)
    }

    /// Inserts generated nodes exactly as given, e.g. from a broadcast.
    /// Nodes land in the palette at their chronological position.
    pub fn insert_generated_nodes(&mut self, nodes: &[Node]) -> Result<(), MapError> {
        let open = self.open_topic().map(|t| t.topic_id);
        for (i, node) in nodes.iter().enumerate() {
            let want = NodeId(self.next_node_id + i as u64);
            if node.node_id != want {
                return Err(invalid(format!("node id {} is not the next id {want}", node.node_id)));
            }
            match &node.origin {
                NodeOrigin::AiGenerated { quote, .. } if !quote.trim().is_empty() => {}
                _ => return Err(invalid("generated nodes need a source quote")),
            }
            if !node.location.is_palette() {
                return Err(invalid("generated nodes start in the palette"));
            }
            if node.topic_id != open {
                return Err(invalid("generated nodes belong to the open topic"));
            }
            self.check_summary(&node.summary)?;
        }
        for node in nodes {
            let Location::Palette { chrono_index } = node.location else {
                unreachable!("validated");
            };
            let at = self
                .palette_order
                .iter()
                .position(|id| match self.nodes[id].location {
                    Location::Palette { chrono_index: c } => c > chrono_index,
                    _ => false,
                })
                .unwrap_or(self.palette_order.len());
            self.palette_order.insert(at, node.node_id);
            self.nodes.insert(node.node_id, node.clone());
            self.next_node_id = node.node_id.0 + 1;
        }
        Ok(())
    }

    /// Applies a topic decision for `turn`. Does not consume a seq.
    pub fn apply_topic_decision(
        &mut self,
        turn: &TurnRef,
        decision: &TopicDecision,
        degraded: bool,
    ) -> Result<TopicChange, MapError> {
        if let Some(last) = self.topics.last() {
            if turn.turn_seq <= last.last_turn_seq {
                return Err(invalid(format!(
                    "turn {} is not after {} (ends at turn {})",
                    turn.turn_seq, last.topic_id, last.last_turn_seq
                )));
            }
        }
        let label = decision.label();
        let words = word_count(label);
        if words == 0 || words > TOPIC_LABEL_WORD_LIMIT {
            return Err(invalid(format!("topic label has {words} words")));
        }

        if let (TopicDecision::Continuation { revised_label }, Some(open)) = (
            decision,
            self.topics.iter_mut().find(|t| t.status == TopicStatus::Open),
        ) {
            open.label = revised_label.clone();
            open.last_turn_seq = turn.turn_seq;
            open.degraded |= degraded;
            return Ok(TopicChange {
                topic: open.clone(),
                closed: None,
            });
        }

        let mut closed = None;
        if let Some(open) = self.topics.iter_mut().find(|t| t.status == TopicStatus::Open) {
            open.status = TopicStatus::Closed;
            closed = Some(open.clone());
        }
        let topic = Topic {
            topic_id: TopicId(self.next_topic_id),
            label: label.to_string(),
            first_turn_seq: turn.turn_seq,
            last_turn_seq: turn.turn_seq,
            status: TopicStatus::Open,
            degraded,
        };
        self.next_topic_id += 1;
        self.topics.push(topic.clone());
        Ok(TopicChange { topic, closed })
    }

    /// A turn whose topic could not be classified stays with the open topic.
    pub fn apply_topic_fault(&mut self, turn: &TurnRef) -> Result<Option<Topic>, MapError> {
        if let Some(last) = self.topics.last() {
            if turn.turn_seq <= last.last_turn_seq {
                return Err(invalid(format!("turn {} is not after the open topic", turn.turn_seq)));
            }
        }
        Ok(self
            .topics
            .iter_mut()
            .find(|t| t.status == TopicStatus::Open)
            .map(|open| {
                open.last_turn_seq = turn.turn_seq;
                open.clone()
            }))
    }

    pub fn mark_unannotated(&mut self, turn_id: TurnId) {
        self.unannotated_turns.insert(turn_id);
    }

    /// Non-deleted nodes of a topic, wherever they sit.
    pub fn nodes_for_topic(&self, topic_id: TopicId) -> Result<BTreeSet<NodeId>, MapError> {
        self.topic(topic_id).ok_or_else(|| unknown(topic_id))?;
        Ok(self
            .live_nodes()
            .filter(|n| n.topic_id == Some(topic_id))
            .map(|n| n.node_id)
            .collect())
    }

    /// Palette nodes of `topic_id` in chronological order.
    pub fn palette_nodes_of(&self, topic_id: TopicId) -> Vec<&Node> {
        self.palette_order
            .iter()
            .map(|id| &self.nodes[id])
            .filter(|n| n.topic_id == Some(topic_id))
            .collect()
    }

    /// Canonical bytes of the whole state.
    pub fn snapshot(&self) -> Vec<u8> {
        to_canonical(self).expect("map state always serializes")
    }

    pub fn restore(bytes: &[u8]) -> Result<Self, SnapshotError> {
        let state: MapState =
            from_canonical(bytes).map_err(|e| SnapshotError::CorruptSnapshot(e.to_string()))?;
        state
            .check_invariants()
            .map_err(|v| SnapshotError::CorruptSnapshot(v.to_string()))?;
        Ok(state)
    }

    /// Count of nodes per category among live nodes.
    pub fn tag_counts(&self) -> BTreeMap<IbisTag, usize> {
        let mut counts = BTreeMap::new();
        for n in self.live_nodes() {
            *counts.entry(n.tag).or_insert(0) += 1;
        }
        counts
    }
}
