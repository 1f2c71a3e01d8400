//! Read-only exports of a map: canonical JSON and Graphviz DOT.

use super::MapState;
use crate::canonical::{to_canonical, CanonicalError};
use crate::types::{Link, Location, Node, Topic};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// The exported view: live nodes, links and the topic timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapExport {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub topics: Vec<Topic>,
}

impl MapExport {
    pub fn of(state: &MapState) -> Self {
        MapExport {
            nodes: state.live_nodes().cloned().collect(),
            links: state.links().values().cloned().collect(),
            topics: state.topics().to_vec(),
        }
    }

    pub fn to_canonical(&self) -> Result<Vec<u8>, CanonicalError> {
        to_canonical(self)
    }

    /// One summary line, e.g. `nodes=12 links=7 topics=3`.
    pub fn summary_line(&self) -> String {
        format!(
            "nodes={} links={} topics={}",
            self.nodes.len(),
            self.links.len(),
            self.topics.len()
        )
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph map {\n  rankdir=RL;\n  node [shape=box];\n");
        for n in &self.nodes {
            let style = match n.location {
                Location::Palette { .. } => ", style=dashed",
                _ => "",
            };
            let pos = n
                .location
                .canvas_position()
                .map(|p| format!(", pos=\"{:.3},{:.3}!\"", p.x, 0.0 - p.y))
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}: {}\"{}{}];",
                n.node_id,
                n.tag.as_str(),
                escape(&n.summary),
                style,
                pos
            );
        }
        for l in &self.links {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                l.from,
                l.to,
                escape(&l.label)
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}
