//! Layered layout for generated sub-maps.
//!
//! A sub-map is a forest: every node has at most one outgoing link, pointing
//! at its parent. Roots go in the leftmost column and each link moves one
//! column right. Rows follow a depth-first walk with children in creation
//! order; a node shares the row of its first child. The whole block is
//! placed below the existing canvas content.

use crate::types::{NodeId, Point};
use std::collections::{BTreeMap, BTreeSet};

pub const COLUMN_SPACING: f64 = 240.0;
pub const ROW_SPACING: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn of(points: impl IntoIterator<Item = Point>) -> Option<Self> {
        points.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => BoundingBox {
                    min_x: p.x,
                    min_y: p.y,
                    max_x: p.x,
                    max_y: p.y,
                },
                Some(b) => BoundingBox {
                    min_x: b.min_x.min(p.x),
                    min_y: b.min_y.min(p.y),
                    max_x: b.max_x.max(p.x),
                    max_y: b.max_y.max(p.y),
                },
            })
        })
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min_x..=self.max_x).contains(&p.x) && (self.min_y..=self.max_y).contains(&p.y)
    }
}

/// Top-left corner of a new block: the origin on an empty canvas, otherwise
/// one row below the current content, aligned with its left edge.
pub fn anchor_below(canvas: Option<BoundingBox>) -> Point {
    match canvas {
        None => Point::new(0.0, 0.0),
        Some(b) => Point::new(b.min_x, b.max_y + ROW_SPACING),
    }
}

/// Positions for `order` (nodes in creation order) given `(from, to)` links.
///
/// Links whose endpoints are not both in `order` are ignored. The caller
/// guarantees out-degree at most one and no cycles.
pub fn auto_layout(order: &[NodeId], links: &[(NodeId, NodeId)], anchor: Point) -> Vec<(NodeId, Point)> {
    let members: BTreeSet<NodeId> = order.iter().copied().collect();
    let rank: BTreeMap<NodeId, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for &(from, to) in links {
        if members.contains(&from) && members.contains(&to) && from != to {
            parent.entry(from).or_insert(to);
        }
    }
    let mut children: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for (&child, &p) in &parent {
        children.entry(p).or_default().push(child);
    }
    for list in children.values_mut() {
        list.sort_by_key(|n| rank[n]);
    }

    let mut cells: BTreeMap<NodeId, (usize, usize)> = BTreeMap::new();
    let mut row = 0usize;
    let mut first_root = true;
    for &root in order.iter().filter(|n| !parent.contains_key(n)) {
        if !first_root {
            row += 1;
        }
        first_root = false;
        // Iterative depth-first walk: (node, column, is_first_child).
        let mut stack = vec![(root, 0usize, true)];
        while let Some((node, col, first)) = stack.pop() {
            if !first {
                row += 1;
            }
            cells.insert(node, (col, row));
            if let Some(kids) = children.get(&node) {
                for (i, &kid) in kids.iter().enumerate().rev() {
                    stack.push((kid, col + 1, i == 0));
                }
            }
        }
    }

    order
        .iter()
        .filter_map(|n| {
            let (col, r) = cells.get(n)?;
            Some((
                *n,
                Point::new(
                    anchor.x + *col as f64 * COLUMN_SPACING,
                    anchor.y + *r as f64 * ROW_SPACING,
                ),
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u64]) -> Vec<NodeId> {
        v.iter().map(|i| NodeId(*i)).collect()
    }

    #[test]
    fn single_node_sits_at_anchor() {
        let anchor = Point::new(10.0, 20.0);
        assert_eq!(auto_layout(&ids(&[1]), &[], anchor), vec![(NodeId(1), anchor)]);
    }

    #[test]
    fn chain_is_three_columns_one_row() {
        // A(1) -> B(2) -> C(3)
        let links = [(NodeId(1), NodeId(2)), (NodeId(2), NodeId(3))];
        let out = auto_layout(&ids(&[1, 2, 3]), &links, Point::new(0.0, 0.0));
        let ys: BTreeSet<u64> = out.iter().map(|(_, p)| p.y as u64).collect();
        let xs: Vec<f64> = out.iter().map(|(_, p)| p.x).collect();
        assert_eq!(ys.len(), 1);
        assert_eq!(xs, vec![2.0 * COLUMN_SPACING, COLUMN_SPACING, 0.0]);
    }

    #[test]
    fn siblings_stack_in_creation_order() {
        // Q(1) answered by I(2) and I(4); P(3) supports I(2).
        let links = [
            (NodeId(2), NodeId(1)),
            (NodeId(3), NodeId(2)),
            (NodeId(4), NodeId(1)),
        ];
        let out: BTreeMap<NodeId, Point> =
            auto_layout(&ids(&[1, 2, 3, 4]), &links, Point::new(0.0, 0.0)).into_iter().collect();
        assert_eq!(out[&NodeId(1)], Point::new(0.0, 0.0));
        assert_eq!(out[&NodeId(2)], Point::new(COLUMN_SPACING, 0.0));
        assert_eq!(out[&NodeId(3)], Point::new(2.0 * COLUMN_SPACING, 0.0));
        assert_eq!(out[&NodeId(4)], Point::new(COLUMN_SPACING, ROW_SPACING));
    }

    #[test]
    fn layout_is_deterministic_and_distinct() {
        let order = ids(&[5, 3, 9, 1, 7]);
        let links = [(NodeId(3), NodeId(5)), (NodeId(1), NodeId(9))];
        let a = auto_layout(&order, &links, Point::new(0.0, 300.0));
        let b = auto_layout(&order, &links, Point::new(0.0, 300.0));
        assert_eq!(a, b);
        let cells: BTreeSet<(i64, i64)> = a.iter().map(|(_, p)| (p.x as i64, p.y as i64)).collect();
        assert_eq!(cells.len(), order.len());
    }

    #[test]
    fn anchor_goes_below_content() {
        assert_eq!(anchor_below(None), Point::new(0.0, 0.0));
        let b = BoundingBox::of([Point::new(-5.0, 2.0), Point::new(40.0, 90.0)]);
        assert_eq!(anchor_below(b), Point::new(-5.0, 90.0 + ROW_SPACING));
    }
}
