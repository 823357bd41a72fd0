//! Graphviz export of truncations.

use std::fmt::Write as _;

use sibling_core::presentation::TreePresentation;

/// The ball of depth `depth` as an undirected DOT graph. Nodes are numbered
/// in ball order and labelled with their vertex names, so the output is
/// byte-for-byte stable.
pub fn truncation_dot(name: &str, p: &TreePresentation, depth: u64) -> String {
    let ball = p.ball(depth);
    let mut out = String::new();
    let _ = writeln!(out, "graph \"{name} depth {depth}\" {{");
    for (i, &v) in ball.vertices.iter().enumerate() {
        let _ = writeln!(out, "  n{i} [label=\"{}\"];", p.vertex_name(v));
    }
    for i in 0..ball.tree.len() {
        if let Some(parent) = ball.tree.parent(i) {
            let _ = writeln!(out, "  n{parent} -- n{i};");
        }
    }
    out.push_str("}\n");
    out
}
