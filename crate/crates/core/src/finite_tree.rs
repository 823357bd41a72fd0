//! Finite rooted trees: canonical codes, isomorphism and embedding search.
//!
//! A [`FiniteRootedTree`] stores a parent array over vertex ids `0..len`.
//! Vertex ids are local to a tree value. Children order is kept (it fixes the
//! preorder numbering used by the parenthesis encoding) but it is never
//! significant for isomorphism or embeddability.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{max_bipartite_matching, saturates_left};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("a tree needs at least one vertex")]
    Empty,
    #[error("no root: every vertex has a parent")]
    NoRoot,
    #[error("more than one root ({0} and {1})")]
    MultipleRoots(usize, usize),
    #[error("parent {parent} of vertex {vertex} is out of range")]
    ParentOutOfRange { vertex: usize, parent: usize },
    #[error("vertex {0} is not reachable from the root")]
    Unreachable(usize),
    #[error("edge list does not form a tree on {0} vertices")]
    NotATree(usize),
    #[error("bad parenthesis encoding at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiniteRootedTree {
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

/// AHU canonical code in balanced-parenthesis form. Two rooted trees are
/// isomorphic exactly when their codes are equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalCode(String);

impl CanonicalCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_tree(&self) -> FiniteRootedTree {
        // Codes are produced by `canonical_code`, so they always parse.
        FiniteRootedTree::parse(&self.0).expect("canonical codes are well formed")
    }
}

impl fmt::Display for CanonicalCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CanonicalCode {
    type Err = TreeError;

    /// Parses a parenthesis string and canonicalizes it.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(FiniteRootedTree::parse(s)?.canonical_code())
    }
}

impl FiniteRootedTree {
    pub fn singleton() -> Self {
        Self {
            root: 0,
            parent: vec![None],
            children: vec![Vec::new()],
        }
    }

    /// Path with `edges` edges, rooted at an end. Vertex `i` is at depth `i`.
    pub fn path(edges: usize) -> Self {
        let parent = (0..=edges).map(|i| i.checked_sub(1)).collect();
        Self::from_parents(parent).expect("paths are trees")
    }

    /// Star with `leaves` leaves, rooted at the center (vertex 0).
    pub fn star(leaves: usize) -> Self {
        let parent = (0..=leaves).map(|i| if i == 0 { None } else { Some(0) }).collect();
        Self::from_parents(parent).expect("stars are trees")
    }

    pub fn from_parents(parent: Vec<Option<usize>>) -> Result<Self, TreeError> {
        let n = parent.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        let mut root = None;
        let mut children = vec![Vec::new(); n];
        for (v, p) in parent.iter().enumerate() {
            match *p {
                None => match root {
                    None => root = Some(v),
                    Some(r) => return Err(TreeError::MultipleRoots(r, v)),
                },
                Some(p) if p >= n => return Err(TreeError::ParentOutOfRange { vertex: v, parent: p }),
                Some(p) => children[p].push(v),
            }
        }
        let root = root.ok_or(TreeError::NoRoot)?;
        let tree = Self { root, parent, children };
        let reached = tree.bfs_order().len();
        if reached != n {
            let order = tree.bfs_order();
            let mut seen = vec![false; n];
            for v in order {
                seen[v] = true;
            }
            let missing = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(TreeError::Unreachable(missing));
        }
        Ok(tree)
    }

    /// Builds a rooted tree from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], root: usize) -> Result<Self, TreeError> {
        if n == 0 {
            return Err(TreeError::Empty);
        }
        if edges.len() + 1 != n || root >= n {
            return Err(TreeError::NotATree(n));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(TreeError::NotATree(n));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(TreeError::NotATree(n));
        }
        Self::from_parents(parent)
    }

    /// Parses the balanced-parenthesis encoding. Vertices are numbered in
    /// preorder, so `parse(t.to_paren())` reproduces `t` exactly when `t` was
    /// itself numbered in preorder.
    pub fn parse(s: &str) -> Result<Self, TreeError> {
        let bytes = s.as_bytes();
        let mut parent: Vec<Option<usize>> = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        let mut closed_root = false;
        for (pos, &b) in bytes.iter().enumerate() {
            match b {
                b'(' => {
                    if closed_root {
                        return Err(TreeError::Parse {
                            pos,
                            msg: "more than one top-level vertex".into(),
                        });
                    }
                    parent.push(stack.last().copied());
                    stack.push(parent.len() - 1);
                }
                b')' => {
                    if stack.pop().is_none() {
                        return Err(TreeError::Parse { pos, msg: "unbalanced ')'".into() });
                    }
                    if stack.is_empty() {
                        closed_root = true;
                    }
                }
                _ => {
                    return Err(TreeError::Parse {
                        pos,
                        msg: format!("unexpected character {:?}", b as char),
                    })
                }
            }
        }
        if !stack.is_empty() {
            return Err(TreeError::Parse { pos: bytes.len(), msg: "unclosed '('".into() });
        }
        if parent.is_empty() {
            return Err(TreeError::Empty);
        }
        Self::from_parents(parent)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent[v].into_iter().chain(self.children[v].iter().copied())
    }

    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(self.parent[v].is_some())
    }

    /// Single vertex.
    pub fn is_trivial(&self) -> bool {
        self.len() == 1
    }

    pub fn bfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            queue.extend(self.children[u].iter().copied());
        }
        order
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for v in self.bfs_order() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
            }
        }
        depth
    }

    /// Longest root-to-leaf distance.
    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    fn subtree_stats(&self) -> (Vec<usize>, Vec<usize>) {
        let mut size = vec![1; self.len()];
        let mut height = vec![0; self.len()];
        for v in self.bfs_order().into_iter().rev() {
            if let Some(p) = self.parent[v] {
                size[p] += size[v];
                height[p] = height[p].max(height[v] + 1);
            }
        }
        (size, height)
    }

    /// Same vertex ids, rooted at `r`.
    pub fn rerooted(&self, r: usize) -> Self {
        let mut parent = vec![None; self.len()];
        let mut seen = vec![false; self.len()];
        seen[r] = true;
        let mut queue = VecDeque::from([r]);
        while let Some(u) = queue.pop_front() {
            for w in self.neighbors(u) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(u);
                    queue.push_back(w);
                }
            }
        }
        Self::from_parents(parent).expect("rerooting keeps a tree")
    }

    /// Parenthesis encoding following stored children order.
    pub fn to_paren(&self) -> String {
        let mut out = String::with_capacity(2 * self.len());
        // Explicit stack: (vertex, next child index).
        let mut stack = vec![(self.root, 0usize)];
        out.push('(');
        while let Some((v, i)) = stack.last_mut() {
            if let Some(&c) = self.children[*v].get(*i) {
                *i += 1;
                out.push('(');
                stack.push((c, 0));
            } else {
                out.push(')');
                stack.pop();
            }
        }
        out
    }

    /// Per-vertex canonical codes of the rooted subtrees.
    fn subtree_codes(&self) -> Vec<String> {
        let mut codes = vec![String::new(); self.len()];
        for v in self.bfs_order().into_iter().rev() {
            let mut parts: Vec<&str> = self.children[v].iter().map(|&c| codes[c].as_str()).collect();
            parts.sort_unstable();
            let mut code = String::with_capacity(2 + parts.iter().map(|p| p.len()).sum::<usize>());
            code.push('(');
            for p in parts {
                code.push_str(p);
            }
            code.push(')');
            codes[v] = code;
        }
        codes
    }

    pub fn canonical_code(&self) -> CanonicalCode {
        let mut codes = self.subtree_codes();
        CanonicalCode(std::mem::take(&mut codes[self.root]))
    }

    /// The same tree renumbered in canonical preorder.
    pub fn canonical(&self) -> Self {
        self.canonical_code().to_tree()
    }
}

impl fmt::Display for FiniteRootedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_paren())
    }
}

impl FromStr for FiniteRootedTree {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

pub fn canonical_code(t: &FiniteRootedTree) -> CanonicalCode {
    t.canonical_code()
}

pub fn is_isomorphic_rooted(a: &FiniteRootedTree, b: &FiniteRootedTree) -> bool {
    a.len() == b.len() && a.canonical_code() == b.canonical_code()
}

/// Root-preserving embedding of `a` into `b`, if one exists. The returned
/// vector maps each vertex of `a` to a vertex of `b`.
///
/// Feasibility of `u ↦ v` is decided bottom-up: the children of `u` must be
/// matched injectively into the children of `v` along feasible pairs, which
/// is a bipartite matching saturating the children of `u`.
pub fn embeds_rooted(a: &FiniteRootedTree, b: &FiniteRootedTree) -> Option<Vec<usize>> {
    if a.len() > b.len() {
        return None;
    }
    let (size_a, height_a) = a.subtree_stats();
    let (size_b, height_b) = b.subtree_stats();
    let order_a = a.bfs_order();
    let order_b = b.bfs_order();
    let nb = b.len();
    let mut feasible = vec![false; a.len() * nb];
    for &u in order_a.iter().rev() {
        let cu = a.children(u);
        for &v in order_b.iter().rev() {
            let cv = b.children(v);
            if size_a[u] > size_b[v] || height_a[u] > height_b[v] || cu.len() > cv.len() {
                continue;
            }
            let adj: Vec<Vec<usize>> = cu
                .iter()
                .map(|&x| (0..cv.len()).filter(|&j| feasible[x * nb + cv[j]]).collect())
                .collect();
            feasible[u * nb + v] = saturates_left(cu.len(), cv.len(), &adj);
        }
    }
    if !feasible[a.root() * nb + b.root()] {
        return None;
    }
    let mut map = vec![usize::MAX; a.len()];
    map[a.root()] = b.root();
    let mut queue = VecDeque::from([(a.root(), b.root())]);
    while let Some((u, v)) = queue.pop_front() {
        let cu = a.children(u);
        let cv = b.children(v);
        let adj: Vec<Vec<usize>> = cu
            .iter()
            .map(|&x| (0..cv.len()).filter(|&j| feasible[x * nb + cv[j]]).collect())
            .collect();
        let matching = max_bipartite_matching(cu.len(), cv.len(), &adj);
        for (i, m) in matching.into_iter().enumerate() {
            let j = m.expect("feasibility guarantees a saturating matching");
            map[cu[i]] = cv[j];
            queue.push_back((cu[i], cv[j]));
        }
    }
    Some(map)
}

/// Adjacency-preserving injective map from `a` into `b`, roots ignored.
///
/// Any fixed vertex of `a` must land somewhere, so it suffices to anchor the
/// root of `a` at each vertex of `b` in turn.
pub fn embeds_unrooted(a: &FiniteRootedTree, b: &FiniteRootedTree) -> Option<Vec<usize>> {
    if a.len() > b.len() {
        return None;
    }
    (0..b.len()).find_map(|v| embeds_rooted(a, &b.rerooted(v)))
}

/// Checks that `map` is an injective, adjacency-preserving map from `a` into
/// `b` (and root-preserving when `rooted`).
pub fn is_embedding(a: &FiniteRootedTree, b: &FiniteRootedTree, map: &[usize], rooted: bool) -> bool {
    if map.len() != a.len() || map.iter().any(|&x| x >= b.len()) {
        return false;
    }
    let mut used = vec![false; b.len()];
    for &x in map {
        if std::mem::replace(&mut used[x], true) {
            return false;
        }
    }
    if rooted && map[a.root()] != b.root() {
        return false;
    }
    (0..a.len()).all(|v| match a.parent(v) {
        None => true,
        Some(p) => b.parent(map[v]) == Some(map[p]) || b.parent(map[p]) == Some(map[v]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> FiniteRootedTree {
        FiniteRootedTree::parse(s).unwrap()
    }

    #[test]
    fn codes_of_small_trees() {
        assert_eq!(t("()").canonical_code().as_str(), "()");
        assert_eq!(t("(())").canonical_code().as_str(), "(())");
        assert_eq!(t("((())())").canonical_code(), t("(()(()))").canonical_code());
    }

    #[test]
    fn code_length_is_twice_vertex_count() {
        let tree = t("((()())(()))");
        assert_eq!(tree.canonical_code().len(), 2 * tree.len());
    }

    #[test]
    fn path_rooted_at_end_vs_middle() {
        let end = FiniteRootedTree::path(2);
        let middle = FiniteRootedTree::star(2);
        assert!(!is_isomorphic_rooted(&end, &middle));
        assert!(is_isomorphic_rooted(&FiniteRootedTree::singleton(), &t("()")));
    }

    #[test]
    fn rooted_embedding_of_paths() {
        let p2 = FiniteRootedTree::path(1);
        let p3 = FiniteRootedTree::path(2);
        let m = embeds_rooted(&p2, &p3).unwrap();
        assert!(is_embedding(&p2, &p3, &m, true));
        assert!(embeds_rooted(&p3, &p2).is_none());
    }

    #[test]
    fn unrooted_embedding_uses_any_anchor() {
        let p2 = FiniteRootedTree::path(1);
        let star = FiniteRootedTree::star(3);
        assert!(embeds_unrooted(&p2, &star).is_some());
        let p5 = FiniteRootedTree::path(4);
        assert!(embeds_unrooted(&star, &p5).is_none());
        // Path rooted at an end embeds unrooted into a path rooted in the middle.
        let p3_mid = FiniteRootedTree::star(2);
        let p3_end = FiniteRootedTree::path(2);
        let m = embeds_unrooted(&p3_end, &p3_mid).unwrap();
        assert!(is_embedding(&p3_end, &p3_mid, &m, false));
        assert!(embeds_rooted(&p3_end, &p3_mid).is_none());
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(FiniteRootedTree::parse(""), Err(TreeError::Empty)));
        assert!(matches!(FiniteRootedTree::parse("(()"), Err(TreeError::Parse { .. })));
        assert!(matches!(FiniteRootedTree::parse("()()"), Err(TreeError::Parse { .. })));
        assert!(matches!(FiniteRootedTree::parse("(x)"), Err(TreeError::Parse { .. })));
    }

    #[test]
    fn from_parents_rejects_bad_input() {
        assert_eq!(FiniteRootedTree::from_parents(vec![]), Err(TreeError::Empty));
        assert_eq!(
            FiniteRootedTree::from_parents(vec![None, None]),
            Err(TreeError::MultipleRoots(0, 1))
        );
        assert_eq!(FiniteRootedTree::from_parents(vec![Some(1), Some(0)]), Err(TreeError::NoRoot));
        assert!(matches!(
            FiniteRootedTree::from_parents(vec![None, Some(2), Some(1)]),
            Err(TreeError::Unreachable(_))
        ));
    }

    #[test]
    fn paren_round_trip_on_canonical_codes() {
        for s in ["()", "(())", "(()())", "((())(()()))"] {
            let code: CanonicalCode = s.parse().unwrap();
            assert_eq!(code.to_tree().to_paren(), code.as_str());
        }
    }

    #[test]
    fn reroot_keeps_ids() {
        let tree = FiniteRootedTree::path(3);
        let r = tree.rerooted(3);
        assert_eq!(r.root(), 3);
        assert_eq!(r.parent(0), Some(1));
        assert_eq!(r.len(), 4);
    }
}
