//! Finite encodings of infinite locally finite trees.
//!
//! A presentation is a finite core tree plus a list of arms. Arm `A` attached
//! at core vertex `c` contributes a spine ray `a_0 a_1 …` with `a_0 ~ c`, and
//! at every position `n` a finite rooted decoration whose root is identified
//! with `a_n`. Decorations contain no rays, so the ends of the presented tree
//! are exactly its arms.
//!
//! Distances used for truncation are measured on the skeleton (core plus
//! spines): a decoration is kept or dropped as a whole together with its
//! spine vertex.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finite_tree::{embeds_rooted, CanonicalCode, FiniteRootedTree};

pub type ArmId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PresentationError {
    #[error("core must have at least one vertex")]
    EmptyCore,
    #[error("duplicate core vertex {0:?}")]
    DuplicateVertex(String),
    #[error("duplicate arm name {0:?}")]
    DuplicateArm(String),
    #[error("core vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("core edges do not form a tree")]
    CoreNotATree,
    #[error("arm {0:?} has an empty period")]
    EmptyPeriod(String),
    #[error("unknown arm {0}")]
    UnknownArm(ArmId),
    #[error("branch at position {pos} of arm {arm} is infinite and is not materialized")]
    Unsupported { arm: ArmId, pos: u64 },
}

/// A vertex of a presented tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    Core(usize),
    Spine { arm: ArmId, pos: u64 },
    /// Non-root vertex `node` of the decoration at spine position `pos`.
    Deco { arm: ArmId, pos: u64, node: usize },
}

impl Vertex {
    pub fn spine(arm: ArmId, pos: u64) -> Self {
        Vertex::Spine { arm, pos }
    }

    /// `(arm, position)` of spine and decoration vertices.
    pub fn arm_pos(self) -> Option<(ArmId, u64)> {
        match self {
            Vertex::Core(_) => None,
            Vertex::Spine { arm, pos } | Vertex::Deco { arm, pos, .. } => Some((arm, pos)),
        }
    }

    /// The skeleton vertex a decoration hangs from (itself otherwise).
    pub fn anchor(self) -> Vertex {
        match self {
            Vertex::Deco { arm, pos, .. } => Vertex::Spine { arm, pos },
            v => v,
        }
    }

    pub fn is_skeleton(self) -> bool {
        !matches!(self, Vertex::Deco { .. })
    }
}

/// An end of a presented tree; one per arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct End {
    pub arm: ArmId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Path,
    Star,
}

impl Shape {
    pub fn build(self, size: u64) -> FiniteRootedTree {
        let size = usize::try_from(size).expect("decoration size fits in memory");
        match self {
            Shape::Path => FiniteRootedTree::path(size),
            Shape::Star => FiniteRootedTree::star(size),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Path => "path",
            Shape::Star => "star",
        })
    }
}

/// `n ↦ slope·n + offset`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineRule {
    pub slope: u64,
    pub offset: u64,
}

impl AffineRule {
    pub fn eval(self, n: u64) -> u64 {
        self.slope * n + self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DecorationSeq {
    EventuallyPeriodic {
        prefix: Vec<FiniteRootedTree>,
        period: Vec<FiniteRootedTree>,
    },
    /// Decoration at `n` is `shape(rule(n))`: a path with that many edges or
    /// a star with that many leaves.
    Generated { shape: Shape, rule: AffineRule },
}

impl DecorationSeq {
    pub fn trivial() -> Self {
        DecorationSeq::EventuallyPeriodic {
            prefix: Vec::new(),
            period: vec![FiniteRootedTree::singleton()],
        }
    }

    pub fn periodic(period: Vec<FiniteRootedTree>) -> Self {
        DecorationSeq::EventuallyPeriodic { prefix: Vec::new(), period }
    }

    pub fn at(&self, n: u64) -> Cow<'_, FiniteRootedTree> {
        match self {
            DecorationSeq::EventuallyPeriodic { prefix, period } => {
                let n = n as usize;
                if n < prefix.len() {
                    Cow::Borrowed(&prefix[n])
                } else {
                    Cow::Borrowed(&period[(n - prefix.len()) % period.len()])
                }
            }
            DecorationSeq::Generated { shape, rule } => Cow::Owned(shape.build(rule.eval(n))),
        }
    }

    /// Index from which the sequence is periodic.
    pub fn prefix_len(&self) -> u64 {
        match self {
            DecorationSeq::EventuallyPeriodic { prefix, .. } => prefix.len() as u64,
            DecorationSeq::Generated { .. } => 0,
        }
    }

    /// Period length; generated sequences report 1 (they are never periodic
    /// after normalization, but 1 is the neutral value for lcm computations).
    pub fn period_len(&self) -> u64 {
        match self {
            DecorationSeq::EventuallyPeriodic { period, .. } => period.len() as u64,
            DecorationSeq::Generated { .. } => 1,
        }
    }

    pub fn is_generated(&self) -> bool {
        matches!(self, DecorationSeq::Generated { .. })
    }

    /// Rewrites constant generated rules into period form and renumbers
    /// listed decorations canonically (root 0, preorder ids).
    pub fn normalized(self) -> Self {
        match self {
            DecorationSeq::Generated { shape, rule } if rule.slope == 0 => {
                DecorationSeq::periodic(vec![shape.build(rule.offset)])
            }
            DecorationSeq::EventuallyPeriodic { prefix, period } => DecorationSeq::EventuallyPeriodic {
                prefix: prefix.iter().map(FiniteRootedTree::canonical).collect(),
                period: period.iter().map(FiniteRootedTree::canonical).collect(),
            },
            s => s,
        }
    }

    /// Position with the same decoration as `n` and the smallest index.
    pub fn reduce(&self, n: u64) -> u64 {
        match self {
            DecorationSeq::EventuallyPeriodic { prefix, period } => {
                let (pre, per) = (prefix.len() as u64, period.len() as u64);
                if n < pre {
                    n
                } else {
                    pre + (n - pre) % per
                }
            }
            DecorationSeq::Generated { .. } => n,
        }
    }

    fn all_periodic_trees(&self) -> impl Iterator<Item = &FiniteRootedTree> {
        let (a, b): (&[FiniteRootedTree], &[FiniteRootedTree]) = match self {
            DecorationSeq::EventuallyPeriodic { prefix, period } => (prefix, period),
            DecorationSeq::Generated { .. } => (&[], &[]),
        };
        a.iter().chain(b.iter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arm {
    pub name: String,
    pub attach: usize,
    pub seq: DecorationSeq,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Core {
    names: Vec<String>,
    edges: Vec<(usize, usize)>,
    basepoint: usize,
    adj: Vec<Vec<usize>>,
    dist: Vec<Vec<usize>>,
    toward_base: Vec<Option<usize>>,
}

impl Core {
    pub fn new(names: Vec<String>, edges: Vec<(usize, usize)>, basepoint: usize) -> Result<Self, PresentationError> {
        let n = names.len();
        if n == 0 {
            return Err(PresentationError::EmptyCore);
        }
        let mut seen_names = BTreeSet::new();
        for name in &names {
            if !seen_names.insert(name.as_str()) {
                return Err(PresentationError::DuplicateVertex(name.clone()));
            }
        }
        if basepoint >= n {
            return Err(PresentationError::VertexOutOfRange(basepoint));
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &edges {
            for x in [u, v] {
                if x >= n {
                    return Err(PresentationError::VertexOutOfRange(x));
                }
            }
            if u == v || adj[u].contains(&v) {
                return Err(PresentationError::CoreNotATree);
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        if edges.len() + 1 != n {
            return Err(PresentationError::CoreNotATree);
        }
        let mut dist = Vec::with_capacity(n);
        for s in 0..n {
            let (d, _) = bfs(&adj, s);
            if d.contains(&usize::MAX) {
                return Err(PresentationError::CoreNotATree);
            }
            dist.push(d);
        }
        let (_, toward_base) = bfs(&adj, basepoint);
        Ok(Self { names, edges, basepoint, adj, dist, toward_base })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn basepoint(&self) -> usize {
        self.basepoint
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn dist(&self, i: usize, j: usize) -> usize {
        self.dist[i][j]
    }

    pub fn diameter(&self) -> usize {
        self.dist.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Core vertices on the path from `i` to `j`, inclusive.
    pub fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = i;
        while cur != j {
            cur = *self.adj[cur]
                .iter()
                .find(|&&w| self.dist[w][j] + 1 == self.dist[cur][j])
                .expect("core is connected");
            out.push(cur);
        }
        out
    }
}

fn bfs(adj: &[Vec<usize>], s: usize) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut parent = vec![None; adj.len()];
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                parent[w] = Some(u);
                queue.push_back(w);
            }
        }
    }
    (dist, parent)
}

/// A finite description of an infinite (or finite, with no arms) locally
/// finite tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreePresentation {
    core: Core,
    arms: Vec<Arm>,
}

/// Witness that a presented tree is not nearly finite: an arm whose spine
/// carries a vertex of degree ≥ 3 at every position `start + k·stride`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RakeWitness {
    pub arm: ArmId,
    pub start: u64,
    pub stride: u64,
}

impl RakeWitness {
    pub fn positions(&self) -> impl Iterator<Item = u64> {
        let (start, stride) = (self.start, self.stride);
        (0..).map(move |k| start + k * stride)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NearlyFinite {
    /// Every vertex of degree ≥ 3 is listed.
    Yes { branch_vertices: Vec<Vertex> },
    No(RakeWitness),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularity {
    /// Number of rooted equimorphy classes among the branches along the
    /// spine, counting the core-side branch at position 0 as one class.
    Regular { class_count: usize },
    /// Positions whose decorations are pairwise non-equimorphic.
    NonRegular { positions: Vec<u64> },
}

impl Regularity {
    pub fn is_regular(&self) -> bool {
        matches!(self, Regularity::Regular { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "depth", rename_all = "snake_case")]
pub enum IsoVerdict {
    /// Truncation codes agree through the certified depth.
    Isomorphic(u64),
    /// Truncation codes first differ at this depth.
    Distinct(u64),
    /// Codes agree through this depth, but a generated arm keeps the
    /// comparison from being certified.
    AgreeUpToDepth(u64),
}

/// Count of vertices of a given degree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Count {
    Finite(u64),
    Infinite,
}

/// A finite ball of a presented tree, rooted at the basepoint.
#[derive(Clone, Debug)]
pub struct Ball {
    pub vertices: Vec<Vertex>,
    pub index: HashMap<Vertex, usize>,
    pub tree: FiniteRootedTree,
}

impl Ball {
    pub fn contains(&self, v: &Vertex) -> bool {
        self.index.contains_key(v)
    }
}

impl TreePresentation {
    pub fn new(core: Core, arms: Vec<Arm>) -> Result<Self, PresentationError> {
        let mut names = BTreeSet::new();
        let mut normalized = Vec::with_capacity(arms.len());
        for arm in arms {
            if !names.insert(arm.name.clone()) {
                return Err(PresentationError::DuplicateArm(arm.name));
            }
            if arm.attach >= core.len() {
                return Err(PresentationError::VertexOutOfRange(arm.attach));
            }
            if let DecorationSeq::EventuallyPeriodic { period, .. } = &arm.seq {
                if period.is_empty() {
                    return Err(PresentationError::EmptyPeriod(arm.name));
                }
            }
            normalized.push(Arm { seq: arm.seq.normalized(), ..arm });
        }
        Ok(Self { core, arms: normalized })
    }

    pub fn core(&self) -> &Core {
        &self.core
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn arm(&self, id: ArmId) -> &Arm {
        &self.arms[id]
    }

    pub fn arm_by_name(&self, name: &str) -> Option<ArmId> {
        self.arms.iter().position(|a| a.name == name)
    }

    pub fn basepoint(&self) -> Vertex {
        Vertex::Core(self.core.basepoint)
    }

    pub fn decoration(&self, arm: ArmId, pos: u64) -> Cow<'_, FiniteRootedTree> {
        self.arms[arm].seq.at(pos)
    }

    pub fn contains(&self, v: Vertex) -> bool {
        match v {
            Vertex::Core(i) => i < self.core.len(),
            Vertex::Spine { arm, .. } => arm < self.arms.len(),
            Vertex::Deco { arm, pos, node } => {
                arm < self.arms.len() && node >= 1 && node < self.decoration(arm, pos).len()
            }
        }
    }

    /// Display name in the document syntax: `v0`, `A[3]`, `A[3].1`.
    pub fn vertex_name(&self, v: Vertex) -> String {
        match v {
            Vertex::Core(i) => self.core.name(i).to_string(),
            Vertex::Spine { arm, pos } => format!("{}[{}]", self.arms[arm].name, pos),
            Vertex::Deco { arm, pos, node } => format!("{}[{}].{}", self.arms[arm].name, pos, node),
        }
    }

    pub fn neighbors(&self, v: Vertex) -> Vec<Vertex> {
        match v {
            Vertex::Core(i) => {
                let mut out: Vec<Vertex> = self.core.neighbors(i).iter().map(|&j| Vertex::Core(j)).collect();
                out.extend(
                    self.arms
                        .iter()
                        .enumerate()
                        .filter(|(_, a)| a.attach == i)
                        .map(|(arm, _)| Vertex::Spine { arm, pos: 0 }),
                );
                out
            }
            Vertex::Spine { arm, pos } => {
                let mut out = Vec::new();
                out.push(self.spine_prev(arm, pos));
                out.push(Vertex::Spine { arm, pos: pos + 1 });
                let deco = self.decoration(arm, pos);
                out.extend(deco.children(deco.root()).iter().map(|&node| Vertex::Deco { arm, pos, node }));
                out
            }
            Vertex::Deco { arm, pos, node } => {
                let deco = self.decoration(arm, pos);
                let mut out = Vec::new();
                match deco.parent(node) {
                    Some(p) if p == deco.root() => out.push(Vertex::Spine { arm, pos }),
                    Some(p) => out.push(Vertex::Deco { arm, pos, node: p }),
                    None => unreachable!("decoration vertices are never the root"),
                }
                out.extend(deco.children(node).iter().map(|&c| Vertex::Deco { arm, pos, node: c }));
                out
            }
        }
    }

    fn spine_prev(&self, arm: ArmId, pos: u64) -> Vertex {
        if pos == 0 {
            Vertex::Core(self.arms[arm].attach)
        } else {
            Vertex::Spine { arm, pos: pos - 1 }
        }
    }

    pub fn degree(&self, v: Vertex) -> usize {
        match v {
            Vertex::Spine { arm, pos } => {
                let deco = self.decoration(arm, pos);
                2 + deco.children(deco.root()).len()
            }
            _ => self.neighbors(v).len(),
        }
    }

    pub fn are_adjacent(&self, u: Vertex, v: Vertex) -> bool {
        self.toward_base(u) == Some(v) || self.toward_base(v) == Some(u)
    }

    /// Neighbor on the path to the basepoint.
    pub fn toward_base(&self, v: Vertex) -> Option<Vertex> {
        match v {
            Vertex::Core(i) => self.core.toward_base[i].map(Vertex::Core),
            Vertex::Spine { arm, pos } => Some(self.spine_prev(arm, pos)),
            Vertex::Deco { arm, pos, node } => {
                let deco = self.decoration(arm, pos);
                match deco.parent(node) {
                    Some(p) if p == deco.root() => Some(Vertex::Spine { arm, pos }),
                    Some(p) => Some(Vertex::Deco { arm, pos, node: p }),
                    None => None,
                }
            }
        }
    }

    /// Distance from the basepoint measured on the skeleton; decoration
    /// vertices share the depth of their spine vertex.
    pub fn skeleton_depth(&self, v: Vertex) -> u64 {
        let base = self.core.basepoint;
        match v {
            Vertex::Core(i) => self.core.dist(base, i) as u64,
            Vertex::Spine { arm, pos } | Vertex::Deco { arm, pos, .. } => {
                self.core.dist(base, self.arms[arm].attach) as u64 + pos + 1
            }
        }
    }

    fn deco_depth(&self, v: Vertex) -> u64 {
        match v {
            Vertex::Deco { arm, pos, node } => {
                let deco = self.decoration(arm, pos);
                let mut d = 0;
                let mut cur = node;
                while let Some(p) = deco.parent(cur) {
                    d += 1;
                    cur = p;
                }
                d
            }
            _ => 0,
        }
    }

    fn skeleton_distance(&self, u: Vertex, v: Vertex) -> u64 {
        let core = &self.core;
        match (u, v) {
            (Vertex::Core(i), Vertex::Core(j)) => core.dist(i, j) as u64,
            (Vertex::Core(i), Vertex::Spine { arm, pos }) | (Vertex::Spine { arm, pos }, Vertex::Core(i)) => {
                core.dist(i, self.arms[arm].attach) as u64 + pos + 1
            }
            (Vertex::Spine { arm: a, pos: p }, Vertex::Spine { arm: b, pos: q }) => {
                if a == b {
                    p.abs_diff(q)
                } else {
                    p + 1 + core.dist(self.arms[a].attach, self.arms[b].attach) as u64 + 1 + q
                }
            }
            _ => unreachable!("skeleton_distance takes skeleton vertices"),
        }
    }

    /// Graph distance in the presented tree.
    pub fn distance(&self, u: Vertex, v: Vertex) -> u64 {
        if let (Vertex::Deco { arm: a, pos: p, node: x }, Vertex::Deco { arm: b, pos: q, node: y }) = (u, v) {
            if a == b && p == q {
                let deco = self.decoration(a, p);
                let depths = deco.depths();
                let (mut x, mut y) = (x, y);
                let mut d = 0;
                while x != y {
                    if depths[x] >= depths[y] {
                        x = deco.parent(x).expect("non-root");
                    } else {
                        y = deco.parent(y).expect("non-root");
                    }
                    d += 1;
                }
                return d;
            }
        }
        self.deco_depth(u) + self.skeleton_distance(u.anchor(), v.anchor()) + self.deco_depth(v)
    }

    /// Ball of skeleton radius `d` around the basepoint, with every
    /// decoration of an included spine vertex kept whole.
    pub fn ball(&self, d: u64) -> Ball {
        let base = self.basepoint();
        let mut vertices = vec![base];
        let mut parents: Vec<Option<usize>> = vec![None];
        let mut index = HashMap::from([(base, 0usize)]);
        let mut queue = VecDeque::from([base]);
        while let Some(u) = queue.pop_front() {
            let iu = index[&u];
            for w in self.neighbors(u) {
                if index.contains_key(&w) || self.skeleton_depth(w) > d {
                    continue;
                }
                index.insert(w, vertices.len());
                vertices.push(w);
                parents.push(Some(iu));
                queue.push_back(w);
            }
        }
        let tree = FiniteRootedTree::from_parents(parents).expect("BFS parents form a tree");
        Ball { vertices, index, tree }
    }

    pub fn truncate(&self, d: u64) -> FiniteRootedTree {
        self.ball(d).tree
    }

    /// Vertices within graph distance `r` of `center`.
    pub fn metric_ball(&self, center: Vertex, r: u64) -> Vec<Vertex> {
        let mut seen = BTreeMap::from([(center, 0u64)]);
        let mut queue = VecDeque::from([center]);
        while let Some(u) = queue.pop_front() {
            let du = seen[&u];
            if du == r {
                continue;
            }
            for w in self.neighbors(u) {
                if let std::collections::btree_map::Entry::Vacant(e) = seen.entry(w) {
                    e.insert(du + 1);
                    queue.push_back(w);
                }
            }
        }
        seen.into_keys().collect()
    }

    pub fn ends(&self) -> Vec<End> {
        (0..self.arms.len()).map(|arm| End { arm }).collect()
    }

    pub fn period_lcm(&self) -> u64 {
        self.arms.iter().map(|a| a.seq.period_len()).fold(1, lcm)
    }

    pub fn max_prefix_len(&self) -> u64 {
        self.arms.iter().map(|a| a.seq.prefix_len()).max().unwrap_or(0)
    }

    /// Largest vertex count among the explicitly listed decorations.
    pub fn max_periodic_deco_len(&self) -> u64 {
        self.arms
            .iter()
            .flat_map(|a| a.seq.all_periodic_trees())
            .map(|t| t.len() as u64)
            .max()
            .unwrap_or(1)
    }

    pub fn max_periodic_deco_height(&self) -> u64 {
        self.arms
            .iter()
            .flat_map(|a| a.seq.all_periodic_trees())
            .map(|t| t.height() as u64)
            .max()
            .unwrap_or(0)
    }

    pub fn has_generated_arm(&self) -> bool {
        self.arms.iter().any(|a| a.seq.is_generated())
    }

    /// A presented tree is a ray when it has a single arm, no decorations,
    /// and its core is a path hanging from the arm's attach vertex by an end.
    pub fn is_ray(&self) -> bool {
        if self.arms.len() != 1 {
            return false;
        }
        let arm = &self.arms[0];
        let all_trivial = match &arm.seq {
            DecorationSeq::EventuallyPeriodic { prefix, period } => {
                prefix.iter().chain(period.iter()).all(FiniteRootedTree::is_trivial)
            }
            DecorationSeq::Generated { .. } => false,
        };
        all_trivial
            && (0..self.core.len()).all(|i| self.core.neighbors(i).len() <= 2)
            && self.core.neighbors(arm.attach).len() <= 1
    }

    pub fn find_rake(&self) -> Option<RakeWitness> {
        self.arms.iter().enumerate().find_map(|(arm, a)| match &a.seq {
            DecorationSeq::EventuallyPeriodic { prefix, period } => period
                .iter()
                .position(|t| !t.is_trivial())
                .map(|i| RakeWitness {
                    arm,
                    start: (prefix.len() + i) as u64,
                    stride: period.len() as u64,
                }),
            DecorationSeq::Generated { rule, .. } => Some(RakeWitness {
                arm,
                start: if rule.eval(0) >= 1 { 0 } else { 1 },
                stride: 1,
            }),
        })
    }

    pub fn nearly_finite(&self) -> NearlyFinite {
        if let Some(w) = self.find_rake() {
            return NearlyFinite::No(w);
        }
        // Every arm is periodic with trivial period: only the core and the
        // prefixes can carry branch vertices.
        let mut branch_vertices: Vec<Vertex> =
            (0..self.core.len()).map(Vertex::Core).filter(|&v| self.degree(v) >= 3).collect();
        for (arm, a) in self.arms.iter().enumerate() {
            for pos in 0..a.seq.prefix_len() {
                let spine = Vertex::Spine { arm, pos };
                if self.degree(spine) >= 3 {
                    branch_vertices.push(spine);
                }
                let deco = self.decoration(arm, pos);
                for node in 1..deco.len() {
                    if deco.degree(node) >= 3 {
                        branch_vertices.push(Vertex::Deco { arm, pos, node });
                    }
                }
            }
        }
        NearlyFinite::Yes { branch_vertices }
    }

    /// Only finitely many vertices of degree ≥ 3.
    pub fn is_nearly_finite(&self) -> bool {
        self.find_rake().is_none()
    }

    /// The branch hanging off spine position `n ≥ 1`: the decoration there.
    pub fn branch_subtree(&self, arm: ArmId, n: u64) -> Result<FiniteRootedTree, PresentationError> {
        if arm >= self.arms.len() {
            return Err(PresentationError::UnknownArm(arm));
        }
        if n == 0 {
            return Err(PresentationError::Unsupported { arm, pos: 0 });
        }
        Ok(self.decoration(arm, n).into_owned())
    }

    pub fn end_regularity(&self, arm: ArmId) -> Result<Regularity, PresentationError> {
        let a = self.arms.get(arm).ok_or(PresentationError::UnknownArm(arm))?;
        Ok(match &a.seq {
            DecorationSeq::EventuallyPeriodic { .. } => {
                let last = a.seq.prefix_len() + a.seq.period_len();
                let classes: BTreeSet<CanonicalCode> =
                    (1..=last).map(|n| a.seq.at(n).canonical_code()).collect();
                Regularity::Regular { class_count: classes.len() + 1 }
            }
            DecorationSeq::Generated { .. } => {
                // Sizes strictly increase with n, so consecutive positions are
                // pairwise non-equimorphic; keep a verified sample.
                let positions: Vec<u64> = (1..=6).collect();
                debug_assert!(positions
                    .windows(2)
                    .all(|w| embeds_rooted(&a.seq.at(w[1]), &a.seq.at(w[0])).is_none()));
                Regularity::NonRegular { positions }
            }
        })
    }

    /// Largest vertex degree; `None` when unbounded (growing stars).
    pub fn max_degree(&self) -> Option<usize> {
        let mut best = (0..self.core.len()).map(|i| self.degree(Vertex::Core(i))).max().unwrap_or(0);
        for (arm, a) in self.arms.iter().enumerate() {
            match &a.seq {
                DecorationSeq::Generated { shape: Shape::Star, .. } => return None,
                DecorationSeq::Generated { shape: Shape::Path, rule } => {
                    best = best.max(if rule.slope + rule.offset > 0 { 3 } else { 2 });
                }
                DecorationSeq::EventuallyPeriodic { .. } => {
                    for pos in 0..a.seq.prefix_len() + a.seq.period_len() {
                        best = best.max(self.degree(Vertex::Spine { arm, pos }));
                        let deco = self.decoration(arm, pos);
                        best = best.max((1..deco.len()).map(|v| deco.degree(v)).max().unwrap_or(0));
                    }
                }
            }
        }
        Some(best)
    }

    /// Text form of one arm's decoration sequence, e.g. `[(())] [()]` for
    /// prefix and period or `path 1n+0`.
    pub fn arm_sketch(&self, arm: ArmId) -> String {
        match &self.arms[arm].seq {
            DecorationSeq::EventuallyPeriodic { prefix, period } => {
                let list = |ts: &[FiniteRootedTree]| ts.iter().map(|t| t.to_paren()).collect::<Vec<_>>().join(",");
                format!("[{}] [{}]", list(prefix), list(period))
            }
            DecorationSeq::Generated { shape, rule } => format!("{shape} {}n+{}", rule.slope, rule.offset),
        }
    }

    /// Degree census: for each degree, how many vertices have it. `None` for
    /// presentations with generated arms.
    pub fn degree_census(&self) -> Option<BTreeMap<usize, Count>> {
        if self.has_generated_arm() {
            return None;
        }
        let mut finite: BTreeMap<usize, u64> = BTreeMap::new();
        let mut infinite: BTreeSet<usize> = BTreeSet::new();
        for i in 0..self.core.len() {
            *finite.entry(self.degree(Vertex::Core(i))).or_default() += 1;
        }
        for (arm, a) in self.arms.iter().enumerate() {
            let prefix = a.seq.prefix_len();
            for pos in 0..prefix + a.seq.period_len() {
                let deco = self.decoration(arm, pos);
                let mut degrees = vec![self.degree(Vertex::Spine { arm, pos })];
                degrees.extend((1..deco.len()).map(|node| deco.degree(node)));
                for d in degrees {
                    if pos < prefix {
                        *finite.entry(d).or_default() += 1;
                    } else {
                        infinite.insert(d);
                    }
                }
            }
        }
        let mut census: BTreeMap<usize, Count> = finite.into_iter().map(|(d, c)| (d, Count::Finite(c))).collect();
        for d in infinite {
            census.insert(d, Count::Infinite);
        }
        Some(census)
    }

    /// Replaces decorations at the given positions of `arm` by trivial trees,
    /// extending the prefix as needed. Generated arms are not supported.
    pub fn with_trivial_decorations(&self, arm: ArmId, positions: &BTreeSet<u64>) -> Result<Self, PresentationError> {
        let Some(&last) = positions.iter().next_back() else {
            return Ok(self.clone());
        };
        let a = self.arms.get(arm).ok_or(PresentationError::UnknownArm(arm))?;
        let DecorationSeq::EventuallyPeriodic { prefix, period } = &a.seq else {
            return Err(PresentationError::Unsupported { arm, pos: last });
        };
        let mut new_prefix = prefix.clone();
        let period_len = period.len();
        while (new_prefix.len() as u64) <= last {
            let n = new_prefix.len();
            new_prefix.push(period[(n - prefix.len()) % period_len].clone());
        }
        // Keep the period phase: the prefix must now end on a period boundary
        // relative to the original prefix.
        while (new_prefix.len() - prefix.len()) % period_len != 0 {
            let n = new_prefix.len();
            new_prefix.push(period[(n - prefix.len()) % period_len].clone());
        }
        for &p in positions {
            new_prefix[p as usize] = FiniteRootedTree::singleton();
        }
        let mut arms = self.arms.clone();
        arms[arm].seq = DecorationSeq::EventuallyPeriodic { prefix: new_prefix, period: period.clone() };
        Ok(Self { core: self.core.clone(), arms })
    }

    /// Removes core vertices and arms. The remaining core must stay
    /// connected and contain `basepoint`.
    pub fn pruned(
        &self,
        remove_core: &BTreeSet<usize>,
        remove_arms: &BTreeSet<ArmId>,
        basepoint: usize,
    ) -> Result<Self, PresentationError> {
        let keep: Vec<usize> = (0..self.core.len()).filter(|i| !remove_core.contains(i)).collect();
        let new_index: HashMap<usize, usize> = keep.iter().enumerate().map(|(n, &o)| (o, n)).collect();
        let names = keep.iter().map(|&i| self.core.names[i].clone()).collect();
        let edges = self
            .core
            .edges
            .iter()
            .filter_map(|(u, v)| Some((*new_index.get(u)?, *new_index.get(v)?)))
            .collect();
        let base = *new_index.get(&basepoint).ok_or(PresentationError::VertexOutOfRange(basepoint))?;
        let core = Core::new(names, edges, base)?;
        let arms = self
            .arms
            .iter()
            .enumerate()
            .filter(|(id, a)| !remove_arms.contains(id) && new_index.contains_key(&a.attach))
            .map(|(_, a)| Arm { attach: new_index[&a.attach], ..a.clone() })
            .collect();
        Self::new(core, arms)
    }

    /// Same vertex expressed in `other`, matching core vertices and arms by
    /// name.
    pub fn translate_vertex(&self, v: Vertex, other: &TreePresentation) -> Option<Vertex> {
        let w = match v {
            Vertex::Core(i) => Vertex::Core(other.core.index_of(self.core.name(i))?),
            Vertex::Spine { arm, pos } => Vertex::Spine { arm: other.arm_by_name(&self.arms[arm].name)?, pos },
            Vertex::Deco { arm, pos, node } => {
                Vertex::Deco { arm: other.arm_by_name(&self.arms[arm].name)?, pos, node }
            }
        };
        other.contains(w).then_some(w)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    if a == 0 || b == 0 {
        return a.max(b);
    }
    a / gcd(a, b) * b
}

/// Probe depth after which two periodic presentations repeat along every
/// arm, used to certify presentation isomorphism.
pub fn certified_depth(p: &TreePresentation, q: &TreePresentation) -> u64 {
    p.core.len() as u64
        + q.core.len() as u64
        + p.max_prefix_len().max(q.max_prefix_len())
        + 2 * lcm(p.period_lcm(), q.period_lcm())
        + p.max_periodic_deco_height().max(q.max_periodic_deco_height())
        + 2
}

/// Compares the two trees pointed at their basepoints by canonical codes of
/// truncations.
pub fn is_isomorphic_presentation(p: &TreePresentation, q: &TreePresentation) -> IsoVerdict {
    let depth = certified_depth(p, q);
    if let Some(d) = first_difference(p, q, depth) {
        return IsoVerdict::Distinct(d);
    }
    if p.has_generated_arm() || q.has_generated_arm() {
        IsoVerdict::AgreeUpToDepth(depth)
    } else {
        IsoVerdict::Isomorphic(depth)
    }
}

/// Smallest depth `≤ max_depth` at which truncation codes differ.
pub fn first_difference(p: &TreePresentation, q: &TreePresentation, max_depth: u64) -> Option<u64> {
    (0..=max_depth).find(|&d| p.truncate(d).canonical_code() != q.truncate(d).canonical_code())
}
