//! Brute-force oracles and random generators shared by the test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use sibling_core::embedding::{
    compose, search_embeddings, validate, Classification, Evaluator, PresentedEmbedding, SearchBounds,
};
use sibling_core::finite_tree::FiniteRootedTree;
use sibling_core::fixtures;
use sibling_core::presentation::{Arm, Core, DecorationSeq, TreePresentation, Vertex};

/// All rooted trees on `n` vertices, one per isomorphism class, by the
/// Beyer–Hedetniemi successor rule on level sequences.
pub fn rooted_trees(n: usize) -> Vec<FiniteRootedTree> {
    assert!(n >= 1);
    let mut level: Vec<usize> = (1..=n).collect();
    let mut out = Vec::new();
    loop {
        out.push(from_levels(&level));
        let Some(p) = (1..n).rev().find(|&i| level[i] > 2) else { break };
        let q = (0..p).rev().find(|&i| level[i] == level[p] - 1).expect("parent level exists");
        for i in p..n {
            level[i] = level[i - (p - q)];
        }
    }
    out
}

fn from_levels(level: &[usize]) -> FiniteRootedTree {
    let parent = (0..level.len())
        .map(|i| (0..i).rev().find(|&j| level[j] + 1 == level[i]))
        .collect();
    FiniteRootedTree::from_parents(parent).unwrap()
}

pub fn rooted_trees_up_to(n: usize) -> Vec<FiniteRootedTree> {
    (1..=n).flat_map(rooted_trees).collect()
}

/// The same tree with vertex ids permuted and children shuffled.
pub fn relabel(t: &FiniteRootedTree, rng: &mut ChaCha8Rng) -> FiniteRootedTree {
    let mut perm: Vec<usize> = (0..t.len()).collect();
    perm.shuffle(rng);
    let mut parent = vec![None; t.len()];
    for v in 0..t.len() {
        parent[perm[v]] = t.parent(v).map(|p| perm[p]);
    }
    FiniteRootedTree::from_parents(parent).unwrap()
}

/// Root-preserving bijection search.
pub fn brute_isomorphic(a: &FiniteRootedTree, b: &FiniteRootedTree) -> bool {
    a.len() == b.len() && !brute_map_list(a, b, true, 1).is_empty()
}

/// Exhaustive search for injective adjacency-preserving maps from `a` into
/// `b`, stopping after `limit`. With `rooted`, roots go to roots and children
/// to children; otherwise `a`'s root may land anywhere.
pub fn brute_map_list(a: &FiniteRootedTree, b: &FiniteRootedTree, rooted: bool, limit: usize) -> Vec<Vec<usize>> {
    struct Search<'t> {
        a: &'t FiniteRootedTree,
        b: &'t FiniteRootedTree,
        order: Vec<usize>,
        rooted: bool,
        map: Vec<usize>,
        used: Vec<bool>,
        out: Vec<Vec<usize>>,
        limit: usize,
    }
    impl Search<'_> {
        fn go(&mut self, i: usize) {
            if self.out.len() >= self.limit {
                return;
            }
            if i == self.order.len() {
                self.out.push(self.map.clone());
                return;
            }
            let u = self.order[i];
            let candidates: Vec<usize> = match self.a.parent(u) {
                None if self.rooted => vec![self.b.root()],
                None => (0..self.b.len()).collect(),
                Some(p) if self.rooted => self.b.children(self.map[p]).to_vec(),
                Some(p) => self.b.neighbors(self.map[p]).collect(),
            };
            for v in candidates {
                if !self.used[v] {
                    self.used[v] = true;
                    self.map[u] = v;
                    self.go(i + 1);
                    self.used[v] = false;
                }
            }
        }
    }
    if a.len() > b.len() {
        return Vec::new();
    }
    let mut s = Search {
        a,
        b,
        order: a.bfs_order(),
        rooted,
        map: vec![usize::MAX; a.len()],
        used: vec![false; b.len()],
        out: Vec::new(),
        limit,
    };
    s.go(0);
    s.out
}

pub fn brute_embeds_rooted(a: &FiniteRootedTree, b: &FiniteRootedTree) -> bool {
    !brute_map_list(a, b, true, 1).is_empty()
}

pub fn brute_embeds_unrooted(a: &FiniteRootedTree, b: &FiniteRootedTree) -> bool {
    !brute_map_list(a, b, false, 1).is_empty()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_tree(rng: &mut ChaCha8Rng) -> FiniteRootedTree {
    let pool = ["()", "()", "()", "(())", "(()())", "((()))"];
    pool.choose(rng).unwrap().parse().unwrap()
}

/// A random presentation with periodic arms: core of 1 to 3 vertices, up to
/// three arms, prefixes of length ≤ 2 and periods of length ≤ 2.
pub fn random_periodic_presentation(rng: &mut ChaCha8Rng) -> TreePresentation {
    let n = rng.gen_range(1..=3);
    let names = (0..n).map(|i| format!("v{i}")).collect();
    let edges = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    let core = Core::new(names, edges, 0).unwrap();
    let arm_count = rng.gen_range(0..=3);
    let arms = (0..arm_count)
        .map(|i| {
            let prefix = (0..rng.gen_range(0..=2)).map(|_| small_tree(rng)).collect();
            let period = (0..rng.gen_range(1..=2)).map(|_| small_tree(rng)).collect();
            Arm {
                name: ["A", "B", "C"][i].to_string(),
                attach: rng.gen_range(0..n),
                seq: DecorationSeq::EventuallyPeriodic { prefix, period },
            }
        })
        .collect();
    TreePresentation::new(core, arms).unwrap()
}

/// Validated embeddings on fixtures: search results and composites of them.
pub fn random_embeddings(count: usize, seed: u64) -> Vec<(String, TreePresentation, PresentedEmbedding)> {
    let mut rng = rng(seed);
    let pools: Vec<(String, TreePresentation, Vec<PresentedEmbedding>)> = fixtures::all()
        .into_iter()
        .map(|(name, p)| {
            let found = search_embeddings(&p, &SearchBounds::with_shift_bound(2));
            (name.to_string(), p, found)
        })
        .filter(|(_, _, found)| !found.is_empty())
        .collect();
    let mut out = Vec::new();
    while out.len() < count {
        let (name, p, found) = pools.choose(&mut rng).unwrap();
        let mut f = found.choose(&mut rng).unwrap().clone();
        for _ in 0..rng.gen_range(0..3) {
            let g = found.choose(&mut rng).unwrap();
            f = compose(p, g, &f).unwrap();
        }
        assert_eq!(validate(p, &f), Ok(()), "{name}: {f:?}");
        out.push((name.clone(), p.clone(), f));
    }
    out
}

/// Vertices within radius `r` of a fixed vertex or edge.
pub fn ball_around(p: &TreePresentation, c: &Classification, r: u64) -> BTreeSet<Vertex> {
    use sibling_core::embedding::FixedStructure;
    match c.fixed_structure() {
        FixedStructure::Vertex(v) => p.metric_ball(v, r).into_iter().collect(),
        FixedStructure::Edge(u, v) => p.metric_ball(u, r).into_iter().chain(p.metric_ball(v, r)).collect(),
        _ => BTreeSet::new(),
    }
}

/// The three trichotomy predicates evaluated directly on a finite region:
/// (fixes a vertex or swaps an edge, number of arms whose far spine lands
/// back on the same arm).
pub fn trichotomy_predicates(p: &TreePresentation, f: &PresentedEmbedding) -> (bool, usize) {
    let ev = Evaluator::new(p, p, f);
    let region = p.ball(20).vertices;
    let fixes_finite = region.iter().any(|&v| {
        let w = ev.image(v).unwrap();
        w == v || (p.are_adjacent(v, w) && ev.image(w) == Some(v))
    });
    let fixed_ends = (0..p.arms().len())
        .filter(|&a| matches!(ev.image(Vertex::spine(a, 40)).and_then(|w| w.arm_pos()), Some((b, _)) if b == a))
        .count();
    (fixes_finite, fixed_ends)
}

/// `f` restricted to `ball` is a bijection onto `ball`.
pub fn bijective_on(p: &TreePresentation, f: &PresentedEmbedding, ball: &BTreeSet<Vertex>) -> bool {
    let ev = Evaluator::new(p, p, f);
    let images: HashSet<Vertex> = ball.iter().filter_map(|&v| ev.image(v)).collect();
    images.len() == ball.len() && images.iter().all(|w| ball.contains(w))
}

/// Labels of a ball: vertex index to presentation vertex.
pub fn ball_labels(p: &TreePresentation, d: u64) -> (FiniteRootedTree, Vec<Vertex>, BTreeMap<Vertex, usize>) {
    let ball = p.ball(d);
    let index = ball.vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    (ball.tree, ball.vertices, index)
}

fn unit_shift_toward(p: &TreePresentation, arm: usize) -> PresentedEmbedding {
    sibling_core::embedding::classified_embeddings(p, &SearchBounds::default())
        .into_iter()
        .find(|(_, c)| c.is_hyperbolic() && c.direction().map(|e| e.arm) == Some(arm) && c.periodicity() == Some(1))
        .map(|(f, _)| f)
        .expect("unit shift")
}

/// With `f` the unit shift toward arm 0 and `g` the one toward arm 1, set
/// `F = f^n`, `G = g^m` and check that `G^{p(F)} ∘ F^{p(G)}` fixes every
/// spine vertex of the ball of depth `depth`. Returns the failures.
pub fn two_directions_identity_failures(p: &TreePresentation, max_exp: u32, depth: u64) -> Vec<(u32, u32, Vertex)> {
    use sibling_core::embedding::{periodicity, power};
    let (f, g) = (unit_shift_toward(p, 0), unit_shift_toward(p, 1));
    let spine: Vec<Vertex> =
        p.ball(depth).vertices.into_iter().filter(|v| matches!(v, Vertex::Spine { .. } | Vertex::Core(0))).collect();
    let mut failures = Vec::new();
    for n in 1..=max_exp {
        for m in 1..=max_exp {
            let big_f = power(p, &f, n).unwrap();
            let big_g = power(p, &g, m).unwrap();
            let (pf, pg) = (periodicity(p, &big_f).unwrap(), periodicity(p, &big_g).unwrap());
            assert_eq!((pf, pg), (n as u64, m as u64));
            let h = compose(p, &power(p, &big_g, pf as u32).unwrap(), &power(p, &big_f, pg as u32).unwrap()).unwrap();
            let ev = Evaluator::new(p, p, &h);
            failures.extend(spine.iter().filter(|&&r| ev.image(r) != Some(r)).map(|&r| (n, m, r)));
        }
    }
    failures
}

/// Truncation rebuilt by breadth-first expansion over `neighbors`, keeping a
/// vertex when its skeleton anchor is within `d` of the basepoint.
pub fn truncation_by_expansion(p: &TreePresentation, d: u64) -> FiniteRootedTree {
    use std::collections::VecDeque;
    let keep = |v: Vertex| p.skeleton_depth(v.anchor()) <= d;
    let base = p.basepoint();
    let mut index = BTreeMap::from([(base, 0usize)]);
    let mut parent = vec![None];
    let mut queue = VecDeque::from([base]);
    while let Some(v) = queue.pop_front() {
        for w in p.neighbors(v) {
            if keep(w) && !index.contains_key(&w) {
                index.insert(w, parent.len());
                parent.push(Some(index[&v]));
                queue.push_back(w);
            }
        }
    }
    FiniteRootedTree::from_parents(parent).unwrap()
}
