//! Small named presentations used by tests, examples and the CLI.

use std::collections::BTreeMap;

use crate::embedding::{PresentedEmbedding, TailRule};
use crate::finite_tree::FiniteRootedTree;
use crate::presentation::{AffineRule, Arm, Core, DecorationSeq, Shape, TreePresentation, Vertex};

fn core(names: &[&str], edges: &[(usize, usize)]) -> Core {
    Core::new(names.iter().map(|s| s.to_string()).collect(), edges.to_vec(), 0).expect("fixture core")
}

fn arm(name: &str, attach: usize, seq: DecorationSeq) -> Arm {
    Arm { name: name.into(), attach, seq }
}

fn tooth() -> DecorationSeq {
    DecorationSeq::periodic(vec![FiniteRootedTree::path(1)])
}

fn build(core: Core, arms: Vec<Arm>) -> TreePresentation {
    TreePresentation::new(core, arms).expect("fixture presentation")
}

/// One-way infinite path.
pub fn ray() -> TreePresentation {
    build(core(&["v0"], &[]), vec![arm("A", 0, DecorationSeq::trivial())])
}

/// Two-way infinite path.
pub fn dray() -> TreePresentation {
    build(
        core(&["v0"], &[]),
        vec![arm("A", 0, DecorationSeq::trivial()), arm("B", 0, DecorationSeq::trivial())],
    )
}

/// A ray with a leaf attached at every spine vertex.
pub fn comb() -> TreePresentation {
    build(core(&["v0"], &[]), vec![arm("A", 0, tooth())])
}

/// A ray with a path of `n` edges hanging from spine vertex `n`.
pub fn growcomb() -> TreePresentation {
    build(
        core(&["v0"], &[]),
        vec![arm(
            "A",
            0,
            DecorationSeq::Generated { shape: Shape::Path, rule: AffineRule { slope: 1, offset: 0 } },
        )],
    )
}

/// A double ray with teeth on one side only.
pub fn halfcomb() -> TreePresentation {
    build(core(&["v0"], &[]), vec![arm("A", 0, tooth()), arm("B", 0, DecorationSeq::trivial())])
}

pub fn spider3() -> TreePresentation {
    build(
        core(&["v0"], &[]),
        vec![
            arm("A", 0, DecorationSeq::trivial()),
            arm("B", 0, DecorationSeq::trivial()),
            arm("C", 0, DecorationSeq::trivial()),
        ],
    )
}

/// A double ray with a tooth at every vertex, the central tooth `t0` living
/// in the core.
pub fn dcomb() -> TreePresentation {
    build(core(&["v0", "t0"], &[(0, 1)]), vec![arm("A", 0, tooth()), arm("B", 0, tooth())])
}

/// A double comb whose central vertex has no tooth.
pub fn dcomb0() -> TreePresentation {
    build(core(&["v0"], &[]), vec![arm("A", 0, tooth()), arm("B", 0, tooth())])
}

/// Teeth at every other spine vertex, starting at position 1.
pub fn altcomb() -> TreePresentation {
    build(
        core(&["v0"], &[]),
        vec![arm(
            "A",
            0,
            DecorationSeq::periodic(vec![FiniteRootedTree::singleton(), FiniteRootedTree::path(1)]),
        )],
    )
}

/// A finite tree: `v0-v1-v2-v3` with `v4` hanging off `v1`.
pub fn finite() -> TreePresentation {
    build(core(&["v0", "v1", "v2", "v3", "v4"], &[(0, 1), (1, 2), (2, 3), (1, 4)]), vec![])
}

/// Every named fixture.
pub fn all() -> Vec<(&'static str, TreePresentation)> {
    vec![
        ("RAY", ray()),
        ("DRAY", dray()),
        ("COMB", comb()),
        ("GROWCOMB", growcomb()),
        ("HALFCOMB", halfcomb()),
        ("SPIDER3", spider3()),
        ("DCOMB", dcomb()),
        ("DCOMB0", dcomb0()),
        ("ALTCOMB", altcomb()),
        ("FINITE", finite()),
    ]
}

/// Shift by one along arm `A` of a single-arm fixture on core `{v0}`:
/// `v0 ↦ a_0`, `a_n ↦ a_{n+1}`.
pub fn single_arm_shift() -> PresentedEmbedding {
    PresentedEmbedding::new(
        BTreeMap::from([(Vertex::Core(0), Vertex::spine(0, 0))]),
        vec![TailRule { source: 0, target: 0, shift: 1, valid_from: 0 }],
    )
}

/// Shift toward `A` on a two-arm fixture on core `{v0}`, written without a
/// patch entry for the tooth at `b_0`. Valid on DRAY, invalid on DCOMB0.
pub fn two_arm_shift() -> PresentedEmbedding {
    PresentedEmbedding::new(
        BTreeMap::from([
            (Vertex::Core(0), Vertex::spine(0, 0)),
            (Vertex::spine(1, 0), Vertex::Core(0)),
        ]),
        vec![
            TailRule { source: 0, target: 0, shift: 1, valid_from: 0 },
            TailRule { source: 1, target: 1, shift: -1, valid_from: 1 },
        ],
    )
}
