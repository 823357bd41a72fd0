mod common;

use common::*;
use proptest::prelude::*;
use sibling_core::finite_tree::{
    canonical_code, embeds_rooted, embeds_unrooted, is_embedding, is_isomorphic_rooted, FiniteRootedTree,
};

#[test]
fn enumeration_counts_match_known_sequence() {
    let counts: Vec<usize> = (1..=8).map(|n| rooted_trees(n).len()).collect();
    assert_eq!(counts, [1, 1, 2, 4, 9, 20, 48, 115]);
    assert_eq!(rooted_trees_up_to(8).len(), 200);
}

#[test]
fn codes_coincide_with_brute_isomorphism_up_to_8() {
    let trees = rooted_trees_up_to(8);
    let mut rng = rng(11);
    // Relabelled copies carry the same class as their source.
    let copies: Vec<(usize, FiniteRootedTree)> =
        trees.iter().enumerate().map(|(i, t)| (i, relabel(t, &mut rng))).collect();
    for (i, a) in trees.iter().enumerate() {
        for (j, b) in &copies {
            if a.len() != b.len() {
                continue;
            }
            let brute = brute_isomorphic(a, b);
            assert_eq!(brute, i == *j, "enumeration produced a duplicate class");
            assert_eq!(canonical_code(a) == canonical_code(b), brute, "{} vs {}", a.to_paren(), b.to_paren());
        }
    }
}

#[test]
fn mutual_rooted_embeddability_forces_isomorphism_up_to_7() {
    let trees = rooted_trees_up_to(7);
    for a in &trees {
        for b in &trees {
            let both = embeds_rooted(a, b).is_some() && embeds_rooted(b, a).is_some();
            if both {
                assert!(brute_isomorphic(a, b), "{} ~ {}", a.to_paren(), b.to_paren());
            }
        }
    }
}

#[test]
fn embeddability_matches_exhaustive_search_up_to_6() {
    let trees = rooted_trees_up_to(6);
    for a in &trees {
        for b in &trees {
            let rooted = embeds_rooted(a, b);
            assert_eq!(rooted.is_some(), brute_embeds_rooted(a, b), "rooted {} into {}", a.to_paren(), b.to_paren());
            if let Some(m) = rooted {
                assert!(is_embedding(a, b, &m, true));
            }
            let free = embeds_unrooted(a, b);
            assert_eq!(free.is_some(), brute_embeds_unrooted(a, b), "free {} into {}", a.to_paren(), b.to_paren());
            if let Some(m) = free {
                assert!(is_embedding(a, b, &m, false));
            }
        }
    }
}

fn arb_tree(max: usize) -> impl Strategy<Value = FiniteRootedTree> {
    (1..=max)
        .prop_flat_map(|n| proptest::collection::vec(any::<prop::sample::Index>(), n - 1))
        .prop_map(|picks| {
            let mut parent = vec![None];
            for (i, ix) in picks.into_iter().enumerate() {
                parent.push(Some(ix.index(i + 1)));
            }
            FiniteRootedTree::from_parents(parent).unwrap()
        })
}

proptest! {
    #[test]
    fn embedding_is_reflexive(t in arb_tree(14)) {
        let m = embeds_rooted(&t, &t).expect("identity");
        prop_assert!(is_embedding(&t, &t, &m, true));
        prop_assert!(is_isomorphic_rooted(&t, &t));
    }

    #[test]
    fn embedding_is_transitive(a in arb_tree(6), b in arb_tree(9), c in arb_tree(12)) {
        if let (Some(ab), Some(bc)) = (embeds_rooted(&a, &b), embeds_rooted(&b, &c)) {
            let ac: Vec<usize> = ab.iter().map(|&x| bc[x]).collect();
            prop_assert!(is_embedding(&a, &c, &ac, true));
            prop_assert!(embeds_rooted(&a, &c).is_some());
        }
        if let (Some(ab), Some(bc)) = (embeds_unrooted(&a, &b), embeds_unrooted(&b, &c)) {
            let ac: Vec<usize> = ab.iter().map(|&x| bc[x]).collect();
            prop_assert!(is_embedding(&a, &c, &ac, false));
            prop_assert!(embeds_unrooted(&a, &c).is_some());
        }
    }

    #[test]
    fn returned_maps_are_embeddings(a in arb_tree(8), b in arb_tree(12)) {
        if let Some(m) = embeds_rooted(&a, &b) {
            prop_assert!(is_embedding(&a, &b, &m, true));
        }
        if let Some(m) = embeds_unrooted(&a, &b) {
            prop_assert!(is_embedding(&a, &b, &m, false));
        }
    }

    #[test]
    fn code_is_invariant_under_relabelling(t in arb_tree(16), seed in any::<u64>()) {
        let mut r = rng(seed);
        let u = relabel(&t, &mut r);
        prop_assert_eq!(canonical_code(&t), canonical_code(&u));
        prop_assert_eq!(t.canonical(), u.canonical());
        prop_assert_eq!(canonical_code(&t.canonical()), canonical_code(&t));
    }

    #[test]
    fn paren_round_trip(t in arb_tree(16)) {
        let back: FiniteRootedTree = t.to_paren().parse().unwrap();
        prop_assert!(is_isomorphic_rooted(&t, &back));
    }
}
