use std::collections::BTreeMap;

use sibling_core::embedding::*;
use sibling_core::finite_tree::{embeds_rooted, embeds_unrooted, is_isomorphic_rooted, FiniteRootedTree};
use sibling_core::fixtures;
use sibling_core::presentation::*;
use sibling_core::siblings::*;

fn t(s: &str) -> FiniteRootedTree {
    s.parse().unwrap()
}

#[test]
fn finite_tree_examples() {
    assert_eq!(FiniteRootedTree::singleton().canonical_code().as_str(), "()");
    assert_eq!(t("(())").canonical_code().as_str(), "(())");
    assert!(is_isomorphic_rooted(&t("()"), &t("()")));
    assert!(!is_isomorphic_rooted(&FiniteRootedTree::path(2), &t("(()())")));
    assert!(embeds_rooted(&FiniteRootedTree::path(1), &FiniteRootedTree::path(2)).is_some());
    assert!(embeds_rooted(&FiniteRootedTree::path(2), &FiniteRootedTree::path(1)).is_none());
    assert!(embeds_unrooted(&FiniteRootedTree::path(1), &FiniteRootedTree::star(3)).is_some());
    assert!(embeds_unrooted(&FiniteRootedTree::star(3), &FiniteRootedTree::path(4)).is_none());
}

#[test]
fn truncation_examples() {
    assert_eq!(fixtures::ray().truncate(3).canonical_code(), FiniteRootedTree::path(3).canonical_code());
    let fin = fixtures::finite();
    let whole = fin.truncate(fin.core().diameter() as u64);
    assert_eq!(whole.len(), 5);
    let comb2 = fixtures::comb().truncate(2);
    assert_eq!(comb2.len(), 5);
}

/// Independent expansion of COMB: v0, then spine vertex a_n at depth n+1
/// carrying one leaf.
fn comb_by_hand(d: u64) -> FiniteRootedTree {
    let mut parent = vec![None];
    let mut prev = 0;
    for _ in 0..d {
        let a = parent.len();
        parent.push(Some(prev));
        parent.push(Some(a));
        prev = a;
    }
    FiniteRootedTree::from_parents(parent).unwrap()
}

#[test]
fn comb_truncations_match_hand_expansion() {
    for d in 0..10 {
        assert_eq!(fixtures::comb().truncate(d).canonical_code(), comb_by_hand(d).canonical_code(), "d={d}");
    }
}

#[test]
fn end_counts() {
    assert_eq!(fixtures::ray().ends().len(), 1);
    assert_eq!(fixtures::dray().ends().len(), 2);
    assert_eq!(fixtures::finite().ends().len(), 0);
}

#[test]
fn nearly_finite_and_rakes() {
    assert!(fixtures::spider3().is_nearly_finite());
    assert!(!fixtures::comb().is_nearly_finite());
    assert!(!fixtures::growcomb().is_nearly_finite());
    assert_eq!(fixtures::comb().find_rake(), Some(RakeWitness { arm: 0, start: 0, stride: 1 }));
    assert_eq!(fixtures::altcomb().find_rake(), Some(RakeWitness { arm: 0, start: 1, stride: 2 }));
    assert_eq!(fixtures::spider3().find_rake(), None);
    let g = fixtures::growcomb();
    for d in [5u64, 10] {
        let ball = g.ball(d);
        for n in 1..d - 1 {
            let i = ball.index[&Vertex::spine(0, n)];
            assert_eq!(ball.tree.degree(i), 3, "a_{n} at depth {d}");
        }
    }
}

#[test]
fn branch_subtrees() {
    assert_eq!(fixtures::comb().branch_subtree(0, 5).unwrap().to_paren(), "(())");
    assert_eq!(fixtures::growcomb().branch_subtree(0, 4).unwrap(), FiniteRootedTree::path(4));
    assert_eq!(fixtures::ray().branch_subtree(0, 7).unwrap().to_paren(), "()");
}

#[test]
fn regularity() {
    match fixtures::comb().end_regularity(0).unwrap() {
        Regularity::Regular { class_count } => assert!(class_count <= 2),
        r => panic!("{r:?}"),
    }
    match fixtures::growcomb().end_regularity(0).unwrap() {
        Regularity::NonRegular { positions } => {
            for w in positions.windows(2) {
                let g = fixtures::growcomb();
                assert!(embeds_rooted(&g.decoration(0, w[1]), &g.decoration(0, w[0])).is_none());
            }
        }
        r => panic!("{r:?}"),
    }
    assert!(fixtures::ray().end_regularity(0).unwrap().is_regular());
}

#[test]
fn presentation_isomorphism() {
    let comb = fixtures::comb();
    assert!(matches!(is_isomorphic_presentation(&comb, &comb), IsoVerdict::Isomorphic(_)));
    assert_eq!(is_isomorphic_presentation(&comb, &fixtures::ray()), IsoVerdict::Distinct(1));
    let f = fixtures::single_arm_shift();
    let s1 = construct_sibling_sk(&comb, &f, 1).unwrap();
    let s2 = construct_sibling_sk(&comb, &f, 2).unwrap();
    match is_isomorphic_presentation(&s1, &s2) {
        IsoVerdict::Distinct(d) => assert!(d <= 6),
        v => panic!("{v:?}"),
    }
    let g = fixtures::growcomb();
    assert!(matches!(is_isomorphic_presentation(&g, &g), IsoVerdict::AgreeUpToDepth(_)));
}

#[test]
fn fixture_isomorphism_is_reflexive_and_symmetric() {
    let all = fixtures::all();
    for (_, p) in &all {
        assert!(!matches!(is_isomorphic_presentation(p, p), IsoVerdict::Distinct(_)));
        for (_, q) in &all {
            let a = is_isomorphic_presentation(p, q);
            assert_eq!(a, is_isomorphic_presentation(q, p));
            if let IsoVerdict::Distinct(d) = a {
                assert_ne!(p.truncate(d).canonical_code(), q.truncate(d).canonical_code());
            }
        }
    }
}

#[test]
fn validation_examples() {
    let comb = fixtures::comb();
    assert_eq!(validate(&comb, &identity(&comb)), Ok(()));
    assert_eq!(validate(&comb, &fixtures::single_arm_shift()), Ok(()));
    let err = validate(&fixtures::dcomb0(), &fixtures::two_arm_shift()).unwrap_err();
    assert!(err.iter().any(|v| matches!(v, Violation::CertificateFails { .. })));
}

#[test]
fn shift_on_comb_agrees_with_truncations() {
    let p = fixtures::comb();
    let f = fixtures::single_arm_shift();
    let ev = Evaluator::new(&p, &p, &f);
    let ball = p.ball(12);
    for (i, &v) in ball.vertices.iter().enumerate() {
        let Some(parent) = ball.tree.parent(i) else { continue };
        let (a, b) = (ev.image(v).unwrap(), ev.image(ball.vertices[parent]).unwrap());
        assert!(p.are_adjacent(a, b));
    }
}

#[test]
fn classification_examples() {
    let ray = fixtures::ray();
    let c = classify(&ray, &fixtures::single_arm_shift()).unwrap();
    assert!(c.is_parabolic());
    assert_eq!(c.periodicity(), Some(1));
    assert_eq!(
        c.fixed_structure(),
        FixedStructure::Ray(RayDescriptor { head: vec![Vertex::Core(0)], arm: 0, from: 0 })
    );
    let c = classify(&fixtures::dray(), &fixtures::two_arm_shift()).unwrap();
    assert!(c.is_hyperbolic());
    assert_eq!(c.periodicity(), Some(1));
    for (_, p) in fixtures::all() {
        assert!(classify(&p, &identity(&p)).unwrap().is_elliptic());
    }
}

#[test]
fn comb_shift_fixes_the_spine_ray() {
    let p = fixtures::comb();
    let f = fixtures::single_arm_shift();
    let FixedStructure::Ray(ray) = fixed_structure(&p, &f).unwrap() else { panic!() };
    assert_eq!(ray.vertex(0), Vertex::Core(0));
    assert_eq!(ray.vertex(1), Vertex::spine(0, 0));
    // Displacement 1 on the ray, at least 2 elsewhere.
    let ev = Evaluator::new(&p, &p, &f);
    for v in p.ball(12).vertices {
        let d = p.distance(v, ev.image(v).unwrap());
        if ray.index_of(v).is_some() {
            assert_eq!(d, 1);
        } else {
            assert!(d >= 2);
        }
    }
}

#[test]
fn directions() {
    let halfcomb = fixtures::halfcomb();
    let f = search_embeddings(&halfcomb, &SearchBounds::default())
        .into_iter()
        .find(|f| classify(&halfcomb, f).is_ok_and(|c| !c.is_elliptic()))
        .unwrap();
    assert_eq!(direction(&halfcomb, &f), Ok(End { arm: 0 }));
    let comb = fixtures::comb();
    let f = fixtures::single_arm_shift();
    let f2 = compose(&comb, &f, &f).unwrap();
    assert_eq!(direction(&comb, &f2), direction(&comb, &f));
}

#[test]
fn direction_is_independent_of_start() {
    let p = fixtures::dcomb();
    for f in search_embeddings(&p, &SearchBounds::default()) {
        let Ok(d) = direction(&p, &f) else { continue };
        for i in 0..p.core().len() {
            assert_eq!(direction_from(&p, &f, Vertex::Core(i)), Ok(d));
        }
    }
}

#[test]
fn periodicity_examples() {
    let p = fixtures::ray();
    let f = fixtures::single_arm_shift();
    let f2 = power(&p, &f, 2).unwrap();
    assert_eq!(periodicity(&p, &f), Ok(1));
    assert_eq!(periodicity(&p, &f2), Ok(2));
    let f3 = compose(&p, &f, &f2).unwrap();
    assert_eq!(periodicity(&p, &f3), Ok(3));
    // d(r, f(r)) is the same along the ray.
    let ev = Evaluator::new(&p, &p, &f3);
    let FixedStructure::Ray(ray) = fixed_structure(&p, &f3).unwrap() else { panic!() };
    for i in 0..10 {
        let r = ray.vertex(i);
        assert_eq!(p.distance(r, ev.image(r).unwrap()), 3);
    }
}

#[test]
fn spine_order_examples() {
    let p = fixtures::ray();
    let f = fixtures::single_arm_shift();
    assert_eq!(spine_order(&p, &f, Vertex::spine(0, 0), Vertex::spine(0, 5)), Ok(SpineOrder::LeftOf));
    assert_eq!(spine_order(&p, &f, Vertex::spine(0, 2), Vertex::spine(0, 2)), Ok(SpineOrder::Equal));
    let q = fixtures::dray();
    assert_eq!(
        spine_order(&q, &fixtures::two_arm_shift(), Vertex::spine(1, 3), Vertex::spine(0, 2)),
        Ok(SpineOrder::LeftOf)
    );
}

#[test]
fn preservation_examples() {
    let comb_shift = fixtures::single_arm_shift();
    assert!(preserves_forward(&comb_shift, End { arm: 0 }));
    assert!(!preserves_backward(&comb_shift, End { arm: 0 }));
    let halfcomb = fixtures::halfcomb();
    let f = search_embeddings(&halfcomb, &SearchBounds::default())
        .into_iter()
        .find(|f| direction(&halfcomb, f) == Ok(End { arm: 0 }))
        .unwrap();
    assert!(preserves_backward(&f, End { arm: 1 }));
    // b_{n+1} ↦ b_n: the image of the B ray contains it.
    let ev = Evaluator::new(&halfcomb, &halfcomb, &f);
    assert_eq!(ev.image(Vertex::spine(1, 5)), Some(Vertex::spine(1, 4)));
}

#[test]
fn search_examples() {
    let ray = fixtures::ray();
    let bound = 4;
    let found = search_embeddings(&ray, &SearchBounds::with_shift_bound(bound));
    let shifts: Vec<i64> = found.iter().map(|f| f.rules[0].shift).collect();
    assert_eq!(shifts, (0..=bound as i64).collect::<Vec<_>>());

    let comb = fixtures::comb();
    for f in search_embeddings(&comb, &SearchBounds::with_shift_bound(3)) {
        assert!(f.rules[0].shift >= 0);
        assert_eq!(validate(&comb, &f), Ok(()));
    }

    let dray = fixtures::dray();
    let found = search_embeddings(&dray, &SearchBounds::default());
    let kinds: Vec<&str> = found.iter().map(|f| classify(&dray, f).unwrap().kind()).collect();
    assert!(kinds.contains(&"hyperbolic"));
    assert!(found.iter().any(|f| f.rules[0].target == 1 && classify(&dray, f).unwrap().is_elliptic()));
}

#[test]
fn direction_set_examples() {
    let b = SearchBounds::default();
    assert_eq!(directions_set(&fixtures::ray(), &b).ends(), vec![End { arm: 0 }]);
    assert_eq!(directions_set(&fixtures::dray(), &b).ends(), vec![End { arm: 0 }, End { arm: 1 }]);
    assert_eq!(directions_set(&fixtures::halfcomb(), &b).ends(), vec![End { arm: 0 }]);
    assert!(directions_set(&fixtures::finite(), &b).is_empty());
}

#[test]
fn limit_set_examples() {
    let comb = fixtures::comb();
    assert_eq!(limit_set_sample(&comb, &[fixtures::single_arm_shift()], 10, 5).len(), 1);
    let dray = fixtures::dray();
    let gens: Vec<PresentedEmbedding> = directions_set(&dray, &SearchBounds::default()).witnesses.into_values().collect();
    let ends = limit_set_sample(&dray, &gens, 10, 4);
    assert_eq!(ends.len(), 2);
}

#[test]
fn difference_forest_examples() {
    let growcomb = fixtures::growcomb();
    let r = difference_forest(&growcomb, &fixtures::single_arm_shift(), &[10, 20, 30]).unwrap();
    assert!(r.counts[&10] < r.counts[&20] && r.counts[&20] < r.counts[&30]);
    assert!(infinite_components_certificate(&fixtures::comb(), &fixtures::single_arm_shift()).is_none());
    assert!(infinite_components_certificate(&fixtures::ray(), &fixtures::single_arm_shift()).is_none());
}

#[test]
fn sibling_family_on_comb() {
    let comb = fixtures::comb();
    let f = fixtures::single_arm_shift();
    let family = build_sibling_family(&comb, &f, 2).unwrap();
    assert!(family.check());
    let report = verify_pairwise_noniso(&family.chain(), 8);
    assert!(report.all_distinct, "{report:?}");
    let members: Vec<&TreePresentation> = family.members.iter().collect();
    assert!(!verify_pairwise_noniso(&[members[0], members[0]], 8).all_distinct);
}

#[test]
fn equimorphy_with_sibling() {
    let comb = fixtures::comb();
    let s2 = construct_sibling_sk(&comb, &fixtures::single_arm_shift(), 2).unwrap();
    match equimorphy_check(&comb, &s2, &SearchBounds::default()) {
        Equimorphy::Mutual { forward, backward } => {
            assert_eq!(validate_into(&comb, &s2, &forward), Ok(()));
            assert_eq!(validate_into(&s2, &comb, &backward), Ok(()));
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn report_ladder_examples() {
    let b = ReportBounds::default();
    let dray = sibling_number_report(&fixtures::dray(), &b);
    assert_eq!((dray.verdict, dray.theorem_tag), (Verdict::ExactlyOne, tags::TWO_DIRECTIONS));
    let comb = sibling_number_report(&fixtures::comb(), &b);
    assert_eq!((comb.verdict, comb.theorem_tag), (Verdict::Infinite, tags::PARABOLIC));
    assert_eq!(comb.summary, "Infinite (Theorem: parabolic, non-ray)");
    let family = comb.witness.family.expect("S_k family");
    assert!(family.checked && family.pairwise.all_distinct);
    let half = sibling_number_report(&fixtures::halfcomb(), &b);
    assert_eq!(half.verdict, Verdict::OpenCase);
    assert_eq!(half.directions.len(), 1);
    let spider = sibling_number_report(&fixtures::spider3(), &b);
    assert_eq!((spider.verdict, spider.theorem_tag), (Verdict::ExactlyOne, tags::NO_DIRECTION));
}

#[test]
fn convergence_examples() {
    let comb = fixtures::comb();
    let teeth = VertexSequence::Along { arm: 0, start: 0, stride: 1, node: 1 };
    let c = converges_to(&comb, &teeth, End { arm: 0 }, 20);
    assert!(c.converges);
    for s in &c.separations {
        assert_eq!(s.members, Some((0..=s.n).collect::<Vec<_>>()));
    }
    let constant = VertexSequence::Constant { vertex: comb.basepoint() };
    let c = converges_to(&comb, &constant, End { arm: 0 }, 3);
    assert!(!c.converges);
    assert_eq!(c.separations[1].count, Count::Infinite);
}

#[test]
fn composite_patch_is_explicit() {
    let p = fixtures::comb();
    let f = fixtures::single_arm_shift();
    let f3 = power(&p, &f, 3).unwrap();
    assert_eq!(f3.patch, BTreeMap::from([(Vertex::Core(0), Vertex::spine(0, 2))]));
    assert_eq!(f3.rules[0].shift, 3);
}
