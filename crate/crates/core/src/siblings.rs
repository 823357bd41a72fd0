//! Siblings: difference forests, the `S_k` construction, equimorphy checks
//! and the sibling-number certificate.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::embedding::{
    classified_embeddings, classify, directions_of, power, preserves_backward, preserves_forward,
    search_embeddings_into, validate, validate_into, Classification, EmbeddingError, Evaluator, PresentedEmbedding,
    SearchBounds, Violation,
};
use crate::finite_tree::embeds_rooted;
use crate::presentation::{first_difference, ArmId, DecorationSeq, End, TreePresentation, Vertex};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SiblingError {
    #[error("embedding does not validate ({} violations)", .0.len())]
    NotValidated(Vec<Violation>),
    #[error("embedding is not parabolic")]
    NotParabolic,
    #[error("the tree is a ray")]
    IsRay,
    #[error("the direction of the embedding is a non-regular end")]
    NonRegularDirection,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("postcondition failed: {0}")]
    Postcondition(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// Positions along a translated arm where the image decoration strictly
/// exceeds the original, so each leaves a new component outside the image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentsCertificate {
    pub arm: ArmId,
    pub shift: u64,
    pub start: u64,
    pub stride: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ForestComponent {
    /// Smallest vertex of the component.
    pub representative: Vertex,
    pub size: usize,
    pub touches_boundary: bool,
    pub nearly_finite: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DifferenceForestReport {
    pub counts: BTreeMap<u64, u64>,
    /// Components counted at the largest requested depth.
    pub components: Vec<ForestComponent>,
    pub certificate: Option<ComponentsCertificate>,
}

pub fn infinite_components_certificate(p: &TreePresentation, f: &PresentedEmbedding) -> Option<ComponentsCertificate> {
    for r in f.rules.iter().filter(|r| r.is_self() && r.shift > 0) {
        let shift = r.shift as u64;
        match &p.arm(r.source).seq {
            DecorationSeq::Generated { rule, .. } if rule.slope >= 1 => {
                return Some(ComponentsCertificate { arm: r.source, shift, start: r.valid_from, stride: 1 });
            }
            DecorationSeq::Generated { .. } => {}
            seq @ DecorationSeq::EventuallyPeriodic { .. } => {
                let n0 = r.valid_from.max(seq.prefix_len());
                let hit = (n0..n0 + seq.period_len()).find(|&n| {
                    let (a, b) = (seq.at(n), seq.at(n + shift));
                    embeds_rooted(&a, &b).is_some() && embeds_rooted(&b, &a).is_none()
                });
                if let Some(start) = hit {
                    return Some(ComponentsCertificate { arm: r.source, shift, start, stride: seq.period_len() });
                }
            }
        }
    }
    None
}

fn arm_is_rake_free(p: &TreePresentation, arm: ArmId) -> bool {
    match &p.arm(arm).seq {
        DecorationSeq::EventuallyPeriodic { period, .. } => period.iter().all(|t| t.is_trivial()),
        DecorationSeq::Generated { .. } => false,
    }
}

/// Components of `B_d ∖ f(T)` for each depth `d`. Components reaching the
/// ball boundary are only counted when the symbolic certificate says they
/// keep extending.
pub fn difference_forest(
    p: &TreePresentation,
    f: &PresentedEmbedding,
    depths: &[u64],
) -> Result<DifferenceForestReport, SiblingError> {
    validate(p, f).map_err(SiblingError::NotValidated)?;
    let certificate = infinite_components_certificate(p, f);
    let ev = Evaluator::new(p, p, f);
    let max_vf = f.rules.iter().map(|r| r.valid_from).max().unwrap_or(0);
    let slack = f.max_abs_shift() + max_vf + p.core().diameter() as u64 + 2;
    let mut counts = BTreeMap::new();
    let mut components = Vec::new();
    let max_depth = depths.iter().copied().max();
    for &d in depths {
        let ball = p.ball(d);
        let image: HashSet<Vertex> = p.ball(d + slack).vertices.iter().filter_map(|&v| ev.image(v)).collect();
        let mut seen: HashSet<Vertex> = HashSet::new();
        let mut here = Vec::new();
        for &v in &ball.vertices {
            if image.contains(&v) || seen.contains(&v) {
                continue;
            }
            let mut comp = vec![v];
            seen.insert(v);
            let mut queue = VecDeque::from([v]);
            let mut touches = false;
            let mut arms = BTreeSet::new();
            while let Some(u) = queue.pop_front() {
                for w in p.neighbors(u) {
                    if !ball.contains(&w) {
                        touches = true;
                        if let Some((a, _)) = w.arm_pos() {
                            arms.insert(a);
                        }
                    } else if !image.contains(&w) && seen.insert(w) {
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            if touches && certificate.is_none() {
                continue;
            }
            here.push(ForestComponent {
                representative: *comp.iter().min().expect("nonempty"),
                size: comp.len(),
                touches_boundary: touches,
                nearly_finite: arms.iter().all(|&a| arm_is_rake_free(p, a)),
            });
        }
        counts.insert(d, here.len() as u64);
        if Some(d) == max_depth {
            components = here;
        }
    }
    Ok(DifferenceForestReport { counts, components, certificate })
}

/// `q` is obtained from `p` by shrinking decorations: same core and arms,
/// and every decoration of `q` embeds rooted into the one of `p` at the same
/// position.
pub fn is_sub_presentation(q: &TreePresentation, p: &TreePresentation) -> bool {
    if q.core() != p.core() || q.arms().len() != p.arms().len() {
        return false;
    }
    q.arms().iter().zip(p.arms()).enumerate().all(|(arm, (qa, pa))| {
        if qa.name != pa.name || qa.attach != pa.attach {
            return false;
        }
        match (&qa.seq, &pa.seq) {
            (DecorationSeq::EventuallyPeriodic { .. }, DecorationSeq::EventuallyPeriodic { .. }) => {
                let horizon = qa.seq.prefix_len()
                    + pa.seq.prefix_len()
                    + crate::presentation::lcm(qa.seq.period_len(), pa.seq.period_len());
                (0..horizon).all(|n| embeds_rooted(&q.decoration(arm, n), &p.decoration(arm, n)).is_some())
            }
            (a, b) => a == b,
        }
    })
}

/// First spine vertex of degree ≥ 3 along the invariant ray, in `≤_f` order.
fn first_branch_on_ray(p: &TreePresentation, ray: &crate::embedding::RayDescriptor) -> Option<Vertex> {
    let limit = ray.head.len() as u64 + ray.from + p.max_prefix_len() + p.period_lcm() + 2;
    (0..limit).map(|i| ray.vertex(i)).find(|&v| p.degree(v) >= 3)
}

/// The sibling `S_k`: the tree with the branches at `f(s), …, f^k(s)` made
/// trivial, where `s` is the first vertex of degree ≥ 3 on the invariant
/// ray of the parabolic embedding `f`.
pub fn construct_sibling_sk(p: &TreePresentation, f: &PresentedEmbedding, k: u32) -> Result<TreePresentation, SiblingError> {
    if p.is_ray() {
        return Err(SiblingError::IsRay);
    }
    let Classification::Parabolic { ray, direction, .. } = classify(p, f)? else {
        return Err(SiblingError::NotParabolic);
    };
    let regular = p.end_regularity(direction.arm).map_err(|e| SiblingError::Unsupported(e.to_string()))?;
    if !regular.is_regular() {
        return Err(SiblingError::NonRegularDirection);
    }
    let s = first_branch_on_ray(p, &ray)
        .ok_or_else(|| SiblingError::Unsupported("no vertex of degree 3 on the invariant ray".into()))?;
    let ev = Evaluator::new(p, p, f);
    let mut positions = BTreeSet::new();
    let mut x = s;
    for _ in 0..k {
        x = ev.image(x).ok_or_else(|| SiblingError::Unsupported(format!("no image for {x:?}")))?;
        match x {
            Vertex::Spine { arm, pos } if arm == direction.arm => {
                positions.insert(pos);
            }
            _ => return Err(SiblingError::Unsupported(format!("f^i(s) = {x:?} is not on the direction spine"))),
        }
    }
    let q = p
        .with_trivial_decorations(direction.arm, &positions)
        .map_err(|e| SiblingError::Unsupported(e.to_string()))?;
    if !is_sub_presentation(&q, p) {
        return Err(SiblingError::Postcondition("S_k is not contained in the tree".into()));
    }
    let witness = power(p, f, k + 1)?;
    if let Err(v) = validate_into(p, &q, &witness) {
        return Err(SiblingError::Postcondition(format!("f^(k+1) does not embed the tree into S_k: {v:?}")));
    }
    Ok(q)
}

#[derive(Clone, Debug)]
pub struct SiblingFamily {
    pub base: TreePresentation,
    pub embedding: PresentedEmbedding,
    /// `S_1, …, S_n`.
    pub members: Vec<TreePresentation>,
    /// `f^{k+1}`, embedding the base into `S_k`.
    pub witnesses: Vec<PresentedEmbedding>,
}

impl SiblingFamily {
    /// Base first, then `S_1, …, S_n`.
    pub fn chain(&self) -> Vec<&TreePresentation> {
        std::iter::once(&self.base).chain(self.members.iter()).collect()
    }

    /// Each member is a proper sub-presentation of the previous one and every
    /// witness validates.
    pub fn check(&self) -> bool {
        let chain = self.chain();
        chain.windows(2).all(|w| is_sub_presentation(w[1], w[0]) && w[0] != w[1])
            && self
                .members
                .iter()
                .zip(&self.witnesses)
                .all(|(s, g)| validate_into(&self.base, s, g).is_ok())
    }
}

pub fn build_sibling_family(p: &TreePresentation, f: &PresentedEmbedding, n: u32) -> Result<SiblingFamily, SiblingError> {
    let mut members = Vec::new();
    let mut witnesses = Vec::new();
    for k in 1..=n {
        members.push(construct_sibling_sk(p, f, k)?);
        witnesses.push(power(p, f, k + 1)?);
    }
    Ok(SiblingFamily { base: p.clone(), embedding: f.clone(), members, witnesses })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PairSeparation {
    pub i: usize,
    pub j: usize,
    /// First truncation depth where the codes differ.
    pub depth: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NonIsoReport {
    pub all_distinct: bool,
    pub pairs: Vec<PairSeparation>,
}

pub fn verify_pairwise_noniso(members: &[&TreePresentation], depth: u64) -> NonIsoReport {
    let mut pairs = Vec::new();
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let d = first_difference(members[i], members[j], depth).or_else(|| {
                // Pointed truncations can agree while the trees differ in
                // how many vertices of some degree they have.
                match (members[i].degree_census(), members[j].degree_census()) {
                    (Some(a), Some(b)) if a != b => Some(depth),
                    _ => None,
                }
            });
            pairs.push(PairSeparation { i, j, depth: d });
        }
    }
    NonIsoReport { all_distinct: pairs.iter().all(|p| p.depth.is_some()), pairs }
}

/// Why one tree cannot embed in another.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstruction {
    /// Ends map injectively to ends.
    MoreEnds { ends: usize, available: usize },
    MaxDegree { needed: usize, available: usize },
    /// A rake cannot embed in a nearly finite tree.
    Rake,
}

fn obstruction(from: &TreePresentation, into: &TreePresentation) -> Option<Obstruction> {
    if from.arms().len() > into.arms().len() {
        return Some(Obstruction::MoreEnds { ends: from.arms().len(), available: into.arms().len() });
    }
    if let Some(available) = into.max_degree() {
        match from.max_degree() {
            Some(needed) if needed > available => return Some(Obstruction::MaxDegree { needed, available }),
            None => return Some(Obstruction::MaxDegree { needed: usize::MAX, available }),
            _ => {}
        }
    }
    (!from.is_nearly_finite() && into.is_nearly_finite()).then_some(Obstruction::Rake)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Equimorphy {
    Mutual { forward: PresentedEmbedding, backward: PresentedEmbedding },
    /// Exactly one direction holds: the first tree embeds in the second
    /// (`first_into_second`) or the reverse, and the other is obstructed.
    OneWay { first_into_second: bool, witness: PresentedEmbedding, obstruction: Obstruction },
    Unknown { forward: Option<PresentedEmbedding>, backward: Option<PresentedEmbedding> },
}

/// Searches tail-regular embeddings both ways. Without an explicit shift
/// bound, shifts up to the lcm of the periods plus the longest prefix are
/// tried, so that prefixes of different lengths can be lined up.
pub fn equimorphy_check(p: &TreePresentation, q: &TreePresentation, bounds: &SearchBounds) -> Equimorphy {
    let mut b = *bounds;
    if b.shift_bound.is_none() {
        b.shift_bound = Some(
            crate::presentation::lcm(p.period_lcm(), q.period_lcm()) + p.max_prefix_len().max(q.max_prefix_len()),
        );
    }
    let forward = search_embeddings_into(p, q, &b).into_iter().next();
    let backward = search_embeddings_into(q, p, &b).into_iter().next();
    match (forward, backward) {
        (Some(forward), Some(backward)) => Equimorphy::Mutual { forward, backward },
        (Some(w), None) => match obstruction(q, p) {
            Some(o) => Equimorphy::OneWay { first_into_second: true, witness: w, obstruction: o },
            None => Equimorphy::Unknown { forward: Some(w), backward: None },
        },
        (None, Some(w)) => match obstruction(p, q) {
            Some(o) => Equimorphy::OneWay { first_into_second: false, witness: w, obstruction: o },
            None => Equimorphy::Unknown { forward: None, backward: Some(w) },
        },
        (None, None) => Equimorphy::Unknown { forward: None, backward: None },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ExactlyOne,
    Infinite,
    OpenCase,
}

pub mod tags {
    pub const CLASSICAL_RAY: &str = "Classical-Ray";
    pub const NO_DIRECTION: &str = "Prop-NoDirection-One";
    pub const TWO_DIRECTIONS: &str = "Prop-TwoDirections-One";
    pub const PARABOLIC: &str = "Thm-Parabolic-Infinite";
    pub const NON_REGULAR: &str = "Cor-NonRegular-Infinite";
    pub const ONE_DIRECTION_OPEN: &str = "Thm-OneDirection-Open";
}

/// Summary of an `S_k` family for reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FamilySummary {
    pub arm: ArmId,
    /// Decoration sequence of the direction arm for `S_1, …, S_n`.
    pub members: Vec<String>,
    pub pairwise: NonIsoReport,
    pub checked: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub embedding: Option<PresentedEmbedding>,
    pub classification: Option<Classification>,
    pub direction_witnesses: Vec<(End, PresentedEmbedding)>,
    pub family: Option<FamilySummary>,
    pub components: Option<ComponentsCertificate>,
    pub non_regular_end: Option<End>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SiblingCertificate {
    pub verdict: Verdict,
    pub theorem_tag: &'static str,
    /// Further results that also apply.
    pub also: Vec<&'static str>,
    /// One-line verdict, e.g. `Infinite (Theorem: parabolic, non-ray)`.
    pub summary: String,
    pub reason: String,
    /// Set when the verdict rests on a classical fact rather than the
    /// implemented constructions.
    pub classical: bool,
    pub directions: Vec<End>,
    pub witness: Witness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportBounds {
    pub search: SearchBounds,
    pub family_size: u32,
    pub noniso_depth: u64,
}

impl Default for ReportBounds {
    fn default() -> Self {
        Self { search: SearchBounds::default(), family_size: 3, noniso_depth: 12 }
    }
}

/// Decides the sibling number where the case analysis allows it.
///
/// 1. A ray has exactly one sibling (classical).
/// 2. No direction: exactly one.
/// 3. Two directions: exactly one.
/// 4. A parabolic embedding: infinitely many, witnessed by the `S_k` family
///    when its direction is regular, and by the non-regular end otherwise.
/// 5. A non-elliptic embedding preserving a non-regular end: infinitely many.
/// 6. Otherwise the case is open.
pub fn sibling_number_report(p: &TreePresentation, bounds: &ReportBounds) -> SiblingCertificate {
    let classified = classified_embeddings(p, &bounds.search);
    let dirs = directions_of(&classified);
    let directions = dirs.ends();
    let mut cert = SiblingCertificate {
        verdict: Verdict::OpenCase,
        theorem_tag: tags::ONE_DIRECTION_OPEN,
        also: Vec::new(),
        summary: String::new(),
        reason: String::new(),
        classical: false,
        directions: directions.clone(),
        witness: Witness {
            direction_witnesses: dirs.witnesses.iter().map(|(e, f)| (*e, f.clone())).collect(),
            ..Witness::default()
        },
    };

    if p.is_ray() {
        cert.verdict = Verdict::ExactlyOne;
        cert.theorem_tag = tags::CLASSICAL_RAY;
        cert.classical = true;
        cert.summary = "ExactlyOne (classical: ray)".into();
        cert.reason = "every sibling of a ray is a ray".into();
        return cert;
    }
    if dirs.is_empty() {
        cert.verdict = Verdict::ExactlyOne;
        cert.theorem_tag = tags::NO_DIRECTION;
        cert.summary = "ExactlyOne (Proposition: no direction)".into();
        cert.reason = "every embedding found is elliptic".into();
        return cert;
    }
    if dirs.len() == 2 {
        cert.verdict = Verdict::ExactlyOne;
        cert.theorem_tag = tags::TWO_DIRECTIONS;
        cert.summary = "ExactlyOne (Proposition: two directions)".into();
        cert.reason = "embeddings with two distinct directions".into();
        return cert;
    }

    let parabolic = classified
        .iter()
        .filter(|(_, c)| c.is_parabolic())
        .min_by_key(|(f, c)| (c.periodicity(), f.clone()));
    if let Some((f, c)) = parabolic {
        let end = c.direction().expect("parabolic");
        let regular = p.end_regularity(end.arm).map(|r| r.is_regular()).unwrap_or(false);
        cert.verdict = Verdict::Infinite;
        cert.witness.embedding = Some(f.clone());
        cert.witness.classification = Some(c.clone());
        if regular {
            cert.theorem_tag = tags::PARABOLIC;
            cert.summary = "Infinite (Theorem: parabolic, non-ray)".into();
            cert.reason = "parabolic embedding with a regular direction".into();
            if let Ok(family) = build_sibling_family(p, f, bounds.family_size) {
                let pairwise = verify_pairwise_noniso(&family.chain(), bounds.noniso_depth);
                cert.witness.family = Some(FamilySummary {
                    arm: end.arm,
                    members: family.members.iter().map(|s| s.arm_sketch(end.arm)).collect(),
                    pairwise,
                    checked: family.check(),
                });
            }
        } else {
            cert.theorem_tag = tags::NON_REGULAR;
            cert.also.push(tags::PARABOLIC);
            cert.summary = "Infinite (Corollary: non-regular end)".into();
            cert.reason = "parabolic embedding preserving a non-regular end forward".into();
            cert.witness.non_regular_end = Some(end);
            cert.witness.components = infinite_components_certificate(p, f);
        }
        return cert;
    }

    for (f, c) in classified.iter().filter(|(_, c)| !c.is_elliptic()) {
        let hit = p.ends().into_iter().find(|&e| {
            let non_regular = p.end_regularity(e.arm).map(|r| !r.is_regular()).unwrap_or(false);
            non_regular && (preserves_forward(f, e) || preserves_backward(f, e))
        });
        if let Some(e) = hit {
            cert.verdict = Verdict::Infinite;
            cert.theorem_tag = tags::NON_REGULAR;
            cert.summary = "Infinite (Corollary: non-regular end)".into();
            cert.reason = "non-elliptic embedding preserving a non-regular end".into();
            cert.witness.embedding = Some(f.clone());
            cert.witness.classification = Some(c.clone());
            cert.witness.non_regular_end = Some(e);
            cert.witness.components = infinite_components_certificate(p, f);
            return cert;
        }
    }

    cert.summary = "OpenCase (one direction, hyperbolic only)".into();
    cert.reason = format!(
        "{} direction(s), no parabolic embedding, no preserved non-regular end",
        dirs.len()
    );
    if let Some((f, c)) = classified.iter().find(|(_, c)| c.is_hyperbolic()) {
        cert.witness.embedding = Some(f.clone());
        cert.witness.classification = Some(c.clone());
    }
    cert
}
