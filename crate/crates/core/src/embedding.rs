//! Self-embeddings of presented trees in tail-regular form.
//!
//! An embedding is a finite patch map on the *patch region* (the core plus
//! every arm position below the rule's `valid_from`, with decorations) and one
//! tail rule per arm: from `valid_from` on, `a_n ↦ b_{n+shift}` and the
//! decoration at `a_n` goes into the decoration at `b_{n+shift}` by the
//! canonical rooted embedding.
//!
//! A decoration at a patch position may be left out of the patch when its
//! spine vertex maps to a spine vertex; it is then completed by the canonical
//! rooted embedding as well.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::finite_tree::embeds_rooted;
use crate::presentation::{lcm, ArmId, Count, DecorationSeq, End, TreePresentation, Vertex};

/// Eventual behavior of an embedding on one arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TailRule {
    pub source: ArmId,
    pub target: ArmId,
    pub shift: i64,
    pub valid_from: u64,
}

impl TailRule {
    pub fn image_pos(&self, pos: u64) -> u64 {
        u64::try_from(pos as i64 + self.shift).expect("rule positions stay non-negative")
    }

    pub fn is_self(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct PresentedEmbedding {
    #[serde(serialize_with = "patch_pairs")]
    pub patch: BTreeMap<Vertex, Vertex>,
    /// Sorted by source arm.
    pub rules: Vec<TailRule>,
}

fn patch_pairs<S: serde::Serializer>(patch: &BTreeMap<Vertex, Vertex>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(patch.iter())
}

impl PresentedEmbedding {
    pub fn new(patch: BTreeMap<Vertex, Vertex>, mut rules: Vec<TailRule>) -> Self {
        rules.sort();
        Self { patch, rules }
    }

    pub fn rule(&self, arm: ArmId) -> Option<&TailRule> {
        self.rules.iter().find(|r| r.source == arm)
    }

    pub fn max_abs_shift(&self) -> u64 {
        self.rules.iter().map(|r| r.shift.unsigned_abs()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Error, Serialize, Deserialize)]
pub enum Violation {
    #[error("arm {arm} has no tail rule")]
    MissingRule { arm: ArmId },
    #[error("arm {arm} has more than one tail rule")]
    DuplicateRule { arm: ArmId },
    #[error("unknown arm {arm}")]
    UnknownArm { arm: ArmId },
    #[error("rule on arm {arm} reaches a negative position")]
    NegativeTarget { arm: ArmId },
    #[error("arms {0} and {1} map into the same arm")]
    ArmCollision(ArmId, ArmId),
    #[error("vertex {0:?} does not exist")]
    UnknownVertex(Vertex),
    #[error("patch entry {0:?} lies outside the patch region")]
    PatchOutsideRegion(Vertex),
    #[error("patch has no image for {0:?}")]
    PatchIncomplete(Vertex),
    #[error("edge {0:?}-{1:?} is not mapped to an edge")]
    AdjacencyBroken(Vertex, Vertex),
    #[error("{0:?} and {1:?} have the same image")]
    NotInjective(Vertex, Vertex),
    #[error("decoration at position {n} of arm {arm} has no image")]
    CertificateFails { arm: ArmId, n: u64 },
    #[error("patch and tail rule of arm {arm} disagree at the boundary")]
    BoundaryMismatch { arm: ArmId },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("embedding does not validate ({} violations)", .0.len())]
    NotValidated(Vec<Violation>),
    #[error("embedding is elliptic")]
    IsElliptic,
    #[error("inconsistent embedding: {0}")]
    Inconsistent(String),
}

type DecoKey = (ArmId, u64, ArmId, u64);

/// Evaluates an embedding vertex by vertex, caching decoration maps.
pub struct Evaluator<'a> {
    src: &'a TreePresentation,
    dst: &'a TreePresentation,
    f: &'a PresentedEmbedding,
    patched_decos: BTreeSet<(ArmId, u64)>,
    maps: RefCell<HashMap<DecoKey, Option<Rc<Vec<usize>>>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(src: &'a TreePresentation, dst: &'a TreePresentation, f: &'a PresentedEmbedding) -> Self {
        let patched_decos = f
            .patch
            .keys()
            .filter_map(|v| match v {
                Vertex::Deco { arm, pos, .. } => Some((*arm, *pos)),
                _ => None,
            })
            .collect();
        Self { src, dst, f, patched_decos, maps: RefCell::new(HashMap::new()) }
    }

    /// Canonical rooted embedding of the decoration at `src` `(a, n)` into
    /// the decoration at `dst` `(b, m)`.
    fn deco_map(&self, a: ArmId, n: u64, b: ArmId, m: u64) -> Option<Rc<Vec<usize>>> {
        let key = (a, self.src.arm(a).seq.reduce(n), b, self.dst.arm(b).seq.reduce(m));
        if let Some(hit) = self.maps.borrow().get(&key) {
            return hit.clone();
        }
        let map = embeds_rooted(&self.src.decoration(a, n), &self.dst.decoration(b, m)).map(Rc::new);
        self.maps.borrow_mut().insert(key, map.clone());
        map
    }

    pub fn image(&self, v: Vertex) -> Option<Vertex> {
        if let Some(&w) = self.f.patch.get(&v) {
            return Some(w);
        }
        match v {
            Vertex::Core(_) => None,
            Vertex::Spine { arm, pos } => {
                let r = self.f.rule(arm)?;
                (pos >= r.valid_from).then(|| Vertex::Spine { arm: r.target, pos: r.image_pos(pos) })
            }
            Vertex::Deco { arm, pos, node } => {
                let r = self.f.rule(arm)?;
                let (b, m) = if pos >= r.valid_from {
                    (r.target, r.image_pos(pos))
                } else if !self.patched_decos.contains(&(arm, pos)) {
                    match self.f.patch.get(&Vertex::Spine { arm, pos })? {
                        Vertex::Spine { arm: b, pos: m } => (*b, *m),
                        _ => return None,
                    }
                } else {
                    return None;
                };
                let map = self.deco_map(arm, pos, b, m)?;
                Some(Vertex::Deco { arm: b, pos: m, node: *map.get(node)? })
            }
        }
    }

    /// The tail-rule vertex mapped onto `t`, if any.
    pub fn rule_preimage(&self, t: Vertex) -> Option<Vertex> {
        let (b, m) = t.arm_pos()?;
        let r = self.f.rules.iter().find(|r| r.target == b)?;
        let n = m as i64 - r.shift;
        if n < r.valid_from as i64 {
            return None;
        }
        let n = n as u64;
        match t {
            Vertex::Spine { .. } => Some(Vertex::Spine { arm: r.source, pos: n }),
            Vertex::Deco { node: x, .. } => {
                let map = self.deco_map(r.source, n, b, m)?;
                let i = map.iter().position(|&y| y == x)?;
                Some(Vertex::Deco { arm: r.source, pos: n, node: i })
            }
            Vertex::Core(_) => None,
        }
    }
}

/// Vertex of `src` adjacent to `a_{pos}` on the core side.
fn spine_predecessor(src: &TreePresentation, arm: ArmId, pos: u64) -> Vertex {
    if pos == 0 {
        Vertex::Core(src.arm(arm).attach)
    } else {
        Vertex::Spine { arm, pos: pos - 1 }
    }
}

/// Core plus every arm position below its rule's `valid_from`, with
/// decorations.
pub fn patch_region(src: &TreePresentation, rules: &[TailRule]) -> Vec<Vertex> {
    let mut out: Vec<Vertex> = (0..src.core().len()).map(Vertex::Core).collect();
    for r in rules {
        if r.source >= src.arms().len() {
            continue;
        }
        for pos in 0..r.valid_from {
            out.push(Vertex::Spine { arm: r.source, pos });
            let n = src.decoration(r.source, pos).len();
            out.extend((1..n).map(|node| Vertex::Deco { arm: r.source, pos, node }));
        }
    }
    out
}

fn seq_max_len(seq: &DecorationSeq) -> u64 {
    match seq {
        DecorationSeq::EventuallyPeriodic { prefix, period } => {
            prefix.iter().chain(period).map(|t| t.len() as u64).max().unwrap_or(1)
        }
        DecorationSeq::Generated { .. } => 1,
    }
}

/// Checks that every decoration along `rule` embeds rooted into its image.
/// Returns the first failing position.
///
/// Generated pairs of the same shape are decided from the affine rules.
/// Otherwise positions are checked explicitly up to a horizon past which
/// periodic pairs repeat and growing decorations dominate every listed one.
pub fn rule_certificate(src: &TreePresentation, dst: &TreePresentation, rule: &TailRule) -> Result<(), u64> {
    let sa = &src.arm(rule.source).seq;
    let db = &dst.arm(rule.target).seq;
    let start = rule.valid_from;
    let target = |n: u64| rule.image_pos(n);
    if let (
        DecorationSeq::Generated { shape: s1, rule: r1 },
        DecorationSeq::Generated { shape: s2, rule: r2 },
    ) = (sa, db)
    {
        if s1 == s2 {
            if r1.slope <= r2.slope {
                return if r1.eval(start) <= r2.eval(target(start)) { Ok(()) } else { Err(start) };
            }
            return Err((start..).find(|&n| r1.eval(n) > r2.eval(target(n))).expect("steeper rule overtakes"));
        }
    }
    let horizon = sa.prefix_len()
        + db.prefix_len()
        + rule.shift.unsigned_abs()
        + lcm(sa.period_len(), db.period_len())
        + seq_max_len(sa).max(seq_max_len(db))
        + 2;
    for n in start..start + horizon {
        if embeds_rooted(&sa.at(n), &db.at(target(n))).is_none() {
            return Err(n);
        }
    }
    Ok(())
}

pub fn validate(p: &TreePresentation, f: &PresentedEmbedding) -> Result<(), Vec<Violation>> {
    validate_into(p, p, f)
}

/// Checks that `f` is an embedding of the tree presented by `src` into the
/// one presented by `dst`.
pub fn validate_into(src: &TreePresentation, dst: &TreePresentation, f: &PresentedEmbedding) -> Result<(), Vec<Violation>> {
    let mut out = BTreeSet::new();
    let mut by_source: BTreeMap<ArmId, &TailRule> = BTreeMap::new();
    let mut by_target: BTreeMap<ArmId, ArmId> = BTreeMap::new();
    for r in &f.rules {
        if r.source >= src.arms().len() {
            out.insert(Violation::UnknownArm { arm: r.source });
            continue;
        }
        if r.target >= dst.arms().len() {
            out.insert(Violation::UnknownArm { arm: r.target });
            continue;
        }
        if by_source.insert(r.source, r).is_some() {
            out.insert(Violation::DuplicateRule { arm: r.source });
        }
        if let Some(other) = by_target.insert(r.target, r.source) {
            out.insert(Violation::ArmCollision(other.min(r.source), other.max(r.source)));
        }
        if (r.valid_from as i64) + r.shift < 0 {
            out.insert(Violation::NegativeTarget { arm: r.source });
        }
    }
    for arm in 0..src.arms().len() {
        if !by_source.contains_key(&arm) {
            out.insert(Violation::MissingRule { arm });
        }
    }
    if !out.is_empty() {
        return Err(out.into_iter().collect());
    }

    let region = patch_region(src, &f.rules);
    let region_set: HashSet<Vertex> = region.iter().copied().collect();
    for (&k, &w) in &f.patch {
        if !src.contains(k) {
            out.insert(Violation::UnknownVertex(k));
        } else if !region_set.contains(&k) {
            out.insert(Violation::PatchOutsideRegion(k));
        }
        if !dst.contains(w) {
            out.insert(Violation::UnknownVertex(w));
        }
    }
    if !out.is_empty() {
        return Err(out.into_iter().collect());
    }

    for r in &f.rules {
        if let Err(n) = rule_certificate(src, dst, r) {
            out.insert(Violation::CertificateFails { arm: r.source, n });
        }
    }

    let ev = Evaluator::new(src, dst, f);
    let mut image: HashMap<Vertex, Vertex> = HashMap::new();
    for &u in &region {
        match ev.image(u) {
            Some(w) => {
                image.insert(u, w);
            }
            None => {
                out.insert(match u {
                    Vertex::Deco { arm, pos, .. } => Violation::CertificateFails { arm, n: pos },
                    _ => Violation::PatchIncomplete(u),
                });
            }
        }
    }
    for &u in &region {
        let Some(p) = src.toward_base(u) else { continue };
        if let (Some(&iu), Some(&ip)) = (image.get(&u), image.get(&p)) {
            if !dst.are_adjacent(iu, ip) {
                out.insert(Violation::AdjacencyBroken(p, u));
            }
        }
    }
    for r in &f.rules {
        let first = Vertex::Spine { arm: r.source, pos: r.valid_from };
        let pred = spine_predecessor(src, r.source, r.valid_from);
        if let (Some(&ip), Some(ifirst)) = (image.get(&pred), ev.image(first)) {
            if !dst.are_adjacent(ip, ifirst) {
                out.insert(Violation::BoundaryMismatch { arm: r.source });
            }
        }
    }
    let mut seen: HashMap<Vertex, Vertex> = HashMap::new();
    for &u in &region {
        let Some(&w) = image.get(&u) else { continue };
        if let Some(&other) = seen.get(&w) {
            out.insert(Violation::NotInjective(other, u));
        } else {
            seen.insert(w, u);
        }
        if let Some(pre) = ev.rule_preimage(w) {
            out.insert(Violation::NotInjective(u, pre));
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out.into_iter().collect())
    }
}

/// The identity embedding.
pub fn identity(p: &TreePresentation) -> PresentedEmbedding {
    PresentedEmbedding::new(
        (0..p.core().len()).map(|i| (Vertex::Core(i), Vertex::Core(i))).collect(),
        (0..p.arms().len()).map(|a| TailRule { source: a, target: a, shift: 0, valid_from: 0 }).collect(),
    )
}

/// Lowers each `valid_from` as far as the patch agrees with the rule, and
/// drops the patch entries the rule then covers.
pub fn normalize(src: &TreePresentation, dst: &TreePresentation, f: &PresentedEmbedding) -> PresentedEmbedding {
    let mut g = f.clone();
    for i in 0..g.rules.len() {
        loop {
            let r = g.rules[i];
            if r.valid_from == 0 || (r.valid_from as i64 - 1) + r.shift < 0 {
                break;
            }
            let pos = r.valid_from - 1;
            let spine = Vertex::Spine { arm: r.source, pos };
            let target = Vertex::Spine { arm: r.target, pos: r.image_pos(pos) };
            if g.patch.get(&spine) != Some(&target) {
                break;
            }
            let n = src.decoration(r.source, pos).len();
            let mut lowered = g.clone();
            lowered.rules[i].valid_from = pos;
            lowered.patch.remove(&spine);
            for node in 1..n {
                lowered.patch.remove(&Vertex::Deco { arm: r.source, pos, node });
            }
            let agrees = {
                let before = Evaluator::new(src, dst, &g);
                let after = Evaluator::new(src, dst, &lowered);
                (1..n).all(|node| {
                    let d = Vertex::Deco { arm: r.source, pos, node };
                    let w = after.image(d);
                    w.is_some() && w == before.image(d)
                })
            };
            if !agrees {
                break;
            }
            g = lowered;
        }
    }
    g
}

/// `f ∘ g` for self-embeddings of `p`.
pub fn compose(p: &TreePresentation, f: &PresentedEmbedding, g: &PresentedEmbedding) -> Result<PresentedEmbedding, EmbeddingError> {
    let mut rules = Vec::with_capacity(g.rules.len());
    for rg in &g.rules {
        let rf = f
            .rule(rg.target)
            .ok_or_else(|| EmbeddingError::Inconsistent(format!("no rule for arm {}", rg.target)))?;
        let need = (rf.valid_from as i64 - rg.shift).max(0) as u64;
        rules.push(TailRule {
            source: rg.source,
            target: rf.target,
            shift: rg.shift + rf.shift,
            valid_from: rg.valid_from.max(need),
        });
    }
    let ef = Evaluator::new(p, p, f);
    let eg = Evaluator::new(p, p, g);
    let mut patch = BTreeMap::new();
    for u in patch_region(p, &rules) {
        let w = eg
            .image(u)
            .and_then(|x| ef.image(x))
            .ok_or_else(|| EmbeddingError::Inconsistent(format!("no image for {u:?}")))?;
        patch.insert(u, w);
    }
    Ok(normalize(p, p, &PresentedEmbedding::new(patch, rules)))
}

pub fn power(p: &TreePresentation, f: &PresentedEmbedding, k: u32) -> Result<PresentedEmbedding, EmbeddingError> {
    let mut acc = identity(p);
    for _ in 0..k {
        acc = compose(p, f, &acc)?;
    }
    Ok(acc)
}

/// Where an embedding's displacement is minimal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedStructure {
    Vertex(Vertex),
    /// An edge whose ends are swapped.
    Edge(Vertex, Vertex),
    Ray(RayDescriptor),
    DoubleRay(DoubleRayDescriptor),
}

/// The ray `head, a_from, a_{from+1}, …` on arm `arm`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayDescriptor {
    pub head: Vec<Vertex>,
    pub arm: ArmId,
    pub from: u64,
}

impl RayDescriptor {
    pub fn vertex(&self, i: u64) -> Vertex {
        match self.head.get(i as usize) {
            Some(&v) => v,
            None => Vertex::Spine { arm: self.arm, pos: self.from + i - self.head.len() as u64 },
        }
    }

    pub fn index_of(&self, v: Vertex) -> Option<u64> {
        if let Some(i) = self.head.iter().position(|&h| h == v) {
            return Some(i as u64);
        }
        match v {
            Vertex::Spine { arm, pos } if arm == self.arm && pos >= self.from => {
                Some(self.head.len() as u64 + pos - self.from)
            }
            _ => None,
        }
    }
}

/// The double ray `… b_1 b_0 c_0 … c_m a_0 a_1 …` where `c` is the core path
/// from the attach vertex of `backward_arm` to that of `forward_arm`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleRayDescriptor {
    pub backward_arm: ArmId,
    pub core_path: Vec<usize>,
    pub forward_arm: ArmId,
}

impl DoubleRayDescriptor {
    /// Position along the double ray, increasing toward the forward end.
    pub fn coordinate(&self, v: Vertex) -> Option<i64> {
        match v {
            Vertex::Core(c) => self.core_path.iter().position(|&x| x == c).map(|i| i as i64),
            Vertex::Spine { arm, pos } if arm == self.forward_arm => Some(self.core_path.len() as i64 + pos as i64),
            Vertex::Spine { arm, pos } if arm == self.backward_arm => Some(-1 - pos as i64),
            _ => None,
        }
    }

    pub fn vertex(&self, c: i64) -> Vertex {
        let m = self.core_path.len() as i64;
        if c < 0 {
            Vertex::Spine { arm: self.backward_arm, pos: (-1 - c) as u64 }
        } else if c < m {
            Vertex::Core(self.core_path[c as usize])
        } else {
            Vertex::Spine { arm: self.forward_arm, pos: (c - m) as u64 }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    Elliptic { fixed: FixedStructure },
    Parabolic { ray: RayDescriptor, direction: End, periodicity: u64 },
    Hyperbolic { axis: DoubleRayDescriptor, forward: End, backward: End, periodicity: u64 },
}

impl Classification {
    pub fn is_elliptic(&self) -> bool {
        matches!(self, Classification::Elliptic { .. })
    }

    pub fn is_parabolic(&self) -> bool {
        matches!(self, Classification::Parabolic { .. })
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self, Classification::Hyperbolic { .. })
    }

    pub fn direction(&self) -> Option<End> {
        match self {
            Classification::Elliptic { .. } => None,
            Classification::Parabolic { direction, .. } => Some(*direction),
            Classification::Hyperbolic { forward, .. } => Some(*forward),
        }
    }

    pub fn periodicity(&self) -> Option<u64> {
        match self {
            Classification::Elliptic { .. } => None,
            Classification::Parabolic { periodicity, .. } | Classification::Hyperbolic { periodicity, .. } => {
                Some(*periodicity)
            }
        }
    }

    pub fn fixed_structure(&self) -> FixedStructure {
        match self {
            Classification::Elliptic { fixed } => fixed.clone(),
            Classification::Parabolic { ray, .. } => FixedStructure::Ray(ray.clone()),
            Classification::Hyperbolic { axis, .. } => FixedStructure::DoubleRay(axis.clone()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Classification::Elliptic { .. } => "elliptic",
            Classification::Parabolic { .. } => "parabolic",
            Classification::Hyperbolic { .. } => "hyperbolic",
        }
    }
}

/// Elliptic, parabolic or hyperbolic, read off the arm permutation and the
/// shifts around its cycles.
///
/// A cycle of arms with nonzero total shift would move two ends forward, so
/// only fixed arms can carry the direction. One fixed arm translated forward
/// gives a parabolic embedding; a second one translated backward gives a
/// hyperbolic one. With no translated arm the embedding fixes a vertex or
/// swaps an edge inside the patch region or at a rule boundary.
pub fn classify(p: &TreePresentation, f: &PresentedEmbedding) -> Result<Classification, EmbeddingError> {
    validate(p, f).map_err(EmbeddingError::NotValidated)?;
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    let mut visited = vec![false; p.arms().len()];
    for start in 0..p.arms().len() {
        if visited[start] {
            continue;
        }
        let (mut a, mut len, mut total) = (start, 0, 0i64);
        loop {
            visited[a] = true;
            let r = f.rule(a).expect("validated");
            total += r.shift;
            len += 1;
            a = r.target;
            if a == start {
                break;
            }
            if visited[a] {
                return Err(EmbeddingError::Inconsistent("arm map is not a permutation".into()));
            }
        }
        match (len, total.signum()) {
            (_, 0) => {}
            (1, 1) => forward.push((start, total as u64)),
            (1, _) => backward.push((start, (-total) as u64)),
            _ => return Err(EmbeddingError::Inconsistent("arm cycle with nonzero total shift".into())),
        }
    }
    match (forward.as_slice(), backward.as_slice()) {
        ([], []) => Ok(Classification::Elliptic { fixed: find_fixed(p, f)? }),
        ([(a, s)], []) => Ok(Classification::Parabolic {
            ray: maximal_ray(p, f, *a, *s)?,
            direction: End { arm: *a },
            periodicity: *s,
        }),
        ([(a, s)], [(b, t)]) if s == t => Ok(Classification::Hyperbolic {
            axis: DoubleRayDescriptor {
                backward_arm: *b,
                core_path: p.core().path(p.arm(*b).attach, p.arm(*a).attach),
                forward_arm: *a,
            },
            forward: End { arm: *a },
            backward: End { arm: *b },
            periodicity: *s,
        }),
        _ => Err(EmbeddingError::Inconsistent("translated arms do not match a single axis".into())),
    }
}

fn find_fixed(p: &TreePresentation, f: &PresentedEmbedding) -> Result<FixedStructure, EmbeddingError> {
    let mut scan: BTreeSet<Vertex> = patch_region(p, &f.rules).into_iter().collect();
    for r in &f.rules {
        scan.insert(Vertex::Spine { arm: r.source, pos: r.valid_from });
        scan.insert(Vertex::Spine { arm: r.source, pos: r.valid_from + 1 });
    }
    let base = p.basepoint();
    let order: Vec<Vertex> = std::iter::once(base).chain(scan.iter().copied().filter(|&v| v != base)).collect();
    let ev = Evaluator::new(p, p, f);
    if let Some(&v) = order.iter().find(|&&v| ev.image(v) == Some(v)) {
        return Ok(FixedStructure::Vertex(v));
    }
    for &v in &order {
        if let Some(u) = ev.image(v) {
            if ev.image(u) == Some(v) && p.are_adjacent(u, v) {
                return Ok(FixedStructure::Edge(v.min(u), v.max(u)));
            }
        }
    }
    Err(EmbeddingError::Inconsistent("elliptic embedding without a fixed vertex or edge".into()))
}

/// Extends the translated tail of arm `a` backward while `f` keeps acting on
/// it as a shift by `s`.
fn maximal_ray(p: &TreePresentation, f: &PresentedEmbedding, a: ArmId, s: u64) -> Result<RayDescriptor, EmbeddingError> {
    let vf = f.rule(a).expect("validated").valid_from;
    let mut ray: VecDeque<Vertex> = (0..=s).map(|i| Vertex::Spine { arm: a, pos: vf + i }).collect();
    let ev = Evaluator::new(p, p, f);
    let cap = 4 * (patch_region(p, &f.rules).len() + s as usize) + 16;
    for _ in 0..cap {
        let want = ray[s as usize - 1];
        let prev = p
            .neighbors(ray[0])
            .into_iter()
            .filter(|&w| w != ray[1])
            .find(|&w| ev.image(w) == Some(want));
        match prev {
            Some(w) => ray.push_front(w),
            None => {
                let ray: Vec<Vertex> = ray.into_iter().collect();
                let split = ray
                    .iter()
                    .rposition(|v| !matches!(v, Vertex::Spine { arm, .. } if *arm == a))
                    .map_or(0, |i| i + 1);
                let Vertex::Spine { pos: from, .. } = ray[split] else { unreachable!() };
                return Ok(RayDescriptor { head: ray[..split].to_vec(), arm: a, from });
            }
        }
    }
    Err(EmbeddingError::Inconsistent("invariant ray does not terminate backward".into()))
}

pub fn fixed_structure(p: &TreePresentation, f: &PresentedEmbedding) -> Result<FixedStructure, EmbeddingError> {
    classify(p, f).map(|c| c.fixed_structure())
}

pub fn periodicity(p: &TreePresentation, f: &PresentedEmbedding) -> Result<u64, EmbeddingError> {
    classify(p, f)?.periodicity().ok_or(EmbeddingError::IsElliptic)
}

/// The end the orbit of the basepoint settles in.
pub fn direction(p: &TreePresentation, f: &PresentedEmbedding) -> Result<End, EmbeddingError> {
    direction_from(p, f, p.basepoint())
}

/// The end the orbit of `start` settles in.
pub fn direction_from(p: &TreePresentation, f: &PresentedEmbedding, start: Vertex) -> Result<End, EmbeddingError> {
    let c = classify(p, f)?;
    let end = c.direction().ok_or(EmbeddingError::IsElliptic)?;
    let vf = f.rule(end.arm).expect("validated").valid_from;
    let ev = Evaluator::new(p, p, f);
    let mut x = start;
    let cap = 4 * (patch_region(p, &f.rules).len() + vf as usize) + 16 + p.distance(p.basepoint(), start) as usize;
    for _ in 0..cap {
        if matches!(x.arm_pos(), Some((a, pos)) if a == end.arm && pos >= vf) {
            return Ok(end);
        }
        x = ev.image(x).ok_or_else(|| EmbeddingError::Inconsistent(format!("no image for {x:?}")))?;
    }
    Err(EmbeddingError::Inconsistent("orbit does not settle".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpineOrder {
    LeftOf,
    RightOf,
    Equal,
    NotOnSpine,
}

/// Compares `s` and `t` along the invariant ray or double ray, oriented
/// toward the direction.
pub fn spine_order(p: &TreePresentation, f: &PresentedEmbedding, s: Vertex, t: Vertex) -> Result<SpineOrder, EmbeddingError> {
    let coords: (Option<i64>, Option<i64>) = match classify(p, f)? {
        Classification::Elliptic { .. } => return Err(EmbeddingError::IsElliptic),
        Classification::Parabolic { ray, .. } => {
            (ray.index_of(s).map(|i| i as i64), ray.index_of(t).map(|i| i as i64))
        }
        Classification::Hyperbolic { axis, .. } => (axis.coordinate(s), axis.coordinate(t)),
    };
    Ok(match coords {
        (Some(a), Some(b)) if a < b => SpineOrder::LeftOf,
        (Some(a), Some(b)) if a > b => SpineOrder::RightOf,
        (Some(_), Some(_)) => SpineOrder::Equal,
        _ => SpineOrder::NotOnSpine,
    })
}

/// Some ray of `e` is mapped into itself.
pub fn preserves_forward(f: &PresentedEmbedding, e: End) -> bool {
    f.rule(e.arm).is_some_and(|r| r.is_self() && r.shift >= 0)
}

/// Some ray of `e` is contained in its image.
pub fn preserves_backward(f: &PresentedEmbedding, e: End) -> bool {
    f.rule(e.arm).is_some_and(|r| r.is_self() && r.shift <= 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Defaults to the lcm of all period lengths.
    pub shift_bound: Option<u64>,
    pub patch_radius: u64,
    pub per_schema_limit: usize,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self { shift_bound: None, patch_radius: 1, per_schema_limit: 1 }
    }
}

impl SearchBounds {
    pub fn with_shift_bound(shift_bound: u64) -> Self {
        Self { shift_bound: Some(shift_bound), ..Self::default() }
    }

    pub fn effective_shift_bound(&self, src: &TreePresentation, dst: &TreePresentation) -> u64 {
        self.shift_bound.unwrap_or_else(|| lcm(src.period_lcm(), dst.period_lcm())).max(1)
    }
}

fn injections(k: usize, m: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, m: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..m {
            if !used[j] {
                used[j] = true;
                cur.push(j);
                go(k, m, cur, used, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(k, m, &mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

pub fn search_embeddings(p: &TreePresentation, bounds: &SearchBounds) -> Vec<PresentedEmbedding> {
    search_embeddings_into(p, p, bounds)
}

/// Enumerates tail-regular embeddings of `src` into `dst`: an injection of
/// arms, a shift per arm in `[-S, S]`, and a patch completed by backtracking.
/// Every result validates; results are normalized and sorted.
pub fn search_embeddings_into(src: &TreePresentation, dst: &TreePresentation, bounds: &SearchBounds) -> Vec<PresentedEmbedding> {
    let k = src.arms().len();
    let bound = bounds.effective_shift_bound(src, dst) as i64;
    let mut cert_ok: HashMap<(ArmId, ArmId, i64), bool> = HashMap::new();
    let mut found = BTreeSet::new();
    for sigma in injections(k, dst.arms().len()) {
        let mut shifts = vec![-bound; k];
        loop {
            let rules: Vec<TailRule> = (0..k)
                .map(|a| TailRule {
                    source: a,
                    target: sigma[a],
                    shift: shifts[a],
                    valid_from: (-shifts[a]).max(0) as u64 + bounds.patch_radius,
                })
                .collect();
            let feasible = rules.iter().all(|r| {
                *cert_ok
                    .entry((r.source, r.target, r.shift))
                    .or_insert_with(|| rule_certificate(src, dst, r).is_ok())
            });
            if feasible {
                for f in complete_patches(src, dst, &rules, bounds) {
                    if validate_into(src, dst, &f).is_ok() {
                        found.insert(normalize(src, dst, &f));
                    }
                }
            }
            // Next shift vector.
            let mut i = 0;
            while i < k && shifts[i] == bound {
                shifts[i] = -bound;
                i += 1;
            }
            if i == k {
                break;
            }
            shifts[i] += 1;
        }
    }
    found.into_iter().collect()
}

/// Backtracking over the patch region in BFS order from the vertex next to
/// the first rule's boundary (or from the basepoint when there are no arms).
fn complete_patches(
    src: &TreePresentation,
    dst: &TreePresentation,
    rules: &[TailRule],
    bounds: &SearchBounds,
) -> Vec<PresentedEmbedding> {
    let skeleton = PresentedEmbedding::new(BTreeMap::new(), rules.to_vec());
    let ev = Evaluator::new(src, dst, &skeleton);
    let region = patch_region(src, rules);
    let region_set: HashSet<Vertex> = region.iter().copied().collect();
    let mut required: HashMap<Vertex, Vec<Vertex>> = HashMap::new();
    for r in rules {
        let pred = spine_predecessor(src, r.source, r.valid_from);
        required
            .entry(pred)
            .or_default()
            .push(Vertex::Spine { arm: r.target, pos: r.image_pos(r.valid_from) });
    }
    let (anchor, anchor_candidates) = match rules.first() {
        Some(r) => (
            spine_predecessor(src, r.source, r.valid_from),
            dst.neighbors(Vertex::Spine { arm: r.target, pos: r.image_pos(r.valid_from) }),
        ),
        None => (
            src.basepoint(),
            dst.metric_ball(dst.basepoint(), src.core().len() as u64 + bounds.patch_radius),
        ),
    };
    let mut order = vec![anchor];
    let mut parent = vec![usize::MAX];
    let mut index = HashMap::from([(anchor, 0usize)]);
    let mut i = 0;
    while i < order.len() {
        let u = order[i];
        for w in src.neighbors(u) {
            if region_set.contains(&w) && !index.contains_key(&w) {
                index.insert(w, order.len());
                order.push(w);
                parent.push(i);
            }
        }
        i += 1;
    }

    struct Search<'s> {
        src: &'s TreePresentation,
        dst: &'s TreePresentation,
        ev: &'s Evaluator<'s>,
        order: &'s [Vertex],
        parent: &'s [usize],
        required: &'s HashMap<Vertex, Vec<Vertex>>,
        anchor_candidates: &'s [Vertex],
        assign: Vec<Vertex>,
        used: HashSet<Vertex>,
        limit: usize,
        out: Vec<BTreeMap<Vertex, Vertex>>,
    }

    impl Search<'_> {
        fn fits(&self, u: Vertex, t: Vertex) -> bool {
            !self.used.contains(&t)
                && self.dst.degree(t) >= self.src.degree(u)
                && self.ev.rule_preimage(t).is_none()
                && self
                    .required
                    .get(&u)
                    .is_none_or(|req| req.iter().all(|&x| self.dst.are_adjacent(t, x)))
        }

        fn go(&mut self, i: usize) {
            if self.out.len() >= self.limit {
                return;
            }
            if i == self.order.len() {
                self.out.push(self.order.iter().copied().zip(self.assign.iter().copied()).collect());
                return;
            }
            let u = self.order[i];
            let candidates =
                if i == 0 { self.anchor_candidates.to_vec() } else { self.dst.neighbors(self.assign[self.parent[i]]) };
            for t in candidates {
                if self.fits(u, t) {
                    self.used.insert(t);
                    self.assign.push(t);
                    self.go(i + 1);
                    self.assign.pop();
                    self.used.remove(&t);
                }
            }
        }
    }

    let mut search = Search {
        src,
        dst,
        ev: &ev,
        order: &order,
        parent: &parent,
        required: &required,
        anchor_candidates: &anchor_candidates,
        assign: Vec::new(),
        used: HashSet::new(),
        limit: bounds.per_schema_limit.max(1),
        out: Vec::new(),
    };
    search.go(0);
    search.out.into_iter().map(|patch| PresentedEmbedding::new(patch, rules.to_vec())).collect()
}

/// Every embedding found by the search, with its classification.
pub fn classified_embeddings(p: &TreePresentation, bounds: &SearchBounds) -> Vec<(PresentedEmbedding, Classification)> {
    search_embeddings(p, bounds)
        .into_iter()
        .filter_map(|f| classify(p, &f).ok().map(|c| (f, c)))
        .collect()
}

/// Directions of the non-elliptic embeddings found, each with a witness.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DirectionSet {
    pub witnesses: BTreeMap<End, PresentedEmbedding>,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.witnesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.witnesses.is_empty()
    }

    pub fn ends(&self) -> Vec<End> {
        self.witnesses.keys().copied().collect()
    }
}

pub fn directions_set(p: &TreePresentation, bounds: &SearchBounds) -> DirectionSet {
    directions_of(&classified_embeddings(p, bounds))
}

pub fn directions_of(classified: &[(PresentedEmbedding, Classification)]) -> DirectionSet {
    let mut witnesses = BTreeMap::new();
    for (f, c) in classified {
        if let Some(e) = c.direction() {
            witnesses.entry(e).or_insert_with(|| f.clone());
        }
    }
    DirectionSet { witnesses }
}

/// Ends containing orbit points of the basepoint at arm position `≥ depth`,
/// over all words of length `≤ word_length` in the generators.
pub fn limit_set_sample(p: &TreePresentation, gens: &[PresentedEmbedding], word_length: usize, depth: u64) -> BTreeSet<End> {
    let evs: Vec<Evaluator> = gens.iter().map(|g| Evaluator::new(p, p, g)).collect();
    let mut seen = BTreeSet::from([p.basepoint()]);
    let mut frontier = vec![p.basepoint()];
    for _ in 0..word_length {
        let mut next = Vec::new();
        for &x in &frontier {
            for ev in &evs {
                if let Some(y) = ev.image(x) {
                    if seen.insert(y) {
                        next.push(y);
                    }
                }
            }
        }
        frontier = next;
    }
    seen.into_iter()
        .filter_map(|v| v.arm_pos())
        .filter(|&(_, pos)| pos >= depth)
        .map(|(arm, _)| End { arm })
        .collect()
}

/// A sequence of vertices described by a rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VertexSequence {
    Constant { vertex: Vertex },
    /// `x_m` is decoration node `node` (0 for the spine vertex itself) at
    /// position `start + m·stride` of `arm`.
    Along { arm: ArmId, start: u64, stride: u64, node: usize },
}

impl VertexSequence {
    pub fn at(&self, m: u64) -> Vertex {
        match *self {
            VertexSequence::Constant { vertex } => vertex,
            VertexSequence::Along { arm, start, stride, node } => {
                let pos = start + m * stride;
                if node == 0 {
                    Vertex::Spine { arm, pos }
                } else {
                    Vertex::Deco { arm, pos, node }
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Separation {
    pub n: u64,
    pub count: Count,
    /// Indices `m` of the separated members, when finite.
    pub members: Option<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convergence {
    pub converges: bool,
    pub separations: Vec<Separation>,
}

/// `r_n` separates `x` from `e` when `x` is not beyond `r_n` on the arm of `e`.
pub fn separates(e: End, n: u64, x: Vertex) -> bool {
    !matches!(x.arm_pos(), Some((arm, pos)) if arm == e.arm && pos > n)
}

/// For each `n ≤ bound`, which members of `seq` the spine vertex `r_n` of
/// `e` separates from `e`. The sequence converges to `e` when every count is
/// finite.
pub fn converges_to(p: &TreePresentation, seq: &VertexSequence, e: End, bound: u64) -> Convergence {
    debug_assert!(e.arm < p.arms().len());
    let mut separations = Vec::new();
    for n in 0..=bound {
        let (count, members) = match *seq {
            VertexSequence::Constant { vertex } => {
                if separates(e, n, vertex) {
                    (Count::Infinite, None)
                } else {
                    (Count::Finite(0), Some(Vec::new()))
                }
            }
            VertexSequence::Along { arm, start, stride, .. } => {
                if arm != e.arm || (stride == 0 && start <= n) {
                    (Count::Infinite, None)
                } else if start > n {
                    (Count::Finite(0), Some(Vec::new()))
                } else {
                    let last = (n - start) / stride;
                    (Count::Finite(last + 1), Some((0..=last).collect()))
                }
            }
        };
        separations.push(Separation { n, count, members });
    }
    let converges = separations.iter().all(|s| s.count != Count::Infinite);
    Convergence { converges, separations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn shift(arm: ArmId, s: i64, vf: u64) -> TailRule {
        TailRule { source: arm, target: arm, shift: s, valid_from: vf }
    }

    #[test]
    fn identity_and_shift_validate_on_comb() {
        let p = fixtures::comb();
        assert_eq!(validate(&p, &identity(&p)), Ok(()));
        assert_eq!(validate(&p, &fixtures::single_arm_shift()), Ok(()));
    }

    #[test]
    fn missing_center_tooth_breaks_the_shift() {
        let p = fixtures::dcomb0();
        let err = validate(&p, &fixtures::two_arm_shift()).unwrap_err();
        assert!(err.contains(&Violation::CertificateFails { arm: 1, n: 0 }), "{err:?}");
        assert_eq!(validate(&fixtures::dray(), &fixtures::two_arm_shift()), Ok(()));
    }

    #[test]
    fn structural_violations() {
        let p = fixtures::dray();
        let f = PresentedEmbedding::new(BTreeMap::new(), vec![shift(0, 0, 0)]);
        assert!(validate(&p, &f).unwrap_err().contains(&Violation::MissingRule { arm: 1 }));
        let f = PresentedEmbedding::new(
            BTreeMap::new(),
            vec![TailRule { source: 0, target: 0, shift: 0, valid_from: 0 }, TailRule { source: 1, target: 0, shift: 0, valid_from: 0 }],
        );
        assert!(validate(&p, &f).unwrap_err().contains(&Violation::ArmCollision(0, 1)));
        let f = PresentedEmbedding::new(BTreeMap::new(), vec![shift(0, 0, 0), shift(1, 0, 0)]);
        assert_eq!(validate(&p, &f), Err(vec![Violation::PatchIncomplete(Vertex::Core(0))]));
    }

    #[test]
    fn classify_basic_fixtures() {
        let ray = fixtures::ray();
        let c = classify(&ray, &fixtures::single_arm_shift()).unwrap();
        assert_eq!(
            c,
            Classification::Parabolic {
                ray: RayDescriptor { head: vec![Vertex::Core(0)], arm: 0, from: 0 },
                direction: End { arm: 0 },
                periodicity: 1,
            }
        );
        let c = classify(&fixtures::dray(), &fixtures::two_arm_shift()).unwrap();
        assert!(c.is_hyperbolic());
        assert_eq!(c.periodicity(), Some(1));
        assert_eq!(
            classify(&ray, &identity(&ray)).unwrap(),
            Classification::Elliptic { fixed: FixedStructure::Vertex(Vertex::Core(0)) }
        );
    }

    #[test]
    fn reflection_fixes_center() {
        let p = fixtures::dray();
        let f = PresentedEmbedding::new(
            BTreeMap::from([(Vertex::Core(0), Vertex::Core(0))]),
            vec![
                TailRule { source: 0, target: 1, shift: 0, valid_from: 0 },
                TailRule { source: 1, target: 0, shift: 0, valid_from: 0 },
            ],
        );
        assert_eq!(fixed_structure(&p, &f), Ok(FixedStructure::Vertex(Vertex::Core(0))));
    }

    #[test]
    fn periodicity_of_composites() {
        let p = fixtures::ray();
        let f = fixtures::single_arm_shift();
        let f2 = power(&p, &f, 2).unwrap();
        assert_eq!(periodicity(&p, &f2), Ok(2));
        assert_eq!(periodicity(&p, &compose(&p, &f, &f2).unwrap()), Ok(3));
        assert_eq!(periodicity(&p, &identity(&p)), Err(EmbeddingError::IsElliptic));
    }

    #[test]
    fn spine_order_on_dray() {
        let p = fixtures::dray();
        let f = fixtures::two_arm_shift();
        assert_eq!(spine_order(&p, &f, Vertex::spine(1, 3), Vertex::spine(0, 2)), Ok(SpineOrder::LeftOf));
        assert_eq!(spine_order(&p, &f, Vertex::spine(0, 2), Vertex::spine(1, 3)), Ok(SpineOrder::RightOf));
        assert_eq!(spine_order(&p, &f, Vertex::Core(0), Vertex::Core(0)), Ok(SpineOrder::Equal));
    }

    #[test]
    fn preservation() {
        let f = fixtures::single_arm_shift();
        assert!(preserves_forward(&f, End { arm: 0 }));
        assert!(!preserves_backward(&f, End { arm: 0 }));
        let g = fixtures::two_arm_shift();
        assert!(preserves_backward(&g, End { arm: 1 }));
    }

    #[test]
    fn search_on_ray_finds_identity_and_shift() {
        let p = fixtures::ray();
        let found = search_embeddings(&p, &SearchBounds::default());
        let shifts: Vec<i64> = found.iter().map(|f| f.rules[0].shift).collect();
        assert_eq!(shifts, vec![0, 1]);
        assert!(found.contains(&identity(&p)));
        assert!(found.contains(&fixtures::single_arm_shift()));
    }

    #[test]
    fn search_on_dray_finds_reflections() {
        let p = fixtures::dray();
        let found = search_embeddings(&p, &SearchBounds::default());
        assert!(found.iter().any(|f| f.rules[0].target == 1));
        assert!(found.contains(&fixtures::two_arm_shift()));
    }

    #[test]
    fn normalize_lowers_valid_from() {
        let p = fixtures::comb();
        let f = PresentedEmbedding::new(
            BTreeMap::from([
                (Vertex::Core(0), Vertex::spine(0, 0)),
                (Vertex::spine(0, 0), Vertex::spine(0, 1)),
                (Vertex::Deco { arm: 0, pos: 0, node: 1 }, Vertex::Deco { arm: 0, pos: 1, node: 1 }),
            ]),
            vec![shift(0, 1, 1)],
        );
        assert_eq!(validate(&p, &f), Ok(()));
        assert_eq!(normalize(&p, &p, &f), fixtures::single_arm_shift());
    }

    #[test]
    fn convergence_of_teeth() {
        let p = fixtures::comb();
        let seq = VertexSequence::Along { arm: 0, start: 0, stride: 1, node: 1 };
        let c = converges_to(&p, &seq, End { arm: 0 }, 5);
        assert!(c.converges);
        assert_eq!(c.separations[3].members, Some(vec![0, 1, 2, 3]));
        let c = converges_to(&p, &VertexSequence::Constant { vertex: p.basepoint() }, End { arm: 0 }, 3);
        assert!(!c.converges);
    }

    #[test]
    fn limit_sets() {
        let p = fixtures::comb();
        let ends = limit_set_sample(&p, &[fixtures::single_arm_shift()], 8, 5);
        assert_eq!(ends, BTreeSet::from([End { arm: 0 }]));
        let q = fixtures::finite();
        assert!(limit_set_sample(&q, &[identity(&q)], 8, 1).is_empty());
    }
}
