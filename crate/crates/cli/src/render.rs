//! Text and JSON renderings of core values, with vertices and arms by name.

use serde_json::{json, Value};
use sibling_core::embedding::{Classification, FixedStructure, PresentedEmbedding, Violation};
use sibling_core::presentation::{End, TreePresentation, Vertex};

pub fn arm_name(p: &TreePresentation, arm: usize) -> String {
    p.arms().get(arm).map_or_else(|| format!("#{arm}"), |a| a.name.clone())
}

pub fn end_name(p: &TreePresentation, e: End) -> String {
    arm_name(p, e.arm)
}

pub fn ends_text(p: &TreePresentation, ends: &[End]) -> String {
    if ends.is_empty() {
        "none".into()
    } else {
        ends.iter().map(|&e| end_name(p, e)).collect::<Vec<_>>().join(", ")
    }
}

fn name(p: &TreePresentation, v: Vertex) -> String {
    p.vertex_name(v)
}

pub fn violation_text(p: &TreePresentation, v: &Violation) -> String {
    let a = |i: usize| arm_name(p, i);
    match v {
        Violation::MissingRule { arm } => format!("arm {} has no tail rule", a(*arm)),
        Violation::DuplicateRule { arm } => format!("arm {} has more than one tail rule", a(*arm)),
        Violation::UnknownArm { arm } => format!("rule refers to unknown arm {}", a(*arm)),
        Violation::NegativeTarget { arm } => format!("rule on arm {} reaches a negative position", a(*arm)),
        Violation::ArmCollision(x, y) => format!("arms {} and {} map into the same arm", a(*x), a(*y)),
        Violation::UnknownVertex(x) => format!("vertex {} does not exist", name(p, *x)),
        Violation::PatchOutsideRegion(x) => format!("patch entry for {} lies outside the patch region", name(p, *x)),
        Violation::PatchIncomplete(x) => format!("patch has no image for {}", name(p, *x)),
        Violation::AdjacencyBroken(x, y) => {
            format!("edge {}-{} is not mapped to an edge", name(p, *x), name(p, *y))
        }
        Violation::NotInjective(x, y) => format!("{} and {} have the same image", name(p, *x), name(p, *y)),
        Violation::CertificateFails { arm, n } => {
            format!("decoration at {}[{n}] does not embed in its image's decoration", a(*arm))
        }
        Violation::BoundaryMismatch { arm } => format!("patch and tail rule of arm {} disagree", a(*arm)),
    }
}

pub fn embedding_json(p: &TreePresentation, f: &PresentedEmbedding) -> Value {
    json!({
        "patch": f.patch.iter().map(|(&s, &t)| json!([name(p, s), name(p, t)])).collect::<Vec<_>>(),
        "rules": f.rules.iter().map(|r| json!({
            "source": arm_name(p, r.source),
            "target": arm_name(p, r.target),
            "shift": r.shift,
            "from": r.valid_from,
        })).collect::<Vec<_>>(),
    })
}

fn head_text(p: &TreePresentation, head: &[Vertex]) -> String {
    head.iter().map(|&v| name(p, v) + " ").collect()
}

pub fn classification_text(p: &TreePresentation, c: &Classification) -> String {
    match c {
        Classification::Elliptic { fixed } => match fixed {
            FixedStructure::Vertex(v) => format!("elliptic, fixes {}", name(p, *v)),
            FixedStructure::Edge(u, v) => format!("elliptic, swaps the ends of {}-{}", name(p, *u), name(p, *v)),
            other => format!("elliptic, {other:?}"),
        },
        Classification::Parabolic { ray, direction, periodicity } => format!(
            "parabolic toward {}, periodicity {periodicity}, translates the ray {}{}[{}] ...",
            end_name(p, *direction),
            head_text(p, &ray.head),
            arm_name(p, ray.arm),
            ray.from
        ),
        Classification::Hyperbolic { axis, forward, backward, periodicity } => format!(
            "hyperbolic from {} toward {}, periodicity {periodicity}, axis ... {}[0] {}{}[0] ...",
            end_name(p, *backward),
            end_name(p, *forward),
            arm_name(p, axis.backward_arm),
            axis.core_path.iter().map(|&c| p.core().name(c).to_string() + " ").collect::<String>(),
            arm_name(p, axis.forward_arm)
        ),
    }
}

pub fn classification_json(p: &TreePresentation, c: &Classification) -> Value {
    match c {
        Classification::Elliptic { fixed } => {
            let fixed = match fixed {
                FixedStructure::Vertex(v) => json!({"vertex": name(p, *v)}),
                FixedStructure::Edge(u, v) => json!({"edge": [name(p, *u), name(p, *v)]}),
                other => json!({"other": format!("{other:?}")}),
            };
            json!({"kind": "elliptic", "fixed": fixed})
        }
        Classification::Parabolic { ray, direction, periodicity } => json!({
            "kind": "parabolic",
            "direction": end_name(p, *direction),
            "periodicity": periodicity,
            "ray": {
                "head": ray.head.iter().map(|&v| name(p, v)).collect::<Vec<_>>(),
                "arm": arm_name(p, ray.arm),
                "from": ray.from,
            },
        }),
        Classification::Hyperbolic { axis, forward, backward, periodicity } => json!({
            "kind": "hyperbolic",
            "forward": end_name(p, *forward),
            "backward": end_name(p, *backward),
            "periodicity": periodicity,
            "axis": {
                "backward_arm": arm_name(p, axis.backward_arm),
                "core_path": axis.core_path.iter().map(|&c| p.core().name(c)).collect::<Vec<_>>(),
                "forward_arm": arm_name(p, axis.forward_arm),
            },
        }),
    }
}
