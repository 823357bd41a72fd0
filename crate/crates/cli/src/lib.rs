//! Command-line front end: the `.tree` document format, DOT export, and
//! subcommand dispatch.

pub mod dot;
pub mod dsl;
pub mod render;

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sibling_core::embedding::{
    classified_embeddings, classify, converges_to, directions_of, validate, Classification, PresentedEmbedding,
    SearchBounds, VertexSequence,
};
use sibling_core::presentation::{Count, End, NearlyFinite, Regularity, TreePresentation};
use sibling_core::siblings::{
    build_sibling_family, sibling_number_report, verify_pairwise_noniso, ReportBounds, SiblingCertificate, Verdict,
};

use dsl::Document;
use render::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "sibtree", version, about = "Analyze finitely presented infinite trees and their self-embeddings")]
struct Cli {
    /// Emit structured JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Target {
    /// A `.tree` document.
    file: PathBuf,
    /// Presentation to use; defaults to the first one in the file.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Largest absolute tail shift tried; defaults to the lcm of the periods.
    #[arg(long)]
    shift_bound: Option<u64>,
    #[arg(long, default_value_t = 1)]
    patch_radius: u64,
}

impl SearchArgs {
    fn bounds(&self) -> SearchBounds {
        SearchBounds { shift_bound: self.shift_bound, patch_radius: self.patch_radius, ..SearchBounds::default() }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ends, nearly-finite test, rakes and end regularity.
    Analyze(Target),
    /// Validate and classify a named embedding.
    Classify {
        file: PathBuf,
        /// Name of an embedding in the file.
        embedding: String,
    },
    /// Enumerate tail-regular self-embeddings.
    Search {
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Build the sibling family S_1, ..., S_k from a parabolic embedding.
    Siblings {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 3)]
        k: u32,
        /// Embedding to use; defaults to the first parabolic one found.
        #[arg(long)]
        embedding: Option<String>,
        /// Deepest truncation used to tell members apart.
        #[arg(long, default_value_t = 12)]
        depth: u64,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Sibling-number certificate.
    Report {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 3)]
        family_size: u32,
        #[arg(long, default_value_t = 12)]
        noniso_depth: u64,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Finite ball around the basepoint.
    Truncate {
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        depth: u64,
        /// Print the ball as a Graphviz graph.
        #[arg(long)]
        dot: bool,
    },
    /// Which vertices each spine vertex separates from an end.
    Convergence {
        #[command(flatten)]
        target: Target,
        /// Arm carrying the sequence; defaults to the first arm.
        #[arg(long)]
        arm: Option<String>,
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 1)]
        stride: u64,
        /// Decoration node of each member, 0 for the spine vertex itself.
        #[arg(long, default_value_t = 0)]
        node: usize,
        /// A constant sequence at this vertex instead.
        #[arg(long, conflicts_with_all = ["start", "stride", "node"])]
        vertex: Option<String>,
        /// End to test; defaults to the sequence's arm.
        #[arg(long)]
        end: Option<String>,
        #[arg(long, default_value_t = 100)]
        bound: u64,
    },
}

/// A failed command: exit code and message. `report` is set when the
/// message is already the command's full output in the requested format.
struct Failure {
    code: i32,
    msg: String,
    report: bool,
}

fn input(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_INPUT, msg: msg.into(), report: false }
}

fn analysis(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_ANALYSIS, msg: msg.into(), report: false }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code with the text to print.
pub fn run<I, S>(argv: I) -> (i32, String)
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            return (code, e.render().to_string());
        }
    };
    match dispatch(&cli) {
        Ok(out) => (EXIT_OK, out),
        Err(Failure { code, msg, report }) => {
            let out = if cli.json && !report { json_error(code, &msg) } else { msg };
            (code, if out.ends_with('\n') { out } else { out + "\n" })
        }
    }
}

fn json_error(code: i32, msg: &str) -> String {
    let kind = if code == EXIT_INPUT { "input" } else { "analysis" };
    pretty(&json!({ "error": { "kind": kind, "message": msg } }))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize") + "\n"
}

fn load(file: &PathBuf) -> Result<Document, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| input(format!("cannot read {}: {e}", file.display())))?;
    dsl::parse_document(&text).map_err(|e| input(format!("{}: {e}", file.display())))
}

fn select<'d>(doc: &'d Document, target: &Target) -> Result<(&'d str, &'d TreePresentation), Failure> {
    let found = match &target.name {
        Some(n) => doc.presentations.iter().find(|p| &p.name == n),
        None => doc.presentations.first(),
    };
    found.map(|p| (p.name.as_str(), &p.presentation)).ok_or_else(|| match &target.name {
        Some(n) => input(format!("no presentation named {n} in {}", target.file.display())),
        None => input(format!("no presentation in {}", target.file.display())),
    })
}

fn dispatch(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Analyze(target) => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            Ok(analyze(name, p, cli.json))
        }
        Command::Classify { file, embedding } => {
            let doc = load(file)?;
            let e = doc.embedding(embedding).ok_or_else(|| input(format!("no embedding named {embedding}")))?;
            let p = doc.presentation(&e.on).expect("parser resolves presentations");
            classify_cmd(&e.name, p, &e.embedding, cli.json)
        }
        Command::Search { target, search } => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            Ok(search_cmd(name, p, &search.bounds(), cli.json))
        }
        Command::Siblings { target, k, embedding, depth, search } => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            let f = match embedding {
                Some(e) => {
                    let e = doc.embedding(e).ok_or_else(|| input(format!("no embedding named {e}")))?;
                    if e.on != name {
                        return Err(input(format!("embedding {} acts on {}, not {name}", e.name, e.on)));
                    }
                    e.embedding.clone()
                }
                None => classified_embeddings(p, &search.bounds())
                    .into_iter()
                    .find(|(_, c)| c.is_parabolic())
                    .map(|(f, _)| f)
                    .ok_or_else(|| analysis(format!("no parabolic self-embedding of {name} found")))?,
            };
            siblings_cmd(name, p, &f, *k, *depth, cli.json)
        }
        Command::Report { target, family_size, noniso_depth, search } => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            let bounds = ReportBounds { search: search.bounds(), family_size: *family_size, noniso_depth: *noniso_depth };
            let cert = sibling_number_report(p, &bounds);
            Ok(if cli.json { pretty(&report_json(name, p, &cert)) } else { report_text(name, p, &cert) })
        }
        Command::Truncate { target, depth, dot } => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            Ok(truncate_cmd(name, p, *depth, *dot, cli.json))
        }
        Command::Convergence { target, arm, start, stride, node, vertex, end, bound } => {
            let doc = load(&target.file)?;
            let (name, p) = select(&doc, target)?;
            let arm_id = |a: &str| p.arm_by_name(a).ok_or_else(|| input(format!("{name} has no arm {a}")));
            let seq_arm = match arm {
                Some(a) => arm_id(a)?,
                None if p.arms().is_empty() => return Err(analysis(format!("{name} has no ends"))),
                None => 0,
            };
            let seq = match vertex {
                Some(v) => VertexSequence::Constant {
                    vertex: dsl::parse_vertex(p, v).map_err(|e| input(format!("--vertex {v}: {e}")))?,
                },
                None => {
                    let sampled = if *stride == 0 { 1 } else { 64 };
                    if (0..sampled).any(|m| *node >= p.decoration(seq_arm, start + m * stride).len()) {
                        return Err(input(format!("node {node} is missing from some decoration of the sequence")));
                    }
                    VertexSequence::Along { arm: seq_arm, start: *start, stride: *stride, node: *node }
                }
            };
            let e = End { arm: end.as_deref().map(arm_id).transpose()?.unwrap_or(seq_arm) };
            Ok(convergence_cmd(name, p, &seq, e, *bound, cli.json))
        }
    }
}

fn regularity_text(r: &Regularity) -> String {
    match r {
        Regularity::Regular { class_count } => format!("regular ({class_count} branch classes)"),
        Regularity::NonRegular { positions } => format!(
            "non-regular (pairwise distinct branches at {})",
            positions.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn analyze(name: &str, p: &TreePresentation, as_json: bool) -> String {
    let nearly = p.nearly_finite();
    let arms: Vec<(String, String, Result<Regularity, String>)> = (0..p.arms().len())
        .map(|a| (arm_name(p, a), p.arm_sketch(a), p.end_regularity(a).map_err(|e| e.to_string())))
        .collect();
    if as_json {
        let (branch_vertices, rake) = match &nearly {
            NearlyFinite::Yes { branch_vertices } => {
                (json!(branch_vertices.iter().map(|&v| p.vertex_name(v)).collect::<Vec<_>>()), Value::Null)
            }
            NearlyFinite::No(w) => {
                (Value::Null, json!({ "arm": arm_name(p, w.arm), "start": w.start, "stride": w.stride }))
            }
        };
        return pretty(&json!({
            "presentation": name,
            "core_vertices": p.core().len(),
            "ends": arms.iter().map(|a| a.0.clone()).collect::<Vec<_>>(),
            "nearly_finite": rake.is_null(),
            "branch_vertices": branch_vertices,
            "rake": rake,
            "arms": arms.iter().map(|(n, sketch, r)| json!({
                "name": n,
                "decorations": sketch,
                "regularity": match r {
                    Ok(r) => serde_json::to_value(r).expect("serializable"),
                    Err(e) => json!({ "kind": "unknown", "reason": e }),
                },
            })).collect::<Vec<_>>(),
        }));
    }
    let mut out = String::new();
    let _ = writeln!(out, "presentation {name}");
    let _ = writeln!(out, "core vertices: {}", p.core().len());
    let ends: Vec<String> = arms.iter().map(|a| a.0.clone()).collect();
    let _ = writeln!(out, "ends: {} ({})", ends.len(), if ends.is_empty() { "none".into() } else { ends.join(", ") });
    match &nearly {
        NearlyFinite::Yes { branch_vertices } => {
            let names: Vec<String> = branch_vertices.iter().map(|&v| p.vertex_name(v)).collect();
            let _ = writeln!(out, "nearly finite: yes ({} branch vertices: {})", names.len(), names.join(" "));
        }
        NearlyFinite::No(w) => {
            let _ = writeln!(
                out,
                "nearly finite: no (rake on {} at positions {} + {}k)",
                arm_name(p, w.arm),
                w.start,
                w.stride
            );
        }
    }
    for (n, sketch, r) in &arms {
        let reg = match r {
            Ok(r) => regularity_text(r),
            Err(e) => format!("regularity unknown ({e})"),
        };
        let _ = writeln!(out, "arm {n}: {sketch}; {reg}");
    }
    out
}

fn classify_cmd(name: &str, p: &TreePresentation, f: &PresentedEmbedding, as_json: bool) -> Result<String, Failure> {
    if let Err(violations) = validate(p, f) {
        let lines: Vec<String> = violations.iter().map(|v| violation_text(p, v)).collect();
        let msg = if as_json {
            pretty(&json!({ "embedding": name, "valid": false, "violations": lines }))
        } else {
            let mut msg = format!("embedding {name} does not validate:\n");
            for l in &lines {
                let _ = writeln!(msg, "  - {l}");
            }
            msg
        };
        return Err(Failure { code: EXIT_ANALYSIS, msg, report: true });
    }
    let c = classify(p, f).map_err(|e| analysis(format!("embedding {name}: {e}")))?;
    Ok(if as_json {
        pretty(&json!({ "embedding": name, "valid": true, "classification": classification_json(p, &c) }))
    } else {
        format!("embedding {name}: {}\n", classification_text(p, &c))
    })
}

fn search_cmd(name: &str, p: &TreePresentation, bounds: &SearchBounds, as_json: bool) -> String {
    let found = classified_embeddings(p, bounds);
    let dirs = directions_of(&found).ends();
    let shift_bound = bounds.effective_shift_bound(p, p);
    if as_json {
        return pretty(&json!({
            "presentation": name,
            "shift_bound": shift_bound,
            "directions": dirs.iter().map(|&e| end_name(p, e)).collect::<Vec<_>>(),
            "embeddings": found.iter().map(|(f, c)| json!({
                "embedding": embedding_json(p, f),
                "classification": classification_json(p, c),
            })).collect::<Vec<_>>(),
        }));
    }
    let mut out = format!(
        "# {} self-embeddings of {name} with shifts up to {shift_bound}; directions: {}\n",
        found.len(),
        ends_text(p, &dirs)
    );
    for (i, (f, c)) in found.iter().enumerate() {
        let _ = writeln!(out, "\n# {}", classification_text(p, c));
        dsl::write_embedding(&mut out, &format!("e{}", i + 1), name, p, f);
    }
    out
}

fn siblings_cmd(
    name: &str,
    p: &TreePresentation,
    f: &PresentedEmbedding,
    k: u32,
    depth: u64,
    as_json: bool,
) -> Result<String, Failure> {
    let family = build_sibling_family(p, f, k).map_err(|e| analysis(format!("cannot build siblings of {name}: {e}")))?;
    let members: Vec<&TreePresentation> = family.members.iter().collect();
    let pairwise = verify_pairwise_noniso(&members, depth);
    let checked = family.check();
    let direction = match classify(p, f) {
        Ok(Classification::Parabolic { direction, .. }) => direction,
        _ => unreachable!("a family was built, so the embedding is parabolic"),
    };
    let names: Vec<String> = (1..=k).map(|i| format!("{name}_S{i}")).collect();
    if as_json {
        return Ok(pretty(&json!({
            "presentation": name,
            "embedding": embedding_json(p, f),
            "direction": end_name(p, direction),
            "members": family.members.iter().zip(&names).map(|(s, n)| {
                let mut text = String::new();
                dsl::write_presentation(&mut text, n, s);
                json!({ "name": n, "decorations": s.arm_sketch(direction.arm), "document": text })
            }).collect::<Vec<_>>(),
            "chain_checked": checked,
            "pairwise": pairwise,
        })));
    }
    let mut out = format!("siblings of {name} along {}\n", end_name(p, direction));
    for (i, s) in family.members.iter().enumerate() {
        let _ = writeln!(out, "S_{}: {}", i + 1, s.arm_sketch(direction.arm));
    }
    let _ = writeln!(
        out,
        "chain: {}",
        if checked { "each S_k lies in the previous tree, and f^(k+1) embeds the tree into S_k" } else { "FAILED" }
    );
    let seps: Vec<String> = pairwise
        .pairs
        .iter()
        .map(|s| match s.depth {
            Some(d) => format!("S_{}/S_{} at depth {d}", s.i + 1, s.j + 1),
            None => format!("S_{}/S_{} not separated", s.i + 1, s.j + 1),
        })
        .collect();
    let _ = writeln!(
        out,
        "pairwise non-isomorphic: {} ({})",
        if pairwise.all_distinct { "yes" } else { "unconfirmed" },
        seps.join(", ")
    );
    for (s, n) in family.members.iter().zip(&names) {
        out.push('\n');
        dsl::write_presentation(&mut out, n, s);
    }
    Ok(out)
}

fn verdict_word(v: Verdict) -> &'static str {
    match v {
        Verdict::ExactlyOne => "ExactlyOne",
        Verdict::Infinite => "Infinite",
        Verdict::OpenCase => "OpenCase",
    }
}

fn report_json(name: &str, p: &TreePresentation, cert: &SiblingCertificate) -> Value {
    let w = &cert.witness;
    json!({
        "presentation": name,
        "verdict": verdict_word(cert.verdict),
        "theorem_tag": cert.theorem_tag,
        "also": cert.also,
        "summary": cert.summary,
        "reason": cert.reason,
        "classical": cert.classical,
        "directions": cert.directions.iter().map(|&e| end_name(p, e)).collect::<Vec<_>>(),
        "witness": {
            "embedding": w.embedding.as_ref().map(|f| embedding_json(p, f)),
            "classification": w.classification.as_ref().map(|c| classification_json(p, c)),
            "direction_witnesses": w.direction_witnesses.iter().map(|(e, f)| json!({
                "end": end_name(p, *e),
                "embedding": embedding_json(p, f),
            })).collect::<Vec<_>>(),
            "family": w.family.as_ref().map(|fam| json!({
                "arm": arm_name(p, fam.arm),
                "members": fam.members,
                "pairwise": fam.pairwise,
                "checked": fam.checked,
            })),
            "components": w.components.map(|c| json!({
                "arm": arm_name(p, c.arm),
                "shift": c.shift,
                "start": c.start,
                "stride": c.stride,
            })),
            "non_regular_end": w.non_regular_end.map(|e| end_name(p, e)),
        },
    })
}

fn report_text(name: &str, p: &TreePresentation, cert: &SiblingCertificate) -> String {
    let w = &cert.witness;
    let mut out = format!("{}\n", cert.summary);
    let _ = writeln!(out, "presentation: {name}");
    let _ = writeln!(out, "verdict: {}", verdict_word(cert.verdict));
    let _ = writeln!(out, "tag: {}", cert.theorem_tag);
    if !cert.also.is_empty() {
        let _ = writeln!(out, "also: {}", cert.also.join(", "));
    }
    let _ = writeln!(out, "reason: {}", cert.reason);
    if cert.classical {
        let _ = writeln!(out, "note: classical result, not derived by the constructions implemented here");
    }
    let _ = writeln!(out, "directions: {}", ends_text(p, &cert.directions));
    if let (Some(f), Some(c)) = (&w.embedding, &w.classification) {
        let _ = writeln!(out, "witness: {}", classification_text(p, c));
        let mut text = String::new();
        dsl::write_embedding(&mut text, "witness", name, p, f);
        out.extend(text.lines().map(|l| format!("  {l}\n")));
    }
    for (e, _) in &w.direction_witnesses {
        let _ = writeln!(out, "direction {} witnessed by a validated embedding", end_name(p, *e));
    }
    if let Some(fam) = &w.family {
        let _ = writeln!(out, "S_k family along {}:", arm_name(p, fam.arm));
        for (i, m) in fam.members.iter().enumerate() {
            let _ = writeln!(out, "  S_{}: {m}", i + 1);
        }
        let _ = writeln!(
            out,
            "  chain checked: {}, pairwise distinct: {}",
            if fam.checked { "yes" } else { "no" },
            if fam.pairwise.all_distinct { "yes" } else { "no" }
        );
    }
    if let Some(c) = &w.components {
        let _ = writeln!(
            out,
            "components certificate: arm {} shift {}, a new component at positions {} + {}k",
            arm_name(p, c.arm),
            c.shift,
            c.start,
            c.stride
        );
    }
    if let Some(e) = w.non_regular_end {
        let _ = writeln!(out, "non-regular end: {}", end_name(p, e));
    }
    out
}

fn truncate_cmd(name: &str, p: &TreePresentation, depth: u64, as_dot: bool, as_json: bool) -> String {
    if as_dot {
        return dot::truncation_dot(name, p, depth);
    }
    let ball = p.ball(depth);
    let code = ball.tree.canonical_code();
    if as_json {
        return pretty(&json!({
            "presentation": name,
            "depth": depth,
            "vertices": ball.vertices.iter().map(|&v| p.vertex_name(v)).collect::<Vec<_>>(),
            "edges": (0..ball.tree.len()).filter_map(|i| ball.tree.parent(i).map(|q| {
                json!([p.vertex_name(ball.vertices[q]), p.vertex_name(ball.vertices[i])])
            })).collect::<Vec<_>>(),
            "canonical_code": code.as_str(),
        }));
    }
    format!("{name} at depth {depth}: {} vertices\n{}\n", ball.tree.len(), code.as_str())
}

fn convergence_cmd(name: &str, p: &TreePresentation, seq: &VertexSequence, e: End, bound: u64, as_json: bool) -> String {
    let report = converges_to(p, seq, e, bound);
    let describe = match *seq {
        VertexSequence::Constant { vertex } => format!("x_m = {}", p.vertex_name(vertex)),
        VertexSequence::Along { arm, start, stride, node } => {
            let a = arm_name(p, arm);
            let base = format!("{a}[{start} + {stride}m]");
            if node == 0 {
                format!("x_m = {base}")
            } else {
                format!("x_m = {base}.{node}")
            }
        }
    };
    if as_json {
        return pretty(&json!({
            "presentation": name,
            "sequence": describe,
            "end": end_name(p, e),
            "converges": report.converges,
            "separations": report.separations.iter().map(|s| json!({
                "n": s.n,
                "count": match s.count { Count::Finite(c) => json!(c), Count::Infinite => json!("infinite") },
                "members": s.members,
            })).collect::<Vec<_>>(),
        }));
    }
    let mut out = format!(
        "{describe} {} to the end {} of {name}\n",
        if report.converges { "converges" } else { "does not converge" },
        end_name(p, e)
    );
    for s in &report.separations {
        let which = match (&s.count, &s.members) {
            (Count::Infinite, _) => "infinitely many".to_string(),
            (_, Some(m)) if m.is_empty() => "none".to_string(),
            (_, Some(m)) if m.len() > 1 && m.windows(2).all(|w| w[1] == w[0] + 1) => {
                format!("x_{}..x_{}", m[0], m[m.len() - 1])
            }
            (_, Some(m)) => m.iter().map(|i| format!("x_{i}")).collect::<Vec<_>>().join(" "),
            (Count::Finite(c), None) => format!("{c} members"),
        };
        let _ = writeln!(out, "r_{} separates {which}", s.n);
    }
    out
}
