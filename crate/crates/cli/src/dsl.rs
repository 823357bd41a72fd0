//! The `.tree` document format.
//!
//! ```text
//! # a ray with a leaf at every spine vertex
//! presentation COMB {
//!   core { vertices v0; edges; basepoint v0; }
//!   arm A at v0 { prefix []; period [(())]; }
//! }
//! embedding shift on COMB {
//!   patch { v0 -> A[0]; }
//!   rule A -> A shift 1 from 0;
//! }
//! ```
//!
//! Generated arms use `family path 1 n + 0;` or `family star 2n+1;`.
//! Vertices are written `v0` (core), `A[3]` (spine) and `A[3].2` (node 2 of
//! the decoration at `A[3]`, numbered in preorder from the spine vertex).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use sibling_core::embedding::{PresentedEmbedding, TailRule};
use sibling_core::finite_tree::FiniteRootedTree;
use sibling_core::presentation::{AffineRule, Arm, Core, DecorationSeq, Shape, TreePresentation, Vertex};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    /// A name that does not resolve.
    Dangling,
    NonAffine,
    /// Well-formed text describing an invalid presentation.
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedPresentation {
    pub name: String,
    pub presentation: TreePresentation,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedEmbedding {
    pub name: String,
    /// Name of the presentation the embedding acts on.
    pub on: String,
    pub embedding: PresentedEmbedding,
    pub line: usize,
}

/// Presentations and embeddings in file order.
#[derive(Clone, Debug, Default)]
pub struct Document {
    pub presentations: Vec<NamedPresentation>,
    pub embeddings: Vec<NamedEmbedding>,
}

/// Equality ignores source lines.
impl PartialEq for Document {
    fn eq(&self, other: &Self) -> bool {
        fn p(d: &Document) -> Vec<(&String, &TreePresentation)> {
            d.presentations.iter().map(|x| (&x.name, &x.presentation)).collect()
        }
        fn e(d: &Document) -> Vec<(&String, &String, &PresentedEmbedding)> {
            d.embeddings.iter().map(|x| (&x.name, &x.on, &x.embedding)).collect()
        }
        p(self) == p(other) && e(self) == e(other)
    }
}

impl Document {
    pub fn presentation(&self, name: &str) -> Option<&TreePresentation> {
        self.presentations.iter().find(|p| p.name == name).map(|p| &p.presentation)
    }

    pub fn embedding(&self, name: &str) -> Option<&NamedEmbedding> {
        self.embeddings.iter().find(|e| e.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    /// A balanced-parenthesis tree such as `(()())`.
    Tree(String),
    Arrow,
    Sym(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) | Tok::Tree(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::Arrow => write!(f, "`->`"),
            Tok::Sym(c) => write!(f, "`{c}`"),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut j = 0;
        while j < chars.len() {
            let c = chars[j];
            let (line, column) = (i + 1, j + 1);
            let err = |message: String| ParseError { line, column, kind: ErrorKind::Syntax, message };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                j += 1;
                continue;
            }
            let start = j;
            let tok = if c.is_ascii_alphabetic() || c == '_' {
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                Tok::Ident(chars[start..j].iter().collect())
            } else if c.is_ascii_digit() {
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let s: String = chars[start..j].iter().collect();
                Tok::Int(s.parse().map_err(|_| err(format!("number {s} is too large")))?)
            } else if c == '(' {
                let mut depth = 0i64;
                while j < chars.len() {
                    match chars[j] {
                        '(' => depth += 1,
                        ')' => depth -= 1,
                        _ => break,
                    }
                    j += 1;
                    if depth == 0 {
                        break;
                    }
                }
                if depth != 0 {
                    return Err(err("unbalanced parentheses".into()));
                }
                Tok::Tree(chars[start..j].iter().collect())
            } else if c == '-' && chars.get(j + 1) == Some(&'>') {
                j += 2;
                Tok::Arrow
            } else if "{}[];,-+.".contains(c) {
                j += 1;
                Tok::Sym(c)
            } else {
                return Err(err(format!("unexpected character `{c}`")));
            };
            out.push(Spanned { tok, line, column });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    i: usize,
    /// Position reported at end of input.
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.i).map_or(self.end, |t| (t.line, t.column))
    }

    fn error_at(&self, at: (usize, usize), kind: ErrorKind, message: String) -> ParseError {
        ParseError { line: at.0, column: at.1, kind, message }
    }

    fn error(&self, kind: ErrorKind, message: String) -> ParseError {
        self.error_at(self.here(), kind, message)
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let found = self.peek().map_or("end of input".to_string(), |t| t.to_string());
        self.error(ErrorKind::Syntax, format!("expected {wanted}, found {found}"))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.i).map(|t| t.tok.clone());
        self.i += 1;
        t
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn sym(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{c}`")))
        }
    }

    fn arrow(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Tok::Arrow) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.unexpected("`->`"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.unexpected("a name")),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.i += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("`{kw}`"))),
        }
    }

    fn int(&mut self) -> Result<u64, ParseError> {
        match self.peek() {
            Some(&Tok::Int(n)) => {
                self.i += 1;
                Ok(n)
            }
            _ => Err(self.unexpected("a number")),
        }
    }

    fn signed(&mut self) -> Result<i64, ParseError> {
        let at = self.here();
        let negative = self.eat_sym('-');
        let n = self.int()?;
        let n = i64::try_from(n).map_err(|_| self.error_at(at, ErrorKind::Syntax, "shift out of range".into()))?;
        Ok(if negative { -n } else { n })
    }

    fn tree_list(&mut self) -> Result<Vec<FiniteRootedTree>, ParseError> {
        self.sym('[')?;
        let mut out = Vec::new();
        if self.eat_sym(']') {
            return Ok(out);
        }
        loop {
            let at = self.here();
            match self.next() {
                Some(Tok::Tree(s)) => out.push(
                    s.parse().map_err(|e| self.error_at(at, ErrorKind::Syntax, format!("bad tree {s}: {e}")))?,
                ),
                _ => {
                    self.i -= 1;
                    return Err(self.unexpected("a parenthesized tree"));
                }
            }
            if self.eat_sym(']') {
                return Ok(out);
            }
            self.sym(',')?;
        }
    }

    /// `A n + B`, `A n`, `n + B` or `n`.
    fn affine(&mut self) -> Result<AffineRule, ParseError> {
        let at = self.here();
        let non_affine = |p: &Parser| {
            p.error_at(at, ErrorKind::NonAffine, "size rule must have the form `A n + B` with A, B ≥ 0".into())
        };
        let slope = match self.peek() {
            Some(&Tok::Int(a)) => {
                self.i += 1;
                a
            }
            _ => 1,
        };
        match self.peek() {
            Some(Tok::Ident(s)) if s == "n" => self.i += 1,
            _ => return Err(non_affine(self)),
        }
        let offset = if self.eat_sym('+') { self.int().map_err(|_| non_affine(self))? } else { 0 };
        if self.peek() != Some(&Tok::Sym(';')) {
            return Err(non_affine(self));
        }
        Ok(AffineRule { slope, offset })
    }

    fn presentation(&mut self) -> Result<NamedPresentation, ParseError> {
        let line = self.here().0;
        self.keyword("presentation")?;
        let name = self.ident()?;
        self.sym('{')?;
        let core_at = self.here();
        self.keyword("core")?;
        self.sym('{')?;
        self.keyword("vertices")?;
        let mut names: Vec<String> = Vec::new();
        while let Some(Tok::Ident(_)) = self.peek() {
            let at = self.here();
            let v = self.ident()?;
            if names.contains(&v) {
                return Err(self.error_at(at, ErrorKind::Invalid, format!("vertex {v} declared twice")));
            }
            names.push(v);
        }
        self.sym(';')?;
        let lookup = |p: &Parser, at, v: &str| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| p.error_at(at, ErrorKind::Dangling, format!("undeclared vertex {v}")))
        };
        self.keyword("edges")?;
        let mut edges = Vec::new();
        while let Some(Tok::Ident(_)) = self.peek() {
            let at = self.here();
            let a = self.ident()?;
            self.sym('-')?;
            let at_b = self.here();
            let b = self.ident()?;
            edges.push((lookup(self, at, &a)?, lookup(self, at_b, &b)?));
        }
        self.sym(';')?;
        self.keyword("basepoint")?;
        let at = self.here();
        let base = self.ident()?;
        let basepoint = lookup(self, at, &base)?;
        self.sym(';')?;
        self.sym('}')?;
        let core = Core::new(names.clone(), edges, basepoint)
            .map_err(|e| self.error_at(core_at, ErrorKind::Invalid, e.to_string()))?;
        let mut arms = Vec::new();
        while self.peek() == Some(&Tok::Ident("arm".into())) {
            let arm_at = self.here();
            self.i += 1;
            let arm_name = self.ident()?;
            if arms.iter().any(|a: &Arm| a.name == arm_name) {
                return Err(self.error_at(arm_at, ErrorKind::Invalid, format!("arm {arm_name} declared twice")));
            }
            self.keyword("at")?;
            let at = self.here();
            let v = self.ident()?;
            let attach = lookup(self, at, &v)?;
            self.sym('{')?;
            let seq = match self.peek() {
                Some(Tok::Ident(k)) if k == "family" => {
                    self.i += 1;
                    let shape_at = self.here();
                    let shape = match self.ident()?.as_str() {
                        "path" => Shape::Path,
                        "star" => Shape::Star,
                        other => {
                            return Err(self.error_at(
                                shape_at,
                                ErrorKind::Syntax,
                                format!("unknown family `{other}`, expected `path` or `star`"),
                            ))
                        }
                    };
                    let rule = self.affine()?;
                    self.sym(';')?;
                    DecorationSeq::Generated { shape, rule }
                }
                _ => {
                    self.keyword("prefix")?;
                    let prefix = self.tree_list()?;
                    self.sym(';')?;
                    self.keyword("period")?;
                    let period_at = self.here();
                    let period = self.tree_list()?;
                    if period.is_empty() {
                        return Err(self.error_at(period_at, ErrorKind::Invalid, "period must be non-empty".into()));
                    }
                    self.sym(';')?;
                    DecorationSeq::EventuallyPeriodic { prefix, period }
                }
            };
            self.sym('}')?;
            arms.push(Arm { name: arm_name, attach, seq });
        }
        self.sym('}')?;
        let presentation =
            TreePresentation::new(core, arms).map_err(|e| self.error_at(core_at, ErrorKind::Invalid, e.to_string()))?;
        Ok(NamedPresentation { name, presentation, line })
    }

    fn vertex(&mut self, p: &TreePresentation) -> Result<Vertex, ParseError> {
        let at = self.here();
        let name = self.ident()?;
        if !self.eat_sym('[') {
            return p
                .core()
                .index_of(&name)
                .map(Vertex::Core)
                .ok_or_else(|| self.error_at(at, ErrorKind::Dangling, format!("unknown vertex {name}")));
        }
        let arm = p
            .arm_by_name(&name)
            .ok_or_else(|| self.error_at(at, ErrorKind::Dangling, format!("unknown arm {name}")))?;
        let pos = self.int()?;
        self.sym(']')?;
        let v = if self.eat_sym('.') {
            let node = self.int()? as usize;
            Vertex::Deco { arm, pos, node }
        } else {
            Vertex::Spine { arm, pos }
        };
        if !p.contains(v) {
            return Err(self.error_at(at, ErrorKind::Dangling, format!("vertex {} does not exist", p.vertex_name(v))));
        }
        Ok(v)
    }

    fn arm_ref(&mut self, p: &TreePresentation) -> Result<usize, ParseError> {
        let at = self.here();
        let name = self.ident()?;
        p.arm_by_name(&name).ok_or_else(|| self.error_at(at, ErrorKind::Dangling, format!("unknown arm {name}")))
    }

    fn embedding(&mut self, doc: &Document) -> Result<NamedEmbedding, ParseError> {
        let line = self.here().0;
        self.keyword("embedding")?;
        let name = self.ident()?;
        self.keyword("on")?;
        let at = self.here();
        let on = self.ident()?;
        let p = doc
            .presentation(&on)
            .ok_or_else(|| self.error_at(at, ErrorKind::Dangling, format!("unknown presentation {on}")))?;
        self.sym('{')?;
        let mut patch = BTreeMap::new();
        if self.peek() == Some(&Tok::Ident("patch".into())) {
            self.i += 1;
            self.sym('{')?;
            while !self.eat_sym('}') {
                let at = self.here();
                let src = self.vertex(p)?;
                self.arrow()?;
                let dst = self.vertex(p)?;
                self.sym(';')?;
                if patch.insert(src, dst).is_some() {
                    return Err(self.error_at(
                        at,
                        ErrorKind::Invalid,
                        format!("{} is mapped twice", p.vertex_name(src)),
                    ));
                }
            }
        }
        let mut rules = Vec::new();
        while self.peek() == Some(&Tok::Ident("rule".into())) {
            self.i += 1;
            let source = self.arm_ref(p)?;
            self.arrow()?;
            let target = self.arm_ref(p)?;
            self.keyword("shift")?;
            let shift = self.signed()?;
            self.keyword("from")?;
            let valid_from = self.int()?;
            self.sym(';')?;
            rules.push(TailRule { source, target, shift, valid_from });
        }
        self.sym('}')?;
        Ok(NamedEmbedding { name, on, embedding: PresentedEmbedding::new(patch, rules), line })
    }
}

pub fn parse_document(text: &str) -> Result<Document, ParseError> {
    let toks = tokenize(text)?;
    let end = (text.lines().count().max(1), text.lines().last().map_or(1, |l| l.chars().count() + 1));
    let mut parser = Parser { toks, i: 0, end };
    let mut doc = Document::default();
    let mut names = BTreeSet::new();
    while let Some(tok) = parser.peek() {
        let at = parser.here();
        let item_name = match parser.toks.get(parser.i + 1).map(|t| &t.tok) {
            Some(Tok::Ident(n)) => n.clone(),
            _ => String::new(),
        };
        match tok {
            Tok::Ident(k) if k == "presentation" => {
                let p = parser.presentation()?;
                doc.presentations.push(p);
            }
            Tok::Ident(k) if k == "embedding" => {
                let e = parser.embedding(&doc)?;
                doc.embeddings.push(e);
            }
            _ => return Err(parser.unexpected("`presentation` or `embedding`")),
        }
        if !names.insert(item_name.clone()) {
            return Err(parser.error_at(at, ErrorKind::Invalid, format!("name {item_name} is used twice")));
        }
    }
    Ok(doc)
}

/// A single vertex reference such as `v0`, `A[3]` or `A[3].1`.
pub fn parse_vertex(p: &TreePresentation, text: &str) -> Result<Vertex, ParseError> {
    let toks = tokenize(text)?;
    let mut parser = Parser { toks, i: 0, end: (1, text.chars().count() + 1) };
    let v = parser.vertex(p)?;
    if parser.peek().is_some() {
        return Err(parser.unexpected("end of vertex"));
    }
    Ok(v)
}

fn tree_list(ts: &[FiniteRootedTree]) -> String {
    ts.iter().map(|t| t.to_paren()).collect::<Vec<_>>().join(", ")
}

/// One presentation in document syntax.
pub fn write_presentation(out: &mut String, name: &str, p: &TreePresentation) {
    let core = p.core();
    let edges: Vec<String> =
        core.edges().iter().map(|&(a, b)| format!(" {}-{}", core.name(a), core.name(b))).collect();
    let _ = writeln!(out, "presentation {name} {{");
    let _ = writeln!(
        out,
        "  core {{ vertices {}; edges{}; basepoint {}; }}",
        core.names().join(" "),
        edges.concat(),
        core.name(core.basepoint())
    );
    for arm in p.arms() {
        let body = match &arm.seq {
            DecorationSeq::EventuallyPeriodic { prefix, period } => {
                format!("prefix [{}]; period [{}];", tree_list(prefix), tree_list(period))
            }
            DecorationSeq::Generated { shape, rule } => {
                format!("family {shape} {}n + {};", rule.slope, rule.offset)
            }
        };
        let _ = writeln!(out, "  arm {} at {} {{ {body} }}", arm.name, core.name(arm.attach));
    }
    out.push_str("}\n");
}

/// One embedding in document syntax.
pub fn write_embedding(out: &mut String, name: &str, on: &str, p: &TreePresentation, f: &PresentedEmbedding) {
    let _ = writeln!(out, "embedding {name} on {on} {{");
    if !f.patch.is_empty() {
        let entries: Vec<String> =
            f.patch.iter().map(|(&a, &b)| format!(" {} -> {};", p.vertex_name(a), p.vertex_name(b))).collect();
        let _ = writeln!(out, "  patch {{{} }}", entries.concat());
    }
    for r in &f.rules {
        let arm = |a: usize| p.arms().get(a).map_or_else(|| format!("#{a}"), |x| x.name.clone());
        let _ = writeln!(out, "  rule {} -> {} shift {} from {};", arm(r.source), arm(r.target), r.shift, r.valid_from);
    }
    out.push_str("}\n");
}

pub fn serialize_document(doc: &Document) -> String {
    let mut out = String::new();
    for (i, p) in doc.presentations.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_presentation(&mut out, &p.name, &p.presentation);
    }
    for e in &doc.embeddings {
        out.push('\n');
        let p = doc.presentation(&e.on).expect("embedding refers to a presentation of the document");
        write_embedding(&mut out, &e.name, &e.on, p, &e.embedding);
    }
    out
}
