//! Labeled combinatorial specifications: the `.bz` DSL, its AST and the
//! structural well-foundedness check.
//!
//! ```text
//! # Cayley trees
//! T = Z * SET(T)
//! ```
//!
//! Grammar:
//!
//! ```text
//! system := defn+
//! defn   := NAME "=" expr
//! expr   := term ("+" term)*
//! term   := factor ("*" factor)*
//! factor := "1" | "Z" | "Z<" LETTER ">"
//!         | ("SEQ" | "SET" | "CYC") [">=" INT] "(" expr ")"
//!         | NAME | "(" expr ")"
//! ```
//!
//! The first definition names the root class.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Index of a class inside a [`SpecSystem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub usize);

/// Source position, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// The three labeled collection constructors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Collection {
    Seq,
    Set,
    Cyc,
}

impl Collection {
    pub fn keyword(self) -> &'static str {
        match self {
            Collection::Seq => "SEQ",
            Collection::Set => "SET",
            Collection::Cyc => "CYC",
        }
    }

    /// Cardinality lower bound when none is written.
    pub fn default_min(self) -> u32 {
        match self {
            Collection::Cyc => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SpecExpr {
    /// The neutral object of size 0.
    Epsilon,
    /// A size-1 atom, optionally tagged with a letter.
    Atom(Option<char>),
    Union(Box<SpecExpr>, Box<SpecExpr>),
    Product(Box<SpecExpr>, Box<SpecExpr>),
    /// `SEQ`/`SET`/`CYC` with at least `min` components.
    Collection {
        kind: Collection,
        inner: Box<SpecExpr>,
        min: u32,
    },
    Ref(ClassId),
}

impl SpecExpr {
    pub fn union(l: SpecExpr, r: SpecExpr) -> Self {
        SpecExpr::Union(Box::new(l), Box::new(r))
    }

    pub fn product(l: SpecExpr, r: SpecExpr) -> Self {
        SpecExpr::Product(Box::new(l), Box::new(r))
    }

    pub fn collection(kind: Collection, inner: SpecExpr, min: u32) -> Self {
        SpecExpr::Collection {
            kind,
            inner: Box::new(inner),
            min,
        }
    }
}

/// A system of named class definitions.
#[derive(Clone, Debug)]
pub struct SpecSystem {
    names: Vec<String>,
    defs: Vec<SpecExpr>,
    positions: Vec<Pos>,
    root: ClassId,
}

/// Source positions do not take part in equality.
impl PartialEq for SpecSystem {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.defs == other.defs && self.root == other.root
    }
}

impl Eq for SpecSystem {}

impl SpecSystem {
    /// Builds a system from already resolved definitions. The first entry is the root.
    pub fn from_defs(defs: Vec<(String, SpecExpr)>) -> Result<Self> {
        if defs.is_empty() {
            return Err(Error::Syntax {
                pos: Pos::default(),
                msg: "empty specification".into(),
            });
        }
        let mut names = Vec::with_capacity(defs.len());
        let mut exprs = Vec::with_capacity(defs.len());
        for (name, expr) in defs {
            names.push(name);
            exprs.push(expr);
        }
        let positions = vec![Pos::default(); names.len()];
        let system = SpecSystem {
            names,
            defs: exprs,
            positions,
            root: ClassId(0),
        };
        for e in &system.defs {
            system.check_refs(e)?;
        }
        Ok(system)
    }

    fn check_refs(&self, e: &SpecExpr) -> Result<()> {
        match e {
            SpecExpr::Ref(id) if id.0 >= self.defs.len() => Err(Error::UnknownName {
                name: format!("#{}", id.0),
                pos: Pos::default(),
            }),
            SpecExpr::Union(l, r) | SpecExpr::Product(l, r) => {
                self.check_refs(l)?;
                self.check_refs(r)
            }
            SpecExpr::Collection { inner, .. } => self.check_refs(inner),
            _ => Ok(()),
        }
    }

    pub fn root(&self) -> ClassId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.names.iter().position(|n| n == name).map(ClassId)
    }

    /// Resolves an optional class name, defaulting to the root.
    pub fn resolve(&self, name: Option<&str>) -> Result<ClassId> {
        match name {
            None => Ok(self.root),
            Some(n) => self.class_id(n).ok_or_else(|| Error::UnknownName {
                name: n.to_string(),
                pos: Pos::default(),
            }),
        }
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.names[id.0]
    }

    pub fn expr(&self, id: ClassId) -> &SpecExpr {
        &self.defs[id.0]
    }

    pub fn position(&self, id: ClassId) -> Pos {
        self.positions[id.0]
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> {
        (0..self.defs.len()).map(ClassId)
    }

    fn fmt_expr(&self, e: &SpecExpr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            SpecExpr::Epsilon => f.write_str("1"),
            SpecExpr::Atom(None) => f.write_str("Z"),
            SpecExpr::Atom(Some(c)) => write!(f, "Z<{c}>"),
            SpecExpr::Union(l, r) => {
                self.fmt_expr(l, f)?;
                f.write_str(" + ")?;
                self.fmt_wrapped(r, f, matches!(**r, SpecExpr::Union(..)))
            }
            SpecExpr::Product(l, r) => {
                self.fmt_wrapped(l, f, matches!(**l, SpecExpr::Union(..)))?;
                f.write_str(" * ")?;
                self.fmt_wrapped(r, f, matches!(**r, SpecExpr::Union(..) | SpecExpr::Product(..)))
            }
            SpecExpr::Collection { kind, inner, min } => {
                f.write_str(kind.keyword())?;
                if *min != kind.default_min() {
                    write!(f, ">={min}")?;
                }
                f.write_str("(")?;
                self.fmt_expr(inner, f)?;
                f.write_str(")")
            }
            SpecExpr::Ref(id) => f.write_str(self.name(*id)),
        }
    }

    fn fmt_wrapped(&self, e: &SpecExpr, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            f.write_str("(")?;
            self.fmt_expr(e, f)?;
            f.write_str(")")
        } else {
            self.fmt_expr(e, f)
        }
    }

    /// Renders one expression in DSL syntax.
    pub fn display_expr<'a>(&'a self, e: &'a SpecExpr) -> impl fmt::Display + 'a {
        struct D<'a>(&'a SpecSystem, &'a SpecExpr);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt_expr(self.1, f)
            }
        }
        D(self, e)
    }
}

impl fmt::Display for SpecSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for id in self.classes() {
            write!(f, "{} = ", self.name(id))?;
            self.fmt_expr(self.expr(id), f)?;
            writeln!(f)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Name(String),
    Atom(Option<char>),
    Kw(Collection),
    Ge,
    Int(u32),
    Plus,
    Star,
    LParen,
    RParen,
    Eq,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    pos: Pos,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().peekable(),
            pos: Pos { line: 1, col: 1 },
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn err(pos: Pos, msg: impl Into<String>) -> Error {
        Error::Syntax {
            pos,
            msg: msg.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, Pos)>> {
        let mut out = Vec::new();
        while let Some(&c) = self.chars.peek() {
            let start = self.pos;
            match c {
                '#' => {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                }
                c if c.is_whitespace() => {
                    self.bump();
                }
                '+' | '*' | '(' | ')' | '=' => {
                    self.bump();
                    let t = match c {
                        '+' => Tok::Plus,
                        '*' => Tok::Star,
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        _ => Tok::Eq,
                    };
                    out.push((t, start));
                }
                '>' => {
                    self.bump();
                    if self.chars.peek() != Some(&'=') {
                        return Err(Self::err(start, "expected '>='"));
                    }
                    self.bump();
                    out.push((Tok::Ge, start));
                }
                c if c.is_ascii_digit() => {
                    let mut s = String::new();
                    while let Some(&d) = self.chars.peek() {
                        if !d.is_ascii_digit() {
                            break;
                        }
                        s.push(d);
                        self.bump();
                    }
                    let v = s
                        .parse::<u32>()
                        .map_err(|_| Self::err(start, format!("integer out of range: {s}")))?;
                    out.push((Tok::Int(v), start));
                }
                c if c.is_alphabetic() || c == '_' => {
                    let mut s = String::new();
                    while let Some(&d) = self.chars.peek() {
                        if !(d.is_alphanumeric() || d == '_') {
                            break;
                        }
                        s.push(d);
                        self.bump();
                    }
                    let t = match s.as_str() {
                        "Z" => {
                            if self.chars.peek() == Some(&'<') {
                                self.bump();
                                let letter = self
                                    .bump()
                                    .filter(|l| !l.is_whitespace() && *l != '>')
                                    .ok_or_else(|| Self::err(start, "expected a letter after 'Z<'"))?;
                                if self.bump() != Some('>') {
                                    return Err(Self::err(start, "expected '>' closing the atom letter"));
                                }
                                Tok::Atom(Some(letter))
                            } else {
                                Tok::Atom(None)
                            }
                        }
                        "SEQ" => Tok::Kw(Collection::Seq),
                        "SET" => Tok::Kw(Collection::Set),
                        "CYC" => Tok::Kw(Collection::Cyc),
                        _ => Tok::Name(s),
                    };
                    out.push((t, start));
                }
                other => return Err(Self::err(start, format!("unexpected character {other:?}"))),
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Parser

/// Expression with names still unresolved.
enum Raw {
    Epsilon,
    Atom(Option<char>),
    Union(Box<Raw>, Box<Raw>),
    Product(Box<Raw>, Box<Raw>),
    Collection(Collection, Box<Raw>, u32),
    Name(String, Pos),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    end: Pos,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn here(&self) -> Pos {
        self.toks.get(self.at).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<(Tok, Pos)> {
        let t = self.toks.get(self.at).cloned();
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let pos = self.here();
        match self.next() {
            Some((t, _)) if t == want => Ok(()),
            _ => Err(Error::Syntax {
                pos,
                msg: format!("expected {what}"),
            }),
        }
    }

    fn system(&mut self) -> Result<Vec<(String, Pos, Raw)>> {
        let mut defs = Vec::new();
        while self.peek().is_some() {
            let pos = self.here();
            let name = match self.next() {
                Some((Tok::Name(n), _)) => n,
                _ => {
                    return Err(Error::Syntax {
                        pos,
                        msg: "expected a class name".into(),
                    })
                }
            };
            self.expect(Tok::Eq, "'='")?;
            let e = self.expr()?;
            defs.push((name, pos, e));
        }
        if defs.is_empty() {
            return Err(Error::Syntax {
                pos: self.end,
                msg: "empty specification".into(),
            });
        }
        Ok(defs)
    }

    fn expr(&mut self) -> Result<Raw> {
        let mut e = self.term()?;
        while self.peek() == Some(&Tok::Plus) {
            self.at += 1;
            let r = self.term()?;
            e = Raw::Union(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn term(&mut self) -> Result<Raw> {
        let mut e = self.factor()?;
        while self.peek() == Some(&Tok::Star) {
            self.at += 1;
            let r = self.factor()?;
            e = Raw::Product(Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn factor(&mut self) -> Result<Raw> {
        let pos = self.here();
        let syntax = |msg: String| Error::Syntax { pos, msg };
        match self.next() {
            Some((Tok::Int(1), _)) => Ok(Raw::Epsilon),
            Some((Tok::Int(n), _)) => Err(syntax(format!(
                "integer literal {n} is not an expression (only '1' denotes the neutral object)"
            ))),
            Some((Tok::Atom(l), _)) => Ok(Raw::Atom(l)),
            Some((Tok::Kw(kind), _)) => {
                let mut min = kind.default_min();
                if self.peek() == Some(&Tok::Ge) {
                    self.at += 1;
                    let ipos = self.here();
                    match self.next() {
                        Some((Tok::Int(k), _)) => min = k,
                        _ => {
                            return Err(Error::Syntax {
                                pos: ipos,
                                msg: "expected an integer after '>='".into(),
                            })
                        }
                    }
                    if kind == Collection::Cyc && min == 0 {
                        return Err(syntax("CYC requires at least one component".into()));
                    }
                }
                self.expect(Tok::LParen, "'('")?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(Raw::Collection(kind, Box::new(inner), min))
            }
            Some((Tok::Name(n), p)) => Ok(Raw::Name(n, p)),
            Some((Tok::LParen, _)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Some((t, _)) => Err(syntax(format!("unexpected token {t:?}"))),
            None => Err(Error::Syntax {
                pos: self.end,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

fn resolve(raw: Raw, names: &HashMap<String, ClassId>) -> Result<SpecExpr> {
    Ok(match raw {
        Raw::Epsilon => SpecExpr::Epsilon,
        Raw::Atom(l) => SpecExpr::Atom(l),
        Raw::Union(l, r) => SpecExpr::union(resolve(*l, names)?, resolve(*r, names)?),
        Raw::Product(l, r) => SpecExpr::product(resolve(*l, names)?, resolve(*r, names)?),
        Raw::Collection(kind, inner, min) => SpecExpr::collection(kind, resolve(*inner, names)?, min),
        Raw::Name(n, pos) => match names.get(&n) {
            Some(id) => SpecExpr::Ref(*id),
            None => return Err(Error::UnknownName { name: n, pos }),
        },
    })
}

/// Parses DSL source into a system with every name resolved.
pub fn parse_spec(text: &str) -> Result<SpecSystem> {
    let toks = Lexer::new(text).tokens()?;
    let end = {
        let mut lx = Lexer::new(text);
        while lx.bump().is_some() {}
        lx.pos
    };
    let mut parser = Parser { toks, at: 0, end };
    let defs = parser.system()?;

    let mut index = HashMap::new();
    for (i, (name, pos, _)) in defs.iter().enumerate() {
        if index.insert(name.clone(), ClassId(i)).is_some() {
            return Err(Error::Syntax {
                pos: *pos,
                msg: format!("class {name} defined twice"),
            });
        }
    }
    let mut names = Vec::with_capacity(defs.len());
    let mut exprs = Vec::with_capacity(defs.len());
    let mut positions = Vec::with_capacity(defs.len());
    for (name, pos, raw) in defs {
        exprs.push(resolve(raw, &index)?);
        names.push(name);
        positions.push(pos);
    }
    Ok(SpecSystem {
        names,
        defs: exprs,
        positions,
        root: ClassId(0),
    })
}

// ---------------------------------------------------------------------------
// Validation

/// A system that passed the well-foundedness check. Immutable.
#[derive(Clone, Debug)]
pub struct ValidatedSpec {
    system: SpecSystem,
    has_empty: Vec<bool>,
    infinite: Vec<bool>,
}

impl ValidatedSpec {
    pub fn system(&self) -> &SpecSystem {
        &self.system
    }

    /// Whether the class contains an object of size 0.
    pub fn has_empty(&self, id: ClassId) -> bool {
        self.has_empty[id.0]
    }

    /// Whether the class has objects of unbounded size.
    pub fn is_infinite(&self, id: ClassId) -> bool {
        self.infinite[id.0]
    }

    pub fn expr_has_empty(&self, e: &SpecExpr) -> bool {
        nullable(e, &self.has_empty)
    }

    pub fn resolve(&self, name: Option<&str>) -> Result<ClassId> {
        self.system.resolve(name)
    }

    pub fn name(&self, id: ClassId) -> &str {
        self.system.name(id)
    }
}

fn nullable(e: &SpecExpr, flags: &[bool]) -> bool {
    match e {
        SpecExpr::Epsilon => true,
        SpecExpr::Atom(_) => false,
        SpecExpr::Union(l, r) => nullable(l, flags) || nullable(r, flags),
        SpecExpr::Product(l, r) => nullable(l, flags) && nullable(r, flags),
        SpecExpr::Collection { min, .. } => *min == 0,
        SpecExpr::Ref(id) => flags[id.0],
    }
}

fn productive(e: &SpecExpr, flags: &[bool]) -> bool {
    match e {
        SpecExpr::Epsilon | SpecExpr::Atom(_) => true,
        SpecExpr::Union(l, r) => productive(l, flags) || productive(r, flags),
        SpecExpr::Product(l, r) => productive(l, flags) && productive(r, flags),
        SpecExpr::Collection { inner, min, .. } => *min == 0 || productive(inner, flags),
        SpecExpr::Ref(id) => flags[id.0],
    }
}

fn unbounded(e: &SpecExpr, inf: &[bool], prod: &[bool]) -> bool {
    match e {
        SpecExpr::Epsilon | SpecExpr::Atom(_) => false,
        SpecExpr::Union(l, r) => unbounded(l, inf, prod) || unbounded(r, inf, prod),
        SpecExpr::Product(l, r) => {
            (unbounded(l, inf, prod) && productive(r, prod)) || (unbounded(r, inf, prod) && productive(l, prod))
        }
        SpecExpr::Collection { inner, .. } => productive(inner, prod),
        SpecExpr::Ref(id) => inf[id.0],
    }
}

/// Classes referenced from `e` in a position where everything around the
/// reference can be empty, so the reference alone carries the object size.
fn size_preserving_refs(e: &SpecExpr, nulls: &[bool], out: &mut Vec<ClassId>) {
    match e {
        SpecExpr::Epsilon | SpecExpr::Atom(_) => {}
        SpecExpr::Union(l, r) => {
            size_preserving_refs(l, nulls, out);
            size_preserving_refs(r, nulls, out);
        }
        SpecExpr::Product(l, r) => {
            if nullable(r, nulls) {
                size_preserving_refs(l, nulls, out);
            }
            if nullable(l, nulls) {
                size_preserving_refs(r, nulls, out);
            }
        }
        SpecExpr::Collection { inner, min, .. } => {
            if *min <= 1 {
                size_preserving_refs(inner, nulls, out);
            }
        }
        SpecExpr::Ref(id) => out.push(*id),
    }
}

fn first_bad_collection<'a>(e: &'a SpecExpr, nulls: &[bool]) -> Option<&'a SpecExpr> {
    match e {
        SpecExpr::Union(l, r) | SpecExpr::Product(l, r) => {
            first_bad_collection(l, nulls).or_else(|| first_bad_collection(r, nulls))
        }
        SpecExpr::Collection { inner, .. } => {
            if nullable(inner, nulls) {
                Some(e)
            } else {
                first_bad_collection(inner, nulls)
            }
        }
        _ => None,
    }
}

fn fixpoint(n: usize, init: bool, step: impl Fn(usize, &[bool]) -> bool) -> Vec<bool> {
    let mut flags = vec![init; n];
    loop {
        let next: Vec<bool> = (0..n).map(|i| step(i, &flags)).collect();
        if next == flags {
            return flags;
        }
        flags = next;
    }
}

/// Checks that every class has finitely many objects of each size.
pub fn validate(system: SpecSystem) -> Result<ValidatedSpec> {
    let n = system.len();
    let ill = |id: ClassId, reason: String| Error::IllFounded {
        class: system.name(id).to_string(),
        reason,
    };

    let prod = fixpoint(n, false, |i, f| productive(&system.defs[i], f));
    if let Some(i) = prod.iter().position(|p| !p) {
        return Err(ill(ClassId(i), "unproductive recursion: the class has no finite derivation".into()));
    }

    let nulls = fixpoint(n, false, |i, f| nullable(&system.defs[i], f));
    for id in system.classes() {
        if let Some(bad) = first_bad_collection(system.expr(id), &nulls) {
            return Err(ill(
                id,
                format!(
                    "{} applied to a class containing a size-0 object",
                    system.display_expr(bad)
                ),
            ));
        }
    }

    // A cycle of size-preserving references yields infinitely many objects
    // of the same size.
    let edges: Vec<Vec<ClassId>> = system
        .defs
        .iter()
        .map(|e| {
            let mut out = Vec::new();
            size_preserving_refs(e, &nulls, &mut out);
            out
        })
        .collect();
    if let Some(id) = find_cycle(&edges) {
        return Err(ill(
            id,
            "recursion through a size-0 context gives infinitely many objects of one size".into(),
        ));
    }

    let infinite = fixpoint(n, true, |i, f| unbounded(&system.defs[i], f, &prod));
    Ok(ValidatedSpec {
        system,
        has_empty: nulls,
        infinite,
    })
}

fn find_cycle(edges: &[Vec<ClassId>]) -> Option<ClassId> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(v: usize, edges: &[Vec<ClassId>], state: &mut [u8]) -> Option<ClassId> {
        state[v] = 1;
        for w in &edges[v] {
            match state[w.0] {
                1 => return Some(*w),
                0 => {
                    if let Some(c) = visit(w.0, edges, state) {
                        return Some(c);
                    }
                }
                _ => {}
            }
        }
        state[v] = 2;
        None
    }
    let mut state = vec![0u8; edges.len()];
    (0..edges.len()).find_map(|v| if state[v] == 0 { visit(v, edges, &mut state) } else { None })
}

/// Parses and validates in one step.
pub fn load_spec(text: &str) -> Result<ValidatedSpec> {
    validate(parse_spec(text)?)
}
