use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{EntityId, IndexingTerm};

/// Parsed query expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Term(IndexingTerm),
    And(Vec<SExpr>),
    Or(Vec<SExpr>),
    /// First child minus the union of the rest.
    Difference(Vec<SExpr>),
    /// `prefix` is an edge type; the nested expression's ids are turned into `prefix:id` terms.
    Apply { prefix: String, inner: Box<SExpr> },
    /// Template placeholder, only legal in templates.
    Slot,
}

impl SExpr {
    pub fn term(text: &str) -> Result<SExpr> {
        Ok(SExpr::Term(text.parse()?))
    }

    /// Number of apply nodes along the deepest path.
    pub fn apply_depth(&self) -> usize {
        match self {
            SExpr::Apply { inner, .. } => 1 + inner.apply_depth(),
            SExpr::And(c) | SExpr::Or(c) | SExpr::Difference(c) => {
                c.iter().map(SExpr::apply_depth).max().unwrap_or(0)
            }
            SExpr::Term(_) | SExpr::Slot => 0,
        }
    }

    pub fn contains_apply(&self) -> bool {
        self.apply_depth() > 0
    }

    pub fn has_slot(&self) -> bool {
        match self {
            SExpr::Slot => true,
            SExpr::Term(_) => false,
            SExpr::Apply { inner, .. } => inner.has_slot(),
            SExpr::And(c) | SExpr::Or(c) | SExpr::Difference(c) => c.iter().any(SExpr::has_slot),
        }
    }

    /// Distinct terms in left-to-right order.
    pub fn terms(&self) -> Vec<IndexingTerm> {
        let mut out = Vec::new();
        self.collect_terms(&mut out);
        out
    }

    fn collect_terms(&self, out: &mut Vec<IndexingTerm>) {
        match self {
            SExpr::Term(t) => {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
            SExpr::And(c) | SExpr::Or(c) | SExpr::Difference(c) => {
                c.iter().for_each(|e| e.collect_terms(out))
            }
            SExpr::Apply { inner, .. } => inner.collect_terms(out),
            SExpr::Slot => {}
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, op: &str, c: &[SExpr]| {
            write!(f, "({op}")?;
            for e in c {
                write!(f, " {e}")?;
            }
            write!(f, ")")
        };
        match self {
            SExpr::Term(t) => write!(f, "{t}"),
            SExpr::And(c) => list(f, "and", c),
            SExpr::Or(c) => list(f, "or", c),
            SExpr::Difference(c) => list(f, "difference", c),
            SExpr::Apply { prefix, inner } => write!(f, "(apply {prefix}: {inner})"),
            SExpr::Slot => write!(f, "?"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(usize, Tok<'_>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Tok::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::Close));
                i += 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && bytes[i] != b'('
                    && bytes[i] != b')'
                {
                    i += 1;
                }
                out.push((start, Tok::Atom(&text[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    toks: Vec<(usize, Tok<'a>)>,
    pos: usize,
    end: usize,
    allow_slots: bool,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&(usize, Tok<'a>)> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.0)
    }

    fn expr(&mut self) -> Result<SExpr> {
        let (at, tok) = match self.toks.get(self.pos) {
            Some(t) => t.clone(),
            None => return Err(Error::parse(self.end, "unexpected end of input")),
        };
        self.pos += 1;
        match tok {
            Tok::Close => Err(Error::parse(at, "unexpected ')'")),
            Tok::Atom(a) => self.leaf(at, a),
            Tok::Open => {
                let (op_at, op) = match self.toks.get(self.pos) {
                    Some((p, Tok::Atom(a))) => (*p, *a),
                    Some((p, _)) => return Err(Error::parse(*p, "expected operator")),
                    None => return Err(Error::parse(self.end, "unclosed '('")),
                };
                self.pos += 1;
                let node = match op {
                    "term" => {
                        let arg = self.expr()?;
                        match arg {
                            SExpr::Term(_) | SExpr::Slot => arg,
                            _ => return Err(Error::parse(op_at, "term takes a single indexing term")),
                        }
                    }
                    "and" | "or" | "difference" => {
                        let mut children = Vec::new();
                        while !matches!(self.peek(), Some((_, Tok::Close)) | None) {
                            children.push(self.expr()?);
                        }
                        if self.peek().is_none() {
                            return Err(Error::parse(self.end, format!("unclosed '(' opened at {at}")));
                        }
                        let slotted = self.allow_slots && children.iter().any(|c| matches!(c, SExpr::Slot));
                        if children.len() < 2 && !(slotted && children.len() == 1) {
                            return Err(Error::parse(op_at, format!("'{op}' needs at least two arguments")));
                        }
                        match op {
                            "and" => SExpr::And(children),
                            "or" => SExpr::Or(children),
                            _ => SExpr::Difference(children),
                        }
                    }
                    "apply" => {
                        let prefix = match self.toks.get(self.pos) {
                            Some((p, Tok::Atom(a))) => {
                                let p = *p;
                                let a = *a;
                                self.pos += 1;
                                let ty = a.strip_suffix(':').ok_or_else(|| {
                                    Error::parse(p, "apply prefix must end with ':'")
                                })?;
                                if !crate::graph::valid_edge_type(ty) {
                                    return Err(Error::parse(p, format!("invalid prefix '{a}'")));
                                }
                                ty.to_string()
                            }
                            _ => return Err(Error::parse(self.here(), "apply needs a prefix")),
                        };
                        let inner = self.expr()?;
                        SExpr::Apply {
                            prefix,
                            inner: Box::new(inner),
                        }
                    }
                    other => return Err(Error::parse(op_at, format!("unknown operator '{other}'"))),
                };
                match self.peek() {
                    Some((_, Tok::Close)) => {
                        self.pos += 1;
                        Ok(node)
                    }
                    Some((p, _)) => Err(Error::parse(*p, format!("too many arguments for '{op}'"))),
                    None => Err(Error::parse(self.end, format!("unclosed '(' opened at {at}"))),
                }
            }
        }
    }

    fn leaf(&self, at: usize, atom: &str) -> Result<SExpr> {
        if atom == "?" {
            return if self.allow_slots {
                Ok(SExpr::Slot)
            } else {
                Err(Error::parse(at, "'?' is only allowed in templates"))
            };
        }
        atom.parse::<IndexingTerm>()
            .map(SExpr::Term)
            .map_err(|e| match e {
                Error::Parse { position, message } => Error::parse(at + position, message),
                other => other,
            })
    }
}

fn parse_with(text: &str, allow_slots: bool) -> Result<SExpr> {
    let mut p = Parser {
        toks: tokenize(text),
        pos: 0,
        end: text.len(),
        allow_slots,
    };
    let e = p.expr()?;
    if let Some((at, _)) = p.peek() {
        return Err(Error::parse(*at, "trailing input after expression"));
    }
    Ok(e)
}

pub fn parse_sexpr(text: &str) -> Result<SExpr> {
    parse_with(text, false)
}

pub fn parse_template(text: &str) -> Result<SExpr> {
    let t = parse_with(text, true)?;
    if !t.has_slot() {
        return Err(Error::parse(0, "template has no '?' slot"));
    }
    Ok(t)
}

/// Fills every slot with the terms `prefix:id`. Slots are variadic: inside an
/// n-ary node they splice all terms; elsewhere they become a disjunction.
/// Returns `None` when `ids` is empty and the template collapses to nothing.
pub fn instantiate(template: &SExpr, prefix: &str, ids: &[EntityId]) -> Option<SExpr> {
    let terms: Vec<SExpr> = ids
        .iter()
        .map(|id| SExpr::Term(IndexingTerm::new(prefix, *id)))
        .collect();
    fill(template, &terms)
}

fn collapse(mut c: Vec<SExpr>) -> Option<SExpr> {
    match c.len() {
        0 => None,
        1 => c.pop(),
        _ => Some(SExpr::Or(c)),
    }
}

fn fill(e: &SExpr, terms: &[SExpr]) -> Option<SExpr> {
    let nary = |c: &[SExpr]| -> Vec<SExpr> {
        let mut out = Vec::new();
        for x in c {
            if matches!(x, SExpr::Slot) {
                out.extend(terms.iter().cloned());
            } else if let Some(y) = fill(x, terms) {
                out.push(y);
            }
        }
        out
    };
    match e {
        SExpr::Slot => collapse(terms.to_vec()),
        SExpr::Term(_) => Some(e.clone()),
        SExpr::Or(c) => collapse(nary(c)),
        SExpr::And(c) => {
            if terms.is_empty() && c.iter().any(|x| matches!(x, SExpr::Slot)) {
                return None;
            }
            let mut v = nary(c);
            match v.len() {
                0 => None,
                1 => v.pop(),
                _ => Some(SExpr::And(v)),
            }
        }
        SExpr::Difference(c) => {
            if terms.is_empty() && matches!(c.first(), Some(SExpr::Slot)) {
                return None;
            }
            let mut v = nary(c);
            match v.len() {
                0 => None,
                1 => v.pop(),
                _ => Some(SExpr::Difference(v)),
            }
        }
        SExpr::Apply { prefix, inner } => fill(inner, terms).map(|i| SExpr::Apply {
            prefix: prefix.clone(),
            inner: Box::new(i),
        }),
    }
}
