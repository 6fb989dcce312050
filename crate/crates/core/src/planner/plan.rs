use std::fmt;

use super::{Filter, ScoreFormula, SExpr};
use crate::error::{Error, Result};
use crate::graph::IndexingTerm;
use crate::oxt::{or_rewrite, BoolFormula};

/// The four atomic operations every plan step maps to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    IndexAccess,
    SetOp,
    Arithmetic,
    Sorting,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanStep {
    IndexAccess { subquery: usize, s_term: IndexingTerm },
    SetOp { subquery: usize, x_terms: Vec<IndexingTerm>, negate: bool },
    Arithmetic { formula: ScoreFormula },
    LocalSort { top_k: Option<usize> },
    GlobalSort { top_k: Option<usize> },
}

impl PlanStep {
    pub fn kind(&self) -> StepKind {
        match self {
            PlanStep::IndexAccess { .. } => StepKind::IndexAccess,
            PlanStep::SetOp { .. } => StepKind::SetOp,
            PlanStep::Arithmetic { .. } => StepKind::Arithmetic,
            PlanStep::LocalSort { .. } | PlanStep::GlobalSort { .. } => StepKind::Sorting,
        }
    }
}

impl fmt::Display for PlanStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanStep::IndexAccess { subquery, s_term } => write!(f, "IndexAccess[{subquery}]({s_term})"),
            PlanStep::SetOp { subquery, x_terms, negate } => {
                let xs: Vec<String> = x_terms.iter().map(|t| t.to_string()).collect();
                write!(f, "SetOp[{subquery}]({}{})", if *negate { "not " } else { "" }, xs.join(" "))
            }
            PlanStep::Arithmetic { formula } => write!(f, "Arithmetic({formula})"),
            PlanStep::LocalSort { .. } => write!(f, "LocalSort"),
            PlanStep::GlobalSort { .. } => write!(f, "GlobalSort"),
        }
    }
}

/// One conjunctive subquery: an s-term whose list is scanned and a residual
/// formula over x-term membership.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subquery {
    pub s_term: IndexingTerm,
    pub x_terms: Vec<IndexingTerm>,
    pub formula: BoolFormula,
    pub negate: bool,
}

/// An apply round whose terms are only known once the nested round has run.
#[derive(Clone, Debug)]
pub struct ApplyPlan {
    pub prefix: String,
    pub nested: Box<QueryPlan>,
}

#[derive(Clone, Debug)]
pub struct QueryPlan {
    pub subqueries: Vec<Subquery>,
    pub steps: Vec<PlanStep>,
    pub filter: Filter,
    pub apply: Option<ApplyPlan>,
}

impl QueryPlan {
    pub fn kinds(&self) -> Vec<StepKind> {
        self.steps.iter().map(|s| s.kind()).collect()
    }
}

fn anchorable(e: &SExpr) -> bool {
    match e {
        SExpr::Term(_) => true,
        SExpr::And(c) => c.iter().any(anchorable),
        SExpr::Difference(c) => anchorable(&c[0]),
        _ => false,
    }
}

/// Operand of a conjunction whose list is scanned: the first bare term,
/// else the first operand that can itself be anchored.
pub fn anchor_child(children: &[SExpr]) -> Option<usize> {
    children
        .iter()
        .position(|c| matches!(c, SExpr::Term(_)))
        .or_else(|| children.iter().position(anchorable))
}

/// Flattens directly nested disjunctions.
pub fn or_operands(children: &[SExpr]) -> Vec<SExpr> {
    let mut out = Vec::new();
    for c in children {
        match c {
            SExpr::Or(inner) => out.extend(or_operands(inner)),
            other => out.push(other.clone()),
        }
    }
    out
}

fn var(t: &IndexingTerm, xs: &mut Vec<IndexingTerm>) -> BoolFormula {
    let i = xs.iter().position(|x| x == t).unwrap_or_else(|| {
        xs.push(t.clone());
        xs.len() - 1
    });
    BoolFormula::Var(i as u16)
}

fn membership(e: &SExpr, xs: &mut Vec<IndexingTerm>) -> Result<BoolFormula> {
    Ok(match e {
        SExpr::Term(t) => var(t, xs),
        SExpr::And(c) => BoolFormula::and_all(c.iter().map(|x| membership(x, xs)).collect::<Result<_>>()?),
        SExpr::Or(c) => BoolFormula::or_all(c.iter().map(|x| membership(x, xs)).collect::<Result<_>>()?),
        SExpr::Difference(c) => {
            let first = membership(&c[0], xs)?;
            let rest = BoolFormula::or_all(c[1..].iter().map(|x| membership(x, xs)).collect::<Result<_>>()?);
            BoolFormula::and_all(vec![first, rest.negate()])
        }
        SExpr::Apply { .. } | SExpr::Slot => {
            return Err(Error::Plan("apply must be the outermost operator".into()))
        }
    })
}

/// s-term and effective residual formula of an anchorable expression.
fn anchor(e: &SExpr, xs: &mut Vec<IndexingTerm>) -> Result<(IndexingTerm, BoolFormula)> {
    match e {
        SExpr::Term(t) => Ok((t.clone(), BoolFormula::True)),
        SExpr::And(c) => {
            let i = anchor_child(c)
                .ok_or_else(|| Error::Plan(format!("no operand of {e} can anchor the conjunction")))?;
            let (s, f) = anchor(&c[i], xs)?;
            let mut parts = vec![f];
            for (j, x) in c.iter().enumerate() {
                if j != i {
                    parts.push(membership(x, xs)?);
                }
            }
            parts.retain(|p| *p != BoolFormula::True);
            Ok((s, BoolFormula::and_all(parts)))
        }
        SExpr::Difference(c) => {
            let (s, f) = anchor(&c[0], xs)?;
            let rest = BoolFormula::or_all(c[1..].iter().map(|x| membership(x, xs)).collect::<Result<_>>()?);
            if f == BoolFormula::True {
                Ok((s, rest.negate()))
            } else {
                Ok((s, BoolFormula::and_all(vec![f, rest.negate()])))
            }
        }
        SExpr::Or(_) => Err(Error::Plan(format!("{e} cannot anchor a conjunction; rewrite it as a top-level or"))),
        SExpr::Apply { .. } | SExpr::Slot => Err(Error::Plan("apply must be the outermost operator".into())),
    }
}

/// Decomposes a conjunctive expression into one subquery.
pub fn decompose(e: &SExpr) -> Result<Subquery> {
    let mut xs = Vec::new();
    let (s_term, f) = anchor(e, &mut xs)?;
    let (formula, negate) = match f {
        BoolFormula::Not(x) => (*x, true),
        other => (other, false),
    };
    Ok(Subquery { s_term, x_terms: xs, formula, negate })
}

/// Subqueries for a single-round expression. A disjunction becomes
/// pairwise-disjoint subqueries; anything else is one subquery.
pub fn subqueries(e: &SExpr) -> Result<Vec<Subquery>> {
    match e {
        SExpr::Or(c) => or_rewrite(&or_operands(c)).iter().map(decompose).collect(),
        other => Ok(vec![decompose(other)?]),
    }
}

pub fn plan(e: &SExpr, filter: &Filter, nested: &Filter, max_rounds: usize) -> Result<QueryPlan> {
    let rounds = e.apply_depth() + 1;
    if rounds > max_rounds {
        return Err(Error::Plan(format!("query needs {rounds} rounds, limit is {max_rounds}")));
    }
    if let SExpr::Apply { prefix, inner } = e {
        let nested_plan = plan(inner, nested, nested, max_rounds - 1)?;
        return Ok(QueryPlan {
            subqueries: Vec::new(),
            steps: Vec::new(),
            filter: filter.clone(),
            apply: Some(ApplyPlan { prefix: prefix.clone(), nested: Box::new(nested_plan) }),
        });
    }
    let subs = subqueries(e)?;
    let mut steps = Vec::new();
    for (i, s) in subs.iter().enumerate() {
        steps.push(PlanStep::IndexAccess { subquery: i, s_term: s.s_term.clone() });
        if !s.x_terms.is_empty() {
            steps.push(PlanStep::SetOp { subquery: i, x_terms: s.x_terms.clone(), negate: s.negate });
        }
    }
    if let Some(f) = &filter.formula {
        steps.push(PlanStep::Arithmetic { formula: f.clone() });
    }
    if filter.is_sorted() {
        steps.push(PlanStep::LocalSort { top_k: filter.top_k });
        steps.push(PlanStep::GlobalSort { top_k: filter.top_k });
    }
    Ok(QueryPlan { subqueries: subs, steps, filter: filter.clone(), apply: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::parse_sexpr;

    fn t(s: &str) -> IndexingTerm {
        s.parse().unwrap()
    }

    fn p(s: &str, f: Filter) -> QueryPlan {
        plan(&parse_sexpr(s).unwrap(), &f, &Filter::none(), 2).unwrap()
    }

    #[test]
    fn table_shapes() {
        let q = p("(term friend:1)", Filter::sorted());
        assert_eq!(q.kinds(), vec![StepKind::IndexAccess, StepKind::Sorting, StepKind::Sorting]);
        assert!(matches!(q.steps[1], PlanStep::LocalSort { .. }));
        assert!(matches!(q.steps[2], PlanStep::GlobalSort { .. }));

        let q = p("(and friend:1 friend:2)", Filter::none());
        assert_eq!(
            q.steps,
            vec![
                PlanStep::IndexAccess { subquery: 0, s_term: t("friend:1") },
                PlanStep::SetOp { subquery: 0, x_terms: vec![t("friend:2")], negate: false },
            ]
        );

        let q = p("(or friend:1 friend:2 friend:3)", Filter::none());
        assert_eq!(q.subqueries.len(), 3);
        assert!(q.subqueries[0].negate && q.subqueries[1].negate && !q.subqueries[2].negate);
        assert_eq!(q.subqueries[0].x_terms, vec![t("friend:2"), t("friend:3")]);
        assert_eq!(q.subqueries[2].s_term, t("friend:3"));
        assert!(q.subqueries[2].x_terms.is_empty());

        let q = p("(and friend:1 friend:2)", Filter::top_k(3).with_formula(ScoreFormula::parse("(* key 2)").unwrap()));
        assert!(q.kinds().contains(&StepKind::Arithmetic));
    }

    #[test]
    fn or_rewrite_shape() {
        let e = parse_sexpr("(or friend:1 friend:2 friend:3)").unwrap();
        let SExpr::Or(c) = &e else { unreachable!() };
        let got: Vec<String> = or_rewrite(c).iter().map(|x| x.to_string()).collect();
        assert_eq!(
            got,
            vec!["(difference friend:1 (or friend:2 friend:3))", "(difference friend:2 friend:3)", "friend:3"]
        );
        assert_eq!(or_rewrite(&c[..1]).len(), 1);
        assert!(or_rewrite(&[]).is_empty());
    }

    #[test]
    fn difference_uses_negate_flag() {
        let s = decompose(&parse_sexpr("(difference friend:3 (and friend:1 friend:2))").unwrap()).unwrap();
        assert_eq!(s.s_term, t("friend:3"));
        assert!(s.negate);
        assert_eq!(s.formula.to_string(), "(and v0 v1)");
    }

    #[test]
    fn nested_anchor() {
        let s = decompose(&parse_sexpr("(and (or friend:1 friend:2) friend:3)").unwrap()).unwrap();
        assert_eq!(s.s_term, t("friend:3"));
        assert!(!s.negate);
        let s = decompose(&parse_sexpr("(and (difference friend:1 friend:2) friend:3)").unwrap()).unwrap();
        assert_eq!(s.s_term, t("friend:3"));
        assert_eq!(s.formula.to_string(), "(and v0 (not v1))");
        let s = decompose(&parse_sexpr("(and (difference friend:1 friend:2) (or friend:3 friend:4))").unwrap()).unwrap();
        assert_eq!(s.s_term, t("friend:1"));
        assert!(decompose(&parse_sexpr("(and (or friend:1 friend:2) (or friend:3 friend:4))").unwrap()).is_err());
    }

    #[test]
    fn apply_depth_cap() {
        let e = parse_sexpr("(apply friend: (apply friend: friend:1))").unwrap();
        assert!(matches!(plan(&e, &Filter::none(), &Filter::none(), 2), Err(Error::Plan(_))));
        assert!(plan(&e, &Filter::none(), &Filter::none(), 3).is_ok());
        let q = p("(apply friend: friend:1)", Filter::none());
        assert!(q.apply.is_some());
    }
}
