//! Front-end query handling: parsing, decomposition into atomic steps,
//! token generation and the multi-round apply operator.

mod plan;
mod score;
mod sexpr;

pub use plan::{
    anchor_child, decompose, or_operands, plan, subqueries, ApplyPlan, PlanStep, QueryPlan, StepKind, Subquery,
};
pub use score::ScoreFormula;
pub use sexpr::{instantiate, parse_sexpr, parse_template, SExpr};

use crate::graph::TermWeights;

/// Ranking directive attached to a query or apply round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Filter {
    pub sort: bool,
    pub top_k: Option<usize>,
    pub formula: Option<ScoreFormula>,
}

impl Filter {
    pub fn none() -> Self {
        Filter::default()
    }

    pub fn sorted() -> Self {
        Filter { sort: true, ..Filter::default() }
    }

    pub fn top_k(k: usize) -> Self {
        Filter { sort: true, top_k: Some(k), formula: None }
    }

    pub fn with_formula(mut self, f: ScoreFormula) -> Self {
        self.sort = true;
        self.formula = Some(f);
        self
    }

    pub fn is_sorted(&self) -> bool {
        self.sort || self.top_k.is_some() || self.formula.is_some()
    }
}

pub const DEFAULT_TEMPLATE: &str = "(or ?)";
pub const DEFAULT_MAX_ROUNDS: usize = 2;

/// A complete query as submitted to the front-end or the plaintext engine.
#[derive(Clone, Debug)]
pub struct QueryRequest {
    pub expr: SExpr,
    /// Applied to the final round.
    pub filter: Filter,
    /// Applied to every inner apply round.
    pub nested_filter: Filter,
    /// Outer template for apply rounds.
    pub template: SExpr,
    /// `src` weights for non-apply queries; absent terms weigh 1.
    pub weights: TermWeights,
    pub max_rounds: usize,
}

impl QueryRequest {
    pub fn new(expr: SExpr) -> Self {
        QueryRequest {
            expr,
            filter: Filter::none(),
            nested_filter: Filter::none(),
            template: parse_template(DEFAULT_TEMPLATE).expect("default template parses"),
            weights: TermWeights::new(),
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }

    pub fn parse(text: &str) -> crate::Result<Self> {
        Ok(Self::new(parse_sexpr(text)?))
    }

    pub fn filter(mut self, f: Filter) -> Self {
        self.filter = f;
        self
    }

    pub fn nested(mut self, f: Filter) -> Self {
        self.nested_filter = f;
        self
    }

    pub fn rounds(&self) -> usize {
        self.expr.apply_depth() + 1
    }
}
