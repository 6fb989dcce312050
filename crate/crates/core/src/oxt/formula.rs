use std::fmt;

use crate::error::{Error, Result};

const OP_VAR: u8 = 0x01;
const OP_TRUE: u8 = 0x02;
const OP_FALSE: u8 = 0x03;
const OP_AND: u8 = 0x10;
const OP_OR: u8 = 0x11;
const OP_NOT: u8 = 0x12;

/// Residual boolean formula over x-term membership bits `v_0..v_{n-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BoolFormula {
    Var(u16),
    True,
    False,
    And(Box<BoolFormula>, Box<BoolFormula>),
    Or(Box<BoolFormula>, Box<BoolFormula>),
    Not(Box<BoolFormula>),
}

impl BoolFormula {
    pub fn and_all(mut items: Vec<BoolFormula>) -> BoolFormula {
        let Some(first) = (!items.is_empty()).then(|| items.remove(0)) else {
            return BoolFormula::True;
        };
        items.into_iter().fold(first, |a, b| BoolFormula::And(Box::new(a), Box::new(b)))
    }

    pub fn or_all(mut items: Vec<BoolFormula>) -> BoolFormula {
        let Some(first) = (!items.is_empty()).then(|| items.remove(0)) else {
            return BoolFormula::False;
        };
        items.into_iter().fold(first, |a, b| BoolFormula::Or(Box::new(a), Box::new(b)))
    }

    pub fn negate(self) -> BoolFormula {
        match self {
            BoolFormula::Not(x) => *x,
            other => BoolFormula::Not(Box::new(other)),
        }
    }

    pub fn eval(&self, v: &[bool]) -> bool {
        match self {
            BoolFormula::Var(i) => v[*i as usize],
            BoolFormula::True => true,
            BoolFormula::False => false,
            BoolFormula::And(a, b) => a.eval(v) && b.eval(v),
            BoolFormula::Or(a, b) => a.eval(v) || b.eval(v),
            BoolFormula::Not(a) => !a.eval(v),
        }
    }

    /// One past the highest variable index used.
    pub fn var_bound(&self) -> usize {
        match self {
            BoolFormula::Var(i) => *i as usize + 1,
            BoolFormula::True | BoolFormula::False => 0,
            BoolFormula::And(a, b) | BoolFormula::Or(a, b) => a.var_bound().max(b.var_bound()),
            BoolFormula::Not(a) => a.var_bound(),
        }
    }

    /// Postfix encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(&mut out);
        out
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            BoolFormula::Var(i) => {
                out.push(OP_VAR);
                out.extend_from_slice(&i.to_be_bytes());
            }
            BoolFormula::True => out.push(OP_TRUE),
            BoolFormula::False => out.push(OP_FALSE),
            BoolFormula::And(a, b) | BoolFormula::Or(a, b) => {
                a.encode_into(out);
                b.encode_into(out);
                out.push(if matches!(self, BoolFormula::And(..)) { OP_AND } else { OP_OR });
            }
            BoolFormula::Not(a) => {
                a.encode_into(out);
                out.push(OP_NOT);
            }
        }
    }

    /// Decodes and checks that every variable is below `vars`.
    pub fn decode(bytes: &[u8], vars: usize) -> Result<BoolFormula> {
        let bad = |m: &str| Error::protocol(format!("residual formula: {m}"));
        let mut stack: Vec<BoolFormula> = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let op = bytes[i];
            i += 1;
            let node = match op {
                OP_VAR => {
                    let b = bytes.get(i..i + 2).ok_or_else(|| bad("truncated variable"))?;
                    i += 2;
                    let v = u16::from_be_bytes([b[0], b[1]]);
                    if v as usize >= vars {
                        return Err(bad(&format!("variable v{v} but only {vars} x-terms")));
                    }
                    BoolFormula::Var(v)
                }
                OP_TRUE => BoolFormula::True,
                OP_FALSE => BoolFormula::False,
                OP_NOT => BoolFormula::Not(Box::new(stack.pop().ok_or_else(|| bad("stack underflow"))?)),
                OP_AND | OP_OR => {
                    let b = stack.pop().ok_or_else(|| bad("stack underflow"))?;
                    let a = stack.pop().ok_or_else(|| bad("stack underflow"))?;
                    if op == OP_AND {
                        BoolFormula::And(Box::new(a), Box::new(b))
                    } else {
                        BoolFormula::Or(Box::new(a), Box::new(b))
                    }
                }
                other => return Err(bad(&format!("unknown opcode {other:#04x}"))),
            };
            stack.push(node);
        }
        match (stack.pop(), stack.is_empty()) {
            (Some(f), true) => Ok(f),
            _ => Err(bad("expected exactly one expression")),
        }
    }

    /// The formula with variables anonymised, as it appears to a server.
    pub fn shape(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for BoolFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolFormula::Var(i) => write!(f, "v{i}"),
            BoolFormula::True => write!(f, "true"),
            BoolFormula::False => write!(f, "false"),
            BoolFormula::And(a, b) => write!(f, "(and {a} {b})"),
            BoolFormula::Or(a, b) => write!(f, "(or {a} {b})"),
            BoolFormula::Not(a) => write!(f, "(not {a})"),
        }
    }
}
