use std::fmt;

use crate::error::{Error, Result};
use crate::mpc::{ring_add, ring_mul, RING_MASK};

/// Arithmetic scoring expression evaluated on shares by the servers.
///
/// Leaves: `key` is the tuple's sort-key share, `src` is the per-subquery
/// weight supplied by the front-end, integers are public constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScoreFormula {
    Key,
    Src,
    Const(u32),
    Add(Box<ScoreFormula>, Box<ScoreFormula>),
    Mul(Box<ScoreFormula>, Box<ScoreFormula>),
}

const OP_KEY: u8 = 0x01;
const OP_SRC: u8 = 0x02;
const OP_CONST: u8 = 0x03;
const OP_ADD: u8 = 0x10;
const OP_MUL: u8 = 0x11;

impl ScoreFormula {
    pub fn parse(text: &str) -> Result<ScoreFormula> {
        let toks = tokens(text);
        let mut pos = 0;
        let f = parse_node(&toks, &mut pos, text.len())?;
        if let Some((at, _)) = toks.get(pos) {
            return Err(Error::parse(*at, "trailing input after formula"));
        }
        Ok(f)
    }

    pub fn eval_plain(&self, key: u32, src: u32) -> u32 {
        match self {
            ScoreFormula::Key => key & RING_MASK,
            ScoreFormula::Src => src & RING_MASK,
            ScoreFormula::Const(c) => c & RING_MASK,
            ScoreFormula::Add(a, b) => ring_add(a.eval_plain(key, src), b.eval_plain(key, src)),
            ScoreFormula::Mul(a, b) => ring_mul(a.eval_plain(key, src), b.eval_plain(key, src)),
        }
    }

    /// Secure multiplications needed per vector entry. A product with a
    /// public constant is local and costs nothing.
    pub fn mul_count(&self) -> usize {
        match self {
            ScoreFormula::Key | ScoreFormula::Src | ScoreFormula::Const(_) => 0,
            ScoreFormula::Add(a, b) => a.mul_count() + b.mul_count(),
            ScoreFormula::Mul(a, b) => {
                let own = usize::from(!a.is_public() && !b.is_public());
                own + a.mul_count() + b.mul_count()
            }
        }
    }

    /// True when the subtree contains no shared leaf.
    pub fn is_public(&self) -> bool {
        match self {
            ScoreFormula::Const(_) => true,
            ScoreFormula::Key | ScoreFormula::Src => false,
            ScoreFormula::Add(a, b) | ScoreFormula::Mul(a, b) => a.is_public() && b.is_public(),
        }
    }

    pub fn uses_src(&self) -> bool {
        match self {
            ScoreFormula::Src => true,
            ScoreFormula::Key | ScoreFormula::Const(_) => false,
            ScoreFormula::Add(a, b) | ScoreFormula::Mul(a, b) => a.uses_src() || b.uses_src(),
        }
    }

    /// Prefix encoding used on the wire.
    pub fn encode(&self, out: &mut Vec<u8>) {
        match self {
            ScoreFormula::Key => out.push(OP_KEY),
            ScoreFormula::Src => out.push(OP_SRC),
            ScoreFormula::Const(c) => {
                out.push(OP_CONST);
                out.extend_from_slice(&c.to_be_bytes());
            }
            ScoreFormula::Add(a, b) | ScoreFormula::Mul(a, b) => {
                out.push(if matches!(self, ScoreFormula::Add(..)) { OP_ADD } else { OP_MUL });
                a.encode(out);
                b.encode(out);
            }
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<(ScoreFormula, usize)> {
        fn go(b: &[u8], pos: &mut usize, depth: usize) -> Result<ScoreFormula> {
            if depth > 64 {
                return Err(Error::protocol("score formula nested too deeply"));
            }
            let op = *b.get(*pos).ok_or_else(|| Error::protocol("truncated score formula"))?;
            *pos += 1;
            Ok(match op {
                OP_KEY => ScoreFormula::Key,
                OP_SRC => ScoreFormula::Src,
                OP_CONST => {
                    let c = b
                        .get(*pos..*pos + 4)
                        .ok_or_else(|| Error::protocol("truncated score constant"))?;
                    *pos += 4;
                    ScoreFormula::Const(u32::from_be_bytes(c.try_into().unwrap()))
                }
                OP_ADD | OP_MUL => {
                    let a = Box::new(go(b, pos, depth + 1)?);
                    let c = Box::new(go(b, pos, depth + 1)?);
                    if op == OP_ADD {
                        ScoreFormula::Add(a, c)
                    } else {
                        ScoreFormula::Mul(a, c)
                    }
                }
                other => return Err(Error::protocol(format!("unknown formula opcode {other:#04x}"))),
            })
        }
        let mut pos = 0;
        let f = go(bytes, &mut pos, 0)?;
        Ok((f, pos))
    }
}

impl fmt::Display for ScoreFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreFormula::Key => write!(f, "key"),
            ScoreFormula::Src => write!(f, "src"),
            ScoreFormula::Const(c) => write!(f, "{c}"),
            ScoreFormula::Add(a, b) => write!(f, "(+ {a} {b})"),
            ScoreFormula::Mul(a, b) => write!(f, "(* {a} {b})"),
        }
    }
}

fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &text[s..i]));
            }
            if !c.is_whitespace() {
                out.push((i, &text[i..i + 1]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

fn parse_node(toks: &[(usize, &str)], pos: &mut usize, end: usize) -> Result<ScoreFormula> {
    let (at, tok) = *toks.get(*pos).ok_or_else(|| Error::parse(end, "unexpected end of formula"))?;
    *pos += 1;
    match tok {
        "key" => Ok(ScoreFormula::Key),
        "src" => Ok(ScoreFormula::Src),
        ")" => Err(Error::parse(at, "unexpected ')'")),
        "(" => {
            let (op_at, op) = *toks.get(*pos).ok_or_else(|| Error::parse(end, "unclosed '('"))?;
            *pos += 1;
            if op != "+" && op != "*" {
                return Err(Error::parse(op_at, format!("unknown formula operator '{op}'")));
            }
            let mut args = Vec::new();
            loop {
                match toks.get(*pos) {
                    Some((_, ")")) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(parse_node(toks, pos, end)?),
                    None => return Err(Error::parse(end, "unclosed '('")),
                }
            }
            if args.len() < 2 {
                return Err(Error::parse(op_at, format!("'{op}' needs at least two operands")));
            }
            let mut it = args.into_iter();
            let first = it.next().unwrap();
            Ok(it.fold(first, |acc, x| {
                if op == "+" {
                    ScoreFormula::Add(Box::new(acc), Box::new(x))
                } else {
                    ScoreFormula::Mul(Box::new(acc), Box::new(x))
                }
            }))
        }
        num => num
            .parse::<u32>()
            .ok()
            .filter(|v| *v <= RING_MASK)
            .map(ScoreFormula::Const)
            .ok_or_else(|| Error::parse(at, format!("unknown formula atom '{num}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_eval() {
        let f = ScoreFormula::parse("(+ key (* 3 src))").unwrap();
        assert_eq!(f.eval_plain(10, 4), 22);
        assert_eq!(f.mul_count(), 0);
        let g = ScoreFormula::parse("(* key src key)").unwrap();
        assert_eq!(g.eval_plain(3, 5), 45);
        assert_eq!(g.mul_count(), 2);
        assert_eq!(ScoreFormula::parse(&g.to_string()).unwrap(), g);
        assert_eq!(ScoreFormula::parse("(+ 2147483647 1)").unwrap().eval_plain(0, 0), 0);
    }

    #[test]
    fn wire_roundtrip() {
        let f = ScoreFormula::parse("(+ (* key src) 7)").unwrap();
        let mut buf = Vec::new();
        f.encode(&mut buf);
        assert_eq!(ScoreFormula::decode(&buf).unwrap(), (f, buf.len()));
        assert!(ScoreFormula::decode(&buf[..3]).is_err());
    }

    #[test]
    fn bad_formulas() {
        for bad in ["", "(+ key)", "(- key src)", "foo", "(+ key src", "key src"] {
            assert!(ScoreFormula::parse(bad).is_err(), "{bad}");
        }
    }
}
