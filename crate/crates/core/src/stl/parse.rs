//! Text grammar for formulas.
//!
//! ```text
//! formula := disj ("implies" formula)?
//! disj    := conj ("or" conj)*
//! conj    := until ("and" until)*
//! until   := unary ("U" interval unary)*
//! unary   := "not" unary | "F" interval unary | "G" interval unary | primary
//! primary := "(" formula ")" | "true" | "false" | name
//! interval:= "[" number "," (number | "inf") "]"
//! ```
//!
//! Names match `[a-z_][a-z0-9_]*` and are resolved through a [`Vocabulary`].

use super::{Formula, Interval, StlError, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Until,
    Eventually,
    Always,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, StlError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            '[' => out.push((start, Tok::LBracket)),
            ']' => out.push((start, Tok::RBracket)),
            ',' => out.push((start, Tok::Comma)),
            'U' => out.push((start, Tok::Until)),
            'F' => out.push((start, Tok::Eventually)),
            'G' => out.push((start, Tok::Always)),
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                let lit = &text[start..i];
                let value = lit.parse::<f64>().map_err(|_| StlError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{lit}`"),
                })?;
                out.push((start, Tok::Num(value)));
                continue;
            }
            c if c.is_ascii_lowercase() || c == '_' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_lowercase() || bytes[i].is_ascii_digit() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            other => {
                return Err(StlError::Syntax { pos: start, msg: format!("unexpected character `{other}`") })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    vocab: &'a dyn Vocabulary,
    to_steps: &'a dyn Fn(f64, usize) -> Result<usize, StlError>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, StlError> {
        Err(StlError::Syntax { pos: self.offset(), msg: msg.into() })
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), StlError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Formula, StlError> {
        let lhs = self.disjunction()?;
        if self.is_keyword("implies") {
            self.pos += 1;
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.conjunction()?;
        while self.is_keyword("or") {
            self.pos += 1;
            lhs = Formula::or(lhs, self.conjunction()?);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.until()?;
        while self.is_keyword("and") {
            self.pos += 1;
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, StlError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Until) {
            self.pos += 1;
            let iv = self.interval()?;
            lhs = Formula::until(iv, lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, StlError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == "not" => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Eventually) => {
                self.pos += 1;
                let iv = self.interval()?;
                Ok(Formula::eventually(iv, self.unary()?))
            }
            Some(Tok::Always) => {
                self.pos += 1;
                let iv = self.interval()?;
                Ok(Formula::always(iv, self.unary()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, StlError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "true" => Ok(Formula::True),
                    "false" => Ok(Formula::not(Formula::True)),
                    "not" | "and" | "or" | "implies" | "inf" => {
                        Err(StlError::Syntax { pos: at, msg: format!("unexpected keyword `{name}`") })
                    }
                    _ => self
                        .vocab
                        .resolve(&name)
                        .ok_or(StlError::UnknownPredicate { name, pos: at }),
                }
            }
            Some(_) => self.error("expected a predicate, `true`, `not`, `F`, `G` or `(`"),
            None => self.error("unexpected end of formula"),
        }
    }

    fn bound(&mut self) -> Result<Option<usize>, StlError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Some((self.to_steps)(x, at)?))
            }
            Some(Tok::Ident(s)) if s == "inf" => {
                self.pos += 1;
                Ok(None)
            }
            _ => self.error("expected an interval bound"),
        }
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        self.expect(Tok::LBracket, "`[`")?;
        let at = self.offset();
        let lo = self.bound()?.ok_or(StlError::Syntax {
            pos: at,
            msg: "lower bound cannot be `inf`".into(),
        })?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.bound()?;
        self.expect(Tok::RBracket, "`]`")?;
        match hi {
            Some(hi) => Interval::new(lo, hi),
            None => Ok(Interval::unbounded(lo)),
        }
    }
}

fn parse_with(
    text: &str,
    vocab: &dyn Vocabulary,
    to_steps: &dyn Fn(f64, usize) -> Result<usize, StlError>,
) -> Result<Formula, StlError> {
    let mut parser = Parser { toks: tokenize(text)?, pos: 0, end: text.len(), vocab, to_steps };
    let phi = parser.formula()?;
    if parser.pos != parser.toks.len() {
        return parser.error("trailing input");
    }
    Ok(phi)
}

/// Parses a formula whose interval bounds are step counts.
pub fn parse_formula(text: &str, vocab: &dyn Vocabulary) -> Result<Formula, StlError> {
    parse_with(text, vocab, &|x, pos| {
        if x.fract() != 0.0 {
            return Err(StlError::Syntax { pos, msg: format!("step bound {x} is not an integer") });
        }
        Ok(x as usize)
    })
}

/// Parses a formula whose interval bounds are in seconds, rounding each
/// bound to the nearest multiple of `dt`.
pub fn parse_formula_seconds(text: &str, vocab: &dyn Vocabulary, dt: f64) -> Result<Formula, StlError> {
    if !(dt > 0.0) {
        return Err(StlError::InvalidInterval(format!("time step must be positive, got {dt}")));
    }
    parse_with(text, vocab, &|x, _| Ok((x / dt).round() as usize))
}
