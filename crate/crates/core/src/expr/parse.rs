//! Recursive-descent parser for the expression grammar
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := '-' factor | atom ('^' uint)*
//! atom   := int ('/' uint)? | ident | '(' expr ')'
//! ```

use num_bigint::BigInt;
use num_traits::Zero;

use super::{write_expr, Expr, ExprError, Family, Parity, Rational, Symbol};

/// Names and index ranges accepted by the parser.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    coords: u32,
    ghosts: u32,
    aux: Vec<(String, Symbol)>,
}

impl SymbolTable {
    /// `n` coordinates and `m` ghosts (one per constraint).
    pub fn new(n: u32, m: u32) -> Self {
        SymbolTable {
            coords: n,
            ghosts: m,
            aux: Vec::new(),
        }
    }

    pub fn coords(&self) -> u32 {
        self.coords
    }

    pub fn ghosts(&self) -> u32 {
        self.ghosts
    }

    /// Declares an auxiliary symbol and returns it.
    pub fn declare_aux(&mut self, name: &str, parity: Parity) -> Symbol {
        if let Some((_, s)) = self.aux.iter().find(|(n, _)| n == name) {
            return *s;
        }
        let id = self.aux.len() as u32 + 1;
        let s = Symbol::aux(id, parity);
        self.aux.push((name.to_string(), s));
        s
    }

    pub fn lookup(&self, name: &str) -> Option<Symbol> {
        if let Some((_, s)) = self.aux.iter().find(|(n, _)| n == name) {
            return Some(*s);
        }
        let s = Symbol::from_canonical(name)?;
        let bound = match s.family() {
            Family::Coord | Family::Momentum | Family::CoordStar => self.coords,
            Family::Ghost | Family::GhostStar => self.ghosts,
            Family::AuxEven | Family::AuxOdd => return None,
        };
        (s.index() <= bound).then_some(s)
    }

    pub fn name(&self, s: Symbol) -> String {
        match s.family() {
            Family::AuxEven | Family::AuxOdd => self
                .aux
                .iter()
                .find(|(_, a)| *a == s)
                .map(|(n, _)| n.clone())
                .unwrap_or_else(|| s.to_string()),
            _ => s.to_string(),
        }
    }

    /// Prints in the grammar accepted by [`parse`], using declared aux names.
    pub fn print(&self, e: &Expr) -> String {
        let mut out = String::new();
        write_expr(&mut out, e, &|s| self.name(s)).expect("writing to a String");
        out
    }

    pub fn parse(&self, text: &str) -> Result<Expr, ExprError> {
        parse(text, self)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let col = i + 1;
        match b {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => out.push((col, Tok::Plus)),
            b'-' => out.push((col, Tok::Minus)),
            b'*' => out.push((col, Tok::Star)),
            b'/' => out.push((col, Tok::Slash)),
            b'^' => out.push((col, Tok::Caret)),
            b'(' => out.push((col, Tok::LParen)),
            b')' => out.push((col, Tok::RParen)),
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let v: BigInt = text[start..i].parse().expect("digits");
                out.push((col, Tok::Int(v)));
                continue;
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((col, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    column: col,
                    message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_col: usize,
    table: &'a SymbolTable,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |(c, _)| *c)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            column: self.col(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            acc = &acc * &self.factor()?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            return Ok(-self.factor()?);
        }
        let col = self.col();
        let (mut base, odd_name) = self.atom()?;
        while let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let exp_col = self.col();
            let e = match self.peek() {
                Some(Tok::Int(v)) => v.clone(),
                _ => return self.syntax("expected a non-negative integer exponent"),
            };
            self.pos += 1;
            let e: u32 = match u32::try_from(e) {
                Ok(e) => e,
                Err(_) => {
                    return Err(ExprError::Syntax {
                        column: exp_col,
                        message: "exponent too large".into(),
                    })
                }
            };
            if let Some(name) = &odd_name {
                if e != 1 {
                    return Err(ExprError::OddPower {
                        name: name.clone(),
                        column: col,
                    });
                }
            }
            base = base.pow(e);
        }
        Ok(base)
    }

    /// Returns the atom and, for a bare odd identifier, its name.
    fn atom(&mut self) -> Result<(Expr, Option<String>), ExprError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Int(num)) => {
                self.pos += 1;
                if let Some(Tok::Slash) = self.peek() {
                    self.pos += 1;
                    let den = match self.peek() {
                        Some(Tok::Int(d)) => d.clone(),
                        _ => return self.syntax("expected a denominator"),
                    };
                    if den.is_zero() {
                        return self.syntax("zero denominator");
                    }
                    self.pos += 1;
                    Ok((Expr::constant(Rational::new(num, den)), None))
                } else {
                    Ok((Expr::constant(Rational::from_integer(num)), None))
                }
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let s = self
                    .table
                    .lookup(&name)
                    .ok_or_else(|| ExprError::UnknownSymbol {
                        name: name.clone(),
                        column: col,
                    })?;
                Ok((Expr::var(s), s.is_odd().then_some(name)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok((e, None))
                    }
                    _ => self.syntax("expected `)`"),
                }
            }
            Some(t) => self.syntax(format!("unexpected token {t:?}")),
            None => self.syntax("unexpected end of input"),
        }
    }
}

/// Parses `text` into normal form. Column numbers in errors are 1-based.
pub fn parse(text: &str, table: &SymbolTable) -> Result<Expr, ExprError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.len() + 1,
        table,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.syntax("trailing input");
    }
    Ok(e)
}
