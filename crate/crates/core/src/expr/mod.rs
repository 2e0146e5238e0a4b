//! Exact polynomial arithmetic over commuting and anticommuting symbols.
//!
//! An [`Expr`] is a finite sum of rational multiples of [`Monomial`]s kept in
//! normal form: odd factors sorted by the global symbol order with the
//! permutation sign folded into the coefficient, no repeated odd factor, no
//! zero coefficient.

mod monomial;
mod parse;
mod symbol;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

pub use monomial::Monomial;
pub use parse::{parse, SymbolTable};
pub use symbol::{Family, Parity, Symbol};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at column {column}: {message}")]
    Syntax { column: usize, message: String },
    #[error("unknown symbol `{name}` at column {column}")]
    UnknownSymbol { name: String, column: usize },
    #[error("odd symbol `{name}` raised to a power other than 1 at column {column}")]
    OddPower { name: String, column: usize },
    #[error("parity mismatch: `{symbol}` bound to an expression of the wrong parity")]
    ParityMismatch { symbol: String },
}

/// Side of a graded derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Expr {
    terms: BTreeMap<Monomial, Rational>,
}

impl Expr {
    pub fn zero() -> Self {
        Expr::default()
    }

    pub fn one() -> Self {
        Expr::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        Expr::term(c, Monomial::one())
    }

    pub fn int(n: i64) -> Self {
        Expr::constant(int(n))
    }

    pub fn var(s: Symbol) -> Self {
        Expr::term(Rational::one(), Monomial::var(s))
    }

    pub fn term(c: Rational, m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Expr { terms }
    }

    /// Ordered product of symbols, normalized.
    pub fn product(symbols: &[Symbol]) -> Self {
        symbols
            .iter()
            .fold(Expr::one(), |acc, &s| &acc * &Expr::var(s))
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant_value(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.is_one().then(|| c.clone())
            }
            _ => None,
        }
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Expr {
        if c.is_zero() {
            return Expr::zero();
        }
        Expr {
            terms: self
                .terms
                .iter()
                .map(|(m, k)| (m.clone(), k * c))
                .collect(),
        }
    }

    /// Product keeping only terms of antighost number `<= max`.
    pub fn mul_truncated(&self, other: &Expr, max: Option<u32>) -> Expr {
        let mut out = Expr::zero();
        let right: Vec<_> = other
            .terms
            .iter()
            .map(|(m, c)| (m, c, m.antighost_number()))
            .collect();
        for (ma, ca) in &self.terms {
            let ga = ma.antighost_number();
            for &(mb, cb, gb) in &right {
                if max.is_some_and(|k| ga + gb > k) {
                    continue;
                }
                if let Some((neg, m)) = ma.mul(mb) {
                    let c = ca * cb;
                    out.add_term(m, if neg { -c } else { c });
                }
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Expr {
        self.pow_truncated(e, None)
    }

    pub fn pow_truncated(&self, e: u32, max: Option<u32>) -> Expr {
        let mut acc = Expr::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul_truncated(&base, max);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_truncated(&base, max);
            }
        }
        acc
    }

    /// Total degree; zero for the zero expression.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Degree counting only the given symbols.
    pub fn degree_in(&self, pick: impl Fn(Symbol) -> bool) -> u32 {
        self.terms
            .keys()
            .map(|m| m.symbols().filter(|(s, _)| pick(*s)).map(|(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    /// Parity when every term agrees, `None` for mixed expressions.
    /// The zero expression counts as even.
    pub fn parity(&self) -> Option<Parity> {
        let mut it = self.terms.keys().map(Monomial::parity);
        let first = it.next().unwrap_or(Parity::Even);
        it.all(|p| p == first).then_some(first)
    }

    pub fn has_parity(&self, p: Parity) -> bool {
        self.terms.keys().all(|m| m.parity() == p)
    }

    pub fn symbols(&self) -> BTreeSet<Symbol> {
        self.terms
            .keys()
            .flat_map(|m| m.symbols().map(|(s, _)| s))
            .collect()
    }

    pub fn contains(&self, pick: impl Fn(Symbol) -> bool) -> bool {
        self.terms.keys().any(|m| m.symbols().any(|(s, _)| pick(s)))
    }

    pub fn max_antighost(&self) -> u32 {
        self.terms
            .keys()
            .map(Monomial::antighost_number)
            .max()
            .unwrap_or(0)
    }

    pub fn truncate(&self, max: u32) -> Expr {
        self.filter(|m| m.antighost_number() <= max)
    }

    pub fn antighost_component(&self, order: u32) -> Expr {
        self.filter(|m| m.antighost_number() == order)
    }

    pub fn split_by_antighost(&self) -> BTreeMap<u32, Expr> {
        let mut out: BTreeMap<u32, Expr> = BTreeMap::new();
        for (m, c) in &self.terms {
            out.entry(m.antighost_number())
                .or_default()
                .terms
                .insert(m.clone(), c.clone());
        }
        out
    }

    pub fn filter(&self, keep: impl Fn(&Monomial) -> bool) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    /// Left or right derivative with respect to `s`.
    ///
    /// For an odd symbol the left derivative first anticommutes `s` to the
    /// front of each monomial, the right derivative to the back.
    pub fn partial(&self, s: Symbol, side: Side) -> Expr {
        let mut out = Expr::zero();
        if s.is_odd() {
            for (m, c) in &self.terms {
                if let Some((pos, rest)) = m.remove_odd(s) {
                    let swaps = match side {
                        Side::Left => pos,
                        Side::Right => m.odd().len() - 1 - pos,
                    };
                    out.add_term(rest, if swaps % 2 == 1 { -c.clone() } else { c.clone() });
                }
            }
        } else {
            for (m, c) in &self.terms {
                if let Some((e, rest)) = m.lower_even(s) {
                    out.add_term(rest, c * Rational::from_integer(BigInt::from(e)));
                }
            }
        }
        out
    }

    /// Ordinary derivative; only meaningful for even `s`, where both sides agree.
    pub fn diff(&self, s: Symbol) -> Expr {
        self.partial(s, Side::Left)
    }

    /// Simultaneous substitution followed by normalization.
    pub fn substitute(&self, bindings: &HashMap<Symbol, Expr>) -> Result<Expr, ExprError> {
        self.substitute_truncated(bindings, None)
    }

    /// Substitution that drops terms above antighost order `max` while expanding.
    pub fn substitute_truncated(
        &self,
        bindings: &HashMap<Symbol, Expr>,
        max: Option<u32>,
    ) -> Result<Expr, ExprError> {
        for (s, e) in bindings {
            if !e.has_parity(s.parity()) {
                return Err(ExprError::ParityMismatch {
                    symbol: s.to_string(),
                });
            }
        }
        let mut powers: HashMap<(Symbol, u32), Expr> = HashMap::new();
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            let mut acc = Expr::constant(c.clone());
            for (s, e) in m.symbols() {
                let factor = match bindings.get(&s) {
                    Some(b) => powers
                        .entry((s, e))
                        .or_insert_with(|| b.pow_truncated(e, max))
                        .clone(),
                    None => Expr::term(Rational::one(), Monomial::var(s)).pow(e),
                };
                acc = acc.mul_truncated(&factor, max);
                if acc.is_zero() {
                    break;
                }
            }
            out += acc;
        }
        Ok(out)
    }

    /// Substitution of plain symbol renamings or constants that cannot fail.
    pub fn set_zero(&self, pick: impl Fn(Symbol) -> bool) -> Expr {
        self.filter(|m| !m.symbols().any(|(s, _)| pick(s)))
    }

    /// Coefficients of the ghost/antifield content of each term.
    ///
    /// Keys are normalized monomials in undifferentiated ghosts and
    /// antifields; values are the remaining factors, arranged so that
    /// `self = sum value * key`.
    pub fn sector_coefficients(&self) -> BTreeMap<Monomial, Expr> {
        let mut out: BTreeMap<Monomial, Expr> = BTreeMap::new();
        for (m, c) in &self.terms {
            let (neg, rest, sel) = m.split(Symbol::is_sector);
            out.entry(sel)
                .or_default()
                .add_term(rest, if neg { -c.clone() } else { c.clone() });
        }
        out.retain(|_, e| !e.is_zero());
        out
    }

    /// The coefficient multiplying the ordered product `factors` of sector
    /// symbols, e.g. `[qs2, c1]` extracts `X` from `... + X*qs2*c1 + ...`.
    pub fn coefficient_of_product(&self, factors: &[Symbol]) -> Expr {
        debug_assert!(factors.iter().all(|s| s.is_sector()));
        let prod = Expr::product(factors);
        let Some((m, sign)) = prod.terms.iter().next() else {
            return Expr::zero();
        };
        let mut out = Expr::zero();
        for (mm, c) in &self.terms {
            let (neg, rest, sel) = mm.split(Symbol::is_sector);
            if &sel == m {
                // sign is +-1
                let c = if neg { -c.clone() } else { c.clone() } * sign;
                out.add_term(rest, c);
            }
        }
        out
    }

    /// Evaluates an expression free of odd symbols at a rational point.
    /// Symbols missing from `point` are left symbolic.
    pub fn evaluate(&self, point: &HashMap<Symbol, Rational>) -> Expr {
        let mut out = Expr::zero();
        for (m, c) in &self.terms {
            let mut coeff = c.clone();
            let mut even = Vec::new();
            for &(s, e) in m.even() {
                match point.get(&s) {
                    Some(v) => coeff *= num_traits::pow(v.clone(), e as usize),
                    None => even.push((s, e)),
                }
            }
            if let Some((neg, rest)) = Monomial::from_parts(&even, m.odd()) {
                out.add_term(rest, if neg { -coeff } else { coeff });
            }
        }
        out
    }

    /// Largest jet order of any symbol in the given family.
    pub fn max_jet(&self, family: Family) -> Option<u8> {
        self.terms
            .keys()
            .flat_map(|m| m.symbols())
            .filter(|(s, _)| s.family() == family)
            .map(|(s, _)| s.jet())
            .max()
    }
}

impl From<Symbol> for Expr {
    fn from(s: Symbol) -> Self {
        Expr::var(s)
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Self {
        Expr::int(n)
    }
}

impl AddAssign<Expr> for Expr {
    fn add_assign(&mut self, rhs: Expr) {
        for (m, c) in rhs.terms {
            self.add_term(m, c);
        }
    }
}

impl AddAssign<&Expr> for Expr {
    fn add_assign(&mut self, rhs: &Expr) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), c.clone());
        }
    }
}

impl SubAssign<&Expr> for Expr {
    fn sub_assign(&mut self, rhs: &Expr) {
        for (m, c) in &rhs.terms {
            self.add_term(m.clone(), -c.clone());
        }
    }
}

impl SubAssign<Expr> for Expr {
    fn sub_assign(&mut self, rhs: Expr) {
        for (m, c) in rhs.terms {
            self.add_term(m, -c);
        }
    }
}

impl Add for &Expr {
    type Output = Expr;
    fn add(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(mut self, rhs: Expr) -> Expr {
        self += rhs;
        self
    }
}

impl Sub for &Expr {
    type Output = Expr;
    fn sub(self, rhs: &Expr) -> Expr {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(mut self, rhs: Expr) -> Expr {
        self -= rhs;
        self
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), -c.clone()))
                .collect(),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(mut self) -> Expr {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Mul for &Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        self.mul_truncated(rhs, None)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        self.mul_truncated(&rhs, None)
    }
}

impl Add<&Expr> for Expr {
    type Output = Expr;
    fn add(mut self, rhs: &Expr) -> Expr {
        self += rhs;
        self
    }
}

impl Sub<&Expr> for Expr {
    type Output = Expr;
    fn sub(mut self, rhs: &Expr) -> Expr {
        self -= rhs;
        self
    }
}

impl Mul<&Expr> for Expr {
    type Output = Expr;
    fn mul(self, rhs: &Expr) -> Expr {
        self.mul_truncated(rhs, None)
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |acc, e| acc + e)
    }
}

/// Printer shared by `Display` and [`SymbolTable::print`].
pub(crate) fn write_expr(
    f: &mut impl fmt::Write,
    e: &Expr,
    name: &dyn Fn(Symbol) -> String,
) -> fmt::Result {
    if e.is_zero() {
        return f.write_str("0");
    }
    for (k, (m, c)) in e.terms.iter().enumerate() {
        let negative = c.is_negative();
        let abs = c.abs();
        match (k, negative) {
            (0, true) => f.write_str("-")?,
            (0, false) => {}
            (_, true) => f.write_str(" - ")?,
            (_, false) => f.write_str(" + ")?,
        }
        let mut first = true;
        if m.is_one() || !abs.is_one() {
            write!(f, "{abs}")?;
            first = false;
        }
        for (s, e) in m.symbols() {
            if !first {
                f.write_str("*")?;
            }
            first = false;
            f.write_str(&name(s))?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, &|s: Symbol| s.to_string())
    }
}
