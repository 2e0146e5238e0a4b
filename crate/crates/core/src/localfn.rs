//! Time-local variational calculus on jet variables.
//!
//! Lagrangians here are polynomials in coordinates, ghosts and antifields
//! together with their time derivatives. The total derivative is an even
//! derivation; the Euler operator annihilates exactly the total derivatives,
//! which gives a decision procedure for "equal up to a boundary term".

use thiserror::Error;

use crate::expr::{Expr, Family, Side, Symbol};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalError {
    #[error("symbol `{0}` is not a registered dynamical variable")]
    UnregisteredSymbol(String),
    #[error("jet order {found} of `{symbol}` exceeds the configured maximum {max}")]
    JetOrderExceeded { symbol: String, found: u8, max: u8 },
}

/// The dynamical families of a model and the admissible jet order of inputs.
#[derive(Clone, Debug)]
pub struct JetContext {
    coords: u32,
    ghosts: u32,
    max_order: u8,
}

impl JetContext {
    pub const DEFAULT_MAX_ORDER: u8 = 2;

    pub fn new(coords: u32, ghosts: u32) -> Self {
        JetContext {
            coords,
            ghosts,
            max_order: Self::DEFAULT_MAX_ORDER,
        }
    }

    pub fn with_max_order(mut self, max_order: u8) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn max_order(&self) -> u8 {
        self.max_order
    }

    fn check_registered(&self, s: Symbol) -> Result<(), LocalError> {
        let bound = match s.family() {
            Family::Coord | Family::CoordStar => self.coords,
            Family::Ghost | Family::GhostStar => self.ghosts,
            _ => 0,
        };
        if s.index() == 0 || s.index() > bound {
            return Err(LocalError::UnregisteredSymbol(s.to_string()));
        }
        Ok(())
    }

    fn check_input(&self, e: &Expr) -> Result<(), LocalError> {
        for s in e.symbols() {
            self.check_registered(s)?;
            if s.jet() > self.max_order {
                return Err(LocalError::JetOrderExceeded {
                    symbol: s.to_string(),
                    found: s.jet(),
                    max: self.max_order,
                });
            }
        }
        Ok(())
    }

    /// `d/dt` acting as an even derivation; derivative symbols are created
    /// on demand, so the result may exceed the input jet order by one.
    pub fn total_derivative(&self, e: &Expr) -> Result<Expr, LocalError> {
        let mut out = Expr::zero();
        for s in e.symbols() {
            self.check_registered(s)?;
            let ds = s.derivative().expect("registered symbols are dynamical");
            out += &Expr::var(ds) * &e.partial(s, Side::Left);
        }
        Ok(out)
    }

    fn total_derivative_n(&self, e: &Expr, n: u8) -> Result<Expr, LocalError> {
        let mut out = e.clone();
        for _ in 0..n {
            out = self.total_derivative(&out)?;
        }
        Ok(out)
    }

    /// Euler-Lagrange derivative `sum_r (-d/dt)^r d/d(s^(r))` with respect to
    /// the undifferentiated variable `base`, taken from the given side.
    pub fn euler_derivative(&self, e: &Expr, base: Symbol, side: Side) -> Result<Expr, LocalError> {
        self.check_input(e)?;
        self.check_registered(base)?;
        let base = base.with_jet(0);
        let top = e
            .symbols()
            .into_iter()
            .filter(|s| s.with_jet(0) == base)
            .map(Symbol::jet)
            .max();
        let Some(top) = top else {
            return Ok(Expr::zero());
        };
        let mut out = Expr::zero();
        for r in 0..=top {
            let d = e.partial(base.with_jet(r), side);
            if d.is_zero() {
                continue;
            }
            let term = self.total_derivative_n(&d, r)?;
            if r % 2 == 0 {
                out += term;
            } else {
                out -= term;
            }
        }
        Ok(out)
    }

    /// Nonvanishing Euler derivatives, keyed by variable.
    pub fn euler_residuals(&self, e: &Expr) -> Result<Vec<(Symbol, Expr)>, LocalError> {
        self.check_input(e)?;
        let mut bases: Vec<Symbol> = e.symbols().into_iter().map(|s| s.with_jet(0)).collect();
        bases.dedup();
        bases.sort();
        bases.dedup();
        let mut out = Vec::new();
        for b in bases {
            let r = self.euler_derivative(e, b, Side::Left)?;
            if !r.is_zero() {
                out.push((b, r));
            }
        }
        Ok(out)
    }

    /// True iff every Euler derivative of `e` vanishes.
    pub fn is_total_derivative(&self, e: &Expr) -> Result<bool, LocalError> {
        Ok(self.euler_residuals(e)?.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::SymbolTable;

    fn setup() -> (JetContext, SymbolTable) {
        (JetContext::new(3, 2), SymbolTable::new(3, 2))
    }

    #[test]
    fn total_derivative_examples() {
        let (ctx, t) = setup();
        let e = |s: &str| t.parse(s).unwrap();
        assert_eq!(ctx.total_derivative(&e("q1^2")).unwrap(), e("2*q1*qd1"));
        assert_eq!(
            ctx.total_derivative(&e("c1*c2")).unwrap(),
            e("cd1*c2 + c1*cd2")
        );
        assert_eq!(
            ctx.total_derivative(&e("q1*qd1")).unwrap(),
            e("qd1^2 + q1*qdd1")
        );
    }

    #[test]
    fn total_derivative_rejects_momenta() {
        let (ctx, t) = setup();
        assert!(matches!(
            ctx.total_derivative(&t.parse("p1").unwrap()),
            Err(LocalError::UnregisteredSymbol(_))
        ));
    }

    #[test]
    fn euler_examples() {
        let (ctx, t) = setup();
        let e = |s: &str| t.parse(s).unwrap();
        assert_eq!(
            ctx.euler_derivative(&e("1/2*qd1^2"), Symbol::q(1), Side::Left)
                .unwrap(),
            e("-qdd1")
        );
        let td = ctx.total_derivative(&e("q1^3")).unwrap();
        assert!(ctx
            .euler_derivative(&td, Symbol::q(1), Side::Left)
            .unwrap()
            .is_zero());
        // dL/dq2 for L = 1/2 (qd1 - q2)^2, no velocity of q2 present.
        assert_eq!(
            ctx.euler_derivative(&e("1/2*(qd1 - q2)^2"), Symbol::q(2), Side::Left)
                .unwrap(),
            e("-(qd1 - q2)")
        );
    }

    #[test]
    fn euler_rejects_high_jets() {
        let (ctx, _) = setup();
        let e = Expr::var(Symbol::q(1).with_jet(3));
        assert!(matches!(
            ctx.euler_derivative(&e, Symbol::q(1), Side::Left),
            Err(LocalError::JetOrderExceeded { found: 3, .. })
        ));
    }

    #[test]
    fn total_derivative_detection() {
        let (ctx, t) = setup();
        let e = |s: &str| t.parse(s).unwrap();
        assert!(ctx
            .is_total_derivative(&ctx.total_derivative(&e("q1*qd1")).unwrap())
            .unwrap());
        assert!(!ctx.is_total_derivative(&e("1/2*qd1^2")).unwrap());
        assert!(ctx.is_total_derivative(&e("qd1*c1 + q1*cd1")).unwrap());
    }

    #[test]
    fn odd_euler_sides() {
        let (ctx, t) = setup();
        let e = t.parse("qs1*c1").unwrap();
        let l = ctx.euler_derivative(&e, Symbol::ghost(1), Side::Left).unwrap();
        let r = ctx.euler_derivative(&e, Symbol::ghost(1), Side::Right).unwrap();
        assert_eq!(l, -Expr::var(Symbol::qs(1)));
        assert_eq!(r, Expr::var(Symbol::qs(1)));
    }
}
