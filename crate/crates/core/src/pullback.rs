//! The velocity-space pullback and its antifield extension.
//!
//! Extended momenta and multipliers are stored both as full expressions in
//! `(q, qd, ghosts, antifields)` and as coefficient tables read off those
//! expressions with the contraction conventions
//!
//! ```text
//! P_i = p_i + qs_k p1[i][k][a] c_a + 1/2 cs_d p2[i][d][a][b] c_b c_a
//!       - 1/4 qs_k qs_l pqq[i][l][k][a][b] c_b c_a
//!       - 1/2 cs_d qs_k p3[i][k][d][a][b][g] c_g c_b c_a
//!       + 1/12 qs_m qs_l qs_k pqqq[i][k][l][m][a][b][g] c_g c_b c_a
//! ```
//!
//! and the same pattern for the multipliers.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::bv::extended_hamiltonian;
use crate::constraint_algebra::{Model, StructureData, SuppliedPullback};
use crate::expr::{rat, Expr, Family, Monomial, Rational, Symbol, SymbolTable};
use crate::linsolve::solve_linear;
use crate::table::Table;

/// Deepest antighost order with explicit expansion formulas.
pub const MAX_ORDER: u32 = 3;
pub(crate) const DEFAULT_SOLVE_DEGREE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PullbackError {
    #[error("pullback inconsistent: {relation} fails at {index}; residual {residual}")]
    PullbackInconsistent {
        relation: &'static str,
        index: String,
        residual: String,
    },
    #[error("cannot auto-solve the pullback: {0}")]
    AutoSolveUnsupported(String),
    #[error("recursion inconsistent at antighost order {order}: {relation} leaves residual {residual}")]
    RecursionInconsistent {
        order: u32,
        relation: &'static str,
        residual: String,
    },
    #[error("antighost order {requested} unsupported (maximum {max})")]
    OrderUnsupported { requested: u32, max: u32 },
    #[error("antighost order {requested} exceeds the expansion order {available}")]
    OrderExceeded { requested: u32, available: u32 },
}

pub const CONSTRAINT_RELATION: &str = "constraint vanishing";
pub const VELOCITY_RELATION: &str = "velocity relation";
pub const MOMENTUM_RELATION: &str = "momentum relation";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PullbackSource {
    FromLagrangian,
    Supplied,
    SolvedLinear,
}

impl PullbackSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PullbackSource::FromLagrangian => "from-L0",
            PullbackSource::Supplied => "supplied",
            PullbackSource::SolvedLinear => "solved-linear",
        }
    }
}

/// Substitution `p_i -> values[i]`.
pub fn momentum_bindings(values: &[Expr]) -> HashMap<Symbol, Expr> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| (Symbol::p(i as u32 + 1), v.clone()))
        .collect()
}

/// `FL* e` for `e` in `(q, p)`.
pub fn fl_star(e: &Expr, flp: &[Expr]) -> Expr {
    e.substitute(&momentum_bindings(flp))
        .expect("momentum images are even")
}

fn velocity(i: usize) -> Symbol {
    Symbol::qd(i as u32 + 1)
}

fn momentum(i: usize) -> Symbol {
    Symbol::p(i as u32 + 1)
}

/// Zeroth-order pullback data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PullbackZero {
    pub flp: Vec<Expr>,
    pub lambda: Vec<Expr>,
    /// `W[j][k] = d flp_j / d qd_k`
    pub w: Table,
    /// `R[i][mu] = FL* dG_mu/dp_i`
    pub r: Table,
    pub source: PullbackSource,
}

fn generator_table(g: &[Expr], flp: &[Expr]) -> Table {
    let n = flp.len();
    Table::from_fn(&[n, g.len()], |ix| fl_star(&g[ix[1]].diff(momentum(ix[0])), flp))
}

fn inconsistent(relation: &'static str, index: String, residual: &Expr, t: &SymbolTable) -> PullbackError {
    PullbackError::PullbackInconsistent {
        relation,
        index,
        residual: t.print(residual),
    }
}

/// Builds `FL* p`, the multipliers and `W` from `L0`, from supplied data, or
/// by solving the linear system available when `H0` is quadratic and every
/// constraint is linear in the momenta. All invariants are then verified.
pub fn build_pullback_zero(model: &Model) -> Result<PullbackZero, PullbackError> {
    let n = model.n() as usize;
    let t = model.symbols();
    let degree = model.degree_bound().unwrap_or(DEFAULT_SOLVE_DEGREE);
    let (flp, lambda, source) = if let Some(SuppliedPullback { flp, lambda }) = model.supplied_pullback() {
        (flp.clone(), lambda.clone(), PullbackSource::Supplied)
    } else if let Some(l0) = model.l0() {
        let flp: Vec<Expr> = (0..n).map(|i| l0.diff(velocity(i))).collect();
        check_constraints(model, &flp)?;
        let lambda = solve_multipliers(model, &flp, degree)?;
        (flp, lambda, PullbackSource::FromLagrangian)
    } else {
        let (flp, lambda) = auto_solve(model, degree)?;
        (flp, lambda, PullbackSource::SolvedLinear)
    };
    let w = Table::from_fn(&[n, n], |ix| flp[ix[0]].diff(velocity(ix[1])));
    let r = generator_table(model.g(), &flp);
    let pz = PullbackZero {
        flp,
        lambda,
        w,
        r,
        source,
    };
    check_constraints(model, &pz.flp)?;
    for (i, res) in velocity_residuals(model, &pz.flp, &pz.lambda).iter().enumerate() {
        if !res.is_zero() {
            return Err(inconsistent(VELOCITY_RELATION, format!("i={}", i + 1), res, t));
        }
    }
    for j in 0..n {
        for k in j + 1..n {
            let d = pz.w.get(&[j, k]) - pz.w.get(&[k, j]);
            if !d.is_zero() {
                return Err(inconsistent(
                    "Hessian symmetry",
                    format!("W[{}][{}]", j + 1, k + 1),
                    &d,
                    t,
                ));
            }
        }
    }
    let wr = w_times_r(&pz);
    if let Some((ix, e)) = wr.nonzero().first() {
        return Err(inconsistent(
            "W R = 0",
            format!("j={}, mu={}", ix[0] + 1, ix[1] + 1),
            e,
            t,
        ));
    }
    Ok(pz)
}

fn check_constraints(model: &Model, flp: &[Expr]) -> Result<(), PullbackError> {
    for (mu, g) in model.g().iter().enumerate() {
        let r = fl_star(g, flp);
        if !r.is_zero() {
            return Err(inconsistent(
                CONSTRAINT_RELATION,
                format!("mu={}", mu + 1),
                &r,
                model.symbols(),
            ));
        }
    }
    Ok(())
}

/// `qd_i - FL* dH0/dp_i - lambda^mu FL* dG_mu/dp_i` for each `i`.
pub fn velocity_residuals(model: &Model, flp: &[Expr], lambda: &[Expr]) -> Vec<Expr> {
    (0..model.n() as usize)
        .map(|i| {
            let p = momentum(i);
            let mut r = Expr::var(velocity(i)) - fl_star(&model.h0().diff(p), flp);
            for (g, l) in model.g().iter().zip(lambda) {
                r -= l * &fl_star(&g.diff(p), flp);
            }
            r
        })
        .collect()
}

fn solve_multipliers(model: &Model, flp: &[Expr], degree: u32) -> Result<Vec<Expr>, PullbackError> {
    let n = model.n() as usize;
    let r = generator_table(model.g(), flp);
    let matrix: Vec<Vec<Expr>> = (0..n)
        .map(|i| (0..model.m() as usize).map(|mu| r.get(&[i, mu]).clone()).collect())
        .collect();
    let rhs: Vec<Expr> = (0..n)
        .map(|i| Expr::var(velocity(i)) - fl_star(&model.h0().diff(momentum(i)), flp))
        .collect();
    solve_linear(&matrix, &rhs, degree).map_err(|u| {
        let i = u.row.unwrap_or(0);
        PullbackError::PullbackInconsistent {
            relation: VELOCITY_RELATION,
            index: u.row.map_or("no polynomial multipliers".into(), |_| format!("i={}", i + 1)),
            residual: model.symbols().print(&rhs[i]),
        }
    })
}

fn auto_solve(model: &Model, degree: u32) -> Result<(Vec<Expr>, Vec<Expr>), PullbackError> {
    let (n, m) = (model.n() as usize, model.m() as usize);
    let is_p = |s: Symbol| s.family() == Family::Momentum;
    if model.h0().degree_in(is_p) > 2 {
        return Err(PullbackError::AutoSolveUnsupported(
            "H0 is not quadratic in the momenta".into(),
        ));
    }
    if let Some(mu) = model.g().iter().position(|g| g.degree_in(is_p) > 1) {
        return Err(PullbackError::AutoSolveUnsupported(format!(
            "G{} is not linear in the momenta",
            mu + 1
        )));
    }
    let dh: Vec<Expr> = (0..n).map(|i| model.h0().diff(momentum(i))).collect();
    let mut matrix = Vec::with_capacity(n + m);
    let mut rhs = Vec::with_capacity(n + m);
    for (i, dhi) in dh.iter().enumerate() {
        let mut row: Vec<Expr> = (0..n).map(|j| dhi.diff(momentum(j))).collect();
        row.extend(model.g().iter().map(|g| g.diff(momentum(i))));
        matrix.push(row);
        rhs.push(Expr::var(velocity(i)) - dhi.set_zero(is_p));
    }
    for g in model.g() {
        let mut row: Vec<Expr> = (0..n).map(|j| g.diff(momentum(j))).collect();
        row.extend(std::iter::repeat_with(Expr::zero).take(m));
        matrix.push(row);
        rhs.push(-g.set_zero(is_p));
    }
    let x = solve_linear(&matrix, &rhs, degree).map_err(|_| {
        PullbackError::AutoSolveUnsupported("the linear pullback system has no polynomial solution".into())
    })?;
    let lambda = x[n..].to_vec();
    let mut flp = x;
    flp.truncate(n);
    Ok((flp, lambda))
}

/// `W[j][k] R[k][mu]`, which vanishes for consistent data.
pub fn w_times_r(pz: &PullbackZero) -> Table {
    let n = pz.flp.len();
    let m = pz.lambda.len();
    Table::from_fn(&[n, m], |ix| {
        (0..n)
            .map(|k| pz.w.get(&[ix[0], k]) * pz.r.get(&[k, ix[1]]))
            .sum()
    })
}

/// Coefficient tables of one family of expansions (momenta or multipliers),
/// with the leading index selecting the family member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorTables {
    /// `[lead][k][a]`, the `qs_k c_a` coefficient
    pub qs_c: Table,
    /// `[lead][d][a][b]`
    pub cs_cc: Table,
    /// `[lead][l][k][a][b]`
    pub qs_qs_cc: Table,
    /// `[lead][k][d][a][b][g]`
    pub cs_qs_ccc: Table,
    /// `[lead][k][l][m][a][b][g]`
    pub qs_qs_qs_ccc: Table,
}

pub(crate) fn read_sector(map: &BTreeMap<Monomial, Expr>, evens: &[Symbol], odds: &[Symbol]) -> Expr {
    let even: Vec<(Symbol, u32)> = evens.iter().map(|&s| (s, 1)).collect();
    let Some((neg, key)) = Monomial::from_parts(&even, odds) else {
        return Expr::zero();
    };
    match map.get(&key) {
        Some(e) if neg => -e.clone(),
        Some(e) => e.clone(),
        None => Expr::zero(),
    }
}

fn qs(k: usize) -> Symbol {
    Symbol::qs(k as u32 + 1)
}
fn cs(d: usize) -> Symbol {
    Symbol::cs(d as u32 + 1)
}
fn gh(a: usize) -> Symbol {
    Symbol::ghost(a as u32 + 1)
}

impl SectorTables {
    /// Reads the tables off `exprs` (one expression per leading index).
    pub fn read(exprs: &[Expr], n: usize, m: usize) -> SectorTables {
        let lead = exprs.len();
        let maps: Vec<_> = exprs.iter().map(Expr::sector_coefficients).collect();
        let third = rat(1, 3);
        SectorTables {
            qs_c: Table::from_fn(&[lead, n, m], |ix| {
                read_sector(&maps[ix[0]], &[], &[qs(ix[1]), gh(ix[2])])
            }),
            cs_cc: Table::from_fn(&[lead, m, m, m], |ix| {
                read_sector(&maps[ix[0]], &[cs(ix[1])], &[gh(ix[3]), gh(ix[2])])
            }),
            qs_qs_cc: Table::from_fn(&[lead, n, n, m, m], |ix| {
                let [_, l, k, a, b] = ix else { unreachable!() };
                -read_sector(&maps[ix[0]], &[], &[qs(*k), qs(*l), gh(*b), gh(*a)])
            }),
            cs_qs_ccc: Table::from_fn(&[lead, n, m, m, m, m], |ix| {
                let [_, k, d, a, b, g] = ix else { unreachable!() };
                read_sector(&maps[ix[0]], &[cs(*d)], &[qs(*k), gh(*g), gh(*b), gh(*a)])
                    .scale(&-third.clone())
            }),
            qs_qs_qs_ccc: Table::from_fn(&[lead, n, n, n, m, m, m], |ix| {
                let [_, k, l, mm, a, b, g] = ix else { unreachable!() };
                read_sector(
                    &maps[ix[0]],
                    &[],
                    &[qs(*mm), qs(*l), qs(*k), gh(*g), gh(*b), gh(*a)],
                )
                .scale(&third)
            }),
        }
    }
}

/// The antifield extension of the pullback through a fixed antighost order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PullbackExpansion {
    pub order: u32,
    pub zero: PullbackZero,
    /// `FL* P_i`
    pub momenta: Vec<Expr>,
    /// `Lambda^mu`
    pub multipliers: Vec<Expr>,
    pub p: SectorTables,
    pub lambda: SectorTables,
}

impl PullbackExpansion {
    fn from_parts(order: u32, zero: PullbackZero, momenta: Vec<Expr>, multipliers: Vec<Expr>) -> Self {
        let (n, m) = (momenta.len(), multipliers.len());
        PullbackExpansion {
            order,
            p: SectorTables::read(&momenta, n, m),
            lambda: SectorTables::read(&multipliers, n, m),
            zero,
            momenta,
            multipliers,
        }
    }

    pub fn n(&self) -> usize {
        self.momenta.len()
    }

    pub fn m(&self) -> usize {
        self.multipliers.len()
    }
}

/// The first- and second-order p-tensors from their closed formulas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedTensors {
    /// Same layout as [`SectorTables::qs_c`].
    pub qs_c: Table,
    /// Same layout as [`SectorTables::qs_qs_cc`].
    pub qs_qs_cc: Table,
}

/// Closed formulas in terms of `W`, its velocity derivative and momentum
/// derivatives of the constraints.
pub fn p_tensors_closed(g: &[Expr], pz: &PullbackZero) -> ClosedTensors {
    let n = pz.flp.len();
    let m = g.len();
    let flp = &pz.flp;
    let d2: Vec<Table> = g
        .iter()
        .map(|gm| Table::from_fn(&[n, n], |ix| gm.diff(momentum(ix[0])).diff(momentum(ix[1]))))
        .collect();
    let d2_fl: Vec<Table> = d2.iter().map(|t| t.map(|e| fl_star(e, flp))).collect();
    let d3_fl: Vec<Table> = d2
        .iter()
        .map(|t| {
            Table::from_fn(&[n, n, n], |ix| {
                fl_star(&t.get(&[ix[0], ix[1]]).diff(momentum(ix[2])), flp)
            })
        })
        .collect();
    let w = &pz.w;
    let dw = Table::from_fn(&[n, n, n], |ix| w.get(&[ix[0], ix[1]]).diff(velocity(ix[2])));

    let qs_c = Table::from_fn(&[n, n, m], |ix| {
        let [j, i, mu] = ix else { unreachable!() };
        (0..n)
            .map(|k| w.get(&[*j, k]) * d2_fl[*mu].get(&[k, *i]))
            .sum()
    });

    let qs_qs_cc = Table::from_fn(&[n, n, n, m, m], |ix| {
        let [k, i, j, mu, nu] = ix else { unreachable!() };
        let (k, i, j, mu, nu) = (*k, *i, *j, *mu, *nu);
        if mu == nu {
            return Expr::zero();
        }
        let mut out = Expr::zero();
        for l in 0..n {
            for mm in 0..n {
                let a = d2_fl[mu].get(&[i, l]) * d2_fl[nu].get(&[mm, j]);
                let b = d2_fl[nu].get(&[i, l]) * d2_fl[mu].get(&[mm, j]);
                let anti = a - b;
                let dwk = dw.get(&[l, mm, k]);
                if !dwk.is_zero() && !anti.is_zero() {
                    out += dwk * &anti;
                }
                let wlm = w.get(&[l, mm]);
                if wlm.is_zero() {
                    continue;
                }
                for nn in 0..n {
                    let wkn = w.get(&[k, nn]);
                    if wkn.is_zero() {
                        continue;
                    }
                    // d/dp_n of the antisymmetrized product, then FL*.
                    let deriv = d3_fl[mu].get(&[i, l, nn]) * d2_fl[nu].get(&[mm, j])
                        + d2_fl[mu].get(&[i, l]) * d3_fl[nu].get(&[mm, j, nn])
                        - d3_fl[nu].get(&[i, l, nn]) * d2_fl[mu].get(&[mm, j])
                        - d2_fl[nu].get(&[i, l]) * d3_fl[mu].get(&[mm, j, nn]);
                    if !deriv.is_zero() {
                        out += &(wlm * wkn) * &deriv;
                    }
                }
            }
        }
        out
    });
    ClosedTensors { qs_c, qs_qs_cc }
}

/// Determines momenta and multipliers order by order.
///
/// At order `r` the new momentum coefficients follow from the velocity
/// derivative of the order-`r` part of `L - lambda^mu G_mu(P)` evaluated with
/// the order-`r` unknowns set to zero; the unknowns drop out of that
/// combination by the order-zero velocity relation. The new multiplier
/// coefficients then solve the order-`r` velocity relation, one sector
/// monomial at a time. Every relation is re-expanded afterwards.
pub fn recursive_expand(
    model: &Model,
    structure: &StructureData,
    pz: &PullbackZero,
    order: u32,
) -> Result<PullbackExpansion, PullbackError> {
    if order > MAX_ORDER {
        return Err(PullbackError::OrderUnsupported {
            requested: order,
            max: MAX_ORDER,
        });
    }
    let n = model.n() as usize;
    let m = model.m() as usize;
    let t = model.symbols();
    let degree = model.degree_bound().unwrap_or(DEFAULT_SOLVE_DEGREE);
    let h = extended_hamiltonian(model.h0(), model.g(), structure.c());
    let dh: Vec<Expr> = (0..n).map(|i| h.diff(momentum(i))).collect();
    let dg: Vec<Vec<Expr>> = model
        .g()
        .iter()
        .map(|g| (0..n).map(|i| g.diff(momentum(i))).collect())
        .collect();
    let kinetic = |p: &[Expr]| -> Expr {
        p.iter()
            .enumerate()
            .map(|(i, pi)| &Expr::var(velocity(i)) * pi)
            .sum()
    };
    let matrix: Vec<Vec<Expr>> = (0..n)
        .map(|i| (0..m).map(|mu| pz.r.get(&[i, mu]).clone()).collect())
        .collect();

    let mut momenta = pz.flp.clone();
    let mut multipliers = pz.lambda.clone();
    for r in 1..=order {
        let lagrangian_r = |p: &[Expr]| -> Expr {
            let b = momentum_bindings(p);
            let hs = h.substitute_truncated(&b, Some(r)).expect("even momenta");
            (kinetic(p) - hs).antighost_component(r)
        };
        let constraints_r = |p: &[Expr]| -> Vec<Expr> {
            let b = momentum_bindings(p);
            model
                .g()
                .iter()
                .map(|g| {
                    g.substitute_truncated(&b, Some(r))
                        .expect("even momenta")
                        .antighost_component(r)
                })
                .collect()
        };

        let mut e = lagrangian_r(&momenta);
        for (l, gam) in pz.lambda.iter().zip(constraints_r(&momenta)) {
            e -= l * &gam;
        }
        let step: Vec<Expr> = (0..n).map(|i| e.diff(velocity(i))).collect();
        for (p, s) in momenta.iter_mut().zip(&step) {
            *p += s;
        }

        for (mu, gam) in constraints_r(&momenta).iter().enumerate() {
            if !gam.is_zero() {
                return Err(recursion(r, CONSTRAINT_RELATION, gam, t, format!("mu={}", mu + 1)));
            }
        }
        let l_r = lagrangian_r(&momenta);
        for (i, s) in step.iter().enumerate() {
            let d = l_r.diff(velocity(i)) - s;
            if !d.is_zero() {
                return Err(recursion(r, MOMENTUM_RELATION, &d, t, format!("i={}", i + 1)));
            }
        }

        let velocity_r = |p: &[Expr], lam: &[Expr]| -> Vec<Expr> {
            let b = momentum_bindings(p);
            (0..n)
                .map(|i| {
                    let mut res = dh[i].substitute_truncated(&b, Some(r)).expect("even momenta");
                    for (mu, l) in lam.iter().enumerate() {
                        let d = dg[mu][i].substitute_truncated(&b, Some(r)).expect("even momenta");
                        res += l.mul_truncated(&d, Some(r));
                    }
                    res.antighost_component(r)
                })
                .collect()
        };
        let res = velocity_r(&momenta, &multipliers);
        let per_row: Vec<BTreeMap<Monomial, Expr>> = res.iter().map(Expr::sector_coefficients).collect();
        let sectors: BTreeSet<Monomial> = per_row.iter().flat_map(|m| m.keys().cloned()).collect();
        for sigma in sectors {
            let rhs: Vec<Expr> = per_row
                .iter()
                .map(|row| row.get(&sigma).map_or_else(Expr::zero, |e| -e.clone()))
                .collect();
            let v = solve_linear(&matrix, &rhs, degree).map_err(|u| {
                let i = u.row.unwrap_or(0);
                recursion(r, VELOCITY_RELATION, &rhs[i], t, format!("i={}", i + 1))
            })?;
            let key = Expr::term(Rational::from_integer(1.into()), sigma);
            for (lam, vm) in multipliers.iter_mut().zip(v) {
                *lam += &vm * &key;
            }
        }
        for (i, res) in velocity_r(&momenta, &multipliers).iter().enumerate() {
            if !res.is_zero() {
                return Err(recursion(r, VELOCITY_RELATION, res, t, format!("i={}", i + 1)));
            }
        }
    }
    Ok(PullbackExpansion::from_parts(order, pz.clone(), momenta, multipliers))
}

fn recursion(order: u32, relation: &'static str, residual: &Expr, t: &SymbolTable, at: String) -> PullbackError {
    PullbackError::RecursionInconsistent {
        order,
        relation,
        residual: format!("{} ({at})", t.print(residual)),
    }
}

/// Reference route: `K(q, FL* P)` by direct substitution, truncated.
pub fn pullback_substituted(k: &Expr, exp: &PullbackExpansion, order: Option<u32>) -> Result<Expr, PullbackError> {
    let order = check_order(exp, order)?;
    Ok(k.substitute_truncated(&momentum_bindings(&exp.momenta), Some(order))
        .expect("even momenta")
        .truncate(order))
}

fn check_order(exp: &PullbackExpansion, order: Option<u32>) -> Result<u32, PullbackError> {
    let order = order.unwrap_or(exp.order);
    if order > exp.order {
        return Err(PullbackError::OrderExceeded {
            requested: order,
            available: exp.order,
        });
    }
    Ok(order)
}

/// `FL* K` expanded term by term from the p-tensor tables, through the
/// requested antighost order (default: the expansion order).
pub fn pullback_k(k: &Expr, exp: &PullbackExpansion, order: Option<u32>) -> Result<Expr, PullbackError> {
    let order = check_order(exp, order)?;
    let n = exp.n();
    let m = exp.m();
    let flp = &exp.zero.flp;
    let p = &exp.p;
    let mut out = fl_star(k, flp);
    if order == 0 {
        return Ok(out);
    }
    let k1: Vec<Expr> = (0..n).map(|i| k.diff(momentum(i))).collect();
    let k2: Vec<Vec<Expr>> = k1
        .iter()
        .map(|ki| (0..n).map(|j| ki.diff(momentum(j))).collect())
        .collect();
    let k1f: Vec<Expr> = k1.iter().map(|e| fl_star(e, flp)).collect();
    let k2f: Vec<Vec<Expr>> = k2
        .iter()
        .map(|row| row.iter().map(|e| fl_star(e, flp)).collect())
        .collect();
    let nz1: Vec<usize> = (0..n).filter(|&i| !k1f[i].is_zero()).collect();
    let nz2: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !k2f[i][j].is_zero())
        .collect();
    let contract1 = |t: &Table, rest: &[usize]| -> Expr {
        nz1.iter()
            .map(|&i| {
                let mut ix = vec![i];
                ix.extend_from_slice(rest);
                &k1f[i] * t.get(&ix)
            })
            .sum()
    };
    let p1 = |i: usize, k: usize, a: usize| p.qs_c.get(&[i, k, a]);

    for kk in 0..n {
        for a in 0..m {
            let c = contract1(&p.qs_c, &[kk, a]);
            if !c.is_zero() {
                out += &c * &Expr::product(&[qs(kk), gh(a)]);
            }
        }
    }
    if order >= 2 {
        let half = rat(1, 2);
        let quarter = rat(-1, 4);
        for d in 0..m {
            for a in 0..m {
                for b in 0..m {
                    if a == b {
                        continue;
                    }
                    let c = contract1(&p.cs_cc, &[d, a, b]).scale(&half);
                    if !c.is_zero() {
                        out += &c * &Expr::product(&[cs(d), gh(b), gh(a)]);
                    }
                }
            }
        }
        for kk in 0..n {
            for l in 0..n {
                if kk == l {
                    continue;
                }
                for a in 0..m {
                    for b in 0..m {
                        if a == b {
                            continue;
                        }
                        let mut c = contract1(&p.qs_qs_cc, &[l, kk, a, b]);
                        for &(i, j) in &nz2 {
                            let pp = p1(i, kk, a) * p1(j, l, b) - p1(i, kk, b) * p1(j, l, a);
                            if !pp.is_zero() {
                                c -= &k2f[i][j] * &pp;
                            }
                        }
                        if !c.is_zero() {
                            out += &c.scale(&quarter) * &Expr::product(&[qs(kk), qs(l), gh(b), gh(a)]);
                        }
                    }
                }
            }
        }
    }
    if order >= 3 {
        let k3f: Vec<(usize, usize, usize, Expr)> = nz_third(&k2, flp, n);
        let p2 = |j: usize, d: usize, a: usize, b: usize| p.cs_cc.get(&[j, d, a, b]);
        let pq = |j: usize, l: usize, mm: usize, a: usize, b: usize| p.qs_qs_cc.get(&[j, l, mm, a, b]);
        let triples: Vec<[usize; 3]> = distinct_triples(m);
        for d in 0..m {
            for kk in 0..n {
                for &[a, b, g] in &triples {
                    let mut c = contract1(&p.cs_qs_ccc, &[kk, d, a, b, g]);
                    let mut corr = Expr::zero();
                    for &(i, j) in &nz2 {
                        let s = p1(i, kk, a) * p2(j, d, b, g)
                            + p1(i, kk, b) * p2(j, d, g, a)
                            + p1(i, kk, g) * p2(j, d, a, b);
                        if !s.is_zero() {
                            corr += &k2f[i][j] * &s;
                        }
                    }
                    c -= corr.scale(&rat(1, 3));
                    if !c.is_zero() {
                        out += &c.scale(&rat(-1, 2))
                            * &Expr::product(&[cs(d), qs(kk), gh(g), gh(b), gh(a)]);
                    }
                }
            }
        }
        for &[l, mm, nn] in &distinct_triples(n) {
            for &[a, b, g] in &triples {
                let mut c = contract1(&p.qs_qs_qs_ccc, &[l, mm, nn, a, b, g]);
                for &(i, j) in &nz2 {
                    let s = p1(i, nn, a) * pq(j, l, mm, b, g)
                        + p1(i, nn, b) * pq(j, l, mm, g, a)
                        + p1(i, nn, g) * pq(j, l, mm, a, b);
                    if !s.is_zero() {
                        c -= &k2f[i][j] * &s;
                    }
                }
                for (i, j, kx, v) in &k3f {
                    let s = p1(*i, nn, a) * p1(*j, mm, b) * p1(*kx, l, g);
                    if !s.is_zero() {
                        c += (v * &s).scale(&rat(2, 1));
                    }
                }
                if !c.is_zero() {
                    out += &c.scale(&rat(1, 12))
                        * &Expr::product(&[qs(nn), qs(mm), qs(l), gh(g), gh(b), gh(a)]);
                }
            }
        }
    }
    Ok(out)
}

fn nz_third(k2: &[Vec<Expr>], flp: &[Expr], n: usize) -> Vec<(usize, usize, usize, Expr)> {
    let mut out = Vec::new();
    for (i, row) in k2.iter().enumerate().take(n) {
        for (j, kij) in row.iter().enumerate().take(n) {
            if kij.is_zero() {
                continue;
            }
            for k in 0..n {
                let d = fl_star(&kij.diff(momentum(k)), flp);
                if !d.is_zero() {
                    out.push((i, j, k, d));
                }
            }
        }
    }
    out
}

fn distinct_triples(m: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..m {
        for b in 0..m {
            for g in 0..m {
                if a != b && b != g && a != g {
                    out.push([a, b, g]);
                }
            }
        }
    }
    out
}
