//! Extended Hamiltonian, BV Lagrangian, lagrangian gauge-structure tensors
//! and the verification of the master equation and boundary conditions.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::constraint_algebra::{Model, StructureData};
use crate::expr::{rat, Expr, Family, Side, Symbol};
use crate::localfn::{JetContext, LocalError};
use crate::pullback::{
    fl_star, pullback_k, read_sector, recursive_expand, PullbackError, PullbackExpansion,
};
use crate::table::Table;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BvError {
    #[error("antighost order {requested} requires an action of order {needed}, have {available}")]
    OrderInsufficient {
        requested: u32,
        needed: u32,
        available: u32,
    },
    #[error("master equation violated at antighost order {order}: {residual}")]
    MasterEquationViolation { order: u32, residual: String },
    #[error("boundary condition violated ({condition}): {residual}")]
    BoundaryConditionViolation { condition: String, residual: String },
    #[error(transparent)]
    Pullback(#[from] PullbackError),
    #[error(transparent)]
    Local(#[from] LocalError),
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
fn momentum(i: usize) -> Symbol {
    Symbol::p(i as u32 + 1)
}

/// `H0 - qs_k dG_a/dp_k c_a - 1/2 cs_d C^d_{ab} c_b c_a` with the extended
/// momenta represented by the ordinary momentum symbols.
pub fn extended_hamiltonian(h0: &Expr, g: &[Expr], c: &Table) -> Expr {
    let n = h0
        .symbols()
        .into_iter()
        .chain(g.iter().flat_map(Expr::symbols))
        .filter(|s| s.family() == Family::Momentum)
        .map(|s| s.index() as usize)
        .max()
        .unwrap_or(0);
    let m = g.len();
    let mut h = h0.clone();
    for (a, ga) in g.iter().enumerate() {
        for k in 0..n {
            let d = ga.diff(momentum(k));
            if !d.is_zero() {
                h -= &d * &Expr::product(&[qs(k), gh(a)]);
            }
        }
    }
    let half = rat(1, 2);
    for d in 0..m {
        for a in 0..m {
            for b in 0..m {
                let cdab = c.get(&[d, a, b]);
                if !cdab.is_zero() {
                    h -= &cdab.scale(&half) * &Expr::product(&[cs(d), gh(b), gh(a)]);
                }
            }
        }
    }
    h
}

/// Everything action assembly is allowed to read.
#[derive(Clone, Copy, Debug)]
pub struct ActionInputs<'a> {
    pub h0: &'a Expr,
    pub g: &'a [Expr],
    pub c: &'a Table,
    pub expansion: &'a PullbackExpansion,
}

impl<'a> ActionInputs<'a> {
    pub const CONSUMED: [&'static str; 4] = ["H0", "G", "C", "pullback"];

    pub fn gather(model: &'a Model, structure: &'a StructureData, expansion: &'a PullbackExpansion) -> Self {
        ActionInputs {
            h0: model.h0(),
            g: model.g(),
            c: structure.c(),
            expansion,
        }
    }
}

/// The four summands of the BV Lagrangian.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionPieces {
    pub kinetic: Expr,
    pub hamiltonian: Expr,
    pub generators: Expr,
    pub structure: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BVAction {
    pub order: u32,
    pub l: Expr,
    pub components: BTreeMap<u32, Expr>,
    pub pieces: ActionPieces,
}

impl BVAction {
    /// Every term even with ghost number zero.
    pub fn is_graded(&self) -> bool {
        self.l
            .terms()
            .all(|(m, _)| !m.parity().is_odd() && m.ghost_number() == 0)
    }

    /// `L` with every antifield set to zero.
    pub fn without_antifields(&self) -> Expr {
        self.l
            .set_zero(|s| matches!(s.family(), Family::CoordStar | Family::GhostStar))
    }
}

/// Assembles `qd P - FL* H0 + qs_k FL*(dG_a/dp_k) c_a + 1/2 cs_d FL*(C^d_ab) c_b c_a`.
pub fn bv_lagrangian(inputs: &ActionInputs) -> Result<BVAction, BvError> {
    let exp = inputs.expansion;
    let k = exp.order;
    let (n, m) = (exp.n(), exp.m());
    let kinetic: Expr = exp
        .momenta
        .iter()
        .enumerate()
        .map(|(i, p)| &Expr::var(Symbol::qd(i as u32 + 1)) * p)
        .sum();
    let hamiltonian = -pullback_k(inputs.h0, exp, Some(k))?;
    let mut generators = Expr::zero();
    if k >= 1 {
        for (a, ga) in inputs.g.iter().enumerate() {
            for kk in 0..n {
                let d = ga.diff(momentum(kk));
                if d.is_zero() {
                    continue;
                }
                let pulled = pullback_k(&d, exp, Some(k - 1))?;
                generators += &Expr::var(qs(kk)) * &(&pulled * &Expr::var(gh(a)));
            }
        }
    }
    let mut structure = Expr::zero();
    if k >= 2 {
        let half = rat(1, 2);
        for d in 0..m {
            for a in 0..m {
                for b in 0..m {
                    let cdab = inputs.c.get(&[d, a, b]);
                    if cdab.is_zero() {
                        continue;
                    }
                    let pulled = pullback_k(cdab, exp, Some(k - 2))?.scale(&half);
                    structure += &Expr::var(cs(d)) * &(&pulled * &Expr::product(&[gh(b), gh(a)]));
                }
            }
        }
    }
    let l = (&kinetic + &hamiltonian + &generators + &structure).truncate(k);
    Ok(BVAction {
        order: k,
        components: l.split_by_antighost(),
        l,
        pieces: ActionPieces {
            kinetic,
            hamiltonian,
            generators,
            structure,
        },
    })
}

/// A closed-formula tensor whose contraction disagrees with the action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorMismatch {
    pub tensor: &'static str,
    /// Contracted formula minus the matching sector of the action.
    pub residual: Expr,
}

/// Lagrangian gauge-structure tensors.
///
/// Layouts: `r[i][mu]`, `t[eta][mu][nu]`, `e[i][j][mu][nu]`,
/// `d[i][rho][a][b][g]`, `m[i][j][k][a][b][g]` (upper indices first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSet {
    pub s0: Expr,
    pub r: Table,
    pub t: Option<Table>,
    pub e: Option<Table>,
    pub d: Option<Table>,
    pub m: Option<Table>,
    pub mismatches: Vec<TensorMismatch>,
}

impl TensorSet {
    pub fn named(&self) -> Vec<(&'static str, &Table)> {
        let mut out = vec![("R", &self.r)];
        for (name, t) in [("T", &self.t), ("E", &self.e), ("D", &self.d), ("M", &self.m)] {
            if let Some(t) = t {
                out.push((name, t));
            }
        }
        out
    }

    /// Entries breaking the antisymmetries of T (lower pair), E (both pairs)
    /// and D (all three lower slots), as `(tensor, index)`.
    pub fn symmetry_defects(&self) -> Vec<(&'static str, Vec<usize>)> {
        type Swaps = &'static [(usize, usize)];
        let checks: [(&str, &Option<Table>, Swaps); 3] = [
            ("T", &self.t, &[(1, 2)]),
            ("E", &self.e, &[(0, 1), (2, 3)]),
            ("D", &self.d, &[(2, 3), (3, 4)]),
        ];
        let mut out = Vec::new();
        for (name, table, swaps) in checks {
            let Some(table) = table else { continue };
            for idx in table.indices() {
                let broken = swaps.iter().any(|&(a, b)| {
                    let mut swapped = idx.clone();
                    swapped.swap(a, b);
                    !(table.get(&idx) + table.get(&swapped)).is_zero()
                });
                if broken {
                    out.push((name, idx));
                }
            }
        }
        out
    }
}

/// The part of `l` whose ghost/antifield content has the given numbers of
/// coordinate and ghost antifields.
fn sector_part(l: &Expr, qs_count: usize, cs_count: u32) -> Expr {
    l.filter(|mono| {
        let nq = mono.odd().iter().filter(|s| s.family() == Family::CoordStar).count();
        let nc: u32 = mono
            .even()
            .iter()
            .filter(|(s, _)| s.family() == Family::GhostStar)
            .map(|(_, e)| e)
            .sum();
        nq == qs_count && nc == cs_count
    })
}

/// Evaluates the closed tensor formulas through `through` (1 to 3) and
/// cross-checks each against the corresponding sector of the action.
pub fn extract_tensors(inputs: &ActionInputs, action: &BVAction, through: u32) -> Result<TensorSet, BvError> {
    if through > action.order {
        return Err(BvError::OrderInsufficient {
            requested: through,
            needed: through,
            available: action.order,
        });
    }
    let exp = inputs.expansion;
    let pz = &exp.zero;
    let flp = &pz.flp;
    let (n, m) = (exp.n(), exp.m());
    let p1 = |k: usize, i: usize, mu: usize| exp.p.qs_c.get(&[k, i, mu]);
    let g2: Vec<Table> = inputs
        .g
        .iter()
        .map(|g| Table::from_fn(&[n, n], |ix| g.diff(momentum(ix[0])).diff(momentum(ix[1]))))
        .collect();
    let g2f: Vec<Table> = g2.iter().map(|t| t.map(|e| fl_star(e, flp))).collect();

    let s0 = pz
        .flp
        .iter()
        .enumerate()
        .map(|(i, p)| &Expr::var(Symbol::qd(i as u32 + 1)) * p)
        .sum::<Expr>()
        - fl_star(inputs.h0, flp);
    let r = pz.r.clone();
    let mut mismatches = Vec::new();
    let mut check = |tensor: &'static str, contracted: Expr, qs_count: usize, cs_count: u32| {
        let residual = contracted - sector_part(&action.l, qs_count, cs_count);
        if !residual.is_zero() {
            mismatches.push(TensorMismatch { tensor, residual });
        }
    };
    check("S0", s0.clone(), 0, 0);
    let mut contracted = Expr::zero();
    for ((i, mu), v) in r.nonzero().into_iter().map(|(ix, v)| ((ix[0], ix[1]), v)) {
        contracted += v * &Expr::product(&[qs(i), gh(mu)]);
    }
    check("R", contracted, 1, 0);

    let (mut t, mut e, mut d, mut mt) = (None, None, None, None);
    if through >= 2 {
        let tt = inputs.c.map(|x| fl_star(x, flp));
        let mut contracted = Expr::zero();
        for (ix, v) in tt.nonzero() {
            contracted += &v.scale(&rat(1, 2)) * &Expr::product(&[cs(ix[0]), gh(ix[2]), gh(ix[1])]);
        }
        check("T", contracted, 0, 1);
        t = Some(tt);

        let et = Table::from_fn(&[n, n, m, m], |ix| {
            let [i, j, mu, nu] = ix else { unreachable!() };
            (0..n)
                .map(|k| p1(k, *i, *mu) * g2f[*nu].get(&[k, *j]) - p1(k, *i, *nu) * g2f[*mu].get(&[k, *j]))
                .sum()
        });
        let mut contracted = Expr::zero();
        for (ix, v) in et.nonzero() {
            // -1/4 qs_i qs_j E^{ji}_{ab} c_b c_a
            let [j, i, a, b] = ix[..] else { unreachable!() };
            contracted += &v.scale(&rat(-1, 4)) * &Expr::product(&[qs(i), qs(j), gh(b), gh(a)]);
        }
        check("E", contracted, 2, 0);
        e = Some(et);
    }
    if through >= 3 {
        let dc: Vec<Table> = (0..n)
            .map(|k| inputs.c.map(|x| fl_star(&x.diff(momentum(k)), flp)))
            .collect();
        let dt = Table::from_fn(&[n, m, m, m, m], |ix| {
            let [i, rho, a, b, g] = ix else { unreachable!() };
            let (i, rho, a, b, g) = (*i, *rho, *a, *b, *g);
            let s: Expr = (0..n)
                .map(|k| {
                    p1(k, i, a) * dc[k].get(&[rho, b, g])
                        + p1(k, i, b) * dc[k].get(&[rho, g, a])
                        + p1(k, i, g) * dc[k].get(&[rho, a, b])
                })
                .sum();
            s.scale(&rat(-1, 3))
        });
        let mut contracted = Expr::zero();
        for (ix, v) in dt.nonzero() {
            // -1/2 cs_d qs_i D^{id}_{abg} c_g c_b c_a
            let [i, dd, a, b, g] = ix[..] else { unreachable!() };
            contracted += &v.scale(&rat(-1, 2))
                * &Expr::product(&[cs(dd), qs(i), gh(g), gh(b), gh(a)]);
        }
        check("D", contracted, 1, 1);
        d = Some(dt);

        let g3f: Vec<Table> = g2
            .iter()
            .map(|t| {
                Table::from_fn(&[n, n, n], |ix| {
                    fl_star(&t.get(&[ix[0], ix[1]]).diff(momentum(ix[2])), flp)
                })
            })
            .collect();
        let pq = |l: usize, i: usize, j: usize, b: usize, g: usize| exp.p.qs_qs_cc.get(&[l, i, j, b, g]);
        let mtab = Table::from_fn(&[n, n, n, m, m, m], |ix| {
            let [i, j, k, a, b, g] = ix else { unreachable!() };
            let (i, j, k, a, b, g) = (*i, *j, *k, *a, *b, *g);
            if a == b || b == g || a == g {
                return Expr::zero();
            }
            let mut s = Expr::zero();
            for (x, y, z) in [(a, b, g), (b, g, a), (g, a, b)] {
                for l in 0..n {
                    let c2 = g2f[x].get(&[k, l]);
                    if !c2.is_zero() {
                        s += c2 * pq(l, i, j, y, z);
                    }
                }
                for mm in 0..n {
                    for nn in 0..n {
                        let c3 = g3f[x].get(&[k, mm, nn]);
                        if !c3.is_zero() {
                            s += c3 * &(p1(mm, i, y) * p1(nn, j, z) - p1(mm, i, z) * p1(nn, j, y));
                        }
                    }
                }
            }
            s.scale(&rat(-1, 3))
        });
        let mut contracted = Expr::zero();
        for (ix, v) in mtab.nonzero() {
            // 1/12 qs_i qs_j qs_k M^{kji}_{abg} c_g c_b c_a
            let [k, j, i, a, b, g] = ix[..] else { unreachable!() };
            contracted += &v.scale(&rat(1, 12))
                * &Expr::product(&[qs(i), qs(j), qs(k), gh(g), gh(b), gh(a)]);
        }
        check("M", contracted, 3, 0);
        mt = Some(mtab);
    }
    Ok(TensorSet {
        s0,
        r,
        t,
        e,
        d,
        m: mt,
        mismatches,
    })
}

/// Reads a tensor coefficient straight off the action, e.g.
/// `action_coefficient(l, &[cs(d)], &[c_b, c_a])`.
pub fn action_coefficient(l: &Expr, evens: &[Symbol], odds: &[Symbol]) -> Expr {
    read_sector(&l.sector_coefficients(), evens, odds)
}

/// Per-order outcome of the master-equation check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderCheck {
    pub order: u32,
    /// Antibracket integrand with Euler-form derivatives.
    pub residual: Expr,
    pub identically_zero: bool,
    pub total_derivative: bool,
    /// Operator-form integrand minus the time derivative of the boundary term.
    pub boundary_residual: Expr,
}

impl OrderCheck {
    pub fn passes(&self) -> bool {
        self.total_derivative && self.boundary_residual.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterReport {
    pub validity_order: u32,
    pub orders: Vec<OrderCheck>,
    /// `2 FL*(P_i dG_a/dP_i) c_a`
    pub boundary_term: Expr,
    /// The boundary term vanishes when every ghost does.
    pub boundary_vanishes_without_ghosts: bool,
}

impl MasterReport {
    pub fn violation(&self) -> Option<BvError> {
        if !self.boundary_vanishes_without_ghosts {
            return Some(BvError::MasterEquationViolation {
                order: 0,
                residual: format!("boundary term survives at c = 0: {}", self.boundary_term),
            });
        }
        self.orders.iter().find(|o| !o.passes()).map(|o| {
            let r = if o.total_derivative {
                &o.boundary_residual
            } else {
                &o.residual
            };
            BvError::MasterEquationViolation {
                order: o.order,
                residual: r.to_string(),
            }
        })
    }

    pub fn passes(&self) -> bool {
        self.violation().is_none()
    }
}

/// Checks `(S, S) = 0` through antighost order `order` (at most the action
/// order minus one), both as "every component is a total derivative" and
/// against the explicit boundary term.
pub fn master_equation_check(action: &BVAction, inputs: &ActionInputs, order: u32) -> Result<MasterReport, BvError> {
    if order + 1 > action.order {
        return Err(BvError::OrderInsufficient {
            requested: order,
            needed: order + 1,
            available: action.order,
        });
    }
    let exp = inputs.expansion;
    let (n, m) = (exp.n(), exp.m());
    let ctx = JetContext::new(n as u32, m as u32);
    let l = &action.l;
    let cap = Some(order);
    let x: Vec<Expr> = (0..n).map(|i| l.partial(qs(i), Side::Left)).collect();
    let mut euler = Expr::zero();
    let mut operator = Expr::zero();
    for (i, xi) in x.iter().enumerate() {
        let q = Symbol::q(i as u32 + 1);
        let e = ctx.euler_derivative(l, q, Side::Right)?;
        euler += e.mul_truncated(xi, cap);
        operator += l.diff(q).mul_truncated(xi, cap);
        let dx = ctx.total_derivative(xi)?;
        operator += l.diff(Symbol::qd(i as u32 + 1)).mul_truncated(&dx, cap);
    }
    let mut ghost_part = Expr::zero();
    for a in 0..m {
        let y = l.partial(gh(a), Side::Right);
        let z = l.partial(cs(a), Side::Left);
        ghost_part += y.mul_truncated(&z, cap);
    }
    let two = rat(2, 1);
    let euler = (euler + &ghost_part).scale(&two);
    let operator = (operator + ghost_part).scale(&two);

    let mut boundary_term = Expr::zero();
    for (a, ga) in inputs.g.iter().enumerate() {
        let k: Expr = (0..n)
            .map(|i| &Expr::var(momentum(i)) * &ga.diff(momentum(i)))
            .sum();
        let pulled = pullback_k(&k, exp, Some(order))?;
        boundary_term += &pulled * &Expr::var(gh(a));
    }
    let boundary_term = boundary_term.scale(&two);
    let boundary_vanishes_without_ghosts = boundary_term.set_zero(|s| s.family() == Family::Ghost).is_zero();
    let boundary_rate = ctx.total_derivative(&boundary_term)?;
    let boundary_gap = operator - boundary_rate;

    let mut orders = Vec::new();
    for o in 0..=order {
        let residual = euler.antighost_component(o);
        let total_derivative = ctx.is_total_derivative(&residual)?;
        orders.push(OrderCheck {
            order: o,
            identically_zero: residual.is_zero(),
            total_derivative,
            boundary_residual: boundary_gap.antighost_component(o),
            residual,
        });
    }
    Ok(MasterReport {
        validity_order: order,
        orders,
        boundary_term,
        boundary_vanishes_without_ghosts,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryReport {
    /// `L|_{antifields=0} - (qd FL*p - FL* H0)`
    pub s0_residual: Expr,
    /// `L|_{antifields=0} - L0` when `L0` was supplied.
    pub lagrangian_residual: Option<Expr>,
    /// Nonvanishing `d_l/d qs_i d_r/d c_mu L|_0 - R^i_mu`, keyed `(i, mu)`.
    pub generator_residuals: Vec<((usize, usize), Expr)>,
}

impl BoundaryReport {
    pub fn violation(&self) -> Option<BvError> {
        if !self.s0_residual.is_zero() {
            return Some(BvError::BoundaryConditionViolation {
                condition: "antifield-free part equals qd FL*p - FL*H0".into(),
                residual: self.s0_residual.to_string(),
            });
        }
        if let Some(r) = self.lagrangian_residual.as_ref().filter(|r| !r.is_zero()) {
            return Some(BvError::BoundaryConditionViolation {
                condition: "antifield-free part equals L0".into(),
                residual: r.to_string(),
            });
        }
        self.generator_residuals.first().map(|((i, mu), r)| BvError::BoundaryConditionViolation {
            condition: format!("generator R[{}][{}]", i + 1, mu + 1),
            residual: r.to_string(),
        })
    }
}

pub fn boundary_condition_check(action: &BVAction, inputs: &ActionInputs, l0: Option<&Expr>) -> BoundaryReport {
    let exp = inputs.expansion;
    let pz = &exp.zero;
    let bare = action.without_antifields();
    let expected: Expr = pz
        .flp
        .iter()
        .enumerate()
        .map(|(i, p)| &Expr::var(Symbol::qd(i as u32 + 1)) * p)
        .sum::<Expr>()
        - fl_star(inputs.h0, &pz.flp);
    let is_sector = |s: Symbol| s.is_sector();
    let mut generator_residuals = Vec::new();
    for i in 0..exp.n() {
        let di = action.l.partial(qs(i), Side::Left);
        for mu in 0..exp.m() {
            let mixed = di.partial(gh(mu), Side::Right).set_zero(is_sector);
            let r = mixed - pz.r.get(&[i, mu]);
            if !r.is_zero() {
                generator_residuals.push(((i, mu), r));
            }
        }
    }
    BoundaryReport {
        s0_residual: &bare - &expected,
        lagrangian_residual: l0.map(|l0| &bare - l0),
        generator_residuals,
    }
}

/// `sum_i E_i(L0) R^i_mu` for each `mu`, which must be a total derivative.
pub fn noether_combinations(l0: &Expr, r: &Table, ctx: &JetContext) -> Result<Vec<Expr>, LocalError> {
    let (n, m) = (r.shape()[0], r.shape()[1]);
    let euler: Vec<Expr> = (0..n)
        .map(|i| ctx.euler_derivative(l0, Symbol::q(i as u32 + 1), Side::Left))
        .collect::<Result<_, _>>()?;
    Ok((0..m)
        .map(|mu| (0..n).map(|i| &euler[i] * r.get(&[i, mu])).sum())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndependenceReport {
    /// Inputs action assembly is given.
    pub consumed: Vec<&'static str>,
    /// Structure tables actually read while building expansion, action and tensors.
    pub structure_reads: Vec<&'static str>,
    pub identical_under_j_shift: bool,
    pub identical_under_v_shift: bool,
}

impl IndependenceReport {
    pub fn passes(&self) -> bool {
        !self.structure_reads.iter().any(|r| *r == "V" || *r == "J")
            && self.identical_under_j_shift
            && self.identical_under_v_shift
    }
}

fn assemble(
    model: &Model,
    structure: &StructureData,
    exp: &PullbackExpansion,
) -> Result<(PullbackExpansion, BVAction, TensorSet), BvError> {
    let expanded = recursive_expand(model, structure, &exp.zero, exp.order)?;
    let inputs = ActionInputs::gather(model, structure, &expanded);
    let action = bv_lagrangian(&inputs)?;
    let tensors = extract_tensors(&inputs, &action, action.order.clamp(1, 3))?;
    Ok((expanded, action, tensors))
}

/// Shift vanishing on contraction with the constraints: `X^1 -> X^1 + G_2`,
/// `X^2 -> X^2 - G_1` in the summed slot, or a constant for one constraint.
fn null_shift(g: &[Expr], slot: usize) -> Expr {
    match (g.len(), slot) {
        (1, _) => Expr::one(),
        (_, 0) => g[1].clone(),
        (_, 1) => -g[0].clone(),
        _ => Expr::zero(),
    }
}

/// Verifies that V and J are never read and that shifting them leaves the
/// expansion, action and tensors unchanged.
pub fn independence_check(
    model: &Model,
    structure: &StructureData,
    exp: &PullbackExpansion,
) -> Result<IndependenceReport, BvError> {
    structure.reset_reads();
    let base = assemble(model, structure, exp)?;
    let structure_reads = structure.reads();
    let m = model.m() as usize;
    let g = model.g();

    let j = Table::from_fn(&[m, m, m, m, m], |ix| null_shift(g, ix[1]));
    let j = match structure.j() {
        Some(old) => Table::from_fn(old.shape(), |ix| old.get(ix) + j.get(ix)),
        None => j,
    };
    structure.reset_reads();
    let shifted_j = structure.with_v_and_j(structure.v().clone(), Some(j));
    let v = Table::from_fn(&[m, m], |ix| structure.v().get(ix) + &null_shift(g, ix[0]));
    let shifted_v = structure.with_v_and_j(v, structure.j().cloned());
    let same = |s: &StructureData| -> Result<bool, BvError> {
        let other = assemble(model, s, exp)?;
        Ok(other == base && other.1.l.to_string() == base.1.l.to_string())
    };
    Ok(IndependenceReport {
        consumed: ActionInputs::CONSUMED.to_vec(),
        structure_reads,
        identical_under_j_shift: same(&shifted_j)?,
        identical_under_v_shift: same(&shifted_v)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint_algebra::{structure_functions, ModelSpec};
    use crate::expr::SymbolTable;
    use crate::pullback::build_pullback_zero;

    fn model(n: u32, h0: &str, g: &[&str]) -> Model {
        let t = SymbolTable::new(n, g.len() as u32);
        let mut spec = ModelSpec::new(
            n,
            g.len() as u32,
            t.parse(h0).unwrap(),
            g.iter().map(|s| t.parse(s).unwrap()).collect(),
        );
        spec.l0 = Some(t.parse("1/2*qd3^2").unwrap());
        Model::new(spec).unwrap()
    }

    struct Run {
        model: Model,
        structure: StructureData,
        exp: PullbackExpansion,
    }

    fn run(n: u32, h0: &str, g: &[&str], order: u32) -> Run {
        let model = model(n, h0, g);
        let structure = structure_functions(&model, true).unwrap();
        let pz = build_pullback_zero(&model).unwrap();
        let exp = recursive_expand(&model, &structure, &pz, order).unwrap();
        Run {
            model,
            structure,
            exp,
        }
    }

    fn e(m: &Model, s: &str) -> Expr {
        m.symbols().parse(s).unwrap()
    }

    #[test]
    fn extended_hamiltonian_examples() {
        let r = run(3, "1/2*p3^2", &["p1", "p2"], 0);
        let h = extended_hamiltonian(r.model.h0(), r.model.g(), r.structure.c());
        assert_eq!(h, e(&r.model, "1/2*p3^2 - qs1*c1 - qs2*c2"));
        let r = run(3, "1/2*p3^2", &["p1", "q1*p1 + p2"], 0);
        let h = extended_hamiltonian(r.model.h0(), r.model.g(), r.structure.c());
        assert_eq!(
            h,
            e(&r.model, "1/2*p3^2 - qs1*c1 - q1*qs1*c2 - qs2*c2 - cs1*c1*c2")
        );
        let c = Table::zeros(&[0, 0, 0]);
        assert_eq!(extended_hamiltonian(&Expr::int(3), &[], &c), Expr::int(3));
    }

    #[test]
    fn abelian_action_and_tensors() {
        let r = run(3, "1/2*p3^2", &["p1", "p2"], 3);
        let inputs = ActionInputs::gather(&r.model, &r.structure, &r.exp);
        let action = bv_lagrangian(&inputs).unwrap();
        assert_eq!(action.l, e(&r.model, "1/2*qd3^2 + qs1*c1 + qs2*c2"));
        assert!(action.is_graded());
        let ts = extract_tensors(&inputs, &action, 3).unwrap();
        assert!(ts.mismatches.is_empty(), "{:?}", ts.mismatches);
        assert_eq!(ts.r.nonzero().len(), 2);
        assert_eq!(*ts.r.get(&[0, 0]), Expr::int(1));
        assert_eq!(*ts.r.get(&[1, 1]), Expr::int(1));
        for t in [&ts.t, &ts.e, &ts.d, &ts.m] {
            assert!(t.as_ref().unwrap().is_zero());
        }
        let report = master_equation_check(&action, &inputs, 2).unwrap();
        assert!(report.passes(), "{:?}", report.violation());
        assert!(report.boundary_term.is_zero());
        let b = boundary_condition_check(&action, &inputs, r.model.l0());
        assert!(b.violation().is_none());
    }

    #[test]
    fn nonabelian_action_and_tensors() {
        let r = run(3, "1/2*p3^2", &["p1", "q1*p1 + p2"], 3);
        let inputs = ActionInputs::gather(&r.model, &r.structure, &r.exp);
        let action = bv_lagrangian(&inputs).unwrap();
        assert_eq!(
            action.l,
            e(&r.model, "1/2*qd3^2 + qs1*c1 + q1*qs1*c2 + qs2*c2 + cs1*c1*c2")
        );
        let ts = extract_tensors(&inputs, &action, 3).unwrap();
        assert!(ts.mismatches.is_empty(), "{:?}", ts.mismatches);
        assert_eq!(*ts.t.as_ref().unwrap().get(&[0, 0, 1]), Expr::int(-1));
        assert_eq!(*ts.r.get(&[0, 1]), e(&r.model, "q1"));
        assert!(ts.e.as_ref().unwrap().is_zero());
        let report = master_equation_check(&action, &inputs, 2).unwrap();
        assert!(report.passes(), "{:?}", report.violation());
        assert!(report.orders.iter().all(|o| o.identically_zero));
        let ind = independence_check(&r.model, &r.structure, &r.exp).unwrap();
        assert!(ind.passes(), "{ind:?}");
        assert_eq!(ind.structure_reads, vec!["C"]);
    }

    #[test]
    fn corrupted_structure_is_localized() {
        let r = run(3, "1/2*p3^2", &["p1", "p2"], 3);
        let mut c = Table::zeros(&[2, 2, 2]);
        c.set(&[0, 0, 1], Expr::int(1));
        c.set(&[0, 1, 0], Expr::int(-1));
        let bad = StructureData::new(c, r.structure.v().clone(), None, r.structure.c_provenance());
        let exp = recursive_expand(&r.model, &bad, &r.exp.zero, 3).unwrap();
        let inputs = ActionInputs::gather(&r.model, &bad, &exp);
        let action = bv_lagrangian(&inputs).unwrap();
        let report = master_equation_check(&action, &inputs, 2).unwrap();
        assert!(matches!(
            report.violation(),
            Some(BvError::MasterEquationViolation { order: 1, .. })
        ));
    }

    #[test]
    fn open_algebra_tensors() {
        let r = run(4, "1/2*p3^2", &["p1 + p2*p3", "p2 + p4*p3", "p4"], 3);
        let inputs = ActionInputs::gather(&r.model, &r.structure, &r.exp);
        let action = bv_lagrangian(&inputs).unwrap();
        assert!(action.is_graded());
        let ts = extract_tensors(&inputs, &action, 3).unwrap();
        assert!(ts.mismatches.is_empty(), "{:?}", ts.mismatches);
        let et = ts.e.as_ref().unwrap();
        assert_eq!(*et.get(&[1, 3, 0, 1]), Expr::int(1));
        assert_eq!(*et.get(&[3, 1, 0, 1]), Expr::int(-1));
        assert!(ts.t.as_ref().unwrap().is_zero());
        assert!(ts.symmetry_defects().is_empty());
        let mut broken = ts.clone();
        broken.e.as_mut().unwrap().set(&[3, 1, 0, 1], Expr::zero());
        assert_eq!(broken.symmetry_defects()[0], ("E", vec![1, 3, 0, 1]));
        let report = master_equation_check(&action, &inputs, 2).unwrap();
        assert!(report.passes(), "{:?}", report.violation());
    }

    #[test]
    fn order_checks() {
        let r = run(3, "1/2*p3^2", &["p1", "p2"], 2);
        let inputs = ActionInputs::gather(&r.model, &r.structure, &r.exp);
        let action = bv_lagrangian(&inputs).unwrap();
        assert!(matches!(
            master_equation_check(&action, &inputs, 2),
            Err(BvError::OrderInsufficient { .. })
        ));
        assert!(matches!(
            extract_tensors(&inputs, &action, 3),
            Err(BvError::OrderInsufficient { .. })
        ));
    }

    #[test]
    fn noether_identity() {
        let r = run(3, "1/2*p3^2", &["p1", "q1*p1 + p2"], 0);
        let ctx = JetContext::new(3, 2);
        for c in noether_combinations(r.model.l0().unwrap(), &r.exp.zero.r, &ctx).unwrap() {
            assert!(ctx.is_total_derivative(&c).unwrap());
        }
    }
}
