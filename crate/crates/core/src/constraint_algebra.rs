//! Canonical Poisson brackets, the first-class property, and the hamiltonian
//! structure functions C, V and J.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{Expr, Family, Rational, Symbol, SymbolTable};
use crate::linsolve::{rank, solve_polynomial_system, system_variables};
use crate::table::{entry_key, Table};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("{what} must be a polynomial in q and p only, found `{symbol}`")]
    NonCanonical { what: String, symbol: String },
    #[error("{what} must be a polynomial in q and qd only, found `{symbol}`")]
    NotVelocitySpace { what: String, symbol: String },
    #[error("{what} must be even with ghost number 0")]
    Grading { what: String },
    #[error("{m} constraints exceed {n} coordinates")]
    TooManyConstraints { n: u32, m: u32 },
    #[error("constraints are reducible: Jacobian rank {rank} < {m} at a sample point")]
    Reducible { rank: usize, m: u32 },
    #[error("supplied {key} is not antisymmetric in its lower indices")]
    NotAntisymmetric { key: String },
    #[error("supplied {what} has {found} entries, expected {expected}")]
    Arity {
        what: String,
        found: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("bracket contains non-canonical symbol `{0}`")]
    NonCanonicalSymbol(String),
    #[error("no decomposition over the constraints with coefficient degree <= {bound}")]
    NoDecomposition { bound: u32 },
    #[error("{bracket} does not decompose over the constraints (degree bound {bound})")]
    FirstClassViolation { bracket: String, bound: u32 },
    #[error("supplied structure functions fail {{G{alpha}, G{beta}}} = C G; residual {residual}")]
    VerificationFailure {
        alpha: usize,
        beta: usize,
        residual: String,
    },
}

/// Zeroth-order velocity-space data given by the user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuppliedPullback {
    pub flp: Vec<Expr>,
    pub lambda: Vec<Expr>,
}

/// Unvalidated model description.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub n: u32,
    pub m: u32,
    pub l0: Option<Expr>,
    pub h0: Expr,
    pub g: Vec<Expr>,
    pub supplied_c: Option<Table>,
    pub supplied_pullback: Option<SuppliedPullback>,
    pub degree_bound: Option<u32>,
}

impl ModelSpec {
    pub fn new(n: u32, m: u32, h0: Expr, g: Vec<Expr>) -> Self {
        ModelSpec {
            name: String::new(),
            n,
            m,
            l0: None,
            h0,
            g,
            supplied_c: None,
            supplied_pullback: None,
            degree_bound: None,
        }
    }
}

/// A validated finite-dimensional system with primary first-class constraints.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    table: SymbolTable,
}

pub const DEFAULT_SEED: u64 = 0x5eed;
const SAMPLE_POINTS: usize = 3;

fn is_canonical(s: Symbol) -> bool {
    s.jet() == 0 && matches!(s.family(), Family::Coord | Family::Momentum)
}

fn is_velocity_space(s: Symbol) -> bool {
    s.family() == Family::Coord && s.jet() <= 1
}

fn check_even_neutral(e: &Expr, what: &str) -> Result<(), ModelError> {
    let ok = e
        .terms()
        .all(|(m, _)| !m.parity().is_odd() && m.ghost_number() == 0);
    if ok {
        Ok(())
    } else {
        Err(ModelError::Grading {
            what: what.to_string(),
        })
    }
}

fn check_symbols(
    e: &Expr,
    what: &str,
    allowed: fn(Symbol) -> bool,
    err: fn(String, String) -> ModelError,
) -> Result<(), ModelError> {
    match e.symbols().into_iter().find(|&s| !allowed(s)) {
        Some(s) => Err(err(what.to_string(), s.to_string())),
        None => Ok(()),
    }
}

fn check_phase_space(e: &Expr, what: &str) -> Result<(), ModelError> {
    check_symbols(e, what, is_canonical, |what, symbol| ModelError::NonCanonical {
        what,
        symbol,
    })?;
    check_even_neutral(e, what)
}

fn check_velocity(e: &Expr, what: &str) -> Result<(), ModelError> {
    check_symbols(e, what, is_velocity_space, |what, symbol| {
        ModelError::NotVelocitySpace { what, symbol }
    })?;
    check_even_neutral(e, what)
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Model, ModelError> {
        Model::with_seed(spec, DEFAULT_SEED)
    }

    /// Validates `spec`; `seed` drives the irreducibility sampling.
    pub fn with_seed(mut spec: ModelSpec, seed: u64) -> Result<Model, ModelError> {
        let (n, m) = (spec.n, spec.m);
        if m > n {
            return Err(ModelError::TooManyConstraints { n, m });
        }
        if spec.g.len() != m as usize {
            return Err(ModelError::Arity {
                what: "constraint list".into(),
                found: spec.g.len(),
                expected: m as usize,
            });
        }
        check_phase_space(&spec.h0, "H0")?;
        for (mu, g) in spec.g.iter().enumerate() {
            check_phase_space(g, &format!("G{}", mu + 1))?;
        }
        if let Some(l0) = &spec.l0 {
            check_velocity(l0, "L0")?;
        }
        if let Some(sp) = &spec.supplied_pullback {
            for (what, list, expected) in [("flp", &sp.flp, n), ("lambda", &sp.lambda, m)] {
                if list.len() != expected as usize {
                    return Err(ModelError::Arity {
                        what: what.into(),
                        found: list.len(),
                        expected: expected as usize,
                    });
                }
                for (k, e) in list.iter().enumerate() {
                    check_velocity(e, &format!("{what}[{}]", k + 1))?;
                }
            }
        }
        if let Some(c) = spec.supplied_c.take() {
            spec.supplied_c = Some(complete_antisymmetric(c, m as usize)?);
        }
        let model = Model {
            table: SymbolTable::new(n, m),
            spec,
        };
        model.check_irreducible(seed)?;
        Ok(model)
    }

    fn check_irreducible(&self, seed: u64) -> Result<(), ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vars: Vec<Symbol> = (1..=self.n())
            .flat_map(|i| [Symbol::q(i), Symbol::p(i)])
            .collect();
        let jac: Vec<Vec<Expr>> = self
            .g()
            .iter()
            .map(|g| vars.iter().map(|&v| g.diff(v)).collect())
            .collect();
        for _ in 0..SAMPLE_POINTS {
            let point: HashMap<Symbol, Rational> = vars
                .iter()
                .map(|&v| {
                    let num: i64 = rng.gen_range(-20..=20);
                    let den: i64 = rng.gen_range(1..=7);
                    (v, Rational::new(num.into(), den.into()))
                })
                .collect();
            let rows: Vec<Vec<Rational>> = jac
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|e| {
                            e.evaluate(&point)
                                .constant_value()
                                .expect("jacobian entries are canonical")
                        })
                        .collect()
                })
                .collect();
            let r = rank(&rows);
            if r < self.m() as usize {
                return Err(ModelError::Reducible { rank: r, m: self.m() });
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }
    pub fn n(&self) -> u32 {
        self.spec.n
    }
    pub fn m(&self) -> u32 {
        self.spec.m
    }
    pub fn l0(&self) -> Option<&Expr> {
        self.spec.l0.as_ref()
    }
    pub fn h0(&self) -> &Expr {
        &self.spec.h0
    }
    pub fn g(&self) -> &[Expr] {
        &self.spec.g
    }
    pub fn supplied_c(&self) -> Option<&Table> {
        self.spec.supplied_c.as_ref()
    }
    pub fn supplied_pullback(&self) -> Option<&SuppliedPullback> {
        self.spec.supplied_pullback.as_ref()
    }
    pub fn degree_bound(&self) -> Option<u32> {
        self.spec.degree_bound
    }
    pub fn symbols(&self) -> &SymbolTable {
        &self.table
    }
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
}

/// Fills `C[e][b][a] = -C[e][a][b]` where only one side was given.
fn complete_antisymmetric(mut c: Table, m: usize) -> Result<Table, ModelError> {
    if c.shape() != [m, m, m] {
        return Err(ModelError::Arity {
            what: "C table".into(),
            found: c.shape().iter().product(),
            expected: m * m * m,
        });
    }
    for e in 0..m {
        for a in 0..m {
            for b in a..m {
                let ab = c.get(&[e, a, b]).clone();
                let ba = c.get(&[e, b, a]).clone();
                match (ab.is_zero(), ba.is_zero()) {
                    (false, true) => c.set(&[e, b, a], -ab),
                    (true, false) => c.set(&[e, a, b], -ba),
                    _ if ab != -ba.clone() => {
                        return Err(ModelError::NotAntisymmetric {
                            key: entry_key("C", &[e, a, b]),
                        })
                    }
                    _ => {}
                }
            }
        }
    }
    Ok(c)
}

/// `{f, g} = sum_i (df/dq_i dg/dp_i - df/dp_i dg/dq_i)`.
pub fn poisson(f: &Expr, g: &Expr, model: &Model) -> Result<Expr, AlgebraError> {
    for e in [f, g] {
        if let Some(s) = e.symbols().into_iter().find(|&s| !is_canonical(s)) {
            return Err(AlgebraError::NonCanonicalSymbol(s.to_string()));
        }
    }
    let mut out = Expr::zero();
    for i in 1..=model.n() {
        let (q, p) = (Symbol::q(i), Symbol::p(i));
        out += &f.diff(q) * &g.diff(p);
        out -= &f.diff(p) * &g.diff(q);
    }
    Ok(out)
}

/// Coefficients `X^mu` with `e = X^mu G_mu` identically, of degree at most
/// the model's bound (default: the degree of `e`).
pub fn decompose_over_constraints(e: &Expr, model: &Model) -> Result<Vec<Expr>, AlgebraError> {
    let bound = model.degree_bound().unwrap_or_else(|| e.degree());
    decompose_with_bound(e, model.g(), bound)
}

fn decompose_with_bound(e: &Expr, g: &[Expr], bound: u32) -> Result<Vec<Expr>, AlgebraError> {
    if e.is_zero() {
        return Ok(vec![Expr::zero(); g.len()]);
    }
    let matrix = vec![g.to_vec()];
    let rhs = vec![e.clone()];
    let mut vars = system_variables(&matrix, &rhs);
    vars.retain(|&s| is_canonical(s));
    solve_polynomial_system(&matrix, &rhs, &vars, bound)
        .ok_or(AlgebraError::NoDecomposition { bound })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Supplied,
    Solved,
}

const READ_C: u32 = 1;
const READ_V: u32 = 2;
const READ_J: u32 = 4;

/// Hamiltonian structure functions with a read audit.
///
/// Every accessor records which table was consumed, so callers can prove
/// that a computation never touched V or J.
#[derive(Debug)]
pub struct StructureData {
    c: Table,
    v: Table,
    j: Option<Table>,
    c_provenance: Provenance,
    reads: AtomicU32,
}

impl Clone for StructureData {
    fn clone(&self) -> Self {
        StructureData {
            c: self.c.clone(),
            v: self.v.clone(),
            j: self.j.clone(),
            c_provenance: self.c_provenance,
            reads: AtomicU32::new(0),
        }
    }
}

impl StructureData {
    pub fn new(c: Table, v: Table, j: Option<Table>, c_provenance: Provenance) -> Self {
        StructureData {
            c,
            v,
            j,
            c_provenance,
            reads: AtomicU32::new(0),
        }
    }

    /// `C^eta_{alpha beta}` indexed `[eta][alpha][beta]`.
    pub fn c(&self) -> &Table {
        self.reads.fetch_or(READ_C, Ordering::Relaxed);
        &self.c
    }

    /// `V^eta_mu` indexed `[eta][mu]`.
    pub fn v(&self) -> &Table {
        self.reads.fetch_or(READ_V, Ordering::Relaxed);
        &self.v
    }

    /// `J^{eta sigma}_{alpha beta gamma}` indexed `[eta][sigma][alpha][beta][gamma]`.
    pub fn j(&self) -> Option<&Table> {
        self.reads.fetch_or(READ_J, Ordering::Relaxed);
        self.j.as_ref()
    }

    pub fn c_provenance(&self) -> Provenance {
        self.c_provenance
    }

    /// Names of the tables read since the last reset.
    pub fn reads(&self) -> Vec<&'static str> {
        let bits = self.reads.load(Ordering::Relaxed);
        [(READ_C, "C"), (READ_V, "V"), (READ_J, "J")]
            .into_iter()
            .filter(|(b, _)| bits & b != 0)
            .map(|(_, n)| n)
            .collect()
    }

    pub fn reset_reads(&self) {
        self.reads.store(0, Ordering::Relaxed);
    }

    /// Same data with different V and J; used for independence checks.
    pub fn with_v_and_j(&self, v: Table, j: Option<Table>) -> StructureData {
        StructureData::new(self.c.clone(), v, j, self.c_provenance)
    }
}

impl PartialEq for StructureData {
    fn eq(&self, other: &Self) -> bool {
        self.c == other.c && self.v == other.v && self.j == other.j
    }
}

fn pair_label(a: usize, b: usize) -> String {
    format!("{{G{}, G{}}}", a + 1, b + 1)
}

/// `{G_a, G_b} - C^e_{ab} G_e` for the given table.
pub fn closure_residual(model: &Model, c: &Table, a: usize, b: usize) -> Result<Expr, AlgebraError> {
    let g = model.g();
    let mut r = poisson(&g[a], &g[b], model)?;
    for (e, ge) in g.iter().enumerate() {
        let coeff = c.get(&[e, a, b]);
        if !coeff.is_zero() {
            r -= coeff * ge;
        }
    }
    Ok(r)
}

fn solve_c(model: &Model) -> Result<Table, AlgebraError> {
    let m = model.m() as usize;
    let mut c = Table::zeros(&[m, m, m]);
    for a in 0..m {
        for b in a + 1..m {
            let br = poisson(&model.g()[a], &model.g()[b], model)?;
            let x = decompose_over_constraints(&br, model).map_err(|e| first_class(e, pair_label(a, b)))?;
            for (e, xe) in x.into_iter().enumerate() {
                c.set(&[e, b, a], -xe.clone());
                c.set(&[e, a, b], xe);
            }
        }
    }
    Ok(c)
}

fn first_class(e: AlgebraError, bracket: String) -> AlgebraError {
    match e {
        AlgebraError::NoDecomposition { bound } => AlgebraError::FirstClassViolation { bracket, bound },
        other => other,
    }
}

/// `V` from `{H0, G_mu} = V^eta_mu G_eta`.
pub fn hamiltonian_structure(model: &Model) -> Result<Table, AlgebraError> {
    let m = model.m() as usize;
    let mut v = Table::zeros(&[m, m]);
    for mu in 0..m {
        let br = poisson(model.h0(), &model.g()[mu], model)?;
        let x = decompose_over_constraints(&br, model)
            .map_err(|e| first_class(e, format!("{{H0, G{}}}", mu + 1)))?;
        for (e, xe) in x.into_iter().enumerate() {
            v.set(&[e, mu], xe);
        }
    }
    Ok(v)
}

/// Left side of the second-order Jacobi relation for fixed `(eta, a, b, c)`.
pub fn jacobi_combination(
    model: &Model,
    c: &Table,
    eta: usize,
    [a, b, g]: [usize; 3],
) -> Result<Expr, AlgebraError> {
    let m = model.m() as usize;
    let gs = model.g();
    let mut out = Expr::zero();
    for (x, y, z) in [(a, b, g), (b, g, a), (g, a, b)] {
        out += poisson(c.get(&[eta, x, y]), &gs[z], model)?;
        for d in 0..m {
            out -= c.get(&[d, x, y]) * c.get(&[eta, z, d]);
        }
    }
    Ok(out)
}

fn solve_j(model: &Model, c: &Table) -> Result<Table, AlgebraError> {
    let m = model.m() as usize;
    let mut j = Table::zeros(&[m, m, m, m, m]);
    for eta in 0..m {
        for a in 0..m {
            for b in a + 1..m {
                for g in b + 1..m {
                    let lhs = jacobi_combination(model, c, eta, [a, b, g])?;
                    let bound = model.degree_bound().unwrap_or_else(|| lhs.degree());
                    let x = decompose_with_bound(&lhs, model.g(), bound).map_err(|e| {
                        first_class(
                            e,
                            format!("Jacobi combination {}", entry_key("", &[eta, a, b, g])),
                        )
                    })?;
                    for (sigma, xs) in x.into_iter().enumerate() {
                        for (perm, odd) in permutations3([a, b, g]) {
                            let v = if odd { -xs.clone() } else { xs.clone() };
                            j.set(&[eta, sigma, perm[0], perm[1], perm[2]], v);
                        }
                    }
                }
            }
        }
    }
    Ok(j)
}

/// The six orderings of three indices with their permutation parity.
pub(crate) fn permutations3([a, b, c]: [usize; 3]) -> [([usize; 3], bool); 6] {
    [
        ([a, b, c], false),
        ([b, c, a], false),
        ([c, a, b], false),
        ([b, a, c], true),
        ([a, c, b], true),
        ([c, b, a], true),
    ]
}

/// Determines or verifies C, then V and optionally J. Every identity is
/// re-expanded before returning.
pub fn structure_functions(model: &Model, want_j: bool) -> Result<StructureData, AlgebraError> {
    let m = model.m() as usize;
    let (c, provenance) = match model.supplied_c() {
        Some(c) => (c.clone(), Provenance::Supplied),
        None => (solve_c(model)?, Provenance::Solved),
    };
    for a in 0..m {
        for b in a + 1..m {
            let r = closure_residual(model, &c, a, b)?;
            if !r.is_zero() {
                return Err(AlgebraError::VerificationFailure {
                    alpha: a + 1,
                    beta: b + 1,
                    residual: model.symbols().print(&r),
                });
            }
        }
    }
    let v = hamiltonian_structure(model)?;
    for mu in 0..m {
        let mut r = poisson(model.h0(), &model.g()[mu], model)?;
        for (e, ge) in model.g().iter().enumerate() {
            r -= v.get(&[e, mu]) * ge;
        }
        assert!(r.is_zero(), "V decomposition failed re-expansion");
    }
    let j = if want_j {
        let j = solve_j(model, &c)?;
        for eta in 0..m {
            for a in 0..m {
                for b in a + 1..m {
                    for g in b + 1..m {
                        let mut r = jacobi_combination(model, &c, eta, [a, b, g])?;
                        for (s, gs) in model.g().iter().enumerate() {
                            r -= j.get(&[eta, s, a, b, g]) * gs;
                        }
                        assert!(r.is_zero(), "J decomposition failed re-expansion");
                    }
                }
            }
        }
        Some(j)
    } else {
        None
    };
    Ok(StructureData::new(c, v, j, provenance))
}

/// True when every entry of `c` is antisymmetric in its lower pair.
pub fn is_antisymmetric(c: &Table) -> bool {
    let m = c.shape()[0];
    (0..m).all(|e| {
        (0..m).all(|a| (0..m).all(|b| *c.get(&[e, a, b]) == -c.get(&[e, b, a]).clone()))
    })
}
