//! Exact linear algebra over the rationals and the polynomial ansatz solver
//! built on it.
//!
//! The ansatz solver finds polynomial unknowns `X^mu` of bounded degree with
//! `sum_mu M[i][mu] * X^mu = rhs[i]` for every row `i`, by expanding the
//! unknowns over all monomials of the admissible degree and matching
//! coefficients. Free parameters of the resulting linear system are set to
//! zero, so the returned solution is deterministic.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{One, Zero};

use crate::expr::{Expr, Monomial, Rational, Symbol};

/// Sparse row: column -> coefficient, plus right-hand side.
#[derive(Clone, Debug, Default)]
struct Row {
    coeffs: BTreeMap<usize, Rational>,
    rhs: Rational,
}

impl Row {
    fn leading(&self) -> Option<usize> {
        self.coeffs.keys().next().copied()
    }

    /// `self -= factor * other`
    fn sub_scaled(&mut self, other: &Row, factor: &Rational) {
        for (&k, v) in &other.coeffs {
            let entry = self.coeffs.entry(k).or_insert_with(Rational::zero);
            *entry -= v * factor;
            if entry.is_zero() {
                self.coeffs.remove(&k);
            }
        }
        self.rhs -= &other.rhs * factor;
    }
}

/// A linear system solved by incremental sparse Gaussian elimination.
#[derive(Clone, Debug, Default)]
pub struct LinearSystem {
    unknowns: usize,
    pivots: BTreeMap<usize, Row>,
    inconsistent: bool,
}

impl LinearSystem {
    pub fn new(unknowns: usize) -> Self {
        LinearSystem {
            unknowns,
            ..Default::default()
        }
    }

    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    /// Adds the equation `sum coeffs[k] * x_k = rhs`.
    pub fn push(&mut self, coeffs: impl IntoIterator<Item = (usize, Rational)>, rhs: Rational) {
        let mut row = Row {
            coeffs: BTreeMap::new(),
            rhs,
        };
        for (k, v) in coeffs {
            debug_assert!(k < self.unknowns);
            let entry = row.coeffs.entry(k).or_insert_with(Rational::zero);
            *entry += v;
            if entry.is_zero() {
                row.coeffs.remove(&k);
            }
        }
        self.reduce_and_insert(row);
    }

    fn reduce_and_insert(&mut self, mut row: Row) {
        // Eliminate pivot columns in increasing order; each pivot row only
        // contains columns at or after its pivot, so this terminates.
        let mut cursor = 0;
        loop {
            let next = row
                .coeffs
                .range(cursor..)
                .map(|(&k, _)| k)
                .find(|k| self.pivots.contains_key(k));
            let Some(col) = next else { break };
            let factor = row.coeffs[&col].clone();
            row.sub_scaled(&self.pivots[&col], &factor);
            cursor = col + 1;
        }
        match row.leading() {
            None => {
                if !row.rhs.is_zero() {
                    self.inconsistent = true;
                }
            }
            Some(lead) => {
                let inv = Rational::one() / &row.coeffs[&lead];
                for v in row.coeffs.values_mut() {
                    *v *= &inv;
                }
                row.rhs *= &inv;
                self.pivots.insert(lead, row);
            }
        }
    }

    pub fn is_consistent(&self) -> bool {
        !self.inconsistent
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    /// A solution with every free unknown set to zero, or `None` when the
    /// system is inconsistent.
    pub fn solve(&self) -> Option<Vec<Rational>> {
        if self.inconsistent {
            return None;
        }
        let mut x = vec![Rational::zero(); self.unknowns];
        for (&col, row) in self.pivots.iter().rev() {
            let mut v = row.rhs.clone();
            for (&k, a) in row.coeffs.range(col + 1..) {
                if !x[k].is_zero() {
                    v -= a * &x[k];
                }
            }
            x[col] = v;
        }
        Some(x)
    }
}

/// Rank of a dense rational matrix.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let width = rows.first().map_or(0, Vec::len);
    let mut sys = LinearSystem::new(width);
    for r in rows {
        sys.push(
            r.iter()
                .enumerate()
                .filter(|(_, v)| !v.is_zero())
                .map(|(k, v)| (k, v.clone())),
            Rational::zero(),
        );
    }
    sys.rank()
}

/// All even monomials of total degree `<= degree` in `vars`, in a fixed order.
pub fn monomials_up_to(vars: &[Symbol], degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut current: Vec<(Symbol, u32)> = Vec::new();
    fn rec(
        vars: &[Symbol],
        left: u32,
        current: &mut Vec<(Symbol, u32)>,
        out: &mut Vec<Monomial>,
    ) {
        let Some((&first, rest)) = vars.split_first() else {
            let (_, m) = Monomial::from_parts(current, &[]).expect("even monomial");
            out.push(m);
            return;
        };
        for e in 0..=left {
            if e > 0 {
                current.push((first, e));
            }
            rec(rest, left - e, current, out);
            if e > 0 {
                current.pop();
            }
        }
    }
    rec(vars, degree, &mut current, &mut out);
    out.sort();
    out
}

/// Solves `sum_mu matrix[i][mu] * X^mu = rhs[i]` for polynomial `X^mu` of
/// total degree `<= degree` in `vars`.
pub fn solve_polynomial_system(
    matrix: &[Vec<Expr>],
    rhs: &[Expr],
    vars: &[Symbol],
    degree: u32,
) -> Option<Vec<Expr>> {
    assert_eq!(matrix.len(), rhs.len());
    let width = matrix.first().map_or(0, Vec::len);
    let basis = monomials_up_to(vars, degree);
    let nb = basis.len();
    let mut rows: HashMap<(usize, Monomial), Vec<(usize, Rational)>> = HashMap::new();
    for (i, row) in matrix.iter().enumerate() {
        for (mu, entry) in row.iter().enumerate() {
            for (t_idx, t) in basis.iter().enumerate() {
                let col = mu * nb + t_idx;
                for (m, c) in entry.terms() {
                    if let Some((neg, prod)) = t.mul(m) {
                        let c = if neg { -c.clone() } else { c.clone() };
                        rows.entry((i, prod)).or_default().push((col, c));
                    }
                }
            }
        }
    }
    let mut keys: BTreeSet<(usize, Monomial)> = rows.keys().cloned().collect();
    for (i, r) in rhs.iter().enumerate() {
        for (m, _) in r.terms() {
            keys.insert((i, m.clone()));
        }
    }
    let mut sys = LinearSystem::new(width * nb);
    for key in keys {
        let target = rhs[key.0]
            .terms()
            .find(|(m, _)| **m == key.1)
            .map(|(_, c)| c.clone())
            .unwrap_or_else(Rational::zero);
        let coeffs = rows.remove(&key).unwrap_or_default();
        sys.push(coeffs, target);
        if !sys.is_consistent() {
            return None;
        }
    }
    let x = sys.solve()?;
    let sol: Vec<Expr> = (0..width)
        .map(|mu| {
            basis
                .iter()
                .enumerate()
                .map(|(t_idx, t)| Expr::term(x[mu * nb + t_idx].clone(), t.clone()))
                .sum()
        })
        .collect();
    // Back-substitution guards against a bad ansatz expansion.
    for (i, row) in matrix.iter().enumerate() {
        let lhs: Expr = row.iter().zip(&sol).map(|(a, x)| a * x).sum();
        if lhs != rhs[i] {
            return None;
        }
    }
    Some(sol)
}

/// Even symbols appearing anywhere in the system, in global order.
pub fn system_variables(matrix: &[Vec<Expr>], rhs: &[Expr]) -> Vec<Symbol> {
    let mut vars = BTreeSet::new();
    for e in matrix.iter().flatten().chain(rhs) {
        vars.extend(e.symbols().into_iter().filter(|s| !s.is_odd()));
    }
    vars.into_iter().collect()
}

/// Tries degree bounds `min..=max` in turn and returns the first solution.
pub fn solve_polynomial_system_searching(
    matrix: &[Vec<Expr>],
    rhs: &[Expr],
    min_degree: u32,
    max_degree: u32,
) -> Option<Vec<Expr>> {
    let vars = system_variables(matrix, rhs);
    (min_degree..=max_degree).find_map(|d| solve_polynomial_system(matrix, rhs, &vars, d))
}

/// Why [`solve_linear`] gave up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Unsolvable {
    /// An equation reduced to `0 = nonzero`, when elimination found one.
    pub row: Option<usize>,
}

/// Solves `matrix * x = rhs` over polynomials.
///
/// Gauss-Jordan elimination with nonzero constant pivots is tried first; it
/// is exact and cheap for the unit-triangular systems typical of constraint
/// generators. If it stalls on non-constant pivots the degree-bounded ansatz
/// takes over. Unpivoted unknowns are set to zero.
pub fn solve_linear(
    matrix: &[Vec<Expr>],
    rhs: &[Expr],
    max_degree: u32,
) -> Result<Vec<Expr>, Unsolvable> {
    assert_eq!(matrix.len(), rhs.len());
    let width = matrix.first().map_or(0, Vec::len);
    let mut rows: Vec<(Vec<Expr>, Expr)> = matrix
        .iter()
        .cloned()
        .zip(rhs.iter().cloned())
        .collect();
    let mut pivot_of_col: Vec<Option<usize>> = vec![None; width];
    let mut used = vec![false; rows.len()];
    loop {
        let found = (0..width)
            .filter(|&c| pivot_of_col[c].is_none())
            .find_map(|c| {
                (0..rows.len())
                    .filter(|&r| !used[r])
                    .find(|&r| rows[r].0[c].constant_value().is_some_and(|v| !v.is_zero()))
                    .map(|r| (r, c))
            });
        let Some((r, c)) = found else { break };
        let inv = Rational::one() / rows[r].0[c].constant_value().expect("constant pivot");
        let (pr, prhs) = {
            let (row, b) = &rows[r];
            (
                row.iter().map(|e| e.scale(&inv)).collect::<Vec<_>>(),
                b.scale(&inv),
            )
        };
        for (k, (row, b)) in rows.iter_mut().enumerate() {
            if k == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (e, p) in row.iter_mut().zip(&pr) {
                if !p.is_zero() {
                    *e -= &f * p;
                }
            }
            *b -= &f * &prhs;
        }
        rows[r] = (pr, prhs);
        used[r] = true;
        pivot_of_col[c] = Some(r);
    }
    let mut stalled = false;
    for (k, (row, b)) in rows.iter().enumerate() {
        if used[k] {
            continue;
        }
        if row.iter().all(Expr::is_zero) {
            if !b.is_zero() {
                return Err(Unsolvable { row: Some(k) });
            }
        } else {
            stalled = true;
        }
    }
    if stalled {
        return solve_polynomial_system_searching(matrix, rhs, 0, max_degree)
            .ok_or(Unsolvable { row: None });
    }
    let x: Vec<Expr> = pivot_of_col
        .iter()
        .map(|p| p.map_or_else(Expr::zero, |r| rows[r].1.clone()))
        .collect();
    for (i, row) in matrix.iter().enumerate() {
        let lhs: Expr = row.iter().zip(&x).map(|(a, x)| a * x).sum();
        if lhs != rhs[i] {
            return Err(Unsolvable { row: Some(i) });
        }
    }
    Ok(x)
}
