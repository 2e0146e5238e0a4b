//! Seeded generators shared by the integration tests.

#![allow(dead_code)]

use antifield::constraint_algebra::ModelSpec;
use antifield::expr::{rat, Expr, Symbol};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pool of at most six symbols: three even, three odd.
pub const POOL: [fn() -> Symbol; 6] = [
    || Symbol::q(1),
    || Symbol::q(2),
    || Symbol::p(1),
    || Symbol::ghost(1),
    || Symbol::ghost(2),
    || Symbol::qs(1),
];

/// A sum of up to four terms of degree at most four over [`POOL`].
pub fn random_expr(rng: &mut ChaCha8Rng) -> Expr {
    let terms = rng.gen_range(1..=4);
    (0..terms)
        .map(|_| {
            let degree = rng.gen_range(0..=4);
            let syms: Vec<Symbol> = (0..degree).map(|_| POOL[rng.gen_range(0..6)]()).collect();
            let c = rat(rng.gen_range(-9..=9), rng.gen_range(1..=4));
            Expr::product(&syms).scale(&c)
        })
        .sum()
}

/// Random linear form `a + sum b_i q_i` with small integer coefficients.
fn linear_in_q(rng: &mut ChaCha8Rng, n: u32) -> Expr {
    let mut e = Expr::int(rng.gen_range(-2..=2));
    for i in 1..=n {
        let b: i64 = [-1, 0, 0, 1, 2].choose(rng).copied().unwrap();
        e += Expr::var(Symbol::q(i)).scale(&rat(b, 1));
    }
    e
}

/// A generated model with constraints `G_a = sum_k A_ak(q) p_k`, where `A`
/// is unit upper triangular with entries linear in `q`. Coordinates
/// `1..=m` are pure gauge, the remaining ones are free particles.
pub struct LinearModel {
    pub seed: u64,
    pub spec: ModelSpec,
}

pub fn momentum_linear(seed: u64) -> LinearModel {
    let mut rng = rng(seed);
    let n: u32 = rng.gen_range(3..=4);
    let m: u32 = rng.gen_range(2..=3.min(n - 1));
    let mut g = Vec::new();
    for a in 1..=m {
        let mut ga = Expr::var(Symbol::p(a));
        for k in a + 1..=m {
            ga += &linear_in_q(&mut rng, n) * &Expr::var(Symbol::p(k));
        }
        g.push(ga);
    }
    let half = rat(1, 2);
    let h0: Expr = (m + 1..=n).map(|j| Expr::var(Symbol::p(j)).pow(2).scale(&half)).sum();
    let l0: Expr = (m + 1..=n).map(|j| Expr::var(Symbol::qd(j)).pow(2).scale(&half)).sum();
    let mut spec = ModelSpec::new(n, m, h0, g);
    spec.name = format!("linear-{seed}");
    spec.l0 = Some(l0);
    spec.degree_bound = Some(m + 1);
    LinearModel { seed, spec }
}
