use super::symbol::{Parity, Symbol};

/// A power product of even symbols times an ordered product of distinct odd
/// symbols. Both parts are kept sorted by the global symbol order.
///
/// Monomials are ordered by antighost number, then total degree, then
/// lexicographically.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    antighost: u32,
    degree: u32,
    even: Vec<(Symbol, u32)>,
    odd: Vec<Symbol>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(s: Symbol) -> Self {
        if s.is_odd() {
            Monomial::build(Vec::new(), vec![s])
        } else {
            Monomial::build(vec![(s, 1)], Vec::new())
        }
    }

    fn build(even: Vec<(Symbol, u32)>, odd: Vec<Symbol>) -> Self {
        let antighost = even
            .iter()
            .map(|&(s, e)| s.antighost_number() * e)
            .chain(odd.iter().map(|s| s.antighost_number()))
            .sum();
        let degree = even.iter().map(|&(_, e)| e).sum::<u32>() + odd.len() as u32;
        Monomial {
            antighost,
            degree,
            even,
            odd,
        }
    }

    /// Builds a monomial from raw parts, normalizing the odd part.
    /// Returns the sign of the reordering, or `None` if an odd symbol repeats.
    pub fn from_parts(even: &[(Symbol, u32)], odd: &[Symbol]) -> Option<(bool, Monomial)> {
        let mut acc = Monomial::one();
        let mut negative = false;
        for &(s, e) in even {
            debug_assert!(!s.is_odd());
            if e > 0 {
                let (neg, m) = acc.mul(&Monomial::var(s).pow_even(e))?;
                negative ^= neg;
                acc = m;
            }
        }
        for &s in odd {
            debug_assert!(s.is_odd());
            let (neg, m) = acc.mul(&Monomial::var(s))?;
            negative ^= neg;
            acc = m;
        }
        Some((negative, acc))
    }

    fn pow_even(self, e: u32) -> Self {
        let even = self.even.into_iter().map(|(s, k)| (s, k * e)).collect();
        Monomial::build(even, self.odd)
    }

    pub fn even(&self) -> &[(Symbol, u32)] {
        &self.even
    }

    pub fn odd(&self) -> &[Symbol] {
        &self.odd
    }

    pub fn is_one(&self) -> bool {
        self.even.is_empty() && self.odd.is_empty()
    }

    pub fn parity(&self) -> Parity {
        Parity::from_odd(self.odd.len() % 2 == 1)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn ghost_number(&self) -> i32 {
        self.symbols().map(|(s, e)| s.ghost_number() * e as i32).sum()
    }

    pub fn antighost_number(&self) -> u32 {
        self.antighost
    }

    /// Every symbol with its exponent.
    pub fn symbols(&self) -> impl Iterator<Item = (Symbol, u32)> + '_ {
        self.even
            .iter()
            .copied()
            .chain(self.odd.iter().map(|&s| (s, 1)))
    }

    pub fn power_of(&self, s: Symbol) -> u32 {
        if s.is_odd() {
            u32::from(self.odd.contains(&s))
        } else {
            self.even
                .binary_search_by(|probe| probe.0.cmp(&s))
                .map(|k| self.even[k].1)
                .unwrap_or(0)
        }
    }

    /// Product with the sign picked up by reordering odd factors.
    /// `None` when the product vanishes by nilpotency.
    pub fn mul(&self, other: &Monomial) -> Option<(bool, Monomial)> {
        let mut odd = Vec::with_capacity(self.odd.len() + other.odd.len());
        let (a, b) = (&self.odd, &other.odd);
        let (mut i, mut j) = (0, 0);
        let mut negative = false;
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    odd.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    // b[j] moves left past every remaining factor of `a`.
                    if (a.len() - i) % 2 == 1 {
                        negative = !negative;
                    }
                    odd.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => return None,
            }
        }
        odd.extend_from_slice(&a[i..]);
        odd.extend_from_slice(&b[j..]);

        let mut even = Vec::with_capacity(self.even.len() + other.even.len());
        let (a, b) = (&self.even, &other.even);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    even.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    even.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    even.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        even.extend_from_slice(&a[i..]);
        even.extend_from_slice(&b[j..]);
        Some((negative, Monomial::build(even, odd)))
    }

    /// Removes one power of an even symbol; returns the old exponent.
    pub(crate) fn lower_even(&self, s: Symbol) -> Option<(u32, Monomial)> {
        let k = self.even.binary_search_by(|probe| probe.0.cmp(&s)).ok()?;
        let e = self.even[k].1;
        let mut even = self.even.clone();
        if e == 1 {
            even.remove(k);
        } else {
            even[k].1 -= 1;
        }
        Some((e, Monomial::build(even, self.odd.clone())))
    }

    /// Removes an odd symbol; returns its position in the odd part.
    pub(crate) fn remove_odd(&self, s: Symbol) -> Option<(usize, Monomial)> {
        let k = self.odd.binary_search(&s).ok()?;
        let mut odd = self.odd.clone();
        odd.remove(k);
        Some((k, Monomial::build(self.even.clone(), odd)))
    }

    /// Splits into `(rest, selected)` with `self = sign * rest * selected`,
    /// where `selected` holds the symbols accepted by `pick`.
    pub fn split(&self, pick: impl Fn(Symbol) -> bool) -> (bool, Monomial, Monomial) {
        let (mut rest_even, mut sel_even) = (Vec::new(), Vec::new());
        let (mut rest_odd, mut sel_odd) = (Vec::new(), Vec::new());
        for &(s, e) in &self.even {
            if pick(s) {
                sel_even.push((s, e));
            } else {
                rest_even.push((s, e));
            }
        }
        // Moving each selected odd symbol to the right past the unselected
        // odd symbols that follow it.
        let mut negative = false;
        let mut unselected_after = self.odd.iter().filter(|&&s| !pick(s)).count();
        for &s in &self.odd {
            if pick(s) {
                if unselected_after % 2 == 1 {
                    negative = !negative;
                }
                sel_odd.push(s);
            } else {
                unselected_after -= 1;
                rest_odd.push(s);
            }
        }
        (
            negative,
            Monomial::build(rest_even, rest_odd),
            Monomial::build(sel_even, sel_odd),
        )
    }
}
