use std::fmt::Write;

use crate::expr::Expr;

/// Dense multi-index array of expressions. Indices are 0-based in the API
/// and printed 1-based in keys such as `T[1][1][2]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    shape: Vec<usize>,
    data: Vec<Expr>,
}

impl Table {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Table {
            shape: shape.to_vec(),
            data: vec![Expr::zero(); len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Expr) -> Self {
        let mut t = Table::zeros(shape);
        for idx in t.indices() {
            let v = f(&idx);
            *t.get_mut(&idx) = v;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank");
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of range {n}");
            acc * n + i
        })
    }

    pub fn get(&self, idx: &[usize]) -> &Expr {
        &self.data[self.offset(idx)]
    }

    pub fn get_mut(&mut self, idx: &[usize]) -> &mut Expr {
        let k = self.offset(idx);
        &mut self.data[k]
    }

    pub fn set(&mut self, idx: &[usize], e: Expr) {
        *self.get_mut(idx) = e;
    }

    /// All multi-indices in row-major order.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.data.len());
        if self.shape.contains(&0) {
            return out;
        }
        let mut idx = vec![0; self.shape.len()];
        loop {
            out.push(idx.clone());
            let mut k = self.shape.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < self.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    pub fn nonzero(&self) -> Vec<(Vec<usize>, &Expr)> {
        self.indices()
            .into_iter()
            .zip(&self.data)
            .filter(|(_, e)| !e.is_zero())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Expr::is_zero)
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Table {
        Table {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &Expr> {
        self.data.iter()
    }
}

/// `name[i][j]...` with 1-based indices.
pub fn entry_key(name: &str, idx: &[usize]) -> String {
    let mut s = name.to_string();
    for i in idx {
        write!(s, "[{}]", i + 1).expect("writing to a String");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_and_keys() {
        let mut t = Table::zeros(&[2, 3]);
        t.set(&[1, 2], Expr::int(5));
        assert_eq!(t.indices().len(), 6);
        let nz = t.nonzero();
        assert_eq!(nz.len(), 1);
        assert_eq!(entry_key("C", &nz[0].0), "C[2][3]");
        assert!(!t.is_zero());
    }

    #[test]
    fn rank_zero_table_has_one_entry() {
        let t = Table::zeros(&[]);
        assert_eq!(t.indices(), vec![Vec::<usize>::new()]);
    }
}
