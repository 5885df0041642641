//! Finite posets with exact incidence-algebra data.
//!
//! A [`Poset`] stores the reflexive-transitive closure of the relations it was
//! built from, the Möbius function of every comparable pair and the counting
//! coefficients `c(a) = Σ_{b ≥ a} μ(b, a)` that weight local losses.
//! Everything is computed once, in integer arithmetic, at construction.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poset {
    elements: Vec<String>,
    index: HashMap<String, usize>,
    /// `leq[a][b]` iff `b <= a`.
    leq: Vec<Vec<bool>>,
    /// `mobius[a][b] = μ(a, b)` when `b <= a`, zero otherwise.
    mobius: Vec<Vec<i64>>,
    counting: Vec<i64>,
    /// Strict comparable pairs `(a, b)` with `b < a`, sorted by `(a, b)`.
    pairs: Vec<(usize, usize)>,
    pair_index: HashMap<(usize, usize), usize>,
}

/// Shortest chain `from <= ... <= to` along the generating pairs.
fn upward_path(n: usize, pairs: &[(usize, usize)], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([from]);
    prev[from] = from;
    while let Some(x) = queue.pop_front() {
        if x == to {
            break;
        }
        for &(lo, up) in pairs {
            if lo == x && prev[up] == usize::MAX {
                prev[up] = x;
                queue.push_back(up);
            }
        }
    }
    let mut path = vec![to];
    let mut x = to;
    while x != from {
        x = prev[x];
        path.push(x);
    }
    path.reverse();
    path
}

impl Poset {
    /// Builds the poset generated by `pairs`, each given as `(lower, upper)`.
    ///
    /// Pairs need not be covers; the closure is computed here. Reflexive pairs
    /// are accepted and ignored.
    pub fn new<S: AsRef<str>>(elements: &[S], pairs: &[(S, S)]) -> Result<Self> {
        let elements: Vec<String> = elements.iter().map(|e| e.as_ref().to_string()).collect();
        let mut index = HashMap::with_capacity(elements.len());
        for (i, e) in elements.iter().enumerate() {
            if index.insert(e.clone(), i).is_some() {
                return Err(Error::DuplicateElement(e.clone()));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnknownElement(name.to_string()))
        };
        let mut idx_pairs = Vec::with_capacity(pairs.len());
        for (lo, up) in pairs {
            idx_pairs.push((lookup(lo.as_ref())?, lookup(up.as_ref())?));
        }
        Self::from_indices(elements, index, &idx_pairs)
    }

    /// Same as [`Poset::new`] with elements named `"0"`, `"1"`, ... and pairs
    /// given as `(lower, upper)` indices.
    pub fn from_index_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let elements: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let index = elements.iter().cloned().zip(0..).collect();
        for &(lo, up) in pairs {
            if lo >= n || up >= n {
                return Err(Error::UnknownElement(lo.max(up).to_string()));
            }
        }
        Self::from_indices(elements, index, pairs)
    }

    fn from_indices(
        elements: Vec<String>,
        index: HashMap<String, usize>,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let n = elements.len();
        let mut leq = vec![vec![false; n]; n];
        for (a, row) in leq.iter_mut().enumerate() {
            row[a] = true;
        }
        for &(lo, up) in pairs {
            leq[up][lo] = true;
        }
        // Warshall closure.
        for k in 0..n {
            for a in 0..n {
                if leq[a][k] {
                    for b in 0..n {
                        if leq[k][b] {
                            leq[a][b] = true;
                        }
                    }
                }
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                if leq[a][b] && leq[b][a] {
                    let mut cycle = upward_path(n, pairs, a, b);
                    cycle.extend(upward_path(n, pairs, b, a).into_iter().skip(1));
                    return Err(Error::Cycle(
                        cycle.into_iter().map(|i| elements[i].clone()).collect(),
                    ));
                }
            }
        }

        let down_size: Vec<usize> = leq.iter().map(|r| r.iter().filter(|&&x| x).count()).collect();
        // Linear extension: b < c implies down_size[b] < down_size[c].
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (down_size[i], i));

        let mut mobius = vec![vec![0i64; n]; n];
        for a in 0..n {
            mobius[a][a] = 1;
            // μ(a, b) = -Σ_{b < c <= a} μ(a, c), visiting b from the top down.
            for &b in order.iter().rev() {
                if b == a || !leq[a][b] {
                    continue;
                }
                let mut s = 0i64;
                for c in 0..n {
                    if c != b && leq[a][c] && leq[c][b] {
                        s += mobius[a][c];
                    }
                }
                mobius[a][b] = -s;
            }
        }

        let counting = (0..n)
            .map(|a| (0..n).filter(|&b| leq[b][a]).map(|b| mobius[b][a]).sum())
            .collect();

        let mut strict = Vec::new();
        for (a, row) in leq.iter().enumerate() {
            for (b, &le) in row.iter().enumerate() {
                if le && a != b {
                    strict.push((a, b));
                }
            }
        }
        let pair_index = strict.iter().copied().zip(0..).collect();

        Ok(Poset {
            elements,
            index,
            leq,
            mobius,
            counting,
            pairs: strict,
            pair_index,
        })
    }

    /// Powerset of `{1..=k}` ordered by inclusion. Elements are named by their
    /// sorted comma-joined members (`""` for the empty set) and indexed by
    /// bitmask.
    pub fn powerset(k: usize) -> Self {
        let n = 1usize << k;
        let names: Vec<String> = (0..n).map(|m| subset_name(m, k)).collect();
        let mut pairs = Vec::new();
        for a in 0..n {
            for i in 0..k {
                if a & (1 << i) != 0 {
                    pairs.push((a & !(1 << i), a));
                }
            }
        }
        let index = names.iter().cloned().zip(0..).collect();
        Self::from_indices(names, index, &pairs).expect("inclusion order is acyclic")
    }

    /// Chain `0 < 1 < ... < n-1`.
    pub fn chain(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        Self::from_index_pairs(n, &pairs).expect("chain is acyclic")
    }

    pub fn antichain(n: usize) -> Self {
        Self::from_index_pairs(n, &[]).expect("antichain is acyclic")
    }

    /// The same set with the order reversed.
    pub fn opposite(&self) -> Self {
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for &(a, b) in &self.pairs {
            pairs.push((a, b));
        }
        Self::from_indices(self.elements.clone(), self.index.clone(), &pairs)
            .expect("opposite of a poset is a poset")
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn name(&self, a: usize) -> &str {
        &self.elements[a]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownElement(name.to_string()))
    }

    /// `true` iff `b <= a`.
    pub fn leq(&self, b: usize, a: usize) -> bool {
        self.leq[a][b]
    }

    /// `true` iff `b < a`.
    pub fn lt(&self, b: usize, a: usize) -> bool {
        a != b && self.leq[a][b]
    }

    /// μ(a, b) for `b <= a`.
    pub fn mobius(&self, a: usize, b: usize) -> Result<i64> {
        if !self.leq[a][b] {
            return Err(Error::NotComparable {
                upper: self.elements[a].clone(),
                lower: self.elements[b].clone(),
            });
        }
        Ok(self.mobius[a][b])
    }

    /// μ(a, b), or zero when `b` is not below `a`.
    pub fn mobius_or_zero(&self, a: usize, b: usize) -> i64 {
        self.mobius[a][b]
    }

    pub fn mobius_by_name(&self, a: &str, b: &str) -> Result<i64> {
        self.mobius(self.index_of(a)?, self.index_of(b)?)
    }

    pub fn counting_coefficients(&self) -> &[i64] {
        &self.counting
    }

    pub fn counting(&self, a: usize) -> i64 {
        self.counting[a]
    }

    /// Strict pairs `(a, b)` with `b < a`, in a fixed order.
    pub fn strict_pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_index(&self, a: usize, b: usize) -> Option<usize> {
        self.pair_index.get(&(a, b)).copied()
    }

    /// Elements `b <= a` (including `a`), in index order.
    pub fn down_set(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.leq[a].iter().enumerate().filter(|(_, &x)| x).map(|(b, _)| b)
    }

    /// Elements `b >= a` (including `a`), in index order.
    pub fn up_set(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&b| self.leq[b][a])
    }

    /// `b < a` with nothing strictly between.
    pub fn covers(&self, b: usize, a: usize) -> bool {
        self.lt(b, a) && !(0..self.len()).any(|c| c != a && c != b && self.lt(b, c) && self.lt(c, a))
    }

    /// Unique maximum element, if there is one.
    pub fn maximum(&self) -> Option<usize> {
        (0..self.len()).find(|&a| (0..self.len()).all(|b| self.leq[a][b]))
    }

    /// Zeta matrix `Z[a][b] = 1` iff `b <= a`.
    pub fn zeta_matrix(&self) -> Vec<Vec<i64>> {
        self.leq
            .iter()
            .map(|r| r.iter().map(|&x| x as i64).collect())
            .collect()
    }

    /// Möbius matrix `M[a][b] = μ(a, b)`.
    pub fn mobius_matrix(&self) -> Vec<Vec<i64>> {
        self.mobius.clone()
    }
}

fn subset_name(mask: usize, k: usize) -> String {
    (0..k)
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| (i + 1).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton() {
        let p = Poset::new(&["a"], &[]).unwrap();
        assert_eq!(p.mobius(0, 0).unwrap(), 1);
        assert_eq!(p.counting_coefficients(), &[1]);
    }

    #[test]
    fn cycle_rejected() {
        let err = Poset::new(&["a", "b"], &[("b", "a"), ("a", "b")]).unwrap_err();
        assert!(matches!(err, Error::Cycle(_)));
    }

    #[test]
    fn long_cycle_rejected() {
        let err = Poset::new(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("c", "a")]).unwrap_err();
        assert_eq!(err, Error::Cycle(vec!["a".into(), "b".into(), "c".into(), "a".into()]));
    }

    #[test]
    fn unknown_and_duplicate() {
        assert_eq!(
            Poset::new(&["a"], &[("a", "z")]).unwrap_err(),
            Error::UnknownElement("z".into())
        );
        assert_eq!(
            Poset::new(&["a", "a"], &[]).unwrap_err(),
            Error::DuplicateElement("a".into())
        );
    }

    #[test]
    fn three_chain() {
        // c < b < a, indices 0 < 1 < 2
        let p = Poset::chain(3);
        assert_eq!(p.mobius(2, 1).unwrap(), -1);
        assert_eq!(p.mobius(2, 0).unwrap(), 0);
        assert_eq!(p.mobius(2, 2).unwrap(), 1);
        assert_eq!(p.counting_coefficients(), &[0, 0, 1]);
    }

    #[test]
    fn not_comparable() {
        let p = Poset::antichain(2);
        assert!(matches!(p.mobius(0, 1), Err(Error::NotComparable { .. })));
        assert_eq!(p.counting_coefficients(), &[1, 1]);
    }

    #[test]
    fn powerset_of_three() {
        let p = Poset::powerset(3);
        assert_eq!(p.mobius_by_name("1,2,3", "").unwrap(), -1);
        assert_eq!(p.mobius_by_name("1,2", "").unwrap(), 1);
        assert_eq!(p.mobius_by_name("1,3", "3").unwrap(), -1);
    }

    #[test]
    fn powerset_counting() {
        let p = Poset::powerset(2);
        assert_eq!(p.counting(p.index_of("1,2").unwrap()), 1);
        assert_eq!(p.counting(p.index_of("1").unwrap()), 0);
        assert_eq!(p.counting(p.index_of("2").unwrap()), 0);
        assert_eq!(p.counting(p.index_of("").unwrap()), 0);
    }

    #[test]
    fn top_with_two_children() {
        let p = Poset::new(&["1", "2", "1,2"], &[("1", "1,2"), ("2", "1,2")]).unwrap();
        assert_eq!(p.counting_coefficients(), &[0, 0, 1]);
    }

    #[test]
    fn closure_of_non_cover_pairs() {
        let p = Poset::new(&["a", "b", "c"], &[("a", "b"), ("b", "c")]).unwrap();
        assert!(p.leq(0, 2));
        assert!(p.covers(0, 1));
        assert!(!p.covers(0, 2));
        assert_eq!(p.strict_pairs(), &[(1, 0), (2, 0), (2, 1)]);
    }

    #[test]
    fn maximum_element() {
        assert_eq!(Poset::powerset(2).maximum(), Some(3));
        assert_eq!(Poset::antichain(2).maximum(), None);
    }
}
