//! Block vectors over the elements (or strict pairs) of a poset.

use std::fmt;
use std::marker::PhantomData;
use std::ops::{Index, IndexMut};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Marker for elements of `⊕_a F(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Primal;
/// Marker for elements of `⊕_a F(a)*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dual;
/// Marker for pair-indexed data, one block per strict pair `b < a` living in `F(b)` or `F(b)*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair;

/// A list of real vectors, one per element or pair.
pub struct Blocks<K> {
    blocks: Vec<DVector<f64>>,
    _kind: PhantomData<K>,
}

pub type SectionVector = Blocks<Primal>;
pub type DualVector = Blocks<Dual>;
pub type PairField = Blocks<Pair>;

impl<K> Clone for Blocks<K> {
    fn clone(&self) -> Self {
        Self::from_blocks(self.blocks.clone())
    }
}

impl<K> PartialEq for Blocks<K> {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl<K> fmt::Debug for Blocks<K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.blocks.iter().map(|b| b.as_slice()))
            .finish()
    }
}

impl<K> Blocks<K> {
    pub fn from_blocks(blocks: Vec<DVector<f64>>) -> Self {
        Blocks {
            blocks,
            _kind: PhantomData,
        }
    }

    pub fn from_vecs(blocks: Vec<Vec<f64>>) -> Self {
        Self::from_blocks(blocks.into_iter().map(DVector::from_vec).collect())
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::from_blocks(dims.iter().map(|&d| DVector::zeros(d)).collect())
    }

    pub fn from_flat(flat: &DVector<f64>, dims: &[usize]) -> Self {
        let mut off = 0;
        let mut blocks = Vec::with_capacity(dims.len());
        for &d in dims {
            blocks.push(flat.rows(off, d).into_owned());
            off += d;
        }
        Self::from_blocks(blocks)
    }

    pub fn flatten(&self) -> DVector<f64> {
        let n = self.total_len();
        let mut out = DVector::zeros(n);
        let mut off = 0;
        for b in &self.blocks {
            out.rows_mut(off, b.len()).copy_from(b);
            off += b.len();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<DVector<f64>> {
        self.blocks
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DVector<f64>> {
        self.blocks.iter()
    }

    pub fn check_dims(&self, dims: &[usize], what: &str) -> Result<()> {
        if self.blocks.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{what}: expected {} blocks, got {}",
                dims.len(),
                self.blocks.len()
            )));
        }
        for (i, (b, &d)) in self.blocks.iter().zip(dims).enumerate() {
            if b.len() != d {
                return Err(Error::Shape(format!(
                    "{what}: block {i} has length {}, expected {d}",
                    b.len()
                )));
            }
        }
        Ok(())
    }

    /// Standard pairing `Σ_i ⟨x_i, y_i⟩`.
    pub fn dot<L>(&self, other: &Blocks<L>) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.amax()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_blocks(self.blocks.iter().map(|b| b * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_blocks(self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_blocks(self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self::from_blocks(
            self.blocks
                .iter()
                .zip(&other.blocks)
                .map(|(a, b)| a + b * s)
                .collect(),
        )
    }

    /// Same numbers, reinterpreted as a different kind of block vector.
    pub fn cast<L>(self) -> Blocks<L> {
        Blocks::from_blocks(self.blocks)
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.blocks.iter().map(|b| b.iter().copied().collect()).collect()
    }
}

impl<K> Index<usize> for Blocks<K> {
    type Output = DVector<f64>;
    fn index(&self, i: usize) -> &DVector<f64> {
        &self.blocks[i]
    }
}

impl<K> IndexMut<usize> for Blocks<K> {
    fn index_mut(&mut self, i: usize) -> &mut DVector<f64> {
        &mut self.blocks[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_roundtrip() {
        let v = SectionVector::from_vecs(vec![vec![1.0, 2.0], vec![], vec![3.0]]);
        let flat = v.flatten();
        assert_eq!(flat.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(SectionVector::from_flat(&flat, &v.dims()), v);
    }

    #[test]
    fn norms() {
        let v = PairField::from_vecs(vec![vec![3.0], vec![-4.0]]);
        assert_eq!(v.norm(), 5.0);
        assert_eq!(v.sup_norm(), 4.0);
        assert!(v.check_dims(&[1, 2], "v").is_err());
    }
}
