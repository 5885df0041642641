//! Cofunctors from a finite poset to finite-dimensional real vector spaces.
//!
//! For every strict pair `b < a` a [`Cofunctor`] carries a `dims(b) × dims(a)`
//! matrix `F^a_b`. On top of that this module provides the constraint map
//! `δ(v)(a, b) = F^a_b v_a - v_b`, its adjoint `d`, the dual zeta and Möbius
//! operators, an orthonormal basis of `lim F = ker δ`, and the stationarity
//! residual that certifies constrained critical points.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::blocks::{DualVector, PairField, SectionVector};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, nullspace};
use crate::poset::Poset;

/// Entrywise tolerance for composition checks on supplied matrices.
pub const FUNCTORIALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Cofunctor {
    poset: Poset,
    dims: Vec<usize>,
    /// One map per strict pair, indexed like `poset.strict_pairs()`.
    maps: Vec<DMatrix<f64>>,
    limit: OnceLock<DMatrix<f64>>,
    normalized: OnceLock<DMatrix<f64>>,
}

/// A chain `lower < middle < upper` whose composite disagrees with the direct map.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub upper: String,
    pub middle: String,
    pub lower: String,
    pub max_error: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "F[{m}->{l}] * F[{u}->{m}] differs from F[{u}->{l}] by {e:.3e}",
            u = self.upper,
            m = self.middle,
            l = self.lower,
            e = self.max_error
        )
    }
}

impl Cofunctor {
    /// Builds a cofunctor from maps keyed by `(upper, lower)` index pairs.
    ///
    /// Covering pairs must be supplied. A missing non-covering map is filled
    /// in by composing through an intermediate element.
    pub fn new(
        poset: Poset,
        dims: Vec<usize>,
        mut maps: BTreeMap<(usize, usize), DMatrix<f64>>,
    ) -> Result<Self> {
        if dims.len() != poset.len() {
            return Err(Error::Shape(format!(
                "{} dimensions for {} elements",
                dims.len(),
                poset.len()
            )));
        }
        if let Some(a) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "element `{}` has dimension 0",
                poset.name(a)
            )));
        }
        for &(a, b) in maps.keys() {
            if a >= poset.len() || b >= poset.len() || !poset.lt(b, a) {
                return Err(Error::Shape(format!(
                    "map given for a pair that is not strictly ordered: {a} -> {b}"
                )));
            }
        }
        // Fill pairs from short intervals to long ones so composites exist.
        let mut order: Vec<(usize, usize)> = poset.strict_pairs().to_vec();
        let interval = |&(a, b): &(usize, usize)| {
            (0..poset.len())
                .filter(|&c| poset.leq(b, c) && poset.leq(c, a))
                .count()
        };
        order.sort_by_key(|p| (interval(p), *p));
        for (a, b) in order {
            if let Some(m) = maps.get(&(a, b)) {
                if m.shape() != (dims[b], dims[a]) {
                    return Err(Error::Shape(format!(
                        "map {} -> {} has shape {:?}, expected ({}, {})",
                        poset.name(a),
                        poset.name(b),
                        m.shape(),
                        dims[b],
                        dims[a]
                    )));
                }
                continue;
            }
            let mid = (0..poset.len()).find(|&c| poset.lt(b, c) && poset.lt(c, a));
            match mid {
                Some(c) => {
                    let composed = &maps[&(c, b)] * &maps[&(a, c)];
                    maps.insert((a, b), composed);
                }
                None => {
                    return Err(Error::Shape(format!(
                        "missing map for covering pair {} -> {}",
                        poset.name(a),
                        poset.name(b)
                    )))
                }
            }
        }
        let list = poset
            .strict_pairs()
            .iter()
            .map(|p| maps.remove(p).expect("filled above"))
            .collect();
        Ok(Cofunctor {
            poset,
            dims,
            maps: list,
            limit: OnceLock::new(),
            normalized: OnceLock::new(),
        })
    }

    /// Builds every map from a closure `(upper, lower) -> matrix`.
    pub fn from_fn(
        poset: Poset,
        dims: Vec<usize>,
        mut f: impl FnMut(usize, usize) -> DMatrix<f64>,
    ) -> Result<Self> {
        let maps = poset
            .strict_pairs()
            .iter()
            .map(|&(a, b)| ((a, b), f(a, b)))
            .collect();
        Self::new(poset, dims, maps)
    }

    pub fn poset(&self) -> &Poset {
        &self.poset
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Dimensions of pair-indexed data: `dims(b)` for each strict pair `(a, b)`.
    pub fn pair_dims(&self) -> Vec<usize> {
        self.poset
            .strict_pairs()
            .iter()
            .map(|&(_, b)| self.dims[b])
            .collect()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        self.poset.strict_pairs()
    }

    /// `F^a_b` for `b < a`.
    pub fn map(&self, a: usize, b: usize) -> &DMatrix<f64> {
        let p = self
            .poset
            .pair_index(a, b)
            .unwrap_or_else(|| panic!("no strict pair {a} -> {b}"));
        &self.maps[p]
    }

    pub fn maps(&self) -> &[DMatrix<f64>] {
        &self.maps
    }

    pub fn zero_section(&self) -> SectionVector {
        SectionVector::zeros(&self.dims)
    }

    pub fn zero_dual(&self) -> DualVector {
        DualVector::zeros(&self.dims)
    }

    pub fn zero_pairs(&self) -> PairField {
        PairField::zeros(&self.pair_dims())
    }

    /// All chains `c < b < a` whose composite differs from `F^a_c` by more
    /// than [`FUNCTORIALITY_TOL`] in some entry.
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with_tol(FUNCTORIALITY_TOL)
    }

    pub fn validate_with_tol(&self, tol: f64) -> Vec<Violation> {
        let p = &self.poset;
        let mut out = Vec::new();
        for &(a, b) in p.strict_pairs() {
            for c in 0..p.len() {
                if !p.lt(c, b) {
                    continue;
                }
                let composite = self.map(b, c) * self.map(a, b);
                let err = max_abs(&(composite - self.map(a, c)));
                if !(err <= tol) {
                    out.push(Violation {
                        upper: p.name(a).to_string(),
                        middle: p.name(b).to_string(),
                        lower: p.name(c).to_string(),
                        max_error: err,
                    });
                }
            }
        }
        out
    }

    /// Largest deviation from the mass identity `⟨1_b| F^a_b = ⟨1_a|`.
    pub fn max_mass_defect(&self) -> f64 {
        self.maps
            .iter()
            .flat_map(|m| m.column_iter().map(|c| (c.sum() - 1.0).abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    /// `δ(v)(a, b) = F^a_b v_a - v_b`.
    pub fn delta(&self, v: &SectionVector) -> Result<PairField> {
        v.check_dims(&self.dims, "section")?;
        let blocks = self
            .pairs()
            .iter()
            .zip(&self.maps)
            .map(|(&(a, b), m)| m * &v[a] - &v[b])
            .collect();
        Ok(PairField::from_blocks(blocks))
    }

    /// Adjoint of [`Cofunctor::delta`]:
    /// `d l(a) = Σ_{b < a} (F^a_b)ᵀ l_{a→b} - Σ_{b > a} l_{b→a}`.
    pub fn dual_d(&self, l: &PairField) -> Result<DualVector> {
        l.check_dims(&self.pair_dims(), "multipliers")?;
        let mut out = self.zero_dual();
        for (p, (&(a, b), m)) in self.pairs().iter().zip(&self.maps).enumerate() {
            out[a] += m.tr_mul(&l[p]);
            out[b] -= &l[p];
        }
        Ok(out)
    }

    /// `ζ(y)(a) = Σ_{b <= a} (F^a_b)ᵀ y_b`.
    pub fn zeta_dual(&self, y: &DualVector) -> Result<DualVector> {
        y.check_dims(&self.dims, "dual vector")?;
        let mut out = y.clone();
        for (&(a, b), m) in self.pairs().iter().zip(&self.maps) {
            out[a] += m.tr_mul(&y[b]);
        }
        Ok(out)
    }

    /// `μ(y)(a) = Σ_{b <= a} μ(a, b) (F^a_b)ᵀ y_b`, the inverse of [`Cofunctor::zeta_dual`].
    pub fn mobius_dual(&self, y: &DualVector) -> Result<DualVector> {
        y.check_dims(&self.dims, "dual vector")?;
        let mut out = y.clone();
        for (&(a, b), m) in self.pairs().iter().zip(&self.maps) {
            let mu = self.poset.mobius_or_zero(a, b);
            if mu != 0 {
                out[a] += m.tr_mul(&y[b]) * mu as f64;
            }
        }
        Ok(out)
    }

    fn offsets(dims: &[usize]) -> Vec<usize> {
        let mut off = Vec::with_capacity(dims.len());
        let mut s = 0;
        for &d in dims {
            off.push(s);
            s += d;
        }
        off
    }

    /// Dense matrix of `δ`, rows grouped by pair, columns by element.
    pub fn delta_matrix(&self) -> DMatrix<f64> {
        let col_off = Self::offsets(&self.dims);
        let pd = self.pair_dims();
        let row_off = Self::offsets(&pd);
        let mut d = DMatrix::zeros(pd.iter().sum(), self.total_dim());
        for (p, (&(a, b), m)) in self.pairs().iter().zip(&self.maps).enumerate() {
            d.view_mut((row_off[p], col_off[a]), m.shape()).copy_from(m);
            for i in 0..self.dims[b] {
                d[(row_off[p] + i, col_off[b] + i)] -= 1.0;
            }
        }
        d
    }

    /// Dense matrix of [`Cofunctor::zeta_dual`].
    pub fn zeta_dual_matrix(&self) -> DMatrix<f64> {
        let off = Self::offsets(&self.dims);
        let n = self.total_dim();
        let mut z = DMatrix::identity(n, n);
        for (&(a, b), m) in self.pairs().iter().zip(&self.maps) {
            z.view_mut((off[a], off[b]), (self.dims[a], self.dims[b]))
                .copy_from(&m.transpose());
        }
        z
    }

    /// Orthonormal basis of `lim F = ker δ`, as columns of a `total_dim × k` matrix.
    pub fn limit_basis_matrix(&self) -> &DMatrix<f64> {
        self.limit.get_or_init(|| nullspace(&self.delta_matrix()))
    }

    /// Orthonormal basis of `lim F` as section vectors.
    pub fn limit_basis(&self) -> Vec<SectionVector> {
        self.limit_basis_matrix()
            .column_iter()
            .map(|c| SectionVector::from_flat(&c.into_owned(), &self.dims))
            .collect()
    }

    /// Orthonormal basis of `ker δ ∩ {v : Σ_i v_a(i) = 0 for every a}`, the
    /// tangent space of `lim F` intersected with per-element simplices.
    pub fn normalized_tangent_matrix(&self) -> &DMatrix<f64> {
        self.normalized.get_or_init(|| {
            let d = self.delta_matrix();
            let n = self.total_dim();
            let k = self.dims.len();
            let mut stacked = DMatrix::zeros(d.nrows() + k, n);
            stacked.rows_mut(0, d.nrows()).copy_from(&d);
            let off = Self::offsets(&self.dims);
            for a in 0..k {
                for i in 0..self.dims[a] {
                    stacked[(d.nrows() + a, off[a] + i)] = 1.0;
                }
            }
            nullspace(&stacked)
        })
    }

    /// Norm of the restriction of `μ(y)` to `lim F`; zero exactly when a
    /// point with differential `y` is a critical point over `lim F`.
    pub fn stationarity_residual(&self, y: &DualVector) -> Result<f64> {
        let m = self.mobius_dual(y)?.flatten();
        Ok((self.limit_basis_matrix().tr_mul(&m)).norm())
    }

    /// As [`Cofunctor::stationarity_residual`], restricted to directions that
    /// also preserve every element's total mass.
    pub fn stationarity_residual_normalized(&self, y: &DualVector) -> Result<f64> {
        let m = self.mobius_dual(y)?.flatten();
        Ok((self.normalized_tangent_matrix().tr_mul(&m)).norm())
    }

    /// Orthogonal projection of `v` onto `lim F`.
    pub fn project_to_limit(&self, v: &SectionVector) -> Result<SectionVector> {
        v.check_dims(&self.dims, "section")?;
        let b = self.limit_basis_matrix();
        let flat: DVector<f64> = b * b.tr_mul(&v.flatten());
        Ok(SectionVector::from_flat(&flat, &self.dims))
    }
}
