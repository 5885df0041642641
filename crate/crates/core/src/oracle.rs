//! Brute-force ground truth.
//!
//! Nothing here goes through the solver, the belief-propagation engine or the
//! cofunctor's own linear operators: constraint matrices, null spaces and
//! counting coefficients are rebuilt from the raw maps and order relation.
//! Only the loss definitions are shared.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{PairField, SectionVector};
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::gbp::RegionGraphProblem;
use crate::loss::{LocalLossFamily, LossKind};
use crate::poset::Poset;

/// Largest joint configuration space [`exact_gibbs`] will enumerate.
pub const MAX_STATES: usize = 1_000_000;
/// Largest search-space dimension for [`brute_force_min`].
pub const MAX_SEARCH_DIM: usize = 20;

const RESTARTS: usize = 20;
const MAX_STEPS: usize = 50_000;
const INITIAL_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub probs: DVector<f64>,
    pub z: f64,
    pub log_z: f64,
}

/// `p(x) = e^{-βH(x)} / Z` by enumeration, normalized with log-sum-exp.
pub fn exact_gibbs(h: &DVector<f64>, beta: f64) -> Result<ExactDistribution> {
    if h.len() > MAX_STATES {
        return Err(Error::Size {
            what: "joint configuration space".into(),
            got: h.len(),
            cap: MAX_STATES,
        });
    }
    if h.is_empty() {
        return Err(Error::Shape("empty configuration space".into()));
    }
    let e = h.map(|v| -beta * v);
    let m = e.max();
    if !m.is_finite() {
        return Err(Error::NumericalOverflow("non-finite energies".into()));
    }
    let s: f64 = e.iter().map(|v| (v - m).exp()).sum();
    let log_z = m + s.ln();
    let probs = e.map(|v| (v - log_z).exp());
    Ok(ExactDistribution {
        probs,
        z: log_z.exp(),
        log_z,
    })
}

/// `c(a)` from `Σ_{b ≥ a} c(b) = 1`, solved from the top down.
pub fn counting_numbers(p: &Poset) -> Vec<f64> {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    // elements with fewer strict upper bounds first
    order.sort_by_key(|&a| (0..n).filter(|&b| p.lt(a, b)).count());
    let mut c = vec![0.0; n];
    for &a in &order {
        let above: f64 = (0..n).filter(|&b| p.lt(a, b)).map(|b| c[b]).sum();
        c[a] = 1.0 - above;
    }
    c
}

fn joint_size(p: &RegionGraphProblem) -> Result<usize> {
    let mut size: usize = 1;
    for &k in p.cardinalities() {
        size = size.checked_mul(k).filter(|s| *s <= MAX_STATES).ok_or_else(|| Error::Size {
            what: "joint configuration space".into(),
            got: usize::MAX,
            cap: MAX_STATES,
        })?;
    }
    Ok(size)
}

/// For each joint configuration, the index of its restriction to `region`.
fn restriction(cards: &[usize], region: &[usize], joint: usize) -> Vec<usize> {
    let nv = cards.len();
    let mut out = Vec::with_capacity(joint);
    for x in 0..joint {
        // decode with the last variable fastest
        let mut rem = x;
        let mut digits = vec![0usize; nv];
        for i in (0..nv).rev() {
            digits[i] = rem % cards[i];
            rem /= cards[i];
        }
        let mut idx = 0;
        for &v in region {
            idx = idx * cards[v] + digits[v];
        }
        out.push(idx);
    }
    out
}

/// `Σ_a c(a) H_a`, each region's hamiltonian lifted to the joint space.
pub fn joint_hamiltonian(p: &RegionGraphProblem) -> Result<DVector<f64>> {
    let joint = joint_size(p)?;
    let c = counting_numbers(p.poset());
    let mut h = DVector::zeros(joint);
    for a in 0..p.poset().len() {
        if c[a] == 0.0 {
            continue;
        }
        let r = restriction(p.cardinalities(), p.region(a), joint);
        for (x, &i) in r.iter().enumerate() {
            h[x] += c[a] * p.hamiltonians()[a][i];
        }
    }
    Ok(h)
}

/// Marginals of a joint distribution on every region of `p`.
pub fn exact_marginals(d: &ExactDistribution, p: &RegionGraphProblem) -> Result<SectionVector> {
    let joint = joint_size(p)?;
    if d.probs.len() != joint {
        return Err(Error::Shape(format!(
            "distribution has {} states, the variables span {joint}",
            d.probs.len()
        )));
    }
    let mut blocks = Vec::with_capacity(p.poset().len());
    for a in 0..p.poset().len() {
        let size: usize = p.region(a).iter().map(|&v| p.cardinalities()[v]).product();
        let mut m = DVector::zeros(size);
        for (x, &i) in restriction(p.cardinalities(), p.region(a), joint).iter().enumerate() {
            m[i] += d.probs[x];
        }
        blocks.push(m);
    }
    Ok(SectionVector::from_blocks(blocks))
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_grad<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("step {h} must be positive")));
    }
    let mut g = DVector::zeros(x.len());
    let mut y = x.clone();
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let up = f(&y)?;
        y[i] = x[i] - h;
        let down = f(&y)?;
        y[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

/// Constraint rows `F^a_b x_a - x_b` built straight from the maps.
fn constraint_matrix(f: &Cofunctor) -> (DMatrix<f64>, Vec<usize>) {
    let mut offs = Vec::with_capacity(f.dims().len());
    let mut n = 0;
    for &d in f.dims() {
        offs.push(n);
        n += d;
    }
    let rows: usize = f.pairs().iter().map(|&(_, b)| f.dims()[b]).sum();
    let mut m = DMatrix::zeros(rows, n);
    let mut r = 0;
    for &(a, b) in f.pairs() {
        let k = f.map(a, b);
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                m[(r + i, offs[a] + j)] += k[(i, j)];
            }
            m[(r + i, offs[b] + i)] -= 1.0;
        }
        r += k.nrows();
    }
    (m, offs)
}

/// Mass rows `Σ_i x_a(i)` per element.
fn mass_rows(dims: &[usize], offs: &[usize]) -> DMatrix<f64> {
    let n: usize = dims.iter().sum();
    let mut m = DMatrix::zeros(dims.len(), n);
    for (a, &d) in dims.iter().enumerate() {
        for i in 0..d {
            m[(a, offs[a] + i)] = 1.0;
        }
    }
    m
}

/// Orthonormal basis of `ker m` from the eigenvectors of `mᵀm`.
fn kernel_basis(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let g = m.transpose() * m;
    let eig = SymmetricEigen::new(g);
    let top = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cut = 1e-9 * top.max(1.0);
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() <= cut).collect();
    let mut b = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        b.set_column(k, &eig.eigenvectors.column(i));
    }
    b
}

fn pinv_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = m.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(1.0);
    svd.solve(rhs, eps)
        .map_err(|e| Error::SingularSystem(e.to_string()))
}

/// Search space for [`brute_force_min`]: a feasible point and a basis of
/// feasible directions.
struct Affine {
    x0: DVector<f64>,
    basis: DMatrix<f64>,
    dims: Vec<usize>,
}

impl Affine {
    fn point(&self, z: &DVector<f64>) -> SectionVector {
        SectionVector::from_flat(&(&self.x0 + &self.basis * z), &self.dims)
    }
}

fn search_space(f: &Cofunctor, loss: &LocalLossFamily, simplex: bool) -> Result<Affine> {
    let dims = f.dims().to_vec();
    let (d, offs) = constraint_matrix(f);
    let n: usize = dims.iter().sum();
    let positive = matches!(loss.kind(), LossKind::FreeEnergy { .. });
    let (m, rhs, anchor) = if simplex {
        let mass = mass_rows(&dims, &offs);
        let m = DMatrix::from_fn(d.nrows() + mass.nrows(), n, |i, j| {
            if i < d.nrows() {
                d[(i, j)]
            } else {
                mass[(i - d.nrows(), j)]
            }
        });
        let mut rhs = DVector::zeros(m.nrows());
        for a in 0..dims.len() {
            rhs[d.nrows() + a] = 1.0;
        }
        let anchor = DVector::from_iterator(
            n,
            dims.iter().flat_map(|&k| std::iter::repeat_n(1.0 / k as f64, k)),
        );
        (m, rhs, anchor)
    } else {
        let anchor = if positive {
            DVector::from_element(n, 1.0)
        } else {
            DVector::zeros(n)
        };
        let rhs = DVector::zeros(d.nrows());
        (d, rhs, anchor)
    };
    let basis = kernel_basis(&m, n);
    if basis.ncols() > MAX_SEARCH_DIM {
        return Err(Error::Size {
            what: "search space dimension".into(),
            got: basis.ncols(),
            cap: MAX_SEARCH_DIM,
        });
    }
    // closest feasible point to the anchor
    let x0 = &anchor - pinv_solve(&m, &(&m * &anchor - &rhs))?;
    if (&m * &x0 - &rhs).amax() > 1e-9 {
        return Err(Error::Validation(vec![
            "the constraint set is empty".to_string(),
        ]));
    }
    if positive && x0.iter().any(|&v| v <= 0.0) {
        return Err(Error::Domain {
            element: "feasible set".into(),
            reason: "no strictly positive starting point found".into(),
        });
    }
    Ok(Affine { x0, basis, dims })
}

struct Objective<'a> {
    loss: &'a LocalLossFamily,
    c: Vec<f64>,
    space: Affine,
}

impl Objective<'_> {
    fn value(&self, z: &DVector<f64>) -> Option<f64> {
        let x = self.space.point(z);
        let mut v = 0.0;
        for (a, w) in self.c.iter().enumerate() {
            if *w != 0.0 {
                v += w * self.loss.value(a, &x[a]).ok()?;
            }
        }
        v.is_finite().then_some(v)
    }

    fn grad(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let x = self.space.point(z);
        let mut g = Vec::with_capacity(self.c.len());
        for (a, w) in self.c.iter().enumerate() {
            g.push(self.loss.grad(a, &x[a]).ok()? * *w);
        }
        let flat = SectionVector::from_blocks(g).flatten();
        Some(self.space.basis.tr_mul(&flat))
    }

    /// Gradient descent with step halving on non-decrease and mild growth on success.
    fn descend(&self, mut z: DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let mut v = self.value(&z)?;
        let mut step = INITIAL_STEP;
        for _ in 0..MAX_STEPS {
            let g = self.grad(&z)?;
            if g.norm() <= 1e-10 {
                break;
            }
            let mut moved = false;
            while step > 1e-18 {
                let cand = &z - &g * step;
                match self.value(&cand) {
                    Some(cv) if cv < v => {
                        z = cand;
                        v = cv;
                        step *= 1.5;
                        moved = true;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !moved {
                break;
            }
        }
        Some((z, v))
    }

    /// Newton steps with a difference Hessian of the reduced gradient.
    fn polish(&self, mut z: DVector<f64>, mut v: f64) -> (DVector<f64>, f64) {
        let k = z.len();
        for _ in 0..50 {
            let Some(g) = self.grad(&z) else { break };
            if g.norm() <= 1e-14 {
                break;
            }
            let h = 1e-6;
            let mut hess = DMatrix::zeros(k, k);
            let mut ok = true;
            for i in 0..k {
                let mut up = z.clone();
                up[i] += h;
                let mut down = z.clone();
                down[i] -= h;
                match (self.grad(&up), self.grad(&down)) {
                    (Some(gu), Some(gd)) => hess.set_column(i, &((gu - gd) / (2.0 * h))),
                    _ => ok = false,
                }
            }
            if !ok {
                break;
            }
            let hess = (&hess + hess.transpose()) * 0.5;
            let Some(chol) = hess.cholesky() else { break };
            let dir = chol.solve(&g);
            let mut t = 1.0;
            let mut improved = false;
            while t > 1e-8 {
                let cand = &z - &dir * t;
                if let (Some(cv), Some(cg)) = (self.value(&cand), self.grad(&cand)) {
                    if cv <= v + 1e-15 * v.abs().max(1.0) && cg.norm() < g.norm() {
                        z = cand;
                        v = cv;
                        improved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !improved {
                break;
            }
        }
        (z, v)
    }
}

/// Minimizes `Σ_a c(a) f_a(x_a)` over `lim F`, optionally intersected with
/// the per-element probability simplices, by gradient descent in null-space
/// coordinates from 20 seeded starts followed by Newton polishing.
///
/// Returns the best point and its value.
pub fn brute_force_min(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    simplex: bool,
    seed: u64,
) -> Result<(SectionVector, f64)> {
    loss.check_dims(f.dims())?;
    let space = search_space(f, loss, simplex)?;
    let obj = Objective {
        loss,
        c: counting_numbers(f.poset()),
        space,
    };
    let k = obj.space.basis.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for restart in 0..RESTARTS {
        let mut z0 = DVector::zeros(k);
        if restart > 0 {
            let dir = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
            // shrink until the start is inside the domain
            let mut s = 1.0;
            while s > 1e-6 && obj.value(&(&dir * s)).is_none() {
                s *= 0.5;
            }
            z0 = dir * s;
        }
        let Some((z, v)) = obj.descend(z0) else { continue };
        let (z, v) = obj.polish(z, v);
        if best.as_ref().is_none_or(|(_, bv)| v < *bv) {
            best = Some((z, v));
        }
    }
    let (z, v) = best.ok_or_else(|| Error::Domain {
        element: "feasible set".into(),
        reason: "every restart left the loss domain".into(),
    })?;
    Ok((obj.space.point(&z), v))
}

/// Closed-form minimizer of a quadratic regionalized loss over `lim F`.
///
/// Solves the reduced system `Bᵀ C A B z = Bᵀ C b` in null-space
/// coordinates, then recovers multipliers `ν` from
/// `C A x - C b + δᵀ ν = 0` in least squares.
pub fn kkt_solve_quadratic(f: &Cofunctor, loss: &LocalLossFamily) -> Result<(SectionVector, PairField)> {
    let LossKind::Quadratic { a: mats, b: vecs, .. } = loss.kind() else {
        return Err(Error::InvalidLoss("the KKT oracle needs a quadratic family".into()));
    };
    loss.check_dims(f.dims())?;
    let (d, offs) = constraint_matrix(f);
    let n: usize = f.dims().iter().sum();
    let c = counting_numbers(f.poset());
    let mut ca = DMatrix::zeros(n, n);
    let mut cb = DVector::zeros(n);
    for (e, &w) in c.iter().enumerate() {
        let k = f.dims()[e];
        ca.view_mut((offs[e], offs[e]), (k, k)).copy_from(&(&mats[e] * w));
        cb.rows_mut(offs[e], k).copy_from(&(&vecs[e] * w));
    }
    let basis = kernel_basis(&d, n);
    let x = if basis.ncols() == 0 {
        DVector::zeros(n)
    } else {
        let h = basis.transpose() * &ca * &basis;
        let h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h.clone());
        let big = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let small = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if big == 0.0 || small <= 1e-12 * big {
            return Err(Error::SingularSystem(
                "the reduced quadratic form is singular on the constraint space".into(),
            ));
        }
        let rhs = basis.tr_mul(&cb);
        let z = h
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("reduced system".into()))?;
        &basis * z
    };
    let resid = &cb - &ca * &x;
    let nu = if d.nrows() == 0 {
        DVector::zeros(0)
    } else {
        pinv_solve(&d.transpose(), &resid)?
    };
    Ok((
        SectionVector::from_flat(&x, f.dims()),
        PairField::from_flat(&nu, &f.pair_dims()),
    ))
}
