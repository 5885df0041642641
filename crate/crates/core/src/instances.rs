//! Random and fixed problem instances for tests, examples and benchmarks.
//!
//! Random generators take a caller-owned RNG so that whole suites are
//! reproducible from one seed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::blocks::{PairField, SectionVector};
use crate::channels::KernelNetwork;
use crate::error::Result;
use crate::functor::Cofunctor;
use crate::gbp::RegionGraphProblem;
use crate::loss::{LocalLossFamily, LossKind};
use crate::poset::Poset;

/// Random order on `n` elements: each `i < j` (by index) is related with
/// probability `density`, then closed transitively.
pub fn random_poset<R: Rng>(rng: &mut R, n: usize, density: f64) -> Poset {
    let mut pairs = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.gen_bool(density) {
                pairs.push((i, j));
            }
        }
    }
    // relabel so that index order is not always a linear extension
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(i, j)| (perm[i], perm[j])).collect();
    Poset::from_index_pairs(n, &pairs).expect("index order is acyclic")
}

const FEATURES: usize = 4;

fn well_conditioned<R: Rng>(rng: &mut R, k: usize) -> DMatrix<f64> {
    DMatrix::identity(k, k) + DMatrix::from_fn(k, k, |_, _| rng.gen_range(-0.3..0.3) / k as f64)
}

/// Random cofunctor on `poset` with `dims(a) ≤ 4`.
///
/// Each element owns a set of up to four abstract features; an element sees
/// every feature of its down-set through a random invertible change of
/// basis, and maps forget features and change basis. Functoriality holds up
/// to rounding.
pub fn random_cofunctor<R: Rng>(rng: &mut R, poset: &Poset) -> Cofunctor {
    let n = poset.len();
    let own: Vec<u32> = (0..n)
        .map(|_| {
            let mut m = 1u32 << rng.gen_range(0..FEATURES);
            for k in 0..FEATURES {
                if rng.gen_bool(0.25) {
                    m |= 1 << k;
                }
            }
            m
        })
        .collect();
    let seen: Vec<Vec<usize>> = (0..n)
        .map(|a| {
            let m = poset.down_set(a).fold(0u32, |acc, b| acc | own[b]);
            (0..FEATURES).filter(|k| m & (1 << k) != 0).collect()
        })
        .collect();
    let dims: Vec<usize> = seen.iter().map(Vec::len).collect();
    let t: Vec<DMatrix<f64>> = dims.iter().map(|&k| well_conditioned(rng, k)).collect();
    let t_inv: Vec<DMatrix<f64>> = t
        .iter()
        .map(|m| m.clone().try_inverse().expect("diagonally dominant"))
        .collect();
    Cofunctor::from_fn(poset.clone(), dims.clone(), |a, b| {
        let mut sel = DMatrix::zeros(dims[b], dims[a]);
        for (i, feat) in seen[b].iter().enumerate() {
            let j = seen[a].iter().position(|x| x == feat).expect("down-set features");
            sel[(i, j)] = 1.0;
        }
        &t[b] * sel * &t_inv[a]
    })
    .expect("shapes agree by construction")
}

/// Symmetric matrix with eigenvalues drawn from `[1, 3]`.
pub fn random_spd<R: Rng>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(k, |_, _| rng.gen_range(1.0..3.0)));
    let a = &q * d * q.transpose();
    (&a + a.transpose()) * 0.5
}

pub fn random_quadratic<R: Rng>(rng: &mut R, dims: &[usize]) -> LocalLossFamily {
    let a = dims.iter().map(|&k| random_spd(rng, k)).collect();
    let b = dims
        .iter()
        .map(|&k| DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    LocalLossFamily::quadratic(a, b).expect("symmetric positive definite")
}

/// Eigenvalues of `Bᵀ C A B`, the regionalized quadratic form on `lim F`.
pub fn reduced_hessian_eigenvalues(f: &Cofunctor, loss: &LocalLossFamily) -> DVector<f64> {
    let LossKind::Quadratic { a, .. } = loss.kind() else {
        panic!("reduced Hessian needs a quadratic family");
    };
    let n = f.total_dim();
    let mut ca = DMatrix::zeros(n, n);
    let mut off = 0;
    for (e, m) in a.iter().enumerate() {
        let c = f.poset().counting(e) as f64;
        ca.view_mut((off, off), m.shape()).copy_from(&(m * c));
        off += m.nrows();
    }
    let b = f.limit_basis_matrix();
    let h = b.transpose() * ca * b;
    SymmetricEigen::new((&h + h.transpose()) * 0.5).eigenvalues
}

/// A random cofunctor with a quadratic family whose reduced form has every
/// eigenvalue at least `gap` in magnitude (positive definite when
/// `definite`). Redraws until one is found.
pub fn random_quadratic_instance<R: Rng>(
    rng: &mut R,
    max_elements: usize,
    gap: f64,
    definite: bool,
) -> (Cofunctor, LocalLossFamily) {
    loop {
        let n = rng.gen_range(2..=max_elements);
        let poset = random_poset(rng, n, 0.4);
        let f = random_cofunctor(rng, &poset);
        let loss = random_quadratic(rng, f.dims());
        let eig = reduced_hessian_eigenvalues(&f, &loss);
        let ok = if definite {
            eig.iter().all(|&v| v >= gap)
        } else {
            eig.iter().all(|&v| v.abs() >= gap)
        };
        if ok && !eig.is_empty() {
            return (f, loss);
        }
    }
}

pub fn random_section<R: Rng>(rng: &mut R, dims: &[usize]) -> SectionVector {
    SectionVector::from_blocks(
        dims.iter()
            .map(|&k| DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

pub fn random_pairs<R: Rng>(rng: &mut R, f: &Cofunctor) -> PairField {
    PairField::from_blocks(
        f.pair_dims()
            .iter()
            .map(|&k| DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)))
            .collect(),
    )
}

/// Strictly positive `rows × cols` kernel with columns summing to 1 and rows
/// summing to `cols / rows`, so that it maps the uniform density to the
/// uniform density.
pub fn uniform_preserving_kernel<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(0.1..1.0));
    let row_target = cols as f64 / rows as f64;
    for _ in 0..2000 {
        for i in 0..rows {
            let s = m.row(i).sum();
            m.row_mut(i).scale_mut(row_target / s);
        }
        for j in 0..cols {
            let s = m.column(j).sum();
            m.column_mut(j).scale_mut(1.0 / s);
        }
        let worst = (0..rows)
            .map(|i| (m.row(i).sum() - row_target).abs())
            .fold(0.0, f64::max);
        if worst < 1e-15 {
            break;
        }
    }
    m
}

/// Noisy chain `0 < 1 < ... < n-1` with the given state-space sizes.
pub fn noisy_chain<R: Rng>(rng: &mut R, sizes: &[usize]) -> KernelNetwork {
    let mut kernels = BTreeMap::new();
    for i in 1..sizes.len() {
        kernels.insert((i, i - 1), uniform_preserving_kernel(rng, sizes[i - 1], sizes[i]));
    }
    KernelNetwork::new(Poset::chain(sizes.len()), sizes.to_vec(), kernels)
        .expect("covering kernels compose to a valid network")
}

/// Two upper elements `"a"`, `"c"` observing one lower element `"b"` through
/// noisy kernels, the shape of the diamond region graph.
pub fn noisy_diamond<R: Rng>(rng: &mut R, upper: [usize; 2], lower: usize) -> KernelNetwork {
    let poset = Poset::new(&["a", "c", "b"], &[("b", "a"), ("b", "c")]).expect("acyclic");
    let mut kernels = BTreeMap::new();
    kernels.insert((0, 2), uniform_preserving_kernel(rng, lower, upper[0]));
    kernels.insert((1, 2), uniform_preserving_kernel(rng, lower, upper[1]));
    KernelNetwork::new(poset, vec![upper[0], upper[1], lower], kernels).expect("valid kernels")
}

pub fn random_hamiltonians<R: Rng>(rng: &mut R, sizes: &[usize], scale: f64) -> Vec<DVector<f64>> {
    sizes
        .iter()
        .map(|&k| DVector::from_fn(k, |_, _| rng.gen_range(-scale..scale)))
        .collect()
}

fn var_names(cards: &[usize]) -> Vec<(String, usize)> {
    cards
        .iter()
        .enumerate()
        .map(|(i, &c)| ((i + 1).to_string(), c))
        .collect()
}

fn region_problem(cards: &[usize], regions: &[Vec<usize>], hams: Vec<Vec<f64>>) -> Result<RegionGraphProblem> {
    let vars = var_names(cards);
    let regions: Vec<Vec<String>> = regions
        .iter()
        .map(|r| r.iter().map(|i| i.to_string()).collect())
        .collect();
    RegionGraphProblem::new(&vars, &regions, hams)
}

fn sizes(cards: &[usize], regions: &[Vec<usize>]) -> Vec<usize> {
    regions
        .iter()
        .map(|r| r.iter().map(|&v| cards[v - 1]).product())
        .collect()
}

/// Regions `{1,2}`, `{2,3}` over `{2}` with random hamiltonians of size `scale`.
pub fn diamond_region_problem<R: Rng>(rng: &mut R, cards: [usize; 3], scale: f64) -> RegionGraphProblem {
    let regions = vec![vec![1, 2], vec![2, 3], vec![2]];
    let hams = random_hamiltonians(rng, &sizes(&cards, &regions), scale);
    region_problem(&cards, &regions, hams.into_iter().map(|h| h.as_slice().to_vec()).collect())
        .expect("fixed region graph")
}

/// Regions `{1,2}` over `{1}`, hamiltonian on the upper region only.
pub fn two_region_problem<R: Rng>(rng: &mut R, cards: [usize; 2], scale: f64) -> RegionGraphProblem {
    let regions = vec![vec![1, 2], vec![1]];
    let s = sizes(&cards, &regions);
    let h = random_hamiltonians(rng, &s[..1], scale).remove(0);
    region_problem(&cards, &regions, vec![h.as_slice().to_vec(), vec![0.0; s[1]]])
        .expect("fixed region graph")
}

/// Every nonempty subset of the variables as a region; `h_top` on the full
/// set and zero elsewhere.
pub fn powerset_region_problem(cards: &[usize], h_top: Vec<f64>) -> Result<RegionGraphProblem> {
    let k = cards.len();
    let regions: Vec<Vec<usize>> = (1..1usize << k)
        .map(|m| (0..k).filter(|i| m & (1 << i) != 0).map(|i| i + 1).collect())
        .collect();
    let s = sizes(cards, &regions);
    let hams = regions
        .iter()
        .zip(&s)
        .map(|(r, &n)| if r.len() == k { h_top.clone() } else { vec![0.0; n] })
        .collect();
    region_problem(cards, &regions, hams)
}

/// Regions `{1,2,3}`, `{2,3,4}` over `{2,3}` over `{3}` with random hamiltonians.
pub fn three_level_problem<R: Rng>(rng: &mut R, cards: [usize; 4], scale: f64) -> RegionGraphProblem {
    let regions = vec![vec![1, 2, 3], vec![2, 3, 4], vec![2, 3], vec![3]];
    let hams = random_hamiltonians(rng, &sizes(&cards, &regions), scale);
    region_problem(&cards, &regions, hams.into_iter().map(|h| h.as_slice().to_vec()).collect())
        .expect("fixed region graph")
}
