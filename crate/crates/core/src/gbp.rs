//! Region graphs: the marginalization cofunctor, the region-based free energy
//! and generalized belief propagation in the log domain.
//!
//! Variables are ordered by identifier; a region's configurations are indexed
//! row-major over its sorted variables (the last variable varies fastest).

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::beliefs::{self, BeliefState, BottomUp};
use crate::blocks::{PairField, SectionVector};
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::loss::LocalLossFamily;
use crate::poset::Poset;
use crate::solver::{current_point, SolveReport, SolverConfig};

#[derive(Debug, Clone)]
pub struct RegionGraphProblem {
    variables: Vec<String>,
    cards: Vec<usize>,
    regions: Vec<Vec<usize>>,
    poset: Poset,
    hamiltonians: Vec<DVector<f64>>,
    functor: OnceLock<Cofunctor>,
}

/// Comma-joined sorted identifiers, the canonical name of a region.
pub fn region_key<S: AsRef<str>>(vars: &[S]) -> String {
    let mut v: Vec<&str> = vars.iter().map(|s| s.as_ref()).collect();
    v.sort_unstable();
    v.join(",")
}

impl RegionGraphProblem {
    /// `variables` are `(id, cardinality)`; `regions` list variable ids;
    /// `hamiltonians[i]` is indexed over the configurations of `regions[i]`.
    pub fn new<S: AsRef<str>>(
        variables: &[(S, usize)],
        regions: &[Vec<S>],
        hamiltonians: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut vars: Vec<(String, usize)> = variables
            .iter()
            .map(|(s, c)| (s.as_ref().to_string(), *c))
            .collect();
        vars.sort();
        for w in vars.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::DuplicateElement(w[0].0.clone()));
            }
        }
        if let Some((id, _)) = vars.iter().find(|(_, c)| *c == 0) {
            return Err(Error::Shape(format!("variable `{id}` has cardinality 0")));
        }
        let (variables, cards): (Vec<String>, Vec<usize>) = vars.into_iter().unzip();
        let mut region_vars = Vec::with_capacity(regions.len());
        for r in regions {
            let mut idx = Vec::with_capacity(r.len());
            for v in r {
                let i = variables
                    .binary_search_by(|x| x.as_str().cmp(v.as_ref()))
                    .map_err(|_| Error::UnknownElement(v.as_ref().to_string()))?;
                idx.push(i);
            }
            idx.sort_unstable();
            idx.dedup();
            region_vars.push(idx);
        }
        let names: Vec<String> = region_vars
            .iter()
            .map(|r| r.iter().map(|&i| variables[i].as_str()).collect::<Vec<_>>().join(","))
            .collect();
        let mut pairs = Vec::new();
        for (a, ra) in region_vars.iter().enumerate() {
            for (b, rb) in region_vars.iter().enumerate() {
                if a != b && rb.len() < ra.len() && rb.iter().all(|i| ra.contains(i)) {
                    pairs.push((names[b].clone(), names[a].clone()));
                }
            }
        }
        let pair_refs: Vec<(&str, &str)> = pairs.iter().map(|(x, y)| (x.as_str(), y.as_str())).collect();
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let poset = Poset::new(&name_refs, &pair_refs)?;

        if hamiltonians.len() != region_vars.len() {
            return Err(Error::Shape(format!(
                "{} hamiltonians for {} regions",
                hamiltonians.len(),
                region_vars.len()
            )));
        }
        let mut hams = Vec::with_capacity(hamiltonians.len());
        for (a, h) in hamiltonians.into_iter().enumerate() {
            let size: usize = region_vars[a].iter().map(|&i| cards[i]).product();
            if h.len() != size {
                return Err(Error::Shape(format!(
                    "hamiltonian of region `{}` has length {}, expected {size}",
                    names[a],
                    h.len()
                )));
            }
            hams.push(DVector::from_vec(h));
        }
        Ok(RegionGraphProblem {
            variables,
            cards,
            regions: region_vars,
            poset,
            hamiltonians: hams,
            functor: OnceLock::new(),
        })
    }

    pub fn poset(&self) -> &Poset {
        &self.poset
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    /// Sorted variable indices of region `a`.
    pub fn region(&self, a: usize) -> &[usize] {
        &self.regions[a]
    }

    pub fn hamiltonians(&self) -> &[DVector<f64>] {
        &self.hamiltonians
    }

    /// `|E_a|`.
    pub fn config_size(&self, a: usize) -> usize {
        self.regions[a].iter().map(|&i| self.cards[i]).product()
    }

    pub fn with_hamiltonians(&self, hamiltonians: Vec<DVector<f64>>) -> Result<Self> {
        let mut p = self.clone();
        for (a, h) in hamiltonians.iter().enumerate() {
            if h.len() != self.config_size(a) {
                return Err(Error::Shape(format!("hamiltonian {a} has wrong length")));
            }
        }
        p.hamiltonians = hamiltonians;
        Ok(p)
    }

    /// For each configuration of the variables `from`, the index of its
    /// restriction to the variables `to` (`to ⊆ from`, both sorted).
    pub fn projection_indices(&self, from: &[usize], to: &[usize]) -> Vec<usize> {
        projection_indices(&self.cards, from, to)
    }

    /// The cofunctor `F(a) = ℝ^{E_a}` with marginalization maps.
    pub fn marginalization_cofunctor(&self) -> &Cofunctor {
        self.functor.get_or_init(|| {
            let dims: Vec<usize> = (0..self.poset.len()).map(|a| self.config_size(a)).collect();
            Cofunctor::from_fn(self.poset.clone(), dims, |a, b| {
                marginalization_matrix(&self.cards, &self.regions[a], &self.regions[b])
            })
            .expect("marginalization maps have consistent shapes")
        })
    }

    /// The free-energy loss family with these hamiltonians and `β = 1`.
    pub fn free_energy_loss(&self) -> LocalLossFamily {
        LocalLossFamily::free_energy(self.hamiltonians.clone(), 1.0)
            .expect("beta = 1")
            .with_names(&self.poset)
    }
}

pub(crate) fn projection_indices(cards: &[usize], from: &[usize], to: &[usize]) -> Vec<usize> {
    let size: usize = from.iter().map(|&i| cards[i]).product();
    // position of each `to` variable inside `from`
    let pos: Vec<usize> = to
        .iter()
        .map(|v| from.iter().position(|x| x == v).expect("to ⊆ from"))
        .collect();
    let mut digits = vec![0usize; from.len()];
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let mut idx = 0;
        for (k, &p) in pos.iter().enumerate() {
            idx = idx * cards[to[k]] + digits[p];
        }
        out.push(idx);
        // increment row-major counter, last digit fastest
        for j in (0..from.len()).rev() {
            digits[j] += 1;
            if digits[j] < cards[from[j]] {
                break;
            }
            digits[j] = 0;
        }
    }
    out
}

/// 0/1 matrix summing a density on `from` down to `to`.
pub(crate) fn marginalization_matrix(cards: &[usize], from: &[usize], to: &[usize]) -> DMatrix<f64> {
    let rows: usize = to.iter().map(|&i| cards[i]).product();
    let proj = projection_indices(cards, from, to);
    let mut m = DMatrix::zeros(rows, proj.len());
    for (y, &x) in proj.iter().enumerate() {
        m[(x, y)] = 1.0;
    }
    m
}

/// Free function form of [`RegionGraphProblem::marginalization_cofunctor`].
pub fn marginalization_cofunctor(p: &RegionGraphProblem) -> Cofunctor {
    p.marginalization_cofunctor().clone()
}

/// `Σ_b c(b) (E_{q_b}[H_b] - S_b(q_b))`, the Möbius-collapsed region free energy.
pub fn region_free_energy(p: &RegionGraphProblem, q: &SectionVector) -> Result<f64> {
    q.check_dims(p.marginalization_cofunctor().dims(), "beliefs")?;
    p.free_energy_loss().regionalized_value(&p.poset, q)
}

/// Beliefs and messages for log-messages `lambda`.
pub fn belief_state(p: &RegionGraphProblem, lambda: PairField) -> Result<BeliefState> {
    let f = p.marginalization_cofunctor();
    lambda.check_dims(&f.pair_dims(), "log-messages")?;
    beliefs::state_from_messages(f, &p.hamiltonians, lambda, BottomUp::LogLinear)
}

pub fn initial_state(p: &RegionGraphProblem) -> Result<BeliefState> {
    belief_state(p, p.marginalization_cofunctor().zero_pairs())
}

/// One synchronous GBP update with the given damping; beliefs come back normalized.
pub fn gbp_step(p: &RegionGraphProblem, s: &BeliefState, damping: f64) -> Result<BeliefState> {
    let f = p.marginalization_cofunctor();
    s.log_messages.check_dims(&f.pair_dims(), "log-messages")?;
    beliefs::step(f, &p.hamiltonians, s, damping, BottomUp::LogLinear)
}

/// Log-message increments `ln Σ_{y_b = x_b} b_a(y) - ln b_b(x_b)` of the current state.
pub fn gbp_increments(p: &RegionGraphProblem, s: &BeliefState) -> PairField {
    beliefs::log_increments(p.marginalization_cofunctor(), &s.beliefs)
}

/// Iterates [`gbp_step`] until the messages settle and the normalized beliefs
/// are certified: `‖δ q*‖∞` and the stationarity residual on the normalized
/// tangent space of `lim F` both below `tol_residual`.
pub fn gbp_solve(p: &RegionGraphProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    beliefs::solve(p.marginalization_cofunctor(), &p.hamiltonians, cfg, BottomUp::LogLinear)
}

/// Compares one generic multiplier step with one GBP step under `λ = -l`.
///
/// Returns the largest of two sup-norm discrepancies, each taken after
/// removing a constant offset per region (or per pair):
/// the log of the generic point `x(l)` against the GBP log-beliefs, and the
/// generic increment `δ x(l)` mapped to log-message coordinates,
/// `ln(1 + δx_{a→b} / x_b)`, against the GBP log-increment.
pub fn gbp_equivalence_check(p: &RegionGraphProblem, l: &PairField) -> Result<f64> {
    let f = p.marginalization_cofunctor();
    let loss = p.free_energy_loss();
    let x = current_point(f, &loss, l)?;
    let r = f.delta(&x)?;
    let state = belief_state(p, l.scaled(-1.0))?;
    let gbp_inc = gbp_increments(p, &state);

    let mut worst: f64 = 0.0;
    for a in 0..x.len() {
        let diff = x[a].map(f64::ln) - state.beliefs[a].map(f64::ln);
        worst = worst.max(centered_sup(&diff));
    }
    for (k, &(_, b)) in f.pairs().iter().enumerate() {
        let mapped = DVector::from_iterator(
            r[k].len(),
            r[k].iter().zip(x[b].iter()).map(|(d, xb)| (1.0 + d / xb).ln()),
        );
        worst = worst.max(centered_sup(&(mapped - &gbp_inc[k])));
    }
    Ok(worst)
}

fn centered_sup(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.mean();
    v.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
}
