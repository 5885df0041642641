//! Noisy channel networks: cofunctors into column-stochastic kernels.
//!
//! Each strict pair `b < a` carries a kernel `K^a_b` of shape `|F(b)| × |F(a)|`
//! whose column `ω` is the output distribution `K(· | ω)`. Densities are pushed
//! forward by `K`, functions pulled back by `Kᵀ` (conditional expectation).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::beliefs::{self, BeliefState, BottomUp};
use crate::blocks::PairField;
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::gbp::RegionGraphProblem;
use crate::poset::Poset;
use crate::solver::{SolveReport, SolverConfig};

pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const KERNEL_COMPOSITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct KernelNetwork {
    functor: Cofunctor,
    strictly_positive: bool,
}

/// Stochasticity problems of a kernel: negative entries and columns whose sum is off.
pub fn kernel_violations(name: &str, k: &DMatrix<f64>) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(v) = k.iter().find(|v| !(**v >= 0.0)) {
        out.push(format!("kernel {name} has a negative or non-finite entry {v}"));
    }
    for (j, col) in k.column_iter().enumerate() {
        let s = col.sum();
        if !((s - 1.0).abs() <= STOCHASTIC_TOL) {
            out.push(format!("kernel {name}: column {j} sums to {s}, expected 1"));
        }
    }
    out
}

impl KernelNetwork {
    /// Kernels keyed by `(upper, lower)`; non-covering pairs may be omitted
    /// and are then composed from covering ones.
    pub fn new(
        poset: Poset,
        state_spaces: Vec<usize>,
        kernels: BTreeMap<(usize, usize), DMatrix<f64>>,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        for (&(a, b), k) in &kernels {
            if a < poset.len() && b < poset.len() {
                problems.extend(kernel_violations(
                    &format!("{}->{}", poset.name(a), poset.name(b)),
                    k,
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let functor = Cofunctor::new(poset, state_spaces, kernels)?;
        let bad = functor.validate_with_tol(KERNEL_COMPOSITION_TOL);
        if let Some(v) = bad.first() {
            return Err(Error::Functoriality(v.to_string()));
        }
        let strictly_positive = functor.maps().iter().all(|m| m.iter().all(|&v| v > 0.0));
        Ok(KernelNetwork {
            functor,
            strictly_positive,
        })
    }

    pub fn poset(&self) -> &Poset {
        self.functor.poset()
    }

    pub fn state_spaces(&self) -> &[usize] {
        self.functor.dims()
    }

    /// `K^a_b` for `b < a`.
    pub fn kernel(&self, a: usize, b: usize) -> &DMatrix<f64> {
        self.functor.map(a, b)
    }

    /// Whether every kernel entry is strictly positive.
    pub fn strictly_positive(&self) -> bool {
        self.strictly_positive
    }

    /// The linear cofunctor acting on densities by `p ↦ K p`.
    pub fn pushforward_cofunctor(&self) -> &Cofunctor {
        &self.functor
    }

    /// `(K^a_b)ᵀ f`, the conditional expectation of `f` on `F(b)` given `F(a)`.
    pub fn conditional_expectation(&self, a: usize, b: usize, f_b: &DVector<f64>) -> Result<DVector<f64>> {
        if !self.poset().lt(b, a) {
            return Err(Error::NotComparable {
                upper: self.poset().name(a).to_string(),
                lower: self.poset().name(b).to_string(),
            });
        }
        let k = self.kernel(a, b);
        if f_b.len() != k.nrows() {
            return Err(Error::Shape(format!(
                "function has length {}, expected {}",
                f_b.len(),
                k.nrows()
            )));
        }
        Ok(k.tr_mul(f_b))
    }
}

/// The deterministic network of a region graph: projection kernels and the
/// region hamiltonians.
pub fn from_region_problem(p: &RegionGraphProblem) -> Result<(KernelNetwork, Vec<DVector<f64>>)> {
    let f = p.marginalization_cofunctor();
    let kernels = f.pairs().iter().copied().zip(f.maps().iter().cloned()).collect();
    let net = KernelNetwork::new(f.poset().clone(), f.dims().to_vec(), kernels)?;
    Ok((net, p.hamiltonians().to_vec()))
}

/// Free function form of [`KernelNetwork::pushforward_cofunctor`], re-checking composition.
pub fn pushforward_cofunctor(k: &KernelNetwork) -> Result<Cofunctor> {
    let f = k.pushforward_cofunctor().clone();
    if let Some(v) = f.validate_with_tol(KERNEL_COMPOSITION_TOL).first() {
        return Err(Error::Functoriality(v.to_string()));
    }
    Ok(f)
}

fn check_hamiltonians(k: &KernelNetwork, hamiltonians: &[DVector<f64>]) -> Result<()> {
    if hamiltonians.len() != k.state_spaces().len() {
        return Err(Error::Shape(format!(
            "{} hamiltonians for {} elements",
            hamiltonians.len(),
            k.state_spaces().len()
        )));
    }
    for (a, h) in hamiltonians.iter().enumerate() {
        if h.len() != k.state_spaces()[a] {
            return Err(Error::Shape(format!(
                "hamiltonian of `{}` has length {}, expected {}",
                k.poset().name(a),
                h.len(),
                k.state_spaces()[a]
            )));
        }
    }
    Ok(())
}

pub fn channel_state(
    k: &KernelNetwork,
    hamiltonians: &[DVector<f64>],
    lambda: PairField,
    bottom_up: BottomUp,
) -> Result<BeliefState> {
    check_hamiltonians(k, hamiltonians)?;
    lambda.check_dims(&k.functor.pair_dims(), "log-messages")?;
    beliefs::state_from_messages(&k.functor, hamiltonians, lambda, bottom_up)
}

pub fn initial_channel_state(k: &KernelNetwork, hamiltonians: &[DVector<f64>]) -> Result<BeliefState> {
    channel_state(k, hamiltonians, k.functor.zero_pairs(), BottomUp::LogLinear)
}

/// One channel message-passing update:
/// `λ_{a→b} += γ (ln K^a_b b_a - ln b_b)` followed by recomputing beliefs.
pub fn channel_step(
    k: &KernelNetwork,
    hamiltonians: &[DVector<f64>],
    s: &BeliefState,
    damping: f64,
    bottom_up: BottomUp,
) -> Result<BeliefState> {
    check_hamiltonians(k, hamiltonians)?;
    s.log_messages.check_dims(&k.functor.pair_dims(), "log-messages")?;
    beliefs::step(&k.functor, hamiltonians, s, damping, bottom_up)
}

pub fn channel_increments(k: &KernelNetwork, s: &BeliefState) -> PairField {
    beliefs::log_increments(&k.functor, &s.beliefs)
}

/// Channel message passing with log-linear bottom-up messages, certified like
/// [`crate::gbp::gbp_solve`] against the pushforward cofunctor.
pub fn channel_solve(k: &KernelNetwork, hamiltonians: &[DVector<f64>], cfg: &SolverConfig) -> Result<SolveReport> {
    channel_solve_with(k, hamiltonians, cfg, BottomUp::LogLinear)
}

pub fn channel_solve_with(
    k: &KernelNetwork,
    hamiltonians: &[DVector<f64>],
    cfg: &SolverConfig,
    bottom_up: BottomUp,
) -> Result<SolveReport> {
    check_hamiltonians(k, hamiltonians)?;
    beliefs::solve(&k.functor, hamiltonians, cfg, bottom_up)
}
