//! Log-domain belief propagation shared by region graphs and channel networks.
//!
//! Messages are stored as `λ_{a→b} = ln m_{a→b}` on strict pairs. Beliefs are
//! `ln b_a = -H_a + Σ_{b ≤ a} ext_{a←b}(ν_{b→a})` where the bottom-up term
//! collects top-down messages `λ_{c→b}` from every `c > b` not below `a`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::blocks::{PairField, SectionVector};
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::linalg::log_sum_exp_weighted;
use crate::loss::LocalLossFamily;
use crate::solver::{Residuals, SolveReport, SolverConfig, TraceRow};

/// Stand-in for `ln 0`.
pub const LOG_FLOOR: f64 = -745.0;

/// How a message on `F(b)` is carried up to `F(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BottomUp {
    /// Conditional expectation of log-messages, `(F^a_b)ᵀ λ`.
    #[default]
    LogLinear,
    /// Log of the conditional expectation of messages, `ln((F^a_b)ᵀ e^λ)`.
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    /// Normalized, strictly positive beliefs per element.
    pub beliefs: SectionVector,
    /// Top-down log-messages per strict pair.
    pub log_messages: PairField,
}

/// `ln(M e^v)` with weights `M[i, j] >= 0`; rows with no support get [`LOG_FLOOR`].
pub(crate) fn log_apply(m: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows(),
        (0..m.nrows()).map(|i| {
            log_sum_exp_weighted(m.row(i).iter().copied().zip(v.iter().copied()))
                .unwrap_or(LOG_FLOOR)
                .max(LOG_FLOOR)
        }),
    )
}

/// Unnormalized log-beliefs for the given log-messages.
pub(crate) fn log_beliefs(
    f: &Cofunctor,
    hamiltonians: &[DVector<f64>],
    lambda: &PairField,
    bottom_up: BottomUp,
) -> Result<SectionVector> {
    let p = f.poset();
    let mut out = Vec::with_capacity(p.len());
    for a in 0..p.len() {
        let mut lb = -&hamiltonians[a];
        for b in p.down_set(a) {
            for c in 0..p.len() {
                if !p.lt(b, c) || p.leq(c, a) {
                    continue;
                }
                let msg = &lambda[p.pair_index(c, b).expect("strict pair")];
                if b == a {
                    lb += msg;
                } else {
                    match bottom_up {
                        BottomUp::LogLinear => lb += f.map(a, b).tr_mul(msg),
                        BottomUp::Multiplicative => {
                            lb += log_apply(&f.map(a, b).transpose(), msg)
                        }
                    }
                }
            }
        }
        if !lb.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalOverflow(format!(
                "log-belief of `{}` is not finite",
                p.name(a)
            )));
        }
        out.push(lb);
    }
    Ok(SectionVector::from_blocks(out))
}

/// Normalizes log-beliefs per element; returns `(beliefs, log_beliefs)`.
/// Entries below the smallest normal float are raised to it, so beliefs
/// stay strictly positive even when the messages run away.
pub(crate) fn normalize(log_b: &SectionVector) -> (SectionVector, SectionVector) {
    let mut probs = Vec::with_capacity(log_b.len());
    let mut logs = Vec::with_capacity(log_b.len());
    for lb in log_b.iter() {
        let z = log_sum_exp_weighted(lb.iter().map(|&v| (1.0, v))).unwrap_or(0.0);
        let ln = lb.map(|v| v - z);
        probs.push(ln.map(|v| v.exp().max(f64::MIN_POSITIVE)));
        logs.push(ln);
    }
    (SectionVector::from_blocks(probs), SectionVector::from_blocks(logs))
}

pub(crate) fn state_from_messages(
    f: &Cofunctor,
    hamiltonians: &[DVector<f64>],
    lambda: PairField,
    bottom_up: BottomUp,
) -> Result<BeliefState> {
    let (beliefs, _) = normalize(&log_beliefs(f, hamiltonians, &lambda, bottom_up)?);
    Ok(BeliefState {
        beliefs,
        log_messages: lambda,
    })
}

/// `ln(F^a_b b_a) - ln b_b` for every strict pair, from normalized beliefs.
pub(crate) fn log_increments(f: &Cofunctor, beliefs: &SectionVector) -> PairField {
    let logs: Vec<DVector<f64>> = beliefs
        .iter()
        .map(|b| b.map(|v| if v > 0.0 { v.ln().max(LOG_FLOOR) } else { LOG_FLOOR }))
        .collect();
    let blocks = f
        .pairs()
        .iter()
        .zip(f.maps())
        .map(|(&(a, b), m)| log_apply(m, &logs[a]) - &logs[b])
        .collect();
    PairField::from_blocks(blocks)
}

pub(crate) fn step(
    f: &Cofunctor,
    hamiltonians: &[DVector<f64>],
    s: &BeliefState,
    damping: f64,
    bottom_up: BottomUp,
) -> Result<BeliefState> {
    let inc = log_increments(f, &s.beliefs);
    let lambda = s.log_messages.axpy(damping, &inc);
    state_from_messages(f, hamiltonians, lambda, bottom_up)
}

/// Constraint norm and stationarity residual of normalized beliefs, plus the
/// regionalized free energy.
pub(crate) fn certificates(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    beliefs: &SectionVector,
) -> Result<(f64, f64, f64)> {
    let constraint = f.delta(beliefs)?.sup_norm();
    let stationarity = match loss.grad_all(beliefs) {
        Ok(g) => f.stationarity_residual_normalized(&g)?,
        Err(_) => f64::INFINITY,
    };
    let value = loss
        .regionalized_value(f.poset(), beliefs)
        .unwrap_or(f64::NAN);
    Ok((constraint, stationarity, value))
}

pub(crate) fn solve(
    f: &Cofunctor,
    hamiltonians: &[DVector<f64>],
    cfg: &SolverConfig,
    bottom_up: BottomUp,
) -> Result<SolveReport> {
    cfg.check()?;
    if hamiltonians.len() != f.poset().len() {
        return Err(Error::Shape(format!(
            "{} hamiltonians for {} elements",
            hamiltonians.len(),
            f.poset().len()
        )));
    }
    for (a, h) in hamiltonians.iter().enumerate() {
        if h.len() != f.dims()[a] {
            return Err(Error::Shape(format!(
                "hamiltonian of `{}` has length {}, expected {}",
                f.poset().name(a),
                h.len(),
                f.dims()[a]
            )));
        }
    }
    let loss = LocalLossFamily::free_energy(hamiltonians.to_vec(), 1.0)?.with_names(f.poset());
    let lambda0 = cfg.initial_messages(&f.pair_dims());
    let mut state = state_from_messages(f, hamiltonians, lambda0, bottom_up)?;
    let (c0, s0, _) = certificates(f, &loss, &state.beliefs)?;
    let mut last = Residuals {
        message_delta: f64::INFINITY,
        constraint_norm: c0,
        stationarity: s0,
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let next = step(f, hamiltonians, &state, cfg.damping, bottom_up)?;
        let delta = next.log_messages.sub(&state.log_messages).sup_norm();
        state = next;
        let (constraint, stationarity, value) = certificates(f, &loss, &state.beliefs)?;
        last = Residuals {
            message_delta: delta,
            constraint_norm: constraint,
            stationarity,
        };
        if cfg.record_trace {
            trace.push(TraceRow {
                iter: it,
                msg_delta: delta,
                constraint_norm: constraint,
                stationarity,
                value,
            });
        }
        iterations = it;
        if delta <= cfg.tol_message && constraint <= cfg.tol_residual && stationarity <= cfg.tol_residual {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        x_star: state.beliefs,
        // multipliers are the negated log-messages
        l_star: state.log_messages.scaled(-1.0),
        converged,
        iterations,
        final_residuals: last,
        trace,
    })
}
