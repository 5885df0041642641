//! Message passing on Lagrange multipliers.
//!
//! Multipliers `l_{a→b} ∈ F(b)*` live on strict pairs. A multiplier state
//! determines a candidate point `x(l) = g(ζ d l)` whose differential is, by
//! construction, of the form `ζ d l`. Any fix point with `δ x(l) = 0` is
//! therefore a constrained critical point of the regionalized loss. The
//! solvers here drive `R(l) = δ g ζ d l` to zero either by the generic
//! first-order recursion or by Newton's method on `R`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{PairField, SectionVector};
use crate::error::{Error, Result};
use crate::functor::Cofunctor;
use crate::linalg::lstsq;
use crate::loss::{LocalLossFamily, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Generic,
    Newton,
    Gbp,
    Channel,
}

/// Orientation of the generic increment.
///
/// `Restoring` applies `l ← l - γ δ x(l)`, which moves beliefs toward
/// consistency and is the multiplier form of belief propagation.
/// `Literal` applies `l ← l + γ δ x(l)`; it has the same fix points but
/// repels from them, so it is only useful for reproducing that recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSign {
    #[default]
    Restoring,
    Literal,
}

impl StepSign {
    pub fn factor(self) -> f64 {
        match self {
            StepSign::Restoring => -1.0,
            StepSign::Literal => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Sup-norm threshold on the change of messages between iterations.
    pub tol_message: f64,
    /// Threshold on both the constraint norm and the stationarity residual.
    pub tol_residual: f64,
    pub damping: f64,
    pub seed: u64,
    pub method: Method,
    pub step_sign: StepSign,
    /// Half-width of the uniform random initialization; `0` starts from zero messages.
    pub init_scale: f64,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 10_000,
            tol_message: 1e-9,
            tol_residual: 1e-7,
            damping: 0.5,
            seed: 0,
            method: Method::Generic,
            step_sign: StepSign::Restoring,
            init_scale: 0.0,
            record_trace: true,
        }
    }
}

impl SolverConfig {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        if !(self.tol_message > 0.0) || !(self.tol_residual > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "damping must lie in [0, 1], got {}",
                self.damping
            )));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be nonnegative".into()));
        }
        Ok(())
    }

    /// Initial multipliers: zeros, or uniform in `[-init_scale, init_scale]` under `seed`.
    pub fn initial_messages(&self, dims: &[usize]) -> PairField {
        if self.init_scale == 0.0 {
            return PairField::zeros(dims);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        PairField::from_vecs(
            dims.iter()
                .map(|&d| {
                    (0..d)
                        .map(|_| rng.gen_range(-self.init_scale..=self.init_scale))
                        .collect()
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub msg_delta: f64,
    pub constraint_norm: f64,
    pub stationarity: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub l: PairField,
    pub t: usize,
    pub history: Vec<TraceRow>,
}

impl MessageState {
    pub fn new(l: PairField) -> Self {
        MessageState {
            l,
            t: 0,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub message_delta: f64,
    pub constraint_norm: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x_star: SectionVector,
    pub l_star: PairField,
    pub converged: bool,
    pub iterations: usize,
    pub final_residuals: Residuals,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    /// Both fix-point certificates hold at `tol`.
    pub fn certified(&self, tol: f64) -> bool {
        self.final_residuals.constraint_norm <= tol && self.final_residuals.stationarity <= tol
    }
}

/// `x(l) = g(ζ d l)`.
pub fn current_point(f: &Cofunctor, loss: &LocalLossFamily, l: &PairField) -> Result<SectionVector> {
    let y = f.zeta_dual(&f.dual_d(l)?)?;
    let blocks = (0..y.len())
        .map(|a| loss.inverse_grad(a, &y[a]))
        .collect::<Result<Vec<_>>>()?;
    Ok(SectionVector::from_blocks(blocks))
}

struct Eval {
    x: SectionVector,
    /// `R(l) = δ x(l)`.
    r: PairField,
}

fn evaluate(f: &Cofunctor, loss: &LocalLossFamily, l: &PairField) -> Result<Eval> {
    let x = current_point(f, loss, l)?;
    if !x.is_finite() {
        return Err(Error::NumericalOverflow(
            "current point has non-finite coordinates".into(),
        ));
    }
    let r = f.delta(&x)?;
    Ok(Eval { x, r })
}

/// The map `R(l) = δ g ζ d l` whose roots are the fix points of every solver here.
pub fn multiplier_residual(f: &Cofunctor, loss: &LocalLossFamily, l: &PairField) -> Result<PairField> {
    Ok(evaluate(f, loss, l)?.r)
}

fn check_inputs(f: &Cofunctor, loss: &LocalLossFamily, l: &PairField) -> Result<()> {
    loss.check_dims(f.dims())?;
    l.check_dims(&f.pair_dims(), "multipliers")
}

/// One synchronous generic update `l ← l ± γ δ x(l)`; every pair reads the time-`t` snapshot.
pub fn generic_step(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    s: &MessageState,
    cfg: &SolverConfig,
) -> Result<MessageState> {
    check_inputs(f, loss, &s.l)?;
    let ev = evaluate(f, loss, &s.l)?;
    let l = s.l.axpy(cfg.step_sign.factor() * cfg.damping, &ev.r);
    Ok(MessageState {
        l,
        t: s.t + 1,
        history: s.history.clone(),
    })
}

/// Jacobian of `R` at `l`: `δ · diag(Dg) · ζ · d`.
pub fn residual_jacobian(f: &Cofunctor, loss: &LocalLossFamily, l: &PairField) -> Result<DMatrix<f64>> {
    let y = f.zeta_dual(&f.dual_d(l)?)?;
    let n = f.total_dim();
    let mut dg = DMatrix::zeros(n, n);
    let mut off = 0;
    for a in 0..y.len() {
        let j = loss.inverse_grad_jacobian(a, &y[a])?;
        dg.view_mut((off, off), j.shape()).copy_from(&j);
        off += y[a].len();
    }
    let delta = f.delta_matrix();
    Ok(&delta * dg * f.zeta_dual_matrix() * delta.transpose())
}

/// `ln(F^a_b x_a) - ln x_b` per strict pair, or `None` off the positive orthant.
///
/// For losses defined on positive vectors this is the scale-free form of
/// `δ x`: absolute defects vanish trivially as coordinates collapse to zero.
pub fn log_defect(f: &Cofunctor, x: &SectionVector) -> Option<PairField> {
    let mut blocks = Vec::with_capacity(f.pairs().len());
    for (&(a, b), m) in f.pairs().iter().zip(f.maps()) {
        let pushed = m * &x[a];
        let mut v = pushed.clone();
        for i in 0..v.len() {
            if !(pushed[i] > 0.0 && x[b][i] > 0.0) {
                return None;
            }
            v[i] = pushed[i].ln() - x[b][i].ln();
        }
        blocks.push(v);
    }
    Some(PairField::from_blocks(blocks))
}

fn positive_domain(loss: &LocalLossFamily) -> bool {
    matches!(loss.kind(), LossKind::FreeEnergy { .. })
}

fn newton_residual(f: &Cofunctor, loss: &LocalLossFamily, ev: &Eval) -> Option<PairField> {
    if positive_domain(loss) {
        log_defect(f, &ev.x)
    } else {
        Some(ev.r.clone())
    }
}

/// Jacobian of [`log_defect`] along `x(l)`: rows of `δ` rescaled by
/// `1 / (F x_a)` and `1 / x_b`.
fn log_residual_jacobian(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    l: &PairField,
    x: &SectionVector,
) -> Result<DMatrix<f64>> {
    let y = f.zeta_dual(&f.dual_d(l)?)?;
    let n = f.total_dim();
    let mut dg = DMatrix::zeros(n, n);
    let mut col_off = Vec::with_capacity(y.len());
    let mut off = 0;
    for a in 0..y.len() {
        let j = loss.inverse_grad_jacobian(a, &y[a])?;
        dg.view_mut((off, off), j.shape()).copy_from(&j);
        col_off.push(off);
        off += y[a].len();
    }
    let delta = f.delta_matrix();
    let mut rows = delta.clone();
    let mut row = 0;
    for (&(a, b), m) in f.pairs().iter().zip(f.maps()) {
        let pushed = m * &x[a];
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                rows[(row, col_off[a] + j)] /= pushed[i];
            }
            rows[(row, col_off[b] + i)] /= x[b][i];
            row += 1;
        }
    }
    Ok(rows * dg * f.zeta_dual_matrix() * delta.transpose())
}

fn newton_update(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    l: &PairField,
    ev: &Eval,
) -> Result<PairField> {
    let (jac, r) = if positive_domain(loss) {
        let r = log_defect(f, &ev.x).ok_or_else(|| {
            Error::NumericalOverflow("current point left the positive orthant".into())
        })?;
        (log_residual_jacobian(f, loss, l, &ev.x)?, r)
    } else {
        (residual_jacobian(f, loss, l)?, ev.r.clone())
    };
    let step = lstsq(&jac, &(-r.flatten()))?;
    if !step.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem("Newton step is not finite".into()));
    }
    let step = PairField::from_flat(&step, &f.pair_dims());
    let r0 = r.norm();
    // Backtrack only when the full step makes the residual worse.
    let mut t = 1.0;
    for _ in 0..60 {
        let cand = l.axpy(t, &step);
        if let Ok(ev) = evaluate(f, loss, &cand) {
            if let Some(rc) = newton_residual(f, loss, &ev) {
                if (rc.norm() < r0 || r0 == 0.0) && loss.grad_all(&ev.x).is_ok() {
                    return Ok(cand);
                }
            }
        }
        t *= 0.5;
    }
    Ok(l.clone())
}

/// One Newton iteration on `R(l) = 0`, solved in least squares because the
/// multiplier parameterization has gauge directions.
pub fn newton_step(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    s: &MessageState,
    _cfg: &SolverConfig,
) -> Result<MessageState> {
    check_inputs(f, loss, &s.l)?;
    let ev = evaluate(f, loss, &s.l)?;
    let l = newton_update(f, loss, &s.l, &ev)?;
    Ok(MessageState {
        l,
        t: s.t + 1,
        history: s.history.clone(),
    })
}

/// Iterates the configured step from `l0` and certifies the result.
///
/// A run is reported converged only when the message change is below
/// `tol_message` and, at `x* = x(l*)`, both `‖δ x*‖∞` and the stationarity
/// residual are below `tol_residual`. For free energies the defect
/// [`log_defect`] must be below `tol_residual` as well.
pub fn solve(
    f: &Cofunctor,
    loss: &LocalLossFamily,
    l0: &PairField,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.check()?;
    check_inputs(f, loss, l0)?;
    if !matches!(cfg.method, Method::Generic | Method::Newton) {
        return Err(Error::Config(format!(
            "method {:?} is not a multiplier solver",
            cfg.method
        )));
    }
    let poset = f.poset();
    let row_for = |iter: usize, delta: f64, ev: &Eval| -> Result<TraceRow> {
        let stationarity = match loss.grad_all(&ev.x) {
            Ok(grad) => f.stationarity_residual(&grad)?,
            Err(_) => f64::INFINITY,
        };
        Ok(TraceRow {
            iter,
            msg_delta: delta,
            constraint_norm: ev.r.sup_norm(),
            stationarity,
            value: loss.regionalized_value(poset, &ev.x).unwrap_or(f64::NAN),
        })
    };

    let mut l = l0.clone();
    let mut ev = evaluate(f, loss, &l)?;
    let mut trace = Vec::new();
    let mut last = row_for(0, f64::INFINITY, &ev)?;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iters {
        let next = match cfg.method {
            Method::Newton => newton_update(f, loss, &l, &ev)?,
            _ => l.axpy(cfg.step_sign.factor() * cfg.damping, &ev.r),
        };
        let delta = next.sub(&l).sup_norm();
        l = next;
        ev = evaluate(f, loss, &l)?;
        last = row_for(it, delta, &ev)?;
        if cfg.record_trace {
            trace.push(last);
        }
        iterations = it;
        // On the positive orthant the defect must also be small relative to x.
        let relative_ok = !positive_domain(loss)
            || log_defect(f, &ev.x).is_some_and(|d| d.sup_norm() <= cfg.tol_residual);
        if delta <= cfg.tol_message
            && last.constraint_norm <= cfg.tol_residual
            && last.stationarity <= cfg.tol_residual
            && relative_ok
        {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        x_star: ev.x,
        l_star: l,
        converged,
        iterations,
        final_residuals: Residuals {
            message_delta: last.msg_delta,
            constraint_norm: last.constraint_norm,
            stationarity: last.stationarity,
        },
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poset::Poset;
    use nalgebra::DVector;

    fn scalar_chain(b_top: f64, b_bottom: f64) -> (Cofunctor, LocalLossFamily) {
        // index 0 is the lower element, 1 the upper one
        let f = Cofunctor::from_fn(Poset::chain(2), vec![1, 1], |_, _| DMatrix::identity(1, 1)).unwrap();
        let loss = LocalLossFamily::quadratic(
            vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)],
            vec![DVector::from_element(1, b_bottom), DVector::from_element(1, b_top)],
        )
        .unwrap();
        (f, loss)
    }

    #[test]
    fn current_point_at_zero() {
        let f = Cofunctor::from_fn(Poset::chain(2), vec![2, 2], |_, _| DMatrix::identity(2, 2)).unwrap();
        let fe = LocalLossFamily::free_energy(vec![DVector::zeros(2), DVector::zeros(2)], 1.0).unwrap();
        let x = current_point(&f, &fe, &f.zero_pairs()).unwrap();
        for b in x.iter() {
            for v in b.iter() {
                assert!((v - (-1f64).exp()).abs() < 1e-15);
            }
        }
        let q = LocalLossFamily::quadratic(
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            vec![DVector::zeros(2), DVector::zeros(2)],
        )
        .unwrap();
        assert_eq!(current_point(&f, &q, &f.zero_pairs()).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn scalar_affine_recursion() {
        // x_top = b_top, x_bottom = b_bottom - l, R(l) = l + b_top - b_bottom.
        let (f, loss) = scalar_chain(1.0, 3.0);
        let l0 = PairField::from_vecs(vec![vec![0.25]]);
        let s = MessageState::new(l0);
        let literal = SolverConfig {
            damping: 1.0,
            step_sign: StepSign::Literal,
            ..Default::default()
        };
        let s1 = generic_step(&f, &loss, &s, &literal).unwrap();
        assert!((s1.l[0][0] - (0.25 + (0.25 + 1.0 - 3.0))).abs() < 1e-15);
        let restoring = SolverConfig {
            damping: 1.0,
            ..Default::default()
        };
        let s1 = generic_step(&f, &loss, &s, &restoring).unwrap();
        assert!((s1.l[0][0] - (0.25 - (0.25 + 1.0 - 3.0))).abs() < 1e-15);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn zero_damping_freezes() {
        let (f, loss) = scalar_chain(1.0, 3.0);
        let s = MessageState::new(PairField::from_vecs(vec![vec![0.7]]));
        let cfg = SolverConfig::default().with_damping(0.0);
        assert_eq!(generic_step(&f, &loss, &s, &cfg).unwrap().l, s.l);
    }

    #[test]
    fn fix_point_unchanged() {
        let (f, loss) = scalar_chain(1.0, 3.0);
        // root: l = b_bottom - b_top
        let s = MessageState::new(PairField::from_vecs(vec![vec![2.0]]));
        let s1 = generic_step(&f, &loss, &s, &SolverConfig::default()).unwrap();
        assert_eq!(s1.l, s.l);
        let s2 = newton_step(&f, &loss, &s, &SolverConfig::default()).unwrap();
        assert!((s2.l[0][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_chain_solves() {
        let (f, loss) = scalar_chain(1.0, 3.0);
        for method in [Method::Generic, Method::Newton] {
            let cfg = SolverConfig::default().with_method(method);
            let rep = solve(&f, &loss, &f.zero_pairs(), &cfg).unwrap();
            assert!(rep.converged, "{method:?}");
            assert!((rep.x_star[0][0] - 1.0).abs() < 1e-8);
            assert!((rep.x_star[1][0] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn literal_sign_diverges() {
        let (f, loss) = scalar_chain(1.0, 3.0);
        let cfg = SolverConfig {
            step_sign: StepSign::Literal,
            max_iters: 200,
            ..Default::default()
        };
        let rep = solve(&f, &loss, &f.zero_pairs(), &cfg).unwrap();
        assert!(!rep.converged);
        assert!(rep.l_star.sup_norm() > 1e10);
    }

    #[test]
    fn gbp_method_rejected() {
        let (f, loss) = scalar_chain(1.0, 3.0);
        let cfg = SolverConfig::default().with_method(Method::Gbp);
        assert!(matches!(solve(&f, &loss, &f.zero_pairs(), &cfg), Err(Error::Config(_))));
        let bad = SolverConfig::default().with_damping(1.5);
        assert!(bad.check().is_err());
    }
}
