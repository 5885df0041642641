//! Local loss families `f_a`, their gradients and inverse gradients.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::blocks::SectionVector;
use crate::error::{Error, Result};
use crate::poset::Poset;

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// User-supplied per-element loss.
#[derive(Clone)]
pub struct CustomLoss {
    pub value: ScalarFn,
    pub grad: VectorFn,
    pub inverse_grad: Option<VectorFn>,
}

impl fmt::Debug for CustomLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLoss")
            .field("inverse_grad", &self.inverse_grad.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum LossKind {
    /// `f_a(q) = β⟨q, H_a⟩ + Σ q ln q` on the open positive orthant.
    FreeEnergy {
        hamiltonians: Vec<DVector<f64>>,
        beta: f64,
    },
    /// `f_a(x) = ½⟨x, A_a x⟩ - ⟨b_a, x⟩` with `A_a` symmetric positive-definite.
    Quadratic {
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        a_inv: Vec<DMatrix<f64>>,
    },
    Custom(Vec<CustomLoss>),
}

#[derive(Debug, Clone)]
pub struct LocalLossFamily {
    kind: LossKind,
    names: Vec<String>,
}

impl LocalLossFamily {
    pub fn free_energy(hamiltonians: Vec<DVector<f64>>, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidLoss(format!("beta must be positive, got {beta}")));
        }
        let names = default_names(hamiltonians.len());
        Ok(LocalLossFamily {
            kind: LossKind::FreeEnergy { hamiltonians, beta },
            names,
        })
    }

    pub fn quadratic(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("{} matrices for {} vectors", a.len(), b.len())));
        }
        let mut a_inv = Vec::with_capacity(a.len());
        for (i, (m, v)) in a.iter().zip(&b).enumerate() {
            if !m.is_square() || m.nrows() != v.len() {
                return Err(Error::Shape(format!(
                    "element {i}: A is {:?}, b has length {}",
                    m.shape(),
                    v.len()
                )));
            }
            let asym = (m - m.transpose()).amax();
            if asym > 1e-12 {
                return Err(Error::InvalidLoss(format!(
                    "element {i}: A is not symmetric (defect {asym:.2e})"
                )));
            }
            let chol = m.clone().cholesky().ok_or_else(|| {
                Error::InvalidLoss(format!("element {i}: A is not positive-definite"))
            })?;
            a_inv.push(chol.inverse());
        }
        let names = default_names(a.len());
        Ok(LocalLossFamily {
            kind: LossKind::Quadratic { a, b, a_inv },
            names,
        })
    }

    pub fn custom(losses: Vec<CustomLoss>) -> Self {
        let names = default_names(losses.len());
        LocalLossFamily {
            kind: LossKind::Custom(losses),
            names,
        }
    }

    /// Attaches element names used in error messages.
    pub fn with_names(mut self, poset: &Poset) -> Self {
        self.names = poset.elements().to_vec();
        self
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            LossKind::FreeEnergy { hamiltonians, .. } => hamiltonians.len(),
            LossKind::Quadratic { a, .. } => a.len(),
            LossKind::Custom(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that per-element sizes match `dims`.
    pub fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.len() != dims.len() {
            return Err(Error::Shape(format!(
                "loss family has {} elements, functor has {}",
                self.len(),
                dims.len()
            )));
        }
        let sizes: Vec<Option<usize>> = match &self.kind {
            LossKind::FreeEnergy { hamiltonians, .. } => {
                hamiltonians.iter().map(|h| Some(h.len())).collect()
            }
            LossKind::Quadratic { b, .. } => b.iter().map(|v| Some(v.len())).collect(),
            LossKind::Custom(c) => vec![None; c.len()],
        };
        for (i, (s, &d)) in sizes.iter().zip(dims).enumerate() {
            if let Some(s) = s {
                if *s != d {
                    return Err(Error::Shape(format!(
                        "loss for element `{}` has size {s}, expected {d}",
                        self.names[i]
                    )));
                }
            }
        }
        Ok(())
    }

    fn guard_positive(&self, a: usize, x: &DVector<f64>) -> Result<()> {
        if let Some(v) = x.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Domain {
                element: self.names[a].clone(),
                reason: format!("coordinate {v} is not strictly positive"),
            });
        }
        Ok(())
    }

    pub fn value(&self, a: usize, x: &DVector<f64>) -> Result<f64> {
        match &self.kind {
            LossKind::FreeEnergy { hamiltonians, beta } => {
                self.guard_positive(a, x)?;
                let neg_entropy: f64 = x.iter().map(|&q| q * q.ln()).sum();
                Ok(beta * x.dot(&hamiltonians[a]) + neg_entropy)
            }
            LossKind::Quadratic { a: am, b, .. } => {
                Ok(0.5 * x.dot(&(&am[a] * x)) - b[a].dot(x))
            }
            LossKind::Custom(c) => Ok((c[a].value)(x)),
        }
    }

    pub fn grad(&self, a: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            LossKind::FreeEnergy { hamiltonians, beta } => {
                self.guard_positive(a, x)?;
                Ok(DVector::from_iterator(
                    x.len(),
                    x.iter()
                        .zip(hamiltonians[a].iter())
                        .map(|(&q, &h)| beta * h + q.ln() + 1.0),
                ))
            }
            LossKind::Quadratic { a: am, b, .. } => Ok(&am[a] * x - &b[a]),
            LossKind::Custom(c) => Ok((c[a].grad)(x)),
        }
    }

    /// The map `g_a` with `grad(g_a(y)) = y`.
    pub fn inverse_grad(&self, a: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            LossKind::FreeEnergy { hamiltonians, beta } => Ok(DVector::from_iterator(
                y.len(),
                y.iter()
                    .zip(hamiltonians[a].iter())
                    .map(|(&v, &h)| (v - beta * h - 1.0).exp()),
            )),
            LossKind::Quadratic { b, a_inv, .. } => Ok(&a_inv[a] * (y + &b[a])),
            LossKind::Custom(c) => match &c[a].inverse_grad {
                Some(g) => Ok(g(y)),
                None => Err(Error::MissingInverse(self.names[a].clone())),
            },
        }
    }

    /// Jacobian of `g_a` at `y`.
    ///
    /// Analytic for the built-in families; central differences for custom ones.
    pub fn inverse_grad_jacobian(&self, a: usize, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            LossKind::FreeEnergy { .. } => {
                let x = self.inverse_grad(a, y)?;
                Ok(DMatrix::from_diagonal(&x))
            }
            LossKind::Quadratic { a_inv, .. } => Ok(a_inv[a].clone()),
            LossKind::Custom(_) => {
                let n = y.len();
                let h = 1e-6;
                let mut jac = DMatrix::zeros(n, n);
                for j in 0..n {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[j] += h;
                    ym[j] -= h;
                    let col = (self.inverse_grad(a, &yp)? - self.inverse_grad(a, &ym)?) / (2.0 * h);
                    jac.set_column(j, &col);
                }
                Ok(jac)
            }
        }
    }

    /// Gradient of every local loss, as a dual vector.
    pub fn grad_all(&self, x: &SectionVector) -> Result<crate::blocks::DualVector> {
        let blocks = (0..x.len())
            .map(|a| self.grad(a, &x[a]))
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::blocks::DualVector::from_blocks(blocks))
    }

    /// `f_R(x) = Σ_a c(a) f_a(x_a)`.
    pub fn regionalized_value(&self, poset: &Poset, x: &SectionVector) -> Result<f64> {
        if x.len() != poset.len() || self.len() != poset.len() {
            return Err(Error::Shape(format!(
                "{} blocks, {} losses, {} elements",
                x.len(),
                self.len(),
                poset.len()
            )));
        }
        let mut total = 0.0;
        for a in 0..poset.len() {
            let c = poset.counting(a);
            if c != 0 {
                total += c as f64 * self.value(a, &x[a])?;
            }
        }
        Ok(total)
    }
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn free_energy_fair_coin() {
        let l = LocalLossFamily::free_energy(vec![v(&[0.0, 0.0])], 1.0).unwrap();
        let x = v(&[0.5, 0.5]);
        assert!((l.value(0, &x).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let g = l.grad(0, &x).unwrap();
        for gi in g.iter() {
            assert!((gi - (1.0 - 2f64.ln())).abs() < 1e-15);
        }
    }

    #[test]
    fn free_energy_domain_guard() {
        let l = LocalLossFamily::free_energy(vec![v(&[0.0, 0.0])], 1.0).unwrap();
        assert!(matches!(l.value(0, &v(&[0.0, 1.0])), Err(Error::Domain { .. })));
        assert!(matches!(l.grad(0, &v(&[-1.0, 1.0])), Err(Error::Domain { .. })));
    }

    #[test]
    fn free_energy_inverse_at_one() {
        let l = LocalLossFamily::free_energy(vec![v(&[0.0, 0.0])], 1.0).unwrap();
        let x = l.inverse_grad(0, &v(&[1.0, 1.0])).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn quadratic_basics() {
        let l = LocalLossFamily::quadratic(vec![DMatrix::identity(2, 2)], vec![v(&[0.0, 0.0])]).unwrap();
        let x = v(&[3.0, 4.0]);
        assert_eq!(l.value(0, &x).unwrap(), 12.5);
        assert_eq!(l.grad(0, &x).unwrap(), x);
        assert_eq!(l.inverse_grad(0, &x).unwrap(), x);
    }

    #[test]
    fn quadratic_rejects_bad_matrices() {
        let nonsym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(LocalLossFamily::quadratic(vec![nonsym], vec![v(&[0.0, 0.0])]).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(LocalLossFamily::quadratic(vec![indefinite], vec![v(&[0.0, 0.0])]).is_err());
        assert!(LocalLossFamily::free_energy(vec![], 0.0).is_err());
    }

    #[test]
    fn custom_without_inverse() {
        let c = CustomLoss {
            value: Arc::new(|x| x.norm_squared()),
            grad: Arc::new(|x| x * 2.0),
            inverse_grad: None,
        };
        let l = LocalLossFamily::custom(vec![c]);
        assert_eq!(l.value(0, &v(&[1.0, 2.0])).unwrap(), 5.0);
        assert!(matches!(l.inverse_grad(0, &v(&[1.0])), Err(Error::MissingInverse(_))));
    }

    #[test]
    fn regionalized_value_weights() {
        // antichain: plain sum
        let p = Poset::antichain(2);
        let l = LocalLossFamily::quadratic(
            vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1)],
            vec![v(&[0.0]), v(&[0.0])],
        )
        .unwrap();
        let x = SectionVector::from_vecs(vec![vec![1.0], vec![2.0]]);
        assert_eq!(l.regionalized_value(&p, &x).unwrap(), 2.5);
        // single element
        let p1 = Poset::antichain(1);
        let l1 = LocalLossFamily::quadratic(vec![DMatrix::identity(1, 1)], vec![v(&[1.0])]).unwrap();
        let x1 = SectionVector::from_vecs(vec![vec![2.0]]);
        assert_eq!(l1.regionalized_value(&p1, &x1).unwrap(), l1.value(0, &x1[0]).unwrap());
    }
}
