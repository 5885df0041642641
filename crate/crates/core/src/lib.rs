//! Regionalized optimization over finite posets.
//!
//! Local losses `f_a` defined on the spaces `F(a)` of a cofunctor over a
//! finite poset are combined into the regionalized loss
//! `f_R = Σ_a c(a) f_a`, with `c(a) = Σ_{b ≥ a} μ(b, a)`, and minimized over
//! the compatible sections `lim F`. Critical points are found by message
//! passing on Lagrange multipliers and certified by a stationarity residual.

mod beliefs;
pub mod blocks;
pub mod cli;
pub mod channels;
pub mod error;
pub mod functor;
pub mod gbp;
pub mod instances;
pub mod linalg;
pub mod loss;
pub mod oracle;
pub mod poset;
pub mod solver;

pub use beliefs::{BeliefState, BottomUp};
pub use blocks::{DualVector, PairField, SectionVector};
pub use error::{Error, Result};
pub use functor::Cofunctor;
pub use loss::LocalLossFamily;
pub use poset::Poset;
pub use solver::{Method, SolveReport, SolverConfig, StepSign};
pub use channels::KernelNetwork;
pub use gbp::RegionGraphProblem;
