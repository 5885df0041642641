//! Certifying a constrained critical point of a quadratic regionalized loss.
//!
//! The closed-form optimum has zero constraint and zero stationarity residual;
//! nudging it along the limit moves the stationarity residual off zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regionalized::{instances, oracle};

fn main() -> regionalized::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (f, loss) = instances::random_quadratic_instance(&mut rng, 6, 0.1, true);
    println!("{} elements, dims {:?}, dim lim F = {}", f.poset().len(), f.dims(), f.limit_basis().len());

    let (x, _) = oracle::kkt_solve_quadratic(&f, &loss)?;
    let res = |x: &regionalized::SectionVector| f.stationarity_residual(&loss.grad_all(x)?);
    println!("optimum: constraint {:.1e}, stationarity {:.1e}", f.delta(&x)?.sup_norm(), res(&x)?);
    for (i, v) in f.limit_basis().iter().enumerate() {
        let moved = x.axpy(1e-2, v);
        println!("  moved along basis vector {i}: stationarity {:.1e}", res(&moved)?);
    }
    Ok(())
}
