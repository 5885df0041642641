//! Generic message passing and Newton on a random quadratic instance,
//! checked against the KKT solution.
//!
//! The generic iteration is a fixed-step scheme: too much damping weight
//! overshoots and the iterates blow up, which is reported as an error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regionalized::{instances, oracle, solver, Method, SolverConfig};

fn main() -> regionalized::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (f, loss) = instances::random_quadratic_instance(&mut rng, 5, 0.1, true);
    let (truth, _) = oracle::kkt_solve_quadratic(&f, &loss)?;

    let runs = [(Method::Generic, 0.5), (Method::Generic, 0.2), (Method::Generic, 0.05), (Method::Newton, 1.0)];
    for (method, damping) in runs {
        let cfg = SolverConfig::default().with_method(method).with_damping(damping);
        match solver::solve(&f, &loss, &f.zero_pairs(), &cfg) {
            Ok(rep) => println!(
                "{method:?} (damping {damping}): converged {} in {} iterations, constraint {:.1e}, gap to KKT {:.1e}",
                rep.converged,
                rep.iterations,
                rep.final_residuals.constraint_norm,
                rep.x_star.sub(&truth).sup_norm()
            ),
            Err(e) => println!("{method:?} (damping {damping}): {e}"),
        }
    }
    Ok(())
}
