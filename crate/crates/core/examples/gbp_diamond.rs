//! Generalized belief propagation on the regions {1,2}, {2,3} over {2}.
//!
//! This region graph is a tree, so the converged beliefs are the exact marginals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regionalized::{gbp, instances, oracle, Method, SolverConfig};

fn main() -> regionalized::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = instances::diamond_region_problem(&mut rng, [2, 2, 3], 1.5);
    let rep = gbp::gbp_solve(&p, &SolverConfig::default().with_method(Method::Gbp))?;
    println!(
        "converged {} after {} iterations (constraint {:.1e}, stationarity {:.1e})",
        rep.converged, rep.iterations, rep.final_residuals.constraint_norm, rep.final_residuals.stationarity
    );

    let d = oracle::exact_gibbs(&oracle::joint_hamiltonian(&p)?, 1.0)?;
    let exact = oracle::exact_marginals(&d, &p)?;
    for a in 0..p.poset().len() {
        let b: Vec<String> = rep.x_star[a].iter().map(|v| format!("{v:.6}")).collect();
        let gap = (&rep.x_star[a] - &exact[a]).amax();
        println!("b[{}] = [{}]  gap {gap:.1e}", p.poset().name(a), b.join(", "));
    }
    println!("F(beliefs) = {:.9}, -ln Z = {:.9}", gbp::region_free_energy(&p, &rep.x_star)?, -d.log_z);
    Ok(())
}
