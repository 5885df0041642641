//! Message passing on a noisy channel network: two observers of one hidden
//! variable, each through a strictly positive kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regionalized::{channels, instances, oracle, LocalLossFamily, Method, SolverConfig};

fn main() -> regionalized::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let net = instances::noisy_diamond(&mut rng, [4, 3], 2);
    let h = instances::random_hamiltonians(&mut rng, net.state_spaces(), 2.0);
    let rep = channels::channel_solve(&net, &h, &SolverConfig::default().with_method(Method::Channel))?;
    println!("converged {} after {} iterations", rep.converged, rep.iterations);

    let loss = LocalLossFamily::free_energy(h, 1.0)?;
    let (q, _) = oracle::brute_force_min(net.pushforward_cofunctor(), &loss, true, 0)?;
    for a in 0..net.poset().len() {
        println!("{}: {:?}  oracle gap {:.1e}", net.poset().name(a), rep.x_star[a].as_slice(), (&rep.x_star[a] - &q[a]).amax());
    }
    let pushed = net.kernel(0, 2) * &rep.x_star[0];
    println!("K b_a - b_b = {:.1e}", (pushed - &rep.x_star[2]).amax());
    Ok(())
}
