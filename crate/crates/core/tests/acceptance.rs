//! Acceptance suite. Each criterion prints one line with its verdict, the
//! measured quantity and the wall time against its budget; the process exits
//! nonzero if any criterion fails.

use std::fmt::Display;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regionalized::blocks::{DualVector, SectionVector};
use regionalized::channels::{self, from_region_problem};
use regionalized::error::Error;
use regionalized::cli::{self, ProblemFile, ResultFile};
use regionalized::functor::Cofunctor;
use regionalized::gbp::{self, RegionGraphProblem};
use regionalized::instances;
use regionalized::loss::LocalLossFamily;
use regionalized::oracle;
use regionalized::poset::Poset;
use regionalized::solver::{self, Method, SolveReport, SolverConfig};

type Check = std::result::Result<String, String>;

fn fail<E: Display>(e: E) -> String {
    e.to_string()
}

fn sup_gap(a: &SectionVector, b: &SectionVector) -> f64 {
    a.sub(b).sup_norm()
}

fn max(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

// 1. Möbius exactness

fn mobius_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut largest = 0;
    for t in 0..200 {
        let n = rng.gen_range(1..=64);
        let density = rng.gen_range(0.05..0.6);
        let p = instances::random_poset(&mut rng, n, density);
        largest = largest.max(n);
        let z = p.zeta_matrix();
        let m = p.mobius_matrix();
        for a in 0..n {
            for b in 0..n {
                let zm: i64 = (0..n).map(|c| z[a][c] * m[c][b]).sum();
                let mz: i64 = (0..n).map(|c| m[a][c] * z[c][b]).sum();
                let id = i64::from(a == b);
                if zm != id || mz != id {
                    return Err(format!("poset {t} (n = {n}): zeta*mobius[{a}][{b}] = {zm}"));
                }
            }
        }
    }
    for k in 0..=5 {
        let p = Poset::powerset(k);
        for a in 0..p.len() {
            for b in 0..p.len() {
                let got = p.mobius_or_zero(a, b);
                let want = if b & !a == 0 {
                    if (a & !b).count_ones() % 2 == 0 { 1 } else { -1 }
                } else {
                    0
                };
                if got != want {
                    return Err(format!("powerset {k}: mu({a:b}, {b:b}) = {got}, expected {want}"));
                }
            }
        }
    }
    Ok(format!("200 posets up to n = {largest}, powersets k <= 5 exact"))
}

// 2. Powerset exactness of the region free energy

fn powerset_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h: Vec<f64> = (0..8).map(|_| rng.gen_range(-5.0..=5.0)).collect();
        let p = instances::powerset_region_problem(&[2, 2, 2], h).map_err(fail)?;
        let joint = oracle::joint_hamiltonian(&p).map_err(fail)?;
        let d = oracle::exact_gibbs(&joint, 1.0).map_err(fail)?;
        let q = oracle::exact_marginals(&d, &p).map_err(fail)?;
        let f = gbp::region_free_energy(&p, &q).map_err(fail)?;
        worst = worst.max((f + d.log_z).abs());
    }
    if worst <= 1e-9 {
        Ok(format!("max |F(q) + ln Z| = {worst:.2e} <= 1e-9"))
    } else {
        Err(format!("max |F(q) + ln Z| = {worst:.2e} > 1e-9"))
    }
}

// 3. Certificate soundness

fn quadratic_stationarity(f: &Cofunctor, loss: &LocalLossFamily, x: &SectionVector) -> Result<f64, String> {
    f.stationarity_residual(&loss.grad_all(x).map_err(fail)?).map_err(fail)
}

fn certificate_soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_at_opt: f64 = 0.0;
    let mut least_perturbed = f64::INFINITY;
    let mut directions = 0;
    for _ in 0..50 {
        let (f, loss) = instances::random_quadratic_instance(&mut rng, 8, 0.05, false);
        let (x, _) = oracle::kkt_solve_quadratic(&f, &loss).map_err(fail)?;
        worst_at_opt = worst_at_opt.max(quadratic_stationarity(&f, &loss, &x)?);
        for v in f.limit_basis() {
            let moved = x.axpy(1e-2, &v);
            least_perturbed = least_perturbed.min(quadratic_stationarity(&f, &loss, &moved)?);
            directions += 1;
        }
    }
    let msg = format!(
        "optimum residual {worst_at_opt:.2e} <= 1e-8, min perturbed residual {least_perturbed:.2e} > 1e-4 over {directions} directions"
    );
    if worst_at_opt <= 1e-8 && least_perturbed > 1e-4 { Ok(msg) } else { Err(msg) }
}

// 4. Fix-point certification

/// Certificates recomputed from the returned point, not read from the report.
fn recompute_certificates(f: &Cofunctor, loss: &LocalLossFamily, x: &SectionVector, normalized: bool) -> Result<(f64, f64), String> {
    let c = f.delta(x).map_err(fail)?.sup_norm();
    let g = loss.grad_all(x).map_err(fail)?;
    let s = if normalized {
        f.stationarity_residual_normalized(&g)
    } else {
        f.stationarity_residual(&g)
    }
    .map_err(fail)?;
    Ok((c, s))
}

#[derive(Default)]
struct Tally {
    converged: usize,
    runs: usize,
    worst: f64,
}

impl Tally {
    fn record(&mut self, rep: &SolveReport, cert: impl FnOnce() -> Result<(f64, f64), String>) -> Result<(), String> {
        self.runs += 1;
        if rep.converged {
            self.converged += 1;
            let (c, s) = cert()?;
            self.worst = self.worst.max(c).max(s);
        }
        Ok(())
    }
}

/// A diverging generic run stops with an overflow error; it is a
/// non-converged run, anything else is a failure.
fn generic_run(f: &Cofunctor, loss: &LocalLossFamily, cfg: &SolverConfig) -> Result<Option<SolveReport>, String> {
    match solver::solve(f, loss, &f.zero_pairs(), cfg) {
        Ok(r) => Ok(Some(r)),
        Err(Error::NumericalOverflow(_)) => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

fn fixpoint_certification() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut generic, mut newton, mut gbp_t, mut chan) =
        (Tally::default(), Tally::default(), Tally::default(), Tally::default());

    for _ in 0..10 {
        let (f, loss) = instances::random_quadratic_instance(&mut rng, 8, 0.05, true);
        match generic_run(&f, &loss, &SolverConfig::default())? {
            Some(rep) => generic.record(&rep, || recompute_certificates(&f, &loss, &rep.x_star, false))?,
            None => generic.runs += 1,
        }
        let rep = solver::solve(&f, &loss, &f.zero_pairs(), &SolverConfig::default().with_method(Method::Newton)).map_err(fail)?;
        newton.record(&rep, || recompute_certificates(&f, &loss, &rep.x_star, false))?;
    }

    let mut regions: Vec<RegionGraphProblem> = Vec::new();
    for _ in 0..3 {
        regions.push(instances::diamond_region_problem(&mut rng, [2, 3, 2], 1.0));
        regions.push(instances::two_region_problem(&mut rng, [3, 2], 1.0));
        regions.push(instances::three_level_problem(&mut rng, [2, 2, 2, 2], 1.0));
    }
    for p in &regions {
        let f = p.marginalization_cofunctor();
        let loss = p.free_energy_loss();
        let rep = gbp::gbp_solve(p, &SolverConfig::default().with_method(Method::Gbp)).map_err(fail)?;
        gbp_t.record(&rep, || recompute_certificates(f, &loss, &rep.x_star, true))?;
        let rep = solver::solve(f, &loss, &f.zero_pairs(), &SolverConfig::default().with_method(Method::Newton)).map_err(fail)?;
        newton.record(&rep, || recompute_certificates(f, &loss, &rep.x_star, false))?;
    }

    for i in 0..6 {
        let net = if i % 2 == 0 {
            instances::noisy_chain(&mut rng, &[3, 2, 4])
        } else {
            instances::noisy_diamond(&mut rng, [3, 4], 2)
        };
        let h = instances::random_hamiltonians(&mut rng, net.state_spaces(), 2.0);
        let rep = channels::channel_solve(&net, &h, &SolverConfig::default().with_method(Method::Channel)).map_err(fail)?;
        let loss = LocalLossFamily::free_energy(h.clone(), 1.0).map_err(fail)?;
        chan.record(&rep, || recompute_certificates(net.pushforward_cofunctor(), &loss, &rep.x_star, true))?;
    }

    // frozen dynamics: no damping means the messages never move
    let p = instances::diamond_region_problem(&mut rng, [2, 2, 2], 1.0);
    let cfg = SolverConfig { max_iters: 200, ..SolverConfig::default().with_method(Method::Gbp).with_damping(0.0) };
    let frozen_gbp = gbp::gbp_solve(&p, &cfg).map_err(fail)?;
    let (f, loss) = instances::random_quadratic_instance(&mut rng, 6, 0.05, true);
    let cfg = SolverConfig { max_iters: 200, ..SolverConfig::default().with_damping(0.0) };
    let frozen_generic = solver::solve(&f, &loss, &f.zero_pairs(), &cfg).map_err(fail)?;
    let frozen_ok = [&frozen_gbp, &frozen_generic]
        .iter()
        .all(|r| !r.converged && r.iterations == 200 && r.l_star.sup_norm() == 0.0);

    let worst = max([generic.worst, newton.worst, gbp_t.worst, chan.worst]);
    let summary = format!(
        "converged generic {}/{}, newton {}/{}, gbp {}/{}, channel {}/{}; worst recomputed certificate {worst:.2e} <= 1e-7; damping 0 reported non-converged: {frozen_ok}",
        generic.converged, generic.runs, newton.converged, newton.runs, gbp_t.converged, gbp_t.runs, chan.converged, chan.runs
    );
    let every_method = [&generic, &newton, &gbp_t, &chan].iter().all(|t| t.converged > 0);
    if worst <= 1e-7 && frozen_ok && every_method { Ok(summary) } else { Err(summary) }
}

// 5. Quadratic ground truth

fn quadratic_ground_truth() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut newton_gap, mut generic_gap): (f64, f64) = (0.0, 0.0);
    let mut generic_converged = 0;
    let mut newton_failed = 0;
    for _ in 0..50 {
        let (f, loss) = instances::random_quadratic_instance(&mut rng, 8, 0.05, false);
        let (x, _) = oracle::kkt_solve_quadratic(&f, &loss).map_err(fail)?;
        let rep = solver::solve(&f, &loss, &f.zero_pairs(), &SolverConfig::default().with_method(Method::Newton)).map_err(fail)?;
        if !rep.converged {
            newton_failed += 1;
        }
        newton_gap = newton_gap.max(sup_gap(&rep.x_star, &x));
        let rep = generic_run(&f, &loss, &SolverConfig::default().with_damping(0.5))?;
        if let Some(rep) = rep.filter(|r| r.converged) {
            generic_converged += 1;
            generic_gap = generic_gap.max(sup_gap(&rep.x_star, &x));
        }
    }
    let msg = format!(
        "newton gap {newton_gap:.2e} <= 1e-7 ({newton_failed} non-converged), generic gap {generic_gap:.2e} <= 1e-5 on {generic_converged}/50 converged"
    );
    if newton_gap <= 1e-7 && newton_failed == 0 && generic_gap <= 1e-5 { Ok(msg) } else { Err(msg) }
}

// 6. Singly connected exactness

fn singly_connected_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for c1 in [2, 3] {
        for c2 in [2, 3] {
            for _ in 0..5 {
                let p = instances::two_region_problem(&mut rng, [c1, c2], 2.0);
                let rep = gbp::gbp_solve(&p, &SolverConfig::default().with_method(Method::Gbp)).map_err(fail)?;
                if !rep.converged {
                    return Err(format!("two-region instance with cardinalities ({c1}, {c2}) did not converge"));
                }
                let d = oracle::exact_gibbs(&oracle::joint_hamiltonian(&p).map_err(fail)?, 1.0).map_err(fail)?;
                let q = oracle::exact_marginals(&d, &p).map_err(fail)?;
                worst = worst.max(sup_gap(&rep.x_star, &q));
                n += 1;
            }
        }
    }
    let msg = format!("{n} instances, max belief gap to exact marginals {worst:.2e} <= 1e-6");
    if worst <= 1e-6 { Ok(msg) } else { Err(msg) }
}

// 7. Generic and GBP equivalence

fn generic_gbp_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let p = match i % 3 {
            0 => instances::diamond_region_problem(&mut rng, [2, 3, 2], 1.5),
            1 => instances::three_level_problem(&mut rng, [2, 2, 3, 2], 1.5),
            _ => instances::two_region_problem(&mut rng, [3, 2], 1.5),
        };
        let l = instances::random_pairs(&mut rng, p.marginalization_cofunctor());
        worst = worst.max(gbp::gbp_equivalence_check(&p, &l).map_err(fail)?);
    }
    let msg = format!("20 states on diamond, three-level and two-region posets, max gap {worst:.2e} <= 1e-9");
    if worst <= 1e-9 { Ok(msg) } else { Err(msg) }
}

// 8. Channel to GBP reduction

fn channel_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let problems = [
        ("diamond", instances::diamond_region_problem(&mut rng, [2, 3, 2], 1.0)),
        ("three-level", instances::three_level_problem(&mut rng, [2, 2, 2, 3], 1.0)),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, p) in &problems {
        let (net, h) = from_region_problem(p).map_err(fail)?;
        let g = gbp::gbp_solve(p, &SolverConfig::default().with_method(Method::Gbp)).map_err(fail)?;
        let c = channels::channel_solve(&net, &h, &SolverConfig::default().with_method(Method::Channel)).map_err(fail)?;
        let gap = sup_gap(&g.x_star, &c.x_star);
        ok &= g.converged && c.converged && gap <= 1e-6;
        parts.push(format!("{name} gap {gap:.2e}"));
    }
    let msg = format!("{} <= 1e-6", parts.join(", "));
    if ok { Ok(msg) } else { Err(msg) }
}

// 9. Noisy channel fixed points

fn noisy_channels() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_cert, mut worst_gap): (f64, f64) = (0.0, 0.0);
    for i in 0..10 {
        let net = if i < 5 {
            let sizes: Vec<usize> = (0..3).map(|_| rng.gen_range(2..=4)).collect();
            instances::noisy_chain(&mut rng, &sizes)
        } else {
            let upper = [rng.gen_range(2..=4), rng.gen_range(2..=4)];
            let lower = rng.gen_range(2..=4);
            instances::noisy_diamond(&mut rng, upper, lower)
        };
        if !net.strictly_positive() {
            return Err(format!("network {i} is not strictly positive"));
        }
        let h = instances::random_hamiltonians(&mut rng, net.state_spaces(), 3.0);
        // feasible sets that shrink to the uniform point converge linearly but slowly
        let cfg = SolverConfig { max_iters: 100_000, ..SolverConfig::default().with_method(Method::Channel) };
        let rep = channels::channel_solve(&net, &h, &cfg).map_err(fail)?;
        if !rep.converged {
            return Err(format!("network {i} did not converge after {} iterations", rep.iterations));
        }
        let loss = LocalLossFamily::free_energy(h, 1.0).map_err(fail)?;
        let (c, s) = recompute_certificates(net.pushforward_cofunctor(), &loss, &rep.x_star, true)?;
        worst_cert = worst_cert.max(c).max(s);
        let (q, _) = oracle::brute_force_min(net.pushforward_cofunctor(), &loss, true, 9 + i as u64).map_err(fail)?;
        worst_gap = worst_gap.max(sup_gap(&rep.x_star, &q));
    }
    let msg = format!("10 networks, certificates {worst_cert:.2e} <= 1e-6, oracle gap {worst_gap:.2e} <= 1e-5");
    if worst_cert <= 1e-6 && worst_gap <= 1e-5 { Ok(msg) } else { Err(msg) }
}

// 10. Gradient checks

fn gradient_error(loss: &LocalLossFamily, x: &DVector<f64>) -> Result<f64, String> {
    let g = loss.grad(0, x).map_err(fail)?;
    let fd = oracle::finite_diff_grad(|z| loss.value(0, z), x, 1e-5).map_err(fail)?;
    Ok((&g - fd).amax() / g.amax().max(1.0))
}

fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut fe, mut quad): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let k = rng.gen_range(1..=6);
        let h = DVector::from_fn(k, |_, _| rng.gen_range(-2.0..2.0));
        let beta = rng.gen_range(0.5..2.0);
        let loss = LocalLossFamily::free_energy(vec![h], beta).map_err(fail)?;
        let x = DVector::from_fn(k, |_, _| rng.gen_range(0.1..2.0));
        fe = fe.max(gradient_error(&loss, &x)?);

        let a = instances::random_spd(&mut rng, k);
        let b = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let loss = LocalLossFamily::quadratic(vec![a], vec![b]).map_err(fail)?;
        let x = DVector::from_fn(k, |_, _| rng.gen_range(-2.0..2.0));
        quad = quad.max(gradient_error(&loss, &x)?);
    }
    let msg = format!("max relative error free energy {fe:.2e}, quadratic {quad:.2e} <= 1e-6");
    if fe <= 1e-6 && quad <= 1e-6 { Ok(msg) } else { Err(msg) }
}

// 11. Adjointness and inversion

fn adjointness_inversion() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut adj, mut inv): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let p = instances::random_poset(&mut rng, n, 0.4);
        let f = instances::random_cofunctor(&mut rng, &p);
        let l = instances::random_pairs(&mut rng, &f);
        let v = instances::random_section(&mut rng, f.dims());
        let lhs = f.dual_d(&l).map_err(fail)?.dot(&v);
        let rhs = l.dot(&f.delta(&v).map_err(fail)?);
        adj = adj.max((lhs - rhs).abs());
        let y: DualVector = instances::random_section(&mut rng, f.dims()).cast();
        let back = f.mobius_dual(&f.zeta_dual(&y).map_err(fail)?).map_err(fail)?;
        let forth = f.zeta_dual(&f.mobius_dual(&y).map_err(fail)?).map_err(fail)?;
        inv = inv.max(back.sub(&y).sup_norm()).max(forth.sub(&y).sup_norm());
    }
    let msg = format!("adjointness gap {adj:.2e}, inversion gap {inv:.2e} <= 1e-10");
    if adj <= 1e-10 && inv <= 1e-10 { Ok(msg) } else { Err(msg) }
}

// 12. CLI contract

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn regopt(args: &[&str]) -> Result<Run, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_regopt")).args(args).output().map_err(fail)?;
    Ok(Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    })
}

fn expect(cond: bool, what: &str) -> Result<(), String> {
    if cond { Ok(()) } else { Err(what.to_string()) }
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn cli_contract() -> Check {
    let valid = ["diamond_gbp.json", "powerset_12.json", "quadratic_newton.json", "kernels_chain.json", "kernels_diamond.json", "oversized.json"];
    for name in valid {
        let file = data(name);
        let r = regopt(&["validate", path_str(&file)])?;
        expect(r.code == 0, &format!("validate {name} exited {}: {}", r.code, r.stderr))?;
        let text = std::fs::read_to_string(&file).map_err(fail)?;
        let parsed: ProblemFile = cli::parse_problem(&text).map_err(fail)?;
        let again = cli::parse_problem(&cli::serialize_problem(&parsed)).map_err(fail)?;
        expect(parsed == again, &format!("{name} does not survive parse -> serialize -> parse"))?;
    }

    let r = regopt(&["validate", path_str(&data("invalid_kernel.json"))])?;
    expect(r.code == 1 && r.stderr.contains("top->bottom") && r.stderr.contains("column 0"), &format!("invalid kernel: exit {}, {}", r.code, r.stderr))?;
    let r = regopt(&["validate", path_str(&data("cyclic.json"))])?;
    expect(r.code == 1 && r.stderr.contains("cycle") && r.stderr.contains("x <= y <= z <= x"), &format!("cyclic: exit {}, {}", r.code, r.stderr))?;

    let dir = tempfile::tempdir().map_err(fail)?;
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, "{\"format_version\": 1, \"poset\": ").map_err(fail)?;
    let r = regopt(&["validate", path_str(&broken)])?;
    expect(r.code == 2, &format!("malformed file exited {}", r.code))?;
    let r = regopt(&["validate", path_str(&dir.path().join("missing.json"))])?;
    expect(r.code == 2, &format!("missing file exited {}", r.code))?;

    // diamond GBP: converged with certificates, reproducible bytes
    let diamond = data("diamond_gbp.json");
    let (out1, out2, trace) = (dir.path().join("r1.json"), dir.path().join("r2.json"), dir.path().join("t.csv"));
    let r = regopt(&["solve", path_str(&diamond), "--out", path_str(&out1), "--trace", path_str(&trace), "--seed", "3"])?;
    expect(r.code == 0, &format!("solve diamond exited {}: {}", r.code, r.stderr))?;
    let r = regopt(&["solve", path_str(&diamond), "--out", path_str(&out2), "--seed", "3"])?;
    expect(r.code == 0, "second diamond solve failed")?;
    let (b1, b2) = (std::fs::read(&out1).map_err(fail)?, std::fs::read(&out2).map_err(fail)?);
    expect(b1 == b2, "reruns are not byte-identical")?;
    let res: ResultFile = serde_json::from_slice(&b1).map_err(fail)?;
    expect(res.converged && res.residuals.constraint_norm <= 1e-7 && res.residuals.stationarity <= 1e-7, "diamond result lacks certificates")?;
    let input = std::fs::read(&diamond).map_err(fail)?;
    expect(res.problem_sha256 == cli::sha256_hex(&input), "problem hash mismatch")?;
    let csv = std::fs::read_to_string(&trace).map_err(fail)?;
    expect(csv.lines().next() == Some("iter,msg_delta,constraint_norm,stationarity,f_R"), "trace header")?;
    expect(csv.lines().count() == res.trace.len() + 1, "trace rows")?;
    let stdout = regopt(&["solve", path_str(&diamond), "--seed", "3"])?.stdout;
    expect(stdout.as_bytes() == b1.as_slice(), "stdout differs from --out file")?;

    // quadratic + Newton: the first step lands on the optimum
    let r = regopt(&["solve", path_str(&data("quadratic_newton.json"))])?;
    expect(r.code == 0, &format!("quadratic solve exited {}", r.code))?;
    let res: ResultFile = serde_json::from_str(&r.stdout).map_err(fail)?;
    let first = res.trace.first().ok_or("empty trace")?;
    expect(first.constraint_norm <= 1e-12 && first.stationarity <= 1e-12, &format!("newton first step left constraint {:.2e}", first.constraint_norm))?;

    // frozen dynamics
    let r = regopt(&["solve", path_str(&diamond), "--damping", "0", "--max-iters", "25"])?;
    expect(r.code == 3, &format!("damping 0 exited {}", r.code))?;
    let res: ResultFile = serde_json::from_str(&r.stdout).map_err(fail)?;
    expect(!res.converged && res.iterations == 25, "damping 0 report")?;
    expect(res.trace.iter().all(|t| t.msg_delta == 0.0), "messages moved with damping 0")?;

    // oracle comparison
    let mut gaps = Vec::new();
    for (name, tol) in [("powerset_12.json", 1e-6), ("quadratic_newton.json", 1e-7)] {
        let r = regopt(&["oracle-compare", path_str(&data(name))])?;
        expect(r.code == 0, &format!("oracle-compare {name} exited {}: {}", r.code, r.stderr))?;
        let c: cli::Comparison = serde_json::from_str(&r.stdout).map_err(fail)?;
        expect(c.max_gap <= tol, &format!("{name}: gap {:.2e} > {tol:e}", c.max_gap))?;
        gaps.push(format!("{name} {:.1e}", c.max_gap));
    }
    let r = regopt(&["oracle-compare", path_str(&data("oversized.json"))])?;
    expect(r.code == 4 && r.stderr.contains("cap is 20"), &format!("oversized: exit {}, {}", r.code, r.stderr))?;

    Ok(format!("exit codes 0/1/2/3/4, round-trips, byte-identical reruns; oracle gaps {}", gaps.join(", ")))
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { name: "mobius exactness", budget: secs(5), run: mobius_exactness },
        Criterion { name: "powerset free energy exactness", budget: secs(1), run: powerset_exactness },
        Criterion { name: "certificate soundness", budget: secs(10), run: certificate_soundness },
        Criterion { name: "fix-point certification", budget: secs(30), run: fixpoint_certification },
        Criterion { name: "quadratic ground truth", budget: secs(20), run: quadratic_ground_truth },
        Criterion { name: "singly connected exactness", budget: secs(2), run: singly_connected_exactness },
        Criterion { name: "generic and gbp equivalence", budget: secs(5), run: generic_gbp_equivalence },
        Criterion { name: "channel to gbp reduction", budget: secs(5), run: channel_reduction },
        Criterion { name: "noisy channel fixed points", budget: secs(60), run: noisy_channels },
        Criterion { name: "gradient checks", budget: secs(2), run: gradient_checks },
        Criterion { name: "adjointness and inversion", budget: secs(2), run: adjointness_inversion },
        Criterion { name: "cli contract", budget: secs(10), run: cli_contract },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.budget;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<32} {}  {}; {:.2}s of {}s{}",
            i + 1,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            if in_time { "" } else { " (over budget)" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
