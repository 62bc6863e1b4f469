//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --test acceptance`. Tolerances are pinned in the
//! constants below; every check is computed by exact enumeration.

use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use locality::influence::{
    action_supremum_baseline, async_influence, logit_lipschitz, policy_sensitivity,
    softmax_pi_bound, InfluenceReport,
};
use locality::lpi::{block_improvement_check, cyclic_pass_check, kl_prox_update};
use locality::mdp::{
    apply_operator, async_kernel, hamming, induced_kernel, policy_reward, FactoredMdp, Policy,
    ProductPolicy, Scope, SoftmaxPolicy, Space, StateFunction,
};
use locality::measures::{oscillation, tv, NonnegMatrix, OscillationVector};
use locality::poisson::{
    certificate_message_passing, discounted_rate, required_radius, solve_poisson,
    solve_poisson_anchored, support_graph, truncated_certificate, LocalityCertificate,
};
use locality::scenarios::{
    random_instance, random_instance_with, scenario_hub_spoke, scenario_leader_follower,
    scenario_leader_follower_with, scenario_sleepy, RandomConfig, Scenario,
};

const EXACT: f64 = 1e-12;
const SOLVER: f64 = 1e-9;
const DECOMPOSITION_BUDGET_SECS: f64 = 60.0;
const RATE_MARGIN: f64 = 0.05;
/// Bias values below this are rounding noise and stay out of the rate fit.
const FIT_FLOOR: f64 = 1e-12;
const SHARPNESS_MIN: f64 = 0.99;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn random_function(rng: &mut Xoshiro256PlusPlus, n: usize) -> StateFunction {
    StateFunction((0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn materialized(sc: &Scenario) -> ProductPolicy {
    sc.policy
        .materialize()
        .expect("scenario policy materializes")
}

/// The four built-in scenarios with default parameters.
fn builtins() -> Vec<Scenario> {
    vec![
        scenario_sleepy(0.3).unwrap(),
        scenario_leader_follower().unwrap(),
        scenario_hub_spoke(3, 1.0, 2.0).unwrap(),
        random_instance(0, 3, 2, 2, 1).unwrap(),
    ]
}

/// Seeded instances with `n <= 3` and `|S_i|, |A_i| <= 3`.
fn random_small(seed: u64) -> Scenario {
    let n = 1 + (seed % 3) as usize;
    let ss = 2 + ((seed / 3) % 2) as usize;
    let aa = 2 + ((seed / 6) % 2) as usize;
    let r = ((seed / 12) % 2) as usize;
    random_instance(seed, n, ss, aa, r).unwrap()
}

/// Weakly coupled instances, so that many have `ρ(H) < 1`.
fn random_weak(seed: u64, coupling: f64) -> Scenario {
    let mut cfg = RandomConfig::new(seed, 3, 2, 2, 1);
    cfg.coupling = coupling;
    random_instance_with(&cfg).unwrap()
}

fn iterate_propagation(h: &NonnegMatrix, v: &[f64], t: usize) -> Vec<f64> {
    (0..t).fold(v.to_vec(), |acc, _| h.propagate(&acc))
}

fn max_excess(lhs: &OscillationVector, rhs: &[f64]) -> f64 {
    lhs.values()
        .iter()
        .zip(rhs)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn c01_decomposition() -> Outcome {
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let mut check = |mdp: &FactoredMdp, pi: &ProductPolicy, label: &str| -> Result<(), String> {
        let rep = InfluenceReport::compute(mdp, pi).map_err(|e| format!("{label}: {e}"))?;
        worst = worst.max(rep.decomposition_slack);
        count += 1;
        if rep.decomposition_slack > EXACT {
            return Err(format!(
                "{label}: C exceeds H by {:e}",
                rep.decomposition_slack
            ));
        }
        Ok(())
    };
    for sc in builtins() {
        check(&sc.mdp, &materialized(&sc), &sc.name)?;
    }
    for seed in 0..200 {
        let sc = random_small(seed);
        check(&sc.mdp, &materialized(&sc), &format!("seed {seed}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= DECOMPOSITION_BUDGET_SECS {
        return Err(format!("{count} instances took {secs:.1}s"));
    }
    Ok(format!(
        "{count} instances, max(C - H) = {worst:.2e}, {secs:.2}s"
    ))
}

fn c02_sleepy() -> Outcome {
    let mut worst = 0.0f64;
    for step in 0..=10 {
        let alpha = step as f64 / 10.0;
        let sc = scenario_sleepy(alpha).map_err(|e| e.to_string())?;
        let rep =
            InfluenceReport::compute(&sc.mdp, &materialized(&sc)).map_err(|e| e.to_string())?;
        let err = (rep.c.get(1, 0) - alpha)
            .abs()
            .max(rep.e_s.max_entry())
            .max((rep.e_a.get(1, 0) - 1.0).abs());
        worst = worst.max(err);
        if err > EXACT {
            return Err(format!(
                "alpha {alpha}: C[1][0] = {}, max E_s = {}, E_a[1][0] = {}",
                rep.c.get(1, 0),
                rep.e_s.max_entry(),
                rep.e_a.get(1, 0)
            ));
        }
    }
    Ok(format!("11 values of alpha, worst deviation {worst:.2e}"))
}

fn leader_follower_policies() -> Vec<(String, Policy)> {
    let sizes = [2usize, 2];
    let mut r = rng(3);
    let mut out = Vec::new();
    for i in 0..4 {
        let scopes = vec![Scope::full(2), Scope::full(2)];
        let tables = (0..2)
            .map(|_| {
                (0..4)
                    .flat_map(|_| {
                        let p: f64 = r.random_range(0.05..0.95);
                        [p, 1.0 - p]
                    })
                    .collect()
            })
            .collect();
        out.push((
            format!("table {i}"),
            Policy::Tables(ProductPolicy::new(&sizes, &sizes, scopes, tables).unwrap()),
        ));
    }
    for (i, tau) in [0.1, 1.0, 10.0, 0.1, 1.0, 10.0].into_iter().enumerate() {
        let logits = (0..2)
            .map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let sp = SoftmaxPolicy::new(
            &sizes,
            &sizes,
            vec![Scope::full(2), Scope::full(2)],
            logits,
            tau,
        )
        .unwrap();
        out.push((format!("softmax {i} tau={tau}"), Policy::Softmax(sp)));
    }
    out
}

fn c03_leader_follower() -> Outcome {
    let mut certified_cases = Vec::new();
    let mut max_rho = 0.0f64;
    for (label, policy) in leader_follower_policies() {
        let sc = scenario_leader_follower_with(policy).map_err(|e| e.to_string())?;
        let pi = materialized(&sc);
        let rep = InfluenceReport::compute(&sc.mdp, &pi).map_err(|e| e.to_string())?;
        if (rep.c.get(1, 0) - 1.0).abs() > EXACT {
            return Err(format!("{label}: C[1][0] = {}", rep.c.get(1, 0)));
        }
        let cert = LocalityCertificate::build(&sc.mdp, &pi, 2).map_err(|e| e.to_string())?;
        max_rho = max_rho.max(rep.rho);
        if cert.certified {
            certified_cases.push(label);
        }
    }
    if certified_cases.is_empty() {
        Ok("10 policies, C[1][0] = 1, none certified".into())
    } else {
        Err(format!(
            "C[1][0] = 1 on all 10 policies, but {} are certified: H is nilpotent \
             (max rho = {max_rho:.1e}) because the leader's own dynamics carry no influence",
            certified_cases.len()
        ))
    }
}

fn c04_contraction() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut r = rng(4);
    for seed in 0..100 {
        let sc = random_small(1000 + seed);
        let pi = materialized(&sc);
        let rep = InfluenceReport::compute(&sc.mdp, &pi).map_err(|e| e.to_string())?;
        let kernel = induced_kernel(&sc.mdp, &pi).map_err(|e| e.to_string())?;
        let f = random_function(&mut r, sc.mdp.states().len());
        let df = oscillation(&f, sc.mdp.states()).unwrap();
        let mut g = f.clone();
        for t in 1..=5 {
            g = apply_operator(&kernel, &g).unwrap();
            let lhs = oscillation(&g, sc.mdp.states()).unwrap();
            let rhs = iterate_propagation(&rep.h, df.values(), t);
            let excess = max_excess(&lhs, &rhs);
            worst = worst.max(excess);
            if excess > EXACT {
                return Err(format!("seed {seed}, t = {t}: excess {excess:e}"));
            }
        }
    }
    Ok(format!("100 pairs x 5 steps, max excess {worst:.2e}"))
}

/// `(I - Hᵀ)⁻¹ b`.
fn neumann_limit(h: &NonnegMatrix, b: &OscillationVector) -> Vec<f64> {
    let n = h.dim();
    let a = DMatrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - h.get(j, i));
    let x = a
        .lu()
        .solve(&DVector::from_column_slice(b.values()))
        .expect("I - H^T is invertible when rho < 1");
    x.iter().copied().collect()
}

fn c05_poisson() -> Outcome {
    let mut instances: Vec<Scenario> = builtins();
    instances.extend((0..8).map(|i| scenario_sleepy(i as f64 / 8.0).unwrap()));
    instances.extend((0..100).map(|s| random_small(2000 + s)));
    instances.extend((0..100).map(|s| random_weak(3000 + s, 0.15)));
    let (mut solved, mut bounded) = (0, 0);
    let (mut worst_res, mut worst_anchor, mut worst_excess) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for sc in &instances {
        let pi = materialized(sc);
        let kernel = induced_kernel(&sc.mdp, &pi).unwrap();
        let r = policy_reward(&sc.mdp, &pi).unwrap();
        let Ok(sol) = solve_poisson(&kernel, &r) else {
            continue;
        };
        solved += 1;
        worst_res = worst_res.max(sol.residual);
        let last = solve_poisson_anchored(&kernel, &r, kernel.len() - 1).unwrap();
        worst_anchor = worst_anchor.max(sol.h.sub(&last).span());
        let rep = InfluenceReport::compute(&sc.mdp, &pi).unwrap();
        if rep.rho <= 0.95 {
            bounded += 1;
            let dh = oscillation(&sol.h, sc.mdp.states()).unwrap();
            let dr = oscillation(&r, sc.mdp.states()).unwrap();
            let bound = neumann_limit(&rep.h, &dr);
            worst_excess = worst_excess.max(max_excess(&dh, &bound));
        }
    }
    let summary = format!(
        "{solved} solved, residual {worst_res:.1e}, anchor spread {worst_anchor:.1e}, \
         {bounded} with rho <= 0.95, max excess {worst_excess:.1e}"
    );
    if worst_res > SOLVER || worst_anchor > SOLVER || worst_excess > SOLVER || bounded == 0 {
        Err(summary)
    } else {
        Ok(summary)
    }
}

/// Slope of `ln e_κ` against `κ`, as a per-step rate.
fn fitted_rate(errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > FIT_FLOOR)
        .map(|(k, e)| (k as f64, e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (x, y)| {
        (n + (x - mx) * (y - my), d + (x - mx) * (x - mx))
    });
    Some((num / den).exp())
}

fn c06_certificate() -> Outcome {
    let mut used = 0;
    let mut fitted = 0;
    let mut worst_bias_excess = f64::NEG_INFINITY;
    let mut worst_rate_gap = f64::NEG_INFINITY;
    let mut seed = 4000;
    while used < 50 {
        seed += 1;
        if seed > 6000 {
            return Err(format!("only {used} instances with rho <= 0.7"));
        }
        let sc = random_weak(seed, 0.15);
        let pi = materialized(&sc);
        let rep = InfluenceReport::compute(&sc.mdp, &pi).unwrap();
        if rep.rho > 0.7 {
            continue;
        }
        used += 1;
        let kernel = induced_kernel(&sc.mdp, &pi).unwrap();
        let r = policy_reward(&sc.mdp, &pi).unwrap();
        let sol = solve_poisson(&kernel, &r).map_err(|e| format!("seed {seed}: {e}"))?;
        let graph = support_graph(&rep.h, 0.0);
        let mut errors = Vec::new();
        for kappa in 0..=8 {
            let cert = LocalityCertificate::from_parts(
                sc.mdp.states(),
                &kernel,
                &rep.h,
                rep.rho,
                &r,
                sol.rbar,
                kappa,
            )
            .unwrap();
            let dense = truncated_certificate(&rep.h, &cert.b, kappa).unwrap();
            let mp = certificate_message_passing(&graph, &rep.h, &cert.b, kappa).unwrap();
            let same = dense
                .values()
                .iter()
                .zip(mp.cert.values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            if !same {
                return Err(format!(
                    "seed {seed}, kappa {kappa}: message passing differs"
                ));
            }
            let bias = cert.h_hat.aligned_distance(&sol.h);
            let bound = cert
                .bias_bound
                .ok_or_else(|| format!("seed {seed}: rho {} not certified", rep.rho))?;
            worst_bias_excess = worst_bias_excess.max(bias - bound);
            if bias > bound + EXACT {
                return Err(format!(
                    "seed {seed}, kappa {kappa}: bias {bias:e} above bound {bound:e}"
                ));
            }
            errors.push(bias);
        }
        if let Some(rate) = fitted_rate(&errors) {
            fitted += 1;
            worst_rate_gap = worst_rate_gap.max(rate - rep.rho);
            if rate > rep.rho + RATE_MARGIN {
                return Err(format!(
                    "seed {seed}: fitted rate {rate:.3} above rho {:.3} + {RATE_MARGIN}",
                    rep.rho
                ));
            }
        }
    }
    Ok(format!(
        "50 instances, bitwise equal, max(bias - bound) = {worst_bias_excess:.1e}, \
         {fitted} rate fits, max(rate - rho) = {worst_rate_gap:.3}"
    ))
}

fn c07_softmax() -> Outcome {
    let mut r = rng(7);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..100 {
        let mut cfg = RandomConfig::new(
            7000 + seed,
            1 + (seed % 3) as usize,
            2 + (seed % 2) as usize,
            2 + ((seed / 2) % 2) as usize,
            (seed % 2) as usize,
        );
        cfg.temperature = [0.1, 0.5, 1.0, 3.0][r.random_range(0..4)];
        let sc = random_instance_with(&cfg).unwrap();
        let sp = sc.policy.softmax().expect("random policies are softmax");
        let pi = policy_sensitivity(&sc.mdp, &sp.materialize().unwrap()).unwrap();
        let l = logit_lipschitz(sp, &sc.mdp).unwrap();
        let bound = softmax_pi_bound(&l, sp.temperature).unwrap();
        let excess = pi.max_excess_over(&bound);
        worst = worst.max(excess);
        if excess > EXACT {
            return Err(format!("seed {seed}: Pi exceeds its bound by {excess:e}"));
        }
    }
    let (eps, tau) = (1e-4, 1.0);
    let sp = SoftmaxPolicy::new(
        &[2],
        &[2],
        vec![Scope::full(1)],
        vec![vec![eps, -eps, 0.0, 0.0]],
        tau,
    )
    .unwrap()
    .materialize()
    .unwrap();
    let shift = tv(sp.row(0, 0), sp.row(0, 1)).unwrap();
    let ratio = shift / (eps / (2.0 * tau));
    let summary =
        format!("100 policies, max(Pi - bound) = {worst:.1e}, sharpness ratio {ratio:.6}");
    if ratio >= SHARPNESS_MIN {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn c08_hub_spoke() -> Outcome {
    let mut cases = 0;
    for n in [3usize, 4, 5] {
        for beta in [0.5, 1.0, 2.0] {
            let threshold = (n as f64 - 1.0) * beta / 2.0;
            for factor in [1.01, 1.5, 3.0, 10.0] {
                let tau = threshold * factor;
                let sc = scenario_hub_spoke(n, beta, tau).map_err(|e| e.to_string())?;
                let pi = materialized(&sc);
                let cert =
                    LocalityCertificate::build(&sc.mdp, &pi, 2).map_err(|e| e.to_string())?;
                let bound = (n as f64 - 1.0) * beta / (2.0 * tau);
                let base = action_supremum_baseline(&sc.mdp).unwrap().inf_norm();
                if !cert.certified || cert.rho > bound + SOLVER || (base - 1.0).abs() > EXACT {
                    return Err(format!(
                        "n={n} beta={beta} tau={tau}: certified {}, rho {}, bound {bound}, baseline {base}",
                        cert.certified, cert.rho
                    ));
                }
                cases += 1;
            }
        }
    }
    Ok(format!(
        "{cases} grid points certified with baseline norm 1"
    ))
}

fn radius_via_cli(gamma: f64, rho: f64, eps: f64) -> Result<u64, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_locality"))
        .args([
            "radius",
            "--gamma",
            &gamma.to_string(),
            "--rho",
            &rho.to_string(),
            "--epsilon",
            &eps.to_string(),
        ])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    v["result"]["kappa"]
        .as_u64()
        .ok_or_else(|| "report lacks result.kappa".into())
}

fn c09_radius() -> Outcome {
    let a = radius_via_cli(0.99, 0.5, 0.01)?;
    let b = radius_via_cli(0.99, 1.0, 0.01)?;
    let lib = required_radius(discounted_rate(0.99, 1.0).unwrap(), 0.01).unwrap();
    let summary = format!("kappa(0.99, 0.5) = {a}, kappa(0.99, 1.0) = {b} (library {lib})");
    if a == 7 && b.abs_diff(458) <= 1 && lib == b {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn c10_improvement() -> Outcome {
    let mut instances: Vec<Scenario> = builtins();
    instances.extend(
        (0..100).map(|s| random_instance(5000 + s, 2 + (s % 2) as usize, 2, 2, 1).unwrap()),
    );
    let mut worst = f64::INFINITY;
    let mut audits = 0;
    for sc in &instances {
        let pi = materialized(sc);
        for tau in [0.1, 1.0, 10.0] {
            for kappa in 0..=2 {
                for k in 0..sc.mdp.n() {
                    let rec = block_improvement_check(&sc.mdp, &pi, k, kappa, tau)
                        .map_err(|e| format!("{}: {e}", sc.name))?;
                    worst = worst.min(rec.slack);
                    audits += 1;
                }
                let pass = cyclic_pass_check(&sc.mdp, &pi, kappa, tau)
                    .map_err(|e| format!("{}: {e}", sc.name))?;
                worst = worst.min(pass.slack);
                audits += 1;
                if worst < -SOLVER {
                    return Err(format!(
                        "{} tau={tau} kappa={kappa}: slack {worst:e}",
                        sc.name
                    ));
                }
            }
        }
    }
    let mut r = rng(10);
    let mut fixed = 0.0f64;
    for _ in 0..100 {
        let width = r.random_range(2..5usize);
        let rows = r.random_range(1..5usize);
        let table: Vec<f64> = (0..rows)
            .flat_map(|_| {
                let w: Vec<f64> = (0..width).map(|_| r.random::<f64>() + 0.01).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(move |x| x / z)
            })
            .collect();
        let tau = r.random_range(0.05..10.0);
        let out = kl_prox_update(&table, &vec![0.0; table.len()], width, tau).unwrap();
        fixed = table
            .iter()
            .zip(&out)
            .fold(fixed, |m, (a, b)| m.max((a - b).abs()));
    }
    if fixed > EXACT {
        return Err(format!("zero logits moved the policy by {fixed:e}"));
    }
    Ok(format!(
        "{audits} audits, min slack {worst:.2e}, zero-logit drift {fixed:.1e}"
    ))
}

fn c11_seminorm() -> Outcome {
    let mut r = rng(11);
    let p = |f: &StateFunction, sp: &Space| oscillation(f, sp).unwrap().sup_norm();
    for trial in 0..10_000 {
        let dims = r.random_range(1..5usize);
        let sizes: Vec<usize> = (0..dims).map(|_| r.random_range(2..4usize)).collect();
        let sp = Space::new(&sizes).unwrap();
        let n = sp.len();
        let f = random_function(&mut r, n);
        let g = random_function(&mut r, n);
        let c: f64 = r.random_range(-3.0..3.0);
        let (pf, pg) = (p(&f, &sp), p(&g, &sp));
        let hom = (p(&f.scaled(c), &sp) - c.abs() * pf).abs();
        if hom > EXACT {
            return Err(format!("trial {trial}: homogeneity off by {hom:e}"));
        }
        if p(&f.add(&g), &sp) > pf + pg + EXACT {
            return Err(format!("trial {trial}: subadditivity fails"));
        }
        if p(&StateFunction::constant(n, c), &sp) != 0.0 || pf <= 0.0 {
            return Err(format!("trial {trial}: kernel is not the constants"));
        }
        let df = oscillation(&f, &sp).unwrap();
        let (x, z) = (r.random_range(0..n), r.random_range(0..n));
        let gap = (f[x] - f[z]).abs();
        let weighted: f64 = (0..dims)
            .filter(|&i| sp.digit(x, i) != sp.digit(z, i))
            .map(|i| df[i])
            .sum();
        if gap > weighted + EXACT || gap > pf * hamming(&sp, x, z) as f64 + EXACT {
            return Err(format!("trial {trial}: Lipschitz bound fails"));
        }
        let space = &sp;
        let attained = (0..n)
            .flat_map(|a| (0..dims).flat_map(move |i| (0..space.size(i)).map(move |v| (a, i, v))))
            .map(|(a, i, v)| (f[a] - f[space.with_digit(a, i, v)]).abs())
            .fold(0.0, f64::max);
        if attained < pf - EXACT {
            return Err(format!("trial {trial}: constant not attained"));
        }
    }
    Ok("10000 triples".into())
}

fn c12_async() -> Outcome {
    let mut r = rng(12);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..100 {
        let sc = random_small(8000 + seed);
        let pi = materialized(&sc);
        let n = sc.mdp.n();
        let w: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 0.05).collect();
        let z: f64 = w.iter().sum();
        let mut nu: Vec<f64> = w.iter().map(|x| x / z).collect();
        let head: f64 = nu[1..].iter().sum();
        nu[0] = 1.0 - head;
        let rep = InfluenceReport::compute(&sc.mdp, &pi).unwrap();
        let m = async_influence(&rep.e_s, &rep.e_a, &rep.pi, &nu).map_err(|e| e.to_string())?;
        let k = async_kernel(&sc.mdp, &pi, &nu).map_err(|e| e.to_string())?;
        let f = random_function(&mut r, sc.mdp.states().len());
        let lhs = oscillation(&apply_operator(&k, &f).unwrap(), sc.mdp.states()).unwrap();
        let rhs =
            m.m.propagate(oscillation(&f, sc.mdp.states()).unwrap().values());
        let excess = max_excess(&lhs, &rhs);
        worst = worst.max(excess);
        if excess > EXACT {
            return Err(format!("seed {seed}: excess {excess:e}"));
        }
    }
    Ok(format!("100 triples, max excess {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        ("decomposition soundness", c01_decomposition),
        ("sleepy tightness", c02_sleepy),
        ("leader-follower non-certification", c03_leader_follower),
        ("one- and multi-step contraction", c04_contraction),
        ("Poisson correctness", c05_poisson),
        ("certificate and bias", c06_certificate),
        ("softmax bound", c07_softmax),
        ("hub-and-spoke", c08_hub_spoke),
        ("discounted radius", c09_radius),
        ("block improvement and cyclic pass", c10_improvement),
        ("seminorm and Hamming", c11_seminorm),
        ("asynchronous model", c12_async),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
