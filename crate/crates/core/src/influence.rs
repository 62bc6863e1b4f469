//! Sensitivity matrices `E^s`, `E^a`, `Π(π)`, the exact closed-loop
//! interdependence `C^π`, and the decomposition bound `H^π = E^s + E^a Π`.

use serde::Serialize;

use crate::error::{LocalityError, Result};
use crate::mdp::{
    apply_operator, induced_kernel, next_marginals, FactoredMdp, ProductPolicy, Scope,
    SoftmaxPolicy, Space, StateFunction, Storage,
};
use crate::measures::{
    oscillation, spectral_radius, tv_unchecked, NonnegMatrix, OscillationVector,
};

/// Joint indices whose coordinates outside `scope` are pinned to zero.
fn pinned(space: &Space, scope: &Scope) -> Vec<usize> {
    (0..space.subspace(scope).len())
        .map(|r| space.embed(r, scope))
        .collect()
}

/// State and action sweep sets for agent `j`'s factor. Scoped tables are
/// swept over their scope only; dense tables over everything.
fn factor_sweep(mdp: &FactoredMdp, j: usize) -> (Vec<usize>, Vec<usize>, Scope, Scope) {
    let f = mdp.factor(j);
    let n = mdp.n();
    let (ss, aa) = match f.storage() {
        Storage::Scoped => (f.state_scope().clone(), f.action_scope().clone()),
        Storage::Dense => (Scope::full(n), Scope::full(n)),
    };
    (
        pinned(mdp.states(), &ss),
        pinned(mdp.actions(), &aa),
        ss,
        aa,
    )
}

/// `E^s_{j←i} = max_{s ~_i s', a} TV(P_j(·|s,a), P_j(·|s',a))`.
pub fn env_state_sensitivity(mdp: &FactoredMdp) -> Result<NonnegMatrix> {
    mdp.ensure_within_cap()?;
    let n = mdp.n();
    let states = mdp.states();
    let mut out = NonnegMatrix::zeros(n);
    for j in 0..n {
        let (ss, aa, sscope, _) = factor_sweep(mdp, j);
        for &i in sscope.coords() {
            let mut best = 0.0f64;
            for &s in &ss {
                let si = states.digit(s, i);
                for v in si + 1..states.size(i) {
                    let t = states.with_digit(s, i, v);
                    for &a in &aa {
                        best = best.max(tv_unchecked(
                            mdp.kernel_row(j, s, a),
                            mdp.kernel_row(j, t, a),
                        ));
                    }
                }
            }
            out.set(j, i, best);
        }
    }
    out.clip_unit();
    Ok(out)
}

/// `E^a_{j←k} = max_{s, a ~_k a'} TV(P_j(·|s,a), P_j(·|s,a'))`.
pub fn env_action_sensitivity(mdp: &FactoredMdp) -> Result<NonnegMatrix> {
    mdp.ensure_within_cap()?;
    let n = mdp.n();
    let actions = mdp.actions();
    let mut out = NonnegMatrix::zeros(n);
    for j in 0..n {
        let (ss, aa, _, ascope) = factor_sweep(mdp, j);
        for &k in ascope.coords() {
            let mut best = 0.0f64;
            for &a in &aa {
                let ak = actions.digit(a, k);
                for v in ak + 1..actions.size(k) {
                    let b = actions.with_digit(a, k, v);
                    for &s in &ss {
                        best = best.max(tv_unchecked(
                            mdp.kernel_row(j, s, a),
                            mdp.kernel_row(j, s, b),
                        ));
                    }
                }
            }
            out.set(j, k, best);
        }
    }
    out.clip_unit();
    Ok(out)
}

/// Largest one-coordinate change of a scoped table, per in-scope
/// coordinate: `dist(row, row')` over rows whose scoped states differ in
/// exactly that coordinate. Returns one value per coordinate of `[n]`.
fn scoped_table_sensitivity(
    states: &Space,
    scope: &Scope,
    table: &[f64],
    width: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<f64> {
    let mut out = vec![0.0f64; states.dims()];
    let sub = states.subspace(scope);
    let row = |r: usize| &table[r * width..(r + 1) * width];
    for (p, &i) in scope.coords().iter().enumerate() {
        let mut best = 0.0f64;
        for r in 0..sub.len() {
            let d = sub.digit(r, p);
            for v in d + 1..sub.size(p) {
                best = best.max(dist(row(r), row(sub.with_digit(r, p, v))));
            }
        }
        out[i] = best;
    }
    out
}

/// `Π_{k←i}(π) = max_{s ~_i s'} TV(π_k(·|s_{O_k}), π_k(·|s'_{O_k}))`,
/// zero for `i ∉ O_k`.
pub fn policy_sensitivity(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<NonnegMatrix> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    let n = mdp.n();
    let mut out = NonnegMatrix::zeros(n);
    for k in 0..n {
        let row = scoped_table_sensitivity(
            mdp.states(),
            pi.scope(k),
            pi.table(k),
            pi.action_sizes()[k],
            tv_unchecked,
        );
        for (i, v) in row.into_iter().enumerate() {
            out.set(k, i, v);
        }
    }
    out.clip_unit();
    Ok(out)
}

/// Exact `C^π_{j←i} = max_{s ~_i s'} TV(P^π_j(·|s), P^π_j(·|s'))` on the
/// policy-mixed next-state marginals.
pub fn interdependence_exact(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<NonnegMatrix> {
    let marg = next_marginals(mdp, pi)?;
    let states = mdp.states();
    let n = mdp.n();
    let mut out = NonnegMatrix::zeros(n);
    for (j, per_state) in marg.iter().enumerate() {
        for i in 0..n {
            let mut best = 0.0f64;
            for s in 0..states.len() {
                for v in states.digit(s, i) + 1..states.size(i) {
                    let t = states.with_digit(s, i, v);
                    best = best.max(tv_unchecked(&per_state[s], &per_state[t]));
                }
            }
            out.set(j, i, best);
        }
    }
    out.clip_unit();
    Ok(out)
}

/// `H = E^s + E^a Π`.
pub fn influence_bound(
    e_s: &NonnegMatrix,
    e_a: &NonnegMatrix,
    pi: &NonnegMatrix,
) -> Result<NonnegMatrix> {
    e_s.add(&e_a.mul(pi)?)
}

/// Policy-independent comparison matrix: the worst TV shift of agent
/// `j`'s next state when coordinate `i` of the state and agent `i`'s
/// action may both change, everything else fixed.
pub fn action_supremum_baseline(mdp: &FactoredMdp) -> Result<NonnegMatrix> {
    mdp.ensure_within_cap()?;
    let n = mdp.n();
    let (states, actions) = (mdp.states(), mdp.actions());
    let mut out = NonnegMatrix::zeros(n);
    for j in 0..n {
        let (ss, aa, sscope, ascope) = factor_sweep(mdp, j);
        for i in 0..n {
            let s_vals = if sscope.contains(i) {
                states.size(i)
            } else {
                1
            };
            let a_vals = if ascope.contains(i) {
                actions.size(i)
            } else {
                1
            };
            if s_vals == 1 && a_vals == 1 {
                continue;
            }
            let mut best = 0.0f64;
            for &s in &ss {
                for &a in &aa {
                    let p = mdp.kernel_row(j, s, a);
                    for vs in 0..s_vals {
                        let t = if s_vals > 1 {
                            states.with_digit(s, i, vs)
                        } else {
                            s
                        };
                        for va in 0..a_vals {
                            let b = if a_vals > 1 {
                                actions.with_digit(a, i, va)
                            } else {
                                a
                            };
                            best = best.max(tv_unchecked(p, mdp.kernel_row(j, t, b)));
                        }
                    }
                }
            }
            out.set(j, i, best);
        }
    }
    out.clip_unit();
    Ok(out)
}

/// All sensitivity matrices for one policy.
#[derive(Debug, Clone, Serialize)]
pub struct InfluenceReport {
    pub e_s: NonnegMatrix,
    pub e_a: NonnegMatrix,
    pub pi: NonnegMatrix,
    pub c: NonnegMatrix,
    pub h: NonnegMatrix,
    pub rho: f64,
    /// `max_{j,i} (C - H)_{j,i}`; nonpositive up to rounding.
    pub decomposition_slack: f64,
}

impl InfluenceReport {
    pub fn compute(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<Self> {
        let e_s = env_state_sensitivity(mdp)?;
        let e_a = env_action_sensitivity(mdp)?;
        let p = policy_sensitivity(mdp, pi)?;
        let c = interdependence_exact(mdp, pi)?;
        let h = influence_bound(&e_s, &e_a, &p)?;
        let rho = spectral_radius(&h)?;
        let decomposition_slack = c.max_excess_over(&h);
        Ok(Self {
            e_s,
            e_a,
            pi: p,
            c,
            h,
            rho,
            decomposition_slack,
        })
    }
}

/// `(δ(T^π f), Hᵀ δ(f))`; the first is dominated by the second.
pub fn one_step_oscillation_check(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    f: &StateFunction,
) -> Result<(OscillationVector, OscillationVector)> {
    let h = InfluenceReport::compute(mdp, pi)?.h;
    let kernel = induced_kernel(mdp, pi)?;
    let lhs = oscillation(&apply_operator(&kernel, f)?, mdp.states())?;
    let rhs = OscillationVector(h.propagate(oscillation(f, mdp.states())?.values()));
    Ok((lhs, rhs))
}

/// Entrywise `min{1, L_{k←i} / (2τ)}`.
pub fn softmax_pi_bound(l: &LogitLipschitz, tau: f64) -> Result<NonnegMatrix> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(LocalityError::NonPositiveTemperature(tau));
    }
    let n = l.l.dim();
    let mut out = NonnegMatrix::zeros(n);
    for k in 0..n {
        for i in 0..n {
            out.set(k, i, (l.l.get(k, i) / (2.0 * tau)).min(1.0));
        }
    }
    Ok(out)
}

/// One-coordinate logit Lipschitz constants `L_{k←i}`.
#[derive(Debug, Clone, Serialize)]
pub struct LogitLipschitz {
    pub l: NonnegMatrix,
}

/// `L_{k←i} = max_{s ~_i s'} ‖g_k(s_{O_k}, ·) - g_k(s'_{O_k}, ·)‖_∞`.
pub fn logit_lipschitz(sp: &SoftmaxPolicy, mdp: &FactoredMdp) -> Result<LogitLipschitz> {
    if sp.state_sizes != mdp.states().sizes() || sp.action_sizes != mdp.actions().sizes() {
        return Err(LocalityError::DimensionMismatch(
            "softmax policy spaces differ from MDP spaces".into(),
        ));
    }
    let n = mdp.n();
    let mut l = NonnegMatrix::zeros(n);
    for k in 0..n {
        let row = scoped_table_sensitivity(
            mdp.states(),
            &sp.scopes[k],
            &sp.logits[k],
            sp.action_sizes[k],
            |x, y| {
                x.iter()
                    .zip(y)
                    .fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
            },
        );
        for (i, v) in row.into_iter().enumerate() {
            l.set(k, i, v);
        }
    }
    Ok(LogitLipschitz { l })
}

/// Influence matrix of the single-site update chain.
#[derive(Debug, Clone, Serialize)]
pub struct AsyncInfluence {
    pub nu: Vec<f64>,
    pub m: NonnegMatrix,
    pub rho: f64,
}

/// `M = (I - diag ν) + diag ν (E^s + E^a Π)`.
pub fn async_influence(
    e_s: &NonnegMatrix,
    e_a: &NonnegMatrix,
    pi: &NonnegMatrix,
    nu: &[f64],
) -> Result<AsyncInfluence> {
    let h = influence_bound(e_s, e_a, pi)?;
    let n = h.dim();
    if nu.len() != n {
        return Err(LocalityError::DimensionMismatch(format!(
            "site distribution has {} entries for {n} agents",
            nu.len()
        )));
    }
    let sum: f64 = nu.iter().sum();
    if nu.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-12 {
        return Err(LocalityError::InvalidDistribution(format!(
            "site distribution {nu:?} must be strictly positive and sum to 1"
        )));
    }
    let mut m = NonnegMatrix::zeros(n);
    for (j, &w) in nu.iter().enumerate() {
        for i in 0..n {
            let stay = if i == j { 1.0 - w } else { 0.0 };
            m.set(j, i, stay + w * h.get(j, i));
        }
    }
    let rho = spectral_radius(&m)?;
    Ok(AsyncInfluence {
        nu: nu.to_vec(),
        m,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::KernelFactor;

    /// Two binary agents: agent 0 is a fair coin, agent 1 copies `a_0`.
    fn copy_action_mdp() -> FactoredMdp {
        let p0 = KernelFactor::scoped(Scope::empty(), Scope::empty(), 2, vec![0.5, 0.5]);
        let p1 = KernelFactor::scoped(
            Scope::empty(),
            Scope::new(vec![0]),
            2,
            vec![1.0, 0.0, 0.0, 1.0],
        );
        FactoredMdp::new(&[2, 2], &[2, 2], vec![p0, p1], vec![0.0; 16]).unwrap()
    }

    #[test]
    fn action_copy_sensitivities() {
        let mdp = copy_action_mdp();
        assert!(env_state_sensitivity(&mdp).unwrap().is_zero());
        let ea = env_action_sensitivity(&mdp).unwrap();
        assert_eq!(ea.rows(), vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn state_independent_policy_has_zero_pi() {
        let mdp = copy_action_mdp();
        let pi = ProductPolicy::uniform(&[2, 2], &[2, 2]).unwrap();
        assert!(policy_sensitivity(&mdp, &pi).unwrap().is_zero());
    }

    #[test]
    fn bound_with_zero_terms() {
        let e_s = NonnegMatrix::from_rows(&[vec![0.2, 0.1], vec![0.0, 0.3]]).unwrap();
        let z = NonnegMatrix::zeros(2);
        let pi = NonnegMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_eq!(influence_bound(&e_s, &z, &pi).unwrap(), e_s);
        assert_eq!(influence_bound(&e_s, &pi, &z).unwrap(), e_s);
    }

    #[test]
    fn softmax_bound_examples() {
        let mut l = NonnegMatrix::zeros(2);
        assert!(softmax_pi_bound(&LogitLipschitz { l: l.clone() }, 1.0)
            .unwrap()
            .is_zero());
        l.set(0, 0, 4.0);
        l.set(0, 1, 1.0);
        let b = softmax_pi_bound(&LogitLipschitz { l }, 1.0).unwrap();
        assert_eq!(b.get(0, 0), 1.0);
        assert_eq!(b.get(0, 1), 0.5);
        let l = LogitLipschitz {
            l: NonnegMatrix::zeros(1),
        };
        assert!(softmax_pi_bound(&l, 0.0).is_err());
    }

    #[test]
    fn logit_lipschitz_of_product_logit() {
        let beta = 1.7;
        let mdp = copy_action_mdp();
        let sp = SoftmaxPolicy::new(
            &[2, 2],
            &[2, 2],
            vec![Scope::new(vec![0]), Scope::empty()],
            vec![vec![0.0, 0.0, 0.0, beta], vec![0.3, -0.2]],
            1.0,
        )
        .unwrap();
        let l = logit_lipschitz(&sp, &mdp).unwrap().l;
        assert_eq!(l.rows(), vec![vec![beta, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn async_diagonal_case() {
        let z = NonnegMatrix::zeros(4);
        let a = async_influence(&z, &z, &z, &[0.25; 4]).unwrap();
        assert!((a.rho - 0.75).abs() < 1e-10);
        assert!(async_influence(&z, &z, &z, &[1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(async_influence(&z, &z, &z, &[0.5; 4]).is_err());
    }

    #[test]
    fn baseline_sees_action_switch() {
        let b = action_supremum_baseline(&copy_action_mdp()).unwrap();
        assert_eq!(b.rows(), vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(b.inf_norm(), 1.0);
    }
}
