//! Oracle localized policy improvement: surrogate advantages, expected
//! local logits, KL-proximal block updates, and audits of the one-block
//! and cyclic improvement inequalities.

use serde::Serialize;

use crate::error::{LocalityError, Result};
use crate::influence::InfluenceReport;
use crate::mdp::{induced_kernel, policy_reward, FactoredMdp, ProductPolicy, Scope, StateFunction};
use crate::poisson::{
    solve_poisson, stationary_distribution, LocalityCertificate, PoissonSolution,
};

/// Tolerance under which per-state update rows are treated as equal when
/// deciding whether an agent's observation scope can be kept.
const SCOPE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageFlavor {
    Exact,
    Surrogate,
}

/// `A(s, a)` over joint state-action pairs, row `s`, column `a`.
#[derive(Debug, Clone, Serialize)]
pub struct AdvantageTable {
    pub values: Vec<f64>,
    pub actions: usize,
    pub flavor: AdvantageFlavor,
    pub rbar_used: f64,
}

impl AdvantageTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.actions + a]
    }

    /// `Σ_a π(a|s) A(s, a)`.
    pub fn policy_mean(&self, pi: &ProductPolicy, s: usize) -> f64 {
        pi.joint_action_probs(s)
            .iter()
            .enumerate()
            .map(|(a, w)| w * self.get(s, a))
            .sum()
    }
}

/// `r(s,a) - r̄ + Σ_y P(y|s,a) v(y) - v(s)`.
fn advantage_from_values(
    mdp: &FactoredMdp,
    rbar: f64,
    v: &StateFunction,
    flavor: AdvantageFlavor,
) -> Result<AdvantageTable> {
    let (ns, na) = (mdp.states().len(), mdp.actions().len());
    if v.len() != ns {
        return Err(LocalityError::DimensionMismatch(format!(
            "value function of length {} for {ns} states",
            v.len()
        )));
    }
    mdp.ensure_within_cap()?;
    let mut values = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let next: f64 = mdp
                .next_state_dist(s, a)
                .iter()
                .zip(v.iter())
                .map(|(p, x)| p * x)
                .sum();
            values.push(mdp.reward(s, a) - rbar + next - v[s]);
        }
    }
    Ok(AdvantageTable {
        values,
        actions: na,
        flavor,
        rbar_used: rbar,
    })
}

/// Exact `A^π` from the Poisson solution.
pub fn exact_advantage(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    sol: &PoissonSolution,
) -> Result<AdvantageTable> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    advantage_from_values(mdp, sol.rbar, &sol.h, AdvantageFlavor::Exact)
}

/// Surrogate `Â_κ` built from the truncated value `ĥ_κ`.
pub fn surrogate_advantage(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    cert: &LocalityCertificate,
    rbar: f64,
) -> Result<AdvantageTable> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    advantage_from_values(mdp, rbar, &cert.h_hat, AdvantageFlavor::Surrogate)
}

/// `g_k(s, a_k) = E_{a_{-k} ~ π_{-k}(·|s)} adv(s, (a_k, a_{-k}))`, one row
/// of width `|A_k|` per joint state.
pub fn expected_local_logits(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    adv: &AdvantageTable,
    k: usize,
) -> Result<Vec<f64>> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    if k >= mdp.n() {
        return Err(LocalityError::OutOfRange(format!(
            "agent {k} of {}",
            mdp.n()
        )));
    }
    let actions = mdp.actions();
    let m = actions.size(k);
    let ns = mdp.states().len();
    let mut out = vec![0.0; ns * m];
    for s in 0..ns {
        for a in 0..actions.len() {
            let others: f64 = (0..mdp.n())
                .filter(|&j| j != k)
                .map(|j| pi.row(j, s)[actions.digit(a, j)])
                .product();
            out[s * m + actions.digit(a, k)] += others * adv.get(s, a);
        }
    }
    Ok(out)
}

/// `p ∝ q · exp(g / τ)` for one row; zero-probability actions stay zero.
fn prox_row(q: &[f64], g: &[f64], tau: f64) -> Result<Vec<f64>> {
    let shift = q
        .iter()
        .zip(g)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(LocalityError::InvalidDistribution(format!(
            "row {q:?} has no mass"
        )));
    }
    let w: Vec<f64> = q
        .iter()
        .zip(g)
        .map(|(p, x)| {
            if *p > 0.0 {
                p * ((x - shift) / tau).exp()
            } else {
                0.0
            }
        })
        .collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(LocalityError::NonPositiveTemperature(tau));
    }
    Ok(())
}

/// Row-wise KL-proximal update `π^new(·|s) ∝ π(·|s) exp(g(s,·)/τ)` on
/// tables of the given row width.
pub fn kl_prox_update(pi_rows: &[f64], g_rows: &[f64], width: usize, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if width == 0 || pi_rows.len() != g_rows.len() || !pi_rows.len().is_multiple_of(width) {
        return Err(LocalityError::DimensionMismatch(format!(
            "policy rows ({}) and logit rows ({}) of width {width}",
            pi_rows.len(),
            g_rows.len()
        )));
    }
    let mut out = Vec::with_capacity(pi_rows.len());
    for (q, g) in pi_rows.chunks(width).zip(g_rows.chunks(width)) {
        out.extend(prox_row(q, g, tau)?);
    }
    Ok(out)
}

/// `KL(p ‖ q)` in nats, `0 log 0 = 0`, `+∞` when `p` charges a `q`-null action.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if a <= 0.0 {
                0.0
            } else if b <= 0.0 {
                f64::INFINITY
            } else {
                a * (a / b).ln()
            }
        })
        .sum::<f64>()
        .max(0.0)
}

/// `(τ log Σ_a q(a) e^{g(a)/τ}, argmax_p ⟨p, g⟩ - τ KL(p‖q))`.
pub fn prox_duality_value(q: &[f64], g: &[f64], tau: f64) -> Result<(f64, Vec<f64>)> {
    check_tau(tau)?;
    if q.len() != g.len() {
        return Err(LocalityError::DimensionMismatch(
            "q and g lengths differ".into(),
        ));
    }
    let shift = q
        .iter()
        .zip(g)
        .filter(|(p, _)| **p > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = q
        .iter()
        .zip(g)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, x)| p * ((x - shift) / tau).exp())
        .sum();
    let value = shift + tau * z.ln();
    Ok((value, prox_row(q, g, tau)?))
}

fn rbar_of(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<(Vec<f64>, f64)> {
    let kernel = induced_kernel(mdp, pi)?;
    let d = stationary_distribution(&kernel)?;
    let r = policy_reward(mdp, pi)?;
    let rbar = d.iter().zip(r.iter()).map(|(p, x)| p * x).sum();
    Ok((d, rbar))
}

/// `Σ_k E_{S~d} KL(μ_k(·|S) ‖ π_k(·|S))` for each agent.
fn expected_kl_per_agent(d: &[f64], mu: &ProductPolicy, anchor: &ProductPolicy) -> Vec<f64> {
    (0..mu.n())
        .map(|k| {
            d.iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(s, w)| w * kl_divergence(mu.row(k, s), anchor.row(k, s)))
                .sum()
        })
        .collect()
}

/// `r̄(μ) - τ Σ_k E_{d^μ} KL(μ_k ‖ π_k)`; `-∞` when a KL term is infinite.
pub fn kl_anchored_objective(
    mdp: &FactoredMdp,
    mu: &ProductPolicy,
    pi_anchor: &ProductPolicy,
    tau: f64,
) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(LocalityError::OutOfRange(format!(
            "temperature {tau} is negative"
        )));
    }
    pi_anchor.check_conforms(mdp.states(), mdp.actions())?;
    let (d, rbar) = rbar_of(mdp, mu)?;
    if tau == 0.0 {
        return Ok(rbar);
    }
    let kl: f64 = expected_kl_per_agent(&d, mu, pi_anchor).iter().sum();
    Ok(rbar - tau * kl)
}

/// Shannon entropy in nats with `0 log 0 = 0`.
fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

/// `J_τ(π) = E_{d^π, π}[r(s,a) - τ Σ_k log π_k(a_k|s_{O_k})]`.
pub fn entropy_objective(mdp: &FactoredMdp, pi: &ProductPolicy, tau: f64) -> Result<f64> {
    let (d, rbar) = rbar_of(mdp, pi)?;
    let ent: f64 = d
        .iter()
        .enumerate()
        .map(|(s, w)| w * (0..pi.n()).map(|k| entropy(pi.row(k, s))).sum::<f64>())
        .sum();
    Ok(rbar + tau * ent)
}

/// Table layout of a policy, for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySnapshot {
    pub scopes: Vec<Scope>,
    pub tables: Vec<Vec<f64>>,
}

impl From<&ProductPolicy> for PolicySnapshot {
    fn from(pi: &ProductPolicy) -> Self {
        Self {
            scopes: pi.scopes().to_vec(),
            tables: pi.tables().to_vec(),
        }
    }
}

/// Everything about one policy that the improvement audit needs.
struct Baseline {
    sol: PoissonSolution,
    report: InfluenceReport,
    cert: LocalityCertificate,
    adv_hat: AdvantageTable,
}

impl Baseline {
    fn new(mdp: &FactoredMdp, pi: &ProductPolicy, kappa: usize) -> Result<Self> {
        let kernel = induced_kernel(mdp, pi)?;
        let r_pi = policy_reward(mdp, pi)?;
        let sol = solve_poisson(&kernel, &r_pi)?;
        let report = InfluenceReport::compute(mdp, pi)?;
        let cert = LocalityCertificate::from_parts(
            mdp.states(),
            &kernel,
            &report.h,
            report.rho,
            &r_pi,
            sol.rbar,
            kappa,
        )?;
        let adv_hat = surrogate_advantage(mdp, pi, &cert, sol.rbar)?;
        Ok(Self {
            sol,
            report,
            cert,
            adv_hat,
        })
    }

    /// `2 inf_c ‖ĥ_κ - h - c‖_∞`.
    fn truncation_penalty(&self) -> f64 {
        2.0 * self.cert.h_hat.aligned_distance(&self.sol.h)
    }
}

/// Replaces agent `k`'s block by the per-state rows `rows` (one per joint
/// state). The block keeps its scope when the rows agree across every
/// group of states sharing a scope configuration; otherwise it is widened
/// to the full state.
pub fn replace_block(pi: &ProductPolicy, k: usize, rows: &[f64]) -> Result<(ProductPolicy, bool)> {
    let states = pi.states();
    let m = pi.action_sizes()[k];
    let scope = pi.scope(k).clone();
    let groups = states.subspace(&scope).len();
    let mut table: Vec<Option<&[f64]>> = vec![None; groups];
    let mut consistent = true;
    for s in 0..states.len() {
        let row = &rows[s * m..(s + 1) * m];
        let slot = &mut table[pi.row_index(k, s)];
        match slot {
            None => *slot = Some(row),
            Some(first) => {
                if first
                    .iter()
                    .zip(row)
                    .any(|(a, b)| (a - b).abs() > SCOPE_TOL)
                {
                    consistent = false;
                    break;
                }
            }
        }
    }
    if consistent {
        let flat: Vec<f64> = table
            .into_iter()
            .flat_map(|r| r.unwrap().to_vec())
            .collect();
        Ok((pi.with_block(k, scope, flat)?, false))
    } else {
        Ok((pi.with_block(k, Scope::full(pi.n()), rows.to_vec())?, true))
    }
}

/// Both sides of the one-block improvement inequality for one update.
#[derive(Debug, Clone, Serialize)]
pub struct BlockUpdateRecord {
    pub agent: usize,
    pub tau: f64,
    pub kappa: usize,
    pub old_scope: Scope,
    pub old_table: Vec<f64>,
    pub new_scope: Scope,
    pub new_table: Vec<f64>,
    /// True when the update depends on coordinates outside the old scope.
    pub scope_widened: bool,
    /// `g_k(s, ·)` per joint state.
    pub logits: Vec<f64>,
    /// `KL(π_k^new(·|s) ‖ π_k(·|s))` per joint state.
    pub kl_per_state: Vec<f64>,
    /// `E_{S~d^μ} KL(π_k^new ‖ π_k)`.
    pub expected_kl: f64,
    /// `r̄(μ) - r̄(π)`.
    pub improvement_lhs: f64,
    /// `τ · expected_kl - truncation_penalty`.
    pub improvement_rhs: f64,
    /// `lhs - rhs`.
    pub slack: f64,
    /// `2 inf_c ‖ĥ_κ - h^π - c‖_∞`.
    pub truncation_penalty: f64,
    /// `r̄_{τ,π}(μ) - r̄_{τ,π}(π)`, reported for comparison only.
    pub kl_anchored_lhs: f64,
}

/// Applies the block update to `pi` from precomputed logits and audits it
/// against `base`.
fn audit_block(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    base: &Baseline,
    k: usize,
    logits: Vec<f64>,
    tau: f64,
    kappa: usize,
) -> Result<(ProductPolicy, BlockUpdateRecord, Vec<f64>)> {
    let m = mdp.actions().size(k);
    let ns = mdp.states().len();
    let old_rows: Vec<f64> = (0..ns).flat_map(|s| pi.row(k, s).to_vec()).collect();
    let new_rows = kl_prox_update(&old_rows, &logits, m, tau)?;
    let (mu, scope_widened) = replace_block(pi, k, &new_rows)?;
    let (d_mu, rbar_mu) = rbar_of(mdp, &mu)?;
    let kl_per_state: Vec<f64> = (0..ns)
        .map(|s| kl_divergence(&new_rows[s * m..(s + 1) * m], &old_rows[s * m..(s + 1) * m]))
        .collect();
    let expected_kl: f64 = d_mu
        .iter()
        .zip(&kl_per_state)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, kl)| w * kl)
        .sum();
    let truncation_penalty = base.truncation_penalty();
    let improvement_lhs = rbar_mu - base.sol.rbar;
    let improvement_rhs = tau * expected_kl - truncation_penalty;
    let record = BlockUpdateRecord {
        agent: k,
        tau,
        kappa,
        old_scope: pi.scope(k).clone(),
        old_table: pi.table(k).to_vec(),
        new_scope: mu.scope(k).clone(),
        new_table: mu.table(k).to_vec(),
        scope_widened,
        logits,
        kl_per_state,
        expected_kl,
        improvement_lhs,
        improvement_rhs,
        slack: improvement_lhs - improvement_rhs,
        truncation_penalty,
        kl_anchored_lhs: improvement_lhs - tau * expected_kl,
    };
    Ok((mu, record, new_rows))
}

/// One KL-proximal update of agent `k` against `π`, with both sides of
/// the improvement inequality computed exactly.
pub fn block_improvement_check(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    k: usize,
    kappa: usize,
    tau: f64,
) -> Result<BlockUpdateRecord> {
    check_tau(tau)?;
    let base = Baseline::new(mdp, pi, kappa)?;
    let logits = expected_local_logits(mdp, pi, &base.adv_hat, k)?;
    Ok(audit_block(mdp, pi, &base, k, logits, tau, kappa)?.1)
}

/// Summed inequality over one cyclic pass with fresh certificates.
#[derive(Debug, Clone, Serialize)]
pub struct CyclicPassRecord {
    pub blocks: Vec<BlockUpdateRecord>,
    /// `r̄(π^(n)) - r̄(π)`.
    pub lhs: f64,
    /// `τ Σ_k E KL_k - Σ_k penalty_k`.
    pub rhs: f64,
    pub slack: f64,
    pub final_policy: PolicySnapshot,
}

/// Updates agents `0..n` in turn, each against the policy left by the
/// previous block with a recomputed certificate.
pub fn cyclic_pass_check(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    kappa: usize,
    tau: f64,
) -> Result<CyclicPassRecord> {
    check_tau(tau)?;
    let mut current = pi.clone();
    let mut blocks = Vec::with_capacity(mdp.n());
    for k in 0..mdp.n() {
        let base = Baseline::new(mdp, &current, kappa)?;
        let logits = expected_local_logits(mdp, &current, &base.adv_hat, k)?;
        let (next, record, _) = audit_block(mdp, &current, &base, k, logits, tau, kappa)?;
        blocks.push(record);
        current = next;
    }
    let lhs = blocks.iter().map(|b| b.improvement_lhs).sum();
    let rhs = blocks.iter().map(|b| b.improvement_rhs).sum();
    Ok(CyclicPassRecord {
        blocks,
        lhs,
        rhs,
        slack: lhs - rhs,
        final_policy: PolicySnapshot::from(&current),
    })
}

/// Objective values of one policy.
#[derive(Debug, Clone, Serialize)]
pub struct Objectives {
    pub average_reward: f64,
    pub entropy_objective: f64,
}

/// One outer iteration of the trace.
#[derive(Debug, Clone, Serialize)]
pub struct LpiIteration {
    pub iteration: usize,
    pub policy: PolicySnapshot,
    pub influence: InfluenceReport,
    pub certificate: LocalityCertificate,
    pub objectives: Objectives,
    pub blocks: Vec<BlockUpdateRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpiTrace {
    pub kappa: usize,
    pub tau: f64,
    pub iterations: Vec<LpiIteration>,
    pub final_policy: PolicySnapshot,
    pub final_objectives: Objectives,
}

fn objectives(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    sol: Option<&PoissonSolution>,
    tau: f64,
) -> Result<Objectives> {
    let average_reward = match sol {
        Some(s) => s.rbar,
        None => rbar_of(mdp, pi)?.1,
    };
    Ok(Objectives {
        average_reward,
        entropy_objective: entropy_objective(mdp, pi, tau)?,
    })
}

/// Runs `outer_iters` iterations. Each iteration computes the certificate
/// once for the iteration-start policy, then sweeps the agents, taking
/// every agent's logits from that same policy. Each block is also audited
/// as a one-block update of the iteration-start policy.
pub fn lpi_iterate(
    mdp: &FactoredMdp,
    pi0: &ProductPolicy,
    kappa: usize,
    tau: f64,
    outer_iters: usize,
) -> Result<LpiTrace> {
    check_tau(tau)?;
    let mut pi = pi0.clone();
    let mut iterations = Vec::with_capacity(outer_iters);
    for ell in 0..outer_iters {
        let at = |e: LocalityError| LocalityError::AtIteration {
            iteration: ell,
            source: Box::new(e),
        };
        let base = Baseline::new(mdp, &pi, kappa).map_err(at)?;
        let mut temp = pi.clone();
        let mut blocks = Vec::with_capacity(mdp.n());
        for k in 0..mdp.n() {
            let logits = expected_local_logits(mdp, &pi, &base.adv_hat, k).map_err(at)?;
            let (_, record, rows) =
                audit_block(mdp, &pi, &base, k, logits, tau, kappa).map_err(at)?;
            let (updated, _) = replace_block(&temp, k, &rows).map_err(at)?;
            temp = updated;
            blocks.push(record);
        }
        iterations.push(LpiIteration {
            iteration: ell,
            policy: PolicySnapshot::from(&pi),
            objectives: objectives(mdp, &pi, Some(&base.sol), tau).map_err(at)?,
            influence: base.report,
            certificate: base.cert,
            blocks,
        });
        pi = temp;
    }
    let final_objectives =
        objectives(mdp, &pi, None, tau).map_err(|e| LocalityError::AtIteration {
            iteration: outer_iters,
            source: Box::new(e),
        })?;
    Ok(LpiTrace {
        kappa,
        tau,
        iterations,
        final_policy: PolicySnapshot::from(&pi),
        final_objectives,
    })
}
