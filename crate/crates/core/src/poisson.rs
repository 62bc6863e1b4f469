//! Stationary distributions, the average-reward Poisson equation, and
//! κ-truncated locality certificates.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{LocalityError, Result};
use crate::influence::InfluenceReport;
use crate::mdp::{
    apply_operator, induced_kernel, policy_reward, FactoredMdp, ProductPolicy, Space,
    StateFunction, StateKernel,
};
use crate::measures::{oscillation, power_norm_constant, NonnegMatrix, OscillationVector};

/// Margin added to `ρ(H)` to obtain the decay rate used in the bounds.
pub const LAMBDA_MARGIN: f64 = 1e-9;
/// Horizon of the empirical power-norm constant.
pub const POWER_NORM_HORIZON: usize = 64;

/// Strongly connected components of the positive-entry graph, in an
/// arbitrary but deterministic order (iterative Kosaraju).
fn strong_components(kernel: &StateKernel) -> Vec<usize> {
    let n = kernel.len();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| (0..n).filter(|&t| kernel.get(s, t) > 0.0).collect())
        .collect();
    let mut pred = vec![Vec::new(); n];
    for (s, out) in succ.iter().enumerate() {
        for &t in out {
            pred[t].push(s);
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some((v, next)) = stack.last_mut() {
            if let Some(&w) = succ[*v].get(*next) {
                *next += 1;
                if !seen[w] {
                    seen[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(*v);
                stack.pop();
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = count;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &pred[v] {
                if comp[w] == usize::MAX {
                    comp[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    comp
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Checks that the chain has exactly one closed communicating class and
/// that this class is aperiodic. Transient states are allowed. Returns the
/// members of the recurrent class.
pub fn check_unichain(kernel: &StateKernel) -> Result<Vec<usize>> {
    let n = kernel.len();
    if n == 0 {
        return Err(LocalityError::DimensionMismatch("empty state space".into()));
    }
    let comp = strong_components(kernel);
    let classes = comp.iter().max().map_or(0, |m| m + 1);
    let mut closed = vec![true; classes];
    for s in 0..n {
        for t in 0..n {
            if kernel.get(s, t) > 0.0 && comp[s] != comp[t] {
                closed[comp[s]] = false;
            }
        }
    }
    let closed_ids: Vec<usize> = (0..classes).filter(|&c| closed[c]).collect();
    if closed_ids.len() != 1 {
        return Err(LocalityError::Reducible(format!(
            "{} closed communicating classes (strong-connectivity check)",
            closed_ids.len()
        )));
    }
    let members: Vec<usize> = (0..n).filter(|&s| comp[s] == closed_ids[0]).collect();

    let mut level = vec![usize::MAX; n];
    level[members[0]] = 0;
    let mut queue = VecDeque::from([members[0]]);
    let mut period = 0usize;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if kernel.get(u, v) <= 0.0 {
                continue;
            }
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                period = gcd(period, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    if period != 1 {
        return Err(LocalityError::Periodic { period });
    }
    Ok(members)
}

/// Unique `d` with `dᵀP = dᵀ`, `Σ d = 1`.
pub fn stationary_distribution(kernel: &StateKernel) -> Result<Vec<f64>> {
    check_unichain(kernel)?;
    let n = kernel.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let id = if r == c { 1.0 } else { 0.0 };
            a[(r, c)] = id - kernel.get(c, r);
        }
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LocalityError::Singular("stationary system".into()))?;
    let mut d: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = d.iter().sum();
    d.iter_mut().for_each(|v| *v /= total);
    let residual = stationary_residual(kernel, &d);
    if residual > 1e-10 {
        return Err(LocalityError::Singular(format!(
            "stationary residual {residual:e} exceeds 1e-10"
        )));
    }
    Ok(d)
}

/// `‖dᵀP - dᵀ‖₁`.
pub fn stationary_residual(kernel: &StateKernel, d: &[f64]) -> f64 {
    let n = kernel.len();
    (0..n)
        .map(|t| ((0..n).map(|s| d[s] * kernel.get(s, t)).sum::<f64>() - d[t]).abs())
        .sum()
}

/// Exact solution of `h - Ph = r - r̄` with `h(s₀) = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonSolution {
    pub d: Vec<f64>,
    pub rbar: f64,
    pub h: StateFunction,
    pub residual: f64,
}

/// Solves the augmented system in `(h, g)`: `h - Ph + g·1 = r`,
/// `h(anchor) = 0`.
pub fn solve_poisson_anchored(
    kernel: &StateKernel,
    r_pi: &StateFunction,
    anchor: usize,
) -> Result<StateFunction> {
    let n = kernel.len();
    if r_pi.len() != n || anchor >= n {
        return Err(LocalityError::DimensionMismatch(format!(
            "reward of length {} / anchor {anchor} for {n} states",
            r_pi.len()
        )));
    }
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for s in 0..n {
        for t in 0..n {
            a[(s, t)] = if s == t { 1.0 } else { 0.0 } - kernel.get(s, t);
        }
        a[(s, n)] = 1.0;
        rhs[s] = r_pi[s];
    }
    a[(n, anchor)] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| LocalityError::Singular("Poisson system".into()))?;
    let mut h: Vec<f64> = sol.iter().take(n).copied().collect();
    h[anchor] = 0.0;
    Ok(StateFunction(h))
}

/// `max_s |h(s) - (Ph)(s) - (r(s) - r̄)|`.
pub fn poisson_residual(
    kernel: &StateKernel,
    r_pi: &StateFunction,
    rbar: f64,
    h: &StateFunction,
) -> Result<f64> {
    let ph = apply_operator(kernel, h)?;
    Ok((0..h.len())
        .map(|s| (h[s] - ph[s] - (r_pi[s] - rbar)).abs())
        .fold(0.0, f64::max))
}

/// Solves the Poisson equation anchored at the first joint state and
/// verifies uniqueness up to a constant against a second anchor.
pub fn solve_poisson(kernel: &StateKernel, r_pi: &StateFunction) -> Result<PoissonSolution> {
    let d = stationary_distribution(kernel)?;
    let rbar: f64 = d.iter().zip(r_pi.iter()).map(|(p, r)| p * r).sum();
    let h = solve_poisson_anchored(kernel, r_pi, 0)?;
    let residual = poisson_residual(kernel, r_pi, rbar, &h)?;
    let scale = 1.0 + r_pi.sup_norm() + h.sup_norm();
    if residual > 1e-9 * scale {
        return Err(LocalityError::Singular(format!(
            "Poisson residual {residual:e} too large"
        )));
    }
    let alt = solve_poisson_anchored(kernel, r_pi, kernel.len() - 1)?;
    let spread = h.sub(&alt).span();
    if spread > 1e-9 * scale {
        return Err(LocalityError::Singular(format!(
            "solutions for two anchors differ by a non-constant ({spread:e})"
        )));
    }
    Ok(PoissonSolution {
        d,
        rbar,
        h,
        residual,
    })
}

/// Directed graph with an edge `i → j` whenever `H(j, i) > threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportGraph {
    pub threshold: f64,
    /// `out_edges[i]`: sorted targets `j` of edges `i → j`.
    pub out_edges: Vec<Vec<usize>>,
}

pub fn support_graph(h: &NonnegMatrix, threshold: f64) -> SupportGraph {
    let n = h.dim();
    let out_edges = (0..n)
        .map(|i| (0..n).filter(|&j| h.get(j, i) > threshold).collect())
        .collect();
    SupportGraph {
        threshold,
        out_edges,
    }
}

impl SupportGraph {
    pub fn n(&self) -> usize {
        self.out_edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.out_edges[i].binary_search(&j).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    fn bfs(&self, start: usize, kappa: usize, undirected: bool) -> Vec<usize> {
        let n = self.n();
        let mut adj = self.out_edges.clone();
        if undirected {
            for (i, out) in self.out_edges.iter().enumerate() {
                for &j in out {
                    adj[j].push(i);
                }
            }
        }
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == kappa {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..n).filter(|&v| dist[v] != usize::MAX).collect()
    }

    /// Nodes within undirected graph distance `κ` of `i`, sorted.
    pub fn ball(&self, i: usize, kappa: usize) -> Vec<usize> {
        self.bfs(i, kappa, true)
    }

    /// Nodes reachable from `i` along at most `κ` directed edges; the
    /// exact set of `b` entries that certificate entry `i` depends on.
    pub fn reach(&self, i: usize, kappa: usize) -> Vec<usize> {
        self.bfs(i, kappa, false)
    }

    /// Errors unless the edge set is exactly `{H(j, i) > threshold}`.
    pub fn check_consistent(&self, h: &NonnegMatrix) -> Result<()> {
        if h.dim() != self.n() {
            return Err(LocalityError::GraphMismatch(format!(
                "graph on {} nodes, matrix of size {}",
                self.n(),
                h.dim()
            )));
        }
        for i in 0..self.n() {
            for j in 0..self.n() {
                if self.has_edge(i, j) != (h.get(j, i) > self.threshold) {
                    return Err(LocalityError::GraphMismatch(format!(
                        "edge {i} -> {j} disagrees with H({j}, {i}) = {}",
                        h.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `Σ_{t=0}^{κ} (Hᵀ)^t b`.
pub fn truncated_certificate(
    h: &NonnegMatrix,
    b: &OscillationVector,
    kappa: usize,
) -> Result<OscillationVector> {
    if b.len() != h.dim() {
        return Err(LocalityError::DimensionMismatch(format!(
            "vector of length {} for a {}x{} matrix",
            b.len(),
            h.dim(),
            h.dim()
        )));
    }
    let mut term = b.values().to_vec();
    let mut cert = term.clone();
    for _ in 0..kappa {
        term = h.propagate(&term);
        for (c, t) in cert.iter_mut().zip(&term) {
            *c += t;
        }
    }
    Ok(OscillationVector(cert))
}

/// Outcome of the distributed certificate computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessagePassingRun {
    pub cert: OscillationVector,
    /// Total messages delivered over all rounds.
    pub messages: usize,
}

/// The certificate computed by `κ` synchronous rounds on the support
/// graph. In each round node `i` collects the current message of every
/// `j` it influences (edge `i → j`), weighted by `H(j, i)`.
pub fn certificate_message_passing(
    graph: &SupportGraph,
    h: &NonnegMatrix,
    b: &OscillationVector,
    kappa: usize,
) -> Result<MessagePassingRun> {
    graph.check_consistent(h)?;
    if b.len() != graph.n() {
        return Err(LocalityError::DimensionMismatch(format!(
            "vector of length {} on a graph with {} nodes",
            b.len(),
            graph.n()
        )));
    }
    let mut msg = b.values().to_vec();
    let mut cert = msg.clone();
    let mut messages = 0;
    for _ in 0..kappa {
        let next: Vec<f64> = graph
            .out_edges
            .iter()
            .enumerate()
            .map(|(i, out)| {
                messages += out.len();
                out.iter().fold(0.0, |acc, &j| acc + h.get(j, i) * msg[j])
            })
            .collect();
        msg = next;
        for (c, m) in cert.iter_mut().zip(&msg) {
            *c += m;
        }
    }
    Ok(MessagePassingRun {
        cert: OscillationVector(cert),
        messages,
    })
}

/// `ĥ_κ = Σ_{t=0}^{κ} (T^π)^t (r - r̄)`, shifted so that `ĥ_κ(s₀) = 0`.
pub fn truncated_poisson(
    kernel: &StateKernel,
    r_pi: &StateFunction,
    rbar: f64,
    kappa: usize,
) -> Result<StateFunction> {
    let mut term = r_pi.shifted(-rbar);
    let mut sum = term.clone();
    for _ in 0..kappa {
        term = apply_operator(kernel, &term)?;
        sum = sum.add(&term);
    }
    let c = sum[0];
    Ok(sum.shifted(-c))
}

/// `(C λ^{κ+1} ‖δ(r)‖₁ / (2(1-λ)), C λ^{κ+1} ‖b‖_∞ / (1-λ))`.
pub fn bias_and_cert_bounds(
    c_est: f64,
    lambda: f64,
    kappa: usize,
    b: &OscillationVector,
    delta_r: &OscillationVector,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "lambda {lambda} outside (0, 1)"
        )));
    }
    if !(c_est >= 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "constant {c_est} below 1"
        )));
    }
    let geo = c_est * lambda.powi(kappa as i32 + 1) / (1.0 - lambda);
    Ok((0.5 * geo * delta_r.l1_norm(), geo * b.sup_norm()))
}

/// `λ = γ ρ`.
pub fn discounted_rate(gamma: f64, rho: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "discount {gamma} outside (0, 1]"
        )));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(LocalityError::OutOfRange(format!(
            "spectral radius {rho} is not a finite nonnegative number"
        )));
    }
    Ok(gamma * rho)
}

/// Smallest integer `κ` with `λ^κ ≤ ε`.
pub fn required_radius(lambda: f64, epsilon: f64) -> Result<u64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "lambda {lambda} outside (0, 1)"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LocalityError::OutOfRange(format!(
            "epsilon {epsilon} outside (0, 1)"
        )));
    }
    let mut k = (epsilon.ln() / lambda.ln()).ceil().max(1.0) as u64;
    // Guard against the ratio landing just above an integer.
    while k > 1 && lambda.powf((k - 1) as f64) <= epsilon {
        k -= 1;
    }
    while lambda.powf(k as f64) > epsilon {
        k += 1;
    }
    Ok(k)
}

/// `(δ(γ T^π f), γ Hᵀ δ(f))`.
pub fn discounted_contraction_check(
    mdp: &FactoredMdp,
    pi: &ProductPolicy,
    gamma: f64,
    f: &StateFunction,
) -> Result<(OscillationVector, OscillationVector)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(LocalityError::OutOfRange(format!(
            "discount {gamma} outside [0, 1)"
        )));
    }
    let h = InfluenceReport::compute(mdp, pi)?.h;
    let kernel = induced_kernel(mdp, pi)?;
    let lhs = oscillation(&apply_operator(&kernel, f)?.scaled(gamma), mdp.states())?;
    let df = oscillation(f, mdp.states())?;
    let rhs = OscillationVector(
        h.propagate(df.values())
            .into_iter()
            .map(|v| gamma * v)
            .collect(),
    );
    Ok((lhs, rhs))
}

/// κ-truncated certificate, surrogate value, and the bounds that apply
/// when `ρ(H) < 1`.
#[derive(Debug, Clone, Serialize)]
pub struct LocalityCertificate {
    pub kappa: usize,
    pub cert: OscillationVector,
    pub h_hat: StateFunction,
    pub rho: f64,
    pub certified: bool,
    pub lambda: Option<f64>,
    pub c_est: Option<f64>,
    pub bias_bound: Option<f64>,
    pub cert_gap_bound: Option<f64>,
    pub b: OscillationVector,
}

impl LocalityCertificate {
    /// Builds the certificate from precomputed pieces.
    pub fn from_parts(
        states: &Space,
        kernel: &StateKernel,
        h: &NonnegMatrix,
        rho: f64,
        r_pi: &StateFunction,
        rbar: f64,
        kappa: usize,
    ) -> Result<Self> {
        let b = oscillation(r_pi, states)?;
        let cert = truncated_certificate(h, &b, kappa)?;
        let h_hat = truncated_poisson(kernel, r_pi, rbar, kappa)?;
        let (lambda, c_est) = decay_constants(h, rho)?;
        let bounds = match (lambda, c_est) {
            (Some(l), Some(c)) => Some(bias_and_cert_bounds(c, l, kappa, &b, &b)?),
            _ => None,
        };
        Ok(Self {
            kappa,
            cert,
            h_hat,
            rho,
            certified: lambda.is_some(),
            lambda,
            c_est,
            bias_bound: bounds.map(|b| b.0),
            cert_gap_bound: bounds.map(|b| b.1),
            b,
        })
    }

    /// Computes everything needed from the MDP and policy. Requires a
    /// unichain, aperiodic induced kernel.
    pub fn build(mdp: &FactoredMdp, pi: &ProductPolicy, kappa: usize) -> Result<Self> {
        let report = InfluenceReport::compute(mdp, pi)?;
        let kernel = induced_kernel(mdp, pi)?;
        let r_pi = policy_reward(mdp, pi)?;
        let d = stationary_distribution(&kernel)?;
        let rbar = d.iter().zip(r_pi.iter()).map(|(p, r)| p * r).sum();
        Self::from_parts(
            mdp.states(),
            &kernel,
            &report.h,
            report.rho,
            &r_pi,
            rbar,
            kappa,
        )
    }
}

/// `λ = ρ + margin` and the empirical constant bounding both `‖H^t‖_∞`
/// and `‖(Hᵀ)^t‖_∞` by `C λ^t`; `None` when `λ ≥ 1`.
pub fn decay_constants(h: &NonnegMatrix, rho: f64) -> Result<(Option<f64>, Option<f64>)> {
    let lambda = rho + LAMBDA_MARGIN;
    if lambda >= 1.0 {
        return Ok((None, None));
    }
    let c = power_norm_constant(h, lambda, POWER_NORM_HORIZON)?.max(power_norm_constant(
        &h.transpose(),
        lambda,
        POWER_NORM_HORIZON,
    )?);
    Ok((Some(lambda), Some(c)))
}
