//! Finite factored MDPs: per-agent transition factors, global reward, and
//! product-form policies.

mod operator;
mod policy;
mod space;

pub use operator::{
    apply_operator, async_kernel, induced_kernel, next_marginals, policy_reward, StateFunction,
    StateKernel,
};
pub use policy::{materialize_softmax, Policy, ProductPolicy, SoftmaxPolicy};
pub use space::{hamming, Scope, Space};

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};

/// Row-sum and nonnegativity tolerance for every probability table.
pub const PROB_TOL: f64 = 1e-12;

/// Default desk-scale guardrail on `|S|^2 * |A|` kernel evaluations.
pub const DEFAULT_CAP: u128 = 1_000_000;

/// How a transition factor's table is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    /// Rows indexed by the projection of `(s, a)` onto the declared scope.
    Scoped,
    /// Rows indexed by the full joint `(s, a)`; the declared scope is a
    /// claim that `validate` checks.
    Dense,
}

/// Conditional distribution `P_j(s'_j | s, a)` of one agent's next state.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFactor {
    state_scope: Scope,
    action_scope: Scope,
    storage: Storage,
    next_size: usize,
    rows: Vec<f64>,
}

impl KernelFactor {
    /// Table over the scope: row `sk * |A_scope| + ak` is the distribution
    /// over the agent's next state, where `sk`/`ak` index the scoped
    /// configurations in mixed-radix order.
    pub fn scoped(
        state_scope: Scope,
        action_scope: Scope,
        next_size: usize,
        rows: Vec<f64>,
    ) -> Self {
        Self {
            state_scope,
            action_scope,
            storage: Storage::Scoped,
            next_size,
            rows,
        }
    }

    /// Full table over joint `(s, a)` with row index `s * |A| + a`.
    pub fn dense(
        state_scope: Scope,
        action_scope: Scope,
        next_size: usize,
        rows: Vec<f64>,
    ) -> Self {
        Self {
            state_scope,
            action_scope,
            storage: Storage::Dense,
            next_size,
            rows,
        }
    }

    pub fn state_scope(&self) -> &Scope {
        &self.state_scope
    }

    pub fn action_scope(&self) -> &Scope {
        &self.action_scope
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn next_size(&self) -> usize {
        self.next_size
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }
}

/// A finite factored MDP with `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredMdp {
    states: Space,
    actions: Space,
    factors: Vec<KernelFactor>,
    reward: Vec<f64>,
    state_keys: Vec<Vec<usize>>,
    action_keys: Vec<Vec<usize>>,
    action_key_counts: Vec<usize>,
    cap: u128,
}

impl FactoredMdp {
    /// `reward` is the full table `r(s, a)` at index `s * |A| + a`.
    pub fn new(
        state_sizes: &[usize],
        action_sizes: &[usize],
        factors: Vec<KernelFactor>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        let n = state_sizes.len();
        if n == 0 {
            return Err(LocalityError::DimensionMismatch(
                "need at least one agent".into(),
            ));
        }
        if action_sizes.len() != n || factors.len() != n {
            return Err(LocalityError::DimensionMismatch(format!(
                "{n} state sizes, {} action sizes, {} kernel factors",
                action_sizes.len(),
                factors.len()
            )));
        }
        let states = Space::new(state_sizes)?;
        let actions = Space::new(action_sizes)?;
        if reward.len() != states.len() * actions.len() {
            return Err(LocalityError::DimensionMismatch(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                states.len() * actions.len()
            )));
        }
        let mut state_keys = Vec::with_capacity(n);
        let mut action_keys = Vec::with_capacity(n);
        let mut action_key_counts = Vec::with_capacity(n);
        for (j, f) in factors.iter().enumerate() {
            f.state_scope.check_within(n)?;
            f.action_scope.check_within(n)?;
            if f.next_size != state_sizes[j] {
                return Err(LocalityError::DimensionMismatch(format!(
                    "kernel {j} has next-state size {}, agent has {}",
                    f.next_size, state_sizes[j]
                )));
            }
            let (sk, ak, n_sk, n_ak) = match f.storage {
                Storage::Scoped => (
                    states.projection_table(&f.state_scope),
                    actions.projection_table(&f.action_scope),
                    states.subspace(&f.state_scope).len(),
                    actions.subspace(&f.action_scope).len(),
                ),
                Storage::Dense => (
                    (0..states.len()).collect(),
                    (0..actions.len()).collect(),
                    states.len(),
                    actions.len(),
                ),
            };
            if f.rows.len() != n_sk * n_ak * f.next_size {
                return Err(LocalityError::DimensionMismatch(format!(
                    "kernel {j} table has {} entries, expected {}",
                    f.rows.len(),
                    n_sk * n_ak * f.next_size
                )));
            }
            state_keys.push(sk);
            action_keys.push(ak);
            action_key_counts.push(n_ak);
        }
        Ok(Self {
            states,
            actions,
            factors,
            reward,
            state_keys,
            action_keys,
            action_key_counts,
            cap: DEFAULT_CAP,
        })
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> u128 {
        self.cap
    }

    pub fn n(&self) -> usize {
        self.states.dims()
    }

    pub fn states(&self) -> &Space {
        &self.states
    }

    pub fn actions(&self) -> &Space {
        &self.actions
    }

    pub fn factor(&self, j: usize) -> &KernelFactor {
        &self.factors[j]
    }

    pub fn factors(&self) -> &[KernelFactor] {
        &self.factors
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions.len() + a]
    }

    /// `P_j(· | s, a)` as a slice over agent `j`'s states.
    #[inline]
    pub fn kernel_row(&self, j: usize, s: usize, a: usize) -> &[f64] {
        let f = &self.factors[j];
        let row = self.state_keys[j][s] * self.action_key_counts[j] + self.action_keys[j][a];
        &f.rows[row * f.next_size..(row + 1) * f.next_size]
    }

    /// Joint next-state distribution `P(· | s, a) = Π_j P_j(·_j | s, a)`.
    pub fn next_state_dist(&self, s: usize, a: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.states.len());
        out.push(1.0);
        for j in 0..self.n() {
            let p = self.kernel_row(j, s, a);
            let mut next = Vec::with_capacity(out.len() * p.len());
            for &w in &out {
                for &q in p {
                    next.push(w * q);
                }
            }
            out = next;
        }
        out
    }

    /// `|S|^2 * |A|`, the cost of building the induced kernel.
    pub fn evaluations(&self) -> u128 {
        let s = self.states.len() as u128;
        s * s * self.actions.len() as u128
    }

    pub fn ensure_within_cap(&self) -> Result<()> {
        let evaluations = self.evaluations();
        if evaluations > self.cap {
            return Err(LocalityError::CapExceeded {
                evaluations,
                cap: self.cap,
            });
        }
        Ok(())
    }

    /// Lists every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (j, f) in self.factors.iter().enumerate() {
            for (row, p) in f.rows.chunks(f.next_size).enumerate() {
                if let Some((col, &v)) = p.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                    violations.push(Violation::NonFiniteEntry {
                        agent: j,
                        row,
                        col,
                        value: v,
                    });
                    continue;
                }
                for (col, &v) in p.iter().enumerate() {
                    if v < 0.0 {
                        violations.push(Violation::NegativeEntry {
                            agent: j,
                            row,
                            col,
                            value: v,
                        });
                    }
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    violations.push(Violation::RowSum { agent: j, row, sum });
                }
            }
            if f.storage == Storage::Dense {
                self.check_scope(j, &mut violations);
            }
        }
        for (idx, &r) in self.reward.iter().enumerate() {
            if !r.is_finite() {
                violations.push(Violation::NonFiniteReward {
                    state: idx / self.actions.len(),
                    action: idx % self.actions.len(),
                });
            }
        }
        ValidationReport { violations }
    }

    // Compares every row against the row with out-of-scope coordinates
    // pinned to zero, which covers every out-of-scope flip.
    fn check_scope(&self, j: usize, out: &mut Vec<Violation>) {
        let f = &self.factors[j];
        for s in 0..self.states.len() {
            let s_pin = self
                .states
                .embed(self.states.project(s, &f.state_scope), &f.state_scope);
            for a in 0..self.actions.len() {
                let a_pin = self
                    .actions
                    .embed(self.actions.project(a, &f.action_scope), &f.action_scope);
                if s_pin == s && a_pin == a {
                    continue;
                }
                let base = self.kernel_row(j, s_pin, a_pin);
                let row = self.kernel_row(j, s, a);
                if base.iter().zip(row).any(|(x, y)| (x - y).abs() > PROB_TOL) {
                    out.push(Violation::ScopeViolation {
                        agent: j,
                        state: s,
                        action: a,
                    });
                    return;
                }
            }
        }
    }
}

/// One failed invariant found by [`FactoredMdp::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RowSum {
        agent: usize,
        row: usize,
        sum: f64,
    },
    NegativeEntry {
        agent: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    NonFiniteEntry {
        agent: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    /// The dense table at `(state, action)` differs from the same row with
    /// out-of-scope coordinates pinned to zero.
    ScopeViolation {
        agent: usize,
        state: usize,
        action: usize,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_clean() {
            return Ok(());
        }
        let msg = self
            .violations
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join("; ");
        Err(LocalityError::InvalidDistribution(msg))
    }
}
