//! Policy-induced kernels and the one-step expectation operator.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};

use super::{FactoredMdp, ProductPolicy};

/// Row-stochastic matrix over the joint state space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateKernel {
    n: usize,
    data: Vec<f64>,
}

impl StateKernel {
    pub fn from_dense(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(LocalityError::DimensionMismatch(format!(
                "kernel data has {} entries, expected {}",
                data.len(),
                n * n
            )));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n..(s + 1) * self.n]
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.data[s * self.n + t]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Largest `|Σ_t P(s, t) - 1|` over rows.
    pub fn max_row_defect(&self) -> f64 {
        (0..self.n)
            .map(|s| (self.row(s).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// A real function on the joint state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateFunction(pub Vec<f64>);

impl StateFunction {
    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v + c).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    pub fn sub(&self, other: &StateFunction) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &StateFunction) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max f - min f`.
    pub fn span(&self) -> f64 {
        self.max() - self.min()
    }

    /// `inf_c ‖self - other - c‖_∞`, i.e. half the span of the difference.
    pub fn aligned_distance(&self, other: &StateFunction) -> f64 {
        0.5 * self.sub(other).span()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Deref for StateFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for StateFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `P^π(s' | s) = Σ_a Π_j P_j(s'_j | s, a) Π_k π_k(a_k | s_{O_k})`.
pub fn induced_kernel(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<StateKernel> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    mdp.ensure_within_cap()?;
    let ns = mdp.states().len();
    let mut data = vec![0.0; ns * ns];
    for s in 0..ns {
        let row = &mut data[s * ns..(s + 1) * ns];
        for (a, w) in pi.joint_action_probs(s).into_iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, q) in mdp.next_state_dist(s, a).into_iter().enumerate() {
                row[t] += w * q;
            }
        }
    }
    Ok(StateKernel { n: ns, data })
}

/// `r^π(s) = Σ_a r(s, a) π(a | s)`.
pub fn policy_reward(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<StateFunction> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    let values = (0..mdp.states().len())
        .map(|s| {
            pi.joint_action_probs(s)
                .iter()
                .enumerate()
                .map(|(a, w)| w * mdp.reward(s, a))
                .sum()
        })
        .collect();
    Ok(StateFunction(values))
}

/// `(T f)(s) = Σ_{s'} P(s' | s) f(s')`.
pub fn apply_operator(kernel: &StateKernel, f: &StateFunction) -> Result<StateFunction> {
    if f.len() != kernel.len() {
        return Err(LocalityError::DimensionMismatch(format!(
            "function of length {} on a kernel over {} states",
            f.len(),
            kernel.len()
        )));
    }
    Ok(StateFunction(
        (0..kernel.len())
            .map(|s| kernel.row(s).iter().zip(f.iter()).map(|(p, v)| p * v).sum())
            .collect(),
    ))
}

/// Policy-mixed next-state marginals `P^π_j(· | s)`, indexed `[j][s]`.
pub fn next_marginals(mdp: &FactoredMdp, pi: &ProductPolicy) -> Result<Vec<Vec<Vec<f64>>>> {
    pi.check_conforms(mdp.states(), mdp.actions())?;
    mdp.ensure_within_cap()?;
    let n = mdp.n();
    let ns = mdp.states().len();
    let mut out: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|j| vec![vec![0.0; mdp.states().size(j)]; ns])
        .collect();
    for s in 0..ns {
        for (a, w) in pi.joint_action_probs(s).into_iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (j, per_agent) in out.iter_mut().enumerate() {
                for (acc, q) in per_agent[s].iter_mut().zip(mdp.kernel_row(j, s, a)) {
                    *acc += w * q;
                }
            }
        }
    }
    Ok(out)
}

/// Single-site (asynchronous) kernel: coordinate `j` is picked with
/// probability `ν_j` and redrawn from `P^π_j(· | s)`; the rest stay put.
pub fn async_kernel(mdp: &FactoredMdp, pi: &ProductPolicy, nu: &[f64]) -> Result<StateKernel> {
    if nu.len() != mdp.n() {
        return Err(LocalityError::DimensionMismatch(format!(
            "site distribution has {} entries for {} agents",
            nu.len(),
            mdp.n()
        )));
    }
    let marg = next_marginals(mdp, pi)?;
    let states = mdp.states();
    let ns = states.len();
    let mut data = vec![0.0; ns * ns];
    for s in 0..ns {
        for (j, &weight) in nu.iter().enumerate() {
            for (y, &p) in marg[j][s].iter().enumerate() {
                data[s * ns + states.with_digit(s, j, y)] += weight * p;
            }
        }
    }
    Ok(StateKernel { n: ns, data })
}
