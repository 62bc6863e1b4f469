use crate::error::{LocalityError, Result};

use super::space::{Scope, Space};
use super::PROB_TOL;

/// A product-form policy `π(a | s) = Π_k π_k(a_k | s_{O_k})`.
///
/// Agent `k`'s table has one row per configuration of its observation
/// scope `O_k`, in mixed-radix order, each row a distribution over `A_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPolicy {
    states: Space,
    action_sizes: Vec<usize>,
    scopes: Vec<Scope>,
    tables: Vec<Vec<f64>>,
    keys: Vec<Vec<usize>>,
}

impl ProductPolicy {
    pub fn new(
        state_sizes: &[usize],
        action_sizes: &[usize],
        scopes: Vec<Scope>,
        tables: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let states = Space::new(state_sizes)?;
        let n = states.dims();
        if action_sizes.len() != n || scopes.len() != n || tables.len() != n {
            return Err(LocalityError::DimensionMismatch(format!(
                "policy for {n} agents has {} action sizes, {} scopes, {} tables",
                action_sizes.len(),
                scopes.len(),
                tables.len()
            )));
        }
        let mut keys = Vec::with_capacity(n);
        for k in 0..n {
            scopes[k].check_within(n)?;
            let rows = states.subspace(&scopes[k]).len();
            if tables[k].len() != rows * action_sizes[k] {
                return Err(LocalityError::DimensionMismatch(format!(
                    "policy table {k} has {} entries, expected {}",
                    tables[k].len(),
                    rows * action_sizes[k]
                )));
            }
            for (r, row) in tables[k].chunks(action_sizes[k]).enumerate() {
                check_distribution(row).map_err(|e| {
                    LocalityError::InvalidDistribution(format!("agent {k} row {r}: {e}"))
                })?;
            }
            keys.push(states.projection_table(&scopes[k]));
        }
        Ok(Self {
            states,
            action_sizes: action_sizes.to_vec(),
            scopes,
            tables,
            keys,
        })
    }

    /// Every agent picks uniformly, observing nothing.
    pub fn uniform(state_sizes: &[usize], action_sizes: &[usize]) -> Result<Self> {
        let n = state_sizes.len();
        let tables = action_sizes
            .iter()
            .map(|&m| vec![1.0 / m as f64; m])
            .collect();
        Self::new(state_sizes, action_sizes, vec![Scope::empty(); n], tables)
    }

    pub fn n(&self) -> usize {
        self.scopes.len()
    }

    pub fn states(&self) -> &Space {
        &self.states
    }

    pub fn action_sizes(&self) -> &[usize] {
        &self.action_sizes
    }

    pub fn scope(&self, k: usize) -> &Scope {
        &self.scopes[k]
    }

    pub fn scopes(&self) -> &[Scope] {
        &self.scopes
    }

    pub fn table(&self, k: usize) -> &[f64] {
        &self.tables[k]
    }

    pub fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    /// Row index of joint state `s` in agent `k`'s table.
    #[inline]
    pub fn row_index(&self, k: usize, s: usize) -> usize {
        self.keys[k][s]
    }

    /// `π_k(· | s_{O_k})` for joint state `s`.
    #[inline]
    pub fn row(&self, k: usize, s: usize) -> &[f64] {
        let m = self.action_sizes[k];
        let r = self.keys[k][s];
        &self.tables[k][r * m..(r + 1) * m]
    }

    /// Joint action distribution `π(· | s)` over the mixed-radix action space.
    pub fn joint_action_probs(&self, s: usize) -> Vec<f64> {
        let mut out = vec![1.0];
        for k in 0..self.n() {
            let p = self.row(k, s);
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

    /// Copy of the policy with agent `k`'s block replaced.
    pub fn with_block(&self, k: usize, scope: Scope, table: Vec<f64>) -> Result<Self> {
        let mut scopes = self.scopes.clone();
        let mut tables = self.tables.clone();
        scopes[k] = scope;
        tables[k] = table;
        Self::new(self.states.sizes(), &self.action_sizes, scopes, tables)
    }

    /// Checks that the policy is defined on the given spaces.
    pub fn check_conforms(&self, states: &Space, actions: &Space) -> Result<()> {
        if self.states.sizes() != states.sizes() || self.action_sizes != actions.sizes() {
            return Err(LocalityError::DimensionMismatch(format!(
                "policy spaces ({:?}, {:?}) differ from MDP spaces ({:?}, {:?})",
                self.states.sizes(),
                self.action_sizes,
                states.sizes(),
                actions.sizes()
            )));
        }
        Ok(())
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(format!("negative or non-finite entry in {row:?}"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(format!("row sums to {sum}"));
    }
    Ok(())
}

/// Temperature-`τ` softmax policy with per-agent logit tables
/// `g_k(s_{O_k}, a_k)` laid out like [`ProductPolicy`] tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    pub state_sizes: Vec<usize>,
    pub action_sizes: Vec<usize>,
    pub scopes: Vec<Scope>,
    pub logits: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl SoftmaxPolicy {
    pub fn new(
        state_sizes: &[usize],
        action_sizes: &[usize],
        scopes: Vec<Scope>,
        logits: Vec<Vec<f64>>,
        temperature: f64,
    ) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(LocalityError::NonPositiveTemperature(temperature));
        }
        let states = Space::new(state_sizes)?;
        let n = states.dims();
        if action_sizes.len() != n || scopes.len() != n || logits.len() != n {
            return Err(LocalityError::DimensionMismatch(
                "softmax policy arrays disagree with agent count".into(),
            ));
        }
        for k in 0..n {
            scopes[k].check_within(n)?;
            let rows = states.subspace(&scopes[k]).len();
            if logits[k].len() != rows * action_sizes[k] {
                return Err(LocalityError::DimensionMismatch(format!(
                    "logit table {k} has {} entries, expected {}",
                    logits[k].len(),
                    rows * action_sizes[k]
                )));
            }
            if logits[k].iter().any(|g| !g.is_finite()) {
                return Err(LocalityError::OutOfRange(format!(
                    "non-finite logit for agent {k}"
                )));
            }
        }
        Ok(Self {
            state_sizes: state_sizes.to_vec(),
            action_sizes: action_sizes.to_vec(),
            scopes,
            logits,
            temperature,
        })
    }

    pub fn n(&self) -> usize {
        self.scopes.len()
    }

    pub fn materialize(&self) -> Result<ProductPolicy> {
        materialize_softmax(self)
    }
}

/// Softmax of `g / τ`, shifted by the row maximum for stability.
pub(crate) fn softmax_row(g: &[f64], tau: f64) -> Vec<f64> {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = g.iter().map(|x| ((x - max) / tau).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Materializes `π_k(a_k | s_{O_k}) ∝ exp(g_k(s_{O_k}, a_k) / τ)`.
pub fn materialize_softmax(sp: &SoftmaxPolicy) -> Result<ProductPolicy> {
    let tau = sp.temperature;
    if !(tau > 0.0) {
        return Err(LocalityError::NonPositiveTemperature(tau));
    }
    let tables = sp
        .logits
        .iter()
        .zip(&sp.action_sizes)
        .map(|(g, &m)| g.chunks(m).flat_map(|row| softmax_row(row, tau)).collect())
        .collect();
    ProductPolicy::new(&sp.state_sizes, &sp.action_sizes, sp.scopes.clone(), tables)
}

/// A policy as supplied by the user: explicit tables or softmax logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Tables(ProductPolicy),
    Softmax(SoftmaxPolicy),
}

impl Policy {
    pub fn materialize(&self) -> Result<ProductPolicy> {
        match self {
            Policy::Tables(p) => Ok(p.clone()),
            Policy::Softmax(sp) => sp.materialize(),
        }
    }

    pub fn softmax(&self) -> Option<&SoftmaxPolicy> {
        match self {
            Policy::Softmax(sp) => Some(sp),
            Policy::Tables(_) => None,
        }
    }
}
