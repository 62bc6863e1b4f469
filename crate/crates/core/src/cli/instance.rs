//! JSON instance files.

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};
use crate::mdp::{
    FactoredMdp, KernelFactor, Policy, ProductPolicy, Scope, SoftmaxPolicy, Space, Storage,
};
use crate::scenarios::{Expected, Scenario};

pub const INSTANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub agents: Agents,
    pub kernels: Vec<KernelSpec>,
    pub reward: RewardSpec,
    pub policy: PolicySpec,
    /// Reference values carried along by generated scenarios; ignored by
    /// the analysis commands.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected: Vec<Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agents {
    pub state_sizes: Vec<usize>,
    pub action_sizes: Vec<usize>,
}

/// One agent's transition factor. Scoped rows are indexed by
/// `sk * |A_scope| + ak`; dense rows by `s * |A| + a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub state_scope: Scope,
    pub action_scope: Scope,
    #[serde(default = "default_storage")]
    pub storage: Storage,
    pub rows: Vec<Vec<f64>>,
}

fn default_storage() -> Storage {
    Storage::Scoped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardSpec {
    /// `table[s][a]`.
    Table(Vec<Vec<f64>>),
    /// Summands over scopes, added up into the global reward.
    Local(Vec<LocalReward>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalReward {
    pub state_scope: Scope,
    pub action_scope: Scope,
    /// Indexed by `sk * |A_scope| + ak`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PolicySpec {
    /// `tables[k][row][a_k]`, one row per configuration of `scopes[k]`.
    Tables {
        scopes: Vec<Scope>,
        tables: Vec<Vec<Vec<f64>>>,
    },
    /// `logits[k][row][a_k]`, laid out like explicit tables.
    Softmax {
        scopes: Vec<Scope>,
        logits: Vec<Vec<Vec<f64>>>,
        temperature: f64,
    },
}

fn flatten(rows: &[Vec<f64>], width: usize, what: &str) -> Result<Vec<f64>> {
    if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != width) {
        return Err(LocalityError::DimensionMismatch(format!(
            "{what} row {r} has {} entries, expected {width}",
            row.len()
        )));
    }
    Ok(rows.concat())
}

fn unflatten(flat: &[f64], width: usize) -> Vec<Vec<f64>> {
    flat.chunks(width.max(1)).map(<[f64]>::to_vec).collect()
}

impl InstanceFile {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// `|S|² · |A|` computed from the declared sizes without building
    /// anything.
    pub fn evaluations(&self) -> u128 {
        let s: u128 = self.agents.state_sizes.iter().map(|&x| x as u128).product();
        let a: u128 = self
            .agents
            .action_sizes
            .iter()
            .map(|&x| x as u128)
            .product();
        s.saturating_mul(s).saturating_mul(a)
    }

    pub fn build(&self) -> Result<(FactoredMdp, Policy)> {
        if self.schema_version != INSTANCE_SCHEMA_VERSION {
            return Err(LocalityError::OutOfRange(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        let ss = &self.agents.state_sizes;
        let aa = &self.agents.action_sizes;
        if self.kernels.len() != ss.len() {
            return Err(LocalityError::DimensionMismatch(format!(
                "{} kernels for {} agents",
                self.kernels.len(),
                ss.len()
            )));
        }
        let states = Space::new(ss)?;
        let actions = Space::new(aa)?;
        let mut factors = Vec::with_capacity(ss.len());
        for (j, k) in self.kernels.iter().enumerate() {
            let rows = flatten(&k.rows, ss[j], &format!("kernel {j}"))?;
            let (sc, ac) = (k.state_scope.clone(), k.action_scope.clone());
            factors.push(match k.storage {
                Storage::Scoped => KernelFactor::scoped(sc, ac, ss[j], rows),
                Storage::Dense => KernelFactor::dense(sc, ac, ss[j], rows),
            });
        }
        let reward = match &self.reward {
            RewardSpec::Table(t) => flatten(t, actions.len(), "reward")?,
            RewardSpec::Local(parts) => local_reward_table(&states, &actions, parts)?,
        };
        let mdp = FactoredMdp::new(ss, aa, factors, reward)?;
        let policy = match &self.policy {
            PolicySpec::Tables { scopes, tables } => {
                let flat = tables
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        flatten(t, aa.get(k).copied().unwrap_or(0), &format!("policy {k}"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Policy::Tables(ProductPolicy::new(ss, aa, scopes.clone(), flat)?)
            }
            PolicySpec::Softmax {
                scopes,
                logits,
                temperature,
            } => {
                let flat = logits
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        flatten(t, aa.get(k).copied().unwrap_or(0), &format!("logits {k}"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Policy::Softmax(SoftmaxPolicy::new(
                    ss,
                    aa,
                    scopes.clone(),
                    flat,
                    *temperature,
                )?)
            }
        };
        Ok((mdp, policy))
    }

    /// Instance file describing an in-memory model; the reward is written
    /// as a full table.
    pub fn from_model(mdp: &FactoredMdp, policy: &Policy) -> Self {
        let state_sizes = mdp.states().sizes().to_vec();
        let action_sizes = mdp.actions().sizes().to_vec();
        let kernels = mdp
            .factors()
            .iter()
            .map(|f| KernelSpec {
                state_scope: f.state_scope().clone(),
                action_scope: f.action_scope().clone(),
                storage: f.storage(),
                rows: unflatten(f.rows(), f.next_size()),
            })
            .collect();
        let reward = RewardSpec::Table(unflatten(mdp.reward_table(), mdp.actions().len()));
        let policy = match policy {
            Policy::Tables(p) => PolicySpec::Tables {
                scopes: p.scopes().to_vec(),
                tables: p
                    .tables()
                    .iter()
                    .zip(&action_sizes)
                    .map(|(t, &m)| unflatten(t, m))
                    .collect(),
            },
            Policy::Softmax(sp) => PolicySpec::Softmax {
                scopes: sp.scopes.clone(),
                logits: sp
                    .logits
                    .iter()
                    .zip(&action_sizes)
                    .map(|(t, &m)| unflatten(t, m))
                    .collect(),
                temperature: sp.temperature,
            },
        };
        Self {
            schema_version: INSTANCE_SCHEMA_VERSION,
            name: None,
            agents: Agents {
                state_sizes,
                action_sizes,
            },
            kernels,
            reward,
            policy,
            expected: Vec::new(),
        }
    }

    pub fn from_scenario(sc: &Scenario) -> Self {
        let mut f = Self::from_model(&sc.mdp, &sc.policy);
        f.name = Some(sc.name.clone());
        f.expected = sc.expected.clone();
        f
    }
}

fn local_reward_table(states: &Space, actions: &Space, parts: &[LocalReward]) -> Result<Vec<f64>> {
    let n = states.dims();
    let mut table = vec![0.0; states.len() * actions.len()];
    for (m, part) in parts.iter().enumerate() {
        part.state_scope.check_within(n)?;
        part.action_scope.check_within(n)?;
        let n_ak = actions.subspace(&part.action_scope).len();
        let expected = states.subspace(&part.state_scope).len() * n_ak;
        if part.values.len() != expected {
            return Err(LocalityError::DimensionMismatch(format!(
                "reward summand {m} has {} values, expected {expected}",
                part.values.len()
            )));
        }
        let a_keys = actions.projection_table(&part.action_scope);
        for s in 0..states.len() {
            let sk = states.project(s, &part.state_scope);
            for (a, &ak) in a_keys.iter().enumerate() {
                table[s * actions.len() + a] += part.values[sk * n_ak + ak];
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{random_instance, scenario_hub_spoke, scenario_sleepy};

    #[test]
    fn scenario_round_trip() {
        for sc in [
            scenario_sleepy(0.3).unwrap(),
            scenario_hub_spoke(3, 1.0, 2.0).unwrap(),
            random_instance(3, 2, 3, 2, 1).unwrap(),
        ] {
            let file = InstanceFile::from_scenario(&sc);
            let again = InstanceFile::from_json(&file.to_json()).unwrap();
            assert_eq!(file, again);
            let (mdp, policy) = again.build().unwrap();
            assert_eq!(mdp, sc.mdp);
            assert_eq!(policy, sc.policy);
        }
    }

    #[test]
    fn local_reward_summands_add_up() {
        let text = r#"{
            "schema_version": 1,
            "agents": {"state_sizes": [2, 2], "action_sizes": [1, 1]},
            "kernels": [
                {"state_scope": [], "action_scope": [], "rows": [[0.5, 0.5]]},
                {"state_scope": [], "action_scope": [], "rows": [[0.5, 0.5]]}
            ],
            "reward": {"local": [
                {"state_scope": [0], "action_scope": [], "values": [0.0, 1.0]},
                {"state_scope": [1], "action_scope": [], "values": [0.0, 10.0]}
            ]},
            "policy": {"tables": {"scopes": [[], []], "tables": [[[1.0]], [[1.0]]]}}
        }"#;
        let (mdp, _) = InstanceFile::from_json(text).unwrap().build().unwrap();
        assert_eq!(mdp.reward_table(), &[0.0, 10.0, 1.0, 11.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"schema_version": 1, "agents": {"state_sizes": [1], "action_sizes": [1], "extra": 3},
            "kernels": [], "reward": {"table": []}, "policy": {"tables": {"scopes": [], "tables": []}}}"#;
        assert!(InstanceFile::from_json(text).is_err());
    }
}
