//! Worked example systems and a seeded random-instance generator.
//!
//! The random generator uses xoshiro256++ seeded through splitmix64
//! (`Xoshiro256PlusPlus::seed_from_u64`), so a seed names the same
//! instance on every platform.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};
use crate::mdp::{
    FactoredMdp, KernelFactor, Policy, ProductPolicy, Scope, SoftmaxPolicy, Space, DEFAULT_CAP,
};

/// A quantity the analysis pipeline is expected to reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub note: String,
}

fn expect(name: &str, value: f64, tolerance: f64, note: &str) -> Expected {
    Expected {
        name: name.into(),
        value,
        tolerance,
        note: note.into(),
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mdp: FactoredMdp,
    pub policy: Policy,
    pub expected: Vec<Expected>,
}

impl Scenario {
    pub fn expected_value(&self, name: &str) -> Option<f64> {
        self.expected
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
    }
}

/// Binary factor that ignores everything: a fair coin.
fn coin() -> KernelFactor {
    KernelFactor::scoped(Scope::empty(), Scope::empty(), 2, vec![0.5, 0.5])
}

/// Binary factor whose next value copies one binary input.
fn copy_of_action(k: usize) -> KernelFactor {
    KernelFactor::scoped(
        Scope::empty(),
        Scope::new(vec![k]),
        2,
        vec![1.0, 0.0, 0.0, 1.0],
    )
}

fn copy_of_state(i: usize) -> KernelFactor {
    KernelFactor::scoped(
        Scope::new(vec![i]),
        Scope::empty(),
        2,
        vec![1.0, 0.0, 0.0, 1.0],
    )
}

/// `r(s, a) = Σ_{j ∈ coords} s_j` as a joint table.
fn state_sum_reward(states: &Space, n_actions: usize, coords: &[usize]) -> Vec<f64> {
    (0..states.len())
        .flat_map(|s| {
            let v: f64 = coords.iter().map(|&j| states.digit(s, j) as f64).sum();
            std::iter::repeat_n(v, n_actions)
        })
        .collect()
}

/// Agent 0's state is a fair coin, agent 1's next state copies agent 0's
/// action, and agent 0 plays action 1 with probability `½ ∓ α/2` when
/// `s_0 = 0 / 1`. Agent 1 plays uniformly. Reward `r = s_1`.
pub fn scenario_sleepy(alpha: f64) -> Result<Scenario> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LocalityError::OutOfRange(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let sizes = [2, 2];
    let states = Space::new(&sizes)?;
    let mdp = FactoredMdp::new(
        &sizes,
        &sizes,
        vec![coin(), copy_of_action(0)],
        state_sum_reward(&states, 4, &[1]),
    )?;
    let (lo, hi) = (0.5 - alpha / 2.0, 0.5 + alpha / 2.0);
    let policy = ProductPolicy::new(
        &sizes,
        &sizes,
        vec![Scope::new(vec![0]), Scope::empty()],
        vec![vec![hi, lo, lo, hi], vec![0.5, 0.5]],
    )?;
    let exact = "exact by construction";
    Ok(Scenario {
        name: "sleepy".into(),
        mdp,
        policy: Policy::Tables(policy),
        expected: vec![
            expect("E_s_max", 0.0, 1e-12, "states never enter the kernels"),
            expect("E_a[1][0]", 1.0, 1e-12, exact),
            expect(
                "Pi[0][0]",
                alpha,
                1e-12,
                "TV gap of agent 0's policy across the s_0 flip",
            ),
            expect("Pi[0][1]", 0.0, 1e-12, exact),
            expect(
                "C[1][0]",
                alpha,
                1e-12,
                "closed-loop marginal equals agent 0's action probability",
            ),
            expect("rho", 0.0, 1e-10, "H is nilpotent"),
        ],
    })
}

/// Agent 0 is a fair coin and agent 1 copies `s_0`; actions do nothing.
/// Reward `r = s_1`.
pub fn scenario_leader_follower() -> Result<Scenario> {
    let sizes = [2usize, 2];
    let policy = ProductPolicy::new(
        &sizes,
        &sizes,
        vec![Scope::new(vec![0]), Scope::new(vec![1])],
        vec![vec![0.7, 0.3, 0.2, 0.8], vec![0.4, 0.6, 0.9, 0.1]],
    )?;
    scenario_leader_follower_with(Policy::Tables(policy))
}

/// The leader-follower system under a caller-chosen policy.
pub fn scenario_leader_follower_with(policy: Policy) -> Result<Scenario> {
    let sizes = [2usize, 2];
    let states = Space::new(&sizes)?;
    let mdp = FactoredMdp::new(
        &sizes,
        &sizes,
        vec![coin(), copy_of_state(0)],
        state_sum_reward(&states, 4, &[1]),
    )?;
    policy
        .materialize()?
        .check_conforms(mdp.states(), mdp.actions())?;
    Ok(Scenario {
        name: "leader-follower".into(),
        mdp,
        policy,
        expected: vec![
            expect("E_s[1][0]", 1.0, 1e-12, "agent 1 copies s_0"),
            expect("E_a_max", 0.0, 1e-12, "actions have no effect"),
            expect("C[1][0]", 1.0, 1e-12, "holds for every policy"),
            expect("H[1][0]", 1.0, 1e-12, "equals E_s because E_a = 0"),
        ],
    })
}

/// Hub agent 0 is a fair coin; every spoke's next state copies the hub's
/// action. The hub plays softmax with logits `β·a_0·parity(s)`, so
/// flipping any one state coordinate moves its logit by exactly `β`.
/// Spokes play uniformly. Reward `r = Σ_{j>0} s_j`.
pub fn scenario_hub_spoke(n: usize, beta: f64, tau: f64) -> Result<Scenario> {
    if n < 3 {
        return Err(LocalityError::OutOfRange(format!(
            "hub-and-spoke needs n >= 3, got {n}"
        )));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(LocalityError::OutOfRange(format!(
            "beta {beta} must be finite and nonnegative"
        )));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(LocalityError::NonPositiveTemperature(tau));
    }
    let sizes = vec![2usize; n];
    let states = Space::new(&sizes)?;
    let mut factors = vec![coin()];
    factors.extend((1..n).map(|_| copy_of_action(0)));
    let n_actions = 1usize << n;
    let spokes: Vec<usize> = (1..n).collect();
    let mdp = FactoredMdp::new(
        &sizes,
        &sizes,
        factors,
        state_sum_reward(&states, n_actions, &spokes),
    )?;

    let hub_logits: Vec<f64> = (0..states.len())
        .flat_map(|s| {
            let parity = (0..n).map(|i| states.digit(s, i)).sum::<usize>() % 2;
            [0.0, beta * parity as f64]
        })
        .collect();
    let mut scopes = vec![Scope::full(n)];
    scopes.extend((1..n).map(|_| Scope::empty()));
    let mut logits = vec![hub_logits];
    logits.extend((1..n).map(|_| vec![0.0, 0.0]));
    let sp = SoftmaxPolicy::new(&sizes, &sizes, scopes, logits, tau)?;

    let m = n as f64 - 1.0;
    let pi_exact = 1.0 / (1.0 + (-beta / tau).exp()) - 0.5;
    Ok(Scenario {
        name: "hub-spoke".into(),
        mdp,
        policy: Policy::Softmax(sp),
        expected: vec![
            expect("E_s_max", 0.0, 1e-12, "states never enter the kernels"),
            expect("E_a[j][0]", 1.0, 1e-12, "every spoke copies the hub action"),
            expect(
                "L[0][i]",
                beta,
                1e-12,
                "parity logits saturate the Lipschitz constant",
            ),
            expect("Pi[0][i]", pi_exact, 1e-12, "sigmoid(beta/tau) - 1/2"),
            expect(
                "rho",
                m * pi_exact,
                1e-9,
                "H is rank one with trace (n-1) Pi[0][i]",
            ),
            expect(
                "rho_bound",
                m * beta / (2.0 * tau),
                0.0,
                "(n-1) beta / (2 tau)",
            ),
            expect(
                "baseline_inf_norm",
                1.0,
                1e-12,
                "action-supremum matrix row sum",
            ),
        ],
    })
}

/// Knobs of the random-instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomConfig {
    pub seed: u64,
    pub n: usize,
    pub state_size: usize,
    pub action_size: usize,
    /// Agents sit on a ring; every scope is the radius-`r` neighborhood.
    pub scope_radius: usize,
    pub temperature: f64,
    /// Weight of the row-specific part of every kernel row; the rest is a
    /// distribution shared by all rows of the factor. Sensitivities scale
    /// linearly with it.
    pub coupling: f64,
}

impl RandomConfig {
    pub fn new(
        seed: u64,
        n: usize,
        state_size: usize,
        action_size: usize,
        scope_radius: usize,
    ) -> Self {
        Self {
            seed,
            n,
            state_size,
            action_size,
            scope_radius,
            temperature: 1.0,
            coupling: 1.0,
        }
    }
}

/// Ring neighborhood `{j - r, …, j + r} mod n`.
pub fn ring_scope(j: usize, n: usize, r: usize) -> Scope {
    let r = r.min(n / 2);
    Scope::new((0..=2 * r).map(|d| (j + n - r + d) % n).collect())
}

fn random_distribution(rng: &mut Xoshiro256PlusPlus, m: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Deterministic pseudo-random instance: positive kernels over ring
/// scopes, rewards uniform in `[0, 1]`, softmax logits uniform in `[-1, 1]`.
pub fn random_instance(
    seed: u64,
    n: usize,
    state_size: usize,
    action_size: usize,
    scope_radius: usize,
) -> Result<Scenario> {
    random_instance_with(&RandomConfig::new(
        seed,
        n,
        state_size,
        action_size,
        scope_radius,
    ))
}

pub fn random_instance_with(cfg: &RandomConfig) -> Result<Scenario> {
    if !(0.0..=1.0).contains(&cfg.coupling) {
        return Err(LocalityError::OutOfRange(format!(
            "coupling {} outside [0, 1]",
            cfg.coupling
        )));
    }
    if cfg.n == 0 || cfg.state_size == 0 || cfg.action_size == 0 {
        return Err(LocalityError::OutOfRange(
            "random instance needs positive sizes".into(),
        ));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let s_sizes = vec![cfg.state_size; cfg.n];
    let a_sizes = vec![cfg.action_size; cfg.n];
    let states = Space::new(&s_sizes)?;
    let actions = Space::new(&a_sizes)?;
    let evaluations = (states.len() as u128).pow(2) * actions.len() as u128;
    if evaluations > DEFAULT_CAP {
        return Err(LocalityError::CapExceeded {
            evaluations,
            cap: DEFAULT_CAP,
        });
    }

    let mut factors = Vec::with_capacity(cfg.n);
    for j in 0..cfg.n {
        let scope = ring_scope(j, cfg.n, cfg.scope_radius);
        let rows = states.subspace(&scope).len() * actions.subspace(&scope).len();
        let base = random_distribution(&mut rng, cfg.state_size);
        let table = (0..rows)
            .flat_map(|_| {
                let own = random_distribution(&mut rng, cfg.state_size);
                if cfg.coupling == 1.0 {
                    own
                } else {
                    base.iter()
                        .zip(own)
                        .map(|(b, o)| (1.0 - cfg.coupling) * b + cfg.coupling * o)
                        .collect()
                }
            })
            .collect();
        factors.push(KernelFactor::scoped(
            scope.clone(),
            scope,
            cfg.state_size,
            table,
        ));
    }
    let reward = (0..states.len() * actions.len())
        .map(|_| rng.random::<f64>())
        .collect();
    let mdp = FactoredMdp::new(&s_sizes, &a_sizes, factors, reward)?;

    let scopes: Vec<Scope> = (0..cfg.n)
        .map(|k| ring_scope(k, cfg.n, cfg.scope_radius))
        .collect();
    let logits = scopes
        .iter()
        .map(|sc| {
            (0..states.subspace(sc).len() * cfg.action_size)
                .map(|_| rng.random_range(-1.0..=1.0))
                .collect()
        })
        .collect();
    let sp = SoftmaxPolicy::new(&s_sizes, &a_sizes, scopes, logits, cfg.temperature)?;
    Ok(Scenario {
        name: "random".into(),
        mdp,
        policy: Policy::Softmax(sp),
        expected: Vec::new(),
    })
}
