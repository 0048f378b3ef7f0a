//! Finite-horizon episodic MDPs and their exact solvers.
//!
//! Stages are 0-based in code: stage `h` ranges over `0..horizon`, and
//! value tables carry one extra, all-zero stage at index `horizon` so that
//! backups at the last real stage need no special case.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Allowed deviation of a transition row sum from 1 before it is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of deterministic policies `enumerate_policies`
/// will visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("horizon, number of states and number of actions must all be positive")]
    EmptyDimension,
    #[error("initial state {initial} out of range for {states} states")]
    InitialState { initial: usize, states: usize },
    #[error("{what}: expected {expected} entries, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("transition row (h={h}, s={s}, a={a}) is not a probability vector: {reason}")]
    TransitionRow {
        h: usize,
        s: usize,
        a: usize,
        reason: String,
    },
    #[error("reward (h={h}, s={s}, a={a}) = {mean} with noise half-width {noise} leaves [0, 1]")]
    RewardRange {
        h: usize,
        s: usize,
        a: usize,
        mean: f64,
        noise: f64,
    },
    #[error("stage {h} is terminal and has no transition kernel")]
    TerminalStage { h: usize },
    #[error("policy action {action} at (h={h}, s={s}) out of range for {actions} actions")]
    InvalidAction {
        h: usize,
        s: usize,
        action: usize,
        actions: usize,
    },
    #[error("policy dimensions (H={h}, S={s}) do not match the MDP (H={mdp_h}, S={mdp_s})")]
    PolicyShape {
        h: usize,
        s: usize,
        mdp_h: usize,
        mdp_s: usize,
    },
    #[error("enumerating {count} policies exceeds the cap of {cap}")]
    EnumerationCap { count: String, cap: u64 },
}

/// A finite episodic MDP with a fixed initial state.
///
/// Transition kernels exist for stages `0..horizon-1`; the episode ends
/// after the action at stage `horizon-1`. Rewards are stored as means in
/// `[0, 1]`. When a noise half-width `w` is present the realized reward is
/// `mean + U[-w, w]`, and construction guarantees this never leaves `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct EpisodicMdp {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    initial_state: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    reward_noise: Option<Vec<f64>>,
}

impl EpisodicMdp {
    /// Builds an MDP from flat row-major tables.
    ///
    /// `transitions` is indexed `[h][s][a][s']` for `h < horizon - 1`,
    /// `rewards` and `reward_noise` are indexed `[h][s][a]` for `h < horizon`.
    /// Rows within [`ROW_SUM_TOLERANCE`] of summing to one are renormalized.
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        initial_state: usize,
        mut transitions: Vec<f64>,
        rewards: Vec<f64>,
        reward_noise: Option<Vec<f64>>,
    ) -> Result<Self, MdpError> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(MdpError::EmptyDimension);
        }
        if initial_state >= num_states {
            return Err(MdpError::InitialState {
                initial: initial_state,
                states: num_states,
            });
        }
        let pairs = num_states * num_actions;
        check_len(
            "transitions",
            (horizon - 1) * pairs * num_states,
            transitions.len(),
        )?;
        check_len("rewards", horizon * pairs, rewards.len())?;
        if let Some(noise) = &reward_noise {
            check_len("reward_noise", horizon * pairs, noise.len())?;
        }

        for (idx, row) in transitions.chunks_mut(num_states).enumerate() {
            let (h, s, a) = unflatten(idx, num_states, num_actions);
            validate_row(row).map_err(|reason| MdpError::TransitionRow { h, s, a, reason })?;
            normalize_row(row);
        }

        for (idx, &mean) in rewards.iter().enumerate() {
            let noise = reward_noise.as_ref().map_or(0.0, |n| n[idx]);
            let ok = mean.is_finite()
                && noise.is_finite()
                && noise >= 0.0
                && mean - noise >= 0.0
                && mean + noise <= 1.0;
            if !ok {
                let (h, s, a) = unflatten(idx, num_states, num_actions);
                return Err(MdpError::RewardRange {
                    h,
                    s,
                    a,
                    mean,
                    noise,
                });
            }
        }

        Ok(Self {
            horizon,
            num_states,
            num_actions,
            initial_state,
            transitions,
            rewards,
            reward_noise,
        })
    }

    /// Builds a deterministic-reward MDP from closures over `(h, s, a, s')`
    /// and `(h, s, a)`.
    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        initial_state: usize,
        mut transition: impl FnMut(usize, usize, usize, usize) -> f64,
        mut reward: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, MdpError> {
        let mut transitions =
            Vec::with_capacity(horizon.saturating_sub(1) * num_states * num_actions * num_states);
        for h in 0..horizon.saturating_sub(1) {
            for s in 0..num_states {
                for a in 0..num_actions {
                    for next in 0..num_states {
                        transitions.push(transition(h, s, a, next));
                    }
                }
            }
        }
        let mut rewards = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    rewards.push(reward(h, s, a));
                }
            }
        }
        Self::new(
            horizon,
            num_states,
            num_actions,
            initial_state,
            transitions,
            rewards,
            None,
        )
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Next-state distribution for `(h, s, a)`. Panics if `h` is the last stage.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        assert!(h + 1 < self.horizon, "stage {h} has no transition kernel");
        let start = self.pair_index(h, s, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[self.pair_index(h, s, a)]
    }

    pub fn reward_noise(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward_noise
            .as_ref()
            .map_or(0.0, |n| n[self.pair_index(h, s, a)])
    }

    pub fn has_reward_noise(&self) -> bool {
        self.reward_noise
            .as_ref()
            .is_some_and(|n| n.iter().any(|&w| w > 0.0))
    }

    /// Draws a realized reward. Consumes randomness only when the noise
    /// half-width at `(h, s, a)` is positive.
    pub fn sample_reward<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> f64 {
        let mean = self.reward(h, s, a);
        let width = self.reward_noise(h, s, a);
        if width > 0.0 {
            (mean + rng.gen_range(-width..=width)).clamp(0.0, 1.0)
        } else {
            mean
        }
    }

    /// Draws the successor of `(h, s, a)` by inverting the row's CDF.
    pub fn sample_next_state<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize, MdpError> {
        if h + 1 >= self.horizon {
            return Err(MdpError::TerminalStage { h });
        }
        let row = self.transition_row(h, s, a);
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                cumulative += p;
                last_positive = next;
                if u < cumulative {
                    return Ok(next);
                }
            }
        }
        Ok(last_positive)
    }

    /// Realized `(next_state, reward)` for a non-terminal stage. The reward
    /// is drawn before the successor.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, f64), MdpError> {
        if h + 1 >= self.horizon {
            return Err(MdpError::TerminalStage { h });
        }
        let reward = self.sample_reward(h, s, a, rng);
        let next = self.sample_next_state(h, s, a, rng)?;
        Ok((next, reward))
    }

    /// Samples one episode's return under `policy`.
    pub fn sample_return<R: Rng + ?Sized>(&self, policy: &DeterministicPolicy, rng: &mut R) -> f64 {
        let mut state = self.initial_state;
        let mut total = 0.0;
        for h in 0..self.horizon {
            let action = policy.action(h, state);
            total += self.sample_reward(h, state, action, rng);
            if h + 1 < self.horizon {
                state = self
                    .sample_next_state(h, state, action, rng)
                    .expect("non-terminal stage");
            }
        }
        total
    }

    fn pair_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), MdpError> {
    if expected == found {
        Ok(())
    } else {
        Err(MdpError::Shape {
            what,
            expected,
            found,
        })
    }
}

fn unflatten(idx: usize, states: usize, actions: usize) -> (usize, usize, usize) {
    let a = idx % actions;
    let s = (idx / actions) % states;
    let h = idx / (actions * states);
    (h, s, a)
}

fn validate_row(row: &[f64]) -> Result<(), String> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {p} is negative or not finite"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Rescales a validated row so that its sequential sum is exactly 1.0 where
/// floating point allows it. Rows already summing to 1.0 are left untouched,
/// which keeps save/load round trips bit-exact.
fn normalize_row(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum == 1.0 {
        return;
    }
    for p in row.iter_mut() {
        *p /= sum;
    }
    for _ in 0..4 {
        let sum: f64 = row.iter().sum();
        if sum == 1.0 {
            break;
        }
        let largest = argmax_lowest(row);
        row[largest] += 1.0 - sum;
    }
}

/// Index of the maximum entry, lowest index on ties.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// On-disk layout: nested arrays, `transitions[h][s][a][s']`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDocument {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    initial_state: usize,
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reward_noise: Option<Vec<Vec<Vec<f64>>>>,
}

impl TryFrom<MdpDocument> for EpisodicMdp {
    type Error = MdpError;

    fn try_from(doc: MdpDocument) -> Result<Self, MdpError> {
        let (h, s, a) = (doc.horizon, doc.num_states, doc.num_actions);
        check_nested3("transitions", &doc.transitions, h.saturating_sub(1), s, a)?;
        for stage in &doc.transitions {
            for by_state in stage {
                for row in by_state {
                    check_len("transition row", s, row.len())?;
                }
            }
        }
        check_nested3("rewards", &doc.rewards, h, s, a)?;
        if let Some(noise) = &doc.reward_noise {
            check_nested3("reward_noise", noise, h, s, a)?;
        }
        let flatten3 =
            |t: Vec<Vec<Vec<f64>>>| t.into_iter().flatten().flatten().collect::<Vec<_>>();
        let transitions = doc
            .transitions
            .into_iter()
            .flatten()
            .flatten()
            .flatten()
            .collect();
        EpisodicMdp::new(
            h,
            s,
            a,
            doc.initial_state,
            transitions,
            flatten3(doc.rewards),
            doc.reward_noise.map(flatten3),
        )
    }
}

fn check_nested3<T>(
    what: &'static str,
    table: &[Vec<Vec<T>>],
    stages: usize,
    states: usize,
    actions: usize,
) -> Result<(), MdpError> {
    check_len(what, stages, table.len())?;
    for stage in table {
        check_len(what, states, stage.len())?;
        for by_state in stage {
            check_len(what, actions, by_state.len())?;
        }
    }
    Ok(())
}

impl From<EpisodicMdp> for MdpDocument {
    fn from(mdp: EpisodicMdp) -> Self {
        let (s, a) = (mdp.num_states, mdp.num_actions);
        let nest3 = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
            flat.chunks(s * a)
                .map(|stage| stage.chunks(a).map(<[f64]>::to_vec).collect())
                .collect()
        };
        let transitions = mdp
            .transitions
            .chunks(s * a * s)
            .map(|stage| {
                stage
                    .chunks(a * s)
                    .map(|by_state| by_state.chunks(s).map(<[f64]>::to_vec).collect())
                    .collect()
            })
            .collect();
        MdpDocument {
            horizon: mdp.horizon,
            num_states: s,
            num_actions: a,
            initial_state: mdp.initial_state,
            transitions,
            rewards: nest3(&mdp.rewards),
            reward_noise: mdp.reward_noise.as_deref().map(nest3),
        }
    }
}

/// Anything that assigns a value to every `(h, s, a)` triple.
pub trait ActionValues {
    fn horizon(&self) -> usize;
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn action_value(&self, h: usize, s: usize, a: usize) -> f64;
}

/// Stage-indexed state-action values with an all-zero stage at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTables {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTables {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            values: vec![0.0; (horizon + 1) * num_states * num_actions],
        }
    }

    /// Value at `(h, s, a)`; `h == horizon` is the virtual terminal stage.
    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.num_states + s) * self.num_actions + a]
    }

    fn set(&mut self, h: usize, s: usize, a: usize, v: f64) {
        assert!(h < self.horizon, "terminal stage is fixed at zero");
        self.values[(h * self.num_states + s) * self.num_actions + a] = v;
    }

    /// All values of stage `h` as a flat `[s][a]` slice.
    pub fn stage(&self, h: usize) -> &[f64] {
        let width = self.num_states * self.num_actions;
        &self.values[h * width..(h + 1) * width]
    }

    /// Nested `[h][s][a]` copy of the real stages, for serialization.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.horizon)
            .map(|h| {
                self.stage(h)
                    .chunks(self.num_actions)
                    .map(<[f64]>::to_vec)
                    .collect()
            })
            .collect()
    }
}

impl ActionValues for QTables {
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn action_value(&self, h: usize, s: usize, a: usize) -> f64 {
        self.get(h, s, a)
    }
}

/// Stage-indexed state values with an all-zero stage at `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VTables {
    horizon: usize,
    num_states: usize,
    values: Vec<f64>,
}

impl VTables {
    pub fn zeros(horizon: usize, num_states: usize) -> Self {
        Self {
            horizon,
            num_states,
            values: vec![0.0; (horizon + 1) * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn get(&self, h: usize, s: usize) -> f64 {
        self.values[h * self.num_states + s]
    }

    fn set(&mut self, h: usize, s: usize, v: f64) {
        assert!(h < self.horizon, "terminal stage is fixed at zero");
        self.values[h * self.num_states + s] = v;
    }

    pub fn stage(&self, h: usize) -> &[f64] {
        &self.values[h * self.num_states..(h + 1) * self.num_states]
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..self.horizon).map(|h| self.stage(h).to_vec()).collect()
    }
}

/// A deterministic, stage-dependent policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    /// `actions` is indexed `[h][s]`; every entry must be `< num_actions`.
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: Vec<usize>,
    ) -> Result<Self, MdpError> {
        check_len("policy", horizon * num_states, actions.len())?;
        if let Some(idx) = actions.iter().position(|&a| a >= num_actions) {
            return Err(MdpError::InvalidAction {
                h: idx / num_states,
                s: idx % num_states,
                action: actions[idx],
                actions: num_actions,
            });
        }
        Ok(Self {
            horizon,
            num_states,
            actions,
        })
    }

    /// The policy that plays `action` everywhere.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self {
            horizon,
            num_states,
            actions: vec![action; horizon * num_states],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// Tie-breaking rule for argmax over actions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

/// Greedy action at `(h, s)` under `values`.
pub fn greedy_action<Q: ActionValues + ?Sized>(
    values: &Q,
    h: usize,
    s: usize,
    tie: TieBreak,
) -> usize {
    let mut best = 0;
    let mut best_value = values.action_value(h, s, 0);
    for a in 1..values.num_actions() {
        let v = values.action_value(h, s, a);
        let better = match tie {
            TieBreak::LowestIndex => v > best_value,
            TieBreak::HighestIndex => v >= best_value,
        };
        if better {
            best = a;
            best_value = v;
        }
    }
    best
}

/// The greedy policy with respect to `values` at every `(h, s)`.
pub fn greedy_policy<Q: ActionValues + ?Sized>(values: &Q, tie: TieBreak) -> DeterministicPolicy {
    let (horizon, states) = (values.horizon(), values.num_states());
    let mut actions = Vec::with_capacity(horizon * states);
    for h in 0..horizon {
        for s in 0..states {
            actions.push(greedy_action(values, h, s, tie));
        }
    }
    DeterministicPolicy {
        horizon,
        num_states: states,
        actions,
    }
}

fn expected_next_value(row: &[f64], next: &[f64]) -> f64 {
    row.iter().zip(next).map(|(p, v)| p * v).sum()
}

/// Exact `Q*` and `V*` by backward induction.
pub fn backward_induction(mdp: &EpisodicMdp) -> (QTables, VTables) {
    let (horizon, states, actions) = (mdp.horizon, mdp.num_states, mdp.num_actions);
    let mut q = QTables::zeros(horizon, states, actions);
    let mut v = VTables::zeros(horizon, states);
    for h in (0..horizon).rev() {
        for s in 0..states {
            let mut best = f64::NEG_INFINITY;
            for a in 0..actions {
                let continuation = if h + 1 < horizon {
                    expected_next_value(mdp.transition_row(h, s, a), v.stage(h + 1))
                } else {
                    0.0
                };
                let value = mdp.reward(h, s, a) + continuation;
                q.set(h, s, a, value);
                best = best.max(value);
            }
            v.set(h, s, best);
        }
    }
    (q, v)
}

/// Exact `V^π` by backward recursion.
pub fn policy_value(mdp: &EpisodicMdp, policy: &DeterministicPolicy) -> Result<VTables, MdpError> {
    if policy.horizon != mdp.horizon || policy.num_states != mdp.num_states {
        return Err(MdpError::PolicyShape {
            h: policy.horizon,
            s: policy.num_states,
            mdp_h: mdp.horizon,
            mdp_s: mdp.num_states,
        });
    }
    if let Some(idx) = policy.actions.iter().position(|&a| a >= mdp.num_actions) {
        return Err(MdpError::InvalidAction {
            h: idx / mdp.num_states,
            s: idx % mdp.num_states,
            action: policy.actions[idx],
            actions: mdp.num_actions,
        });
    }
    let mut v = VTables::zeros(mdp.horizon, mdp.num_states);
    fill_policy_value(mdp, policy, &mut v);
    Ok(v)
}

/// Value of `policy` from the initial state; same recursion as
/// [`policy_value`] but reuses `scratch`. Dimensions are trusted.
pub(crate) fn policy_value_at_start(
    mdp: &EpisodicMdp,
    policy: &DeterministicPolicy,
    scratch: &mut VTables,
) -> f64 {
    fill_policy_value(mdp, policy, scratch);
    scratch.get(0, mdp.initial_state)
}

fn fill_policy_value(mdp: &EpisodicMdp, policy: &DeterministicPolicy, v: &mut VTables) {
    for h in (0..mdp.horizon).rev() {
        for s in 0..mdp.num_states {
            let a = policy.action(h, s);
            let continuation = if h + 1 < mdp.horizon {
                expected_next_value(mdp.transition_row(h, s, a), v.stage(h + 1))
            } else {
                0.0
            };
            v.set(h, s, mdp.reward(h, s, a) + continuation);
        }
    }
}

/// Exhaustive search over all `A^(S·H)` deterministic policies. Returns the
/// best value at the initial state and the first policy (in mixed-radix
/// order) attaining it.
pub fn enumerate_policies(
    mdp: &EpisodicMdp,
    cap: u64,
) -> Result<(f64, DeterministicPolicy), MdpError> {
    let slots = mdp.horizon * mdp.num_states;
    let count = u32::try_from(slots)
        .ok()
        .and_then(|e| (mdp.num_actions as u64).checked_pow(e));
    match count {
        Some(c) if c <= cap => {}
        Some(c) => {
            return Err(MdpError::EnumerationCap {
                count: c.to_string(),
                cap,
            })
        }
        None => {
            return Err(MdpError::EnumerationCap {
                count: format!("{}^{}", mdp.num_actions, slots),
                cap,
            })
        }
    }

    let mut policy = DeterministicPolicy::constant(mdp.horizon, mdp.num_states, 0);
    let mut scratch = VTables::zeros(mdp.horizon, mdp.num_states);
    let mut best_value = f64::NEG_INFINITY;
    let mut best_policy = policy.clone();
    loop {
        let value = policy_value_at_start(mdp, &policy, &mut scratch);
        if value > best_value {
            best_value = value;
            best_policy = policy.clone();
        }
        // Mixed-radix increment; done once every digit wraps.
        let mut digit = 0;
        loop {
            if digit == slots {
                return Ok((best_value, best_policy));
            }
            policy.actions[digit] += 1;
            if policy.actions[digit] < mdp.num_actions {
                break;
            }
            policy.actions[digit] = 0;
            digit += 1;
        }
    }
}
