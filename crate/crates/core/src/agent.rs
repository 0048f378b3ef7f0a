//! The AQ-UCB learner: optimistic Q-learning over aggregate cells.
//!
//! The learner keeps one estimate `Q̂_h(m)` and one visit counter `N_h(m)`
//! per stage and cell. Each episode it replays the previous trajectory
//! front to back, applying
//!
//! ```text
//! N  <- N + 1
//! Q̃  <- (1 − α_N)·Q̂_h(m) + α_N·(r_h + V̂_{h+1}(s_{h+1}) + β_N / √N)
//! Q̂_h(m) <- min(Q̃, H)
//! ```
//!
//! with `α_t = (H + 1)/(H + t)`, and then rolls out the greedy policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{Aggregation, AggregationError};
use crate::mdp::{argmax_lowest, ActionValues, DeterministicPolicy, EpisodicMdp, MdpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("step size index must be at least 1")]
    ZeroStep,
    #[error("invalid bonus schedule: {0}")]
    Schedule(String),
    #[error("trajectory has {found} stages but the agent horizon is {expected}")]
    StageMismatch { expected: usize, found: usize },
    #[error("trajectory entry at stage {h} is out of range: {reason}")]
    TrajectoryRange { h: usize, reason: String },
    #[error("aggregation has horizon {agg_horizon} and {agg_cells} cells, agent expects {horizon} and {cells}")]
    AggregationMismatch {
        agg_horizon: usize,
        agg_cells: usize,
        horizon: usize,
        cells: usize,
    },
    #[error("invalid agent snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Step size `α_t = (H + 1)/(H + t)` for the `t`-th visit.
pub fn alpha(t: u64, horizon: usize) -> Result<f64, AgentError> {
    if t == 0 {
        return Err(AgentError::ZeroStep);
    }
    let h = horizon as f64;
    Ok((h + 1.0) / (h + t as f64))
}

/// Effective weights `[α_t^0, …, α_t^t]` that the estimate after `t` visits
/// places on its initial value and on each of the `t` targets:
/// `α_t^0 = ∏_{j≤t}(1 − α_j)` and `α_t^i = α_i·∏_{j=i+1}^{t}(1 − α_j)`.
pub fn alpha_weights(t: u64, horizon: usize) -> Vec<f64> {
    let h = horizon as f64;
    let mut weights = vec![0.0; t as usize + 1];
    // Running ∏_{j=i+1}^{t} (1 − α_j); 1 − α_j = (j − 1)/(H + j).
    let mut tail = 1.0;
    for i in (1..=t).rev() {
        let i_f = i as f64;
        weights[i as usize] = (h + 1.0) / (h + i_f) * tail;
        tail *= (i_f - 1.0) / (h + i_f);
    }
    weights[0] = tail;
    weights
}

/// Optimism boost added on a visit. `bonus(i)` is the `β_i` used on the
/// `i`-th visit to a cell; the update adds `β_i / √i`.
pub trait ExplorationBonus {
    fn bonus(&self, visit: u64) -> f64;
}

impl<F: Fn(u64) -> f64> ExplorationBonus for F {
    fn bonus(&self, visit: u64) -> f64 {
        self(visit)
    }
}

/// `β ≡ 0`: the learner reduces to greedy SARSA with capping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoBonus;

impl ExplorationBonus for NoBonus {
    fn bonus(&self, _visit: u64) -> f64 {
        0.0
    }
}

/// `β_i = 2·H^{3/2}·√(log(H·K/δ)) + ε·√i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusSchedule {
    horizon: usize,
    episodes: u64,
    delta: f64,
    epsilon: f64,
    #[serde(skip)]
    base: f64,
}

impl BonusSchedule {
    pub fn new(
        horizon: usize,
        episodes: u64,
        delta: f64,
        epsilon: f64,
    ) -> Result<Self, AgentError> {
        if horizon == 0 {
            return Err(AgentError::Schedule("horizon must be positive".into()));
        }
        if episodes == 0 {
            return Err(AgentError::Schedule(
                "episode budget K must be at least 1".into(),
            ));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(AgentError::Schedule(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(AgentError::Schedule(format!(
                "epsilon must be a nonnegative number, got {epsilon}"
            )));
        }
        let h = horizon as f64;
        let log_term = (h * episodes as f64 / delta).ln();
        if log_term <= 0.0 {
            return Err(AgentError::Schedule(format!(
                "log(H·K/δ) = {log_term} is not positive"
            )));
        }
        Ok(Self {
            horizon,
            episodes,
            delta,
            epsilon,
            base: 2.0 * h.powf(1.5) * log_term.sqrt(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `β_i`; the `i`-independent part is `2·H^{3/2}·√(log(H·K/δ))`.
    pub fn bonus(&self, i: u64) -> f64 {
        debug_assert!(i >= 1, "bonus index starts at 1");
        self.base + self.epsilon * (i as f64).sqrt()
    }
}

impl ExplorationBonus for BonusSchedule {
    fn bonus(&self, visit: u64) -> f64 {
        BonusSchedule::bonus(self, visit)
    }
}

/// One episode: `states[h]`, `actions[h]`, `rewards[h]` for `h < H`.
/// The successor of stage `h < H − 1` is `states[h + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(horizon: usize) -> Self {
        Self {
            states: Vec::with_capacity(horizon),
            actions: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// The learner's memory: `Q̂_h(m)`, `N_h(m)` and the number of processed
/// trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AgentSnapshot", into = "AgentSnapshot")]
pub struct AgentState {
    horizon: usize,
    num_cells: usize,
    q_hat: Vec<f64>,
    visits: Vec<u64>,
    episode_index: u64,
}

impl AgentState {
    /// Fresh state: every estimate at `H`, every counter at 0.
    pub fn new(horizon: usize, num_cells: usize) -> Self {
        Self {
            horizon,
            num_cells,
            q_hat: vec![horizon as f64; horizon * num_cells],
            visits: vec![0; horizon * num_cells],
            episode_index: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    /// Number of trajectories folded into the estimates so far.
    pub fn episode_index(&self) -> u64 {
        self.episode_index
    }

    #[inline]
    pub fn q_hat(&self, h: usize, m: usize) -> f64 {
        self.q_hat[h * self.num_cells + m]
    }

    #[inline]
    pub fn visits(&self, h: usize, m: usize) -> u64 {
        self.visits[h * self.num_cells + m]
    }

    pub fn stage_q_hat(&self, h: usize) -> &[f64] {
        &self.q_hat[h * self.num_cells..(h + 1) * self.num_cells]
    }

    pub fn stage_visits(&self, h: usize) -> &[u64] {
        &self.visits[h * self.num_cells..(h + 1) * self.num_cells]
    }

    fn check_aggregation(&self, agg: &Aggregation) -> Result<(), AgentError> {
        if agg.horizon() != self.horizon || agg.num_cells() != self.num_cells {
            return Err(AgentError::AggregationMismatch {
                agg_horizon: agg.horizon(),
                agg_cells: agg.num_cells(),
                horizon: self.horizon,
                cells: self.num_cells,
            });
        }
        Ok(())
    }

    /// `V̂_h(s) = max_a Q̂_h(φ_h(s, a))`, and 0 past the last stage.
    #[inline]
    pub fn state_value(&self, agg: &Aggregation, h: usize, s: usize) -> f64 {
        if h >= self.horizon {
            return 0.0;
        }
        let stage = self.stage_q_hat(h);
        agg.cells_at(h, s)
            .iter()
            .map(|&m| stage[m])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action at `(h, s)`, lowest index on ties.
    #[inline]
    pub fn greedy_action(&self, agg: &Aggregation, h: usize, s: usize) -> usize {
        let stage = self.stage_q_hat(h);
        let cells = agg.cells_at(h, s);
        let mut best = 0;
        let mut best_value = stage[cells[0]];
        for (a, &m) in cells.iter().enumerate().skip(1) {
            if stage[m] > best_value {
                best = a;
                best_value = stage[m];
            }
        }
        best
    }

    /// Writes the greedy action for every `(h, s)` into `out` (`[h][s]`).
    pub fn greedy_actions_into(&self, agg: &Aggregation, out: &mut [usize]) {
        let states = agg.num_states();
        for h in 0..self.horizon {
            for s in 0..states {
                out[h * states + s] = self.greedy_action(agg, h, s);
            }
        }
    }

    /// Greedy policy over raw states induced by the cell estimates.
    pub fn greedy_policy(&self, agg: &Aggregation) -> DeterministicPolicy {
        let mut actions = vec![0; self.horizon * agg.num_states()];
        self.greedy_actions_into(agg, &mut actions);
        DeterministicPolicy::new(self.horizon, agg.num_states(), agg.num_actions(), actions)
            .expect("greedy actions are in range")
    }

    /// View of the estimates as values over raw `(h, s, a)` triples.
    pub fn view<'a>(&'a self, agg: &'a Aggregation) -> AggregatedValues<'a> {
        AggregatedValues { state: self, agg }
    }

    fn check_trajectory(&self, traj: &Trajectory, agg: &Aggregation) -> Result<(), AgentError> {
        let lens = [traj.states.len(), traj.actions.len(), traj.rewards.len()];
        if lens.iter().any(|&n| n != self.horizon) {
            return Err(AgentError::StageMismatch {
                expected: self.horizon,
                found: *lens.iter().find(|&&n| n != self.horizon).unwrap(),
            });
        }
        for h in 0..self.horizon {
            if traj.states[h] >= agg.num_states() || traj.actions[h] >= agg.num_actions() {
                return Err(AgentError::TrajectoryRange {
                    h,
                    reason: format!("state {} / action {}", traj.states[h], traj.actions[h]),
                });
            }
            if !(0.0..=1.0).contains(&traj.rewards[h]) {
                return Err(AgentError::TrajectoryRange {
                    h,
                    reason: format!("reward {}", traj.rewards[h]),
                });
            }
        }
        Ok(())
    }
}

/// [`ActionValues`] view of an agent's cell estimates.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedValues<'a> {
    state: &'a AgentState,
    agg: &'a Aggregation,
}

impl ActionValues for AggregatedValues<'_> {
    fn horizon(&self) -> usize {
        self.state.horizon
    }
    fn num_states(&self) -> usize {
        self.agg.num_states()
    }
    fn num_actions(&self) -> usize {
        self.agg.num_actions()
    }
    fn action_value(&self, h: usize, s: usize, a: usize) -> f64 {
        self.state.q_hat(h, self.agg.cell(h, s, a))
    }
}

/// Folds one trajectory into `state`, stage by stage in increasing order.
///
/// The backup at stage `h` reads `Q̂_{h+1}` before stage `h + 1` has been
/// touched in this pass, so every stage sees the pre-episode estimates of
/// the next stage.
pub fn update_from_trajectory<B: ExplorationBonus + ?Sized>(
    state: &mut AgentState,
    traj: &Trajectory,
    agg: &Aggregation,
    bonus: &B,
) -> Result<(), AgentError> {
    state.check_aggregation(agg)?;
    state.check_trajectory(traj, agg)?;
    let cap = state.horizon as f64;
    for h in 0..state.horizon {
        let m = agg.cell(h, traj.states[h], traj.actions[h]);
        let idx = h * state.num_cells + m;
        state.visits[idx] += 1;
        let n = state.visits[idx];
        let next_value = if h + 1 < state.horizon {
            state.state_value(agg, h + 1, traj.states[h + 1])
        } else {
            0.0
        };
        let step = alpha(n, state.horizon)?;
        let target = traj.rewards[h] + next_value + bonus.bonus(n) / (n as f64).sqrt();
        let uncapped = (1.0 - step) * state.q_hat[idx] + step * target;
        state.q_hat[idx] = uncapped.min(cap);
    }
    state.episode_index += 1;
    Ok(())
}

/// Plays the greedy policy of `state` for one episode.
pub fn rollout<R: Rng + ?Sized>(
    state: &AgentState,
    mdp: &EpisodicMdp,
    agg: &Aggregation,
    rng: &mut R,
) -> Trajectory {
    play(mdp, rng, |h, s, _| state.greedy_action(agg, h, s))
}

/// The random first trajectory: uniformly drawn actions at every stage.
pub fn initial_trajectory<R: Rng + ?Sized>(mdp: &EpisodicMdp, rng: &mut R) -> Trajectory {
    let actions = mdp.num_actions();
    play(mdp, rng, |_, _, rng| rng.gen_range(0..actions))
}

fn play<R: Rng + ?Sized>(
    mdp: &EpisodicMdp,
    rng: &mut R,
    mut choose: impl FnMut(usize, usize, &mut R) -> usize,
) -> Trajectory {
    let horizon = mdp.horizon();
    let mut traj = Trajectory::with_capacity(horizon);
    let mut s = mdp.initial_state();
    for h in 0..horizon {
        let a = choose(h, s, rng);
        traj.states.push(s);
        traj.actions.push(a);
        traj.rewards.push(mdp.sample_reward(h, s, a, rng));
        if h + 1 < horizon {
            s = mdp
                .sample_next_state(h, s, a, rng)
                .expect("non-terminal stage has a kernel");
        }
    }
    traj
}

/// Step-by-step driver of the full learning loop: one RNG per run, seeded
/// once, draws the random first trajectory and then every greedy rollout.
pub struct Learner<'a, B> {
    mdp: &'a EpisodicMdp,
    agg: &'a Aggregation,
    bonus: B,
    state: AgentState,
    rng: ChaCha8Rng,
    latest: Trajectory,
}

impl<'a, B: ExplorationBonus> Learner<'a, B> {
    /// Validates `agg` against `mdp` and draws the first trajectory.
    pub fn new(
        mdp: &'a EpisodicMdp,
        agg: &'a Aggregation,
        bonus: B,
        seed: u64,
    ) -> Result<Self, AgentError> {
        agg.check_dimensions(mdp)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latest = initial_trajectory(mdp, &mut rng);
        Ok(Self {
            mdp,
            agg,
            bonus,
            state: AgentState::new(mdp.horizon(), agg.num_cells()),
            rng,
            latest,
        })
    }

    /// One episode: fold in the latest trajectory, then roll out the new
    /// greedy policy. Returns the new trajectory.
    pub fn step(&mut self) -> Result<&Trajectory, AgentError> {
        update_from_trajectory(&mut self.state, &self.latest, self.agg, &self.bonus)?;
        self.latest = rollout(&self.state, self.mdp, self.agg, &mut self.rng);
        Ok(&self.latest)
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn aggregation(&self) -> &Aggregation {
        self.agg
    }

    /// The most recent trajectory (not yet folded into the estimates).
    pub fn latest(&self) -> &Trajectory {
        &self.latest
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        self.state.greedy_policy(self.agg)
    }

    pub fn into_state(self) -> AgentState {
        self.state
    }
}

/// Everything a complete run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// The random first trajectory followed by the `K` greedy rollouts.
    pub trajectories: Vec<Trajectory>,
    pub state: AgentState,
    pub policy: DeterministicPolicy,
}

/// Runs `episodes` iterations of the learning loop with an arbitrary bonus.
pub fn run_with_bonus<B: ExplorationBonus>(
    mdp: &EpisodicMdp,
    agg: &Aggregation,
    bonus: B,
    episodes: u64,
    seed: u64,
) -> Result<RunOutput, AgentError> {
    let mut learner = Learner::new(mdp, agg, bonus, seed)?;
    let mut trajectories = Vec::with_capacity(episodes as usize + 1);
    trajectories.push(learner.latest().clone());
    for _ in 0..episodes {
        trajectories.push(learner.step()?.clone());
    }
    let policy = learner.greedy_policy();
    Ok(RunOutput {
        trajectories,
        state: learner.into_state(),
        policy,
    })
}

/// AQ-UCB with the theoretical bonus schedule.
pub fn run_aqucb(
    mdp: &EpisodicMdp,
    agg: &Aggregation,
    schedule: &BonusSchedule,
    episodes: u64,
    seed: u64,
) -> Result<RunOutput, AgentError> {
    run_with_bonus(mdp, agg, *schedule, episodes, seed)
}

/// The same loop with `β ≡ 0`.
pub fn baseline_greedy_sarsa(
    mdp: &EpisodicMdp,
    agg: &Aggregation,
    episodes: u64,
    seed: u64,
) -> Result<RunOutput, AgentError> {
    run_with_bonus(mdp, agg, NoBonus, episodes, seed)
}

/// JSON layout of an [`AgentState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSnapshot {
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "M")]
    num_cells: usize,
    q_hat: Vec<Vec<f64>>,
    visits: Vec<Vec<u64>>,
    episode_index: u64,
}

impl From<AgentState> for AgentSnapshot {
    fn from(state: AgentState) -> Self {
        let m = state.num_cells.max(1);
        Self {
            horizon: state.horizon,
            num_cells: state.num_cells,
            q_hat: state.q_hat.chunks(m).map(<[f64]>::to_vec).collect(),
            visits: state.visits.chunks(m).map(<[u64]>::to_vec).collect(),
            episode_index: state.episode_index,
        }
    }
}

impl TryFrom<AgentSnapshot> for AgentState {
    type Error = AgentError;

    fn try_from(snap: AgentSnapshot) -> Result<Self, AgentError> {
        let (h, m) = (snap.horizon, snap.num_cells);
        let q_ok = snap.q_hat.len() == h && snap.q_hat.iter().all(|r| r.len() == m);
        let n_ok = snap.visits.len() == h && snap.visits.iter().all(|r| r.len() == m);
        if !(q_ok && n_ok) {
            return Err(AgentError::Snapshot(format!("tables are not {h} x {m}")));
        }
        let cap = h as f64;
        if let Some(q) = snap
            .q_hat
            .iter()
            .flatten()
            .find(|q| !(0.0..=cap).contains(*q))
        {
            return Err(AgentError::Snapshot(format!(
                "estimate {q} outside [0, {h}]"
            )));
        }
        for (stage, counts) in snap.visits.iter().enumerate() {
            let total: u64 = counts.iter().sum();
            if total != snap.episode_index {
                return Err(AgentError::Snapshot(format!(
                    "stage {stage} has {total} visits but episode_index is {}",
                    snap.episode_index
                )));
            }
        }
        Ok(Self {
            horizon: h,
            num_cells: m,
            q_hat: snap.q_hat.into_iter().flatten().collect(),
            visits: snap.visits.into_iter().flatten().collect(),
            episode_index: snap.episode_index,
        })
    }
}

/// Index of the largest of `values`, lowest on ties.
pub fn argmax(values: &[f64]) -> usize {
    argmax_lowest(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::trivial_aggregation;
    use crate::envs::random_mdp;
    use crate::mdp::{backward_induction, greedy_policy, TieBreak};

    #[test]
    fn alpha_values() {
        for h in [1, 2, 7, 100] {
            assert_eq!(alpha(1, h).unwrap(), 1.0);
        }
        assert!((alpha(2, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(alpha(0, 3), Err(AgentError::ZeroStep));
        let mut prev = alpha(1, 5).unwrap();
        for t in 2..=10_000 {
            let next = alpha(t, 5).unwrap();
            assert!(next < prev);
            prev = next;
        }
        assert!(prev > 0.0 && prev < 1e-3);
    }

    #[test]
    fn alpha_weight_small_cases() {
        assert_eq!(alpha_weights(0, 4), vec![1.0]);
        assert_eq!(alpha_weights(1, 4), vec![0.0, 1.0]);
        let w = alpha_weights(2, 1);
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bonus_schedule_values() {
        // Reference value from an independent calculator: 2·2^{1.5}·√(ln 2000).
        let sched = BonusSchedule::new(2, 100, 0.1, 0.0).unwrap();
        let expected = 2.0 * 2f64.powf(1.5) * 2000f64.ln().sqrt();
        assert!((sched.bonus(7) - 15.595_796_828_163_243).abs() < 1e-9);
        assert!((sched.bonus(7) - expected).abs() < 1e-12);
        assert_eq!(sched.bonus(1), sched.bonus(1_000));

        let with_eps = BonusSchedule::new(2, 100, 0.1, 0.5).unwrap();
        assert!((with_eps.bonus(4) - sched.bonus(4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bonus_schedule_rejects_bad_inputs() {
        assert!(BonusSchedule::new(2, 0, 0.1, 0.0).is_err());
        assert!(BonusSchedule::new(2, 10, 0.0, 0.0).is_err());
        assert!(BonusSchedule::new(2, 10, 1.0, 0.0).is_err());
        assert!(BonusSchedule::new(2, 10, 0.1, -0.1).is_err());
        assert!(BonusSchedule::new(0, 10, 0.1, 0.0).is_err());
    }

    #[test]
    fn first_visit_replaces_initial_value() {
        let agg = trivial_aggregation(3, 3, 2);
        let mut state = AgentState::new(3, 6);
        let traj = Trajectory {
            states: vec![0, 2, 1],
            actions: vec![1, 0, 1],
            rewards: vec![0.2, 0.1, 0.4],
        };
        let beta = |_: u64| 0.25;
        update_from_trajectory(&mut state, &traj, &agg, &beta).unwrap();
        // Stage 2 (last): r + 0 + β = 0.65. Stage 1 reads stage-2 estimates
        // before they change: V̂ = H = 3, so the target 0.1 + 3 + 0.25 is capped.
        assert_eq!(state.q_hat(2, agg.cell(2, 1, 1)), 0.65);
        assert_eq!(state.q_hat(1, agg.cell(1, 2, 0)), 3.0);
        assert_eq!(state.q_hat(0, agg.cell(0, 0, 1)), 3.0);
        assert_eq!(state.episode_index(), 1);
    }

    #[test]
    fn target_above_horizon_is_capped() {
        let agg = trivial_aggregation(2, 1, 1);
        let mut state = AgentState::new(2, 1);
        let traj = Trajectory {
            states: vec![0, 0],
            actions: vec![0, 0],
            rewards: vec![1.0, 1.0],
        };
        update_from_trajectory(&mut state, &traj, &agg, &|_| 100.0).unwrap();
        assert_eq!(state.q_hat(0, 0), 2.0);
        assert_eq!(state.q_hat(1, 0), 2.0);
    }

    /// Independent scalar recurrence: H = 1, one cell, constant reward.
    /// After n visits the estimate is Σ_j w_n^j (r + β/√j), with weights
    /// taken straight from the product definition.
    fn weights_by_definition(n: usize, horizon: f64) -> Vec<f64> {
        let step = |t: usize| (horizon + 1.0) / (horizon + t as f64);
        (1..=n)
            .map(|i| step(i) * ((i + 1)..=n).map(|j| 1.0 - step(j)).product::<f64>())
            .collect()
    }

    #[test]
    fn single_cell_recurrence_matches_closed_form() {
        let agg = trivial_aggregation(1, 1, 1);
        let (r, beta) = (0.3, 0.5);
        let mut state = AgentState::new(1, 1);
        let traj = Trajectory {
            states: vec![0],
            actions: vec![0],
            rewards: vec![r],
        };
        for n in 1..=60 {
            update_from_trajectory(&mut state, &traj, &agg, &|_| beta).unwrap();
            let w = weights_by_definition(n, 1.0);
            let expected: f64 = w
                .iter()
                .enumerate()
                .map(|(j, wj)| wj * (r + beta / ((j + 1) as f64).sqrt()))
                .sum();
            assert!(
                (state.q_hat(0, 0) - expected.min(1.0)).abs() < 1e-12,
                "n={n}"
            );
        }
    }

    #[test]
    fn mismatched_trajectory_is_rejected() {
        let agg = trivial_aggregation(2, 2, 2);
        let mut state = AgentState::new(2, 4);
        let short = Trajectory {
            states: vec![0],
            actions: vec![0],
            rewards: vec![0.0],
        };
        assert!(matches!(
            update_from_trajectory(&mut state, &short, &agg, &NoBonus),
            Err(AgentError::StageMismatch { .. })
        ));
        let wrong_agg = trivial_aggregation(2, 2, 3);
        let traj = Trajectory {
            states: vec![0, 1],
            actions: vec![0, 1],
            rewards: vec![0.0, 0.5],
        };
        assert!(matches!(
            update_from_trajectory(&mut state, &traj, &wrong_agg, &NoBonus),
            Err(AgentError::AggregationMismatch { .. })
        ));
        assert_eq!(state, AgentState::new(2, 4));
    }

    #[test]
    fn fresh_agent_plays_action_zero() {
        let mdp = random_mdp(4, 3, 3, None, 9).unwrap();
        let agg = trivial_aggregation(4, 3, 3);
        let state = AgentState::new(4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let traj = rollout(&state, &mdp, &agg, &mut rng);
        assert_eq!(traj.actions, vec![0; 4]);
        assert_eq!(traj.states[0], mdp.initial_state());
    }

    #[test]
    fn converged_estimates_follow_the_optimal_path() {
        let mdp = random_mdp(4, 5, 3, Some(1), 12).unwrap();
        let agg = trivial_aggregation(4, 5, 3);
        let (q, _) = backward_induction(&mdp);
        let mut state = AgentState::new(4, 15);
        for h in 0..4 {
            for s in 0..5 {
                for a in 0..3 {
                    state.q_hat[h * 15 + agg.cell(h, s, a)] = q.get(h, s, a);
                }
            }
        }
        let pi = greedy_policy(&q, TieBreak::LowestIndex);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let traj = rollout(&state, &mdp, &agg, &mut rng);
        let mut s = mdp.initial_state();
        for h in 0..4 {
            assert_eq!(traj.states[h], s);
            assert_eq!(traj.actions[h], pi.action(h, s));
            if h < 3 {
                s = argmax(mdp.transition_row(h, s, pi.action(h, s)));
            }
        }
    }

    #[test]
    fn initial_trajectory_is_uniform_and_reproducible() {
        let mdp = random_mdp(2, 2, 4, None, 1).unwrap();
        let a = initial_trajectory(&mdp, &mut ChaCha8Rng::seed_from_u64(7));
        let b = initial_trajectory(&mdp, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);

        let one_action = crate::mdp::EpisodicMdp::from_fn(
            3,
            2,
            1,
            0,
            |_, _, _, n| if n == 0 { 1.0 } else { 0.0 },
            |_, _, _| 0.0,
        )
        .unwrap();
        assert_eq!(
            initial_trajectory(&one_action, &mut ChaCha8Rng::seed_from_u64(1)).actions,
            vec![0, 0, 0]
        );

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            counts[initial_trajectory(&mdp, &mut rng).actions[0]] += 1;
        }
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - 0.25 * draws as f64).abs() < 3.0 * sigma,
                "{counts:?}"
            );
        }
    }

    #[test]
    fn snapshot_round_trip_and_validation() {
        let mdp = random_mdp(3, 4, 2, None, 6).unwrap();
        let agg = trivial_aggregation(3, 4, 2);
        let sched = BonusSchedule::new(3, 50, 0.1, 0.0).unwrap();
        let out = run_aqucb(&mdp, &agg, &sched, 50, 3).unwrap();
        let text = serde_json::to_string(&out.state).unwrap();
        assert!(text.starts_with(r#"{"H":3,"M":8,"q_hat":"#), "{text}");
        let back: AgentState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out.state);

        let bad = r#"{"H":1,"M":1,"q_hat":[[2.0]],"visits":[[0]],"episode_index":0}"#;
        assert!(serde_json::from_str::<AgentState>(bad).is_err());
        let bad = r#"{"H":1,"M":2,"q_hat":[[1.0,1.0]],"visits":[[1,1]],"episode_index":1}"#;
        assert!(serde_json::from_str::<AgentState>(bad).is_err());
    }
}
