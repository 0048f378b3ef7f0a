//! Benchmark instance generators: seeded random MDPs, the slip chain, and
//! duplicated-state expansions whose natural aggregation has a known error.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{epsilon_of, Aggregation};
use crate::mdp::{EpisodicMdp, MdpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("perturbed reward leaves [0, 1]: {0}")]
    RewardRange(MdpError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Chain action that moves towards state 0.
pub const LEFT: usize = 0;
/// Chain action that moves towards the rewarding end.
pub const RIGHT: usize = 1;

/// Random MDP with normalized positive transition draws and uniform reward
/// means in `[0, 1)`.
///
/// `sparsity = Some(k)` with `k < S` restricts every row to `k` randomly
/// chosen successors; `Some(1)` gives a deterministic kernel. `None`,
/// `Some(0)` or `Some(k >= S)` keep rows dense.
pub fn random_mdp(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    sparsity: Option<usize>,
    seed: u64,
) -> Result<EpisodicMdp, EnvError> {
    if horizon == 0 || num_states == 0 || num_actions == 0 {
        return Err(EnvError::InvalidParameter(
            "horizon, states and actions must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = match sparsity {
        Some(k) if k > 0 && k < num_states => k,
        _ => num_states,
    };
    let rows = horizon.saturating_sub(1) * num_states * num_actions;
    let mut transitions = Vec::with_capacity(rows * num_states);
    let mut row = vec![0.0; num_states];
    for _ in 0..rows {
        row.fill(0.0);
        if support == num_states {
            for p in row.iter_mut() {
                *p = 1.0 - rng.gen::<f64>();
            }
        } else {
            for next in sample(&mut rng, num_states, support) {
                row[next] = 1.0 - rng.gen::<f64>();
            }
        }
        let total: f64 = row.iter().sum();
        transitions.extend(row.iter().map(|p| p / total));
    }
    let rewards = (0..horizon * num_states * num_actions)
        .map(|_| rng.gen::<f64>())
        .collect();
    Ok(EpisodicMdp::new(
        horizon,
        num_states,
        num_actions,
        0,
        transitions,
        rewards,
        None,
    )?)
}

/// Chain of `length` states starting at 0.
///
/// [`RIGHT`] advances one state with probability `1 − slip` and retreats one
/// state otherwise (staying put at the ends); [`LEFT`] retreats
/// deterministically. The only reward is 1 for playing [`RIGHT`] in the last
/// state, at every stage.
pub fn chain_mdp(horizon: usize, length: usize, slip: f64) -> Result<EpisodicMdp, EnvError> {
    if horizon == 0 {
        return Err(EnvError::InvalidParameter(
            "horizon must be positive".into(),
        ));
    }
    if length < 2 {
        return Err(EnvError::InvalidParameter(format!(
            "chain length must be at least 2, got {length}"
        )));
    }
    if !(0.0..0.5).contains(&slip) {
        return Err(EnvError::InvalidParameter(format!(
            "slip must lie in [0, 0.5), got {slip}"
        )));
    }
    let last = length - 1;
    let mdp = EpisodicMdp::from_fn(
        horizon,
        length,
        2,
        0,
        |_, s, a, next| {
            let back = s.saturating_sub(1);
            let forward = (s + 1).min(last);
            let mut p = 0.0;
            if a == RIGHT {
                if next == forward {
                    p += 1.0 - slip;
                }
                if next == back {
                    p += slip;
                }
            } else if next == back {
                p = 1.0;
            }
            p
        },
        |_, s, a| if s == last && a == RIGHT { 1.0 } else { 0.0 },
    )?;
    Ok(mdp)
}

/// Recipe for an MDP whose states are `copies_per_state` exchangeable copies
/// of the states of `base_mdp`, with independent uniform reward perturbations
/// of half-width `reward_perturbation` per copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicationSpec {
    pub base_mdp: EpisodicMdp,
    pub copies_per_state: usize,
    pub reward_perturbation: f64,
    pub seed: u64,
}

/// Expanded instance: the MDP, its latent-state aggregation and the
/// aggregation error measured by [`epsilon_of`].
#[derive(Debug, Clone)]
pub struct ExpandedInstance {
    pub mdp: EpisodicMdp,
    pub aggregation: Aggregation,
    pub measured_epsilon: f64,
}

/// Expands `spec` into `c·M` states. Copy `j` of latent state `x` is state
/// `x·c + j`; transitions to a latent successor are split evenly over its
/// copies, and `(copy of x, a)` is mapped to cell `x·A + a` at every stage.
pub fn expand_aggregate_mdp(spec: &DuplicationSpec) -> Result<ExpandedInstance, EnvError> {
    let copies = spec.copies_per_state;
    let eta = spec.reward_perturbation;
    if copies == 0 {
        return Err(EnvError::InvalidParameter(
            "copies_per_state must be at least 1".into(),
        ));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(EnvError::InvalidParameter(format!(
            "reward_perturbation must be a nonnegative number, got {eta}"
        )));
    }
    let base = &spec.base_mdp;
    let (horizon, latent, actions) = (base.horizon(), base.num_states(), base.num_actions());
    let states = latent * copies;

    let mut transitions = Vec::with_capacity(horizon.saturating_sub(1) * states * actions * states);
    for h in 0..horizon.saturating_sub(1) {
        for s in 0..states {
            for a in 0..actions {
                let row = base.transition_row(h, s / copies, a);
                for next in 0..states {
                    transitions.push(row[next / copies] / copies as f64);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rewards = Vec::with_capacity(horizon * states * actions);
    let mut noise = Vec::with_capacity(horizon * states * actions);
    for h in 0..horizon {
        for s in 0..states {
            for a in 0..actions {
                let shift: f64 = rng.gen_range(-1.0..=1.0);
                rewards.push(base.reward(h, s / copies, a) + eta * shift);
                noise.push(base.reward_noise(h, s / copies, a));
            }
        }
    }
    let noise = base.has_reward_noise().then_some(noise);

    let mdp = EpisodicMdp::new(
        horizon,
        states,
        actions,
        base.initial_state() * copies,
        transitions,
        rewards,
        noise,
    )
    .map_err(|e| match e {
        MdpError::RewardRange { .. } => EnvError::RewardRange(e),
        other => EnvError::Mdp(other),
    })?;
    let aggregation =
        Aggregation::from_fn(latent * actions, horizon, states, actions, |_, s, a| {
            (s / copies) * actions + a
        })
        .expect("latent aggregation is well formed");
    let measured_epsilon = epsilon_of(&mdp, &aggregation).expect("dimensions agree");
    Ok(ExpandedInstance {
        mdp,
        aggregation,
        measured_epsilon,
    })
}

/// Copy of `mdp` with every reward mean `r` mapped to `margin + (1 − 2·margin)·r`,
/// so that perturbations up to `margin` stay inside `[0, 1]`.
pub fn compress_rewards(mdp: &EpisodicMdp, margin: f64) -> Result<EpisodicMdp, EnvError> {
    if !(0.0..0.5).contains(&margin) {
        return Err(EnvError::InvalidParameter(format!(
            "reward margin must lie in [0, 0.5), got {margin}"
        )));
    }
    let scale = 1.0 - 2.0 * margin;
    Ok(EpisodicMdp::from_fn(
        mdp.horizon(),
        mdp.num_states(),
        mdp.num_actions(),
        mdp.initial_state(),
        |h, s, a, next| mdp.transition_row(h, s, a)[next],
        |h, s, a| margin + scale * mdp.reward(h, s, a),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::backward_induction;
    use proptest::prelude::*;

    fn spec(base: EpisodicMdp, copies: usize, eta: f64) -> DuplicationSpec {
        DuplicationSpec {
            base_mdp: base,
            copies_per_state: copies,
            reward_perturbation: eta,
            seed: 99,
        }
    }

    #[test]
    fn random_mdp_is_reproducible_and_stochastic() {
        let a = random_mdp(3, 5, 2, None, 42).unwrap();
        let b = random_mdp(3, 5, 2, None, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, random_mdp(3, 5, 2, None, 43).unwrap());
        for h in 0..2 {
            for s in 0..5 {
                for act in 0..2 {
                    let row = a.transition_row(h, s, act);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    assert!(row.iter().all(|&p| p > 0.0));
                }
            }
        }
    }

    #[test]
    fn sparsity_one_is_deterministic() {
        let mdp = random_mdp(4, 6, 3, Some(1), 8).unwrap();
        for h in 0..3 {
            for s in 0..6 {
                for a in 0..3 {
                    let row = mdp.transition_row(h, s, a);
                    assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 1);
                    assert_eq!(row.iter().sum::<f64>(), 1.0);
                }
            }
        }
        let sparse = random_mdp(2, 6, 1, Some(2), 8).unwrap();
        for s in 0..6 {
            assert_eq!(
                sparse
                    .transition_row(0, s, 0)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .count(),
                2
            );
        }
    }

    #[test]
    fn chain_optimal_values() {
        // Reachable end: L − 1 moves, then collect on the remaining stages.
        for (h, l) in [(8, 6), (6, 6), (5, 2), (10, 3)] {
            let (_, v) = backward_induction(&chain_mdp(h, l, 0.0).unwrap());
            assert!(
                (v.get(0, 0) - (h - l + 1) as f64).abs() < 1e-12,
                "H={h} L={l}"
            );
        }
        for (h, l) in [(5, 6), (1, 2), (3, 4)] {
            let (_, v) = backward_induction(&chain_mdp(h, l, 0.0).unwrap());
            assert_eq!(v.get(0, 0), 0.0, "H={h} L={l}");
        }
    }

    #[test]
    fn two_state_chain_by_hand() {
        // L = 2, H = 2, slip p. Stage 2 (last): V(1) = 1, V(0) = 0.
        // Stage 1 from 0: RIGHT reaches 1 w.p. 1 − p, else stays at 0.
        // Q(0, RIGHT) = (1 − p)·1, Q(0, LEFT) = 0. Q(1, RIGHT) = 1 + (1 − p)·1 + p·0.
        let p = 0.2;
        let (q, v) = backward_induction(&chain_mdp(2, 2, p).unwrap());
        assert!((q.get(0, 0, RIGHT) - 0.8).abs() < 1e-12);
        assert_eq!(q.get(0, 0, LEFT), 0.0);
        assert!((q.get(0, 1, RIGHT) - 1.8).abs() < 1e-12);
        assert!((q.get(0, 1, LEFT) - 0.0).abs() < 1e-12);
        assert!((v.get(0, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn chain_rejects_bad_parameters() {
        assert!(chain_mdp(4, 1, 0.1).is_err());
        assert!(chain_mdp(4, 3, 0.5).is_err());
        assert!(chain_mdp(4, 3, -0.1).is_err());
        assert!(chain_mdp(0, 3, 0.1).is_err());
    }

    #[test]
    fn identity_expansion() {
        let base = random_mdp(3, 4, 2, None, 1).unwrap();
        let out = expand_aggregate_mdp(&spec(base.clone(), 1, 0.0)).unwrap();
        assert_eq!(out.mdp, base);
        assert_eq!(out.measured_epsilon, 0.0);
        assert_eq!(out.aggregation.num_cells(), 8);
    }

    #[test]
    fn copies_share_optimal_values() {
        let base = random_mdp(4, 4, 2, None, 3).unwrap();
        let out = expand_aggregate_mdp(&spec(base.clone(), 3, 0.0)).unwrap();
        assert_eq!(out.mdp.num_states(), 12);
        assert!(out.measured_epsilon <= 1e-10);
        let (q_base, _) = backward_induction(&base);
        let (q, _) = backward_induction(&out.mdp);
        for h in 0..4 {
            for s in 0..12 {
                for a in 0..2 {
                    assert!((q.get(h, s, a) - q_base.get(h, s / 3, a)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn perturbation_is_measured_not_assumed() {
        let base = compress_rewards(&random_mdp(3, 3, 2, None, 4).unwrap(), 0.05).unwrap();
        let out = expand_aggregate_mdp(&spec(base, 2, 0.05)).unwrap();
        assert!(out.measured_epsilon > 0.0);
        assert!(out.measured_epsilon <= 0.1 + 1e-12);
        assert_ne!(out.measured_epsilon, 0.05);
    }

    #[test]
    fn perturbation_out_of_range_is_an_error() {
        let base = chain_mdp(3, 3, 0.0).unwrap();
        let err = expand_aggregate_mdp(&spec(base, 2, 0.1)).unwrap_err();
        assert!(matches!(err, EnvError::RewardRange(_)));
    }

    #[test]
    fn epsilon_grows_with_perturbation() {
        let base = compress_rewards(&random_mdp(3, 4, 2, None, 21).unwrap(), 0.1).unwrap();
        let eps: Vec<f64> = [0.0, 0.02, 0.1]
            .iter()
            .map(|&eta| {
                expand_aggregate_mdp(&spec(base.clone(), 3, eta))
                    .unwrap()
                    .measured_epsilon
            })
            .collect();
        assert!(eps[0] <= eps[1] && eps[1] <= eps[2], "{eps:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn zero_perturbation_copies_are_exact(
            latent in 1usize..5,
            actions in 1usize..4,
            horizon in 1usize..5,
            copies in 1usize..4,
            sparsity in prop::option::of(1usize..4),
            seed in any::<u64>(),
        ) {
            let base = random_mdp(horizon, latent, actions, sparsity, seed).unwrap();
            let out = expand_aggregate_mdp(&spec(base, copies, 0.0)).unwrap();
            let (q, _) = backward_induction(&out.mdp);
            for h in 0..horizon {
                for s in 0..latent * copies {
                    for a in 0..actions {
                        let twin = (s / copies) * copies;
                        prop_assert!((q.get(h, s, a) - q.get(h, twin, a)).abs() <= 1e-10);
                    }
                }
            }
            prop_assert!(out.measured_epsilon <= 1e-10);
        }
    }
}
