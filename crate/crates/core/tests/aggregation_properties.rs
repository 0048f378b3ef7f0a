use aqucb_core::aggregation::{epsilon_of, trivial_aggregation, validate, Aggregation};
use aqucb_core::envs::{expand_aggregate_mdp, random_mdp, DuplicationSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_aggregation(
    horizon: usize,
    states: usize,
    actions: usize,
    cells: usize,
    seed: u64,
) -> Aggregation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps: Vec<usize> = (0..horizon * states * actions)
        .map(|_| rng.gen_range(0..cells))
        .collect();
    Aggregation::from_fn(cells, horizon, states, actions, |h, s, a| {
        maps[(h * states + s) * actions + a]
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn epsilon_is_invariant_under_relabeling(seed in any::<u64>(), cells in 1usize..6) {
        let mdp = random_mdp(3, 3, 2, None, seed).unwrap();
        let agg = random_aggregation(3, 3, 2, cells, seed ^ 0x55);
        let mut relabel: Vec<usize> = (0..cells).collect();
        relabel.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let eps = epsilon_of(&mdp, &agg).unwrap();
        let eps_relabeled = epsilon_of(&mdp, &agg.relabeled(&relabel)).unwrap();
        prop_assert_eq!(eps, eps_relabeled);
    }

    #[test]
    fn merging_cells_never_lowers_epsilon(
        seed in any::<u64>(),
        cells in 2usize..6,
        h in 0usize..3,
        from in 0usize..6,
        into in 0usize..6,
    ) {
        let (from, into) = (from % cells, into % cells);
        let mdp = random_mdp(3, 3, 2, None, seed).unwrap();
        let agg = random_aggregation(3, 3, 2, cells, seed ^ 0xaa);
        let before = epsilon_of(&mdp, &agg).unwrap();
        let after = epsilon_of(&mdp, &agg.merged(h, from, into)).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn epsilon_bounded_by_remaining_horizon(seed in any::<u64>(), cells in 1usize..4) {
        let mdp = random_mdp(4, 3, 2, None, seed).unwrap();
        let agg = random_aggregation(4, 3, 2, cells, seed);
        let eps = epsilon_of(&mdp, &agg).unwrap();
        prop_assert!((0.0..=4.0).contains(&eps));
        prop_assert_eq!(epsilon_of(&mdp, &trivial_aggregation(4, 3, 2)).unwrap(), 0.0);
    }
}

#[test]
fn duplication_occupancy_covers_every_cell() {
    let base = random_mdp(3, 4, 2, None, 5).unwrap();
    let spec = DuplicationSpec {
        base_mdp: base,
        copies_per_state: 3,
        reward_perturbation: 0.0,
        seed: 1,
    };
    let inst = expand_aggregate_mdp(&spec).unwrap();
    let report = validate(&inst.aggregation, &inst.mdp).unwrap();
    assert!(report.unused_cells().iter().all(|&n| n == 0));
    for stage in &report.occupancy {
        assert!(stage.iter().all(|&n| n == 3));
    }
}
