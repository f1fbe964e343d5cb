mod common;

use std::collections::BTreeMap;

use common::lattice_instance;
use poc_core::belief::{discretize_gaussian, product_belief, ScenarioBelief};
use poc_core::measures::{mse, regret, ControlContext};
use poc_core::model::DisturbanceSequence;
use poc_core::solver::{SolveOptions, TerminalValue, TreeSolver};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u32 = 1000;

/// Random scalar belief over integer sequences of length 1..=3.
fn belief_strategy() -> impl Strategy<Value = ScenarioBelief> {
    (1usize..=3)
        .prop_flat_map(|len| prop::collection::vec((prop::collection::vec(-2i32..=2, len), 0.05f64..1.0), 1..=8))
        .prop_map(|raw| {
            let mut merged: BTreeMap<Vec<i32>, f64> = BTreeMap::new();
            for (s, w) in raw {
                *merged.entry(s).or_default() += w;
            }
            let total: f64 = merged.values().sum();
            let weighted = merged
                .into_iter()
                .map(|(s, w)| (seq(&s), w / total))
                .collect();
            ScenarioBelief::new(0, weighted).unwrap()
        })
}

fn seq(values: &[i32]) -> DisturbanceSequence {
    DisturbanceSequence::scalar(&values.iter().map(|v| *v as f64).collect::<Vec<_>>())
}

fn assert_normalized(b: &ScenarioBelief) -> Result<(), TestCaseError> {
    prop_assert!((b.total_mass() - 1.0).abs() <= 1e-12, "mass {}", b.total_mass());
    prop_assert!(b.scenarios().iter().all(|s| s.probability > 0.0));
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn mse_is_nonnegative_and_zero_only_on_the_realized_point_mass(
        b in belief_strategy(),
        pick in any::<prop::sample::Index>(),
        offset in prop::collection::vec(-2i32..=2, 3),
    ) {
        let own = b.scenarios()[pick.index(b.len())].sequence.clone();
        let other = seq(&offset[..b.horizon_len()]);
        for wbar in [&own, &other] {
            let m = mse(wbar, &b).unwrap();
            prop_assert!(m >= 0.0);
            let is_point_on_wbar = b.is_point_mass() && b.scenarios()[0].sequence == *wbar;
            prop_assert_eq!(m == 0.0, is_point_on_wbar);
            prop_assert_eq!(mse(wbar, &ScenarioBelief::point_mass(0, wbar.clone())).unwrap(), 0.0);
        }
    }

    #[test]
    fn regret_is_nonnegative_and_vanishes_on_the_realized_point_mass(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = rng.gen_range(1..=3);
        let n_controls = rng.gen_range(2..=5);
        let n_scen = rng.gen_range(1..=8usize.min(5usize.pow(horizon as u32)));
        let half = rng.gen_range(3..=9);
        let inst = lattice_instance(&mut rng, horizon, n_controls, n_scen, half);
        let solver = TreeSolver::new(
            inst.system.clone(),
            inst.cost.clone(),
            inst.grid.clone(),
            TerminalValue::Zero,
            SolveOptions::default(),
        )
        .unwrap();
        let universe: Vec<DisturbanceSequence> = inst.belief.scenarios().iter().map(|s| s.sequence.clone()).collect();
        let ctx = ControlContext { solver: &solver, x0: &inst.x0, universe: &universe };
        // Realized sequences both inside and outside the belief's support.
        let inside = inst.belief.scenarios()[rng.gen_range(0..inst.belief.len())].sequence.clone();
        let outside = DisturbanceSequence::scalar(&(0..horizon).map(|_| rng.gen_range(-2..=2) as f64).collect::<Vec<_>>());
        for wbar in [inside, outside] {
            prop_assert!(regret(&wbar, &inst.belief, &ctx).unwrap() >= -1e-9);
            let own = regret(&wbar, &ScenarioBelief::point_mass(0, wbar.clone()), &ctx).unwrap();
            prop_assert!(own.abs() <= 1e-9, "point-mass regret {}", own);
        }
    }

    #[test]
    fn no_belief_beats_the_truth_in_expectation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = rng.gen_range(1..=3);
        let n_controls = rng.gen_range(2..=5);
        let n_scen = rng.gen_range(2..=8usize.min(5usize.pow(horizon as u32)).max(2));
        let half = rng.gen_range(3..=9);
        let inst = lattice_instance(&mut rng, horizon, n_controls, n_scen, half);
        let solver = TreeSolver::new(
            inst.system.clone(),
            inst.cost.clone(),
            inst.grid.clone(),
            TerminalValue::Zero,
            SolveOptions::default(),
        )
        .unwrap();
        let truth = &inst.belief;
        let universe: Vec<DisturbanceSequence> = truth.scenarios().iter().map(|s| s.sequence.clone()).collect();
        let ctx = ControlContext { solver: &solver, x0: &inst.x0, universe: &universe };
        let expected = |b: &ScenarioBelief| -> f64 {
            truth
                .scenarios()
                .iter()
                .map(|s| s.probability * ctx.belief_policy_cost(&s.sequence, b).unwrap())
                .sum()
        };
        // A rival concentrated on part of the support, possibly with foreign sequences.
        let keep = rng.gen_range(1..=universe.len());
        let mut rival: Vec<(DisturbanceSequence, f64)> =
            universe.iter().take(keep).map(|s| (s.clone(), rng.gen_range(0.1..1.0))).collect();
        if rng.gen_bool(0.5) {
            let foreign = DisturbanceSequence::scalar(&(0..horizon).map(|_| rng.gen_range(-2..=2) as f64).collect::<Vec<_>>());
            if !universe.contains(&foreign) {
                rival.push((foreign, rng.gen_range(0.1..1.0)));
            }
        }
        let total: f64 = rival.iter().map(|(_, w)| w).sum();
        let rival = ScenarioBelief::new(0, rival.into_iter().map(|(s, w)| (s, w / total)).collect()).unwrap();
        let (own, other) = (expected(truth), expected(&rival));
        prop_assert!(own <= other + 1e-9, "truth {} rival {}", own, other);
    }

    #[test]
    fn transformers_preserve_normalization(
        b in belief_strategy(),
        universe in prop::collection::vec(prop::collection::vec(-2i32..=2, 3), 1..=4),
        eps in 0.0f64..0.999,
        pick in any::<prop::sample::Index>(),
        shift in -3i32..=3,
        mu in -5.0f64..5.0,
        sigma in 0.0f64..3.0,
        n_points in 1usize..=9,
    ) {
        assert_normalized(&b)?;
        let universe: Vec<DisturbanceSequence> = universe.iter().map(|u| seq(&u[..b.horizon_len()])).collect();
        assert_normalized(&b.epsilon_mix(&universe, eps).unwrap())?;
        if b.horizon_len() > 1 {
            let marginal = b.first_step_marginal();
            let v = &marginal[pick.index(marginal.len())].0;
            let conditioned = b.condition_on_observed(v).unwrap();
            assert_normalized(&conditioned)?;
            assert_normalized(&conditioned.prefixed(v.clone()).unwrap())?;
        }
        // A lossy map merges scenarios.
        let folded = b.map_sequences(|s| {
            DisturbanceSequence::scalar(&s.flatten().iter().map(|v| (v + shift as f64).abs().min(2.0)).collect::<Vec<_>>())
        }).unwrap();
        assert_normalized(&folded)?;
        assert_normalized(&b.clone().with_start_step(4))?;
        let g = discretize_gaussian(mu, sigma, n_points).unwrap();
        prop_assert!((g.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!((g.iter().map(|(v, p)| v * p).sum::<f64>() - mu).abs() <= 1e-9);
        let marginals: Vec<Vec<(Vec<f64>, f64)>> = (0..b.horizon_len()).map(|k| b.marginal(k)).collect();
        assert_normalized(&product_belief(0, &marginals, 10_000).unwrap())?;
    }

    #[test]
    fn filtration_obeys_the_chain_rule(b in belief_strategy()) {
        prop_assume!(b.horizon_len() > 1);
        for (v, m) in b.first_step_marginal() {
            let conditioned = b.condition_on_observed(&v).unwrap();
            for s in b.scenarios().iter().filter(|s| s.sequence.steps()[0] == v) {
                let tail = s.sequence.suffix(1);
                prop_assert!((m * conditioned.probability_of(&tail) - s.probability).abs() <= 1e-12);
            }
            // Conditioning twice equals conditioning once on the joint prefix.
            if b.horizon_len() == 3 {
                for (v2, _) in conditioned.first_step_marginal() {
                    let twice = conditioned.condition_on_observed(&v2).unwrap();
                    let prefix_mass: f64 = b
                        .scenarios()
                        .iter()
                        .filter(|s| s.sequence.steps()[0] == v && s.sequence.steps()[1] == v2)
                        .map(|s| s.probability)
                        .sum();
                    for s in b.scenarios().iter().filter(|s| s.sequence.steps()[0] == v && s.sequence.steps()[1] == v2) {
                        let p = twice.probability_of(&s.sequence.suffix(2));
                        prop_assert!((p - s.probability / prefix_mass).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
