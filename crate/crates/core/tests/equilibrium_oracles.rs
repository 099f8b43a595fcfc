mod common;

use common::{bisect, pair_regressor};
use netform_core::equilibrium::{Game, SolverConfig};
use netform_core::model::{logistic, ADistribution, BeliefMatrix, Parameters, TypeSpace};
use netform_core::simulate::{scenario_a_dist, ScenarioSpec};
use proptest::prelude::*;

#[test]
fn logistic_at_one_matches_direct_evaluation() {
    // 1 / (1 + e^-1) to 15 significant digits
    assert!((logistic(1.0) - 0.731058578630005).abs() < 1e-15);
}

#[test]
fn ccp_matches_pairwise_recomputation() {
    // types -1 (index 0) and 1 (index 1): w = 2 across types
    let ts = TypeSpace::binary();
    let params = Parameters::new(vec![-2.0, 1.0, 1.0]);
    let counts = [3, 4];
    let game = Game::new(&ts, &params, &counts).unwrap();
    let q = BeliefMatrix::from_rows(&[vec![0.2, 0.6], vec![0.3, 0.4]]).unwrap();
    let types = [0, 0, 0, 1, 1, 1, 1];
    let (i, j) = (0, 3);
    let z = pair_regressor(&q, &types, &ts, i, j);
    assert_eq!(z[0], 2.0);
    assert_eq!(z[1], 0.3);
    // third parties: two of type 0, three of type 1, out of n - 2 = 5
    assert!((z[2] - (2.0 * 0.3 + 3.0 * 0.4) / 5.0).abs() < 1e-15);
    let expected = logistic(-4.0 - 0.5 + 0.3 + z[2]);
    assert!((game.ccp(0, 1, -0.5, &q) - expected).abs() < 1e-15);

    // every ordered pair, every type combination
    for i in 0..types.len() {
        for j in (0..types.len()).filter(|&j| j != i) {
            let z = pair_regressor(&q, &types, &ts, i, j);
            let idx = -2.0 * z[0] + z[1] + z[2] + 0.7;
            assert!((game.link_index(types[i], types[j], 0.7, &q) - idx).abs() < 1e-14);
        }
    }
}

fn single_type_space() -> TypeSpace {
    TypeSpace::new(vec![0.0], vec![1.0], &[vec![vec![0.0]]]).unwrap()
}

#[test]
fn single_type_reduction_matches_bisection() {
    let ts = single_type_space();
    let params = Parameters::new(vec![0.0, 1.0, 1.0]);
    let oracle = bisect(|q| q - logistic(2.0 * q), 0.0, 1.0);
    for n in [3, 10, 250] {
        let eq = Game::new(&ts, &params, &[n])
            .unwrap()
            .solve(&ADistribution::point_mass(1, 0.0), &SolverConfig::default())
            .unwrap();
        assert!((eq.beliefs[(0, 0)] - oracle).abs() < 1e-10, "n = {n}");
    }
}

fn sup_residual(game: &Game, q: &BeliefMatrix, a_dist: &ADistribution) -> f64 {
    // recompute the belief map node by node from the raw index
    let t = q.types();
    let mut worst = 0.0f64;
    for s in 0..t {
        for u in 0..t {
            let mapped: f64 = a_dist.per_type[s]
                .iter()
                .map(|wn| wn.weight * logistic(game.link_index(s, u, wn.node, q)))
                .sum();
            worst = worst.max((mapped - q[(s, u)]).abs());
        }
    }
    worst
}

#[test]
fn scenario_equilibria_have_tiny_residual() {
    let ts = TypeSpace::binary();
    for k in 1..=3 {
        let spec = ScenarioSpec::by_number(k, 50, 0).unwrap();
        let a_dist = scenario_a_dist(&spec, &ts, 15).unwrap();
        let game = Game::new(&ts, &spec.params, &[24, 26]).unwrap();
        let eq = game.solve(&a_dist, &SolverConfig::default()).unwrap();
        assert!(eq.residual <= 1e-12);
        assert!(eq.beliefs.is_interior());
        assert!(sup_residual(&game, &eq.beliefs, &a_dist) <= 1e-12, "scenario {k}");
    }
}

#[test]
fn quadrature_refinement_barely_moves_beliefs() {
    let ts = TypeSpace::binary();
    for k in 1..=3 {
        for (n, counts) in [(50, [25, 25]), (500, [243, 257])] {
            let spec = ScenarioSpec::by_number(k, n, 0).unwrap();
            let game = Game::new(&ts, &spec.params, &counts).unwrap();
            let solve = |nodes| {
                game.solve(&scenario_a_dist(&spec, &ts, nodes).unwrap(), &SolverConfig::default())
                    .unwrap()
                    .beliefs
            };
            let shift = solve(15).sup_distance(&solve(31));
            assert!(shift < 1e-8, "scenario {k}, n {n}: shift {shift:e}");
        }
    }
}

#[test]
fn point_mass_without_strategic_terms_is_closed_form() {
    let ts = TypeSpace::binary();
    let params = Parameters::new(vec![-1.3, 0.0, 0.0]);
    let game = Game::new(&ts, &params, &[5, 7]).unwrap();
    let a_dist = ADistribution::point_mass(2, 0.4);
    for q in [BeliefMatrix::filled(2, 0.1), BeliefMatrix::from_rows(&[vec![0.9, 0.2], vec![0.3, 0.7]]).unwrap()] {
        let out = game.belief_map(&q, &a_dist);
        for s in 0..2 {
            for t in 0..2 {
                let w = if s == t { 0.0 } else { 2.0 };
                assert!((out[(s, t)] - logistic(-1.3 * w + 0.4)).abs() < 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // the belief map sends any q into [kappa, 1 - kappa], kappa from the
    // largest attainable |index|
    #[test]
    fn belief_map_stays_away_from_corners(
        beta in prop::collection::vec(-3.0f64..3.0, 3),
        entries in prop::collection::vec(0.0f64..1.0, 4),
        m0 in 1usize..20,
        m1 in 1usize..20,
        mean in -10.0f64..10.0,
    ) {
        prop_assume!(m0 + m1 >= 3);
        let ts = TypeSpace::binary();
        let params = Parameters::new(beta.clone());
        let game = Game::new(&ts, &params, &[m0, m1]).unwrap();
        let a_dist = ADistribution::point_mass(2, mean).clamped(params.a_bounds);
        let q = BeliefMatrix::from_rows(&[entries[..2].to_vec(), entries[2..].to_vec()]).unwrap();
        let kappa = logistic(-(2.0 * beta[0].abs() + beta[1].abs() + beta[2].abs() + 8.0));
        let out = game.belief_map(&q, &a_dist);
        for &v in out.as_slice() {
            prop_assert!(v >= kappa && v <= 1.0 - kappa);
        }
        prop_assert!((game.belief_bound() - kappa).abs() <= 1e-15);
    }
}
