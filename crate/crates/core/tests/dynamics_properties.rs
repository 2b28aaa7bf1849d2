use dnes::diagnostics::{error_norms, fit_exponential_rate, invariant_drift};
use dnes::dynamics::simulate_frozen_actions;
use dnes::game_model::block_sum;
use dnes::{
    build_basis, default_init, equilibrium_targets, error_coordinates, rate_fit, simulate,
    solve_ne, AggregativeGame, AlgorithmParams, ConvexSet, IntegratorConfig, NeSolveConfig,
    SimState, SwitchingSchedule, Vector, WeightedDigraph,
};
use nalgebra::{dvector, DVector};

fn game(lo: f64, hi: f64) -> AggregativeGame {
    let a = [2.0, 2.5, 3.0, 2.2, 1.8, 2.7];
    let b: Vec<Vector> = (0..6)
        .map(|i| dvector![0.4 * (i as f64 - 2.5), 0.3 - 0.1 * i as f64])
        .collect();
    let d = [0.8, 0.6, 0.9, 0.7, 0.5, 1.0];
    let sets = (0..6)
        .map(|_| ConvexSet::new_box(dvector![lo, lo], dvector![hi, hi]).unwrap())
        .collect();
    AggregativeGame::quadratic(&a, &b, &d, sets).unwrap()
}

fn alternating_cycles() -> SwitchingSchedule {
    let first = WeightedDigraph::cycles(6, &[vec![0, 1, 2], vec![3, 4, 5]], 1.0).unwrap();
    let second = WeightedDigraph::cycles(6, &[vec![2, 3], vec![5, 0]], 1.0).unwrap();
    SwitchingSchedule::from_pattern(vec![first, second], &[0, 1], &[0.5, 0.5], true).unwrap()
}

fn params() -> AlgorithmParams {
    AlgorithmParams::new(0.1, 1.0, 1.0, 1.0).unwrap()
}

fn x_star(game: &AggregativeGame) -> Vector {
    solve_ne(game, &NeSolveConfig::new(0.05).with_tol(1e-13)).unwrap().x
}

#[test]
fn euler_keeps_actions_in_their_sets() {
    let game = game(-0.2, 0.2);
    let init = default_init(&game, 4).unwrap();
    let traj = simulate(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::euler(0.05), 10.0)
        .unwrap();
    for state in &traj.samples {
        for i in 0..6 {
            let xi = game.block(&state.x, i);
            assert!(game.action_set(i).unwrap().contains(&xi, 1e-12).unwrap());
        }
    }
}

#[test]
fn compensators_keep_zero_sum_and_ev1_stays_zero() {
    let game = game(-1.0, 1.0);
    let init = default_init(&game, 5).unwrap();
    let traj = simulate(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::euler(0.05), 20.0)
        .unwrap();
    let basis = build_basis(6).unwrap();
    let drift = invariant_drift(&traj, &game, 1.0, &basis).unwrap();
    let phi0 = game.local_aggregates(&init.x).unwrap().norm();
    assert!(drift.max_conservation <= 1e-8 * phi0, "{drift:?}");
    assert!(drift.max_ev1_norm <= 1e-6 && drift.max_ev1_drift <= 1e-6);

    let first = &traj.samples[0];
    let e0 = error_coordinates(first, &game, &first.x, 1.0, &basis).unwrap();
    assert!(e0.e_v1.norm() <= 1e-12);
}

#[test]
fn unbalanced_graph_breaks_conservation() {
    let game = game(-1.0, 1.0);
    let unbalanced = WeightedDigraph::from_edges(6, &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 3, 1.0)])
        .unwrap();
    let second = WeightedDigraph::cycles(6, &[vec![2, 3], vec![5, 0]], 1.0).unwrap();
    let schedule =
        SwitchingSchedule::from_pattern(vec![unbalanced, second], &[0, 1], &[0.5, 0.5], true).unwrap();
    let init = default_init(&game, 5).unwrap();
    let config = IntegratorConfig::euler(0.05);
    assert!(simulate(&game, &params(), &schedule, &init, &config, 5.0).is_err());
    let mut permissive = config;
    permissive.allow_unbalanced = true;
    let traj = simulate(&game, &params(), &schedule, &init, &permissive, 5.0).unwrap();
    let drift = invariant_drift(&traj, &game, 1.0, &build_basis(6).unwrap()).unwrap();
    assert!(drift.max_conservation > 1e-3);
}

#[test]
fn switching_run_reaches_the_equilibrium_triple() {
    let game = game(-1.0, 1.0);
    let star = x_star(&game);
    let init = default_init(&game, 6).unwrap();
    let traj = simulate(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::euler(0.05), 150.0)
        .unwrap();
    let last = traj.final_state();
    let (s_target, v_target) = equilibrium_targets(&game, &star, 1.0).unwrap();
    assert!((&last.x - &star).norm() <= 1e-6);
    assert!((&last.s - s_target).norm() <= 1e-6);
    assert!((&last.v - v_target).norm() <= 1e-5);
    let errors = error_norms(&traj, &game, &star, 1.0).unwrap();
    assert!(errors.last().unwrap() < &(1e-4 * errors[0]));
}

#[test]
fn frozen_actions_consensus_decays() {
    let game = game(-1.0, 1.0);
    let init = default_init(&game, 7).unwrap();
    let traj = simulate_frozen_actions(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::euler(0.05), 30.0)
        .unwrap();
    let basis = build_basis(6).unwrap();
    let zeta: Vec<f64> = traj
        .samples
        .iter()
        .map(|st| error_coordinates(st, &game, &init.x, 1.0, &basis).unwrap().zeta_norm)
        .collect();
    let fit = fit_exponential_rate(&traj.times(), &zeta, 0.5).unwrap();
    assert!(fit.lambda < 0.0 && fit.r_squared >= 0.95, "{fit:?}");
}

#[test]
fn tail_rate_is_negative_and_well_fitted() {
    let game = game(-1.0, 1.0);
    let star = x_star(&game);
    let init = default_init(&game, 8).unwrap();
    let traj = simulate(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::euler(0.05), 40.0)
        .unwrap();
    let fit = rate_fit(&traj, &game, &star, 1.0, 0.5).unwrap();
    assert!(fit.lambda < 0.0 && fit.r_squared >= 0.95, "{fit:?}");
}

/// Starting state close to the equilibrium triple, so the actions stay in the
/// interior and the flow is smooth on every interval.
fn near_equilibrium(game: &AggregativeGame, star: &Vector) -> SimState {
    let (s_target, _) = equilibrium_targets(game, star, 1.0).unwrap();
    let bump = DVector::from_fn(star.len(), |k, _| 0.02 * ((k as f64) * 0.7).sin());
    let mut v = DVector::from_fn(star.len(), |k, _| 0.01 * ((k as f64) * 1.3).cos());
    let mean = block_sum(&v, 6, 2) / 6.0;
    for i in 0..6 {
        let mut block = v.rows_mut(i * 2, 2);
        block -= &mean;
    }
    SimState {
        t: 0.0,
        x: star + bump,
        s: s_target + DVector::from_element(star.len(), 0.05),
        v,
    }
}

fn order(errors: &[f64]) -> f64 {
    let slopes: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    slopes.iter().sum::<f64>() / slopes.len() as f64
}

#[test]
fn step_halving_orders() {
    let game = game(-5.0, 5.0);
    let star = x_star(&game);
    let init = near_equilibrium(&game, &star);
    let schedule = alternating_cycles();
    let t_end = 2.0;
    let final_x = |config: IntegratorConfig| {
        simulate(&game, &params(), &schedule, &init, &config, t_end)
            .unwrap()
            .final_state()
            .clone()
    };
    let reference = final_x(IntegratorConfig::rk4(0.25 / 64.0));
    let distance = |st: &SimState| {
        ((&st.x - &reference.x).norm_squared()
            + (&st.s - &reference.s).norm_squared()
            + (&st.v - &reference.v).norm_squared())
        .sqrt()
    };
    let euler: Vec<f64> = [0.05, 0.025, 0.0125]
        .iter()
        .map(|&h| distance(&final_x(IntegratorConfig::euler(h))))
        .collect();
    let rk4: Vec<f64> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&h| distance(&final_x(IntegratorConfig::rk4(h))))
        .collect();
    assert!(order(&euler) >= 0.9, "{euler:?}");
    assert!(order(&rk4) >= 3.5, "{rk4:?}");
}

#[test]
fn identical_inputs_give_identical_csv() {
    let game = game(-1.0, 1.0);
    let init = default_init(&game, 9).unwrap();
    let run = || {
        simulate(&game, &params(), &alternating_cycles(), &init, &IntegratorConfig::rk4(0.1), 3.0)
            .unwrap()
            .to_csv_string()
    };
    assert_eq!(run(), run());
}
