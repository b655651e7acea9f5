mod common;

use common::*;
use gridcap::bundle::{run_bund, BundleParams, IterationKind};
use gridcap::cycles::minimal_basis;
use gridcap::extensive::solve_extensive;
use gridcap::model::{Instance, Mode, Scenario, TechParams};
use gridcap::network::{Bus, Generator, Load, Network};
use gridcap::solver::{solve_lp, LpStatus, SolverSettings};
use gridcap::subproblem::OperationsModel;

fn single_bus() -> Instance {
    let gen = |id, capacity| Generator {
        id,
        bus: 0,
        capacity,
        expansion_limit: 0.0,
        expansion_cost: 1.0,
        ramp_rate: 1.0,
        emission_factor: 0.0,
    };
    let net = Network::new(
        vec![Bus { id: 0, is_slack: true }],
        vec![],
        vec![],
        vec![gen(0, 100.0), gen(1, 100.0), gen(2, 100.0)],
        vec![],
        vec![Load { id: 0, bus: 0 }],
    )
    .unwrap();
    let sc = Scenario {
        id: "only".into(),
        weight: 1.0,
        gen_costs: vec![vec![30.0, 10.0, 50.0], vec![30.0, 10.0, 50.0]],
        availability: vec![vec![1.0; 3]; 2],
        loads: vec![vec![150.0], vec![220.0]],
    };
    Instance::new(net, TechParams::default(), vec![sc]).unwrap()
}

#[test]
fn single_bus_converges_to_merit_order() {
    let inst = single_bus();
    let (_, d) = minimal_basis(&inst.network, &SolverSettings::default()).unwrap();
    let model = OperationsModel::new(&inst, &d, &[], Mode::Scdc, SolverSettings::default()).unwrap();
    let out = run_bund(&model, &inst.polytope(None), &BundleParams::default()).unwrap();
    // Hour 0: 100 @ 10 + 50 @ 30; hour 1: 100 @ 10 + 100 @ 30 + 20 @ 50.
    let merit = (1000.0 + 1500.0) + (1000.0 + 3000.0 + 1000.0);
    assert!(out.converged && out.trajectory.len() <= 3);
    assert!((out.upper - merit).abs() < 1e-5 * merit, "{}", out.upper);
}

#[test]
fn loose_tolerance_stops_at_first_small_gap() {
    let inst = bundled("five_bus");
    let (_, d) = minimal_basis(&inst.network, &SolverSettings::default()).unwrap();
    let model = OperationsModel::new(&inst, &d, &[0.0; 7], Mode::Scdc, SolverSettings::default()).unwrap();
    let params = BundleParams {
        epsilon: 0.5,
        ..BundleParams::default()
    };
    let out = run_bund(&model, &inst.polytope(None), &params).unwrap();
    let (last, before) = out.trajectory.split_last().unwrap();
    assert!(last.rel_gap < 0.5);
    assert!(before.iter().all(|r| r.rel_gap >= 0.5));
}

#[test]
fn five_bus_matches_extensive_form() {
    let inst = bundled("five_bus");
    let (_, d) = minimal_basis(&inst.network, &SolverSettings::default()).unwrap();
    let model = OperationsModel::new(&inst, &d, &[0.0; 7], Mode::Scdc, SolverSettings::default()).unwrap();
    let poly = inst.polytope(None);
    let out = run_bund(&model, &poly, &BundleParams::default()).unwrap();
    let (ef, _) = solve_extensive(&model, &poly).unwrap();
    assert!(out.converged);
    assert!(out.lower <= ef * (1.0 + 1e-6) + 1e-6, "L {} > EF {ef}", out.lower);
    assert!((out.upper - ef).abs() <= 1e-3 * ef, "U {} vs EF {ef}", out.upper);

    // Bounds and active sets evolve monotonically.
    for pair in out.trajectory.windows(2) {
        assert!(pair[1].lower >= pair[0].lower - 1e-9);
        assert!(pair[1].upper <= pair[0].upper + 1e-9);
        assert!(pair[1].active.iter().zip(&pair[0].active).all(|(a, b)| a >= b));
        if pair[1].kind == IterationKind::TypeII {
            assert!(pair[1].gap <= params_alpha() * pair[0].gap + 1e-8);
        }
    }

    // Each stored cut minorizes its scenario's full-contingency value.
    let mut r = rng(77);
    for _ in 0..20 {
        let x = random_portfolio(&inst, &mut r);
        for w in 0..inst.scenarios.len() {
            let sub = model.build(&x, w, &model.full_contingencies(w)).unwrap();
            let sol = solve_lp(&sub.lp, model.settings());
            assert_eq!(sol.status, LpStatus::Optimal);
            for cut in out.cuts.iter().filter(|c| c.scenario == w) {
                assert!(cut.value(&x) <= sol.objective + 1e-6 * (1.0 + sol.objective.abs()));
            }
        }
    }
}

fn params_alpha() -> f64 {
    BundleParams::default().alpha
}

#[test]
fn upper_bound_is_true_cost_without_new_violations() {
    // With sigma = 0 the oracle value is the full-contingency value at x_k.
    let inst = bundled("triangle3");
    let (_, d) = minimal_basis(&inst.network, &SolverSettings::default()).unwrap();
    let model = OperationsModel::new(&inst, &d, &[0.0; 3], Mode::Scdc, SolverSettings::default()).unwrap();
    let out = run_bund(&model, &inst.polytope(None), &BundleParams::default()).unwrap();
    assert!(out.penalties.iter().all(|p| *p < 1e-6));
    let full: f64 = (0..inst.scenarios.len())
        .map(|w| {
            let sub = model.build(&out.x, w, &model.full_contingencies(w)).unwrap();
            inst.scenarios[w].weight * solve_lp(&sub.lp, model.settings()).objective
        })
        .sum::<f64>()
        + inst.investment_costs().iter().zip(&out.x).map(|(c, x)| c * x).sum::<f64>();
    assert!(rel_close(out.upper, full, 1e-6), "{} vs {full}", out.upper);
}
