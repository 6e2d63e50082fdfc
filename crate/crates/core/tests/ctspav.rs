mod common;

use common::{oracle_ctspav, small_instance};
use ctspav_core::ctspav::{run_ctspav, vehicle_penalty, CtspavOptions};
use ctspav_core::plan::{validate_plan, Objective};

fn opts(objective: Objective) -> CtspavOptions {
    CtspavOptions { objective, ..CtspavOptions::default() }
}

#[test]
fn single_commuter_uses_one_vehicle() {
    let inst = small_instance(1, 1);
    let out = run_ctspav(&inst, &opts(Objective::Lexicographic)).unwrap();
    assert_eq!(out.plan.vehicle_count, 1);
    assert_eq!(out.plan.routes[0].segments.len(), 2);
    assert!(validate_plan(&inst, &out.plan).is_empty());
}

#[test]
fn matches_enumeration_on_small_instances() {
    for seed in 0..17 {
        for n in [2, 3, 4] {
            let inst = small_instance(seed, n);
            for objective in [Objective::Lexicographic, Objective::Distance] {
                let penalty = if objective == Objective::Lexicographic { vehicle_penalty(&inst) } else { 0 };
                let z = oracle_ctspav(&inst, penalty);
                let out = run_ctspav(&inst, &opts(objective)).unwrap();
                assert!(validate_plan(&inst, &out.plan).is_empty(), "{:?}", validate_plan(&inst, &out.plan));
                assert_eq!(out.plan.objective_value as i64, z, "seed {seed} n {n} {objective}");
                if let Some(lb) = out.z_lb {
                    assert!(lb <= z as f64 + 1e-6);
                }
            }
        }
    }
}
