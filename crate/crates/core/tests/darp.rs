mod common;

use common::{oracle_ctspav, oracle_darp, small_instance};
use ctspav_core::ctspav::vehicle_penalty;
use ctspav_core::darp::{run_darp, DarpOptions};
use ctspav_core::plan::{validate_plan, Objective};

#[test]
fn single_commuter() {
    let inst = small_instance(1, 1);
    let out = run_darp(&inst, &DarpOptions::default()).unwrap();
    assert_eq!(out.plan.vehicle_count, 1);
    assert!(validate_plan(&inst, &out.plan).is_empty());
}

#[test]
fn against_route_space_oracle() {
    for seed in 0..10 {
        for n in [2, 3] {
            let inst = small_instance(seed, n);
            let p = vehicle_penalty(&inst);
            let (z, vc) = oracle_darp(&inst, p);
            let zc = oracle_ctspav(&inst, p);
            let out = run_darp(&inst, &DarpOptions::default()).unwrap();
            let problems = validate_plan(&inst, &out.plan);
            assert!(problems.is_empty(), "{problems:?}");
            assert!(out.plan.objective_value as i64 >= z);
            let f = out.farley.unwrap();
            assert!((f - 1e-6).ceil() as usize <= vc, "seed {seed} n {n}");
            // Interleaved routes can only help.
            assert!(z <= zc);
            assert!(out.plan.total_distance <= out.unrepaired_distance.unwrap());
        }
    }
}

#[test]
fn distance_mode_respects_route_space_oracle() {
    for seed in 20..30 {
        let inst = small_instance(seed, 2);
        let (z, _) = oracle_darp(&inst, 0);
        let opts = DarpOptions { objective: Objective::Distance, ..DarpOptions::default() };
        let out = run_darp(&inst, &opts).unwrap();
        assert!(validate_plan(&inst, &out.plan).is_empty());
        assert!(out.plan.total_distance >= z, "seed {seed}");
        if out.plan.converged {
            assert!(out.z_lb.unwrap() <= z as f64 + 1e-6);
        }
    }
}
