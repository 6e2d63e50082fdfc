//! Plan metrics, the vehicle and infrastructure cost model and parameter
//! sweeps.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Instance, Params, Time};
use crate::plan::{PlanRoute, SolvePlan};

pub const METERS_PER_MILE: f64 = 1609.344;
pub const WEEKDAYS_PER_YEAR: u32 = 261;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub vehicle_count: usize,
    pub vmt_m: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub vehicle_count: usize,
    pub vmt_m: i64,
    pub trips_per_route_mean: f64,
    pub trips_per_route_sd: f64,
    pub passenger_duration_s: Vec<Time>,
    pub busy_duration_s: Vec<Time>,
    pub idle_duration_s: Vec<Time>,
    /// Seconds spent with 1..=K riders aboard, summed over vehicles.
    pub occupancy_s: Vec<Time>,
    pub occupancy_fractions: Vec<f64>,
    pub no_sharing: Baseline,
    pub vc_reduction: f64,
    pub vmt_reduction: f64,
}

pub fn no_sharing_baseline(inst: &Instance) -> Baseline {
    let n = inst.n();
    let vmt_m = (1..=n).map(|i| inst.sigma(i, n + i) + inst.sigma(2 * n + i, 3 * n + i)).sum();
    Baseline { vehicle_count: n, vmt_m }
}

/// Passenger, busy and per-occupancy time of one route.
fn route_durations(inst: &Instance, r: &PlanRoute, occupancy: &mut [Time]) -> (Time, Time) {
    let nd = inst.nodes();
    let mut load = 0usize;
    let mut passenger = 0;
    let mut busy = inst.tau(nd.source(), r.nodes[0]) + inst.tau(*r.nodes.last().unwrap(), nd.sink());
    for k in 0..r.nodes.len() {
        let v = r.nodes[k];
        if nd.is_pickup(v) {
            load += 1;
        } else {
            load -= 1;
        }
        if k + 1 == r.nodes.len() {
            busy += inst.s(v);
            break;
        }
        let span = r.times[k + 1] - r.times[k];
        if load > 0 {
            passenger += span;
            busy += span;
            occupancy[load - 1] += span;
        } else {
            busy += inst.s(v) + inst.tau(v, r.nodes[k + 1]);
        }
    }
    (passenger, busy)
}

pub fn compute_metrics(plan: &SolvePlan, inst: &Instance) -> PlanMetrics {
    let k = inst.capacity();
    let mut occupancy = vec![0; k];
    let mut passenger = Vec::new();
    let mut busy = Vec::new();
    let mut idle = Vec::new();
    for r in &plan.routes {
        let (p, b) = route_durations(inst, r, &mut occupancy);
        passenger.push(p);
        busy.push(b);
        idle.push(r.depot_return - r.depot_departure - b);
    }
    let trips: Vec<f64> = plan.routes.iter().map(|r| (r.nodes.len() / 2) as f64).collect();
    let m = trips.len().max(1) as f64;
    let mean = trips.iter().sum::<f64>() / m;
    let sd = (trips.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / m).sqrt();
    let total: Time = occupancy.iter().sum();
    let fractions = occupancy.iter().map(|&s| if total > 0 { s as f64 / total as f64 } else { 0.0 }).collect();
    let vmt_m: i64 = plan.routes.iter().map(|r| r.distance).sum();
    let base = no_sharing_baseline(inst);
    PlanMetrics {
        vehicle_count: plan.routes.len(),
        vmt_m,
        trips_per_route_mean: mean,
        trips_per_route_sd: sd,
        passenger_duration_s: passenger,
        busy_duration_s: busy,
        idle_duration_s: idle,
        occupancy_s: occupancy,
        occupancy_fractions: fractions,
        vc_reduction: 1.0 - plan.routes.len() as f64 / base.vehicle_count.max(1) as f64,
        vmt_reduction: 1.0 - vmt_m as f64 / base.vmt_m.max(1) as f64,
        no_sharing: base,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub price: f64,
    pub first_year_rate: f64,
    pub later_rate: f64,
    pub fuel_per_mile: f64,
    pub wear_per_mile: f64,
    pub parking_per_year: f64,
    pub charger_install: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            price: 30_000.0,
            first_year_rate: 0.24,
            later_rate: 0.15,
            fuel_per_mile: 0.15,
            wear_per_mile: 0.08,
            parking_per_year: 800.0,
            charger_install: 1400.0,
        }
    }
}

fn cents(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Value lost by one vehicle after `years` years.
pub fn depreciation(cm: &CostModel, years: u32) -> f64 {
    assert!(years >= 1, "depreciation horizon starts at one year");
    let remaining = cm.price * (1.0 - cm.first_year_rate) * (1.0 - cm.later_rate).powi(years as i32 - 1);
    cents(cm.price - remaining)
}

/// Depreciation of the fleet plus fuel and wear over weekday operation.
pub fn vehicle_cost(vehicle_count: usize, daily_meters: i64, cm: &CostModel, years: u32) -> f64 {
    let miles = daily_meters as f64 / METERS_PER_MILE;
    let running = (cm.fuel_per_mile + cm.wear_per_mile) * miles * (WEEKDAYS_PER_YEAR * years) as f64;
    cents(vehicle_count as f64 * depreciation(cm, years) + running)
}

/// Parking for every vehicle and, when `chargers` is set, one charger
/// installation per vehicle.
pub fn infrastructure_cost(vehicle_count: usize, cm: &CostModel, years: u32, chargers: bool) -> f64 {
    let vc = vehicle_count as f64;
    let fixed = if chargers { vc * cm.charger_install } else { 0.0 };
    cents(fixed + vc * cm.parking_per_year * years as f64)
}

/// First year in which the shared fleet's infrastructure is cheaper than
/// the baseline's parking, searching up to `horizon` years.
pub fn break_even_year(fleet: usize, baseline: usize, cm: &CostModel, horizon: u32) -> Option<u32> {
    (1..=horizon).find(|&y| infrastructure_cost(fleet, cm, y, true) < infrastructure_cost(baseline, cm, y, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "delta")]
    Delta,
    #[serde(rename = "detour")]
    Detour,
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "delta" | "d" => Ok(SweepParam::Delta),
            "detour" | "r" | "detour_ratio" => Ok(SweepParam::Detour),
            _ => Err(format!("unknown sweep parameter `{s}` (expected delta or detour)")),
        }
    }
}

impl SweepParam {
    pub fn apply(self, base: &Params, value: f64) -> Params {
        let mut p = *base;
        match self {
            SweepParam::Delta => p.delta = value.round() as Time,
            SweepParam::Detour => p.detour_ratio = value,
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub status: String,
    pub vehicle_count: Option<usize>,
    pub vmt_m: Option<i64>,
    pub baseline_vehicle_count: usize,
    pub baseline_vmt_m: i64,
    pub vc_pct_of_baseline: Option<f64>,
    pub vmt_pct_of_baseline: Option<f64>,
}

/// Re-derives the windows and ride limits for every value and solves each
/// cell in parallel. A failing cell is reported in its row.
pub fn sensitivity_sweep<F>(inst: &Instance, param: SweepParam, values: &[f64], solve: F) -> Vec<SweepRow>
where
    F: Fn(&Instance) -> Result<SolvePlan, String> + Sync,
{
    let base = no_sharing_baseline(inst);
    let name = match param {
        SweepParam::Delta => "delta",
        SweepParam::Detour => "detour",
    };
    values
        .par_iter()
        .map(|&value| {
            let result = inst
                .with_params(param.apply(&inst.params, value))
                .map_err(|e| e.to_string())
                .and_then(|cell| solve(&cell));
            let (status, vc, vmt) = match result {
                Ok(plan) => ("ok".to_string(), Some(plan.vehicle_count), Some(plan.total_distance)),
                Err(e) => (format!("failed: {e}"), None, None),
            };
            SweepRow {
                param: name.into(),
                value,
                status,
                vehicle_count: vc,
                vmt_m: vmt,
                baseline_vehicle_count: base.vehicle_count,
                baseline_vmt_m: base.vmt_m,
                vc_pct_of_baseline: vc.map(|v| 100.0 * v as f64 / base.vehicle_count.max(1) as f64),
                vmt_pct_of_baseline: vmt.map(|v| 100.0 * v as f64 / base.vmt_m.max(1) as f64),
            }
        })
        .collect()
}
