//! Synthetic instance generation, travel matrices, commuter clustering and
//! depot selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{CommuterSpec, Instance, InstanceFile, ModelError, Params, Point, Time};

pub const DEFAULT_SPEED_MPS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(self, p: Point, q: Point) -> f64 {
        let (dx, dy) = (p.x - q.x, p.y - q.y);
        match self {
            Metric::Euclidean => dx.hypot(dy),
            Metric::Manhattan => dx.abs() + dy.abs(),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            _ => Err(format!("unknown metric `{s}`")),
        }
    }
}

/// Integer travel time (seconds) and distance (meters) matrices, flattened
/// row-major. Both are closed under shortest paths so the triangle
/// inequality holds exactly after rounding.
pub fn matrices(locations: &[Point], metric: Metric, speed_mps: f64) -> (Vec<Time>, Vec<i64>) {
    let l = locations.len();
    let mut dist = vec![0i64; l * l];
    let mut time = vec![0i64; l * l];
    for a in 0..l {
        for b in 0..l {
            if a != b {
                let d = metric.distance(locations[a], locations[b]).ceil() as i64;
                dist[a * l + b] = d;
                time[a * l + b] = (d as f64 / speed_mps).ceil() as i64;
            }
        }
    }
    close_shortest_paths(&mut dist, l);
    close_shortest_paths(&mut time, l);
    (time, dist)
}

fn close_shortest_paths(m: &mut [i64], l: usize) {
    for k in 0..l {
        for a in 0..l {
            let ak = m[a * l + k];
            for b in 0..l {
                let via = ak + m[k * l + b];
                if via < m[a * l + b] {
                    m[a * l + b] = via;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n: usize,
    pub metric: Metric,
    pub speed_mps: f64,
    pub inner_radius_m: f64,
    pub outer_radius_m: f64,
    /// Desired inbound arrivals: mean and standard deviation, truncated to
    /// `arrival_range`.
    pub arrival_mean: Time,
    pub arrival_sd: Time,
    pub arrival_range: (Time, Time),
    pub departure_mean: Time,
    pub departure_sd: Time,
    pub departure_range: (Time, Time),
    /// Desired times are rounded to a multiple of this many seconds.
    pub time_step: Time,
    pub params: Params,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            n: 10,
            metric: Metric::Euclidean,
            speed_mps: DEFAULT_SPEED_MPS,
            inner_radius_m: 1_500.0,
            outer_radius_m: 8_000.0,
            arrival_mean: 7 * 3600 + 1800,
            arrival_sd: 2700,
            arrival_range: (6 * 3600, 9 * 3600),
            departure_mean: 17 * 3600 + 1800,
            departure_sd: 2700,
            departure_range: (16 * 3600, 19 * 3600),
            time_step: 60,
            params: Params::default(),
        }
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: Time, sd: Time, range: (Time, Time), step: Time) -> Time {
    let normal = Normal::new(mean as f64, sd.max(1) as f64).expect("positive standard deviation");
    let step = step.max(1);
    loop {
        let t = normal.sample(rng);
        let t = ((t / step as f64).round() as Time) * step;
        if t >= range.0 && t <= range.1 {
            return t;
        }
    }
}

/// Random instance with homes in an annulus around a workplace at the
/// origin. Location 0 is the workplace and the central depot; location
/// `k` is the home of commuter `k`.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<Instance, ModelError> {
    Instance::from_file(generate_file(cfg))
}

pub fn generate_file(cfg: &GeneratorConfig) -> InstanceFile {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut locations = vec![Point { x: 0.0, y: 0.0 }];
    let mut commuters = Vec::with_capacity(cfg.n);
    let (r0, r1) = (cfg.inner_radius_m.min(cfg.outer_radius_m), cfg.outer_radius_m.max(cfg.inner_radius_m));
    for k in 0..cfg.n {
        let r = if r1 > r0 { rng.gen_range(r0 * r0..r1 * r1).sqrt() } else { r0 };
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        // Rounded to decimeters so the file round-trips exactly.
        let x = (r * theta.cos() * 10.0).round() / 10.0;
        let y = (r * theta.sin() * 10.0).round() / 10.0;
        locations.push(Point { x, y });
        let at = truncated_normal(&mut rng, cfg.arrival_mean, cfg.arrival_sd, cfg.arrival_range, cfg.time_step);
        let dt = truncated_normal(&mut rng, cfg.departure_mean, cfg.departure_sd, cfg.departure_range, cfg.time_step);
        commuters.push(CommuterSpec { home: k + 1, desired_arrival: at, desired_departure: dt });
    }
    InstanceFile {
        name: format!("synthetic-n{}-s{}", cfg.n, cfg.seed),
        metric: cfg.metric,
        speed_mps: cfg.speed_mps,
        locations,
        workplace: 0,
        depot: 0,
        commuters,
        params: cfg.params,
        travel_time: None,
        travel_dist: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// 1-based commuter ids, ascending.
    pub members: Vec<usize>,
    pub local_depot: usize,
}

/// Capacitated agglomerative clustering: repeatedly merges the two clusters
/// with the closest centroids whose combined size stays within `max_size`.
/// Ties go to the lexicographically smallest pair of cluster indices.
/// Returns groups of indices into `homes`.
pub fn cluster_points(homes: &[Point], max_size: usize) -> Vec<Vec<usize>> {
    let max_size = max_size.max(1);
    let mut groups: Vec<Option<(Vec<usize>, f64, f64)>> =
        homes.iter().enumerate().map(|(k, p)| Some((vec![k], p.x, p.y))).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            let Some((ma, xa, ya)) = &groups[a] else { continue };
            for (b, g) in groups.iter().enumerate().skip(a + 1) {
                let Some((mb, xb, yb)) = g else { continue };
                if ma.len() + mb.len() > max_size {
                    continue;
                }
                let d = (xa - xb).hypot(ya - yb);
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { break };
        let (mb, _, _) = groups[b].take().unwrap();
        let (ma, _, _) = groups[a].take().unwrap();
        let mut members: Vec<usize> = ma.into_iter().chain(mb).collect();
        members.sort_unstable();
        let cx = members.iter().map(|&k| homes[k].x).sum::<f64>() / members.len() as f64;
        let cy = members.iter().map(|&k| homes[k].y).sum::<f64>() / members.len() as f64;
        groups[a] = Some((members, cx, cy));
    }
    let mut out: Vec<Vec<usize>> = groups.into_iter().flatten().map(|g| g.0).collect();
    out.sort();
    out
}

/// Member location minimizing the summed round-trip distance to the other
/// members; ties go to the smallest location id.
pub fn select_local_depot(members: &[usize], dist: impl Fn(usize, usize) -> i64) -> usize {
    assert!(!members.is_empty(), "local depot of an empty cluster");
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted
        .iter()
        .map(|&i| {
            let total: i64 = sorted.iter().filter(|&&j| j != i).map(|&j| dist(i, j) + dist(j, i)).sum();
            (total, i)
        })
        .min()
        .map(|(_, i)| i)
        .unwrap()
}

/// Clusters the commuters of `inst` by home location and assigns each
/// cluster its local depot.
pub fn cluster_commuters(inst: &Instance, max_size: usize) -> Vec<Cluster> {
    let homes: Vec<Point> = inst.commuters.iter().map(|c| inst.locations[c.home]).collect();
    cluster_points(&homes, max_size)
        .into_iter()
        .map(|g| {
            let members: Vec<usize> = g.iter().map(|&k| k + 1).collect();
            let locs: Vec<usize> = members.iter().map(|&id| inst.commuters[id - 1].home).collect();
            let local_depot = select_local_depot(&locs, |a, b| inst.loc_dist(a, b));
            Cluster { members, local_depot }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DepotConfig {
    #[default]
    Central,
    Local,
}

impl std::str::FromStr for DepotConfig {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" => Ok(DepotConfig::Central),
            "local" => Ok(DepotConfig::Local),
            _ => Err(format!("unknown depot configuration `{s}` (expected central or local)")),
        }
    }
}

/// Sub-instances, one per cluster, served from the central depot of `inst`
/// or from each cluster's local depot.
pub fn cluster_instances(inst: &Instance, max_size: usize, depot: DepotConfig) -> Result<Vec<Instance>, ModelError> {
    cluster_commuters(inst, max_size)
        .into_iter()
        .map(|c| {
            let d = match depot {
                DepotConfig::Central => inst.depot,
                DepotConfig::Local => c.local_depot,
            };
            inst.subset(&c.members, d)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::triangle_violation;

    #[test]
    fn generator_is_deterministic() {
        let cfg = GeneratorConfig { seed: 11, n: 12, ..Default::default() };
        let a = serde_json::to_string(&generate_file(&cfg)).unwrap();
        let b = serde_json::to_string(&generate_file(&cfg)).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&generate_file(&GeneratorConfig { seed: 12, ..cfg })).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_times_stay_in_their_ranges() {
        let cfg = GeneratorConfig { seed: 3, n: 200, ..Default::default() };
        let f = generate_file(&cfg);
        for c in &f.commuters {
            assert!((6 * 3600..=9 * 3600).contains(&c.desired_arrival));
            assert!((16 * 3600..=19 * 3600).contains(&c.desired_departure));
            let p = f.locations[c.home];
            let r = p.x.hypot(p.y);
            assert!(r >= cfg.inner_radius_m - 1.0 && r <= cfg.outer_radius_m + 1.0);
        }
    }

    #[test]
    fn matrices_pass_triangle_audit_for_both_metrics() {
        for metric in [Metric::Euclidean, Metric::Manhattan] {
            let cfg = GeneratorConfig { seed: 5, n: 50, metric, ..Default::default() };
            let f = generate_file(&cfg);
            let (t, d) = matrices(&f.locations, metric, cfg.speed_mps);
            let l = f.locations.len();
            assert_eq!(triangle_violation(&t, l), None);
            assert_eq!(triangle_violation(&d, l), None);
        }
    }

    #[test]
    fn collinear_integer_points_keep_exact_distances() {
        let pts = [Point { x: 0.0, y: 0.0 }, Point { x: 3.0, y: 4.0 }, Point { x: 6.0, y: 8.0 }];
        let (_, d) = matrices(&pts, Metric::Euclidean, 1.0);
        assert_eq!((d[1], d[2], d[5]), (5, 10, 5));
    }

    #[test]
    fn clustering_examples() {
        let blob = |cx: f64| (0..3).map(move |k| Point { x: cx + k as f64, y: 0.0 });
        let pts: Vec<Point> = blob(0.0).chain(blob(1000.0)).collect();
        assert_eq!(cluster_points(&pts, 3), vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(cluster_points(&pts, 6).len(), 1);
        assert_eq!(cluster_points(&pts, 1).len(), 6);
    }

    #[test]
    fn local_depot_examples() {
        let pos = [0i64, 1, 10];
        let d = |a: usize, b: usize| (pos[a] - pos[b]).abs();
        assert_eq!(select_local_depot(&[0, 1, 2], d), 1);
        assert_eq!(select_local_depot(&[2], d), 2);
        let sq = [(0, 0), (0, 1), (1, 1), (1, 0)];
        let d = |a: usize, b: usize| ((sq[a].0 - sq[b].0) as i64).abs() + ((sq[a].1 - sq[b].1) as i64).abs();
        assert_eq!(select_local_depot(&[3, 2, 1, 0], d), 0);
    }
}
