//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowsim::config::ExperimentConfig;
use rowsim::geo::central_meridian;
use rowsim::localization::{build_likelihood_field, FilterConfig, ParticleFilter, SensorOffset};
use rowsim::mapping::{CellState, TernaryMap};
use rowsim::planner::{
    inflate, plan_cells, plan_local_dwa, Costmap, DwaConfig, DwaLimits, DwaStatus, Footprint, InflationParams, LETHAL,
    MAX_TRAVERSABLE,
};
use rowsim::robot::{step_kinematics, RobotState, Twist};
use rowsim::sensors::{lidar_pose_2d, simulate_lidar, simulate_odometry};
use rowsim::world::FarmWorld;

// ------------------------------------------------------------------ geo

const A: f64 = 6_378_137.0;
const F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;

/// Transverse Mercator forward projection, classic USGS power series in
/// A = (λ - λ0) cos φ.
pub fn usgs_forward(lat: f64, lon: f64, zone: u8) -> (f64, f64) {
    let e2 = F * (2.0 - F);
    let ep2 = e2 / (1.0 - e2);
    let phi = lat.to_radians();
    let (s, c) = phi.sin_cos();
    let t = (s / c).powi(2);
    let cc = ep2 * c * c;
    let n = A / (1.0 - e2 * s * s).sqrt();
    let a = (lon - central_meridian(zone)).to_radians() * c;
    let e4 = e2 * e2;
    let e6 = e4 * e2;
    let m = A
        * ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * phi
            - (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * (2.0 * phi).sin()
            + (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * (4.0 * phi).sin()
            - (35.0 * e6 / 3072.0) * (6.0 * phi).sin());
    let x = K0
        * n
        * (a + (1.0 - t + cc) * a.powi(3) / 6.0
            + (5.0 - 18.0 * t + t * t + 72.0 * cc - 58.0 * ep2) * a.powi(5) / 120.0);
    let y = K0
        * (m + n
            * (s / c)
            * (a * a / 2.0
                + (5.0 - t + 9.0 * cc + 4.0 * cc * cc) * a.powi(4) / 24.0
                + (61.0 - 58.0 * t + t * t + 600.0 * cc - 330.0 * ep2) * a.powi(6) / 720.0));
    let northing = if lat < 0.0 { y + 10_000_000.0 } else { y };
    (x + 500_000.0, northing)
}

// ------------------------------------------------------------- planners

/// Exact comparison of a1 + b1·√2 with a2 + b2·√2.
pub fn cmp_exact(p: (i64, i64), q: (i64, i64)) -> Ordering {
    let (x, y) = ((p.0 - q.0) as i128, (p.1 - q.1) as i128);
    match (x.signum(), y.signum()) {
        (0, 0) => Ordering::Equal,
        (sx, sy) if sx >= 0 && sy >= 0 => Ordering::Greater,
        (sx, sy) if sx <= 0 && sy <= 0 => Ordering::Less,
        (sx, _) => {
            let (l, r) = (x * x, 2 * y * y);
            if sx > 0 {
                l.cmp(&r)
            } else {
                r.cmp(&l)
            }
        }
    }
}

/// O(n²) Dijkstra with its own move rule: 8-connected, diagonal only when
/// both side cells are passable, step weight (128 + cost of the entered cell).
pub fn dijkstra(cost: &[u8], w: usize, h: usize, s: (usize, usize), g: (usize, usize)) -> Option<(i64, i64)> {
    let pass = |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && cost[y as usize * w + x as usize] <= MAX_TRAVERSABLE;
    let mut dist: Vec<Option<(i64, i64)>> = vec![None; w * h];
    let mut done = vec![false; w * h];
    dist[s.1 * w + s.0] = Some((0, 0));
    loop {
        let mut pick = None;
        for i in 0..w * h {
            if let (false, Some(d)) = (done[i], dist[i]) {
                if pick.is_none_or(|(_, b)| cmp_exact(d, b) == Ordering::Less) {
                    pick = Some((i, d));
                }
            }
        }
        let (i, d) = pick?;
        if i == g.1 * w + g.0 {
            return Some(d);
        }
        done[i] = true;
        let (x, y) = ((i % w) as i64, (i / w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy) == (0, 0) || !pass(x + dx, y + dy) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(pass(x + dx, y) && pass(x, y + dy)) {
                    continue;
                }
                let j = (y + dy) as usize * w + (x + dx) as usize;
                let step = 128 + cost[j] as i64;
                let cand = if diag { (d.0, d.1 + step) } else { (d.0 + step, d.1) };
                if dist[j].is_none_or(|old| cmp_exact(cand, old) == Ordering::Less) {
                    dist[j] = Some(cand);
                }
            }
        }
    }
}

/// Random 40x40 costmaps; returns (instances, solvable, mismatches).
pub fn astar_vs_dijkstra(seed: u64, maps: usize) -> (usize, usize, Vec<String>) {
    let (w, h) = (40, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut reachable, mut bad) = (0, Vec::new());
    for k in 0..maps {
        let density = rng.random_range(0.0..0.35);
        let cost: Vec<u8> = (0..w * h)
            .map(|_| {
                if rng.random_bool(density) {
                    LETHAL
                } else if rng.random_bool(0.3) {
                    rng.random_range(1..=MAX_TRAVERSABLE)
                } else {
                    0
                }
            })
            .collect();
        let cm = Costmap::from_costs(w, h, 0.05, (0.0, 0.0), cost.clone());
        let free: Vec<usize> = (0..w * h).filter(|&i| cost[i] <= MAX_TRAVERSABLE).collect();
        let s = free[rng.random_range(0..free.len())];
        let g = free[rng.random_range(0..free.len())];
        let (s, g) = ((s % w, s / w), (g % w, g / w));
        let oracle = dijkstra(&cost, w, h, s, g);
        match plan_cells(&cm, s, g) {
            Ok(path) => {
                reachable += 1;
                let ends_ok = path.cells.first() == Some(&s) && path.cells.last() == Some(&g);
                if Some((path.cost.a, path.cost.b)) != oracle || !ends_ok {
                    bad.push(format!("map {k}: planner {:?} vs oracle {oracle:?}", (path.cost.a, path.cost.b)));
                }
            }
            Err(_) if oracle.is_some() => bad.push(format!("map {k}: planner failed, oracle {oracle:?}")),
            Err(_) => {}
        }
    }
    (maps, reachable, bad)
}

pub const HALF_L: f64 = 0.495;
pub const HALF_W: f64 = 0.335;

/// Lethal cell centres inside the body rectangle at this pose.
pub fn body_hits(pose: (f64, f64, f64), lethal: &[(f64, f64)], margin: f64) -> bool {
    let (s, c) = pose.2.sin_cos();
    lethal.iter().any(|&(ox, oy)| {
        let (dx, dy) = (ox - pose.0, oy - pose.1);
        let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
        lx.abs() <= HALF_L + margin && ly.abs() <= HALF_W + margin
    })
}

/// Closed-form constant-twist motion.
pub fn pose_at(x: f64, y: f64, th: f64, v: f64, w: f64, t: f64) -> (f64, f64, f64) {
    if w.abs() < 1e-12 {
        (x + v * t * th.cos(), y + v * t * th.sin(), th)
    } else {
        let r = v / w;
        let th2 = th + w * t;
        (x + r * (th2.sin() - th.sin()), y - r * (th2.cos() - th.cos()), th2)
    }
}

#[derive(Debug, Default)]
pub struct DwaSweep {
    pub scenes: usize,
    pub moving: usize,
    pub collisions: Vec<String>,
}

/// Random cluttered scenes; every returned command is integrated in closed
/// form and checked against the raw obstacle cells.
pub fn dwa_scenes(seed: u64, count: usize) -> DwaSweep {
    let (w, h, res) = (100, 100, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DwaConfig {
        footprint: Some(Footprint {
            half_length: HALF_L,
            half_width: HALF_W,
            padding: 0.08,
        }),
        ..DwaConfig::default()
    };
    let lim = DwaLimits {
        max_speed: 0.5,
        max_yaw_rate: 1.5,
        max_accel: 1.0,
        max_yaw_accel: 2.0,
    };
    let steps = (cfg.sim_horizon / cfg.dt).round() as usize;
    let mut out = DwaSweep::default();
    while out.scenes < count {
        let mut cells = vec![CellState::Free; w * h];
        for _ in 0..rng.random_range(0..6) {
            let (cx, cy, r) = (rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.05..0.5));
            for (i, c) in cells.iter_mut().enumerate() {
                let (px, py) = (((i % w) as f64 + 0.5) * res, ((i / w) as f64 + 0.5) * res);
                if (px - cx).hypot(py - cy) <= r {
                    *c = CellState::Occupied;
                }
            }
        }
        for _ in 0..rng.random_range(0..40) {
            cells[rng.random_range(0..w * h)] = CellState::Occupied;
        }
        let map = TernaryMap {
            width: w,
            height: h,
            resolution: res,
            origin: (0.0, 0.0),
            cells: cells.clone(),
        };
        let cm = inflate(&map, &InflationParams::default());
        let lethal: Vec<(f64, f64)> = (0..w * h)
            .filter(|&i| cells[i] == CellState::Occupied)
            .map(|i| (((i % w) as f64 + 0.5) * res, ((i / w) as f64 + 0.5) * res))
            .collect();
        let start = (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(-3.14..3.14));
        if body_hits(start, &lethal, 0.2) || !cm.is_safe(start.0, start.1) {
            continue;
        }
        out.scenes += 1;
        let state = RobotState {
            v: rng.random_range(0.0..0.5),
            omega: rng.random_range(-1.0..1.0),
            ..RobotState::at(start.0, start.1, start.2)
        };
        let goal = (rng.random_range(0.2..4.8), rng.random_range(0.2..4.8));
        let res = match plan_local_dwa(&state, &[(start.0, start.1), goal], &cm, &cfg, &lim) {
            Ok(r) => r,
            Err(e) => {
                out.collisions.push(format!("scene {}: planner error {e}", out.scenes));
                continue;
            }
        };
        if res.status == DwaStatus::Ok && res.cmd.v > 0.0 {
            out.moving += 1;
        }
        for k in 1..=steps {
            let p = pose_at(start.0, start.1, start.2, res.cmd.v, res.cmd.omega, k as f64 * cfg.dt);
            if body_hits(p, &lethal, 0.0) {
                out.collisions.push(format!("scene {}: {:?} hits at step {k}", out.scenes, res.cmd));
                break;
            }
        }
    }
    out
}

// --------------------------------------------------------- localization

/// Final position error of one tracking trial: uniform start box of
/// ±0.5 m / ±10° around the truth, then 20 predict/correct cycles driving
/// up a corridor at 0.5 m/s.
pub fn localization_trial(cfg: &ExperimentConfig, world: &FarmWorld, map: &TernaryMap, trial: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10ca1 + trial);
    let farm = &world.config;
    let corridors = farm.n_rows - 1;
    let k = rng.random_range(0..corridors);
    let x = 0.5 * (farm.row_x(k) + farm.row_x(k + 1));
    let y = rng.random_range(farm.row_start_y() + 1.0..farm.row_end_y() - 4.0);
    let yaw = std::f64::consts::FRAC_PI_2;
    let fc = FilterConfig::default();
    let field = build_likelihood_field(map, fc.sigma_hit, fc.floor).expect("likelihood field");
    let (ox, oy, oyaw) = lidar_pose_2d(&RobotState::at(0.0, 0.0, 0.0), &cfg.sensors.lidar);
    let offset = SensorOffset { x: ox, y: oy, yaw: oyaw };
    let mut pf = ParticleFilter::new(fc, field, offset, ChaCha8Rng::seed_from_u64(trial));
    pf.init_uniform(x, y, yaw, 0.5, 10f64.to_radians());
    let mut truth = RobotState {
        v: 0.5,
        ..RobotState::at(x, y, yaw)
    };
    let dt = 0.2;
    for _ in 0..20 {
        let next = step_kinematics(&truth, Twist::new(0.5, 0.0), dt, &cfg.robot).expect("kinematics");
        let odom = simulate_odometry(&truth, &next, &cfg.sensors.odometry, &mut rng);
        let scan = simulate_lidar(world, &next, &cfg.sensors.lidar, Some(&mut rng));
        pf.predict(&odom);
        let _ = pf.correct(&scan);
        truth = next;
    }
    let e = pf.estimate().expect("estimate");
    (e.x - truth.x).hypot(e.y - truth.y)
}

// -------------------------------------------------------------- metrics

/// Smallest distance by exhaustive scan, written independently.
pub fn brute_errors(planned: &[(f64, f64)], actual: &[(f64, f64)]) -> Vec<f64> {
    planned
        .iter()
        .map(|p| {
            actual
                .iter()
                .map(|a| ((p.0 - a.0).powi(2) + (p.1 - a.1).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// (AE, RMSE, CR%) straight from the definitions.
pub fn brute_aggregate(e: &[f64], r: f64) -> (f64, f64, f64) {
    let n = e.len() as f64;
    let mut s = 0.0;
    let mut s2 = 0.0;
    let mut hit = 0.0;
    for &v in e {
        s += v;
        s2 += v * v;
        if v <= r {
            hit += 1.0;
        }
    }
    (s / n, (s2 / n).sqrt(), 100.0 * hit / n)
}
