//! Costmap inflation, A* global planning and a dynamic-window local planner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::localization::squared_distance_transform;
use crate::mapping::{CellState, TernaryMap};
use crate::math::normalize_angle;
use crate::robot::{arc_displacement, RobotState, Twist};

pub const LETHAL: u8 = 254;
pub const INSCRIBED: u8 = 253;
/// Highest cost a path may cross.
pub const MAX_TRAVERSABLE: u8 = 252;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationParams {
    pub inscribed_radius: f64,
    pub inflation_radius: f64,
    pub cost_decay: f64,
    pub unknown_is_lethal: bool,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self {
            inscribed_radius: 0.335,
            inflation_radius: 0.55,
            cost_decay: 10.0,
            unknown_is_lethal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub cost: Vec<u8>,
    pub params: InflationParams,
    /// Metric distance from each cell centre to the nearest lethal cell.
    pub clearance: Vec<f64>,
}

impl Costmap {
    /// Wraps raw cell costs; clearance is measured to the lethal cells.
    pub fn from_costs(width: usize, height: usize, resolution: f64, origin: (f64, f64), cost: Vec<u8>) -> Self {
        assert_eq!(cost.len(), width * height, "cost grid size");
        let seeds: Vec<bool> = cost.iter().map(|&c| c == LETHAL).collect();
        let clearance = squared_distance_transform(width, height, &seeds)
            .iter()
            .map(|d| d.sqrt() * resolution)
            .collect();
        Self {
            width,
            height,
            resolution,
            origin,
            cost,
            params: InflationParams::default(),
            clearance,
        }
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn get(&self, cx: usize, cy: usize) -> u8 {
        self.cost[cy * self.width + cx]
    }

    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin.0 + (cx as f64 + 0.5) * self.resolution,
            self.origin.1 + (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cost under a map point; lethal outside the grid.
    pub fn cost_at(&self, x: f64, y: f64) -> u8 {
        self.world_to_cell(x, y).map_or(LETHAL, |(cx, cy)| self.get(cx, cy))
    }

    /// True when the robot centre may occupy this point.
    pub fn is_safe(&self, x: f64, y: f64) -> bool {
        self.cost_at(x, y) <= MAX_TRAVERSABLE
    }

    pub fn clearance_at(&self, x: f64, y: f64) -> f64 {
        self.world_to_cell(x, y)
            .map_or(0.0, |(cx, cy)| self.clearance[self.index(cx, cy)])
    }

    /// Nearest traversable cell to a point, searching outwards ring by ring.
    pub fn nearest_safe_cell(&self, x: f64, y: f64, max_rings: usize) -> Option<(usize, usize)> {
        let fx = ((x - self.origin.0) / self.resolution).floor() as i64;
        let fy = ((y - self.origin.1) / self.resolution).floor() as i64;
        for ring in 0..=max_rings as i64 {
            let mut best: Option<(f64, usize, usize)> = None;
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs().max(dy.abs()) != ring {
                        continue;
                    }
                    let (cx, cy) = (fx + dx, fy + dy);
                    if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
                        continue;
                    }
                    let (cx, cy) = (cx as usize, cy as usize);
                    if self.get(cx, cy) > MAX_TRAVERSABLE {
                        continue;
                    }
                    let (px, py) = self.cell_center(cx, cy);
                    let d = (px - x).hypot(py - y);
                    if best.is_none_or(|b| d < b.0) {
                        best = Some((d, cx, cy));
                    }
                }
            }
            if let Some((_, cx, cy)) = best {
                return Some((cx, cy));
            }
        }
        None
    }
}

/// Inflation cost at metric distance `d` from the nearest lethal cell.
pub fn inflation_cost(d: f64, p: &InflationParams) -> u8 {
    if d <= 0.0 {
        LETHAL
    } else if d <= p.inscribed_radius {
        INSCRIBED
    } else if d <= p.inflation_radius {
        (252.0 * (-p.cost_decay * (d - p.inscribed_radius)).exp()).round() as u8
    } else {
        0
    }
}

pub fn inflate(map: &TernaryMap, params: &InflationParams) -> Costmap {
    let seeds: Vec<bool> = map
        .cells
        .iter()
        .map(|c| *c == CellState::Occupied || (params.unknown_is_lethal && *c == CellState::Unknown))
        .collect();
    let sq = squared_distance_transform(map.width, map.height, &seeds);
    let clearance: Vec<f64> = sq.iter().map(|d| d.sqrt() * map.resolution).collect();
    let cost = clearance.iter().map(|&d| inflation_cost(d, params)).collect();
    Costmap {
        width: map.width,
        height: map.height,
        resolution: map.resolution,
        origin: map.origin,
        cost,
        params: *params,
        clearance,
    }
}

/// Path cost in exact form: `(a + b·√2) / 128` cell units, where `a`
/// accumulates straight steps and `b` diagonal ones, each scaled by
/// `128 + cell cost`. Comparisons are exact integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ExactCost {
    pub a: i64,
    pub b: i64,
}

impl ExactCost {
    pub const ZERO: ExactCost = ExactCost { a: 0, b: 0 };

    pub fn add(self, o: ExactCost) -> ExactCost {
        ExactCost { a: self.a + o.a, b: self.b + o.b }
    }

    /// Value in cell units.
    pub fn value(self) -> f64 {
        (self.a as f64 + self.b as f64 * std::f64::consts::SQRT_2) / 128.0
    }
}

impl Ord for ExactCost {
    fn cmp(&self, o: &Self) -> Ordering {
        // sign of (a1 - a2) + (b1 - b2)√2
        let x = (self.a - o.a) as i128;
        let y = (self.b - o.b) as i128;
        let sx = x.signum();
        let sy = y.signum();
        if sx == 0 && sy == 0 {
            return Ordering::Equal;
        }
        if sx >= 0 && sy >= 0 {
            return Ordering::Greater;
        }
        if sx <= 0 && sy <= 0 {
            return Ordering::Less;
        }
        // opposite signs: compare x² with 2y²
        let lhs = x * x;
        let rhs = 2 * y * y;
        if sx > 0 {
            lhs.cmp(&rhs)
        } else {
            rhs.cmp(&lhs)
        }
    }
}

impl PartialOrd for ExactCost {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Cost of stepping onto a cell with the given inflation cost.
pub fn edge_cost(diagonal: bool, cell_cost: u8) -> ExactCost {
    let w = 128 + cell_cost as i64;
    if diagonal {
        ExactCost { a: 0, b: w }
    } else {
        ExactCost { a: w, b: 0 }
    }
}

/// Octile distance: the exact free-space cost between two cells.
pub fn octile(a: (usize, usize), b: (usize, usize)) -> ExactCost {
    let dx = (a.0 as i64 - b.0 as i64).abs();
    let dy = (a.1 as i64 - b.1 as i64).abs();
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    ExactCost { a: 128 * (hi - lo), b: 128 * lo }
}

/// 8-connected neighbours reachable from a cell. Diagonal moves are refused
/// when either adjacent side cell is blocked.
pub fn neighbors(cm: &Costmap, cx: usize, cy: usize) -> Vec<((usize, usize), ExactCost)> {
    let mut out = Vec::with_capacity(8);
    let free = |x: i64, y: i64| {
        x >= 0 && y >= 0 && (x as usize) < cm.width && (y as usize) < cm.height && cm.get(x as usize, y as usize) <= MAX_TRAVERSABLE
    };
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
            if !free(nx, ny) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal && !(free(cx as i64 + dx, cy as i64) && free(cx as i64, cy as i64 + dy)) {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            out.push(((nx, ny), edge_cost(diagonal, cm.get(nx, ny))));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub points: Vec<(f64, f64)>,
    pub cells: Vec<(usize, usize)>,
    pub cost: ExactCost,
}

impl Path {
    /// Total cost in metres of travel-equivalent.
    pub fn total_cost(&self, resolution: f64) -> f64 {
        self.cost.value() * resolution
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.points {
            let _ = writeln!(out, "{x:.4},{y:.4}");
        }
        out
    }
}

#[derive(PartialEq, Eq)]
struct Open {
    f: ExactCost,
    h: ExactCost,
    index: usize,
}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        o.f.cmp(&self.f)
            .then_with(|| o.h.cmp(&self.h))
            .then_with(|| o.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn endpoint_cell(cm: &Costmap, p: (f64, f64), which: &'static str) -> Result<(usize, usize)> {
    let c = cm.world_to_cell(p.0, p.1).ok_or(Error::InvalidEndpoint(which))?;
    if cm.get(c.0, c.1) > MAX_TRAVERSABLE {
        return Err(Error::InvalidEndpoint(which));
    }
    Ok(c)
}

/// A* between two map points over cell centres.
pub fn plan_global(cm: &Costmap, start: (f64, f64), goal: (f64, f64)) -> Result<Path> {
    let s = endpoint_cell(cm, start, "start")?;
    let g = endpoint_cell(cm, goal, "goal")?;
    plan_cells(cm, s, g)
}

pub fn plan_cells(cm: &Costmap, s: (usize, usize), g: (usize, usize)) -> Result<Path> {
    let n = cm.width * cm.height;
    let mut best: Vec<Option<ExactCost>> = vec![None; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let si = cm.index(s.0, s.1);
    let gi = cm.index(g.0, g.1);
    best[si] = Some(ExactCost::ZERO);
    let h0 = octile(s, g);
    heap.push(Open { f: h0, h: h0, index: si });
    while let Some(Open { index, .. }) = heap.pop() {
        if closed[index] {
            continue;
        }
        closed[index] = true;
        if index == gi {
            break;
        }
        let c = (index % cm.width, index / cm.width);
        let gc = best[index].expect("popped cells have a cost");
        for (nb, w) in neighbors(cm, c.0, c.1) {
            let ni = cm.index(nb.0, nb.1);
            if closed[ni] {
                continue;
            }
            let cand = gc.add(w);
            if best[ni].is_none_or(|b| cand < b) {
                best[ni] = Some(cand);
                parent[ni] = index;
                let h = octile(nb, g);
                heap.push(Open { f: cand.add(h), h, index: ni });
            }
        }
    }
    if !closed[gi] {
        return Err(Error::NoPath);
    }
    let mut cells = vec![g];
    let mut i = gi;
    while i != si {
        i = parent[i];
        cells.push((i % cm.width, i / cm.width));
    }
    cells.reverse();
    let points = cells.iter().map(|&(x, y)| cm.cell_center(x, y)).collect();
    Ok(Path {
        points,
        cells,
        cost: best[gi].expect("goal reached"),
    })
}

/// Projection of a point onto a polyline: (segment index, parameter, distance).
pub fn project_onto(points: &[(f64, f64)], p: (f64, f64)) -> (usize, f64, f64) {
    if points.len() < 2 {
        let q = points.first().copied().unwrap_or(p);
        return (0, 0.0, (q.0 - p.0).hypot(q.1 - p.1));
    }
    let mut best = (0, 0.0, f64::INFINITY);
    for (i, w) in points.windows(2).enumerate() {
        let (ax, ay) = w[0];
        let (bx, by) = w[1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 { 0.0 } else { (((p.0 - ax) * dx + (p.1 - ay) * dy) / len2).clamp(0.0, 1.0) };
        let d = (ax + t * dx - p.0).hypot(ay + t * dy - p.1);
        if d < best.2 {
            best = (i, t, d);
        }
    }
    best
}

/// Point `ahead` metres along the path past the robot's projection, or the
/// final point.
pub fn lookahead_point(points: &[(f64, f64)], p: (f64, f64), ahead: f64) -> (f64, f64) {
    if points.len() < 2 {
        return points.first().copied().unwrap_or(p);
    }
    let (mut i, t, _) = project_onto(points, p);
    let (ax, ay) = points[i];
    let (bx, by) = points[i + 1];
    let mut cur = (ax + t * (bx - ax), ay + t * (by - ay));
    let mut left = ahead;
    loop {
        let next = points[i + 1];
        let seg = (next.0 - cur.0).hypot(next.1 - cur.1);
        if seg >= left {
            let f = if seg > 0.0 { left / seg } else { 0.0 };
            return (cur.0 + f * (next.0 - cur.0), cur.1 + f * (next.1 - cur.1));
        }
        left -= seg;
        cur = next;
        i += 1;
        if i + 1 >= points.len() {
            return cur;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaConfig {
    pub sim_horizon: f64,
    pub dt: f64,
    pub v_samples: usize,
    pub w_samples: usize,
    pub weight_heading: f64,
    pub weight_clearance: f64,
    pub weight_velocity: f64,
    pub lookahead: f64,
    /// Clearance beyond this counts as fully clear.
    pub clearance_cap: f64,
    pub recovery_omega: f64,
    /// Rectangular body checked along each rollout in addition to the
    /// inscribed circle.
    pub footprint: Option<Footprint>,
}

/// Half extents of a rectangular body and the clearance it must
/// keep from lethal cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub half_length: f64,
    pub half_width: f64,
    pub padding: f64,
}

impl Footprint {
    /// Body-frame sample points covering the whole rectangle on a lattice
    /// no coarser than `step`, boundary included.
    pub fn samples(&self, step: f64) -> Vec<(f64, f64)> {
        let (a, b) = (self.half_length, self.half_width);
        let nx = ((2.0 * a) / step).ceil().max(1.0) as usize;
        let ny = ((2.0 * b) / step).ceil().max(1.0) as usize;
        let mut pts = Vec::with_capacity((nx + 1) * (ny + 1));
        for i in 0..=nx {
            let x = -a + 2.0 * a * i as f64 / nx as f64;
            for j in 0..=ny {
                pts.push((x, -b + 2.0 * b * j as f64 / ny as f64));
            }
        }
        pts
    }
}

/// True when every footprint sample keeps `padding` from the nearest lethal cell.
pub fn footprint_is_clear(pose: (f64, f64, f64), samples: &[(f64, f64)], padding: f64, cm: &Costmap) -> bool {
    let reach = samples.iter().map(|p| p.0.hypot(p.1)).fold(0.0, f64::max);
    if cm.world_to_cell(pose.0, pose.1).is_some() && cm.clearance_at(pose.0, pose.1) >= reach + padding + cm.resolution {
        return true;
    }
    let (s, c) = pose.2.sin_cos();
    samples.iter().all(|&(lx, ly)| {
        let (x, y) = (pose.0 + c * lx - s * ly, pose.1 + s * lx + c * ly);
        cm.world_to_cell(x, y).is_some() && cm.clearance_at(x, y) >= padding
    })
}

/// Smallest clearance of any footprint sample at `pose`.
pub fn footprint_clearance(pose: (f64, f64, f64), samples: &[(f64, f64)], cm: &Costmap) -> f64 {
    let (s, c) = pose.2.sin_cos();
    samples
        .iter()
        .map(|&(lx, ly)| {
            let (x, y) = (pose.0 + c * lx - s * ly, pose.1 + s * lx + c * ly);
            if cm.world_to_cell(x, y).is_some() {
                cm.clearance_at(x, y)
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

impl Default for DwaConfig {
    fn default() -> Self {
        Self {
            sim_horizon: 2.0,
            dt: 0.1,
            v_samples: 11,
            w_samples: 21,
            weight_heading: 0.6,
            weight_clearance: 0.1,
            weight_velocity: 0.3,
            lookahead: 2.0,
            clearance_cap: 0.15,
            recovery_omega: 0.5,
            footprint: None,
        }
    }
}

impl DwaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v_samples < 2 || self.w_samples < 2 || !(self.dt > 0.0) || !(self.sim_horizon > self.dt) {
            return Err(Error::Config("dwa needs >= 2 samples per axis and horizon > dt > 0".into()));
        }
        if [self.weight_heading, self.weight_clearance, self.weight_velocity].iter().any(|w| *w < 0.0) {
            return Err(Error::Config("dwa weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Velocity and acceleration bounds the local planner samples within.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaLimits {
    pub max_speed: f64,
    pub max_yaw_rate: f64,
    pub max_accel: f64,
    pub max_yaw_accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DwaStatus {
    Ok,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwaOutput {
    pub cmd: Twist,
    pub status: DwaStatus,
    pub score: f64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Poses along the constant-twist rollout, excluding the start.
pub fn rollout(state: &RobotState, cmd: Twist, cfg: &DwaConfig) -> Vec<(f64, f64, f64)> {
    let steps = (cfg.sim_horizon / cfg.dt).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(steps);
    let (mut x, mut y, mut th) = (state.x, state.y, state.yaw);
    let (fwd, left, dth) = arc_displacement(cmd.v, cmd.omega, cfg.dt);
    for _ in 0..steps {
        let (s, c) = th.sin_cos();
        x += c * fwd - s * left;
        y += s * fwd + c * left;
        th = normalize_angle(th + dth);
        out.push((x, y, th));
    }
    out
}

/// True when no rollout pose lands on a blocked cell.
pub fn rollout_is_safe(traj: &[(f64, f64, f64)], cm: &Costmap) -> bool {
    traj.iter().all(|&(x, y, _)| cm.is_safe(x, y))
}

/// The safety test the local planner applies: [`rollout_is_safe`] plus the
/// footprint when one is configured.
pub fn rollout_is_clear(traj: &[(f64, f64, f64)], cm: &Costmap, cfg: &DwaConfig) -> bool {
    if !rollout_is_safe(traj, cm) {
        return false;
    }
    match &cfg.footprint {
        None => true,
        Some(fp) => {
            let body = fp.samples(cm.resolution);
            traj.iter().all(|&p| footprint_is_clear(p, &body, fp.padding, cm))
        }
    }
}

/// The candidate commands of the dynamic window, in scoring order.
pub fn dynamic_window(state: &RobotState, cfg: &DwaConfig, lim: &DwaLimits) -> Vec<Twist> {
    let dv = lim.max_accel * cfg.dt;
    let dw = lim.max_yaw_accel * cfg.dt;
    let v_lo = (state.v - dv).max(0.0).min(lim.max_speed);
    let v_hi = (state.v + dv).min(lim.max_speed).max(v_lo);
    let w_lo = (state.omega - dw).max(-lim.max_yaw_rate);
    let w_hi = (state.omega + dw).min(lim.max_yaw_rate).max(w_lo);
    let mut ws = linspace(w_lo, w_hi, cfg.w_samples);
    if w_lo < 0.0 && w_hi > 0.0 && !ws.contains(&0.0) {
        ws.push(0.0);
    }
    let mut out = Vec::with_capacity(cfg.v_samples * ws.len());
    for v in linspace(v_lo, v_hi, cfg.v_samples) {
        for &w in &ws {
            out.push(Twist::new(v, w));
        }
    }
    out
}

pub fn plan_local_dwa(
    state: &RobotState,
    path: &[(f64, f64)],
    cm: &Costmap,
    cfg: &DwaConfig,
    lim: &DwaLimits,
) -> Result<DwaOutput> {
    if path.is_empty() {
        return Err(Error::Empty("reference path"));
    }
    let goal = lookahead_point(path, (state.x, state.y), cfg.lookahead);
    let bearing = (goal.1 - state.y).atan2(goal.0 - state.x);
    // a start pose already inside the padding only has to not get closer
    let body = cfg.footprint.map(|fp| {
        let samples = fp.samples(cm.resolution);
        let now = footprint_clearance((state.x, state.y, state.yaw), &samples, cm);
        (samples, fp.padding.min(now))
    });
    let body_clear = |traj: &[(f64, f64, f64)]| match &body {
        Some((o, pad)) => traj.iter().all(|&p| footprint_is_clear(p, o, *pad, cm)),
        None => true,
    };
    let mut scored = Vec::new();
    for cmd in dynamic_window(state, cfg, lim) {
        let traj = rollout(state, cmd, cfg);
        if !rollout_is_safe(&traj, cm) {
            continue;
        }
        let end = traj[traj.len() - 1];
        let to_goal = if (goal.0 - end.0).hypot(goal.1 - end.1) > 1e-6 {
            (goal.1 - end.1).atan2(goal.0 - end.0)
        } else {
            bearing
        };
        let heading = 1.0 - normalize_angle(to_goal - end.2).abs() / std::f64::consts::PI;
        let clearance = traj
            .iter()
            .map(|&(x, y, _)| cm.clearance_at(x, y) - cm.params.inscribed_radius)
            .fold(f64::INFINITY, f64::min)
            .clamp(0.0, cfg.clearance_cap)
            / cfg.clearance_cap;
        let velocity = cmd.v / lim.max_speed;
        let score = cfg.weight_heading * heading + cfg.weight_clearance * clearance + cfg.weight_velocity * velocity;
        scored.push((score, cmd, traj));
    }
    // best score first, smaller turn rate on ties; the footprint test is the
    // expensive part so it only runs until a candidate passes
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.omega.abs().total_cmp(&b.1.omega.abs())));
    let best = scored
        .into_iter()
        .find(|(_, _, traj)| body_clear(traj))
        .map(|(score, cmd, _)| (score, cmd));
    match best {
        Some((score, cmd)) => Ok(DwaOutput { cmd, status: DwaStatus::Ok, score }),
        None => {
            // turn in place toward the path, the other way if that sweeps
            // into something, stand still if both do
            let turn = normalize_angle(bearing - state.yaw);
            let w = if turn >= 0.0 { cfg.recovery_omega } else { -cfg.recovery_omega };
            let cmd = [w, -w]
                .into_iter()
                .map(|w| Twist::new(0.0, w))
                .find(|&c| {
                    let traj = rollout(state, c, cfg);
                    rollout_is_safe(&traj, cm) && body_clear(&traj)
                })
                .unwrap_or(Twist::ZERO);
            Ok(DwaOutput {
                cmd,
                status: DwaStatus::Recovery,
                score: f64::NEG_INFINITY,
            })
        }
    }
}
