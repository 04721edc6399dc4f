//! Log-odds occupancy grid built from lidar scans taken at known poses.

use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::robot::RobotState;
use crate::sensors::{lidar_pose_2d, simulate_lidar, LidarScan, LidarSpec};
use crate::world::FarmWorld;

/// Cell values are kept on a 1e-4 lattice so the text format round-trips
/// bit-exactly.
fn quantize(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Map coordinates of the outer corner of cell (0, 0).
    pub origin: (f64, f64),
    cells: Vec<f64>,
    pub occupied_threshold: f64,
    pub free_threshold: f64,
    /// Magnitude limit applied by every update.
    pub clamp: f64,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64)) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![0.0; width * height],
            occupied_threshold: 0.6,
            free_threshold: -1.2,
            clamp: 5.0,
        }
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.cells[cy * self.width + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, v: f64) {
        let i = cy * self.width + cx;
        self.cells[i] = quantize(v);
    }

    fn add(&mut self, cx: usize, cy: usize, dv: f64) {
        let i = cy * self.width + cx;
        self.cells[i] = quantize((self.cells[i] + dv).clamp(-self.clamp, self.clamp));
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin.0 + (cx as f64 + 0.5) * self.resolution,
            self.origin.1 + (cy as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing a map point, if inside the grid.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = (x - self.origin.0) / self.resolution;
        let fy = (y - self.origin.1) / self.resolution;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (cx, cy) = (fx.floor() as usize, fy.floor() as usize);
        (cx < self.width && cy < self.height).then_some((cx, cy))
    }

    pub fn same_geometry(&self, other: &OccupancyGrid) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.resolution == other.resolution
            && self.origin == other.origin
    }
}

/// Update constants for scan integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub log_odds_hit: f64,
    pub log_odds_miss: f64,
    pub clamp: f64,
    /// Cells up to this distance past the endpoint also receive the hit
    /// update (assumed obstacle thickness). Zero marks only the endpoint.
    pub obstacle_depth: f64,
    /// Beams are only traced this far; `None` traces to the full range.
    pub raytrace_range: Option<f64>,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            log_odds_hit: 0.85,
            log_odds_miss: -0.4,
            clamp: 5.0,
            obstacle_depth: 0.0,
            raytrace_range: None,
        }
    }
}

/// Cells crossed by the segment from `a` to `b`, in traversal order.
///
/// Exact grid walk: every cell whose interior the continuous segment touches
/// is visited once. When the segment passes exactly through a cell corner the
/// side cell with the lower linear index is visited before the diagonal one.
/// Cells outside the grid end the walk.
pub fn traverse(grid: &OccupancyGrid, a: (f64, f64), b: (f64, f64)) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let res = grid.resolution;
    let fx = (a.0 - grid.origin.0) / res;
    let fy = (a.1 - grid.origin.1) / res;
    let gx = (b.0 - grid.origin.0) / res;
    let gy = (b.1 - grid.origin.1) / res;
    let (w, h) = (grid.width as i64, grid.height as i64);
    let mut cx = fx.floor() as i64;
    let mut cy = fy.floor() as i64;
    let end_x = gx.floor() as i64;
    let end_y = gy.floor() as i64;
    let dx = gx - fx;
    let dy = gy - fy;
    let sx: i64 = if dx > 0.0 { 1 } else { -1 };
    let sy: i64 = if dy > 0.0 { 1 } else { -1 };
    let inside = |x: i64, y: i64| x >= 0 && y >= 0 && x < w && y < h;
    // parametric distance (0..1) to the next vertical / horizontal grid line
    let mut t_max_x = if dx == 0.0 {
        f64::INFINITY
    } else {
        let next = if dx > 0.0 { cx as f64 + 1.0 } else { cx as f64 };
        (next - fx) / dx
    };
    let mut t_max_y = if dy == 0.0 {
        f64::INFINITY
    } else {
        let next = if dy > 0.0 { cy as f64 + 1.0 } else { cy as f64 };
        (next - fy) / dy
    };
    let t_dx = if dx == 0.0 { f64::INFINITY } else { 1.0 / dx.abs() };
    let t_dy = if dy == 0.0 { f64::INFINITY } else { 1.0 / dy.abs() };
    let max_steps = ((end_x - cx).abs() + (end_y - cy).abs()) as usize + 2;
    for _ in 0..=max_steps {
        if !inside(cx, cy) {
            break;
        }
        out.push((cx as usize, cy as usize));
        if (cx == end_x && cy == end_y) || t_max_x.min(t_max_y) > 1.0 {
            break;
        }
        if t_max_x < t_max_y {
            cx += sx;
            t_max_x += t_dx;
        } else if t_max_y < t_max_x {
            cy += sy;
            t_max_y += t_dy;
        } else {
            // exact corner: visit the lower-index side cell, then the diagonal
            let via_x = cy * w + (cx + sx);
            let via_y = (cy + sy) * w + cx;
            let (px, py) = if via_x <= via_y { (cx + sx, cy) } else { (cx, cy + sy) };
            if inside(px, py) {
                out.push((px as usize, py as usize));
            }
            cx += sx;
            cy += sy;
            t_max_x += t_dx;
            t_max_y += t_dy;
        }
    }
    out
}

/// Folds one scan into the grid. `pose` is the sensor's (x, y, yaw) in the
/// map frame; beam angles in the scan are relative to that yaw.
pub fn integrate_scan(
    grid: &mut OccupancyGrid,
    pose: (f64, f64, f64),
    scan: &LidarScan,
    model: &SensorModel,
) -> Result<()> {
    let (px, py, yaw) = pose;
    if grid.world_to_cell(px, py).is_none() {
        return Err(Error::OutsideGrid { x: px, y: py });
    }
    grid.clamp = model.clamp;
    let trace_limit = model.raytrace_range.unwrap_or(f64::INFINITY);
    for (&angle, &range) in scan.angles.iter().zip(&scan.ranges) {
        let (s, c) = (yaw + angle).sin_cos();
        let is_hit = range < scan.max_range;
        let traced = range.min(trace_limit);
        let end = (px + c * traced, py + s * traced);
        let cells = traverse(grid, (px, py), end);
        let hit_in_reach = is_hit && range <= trace_limit;
        let n = cells.len();
        for (k, &(cx, cy)) in cells.iter().enumerate() {
            let is_endpoint = k + 1 == n && hit_in_reach && grid.world_to_cell(end.0, end.1) == Some((cx, cy));
            if is_endpoint {
                grid.add(cx, cy, model.log_odds_hit);
            } else {
                grid.add(cx, cy, model.log_odds_miss);
            }
        }
        if hit_in_reach && model.obstacle_depth > 0.0 {
            let beyond = (px + c * (range + model.obstacle_depth), py + s * (range + model.obstacle_depth));
            let deep = traverse(grid, end, beyond);
            for &(cx, cy) in deep.iter().skip(1) {
                grid.add(cx, cy, model.log_odds_hit);
            }
        }
    }
    Ok(())
}

/// Known-pose survey: simulates a scan at every base pose and folds it in.
/// Poses outside the grid are skipped.
pub fn map_along_route(
    grid: &mut OccupancyGrid,
    world: &FarmWorld,
    lidar: &LidarSpec,
    poses: &[(f64, f64, f64)],
    model: &SensorModel,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<usize> {
    let mut used = 0;
    for &(x, y, yaw) in poses {
        let state = RobotState::at(x, y, yaw);
        let scan = simulate_lidar(world, &state, lidar, rng.as_deref_mut());
        match integrate_scan(grid, lidar_pose_2d(&state, lidar), &scan, model) {
            Ok(()) => used += 1,
            Err(Error::OutsideGrid { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(used)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Occupied,
    Free,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TernaryMap {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub cells: Vec<CellState>,
}

impl TernaryMap {
    pub fn get(&self, cx: usize, cy: usize) -> CellState {
        self.cells[cy * self.width + cx]
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin.0 + (cx as f64 + 0.5) * self.resolution,
            self.origin.1 + (cy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }
}

pub fn threshold_map(grid: &OccupancyGrid) -> TernaryMap {
    let cells = grid
        .cells
        .iter()
        .map(|&v| {
            if v >= grid.occupied_threshold {
                CellState::Occupied
            } else if v <= grid.free_threshold {
                CellState::Free
            } else {
                CellState::Unknown
            }
        })
        .collect();
    TernaryMap {
        width: grid.width,
        height: grid.height,
        resolution: grid.resolution,
        origin: grid.origin,
        cells,
    }
}

/// Intersection-over-union of the occupied sets of two same-sized maps.
pub fn occupied_iou(a: &TernaryMap, b: &TernaryMap) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.cells.iter().zip(&b.cells) {
        let (ox, oy) = (*x == CellState::Occupied, *y == CellState::Occupied);
        inter += (ox && oy) as usize;
        union += (ox || oy) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn map_to_string(grid: &OccupancyGrid) -> String {
    let mut out = String::with_capacity(grid.cells.len() * 8 + 64);
    let _ = writeln!(
        out,
        "{} {} {} {} {}",
        grid.width, grid.height, grid.resolution, grid.origin.0, grid.origin.1
    );
    for row in grid.cells.chunks(grid.width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn map_from_str(text: &str, path: &Path) -> Result<OccupancyGrid> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(Error::parse(path, hline, "header needs `width height resolution origin_x origin_y`"));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, hline, format!("{s}: {e}")));
    let real = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, hline, format!("{s}: {e}")));
    let width = int(fields[0])?;
    let height = int(fields[1])?;
    let resolution = real(fields[2])?;
    if !(resolution > 0.0) {
        return Err(Error::parse(path, hline, "resolution must be positive"));
    }
    let mut grid = OccupancyGrid::new(width, height, resolution, (real(fields[3])?, real(fields[4])?));
    let mut last_line = hline;
    for cy in 0..height {
        let (ln, row) = lines.next().ok_or_else(|| {
            Error::parse(path, last_line + 1, format!("truncated: expected {height} rows, found {cy}"))
        })?;
        last_line = ln;
        let vals: Vec<&str> = row.split_whitespace().collect();
        if vals.len() != width {
            return Err(Error::parse(path, ln, format!("expected {width} values, found {}", vals.len())));
        }
        for (cx, v) in vals.iter().enumerate() {
            let v = v
                .parse::<f64>()
                .map_err(|e| Error::parse(path, ln, format!("{v}: {e}")))?;
            grid.cells[cy * width + cx] = v;
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(path, ln, "unexpected data after the last grid row"));
    }
    Ok(grid)
}

pub fn save_map(grid: &OccupancyGrid, path: &Path) -> Result<()> {
    std::fs::write(path, map_to_string(grid)).map_err(|e| Error::io(path, e))
}

pub fn load_map(path: &Path) -> Result<OccupancyGrid> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    map_from_str(&text, path)
}
