//! Parametric cotton field: plant lattice, ground plane, geodetic anchor and
//! the ray caster every simulated sensor is built on.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geo::{GeoAnchor, GeoPoint};
use crate::mapping::OccupancyGrid;
use crate::math::{stream_rng, Vec3};

const BOLL_STREAM: u64 = 0x_b011;

/// Direction the planted rows run in. Rows are laid out along map +y and
/// stepped towards map -x (east to west when the map is aligned with UTM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowAxis {
    #[default]
    NorthSouth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmConfig {
    pub n_rows: usize,
    pub plants_per_row: usize,
    pub row_spacing: f64,
    pub plant_spacing: f64,
    pub plant_height: f64,
    pub plant_width: f64,
    pub row_axis: RowAxis,
    /// Map coordinates of the first plant (east-most row, south end).
    pub origin: (f64, f64),
    /// Stored for reference only; contact dynamics are not simulated.
    pub friction_primary: f64,
    pub friction_secondary: f64,
    pub bolls_per_plant: usize,
    pub seed: u64,
    /// Geodetic location of the map origin.
    pub anchor: GeoPoint,
    /// Rotation from UTM east to map +x, radians.
    pub map_heading: f64,
    /// Free space kept around the outermost plant edges.
    pub bounds_margin: f64,
}

impl Default for FarmConfig {
    fn default() -> Self {
        Self {
            n_rows: 9,
            plants_per_row: 20,
            row_spacing: 1.8,
            plant_spacing: 0.7,
            plant_height: 1.0,
            plant_width: 0.7,
            row_axis: RowAxis::NorthSouth,
            origin: (-9.0, 4.0),
            friction_primary: 100.0,
            friction_secondary: 50.0,
            bolls_per_plant: 12,
            seed: 7,
            anchor: GeoPoint {
                lat: 33.4552,
                lon: -88.7944,
            },
            map_heading: 0.0,
            bounds_margin: 3.0,
        }
    }
}

impl FarmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("farm: {m}")));
        if self.n_rows < 1 || self.plants_per_row < 1 {
            return bad("n_rows and plants_per_row must be at least 1");
        }
        for (name, v) in [
            ("row_spacing", self.row_spacing),
            ("plant_spacing", self.plant_spacing),
            ("plant_height", self.plant_height),
            ("plant_width", self.plant_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        if self.row_spacing <= self.plant_width {
            return bad("row_spacing must exceed plant_width");
        }
        if !(self.bounds_margin >= 0.0) {
            return bad("bounds_margin must be non-negative");
        }
        Ok(())
    }

    /// Map x of row `row` (row 0 is the east-most).
    pub fn row_x(&self, row: usize) -> f64 {
        self.origin.0 - row as f64 * self.row_spacing
    }

    pub fn row_start_y(&self) -> f64 {
        self.origin.1
    }

    pub fn row_end_y(&self) -> f64 {
        self.origin.1 + (self.plants_per_row - 1) as f64 * self.plant_spacing
    }

    pub fn row_length(&self) -> f64 {
        self.row_end_y() - self.row_start_y()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantInstance {
    pub row: usize,
    pub index: usize,
    pub center: (f64, f64),
    pub footprint_radius: f64,
    pub height: f64,
    pub boll_points: Vec<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }
}

/// What a ray (or a pixel) ends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SceneClass {
    Sky = 0,
    Ground = 1,
    Cotton = 2,
}

impl SceneClass {
    pub const ALL: [SceneClass; 3] = [SceneClass::Sky, SceneClass::Ground, SceneClass::Cotton];

    pub fn name(self) -> &'static str {
        match self {
            SceneClass::Sky => "sky",
            SceneClass::Ground => "ground",
            SceneClass::Cotton => "cotton",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub class: SceneClass,
    /// Distance along the ray; infinite for sky.
    pub range: f64,
    pub point: Vec3,
    /// Index into `FarmWorld::plants` for cotton hits.
    pub plant: Option<usize>,
}

/// Uniform bucket grid over plant footprints, used to keep ray casts local.
#[derive(Debug, Clone, PartialEq)]
struct PlantIndex {
    min_x: f64,
    min_y: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    max_height: f64,
    buckets: Vec<Vec<u32>>,
}

impl PlantIndex {
    fn build(plants: &[PlantInstance], cell: f64) -> Self {
        if plants.is_empty() {
            return Self {
                min_x: 0.0,
                min_y: 0.0,
                cell,
                nx: 0,
                ny: 0,
                max_height: 0.0,
                buckets: Vec::new(),
            };
        }
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for p in plants {
            min_x = min_x.min(p.center.0 - p.footprint_radius);
            min_y = min_y.min(p.center.1 - p.footprint_radius);
            max_x = max_x.max(p.center.0 + p.footprint_radius);
            max_y = max_y.max(p.center.1 + p.footprint_radius);
        }
        let nx = ((max_x - min_x) / cell).floor() as usize + 1;
        let ny = ((max_y - min_y) / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, p) in plants.iter().enumerate() {
            let r = p.footprint_radius;
            let i0 = ((p.center.0 - r - min_x) / cell).floor().max(0.0) as usize;
            let i1 = (((p.center.0 + r - min_x) / cell).floor() as usize).min(nx - 1);
            let j0 = ((p.center.1 - r - min_y) / cell).floor().max(0.0) as usize;
            let j1 = (((p.center.1 + r - min_y) / cell).floor() as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(k as u32);
                }
            }
        }
        let max_height = plants.iter().map(|p| p.height).fold(0.0_f64, f64::max);
        Self {
            min_x,
            min_y,
            cell,
            nx,
            ny,
            max_height,
            buckets,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarmWorld {
    pub config: FarmConfig,
    pub plants: Vec<PlantInstance>,
    pub ground_z: f64,
    pub geo_anchor: GeoAnchor,
    pub bounds: Bounds,
    index: PlantIndex,
}

pub fn generate_farm(config: &FarmConfig) -> Result<FarmWorld> {
    config.validate()?;
    let radius = config.plant_width / 2.0;
    let mut rng = stream_rng(config.seed, BOLL_STREAM);
    let mut plants = Vec::with_capacity(config.n_rows * config.plants_per_row);
    for row in 0..config.n_rows {
        let x = config.row_x(row);
        for index in 0..config.plants_per_row {
            let y = config.origin.1 + index as f64 * config.plant_spacing;
            // bolls sit on the canopy shell, upper 60% of the plant
            let boll_points = (0..config.bolls_per_plant)
                .map(|_| {
                    let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let z: f64 = rng.random_range(0.4..1.0) * config.plant_height;
                    Vec3::new(x + radius * az.cos(), y + radius * az.sin(), z)
                })
                .collect();
            plants.push(PlantInstance {
                row,
                index,
                center: (x, y),
                footprint_radius: radius,
                height: config.plant_height,
                boll_points,
            });
        }
    }
    let geo_anchor = GeoAnchor::new(config.anchor, config.map_heading)?;
    let m = radius + config.bounds_margin;
    let bounds = Bounds {
        min_x: config.row_x(config.n_rows - 1) - m,
        max_x: config.row_x(0) + m,
        min_y: config.row_start_y() - m,
        max_y: config.row_end_y() + m,
    };
    Ok(FarmWorld::from_parts(config.clone(), plants, geo_anchor, bounds))
}

impl FarmWorld {
    /// Assembles a world from explicit plants; used for hand-built scenes.
    pub fn from_parts(
        config: FarmConfig,
        plants: Vec<PlantInstance>,
        geo_anchor: GeoAnchor,
        bounds: Bounds,
    ) -> Self {
        let cell = plants
            .iter()
            .map(|p| 2.0 * p.footprint_radius)
            .fold(0.5_f64, f64::max);
        let index = PlantIndex::build(&plants, cell);
        Self {
            config,
            plants,
            ground_z: 0.0,
            geo_anchor,
            bounds,
            index,
        }
    }

    /// A world with no plants but the given bounds.
    pub fn empty(bounds: Bounds) -> Self {
        let config = FarmConfig::default();
        let anchor = GeoAnchor::new(config.anchor, 0.0).expect("default anchor is valid");
        Self::from_parts(config, Vec::new(), anchor, bounds)
    }

    /// Hand-built scene on the default anchor.
    pub fn with_plants(plants: Vec<PlantInstance>, bounds: Bounds) -> Self {
        let base = Self::empty(bounds);
        Self::from_parts(base.config, plants, base.geo_anchor, bounds)
    }

    /// True when the horizontal point lies inside any plant footprint.
    pub fn point_in_plant(&self, x: f64, y: f64) -> bool {
        self.plants_near(x, y, 0.0).next().is_some()
    }

    /// Plants whose footprint comes within `margin` of (x, y).
    pub fn plants_near(&self, x: f64, y: f64, margin: f64) -> impl Iterator<Item = &PlantInstance> {
        let idx = &self.index;
        let mut found: Vec<u32> = Vec::new();
        if idx.nx > 0 {
            let lo_i = ((x - margin - idx.min_x) / idx.cell).floor();
            let hi_i = ((x + margin - idx.min_x) / idx.cell).floor();
            let lo_j = ((y - margin - idx.min_y) / idx.cell).floor();
            let hi_j = ((y + margin - idx.min_y) / idx.cell).floor();
            let clamp_i = |v: f64| v.clamp(0.0, (idx.nx - 1) as f64) as usize;
            let clamp_j = |v: f64| v.clamp(0.0, (idx.ny - 1) as f64) as usize;
            if hi_i >= 0.0 && hi_j >= 0.0 && lo_i < idx.nx as f64 && lo_j < idx.ny as f64 {
                for j in clamp_j(lo_j)..=clamp_j(hi_j) {
                    for i in clamp_i(lo_i)..=clamp_i(hi_i) {
                        found.extend_from_slice(&idx.buckets[j * idx.nx + i]);
                    }
                }
            }
        }
        found.sort_unstable();
        found.dedup();
        found.into_iter().map(|k| &self.plants[k as usize]).filter(move |p| {
            let dx = x - p.center.0;
            let dy = y - p.center.1;
            let reach = p.footprint_radius + margin;
            dx * dx + dy * dy <= reach * reach
        })
    }

    /// Nearest intersection of the ray with a plant, the ground or nothing.
    pub fn cast_ray(&self, origin: Vec3, direction: Vec3, max_range: f64) -> RayHit {
        let d = direction;
        let ground_t = if d.z < 0.0 && origin.z >= self.ground_z {
            Some((self.ground_z - origin.z) / d.z)
        } else {
            None
        };
        let mut limit = max_range;
        if let Some(t) = ground_t {
            limit = limit.min(t);
        }
        if let Some((t, k)) = self.first_plant_hit(origin, d, limit) {
            return RayHit {
                class: SceneClass::Cotton,
                range: t,
                point: origin.add(&d.scale(t)),
                plant: Some(k),
            };
        }
        match ground_t {
            Some(t) if t <= max_range => {
                let mut point = origin.add(&d.scale(t));
                point.z = self.ground_z;
                RayHit {
                    class: SceneClass::Ground,
                    range: t,
                    point,
                    plant: None,
                }
            }
            _ => RayHit {
                class: SceneClass::Sky,
                range: f64::INFINITY,
                point: origin.add(&d.scale(max_range)),
                plant: None,
            },
        }
    }

    /// Walks the plant buckets along the horizontal projection of the ray and
    /// returns the nearest plant hit with range <= `limit`.
    fn first_plant_hit(&self, o: Vec3, d: Vec3, limit: f64) -> Option<(f64, usize)> {
        let idx = &self.index;
        if idx.nx == 0 || limit <= 0.0 {
            return None;
        }
        let h_max = self.ground_z + idx.max_height;
        // range interval where the ray is inside the plant height band
        let (mut t0, mut t1) = (0.0_f64, limit);
        if d.z > 0.0 {
            t1 = t1.min((h_max - o.z) / d.z);
            t0 = t0.max((self.ground_z - o.z) / d.z);
        } else if d.z < 0.0 {
            t0 = t0.max((h_max - o.z) / d.z);
            t1 = t1.min((self.ground_z - o.z) / d.z);
        } else if o.z < self.ground_z || o.z > h_max {
            return None;
        }
        if t0 > t1 {
            return None;
        }
        let hs = (d.x * d.x + d.y * d.y).sqrt();
        let test_bucket = |i: usize, j: usize, best: &mut Option<(f64, usize)>| {
            for &k in &idx.buckets[j * idx.nx + i] {
                if let Some(t) = cylinder_hit(&self.plants[k as usize], o, d, self.ground_z) {
                    if t <= limit && best.map_or(true, |(bt, _)| t < bt) {
                        *best = Some((t, k as usize));
                    }
                }
            }
        };
        let mut best: Option<(f64, usize)> = None;
        if hs < 1e-12 {
            let i = ((o.x - idx.min_x) / idx.cell).floor();
            let j = ((o.y - idx.min_y) / idx.cell).floor();
            if i >= 0.0 && j >= 0.0 && (i as usize) < idx.nx && (j as usize) < idx.ny {
                test_bucket(i as usize, j as usize, &mut best);
            }
            return best;
        }
        // clip [t0, t1] to the bucket grid rectangle (slab test)
        let gx0 = idx.min_x;
        let gy0 = idx.min_y;
        let gx1 = idx.min_x + idx.nx as f64 * idx.cell;
        let gy1 = idx.min_y + idx.ny as f64 * idx.cell;
        for (oc, dc, lo, hi) in [(o.x, d.x, gx0, gx1), (o.y, d.y, gy0, gy1)] {
            if dc.abs() < 1e-15 {
                if oc < lo || oc > hi {
                    return None;
                }
            } else {
                let a = (lo - oc) / dc;
                let b = (hi - oc) / dc;
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        if t0 > t1 {
            return None;
        }
        // Amanatides-Woo walk over buckets from t0 to t1
        let px = o.x + d.x * t0;
        let py = o.y + d.y * t0;
        let mut i = (((px - gx0) / idx.cell).floor() as i64).clamp(0, idx.nx as i64 - 1);
        let mut j = (((py - gy0) / idx.cell).floor() as i64).clamp(0, idx.ny as i64 - 1);
        let step_i: i64 = if d.x > 0.0 { 1 } else { -1 };
        let step_j: i64 = if d.y > 0.0 { 1 } else { -1 };
        let next_boundary = |c: i64, step: i64, g0: f64| g0 + (c + if step > 0 { 1 } else { 0 }) as f64 * idx.cell;
        let mut t_max_x = if d.x.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(i, step_i, gx0) - o.x) / d.x
        };
        let mut t_max_y = if d.y.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (next_boundary(j, step_j, gy0) - o.y) / d.y
        };
        let t_delta_x = if d.x.abs() < 1e-15 { f64::INFINITY } else { idx.cell / d.x.abs() };
        let t_delta_y = if d.y.abs() < 1e-15 { f64::INFINITY } else { idx.cell / d.y.abs() };
        loop {
            test_bucket(i as usize, j as usize, &mut best);
            let t_exit = t_max_x.min(t_max_y);
            if let Some((bt, _)) = best {
                if bt <= t_exit {
                    return best;
                }
            }
            if t_exit > t1 {
                return best;
            }
            if t_max_x < t_max_y {
                i += step_i;
                t_max_x += t_delta_x;
            } else {
                j += step_j;
                t_max_y += t_delta_y;
            }
            if i < 0 || j < 0 || i >= idx.nx as i64 || j >= idx.ny as i64 {
                return best;
            }
        }
    }

    /// Plant centers as CSV (`row,index,x,y`, 6 decimals).
    pub fn plants_csv(&self) -> String {
        let mut out = String::from("row,index,x,y\n");
        for p in &self.plants {
            let _ = writeln!(out, "{},{},{:.6},{:.6}", p.row, p.index, p.center.0, p.center.1);
        }
        out
    }
}

/// Entry range of a ray into a solid vertical cylinder (side wall or top cap).
pub fn cylinder_hit(p: &PlantInstance, o: Vec3, d: Vec3, ground_z: f64) -> Option<f64> {
    let r = p.footprint_radius;
    let top = ground_z + p.height;
    let ox = o.x - p.center.0;
    let oy = o.y - p.center.1;
    let inside_h = ox * ox + oy * oy <= r * r;
    if inside_h && o.z >= ground_z && o.z <= top {
        return Some(0.0);
    }
    let mut best: Option<f64> = None;
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-18 && !inside_h {
        let b = ox * d.x + oy * d.y;
        let c = ox * ox + oy * oy - r * r;
        let disc = b * b - a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / a;
            if t >= 0.0 {
                let z = o.z + d.z * t;
                if z >= ground_z && z <= top {
                    best = Some(t);
                }
            }
        }
    }
    // top cap, seen from above
    if o.z > top && d.z < 0.0 {
        let t = (top - o.z) / d.z;
        let x = ox + d.x * t;
        let y = oy + d.y * t;
        if x * x + y * y <= r * r && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    }
    best
}

/// Ground-truth occupancy: a cell is occupied iff its center lies inside some
/// plant footprint. Occupied cells carry `+clamp`, free cells `-clamp`.
pub fn rasterize_footprints(world: &FarmWorld, resolution: f64, margin: f64) -> Result<OccupancyGrid> {
    if !(resolution > 0.0) {
        return Err(Error::Config(format!("resolution must be positive, got {resolution}")));
    }
    let b = world.bounds;
    let origin = (b.min_x - margin, b.min_y - margin);
    let width = ((b.width() + 2.0 * margin) / resolution).ceil() as usize;
    let height = ((b.height() + 2.0 * margin) / resolution).ceil() as usize;
    let mut grid = OccupancyGrid::new(width, height, resolution, origin);
    let hi = grid.clamp;
    for cy in 0..height {
        for cx in 0..width {
            let (x, y) = grid.cell_center(cx, cy);
            let v = if world.point_in_plant(x, y) { hi } else { -hi };
            grid.set(cx, cy, v);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_plant_world(x: f64, y: f64, r: f64) -> FarmWorld {
        let b = Bounds {
            min_x: -5.0,
            min_y: -5.0,
            max_x: 5.0,
            max_y: 5.0,
        };
        let plant = PlantInstance {
            row: 0,
            index: 0,
            center: (x, y),
            footprint_radius: r,
            height: 1.0,
            boll_points: vec![],
        };
        let mut w = FarmWorld::empty(b);
        w = FarmWorld::from_parts(w.config.clone(), vec![plant], w.geo_anchor, b);
        w
    }

    #[test]
    fn default_farm_dimensions() {
        let w = generate_farm(&FarmConfig::default()).unwrap();
        assert_eq!(w.plants.len(), 180);
        assert!((w.config.row_length() - 13.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lattice_is_single_plant_at_origin() {
        let cfg = FarmConfig {
            n_rows: 1,
            plants_per_row: 1,
            ..Default::default()
        };
        let w = generate_farm(&cfg).unwrap();
        assert_eq!(w.plants.len(), 1);
        assert_eq!(w.plants[0].center, cfg.origin);
    }

    #[test]
    fn two_rows_are_row_spacing_apart() {
        let cfg = FarmConfig {
            n_rows: 2,
            ..Default::default()
        };
        let w = generate_farm(&cfg).unwrap();
        let dx = w.plants[0].center.0 - w.plants[cfg.plants_per_row].center.0;
        assert!((dx - 1.8).abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            FarmConfig { n_rows: 0, ..Default::default() },
            FarmConfig { plant_spacing: 0.0, ..Default::default() },
            FarmConfig { row_spacing: 0.5, ..Default::default() },
        ] {
            assert!(matches!(generate_farm(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn bolls_stay_on_the_canopy() {
        let w = generate_farm(&FarmConfig::default()).unwrap();
        for p in &w.plants {
            assert_eq!(p.boll_points.len(), 12);
            for b in &p.boll_points {
                let d = ((b.x - p.center.0).powi(2) + (b.y - p.center.1).powi(2)).sqrt();
                assert!(d <= p.footprint_radius + 1e-12);
                assert!(b.z >= 0.0 && b.z <= p.height);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_farm(&FarmConfig::default()).unwrap();
        let b = generate_farm(&FarmConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.plants_csv(), b.plants_csv());
    }

    #[test]
    fn ground_hit_at_45_degrees() {
        let w = FarmWorld::empty(Bounds { min_x: -1.0, min_y: -1.0, max_x: 1.0, max_y: 1.0 });
        let d = Vec3::new(1.0, 0.0, -1.0).normalized();
        let hit = w.cast_ray(Vec3::new(0.0, 0.0, 1.0), d, 10.0);
        assert_eq!(hit.class, SceneClass::Ground);
        assert!((hit.range - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn upward_ray_is_sky() {
        let w = FarmWorld::empty(Bounds { min_x: -1.0, min_y: -1.0, max_x: 1.0, max_y: 1.0 });
        let hit = w.cast_ray(Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.3, 0.0, 0.2).normalized(), 50.0);
        assert_eq!(hit.class, SceneClass::Sky);
        assert!(hit.range.is_infinite());
    }

    /// March along the ray in 1e-5 m steps and report the first step inside the cylinder.
    fn march(w: &FarmWorld, o: Vec3, d: Vec3, max: f64) -> f64 {
        let p = &w.plants[0];
        let mut t = 0.0;
        while t < max {
            let q = o.add(&d.scale(t));
            let inside = (q.x - p.center.0).powi(2) + (q.y - p.center.1).powi(2) <= p.footprint_radius.powi(2);
            if inside && q.z >= 0.0 && q.z <= p.height {
                return t;
            }
            t += 1e-5;
        }
        f64::INFINITY
    }

    #[test]
    fn cylinder_hit_matches_ray_march() {
        let w = single_plant_world(2.0, 0.0, 0.35);
        let o = Vec3::new(0.0, 0.0, 0.5);
        let d = Vec3::new(1.0, 0.0, 0.0);
        let hit = w.cast_ray(o, d, 30.0);
        assert_eq!(hit.class, SceneClass::Cotton);
        assert!((hit.range - 1.65).abs() < 1e-12);
        assert!((march(&w, o, d, 3.0) - 1.65).abs() < 2e-5);
        // oblique ray through the cylinder
        let d2 = Vec3::new(1.0, 0.12, -0.05).normalized();
        let hit2 = w.cast_ray(o, d2, 30.0);
        assert!((hit2.range - march(&w, o, d2, 3.0)).abs() < 2e-5);
    }

    #[test]
    fn ray_above_plant_passes_over() {
        let w = single_plant_world(2.0, 0.0, 0.35);
        let hit = w.cast_ray(Vec3::new(0.0, 0.0, 1.5), Vec3::new(1.0, 0.0, 0.0), 30.0);
        assert_eq!(hit.class, SceneClass::Sky);
    }

    #[test]
    fn reducing_max_range_keeps_short_hits() {
        let w = generate_farm(&FarmConfig::default()).unwrap();
        let o = Vec3::new(-9.9, 2.5, 0.3);
        for k in 0..50 {
            let a = k as f64 * 0.125;
            let d = Vec3::new(a.cos(), a.sin(), -0.02).normalized();
            let far = w.cast_ray(o, d, 30.0);
            let near = w.cast_ray(o, d, 10.0);
            if far.range < 10.0 {
                assert_eq!(far, near);
            }
        }
    }

    #[test]
    fn raster_matches_brute_force_disk_test() {
        let w = single_plant_world(0.0, 0.0, 0.35);
        let g = rasterize_footprints(&w, 0.1, 0.0).unwrap();
        let mut count = 0;
        for cy in 0..g.height {
            for cx in 0..g.width {
                let (x, y) = g.cell_center(cx, cy);
                let truth = x * x + y * y <= 0.35 * 0.35;
                assert_eq!(g.get(cx, cy) > 0.0, truth);
                count += truth as usize;
            }
        }
        assert!(count > 30);
    }

    #[test]
    fn empty_world_rasters_free() {
        let w = FarmWorld::empty(Bounds { min_x: 0.0, min_y: 0.0, max_x: 2.0, max_y: 2.0 });
        let g = rasterize_footprints(&w, 0.1, 0.5).unwrap();
        assert!(g.cells().iter().all(|&v| v < 0.0));
    }
}
