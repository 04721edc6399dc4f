//! End-to-end experiment runs and their on-disk artifacts.
//!
//! Reports are computed from the values as written to disk, so replaying the
//! written files reproduces the embedded report exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::mapping::{map_along_route, occupied_iou, save_map, threshold_map, OccupancyGrid, TernaryMap};
use crate::math::stream_rng;
use crate::metrics::{evaluate, NavMode, NavReport, TrajectoryLog};
use crate::mission::{
    field_grid, generate_serpentine_waypoints, run_mission, survey_route, MissionOutcome, MissionSetup, Waypoint,
    WaypointPlan, GRID_MARGIN, GRID_RESOLUTION,
};
use crate::svg::{self, PlotData};
use crate::world::{generate_farm, rasterize_footprints, FarmWorld};

pub const PLANNED_MAP_HEADER: &str = "index,x,y,yaw";
pub const PLANNED_GPS_HEADER: &str = "index,lat,lon,yaw";
pub const TRAJECTORY_HEADER: &str = "t,x,y,yaw";
pub const GPS_TRAJECTORY_HEADER: &str = "t,lat,lon";

const MAPPING_STREAM: u64 = 0x3a99;

pub const CONFIG_FILE: &str = "config.txt";
pub const MAP_FILE: &str = "map.txt";
pub const PLANNED_FILE: &str = "planned_waypoints.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const GPS_TRAJECTORY_FILE: &str = "gps_trajectory.csv";
pub const MISSION_LOG_FILE: &str = "mission_log.csv";
pub const GUIDANCE_LOG_FILE: &str = "guidance_log.csv";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const ERRORS_FILE: &str = "waypoint_errors.csv";
pub const PLOT_FILE: &str = "trajectory.svg";

// ---------------------------------------------------------------- file formats

/// Planned waypoints with the frame they are expressed in.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedFile {
    pub mode: NavMode,
    pub points: Vec<(f64, f64)>,
}

/// Trajectory samples `(t, a, b)`: `(x, y)` in map mode, `(lat, lon)` in GPS mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub mode: NavMode,
    pub samples: Vec<(f64, f64, f64)>,
}

impl TrajectoryFile {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.1, s.2)).collect()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

pub fn planned_csv(plan: &WaypointPlan) -> String {
    let mut s = String::new();
    match plan.mode {
        NavMode::Map => {
            let _ = writeln!(s, "{PLANNED_MAP_HEADER}");
            for (i, w) in plan.map_waypoints.iter().enumerate() {
                let _ = writeln!(s, "{i},{:.4},{:.4},{:.4}", w.x, w.y, w.yaw);
            }
        }
        NavMode::Gps => {
            let _ = writeln!(s, "{PLANNED_GPS_HEADER}");
            for (i, w) in plan.gps_waypoints.iter().enumerate() {
                let _ = writeln!(s, "{i},{:.9},{:.9},{:.4}", w.point.lat, w.point.lon, w.yaw);
            }
        }
    }
    s
}

pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut s = format!("{TRAJECTORY_HEADER}\n");
    for p in &log.poses {
        let _ = writeln!(s, "{:.4},{:.4},{:.4},{:.4}", p.t, p.x, p.y, p.yaw);
    }
    s
}

pub fn gps_trajectory_csv(log: &TrajectoryLog) -> String {
    let mut s = format!("{GPS_TRAJECTORY_HEADER}\n");
    for f in &log.fixes {
        let _ = writeln!(s, "{:.4},{:.9},{:.9}", f.t, f.lat, f.lon);
    }
    s
}

/// Data lines with their 1-based line numbers, after checking the header.
fn data_lines<'a>(text: &'a str, path: &Path, headers: &[&str]) -> Result<(usize, Vec<(usize, Vec<&'a str>)>)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let which = headers.iter().position(|h| *h == header).ok_or_else(|| {
        Error::parse(path, 1, format!("unrecognised header `{header}`, expected one of {}", headers.join(" | ")))
    })?;
    let rows = lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| (n, l.split(',').map(str::trim).collect()))
        .collect();
    Ok((which, rows))
}

fn field(path: &Path, line: usize, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .parse()
        .map_err(|e| Error::parse(path, line, format!("`{raw}`: {e}")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, line, format!("non-finite value `{raw}`")));
    }
    Ok(v)
}

pub fn parse_planned(text: &str, path: &Path) -> Result<PlannedFile> {
    let (which, rows) = data_lines(text, path, &[PLANNED_MAP_HEADER, PLANNED_GPS_HEADER])?;
    let mode = if which == 0 { NavMode::Map } else { NavMode::Gps };
    let mut points = Vec::with_capacity(rows.len());
    for (n, cols) in rows {
        if cols.len() != 4 {
            return Err(Error::parse(path, n, format!("expected 4 columns, found {}", cols.len())));
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|e| Error::parse(path, n, format!("index `{}`: {e}", cols[0])))?;
        if index != points.len() {
            return Err(Error::parse(path, n, format!("waypoint index {index} out of order")));
        }
        points.push((field(path, n, cols[1])?, field(path, n, cols[2])?));
        field(path, n, cols[3])?;
    }
    if points.is_empty() {
        return Err(Error::Empty("planned waypoints"));
    }
    Ok(PlannedFile { mode, points })
}

/// Parses a trajectory; timestamps must increase strictly.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<TrajectoryFile> {
    let (which, rows) = data_lines(text, path, &[TRAJECTORY_HEADER, GPS_TRAJECTORY_HEADER])?;
    let (mode, ncols) = if which == 0 { (NavMode::Map, 4) } else { (NavMode::Gps, 3) };
    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(rows.len());
    for (n, cols) in rows {
        if cols.len() != ncols {
            return Err(Error::parse(path, n, format!("expected {ncols} columns, found {}", cols.len())));
        }
        let t = field(path, n, cols[0])?;
        if let Some(last) = samples.last() {
            if t <= last.0 {
                return Err(Error::parse(path, n, format!("timestamp {t} does not increase (previous {})", last.0)));
            }
        }
        samples.push((t, field(path, n, cols[1])?, field(path, n, cols[2])?));
        if ncols == 4 {
            field(path, n, cols[3])?;
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    Ok(TrajectoryFile { mode, samples })
}

/// Scores parsed files; the frames named by both headers must agree.
pub fn replay(planned: &PlannedFile, trajectory: &TrajectoryFile, r: f64) -> Result<NavReport> {
    if planned.mode != trajectory.mode {
        return Err(Error::InvalidState(format!(
            "frame mismatch: planned waypoints are in {} frame, trajectory in {} frame",
            planned.mode.name(),
            trajectory.mode.name()
        )));
    }
    evaluate(planned.mode, &planned.points, &trajectory.points(), r, trajectory.duration())
}

pub fn replay_metrics(planned: &Path, trajectory: &Path, r: f64) -> Result<NavReport> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let pf = parse_planned(&read(planned)?, planned)?;
    let tf = parse_trajectory(&read(trajectory)?, trajectory)?;
    replay(&pf, &tf, r)
}

// ---------------------------------------------------------------- pipeline

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    /// Files written, in write order.
    pub files: Vec<PathBuf>,
    pub report: NavReport,
    pub outcome: MissionOutcome,
    /// Occupied-cell IoU of the mapping pass against the true footprints.
    pub map_iou: Option<f64>,
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

/// Farm and waypoint plan for the configured mode.
pub fn prepare(cfg: &ExperimentConfig) -> Result<(FarmWorld, WaypointPlan)> {
    cfg.validate()?;
    let world = generate_farm(&cfg.farm).map_err(|e| e.in_stage("farm generation"))?;
    let plan = generate_serpentine_waypoints(
        &world.config,
        cfg.mode,
        &world.geo_anchor,
        cfg.mission.midpoints,
        cfg.mission.outer_passes,
    )
    .map_err(|e| e.in_stage("waypoint generation"))?;
    Ok((world, plan))
}

/// Known-pose lidar survey of the whole field.
pub fn mapping_pass(cfg: &ExperimentConfig, world: &FarmWorld, home: Waypoint) -> Result<OccupancyGrid> {
    let route = survey_route(&world.config, home, cfg.mapping.spacing)?;
    let mut grid = field_grid(world);
    let mut rng = stream_rng(cfg.seed, MAPPING_STREAM);
    map_along_route(&mut grid, world, &cfg.sensors.lidar, &route, &cfg.mapping.model, Some(&mut rng))?;
    Ok(grid)
}

/// Occupied-cell IoU against the rasterised plant footprints.
pub fn map_quality(world: &FarmWorld, map: &TernaryMap) -> Result<f64> {
    let truth = threshold_map(&rasterize_footprints(world, GRID_RESOLUTION, GRID_MARGIN)?);
    occupied_iou(map, &truth)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Mapping pass only: writes the config and the map, returns the map IoU.
pub fn run_mapping(cfg: &ExperimentConfig) -> Result<(PathBuf, f64)> {
    let (world, plan) = prepare(cfg)?;
    let grid = mapping_pass(cfg, &world, plan.home).map_err(|e| e.in_stage("mapping"))?;
    let iou = map_quality(&world, &threshold_map(&grid)).map_err(|e| e.in_stage("mapping"))?;
    create_dir(&cfg.output_dir)?;
    let mut files = Vec::new();
    write(&cfg.output_dir, CONFIG_FILE, &cfg.to_text(), &mut files)?;
    let path = cfg.output_dir.join(MAP_FILE);
    save_map(&grid, &path).map_err(|e| e.in_stage("mapping"))?;
    Ok((path, iou))
}

pub fn run_map_pipeline(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    if cfg.mode != NavMode::Map {
        return Err(Error::Config("run_map_pipeline needs run.mode = map".into()));
    }
    run(cfg)
}

pub fn run_gps_pipeline(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    if cfg.mode != NavMode::Gps {
        return Err(Error::Config("run_gps_pipeline needs run.mode = gps".into()));
    }
    run(cfg)
}

/// Runs whichever pipeline the configured mode selects.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    match cfg.mode {
        NavMode::Map => run_map_pipeline(cfg),
        NavMode::Gps => run_gps_pipeline(cfg),
    }
}

fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let (world, plan) = prepare(cfg)?;
    let dir = cfg.output_dir.clone();
    create_dir(&dir)?;
    let mut files = Vec::new();
    write(&dir, CONFIG_FILE, &cfg.to_text(), &mut files)?;

    let mut map_iou = None;
    let map = if cfg.mode == NavMode::Map {
        let grid = mapping_pass(cfg, &world, plan.home).map_err(|e| e.in_stage("mapping"))?;
        let path = dir.join(MAP_FILE);
        save_map(&grid, &path)?;
        files.push(path);
        let map = threshold_map(&grid);
        map_iou = Some(map_quality(&world, &map).map_err(|e| e.in_stage("mapping"))?);
        Some(map)
    } else {
        None
    };

    let setup = MissionSetup {
        world: &world,
        plan: &plan,
        robot: cfg.robot,
        sensors: cfg.sensors.clone(),
        config: cfg.mission,
        params: cfg.nav,
        map: map.as_ref(),
    };
    let outcome = run_mission(&setup).map_err(|e| e.in_stage("mission"))?;

    let planned_text = planned_csv(&plan);
    let traj_text = trajectory_csv(&outcome.trajectory);
    write(&dir, PLANNED_FILE, &planned_text, &mut files)?;
    write(&dir, TRAJECTORY_FILE, &traj_text, &mut files)?;
    let (scored_name, scored_text) = if cfg.mode == NavMode::Gps {
        let text = gps_trajectory_csv(&outcome.trajectory);
        write(&dir, GPS_TRAJECTORY_FILE, &text, &mut files)?;
        (GPS_TRAJECTORY_FILE, text)
    } else {
        (TRAJECTORY_FILE, traj_text)
    };
    write(&dir, MISSION_LOG_FILE, &outcome.mission_csv, &mut files)?;
    write(&dir, GUIDANCE_LOG_FILE, &outcome.guidance_csv, &mut files)?;

    let threshold = match cfg.mode {
        NavMode::Map => cfg.mission.map_threshold,
        NavMode::Gps => cfg.mission.gps_threshold,
    };
    let planned = parse_planned(&planned_text, &dir.join(PLANNED_FILE))?;
    let traj = parse_trajectory(&scored_text, &dir.join(scored_name))?;
    let mut report = replay(&planned, &traj, threshold).map_err(|e| e.in_stage("metrics"))?;
    report.waypoints_reached = outcome.reached.iter().filter(|r| **r).count();
    report.collisions = outcome.collisions;
    write(&dir, REPORT_TEXT_FILE, &report.to_text(), &mut files)?;
    write(&dir, REPORT_CSV_FILE, &report.to_csv(), &mut files)?;
    write(&dir, ERRORS_FILE, &report.errors_csv(), &mut files)?;

    let targets = plan.targets(&world.geo_anchor)?;
    let plot = PlotData {
        title: format!("{} mode, seed {}", cfg.mode.name(), cfg.seed),
        planned: targets.iter().map(|w| (w.x, w.y)).collect(),
        actual: outcome.trajectory.xy(),
        plants: world
            .plants
            .iter()
            .map(|p| (p.center.0, p.center.1, p.footprint_radius))
            .collect(),
    };
    write(&dir, PLOT_FILE, &svg::render(&plot), &mut files)?;

    Ok(RunArtifacts {
        dir,
        files,
        report,
        outcome,
        map_iou,
    })
}
