//! Experiment configuration: line-oriented `section.key = value` text.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys keep their defaults. `sensors.noise = none` switches every channel to
//! the noiseless preset before the individual noise keys are applied.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mapping::SensorModel;
use crate::metrics::NavMode;
use crate::mission::{BollHalt, MissionConfig, NavParams, SensorSuite};
use crate::robot::RobotSpec;
use crate::world::FarmConfig;

/// Known-pose survey settings for the mapping pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappingConfig {
    /// Distance between scan poses along the survey route.
    pub spacing: f64,
    pub model: SensorModel,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            spacing: 0.5,
            model: SensorModel {
                obstacle_depth: 0.35,
                ..SensorModel::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub farm: FarmConfig,
    pub robot: RobotSpec,
    pub sensors: SensorSuite,
    pub mission: MissionConfig,
    pub nav: NavParams,
    pub mapping: MappingConfig,
    pub mode: NavMode,
    pub output_dir: PathBuf,
    /// Master seed; overrides the mission, GPS and IMU seeds.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            farm: FarmConfig::default(),
            robot: RobotSpec::default(),
            sensors: SensorSuite::default(),
            mission: MissionConfig::default(),
            nav: NavParams::default(),
            mapping: MappingConfig::default(),
            mode: NavMode::Map,
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.farm.validate()?;
        self.robot.validate()?;
        self.sensors.validate()?;
        self.mission.validate()?;
        self.nav.dwa.validate()?;
        if self.nav.filter.particles == 0 {
            return Err(Error::Config("nav: particles must be at least 1".into()));
        }
        if !(self.mapping.spacing > 0.0) {
            return Err(Error::Config("mapping: spacing must be positive".into()));
        }
        if self.farm.n_rows < 2 {
            return Err(Error::NoCorridor);
        }
        Ok(())
    }

    /// Applies the master seed to every seeded component.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.mission.seed = seed;
        self.sensors.gps.seed = seed;
        self.sensors.imu.seed = seed;
        self
    }

    /// Canonical text form; parsing it yields the same configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (key, value) in self.entries() {
            let _ = writeln!(s, "{key} = {value}");
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let (f, r, sn, m, n, mp) = (&self.farm, &self.robot, &self.sensors, &self.mission, &self.nav, &self.mapping);
        vec![
            ("run.mode", self.mode.name().to_string()),
            ("run.seed", self.seed.to_string()),
            ("run.output_dir", self.output_dir.display().to_string()),
            ("farm.n_rows", f.n_rows.to_string()),
            ("farm.plants_per_row", f.plants_per_row.to_string()),
            ("farm.row_spacing", f.row_spacing.to_string()),
            ("farm.plant_spacing", f.plant_spacing.to_string()),
            ("farm.plant_height", f.plant_height.to_string()),
            ("farm.plant_width", f.plant_width.to_string()),
            ("farm.origin_x", f.origin.0.to_string()),
            ("farm.origin_y", f.origin.1.to_string()),
            ("farm.bolls_per_plant", f.bolls_per_plant.to_string()),
            ("farm.seed", f.seed.to_string()),
            ("farm.anchor_lat", f.anchor.lat.to_string()),
            ("farm.anchor_lon", f.anchor.lon.to_string()),
            ("farm.map_heading", f.map_heading.to_string()),
            ("farm.bounds_margin", f.bounds_margin.to_string()),
            ("farm.friction_primary", f.friction_primary.to_string()),
            ("farm.friction_secondary", f.friction_secondary.to_string()),
            ("robot.length", r.length.to_string()),
            ("robot.width", r.width.to_string()),
            ("robot.height", r.height.to_string()),
            ("robot.max_speed", r.max_speed.to_string()),
            ("robot.max_yaw_rate", r.max_yaw_rate.to_string()),
            ("robot.max_accel", r.max_accel.to_string()),
            ("robot.max_yaw_accel", r.max_yaw_accel.to_string()),
            ("lidar.beam_count", sn.lidar.beam_count.to_string()),
            ("lidar.max_range", sn.lidar.max_range.to_string()),
            ("lidar.noise_sigma", sn.lidar.noise_sigma.to_string()),
            ("gps.white_sigma", sn.gps.white_sigma.to_string()),
            ("gps.drift_step_sigma", sn.gps.drift_step_sigma.to_string()),
            ("imu.yaw_sigma", sn.imu.yaw_sigma.to_string()),
            ("imu.yaw_rate_sigma", sn.imu.yaw_rate_sigma.to_string()),
            ("odometry.trans_mult", sn.odometry.trans_mult.to_string()),
            ("odometry.rot_mult", sn.odometry.rot_mult.to_string()),
            ("odometry.trans_add", sn.odometry.trans_add.to_string()),
            ("odometry.rot_add", sn.odometry.rot_add.to_string()),
            ("camera.width", sn.camera.width.to_string()),
            ("camera.height", sn.camera.height.to_string()),
            ("camera.hfov", sn.camera.hfov.to_string()),
            ("camera.vfov", sn.camera.vfov.to_string()),
            ("camera.fps", sn.camera.fps.to_string()),
            ("camera.mask_noise", sn.mask_noise.to_string()),
            ("mission.map_threshold", m.map_threshold.to_string()),
            ("mission.gps_threshold", m.gps_threshold.to_string()),
            ("mission.battery_return_level", m.battery_return_level.to_string()),
            ("mission.cruise_speed", m.cruise_speed.to_string()),
            (
                "mission.boll_dwell",
                match m.boll_halt {
                    BollHalt::Off => "0".to_string(),
                    BollHalt::Dwell(s) => s.to_string(),
                },
            ),
            ("mission.control_rate", m.control_rate.to_string()),
            ("mission.midpoints", m.midpoints.to_string()),
            ("mission.outer_passes", m.outer_passes.to_string()),
            ("mission.capture_radius", m.capture_radius.to_string()),
            ("mission.guidance_period", m.guidance_period.to_string()),
            ("mission.guidance_downscale", m.guidance_downscale.to_string()),
            ("mission.discharge_rate", m.discharge_rate.to_string()),
            ("mission.max_sim_time", m.max_sim_time.to_string()),
            ("mission.wall_budget", m.wall_budget.to_string()),
            ("nav.particles", n.filter.particles.to_string()),
            ("nav.beam_subsample", n.filter.beam_subsample.to_string()),
            ("nav.sigma_hit", n.filter.sigma_hit.to_string()),
            ("nav.approach", n.approach.to_string()),
            ("nav.replan_deviation", n.replan_deviation.to_string()),
            ("nav.skip_after", n.skip_after.to_string()),
            ("nav.steering_gain", n.steering.gain.to_string()),
            ("nav.steering_deadband", n.steering.deadband.to_string()),
            ("mapping.spacing", mp.spacing.to_string()),
            ("mapping.obstacle_depth", mp.model.obstacle_depth.to_string()),
        ]
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_value<T: std::str::FromStr>(path: &Path, key: &str, e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value
        .parse::<T>()
        .map_err(|err| Error::parse(path, e.line, format!("{key}: cannot parse `{}`: {err}", e.value)))
}

/// Parses configuration text. `path` is only used in diagnostics.
pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| Error::parse(path, line, format!("expected `section.key = value`, found `{body}`")))?;
        let (key, value) = (key.trim(), value.trim());
        match key.split_once('.') {
            Some((s, k)) if !s.is_empty() && !k.is_empty() && !k.contains('.') => {}
            _ => return Err(Error::parse(path, line, format!("key `{key}` must have the form section.key"))),
        }
        if value.is_empty() {
            return Err(Error::parse(path, line, format!("{key}: missing value")));
        }
        if let Some(prev) = entries.get(key) {
            return Err(Error::parse(path, line, format!("{key}: duplicate key (first set on line {})", prev.line)));
        }
        entries.insert(key.to_string(), Entry { line, value: value.to_string() });
    }

    let mut cfg = ExperimentConfig::default();
    if let Some(e) = entries.remove("sensors.noise") {
        cfg.sensors = match e.value.as_str() {
            "default" => SensorSuite::default(),
            "none" => SensorSuite::noiseless(),
            other => {
                return Err(Error::parse(path, e.line, format!("sensors.noise: expected `default` or `none`, found `{other}`")))
            }
        };
    }

    let mut seed = None;
    for (key, e) in &entries {
        let key = key.as_str();
        macro_rules! set {
            ($target:expr) => {
                $target = parse_value(path, key, e)?
            };
        }
        match key {
            "run.mode" => {
                cfg.mode = NavMode::parse(&e.value)
                    .ok_or_else(|| Error::parse(path, e.line, format!("run.mode: expected `map` or `gps`, found `{}`", e.value)))?
            }
            "run.seed" => seed = Some(parse_value::<u64>(path, key, e)?),
            "run.output_dir" => cfg.output_dir = PathBuf::from(&e.value),
            "farm.n_rows" => set!(cfg.farm.n_rows),
            "farm.plants_per_row" => set!(cfg.farm.plants_per_row),
            "farm.row_spacing" => set!(cfg.farm.row_spacing),
            "farm.plant_spacing" => set!(cfg.farm.plant_spacing),
            "farm.plant_height" => set!(cfg.farm.plant_height),
            "farm.plant_width" => set!(cfg.farm.plant_width),
            "farm.origin_x" => set!(cfg.farm.origin.0),
            "farm.origin_y" => set!(cfg.farm.origin.1),
            "farm.bolls_per_plant" => set!(cfg.farm.bolls_per_plant),
            "farm.seed" => set!(cfg.farm.seed),
            "farm.anchor_lat" => set!(cfg.farm.anchor.lat),
            "farm.anchor_lon" => set!(cfg.farm.anchor.lon),
            "farm.map_heading" => set!(cfg.farm.map_heading),
            "farm.bounds_margin" => set!(cfg.farm.bounds_margin),
            "farm.friction_primary" => set!(cfg.farm.friction_primary),
            "farm.friction_secondary" => set!(cfg.farm.friction_secondary),
            "robot.length" => set!(cfg.robot.length),
            "robot.width" => set!(cfg.robot.width),
            "robot.height" => set!(cfg.robot.height),
            "robot.max_speed" => set!(cfg.robot.max_speed),
            "robot.max_yaw_rate" => set!(cfg.robot.max_yaw_rate),
            "robot.max_accel" => set!(cfg.robot.max_accel),
            "robot.max_yaw_accel" => set!(cfg.robot.max_yaw_accel),
            "lidar.beam_count" => set!(cfg.sensors.lidar.beam_count),
            "lidar.max_range" => set!(cfg.sensors.lidar.max_range),
            "lidar.noise_sigma" => set!(cfg.sensors.lidar.noise_sigma),
            "gps.white_sigma" => set!(cfg.sensors.gps.white_sigma),
            "gps.drift_step_sigma" => set!(cfg.sensors.gps.drift_step_sigma),
            "imu.yaw_sigma" => set!(cfg.sensors.imu.yaw_sigma),
            "imu.yaw_rate_sigma" => set!(cfg.sensors.imu.yaw_rate_sigma),
            "odometry.trans_mult" => set!(cfg.sensors.odometry.trans_mult),
            "odometry.rot_mult" => set!(cfg.sensors.odometry.rot_mult),
            "odometry.trans_add" => set!(cfg.sensors.odometry.trans_add),
            "odometry.rot_add" => set!(cfg.sensors.odometry.rot_add),
            "camera.width" => set!(cfg.sensors.camera.width),
            "camera.height" => set!(cfg.sensors.camera.height),
            "camera.hfov" => set!(cfg.sensors.camera.hfov),
            "camera.vfov" => set!(cfg.sensors.camera.vfov),
            "camera.fps" => set!(cfg.sensors.camera.fps),
            "camera.mask_noise" => set!(cfg.sensors.mask_noise),
            "mission.map_threshold" => set!(cfg.mission.map_threshold),
            "mission.gps_threshold" => set!(cfg.mission.gps_threshold),
            "mission.battery_return_level" => set!(cfg.mission.battery_return_level),
            "mission.cruise_speed" => set!(cfg.mission.cruise_speed),
            "mission.boll_dwell" => {
                let s: f64 = parse_value(path, key, e)?;
                cfg.mission.boll_halt = if s == 0.0 { BollHalt::Off } else { BollHalt::Dwell(s) };
            }
            "mission.control_rate" => set!(cfg.mission.control_rate),
            "mission.midpoints" => set!(cfg.mission.midpoints),
            "mission.outer_passes" => set!(cfg.mission.outer_passes),
            "mission.capture_radius" => set!(cfg.mission.capture_radius),
            "mission.guidance_period" => set!(cfg.mission.guidance_period),
            "mission.guidance_downscale" => set!(cfg.mission.guidance_downscale),
            "mission.discharge_rate" => set!(cfg.mission.discharge_rate),
            "mission.max_sim_time" => set!(cfg.mission.max_sim_time),
            "mission.wall_budget" => set!(cfg.mission.wall_budget),
            "nav.particles" => set!(cfg.nav.filter.particles),
            "nav.beam_subsample" => set!(cfg.nav.filter.beam_subsample),
            "nav.sigma_hit" => set!(cfg.nav.filter.sigma_hit),
            "nav.approach" => set!(cfg.nav.approach),
            "nav.replan_deviation" => set!(cfg.nav.replan_deviation),
            "nav.skip_after" => set!(cfg.nav.skip_after),
            "nav.steering_gain" => set!(cfg.nav.steering.gain),
            "nav.steering_deadband" => set!(cfg.nav.steering.deadband),
            "mapping.spacing" => set!(cfg.mapping.spacing),
            "mapping.obstacle_depth" => set!(cfg.mapping.model.obstacle_depth),
            _ => return Err(Error::parse(path, e.line, format!("unknown key `{key}`"))),
        }
    }
    cfg.robot.cruise_speed = cfg.mission.cruise_speed;
    let seed = seed.unwrap_or(cfg.seed);
    Ok(cfg.seeded(seed))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path)
}
