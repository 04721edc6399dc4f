//! Waypoint plan, phase machine and the closed-loop mission runner.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geo::{degree_distance, gps_to_map, map_to_gps, GeoAnchor, GeoPoint};
use crate::localization::{build_likelihood_field, FilterConfig, ParticleFilter, SensorOffset};
use crate::mapping::{integrate_scan, threshold_map, OccupancyGrid, SensorModel, TernaryMap};
use crate::math::{normalize_angle, stream_rng};
use crate::metrics::{FixSample, NavMode, PoseSample, TrajectoryLog};
use crate::planner::{
    inflate, plan_cells, plan_local_dwa, project_onto, rollout, rollout_is_clear, Footprint, Costmap, DwaConfig, DwaLimits,
    DwaStatus, InflationParams,
};
use crate::robot::{
    mount_pose_world, step_battery, step_kinematics, RobotSpec, RobotState, Twist, PRIMARY_CAMERA, SECONDARY_CAMERA,
    TERTIARY_CAMERA,
};
use crate::sensors::{
    add_mask_noise, detect_bolls, lidar_pose_2d, render_segmentation, simulate_lidar, simulate_odometry,
    BollDetectorSpec, CameraIntrinsics, CameraSource, GpsNoiseModel, GpsSimulator, ImuNoise, ImuSimulator, LidarSpec,
    OdometryNoise,
};
use crate::vision_guidance::{
    guidance_csv_row, guidance_from_frame, Confidence, SteeringCorrection, SteeringLaw, GUIDANCE_CSV_HEADER,
    MAX_TURN_DEG,
};
use crate::world::{FarmConfig, FarmWorld};

/// Distance of entry and exit points from the first and last plant.
pub const ROW_END_CLEARANCE: f64 = 1.5;
/// Half-width of the band around a corridor centerline that counts as
/// "inside the row".
pub const CORRIDOR_BAND: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsWaypoint {
    pub point: GeoPoint,
    /// Travel heading in the map frame.
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPlan {
    pub mode: NavMode,
    /// Populated in map mode.
    pub map_waypoints: Vec<Waypoint>,
    /// Populated in GPS mode.
    pub gps_waypoints: Vec<GpsWaypoint>,
    pub home: Waypoint,
    /// Centerline x of every corridor the plan drives, in driving order.
    pub corridor_x: Vec<f64>,
    /// Corridor index of each waypoint.
    pub corridor_of: Vec<usize>,
}

impl WaypointPlan {
    pub fn len(&self) -> usize {
        match self.mode {
            NavMode::Map => self.map_waypoints.len(),
            NavMode::Gps => self.gps_waypoints.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Waypoints in the map frame. GPS waypoints go through the geo chain.
    pub fn targets(&self, anchor: &GeoAnchor) -> Result<Vec<Waypoint>> {
        match self.mode {
            NavMode::Map => Ok(self.map_waypoints.clone()),
            NavMode::Gps => self
                .gps_waypoints
                .iter()
                .map(|w| gps_to_map(w.point, anchor).map(|(x, y)| Waypoint::new(x, y, w.yaw)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (ok, other) = match self.mode {
            NavMode::Map => (!self.map_waypoints.is_empty(), self.gps_waypoints.is_empty()),
            NavMode::Gps => (!self.gps_waypoints.is_empty(), self.map_waypoints.is_empty()),
        };
        if !ok || !other {
            return Err(Error::InvalidState("waypoint plan does not match its mode".into()));
        }
        Ok(())
    }
}

/// Centerlines of the corridors to drive, east to west.
pub fn corridor_centerlines(farm: &FarmConfig, outer_passes: bool) -> Result<Vec<f64>> {
    if farm.n_rows < 2 {
        return Err(Error::NoCorridor);
    }
    let half = 0.5 * farm.row_spacing;
    let mut xs = Vec::with_capacity(farm.n_rows + 1);
    if outer_passes {
        xs.push(farm.row_x(0) + half);
    }
    xs.extend((0..farm.n_rows - 1).map(|k| 0.5 * (farm.row_x(k) + farm.row_x(k + 1))));
    if outer_passes {
        xs.push(farm.row_x(farm.n_rows - 1) - half);
    }
    Ok(xs)
}

/// Serpentine route in the map frame: entry, `midpoints` evenly spaced
/// points and exit for each corridor, the first corridor driven northward.
pub fn serpentine_map_waypoints(
    farm: &FarmConfig,
    midpoints: usize,
    outer_passes: bool,
) -> Result<(Vec<Waypoint>, Vec<f64>, Vec<usize>)> {
    let xs = corridor_centerlines(farm, outer_passes)?;
    let y0 = farm.row_start_y() - ROW_END_CLEARANCE;
    let y1 = farm.row_end_y() + ROW_END_CLEARANCE;
    let mut wps = Vec::with_capacity(xs.len() * (midpoints + 2));
    let mut corridor = Vec::with_capacity(wps.capacity());
    for (k, &x) in xs.iter().enumerate() {
        let north = k % 2 == 0;
        let (a, b, yaw) = if north { (y0, y1, FRAC_PI_2) } else { (y1, y0, -FRAC_PI_2) };
        for j in 0..midpoints + 2 {
            let t = j as f64 / (midpoints + 1) as f64;
            wps.push(Waypoint::new(x, a + (b - a) * t, yaw));
            corridor.push(k);
        }
    }
    Ok((wps, xs, corridor))
}

pub fn generate_serpentine_waypoints(
    farm: &FarmConfig,
    mode: NavMode,
    anchor: &GeoAnchor,
    midpoints: usize,
    outer_passes: bool,
) -> Result<WaypointPlan> {
    let (wps, corridor_x, corridor_of) = serpentine_map_waypoints(farm, midpoints, outer_passes)?;
    let home = Waypoint::new(-6.0, 1.0, 0.0);
    let plan = match mode {
        NavMode::Map => WaypointPlan {
            mode,
            map_waypoints: wps,
            gps_waypoints: Vec::new(),
            home,
            corridor_x,
            corridor_of,
        },
        NavMode::Gps => {
            let gps = wps
                .iter()
                .map(|w| map_to_gps(w.x, w.y, anchor).map(|point| GpsWaypoint { point, yaw: w.yaw }))
                .collect::<Result<Vec<_>>>()?;
            WaypointPlan {
                mode,
                map_waypoints: Vec::new(),
                gps_waypoints: gps,
                home,
                corridor_x,
                corridor_of,
            }
        }
    };
    Ok(plan)
}

/// Base poses every `spacing` metres along the serpentine through all
/// corridors (outer passes included), starting and ending at home. Used for
/// the known-pose mapping survey.
pub fn survey_route(farm: &FarmConfig, home: Waypoint, spacing: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(spacing > 0.0) {
        return Err(Error::Config("survey spacing must be positive".into()));
    }
    let (wps, xs, _) = serpentine_map_waypoints(farm, 0, true)?;
    let y_turn_s = farm.row_start_y() - ROW_END_CLEARANCE;
    let mut corners = vec![(home.x, home.y), (xs[0], home.y.min(y_turn_s))];
    corners.extend(wps.iter().map(|w| (w.x, w.y)));
    let last = corners[corners.len() - 1];
    corners.push((last.0, home.y.min(y_turn_s)));
    corners.push((home.x, home.y));
    let mut poses = Vec::new();
    for w in corners.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        if len == 0.0 {
            continue;
        }
        let yaw = (b.1 - a.1).atan2(b.0 - a.0);
        let n = (len / spacing).ceil() as usize;
        for k in 0..n {
            let t = k as f64 / n as f64;
            poses.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), yaw));
        }
    }
    poses.push((home.x, home.y, 0.0));
    Ok(poses)
}

/// Arrival test in metres.
pub fn reached_map(est: (f64, f64), wp: (f64, f64), threshold: f64) -> bool {
    (est.0 - wp.0).hypot(est.1 - wp.1) <= threshold
}

/// Arrival test as a norm over (Δlat, Δlon) in degrees.
pub fn reached_gps(est: GeoPoint, wp: GeoPoint, threshold: f64) -> bool {
    degree_distance(est, wp) <= threshold
}

/// Mode-dispatching arrival test for waypoint `index` of `plan`, given a
/// map-frame position estimate.
pub fn waypoint_reached(
    est: (f64, f64),
    plan: &WaypointPlan,
    index: usize,
    config: &MissionConfig,
    anchor: &GeoAnchor,
) -> Result<bool> {
    match plan.mode {
        NavMode::Map => {
            let w = plan.map_waypoints.get(index).ok_or(Error::InvalidEndpoint("waypoint index"))?;
            Ok(reached_map(est, (w.x, w.y), config.map_threshold))
        }
        NavMode::Gps => {
            let w = plan.gps_waypoints.get(index).ok_or(Error::InvalidEndpoint("waypoint index"))?;
            let here = map_to_gps(est.0, est.1, anchor)?;
            Ok(reached_gps(here, w.point, config.gps_threshold))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Idle,
    NavigateToWaypoint,
    RowFollowing,
    Turning,
    BollDwell,
    ReturnHome,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::NavigateToWaypoint => "navigate",
            Phase::RowFollowing => "row_following",
            Phase::Turning => "turning",
            Phase::BollDwell => "boll_dwell",
            Phase::ReturnHome => "return_home",
            Phase::Done => "done",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Phase::Idle,
            Phase::NavigateToWaypoint,
            Phase::RowFollowing,
            Phase::Turning,
            Phase::BollDwell,
            Phase::ReturnHome,
            Phase::Done,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }
}

/// The declared transition relation. Staying put is always allowed.
pub fn transition_allowed(from: Phase, to: Phase) -> bool {
    use Phase::*;
    if from == to {
        return true;
    }
    match from {
        Idle => matches!(to, NavigateToWaypoint | Done),
        NavigateToWaypoint | RowFollowing | Turning => {
            matches!(to, NavigateToWaypoint | RowFollowing | Turning | BollDwell | ReturnHome | Done)
        }
        BollDwell => matches!(to, RowFollowing | Turning | ReturnHome | Done),
        ReturnHome => to == Done,
        Done => false,
    }
}

/// Checks a logged phase sequence; returns the first illegal step.
pub fn check_transitions(seq: &[Phase]) -> std::result::Result<(), (usize, Phase, Phase)> {
    for (i, w) in seq.windows(2).enumerate() {
        if !transition_allowed(w[0], w[1]) {
            return Err((i + 1, w[0], w[1]));
        }
    }
    Ok(())
}

/// RowFollowing iff y lies strictly inside the planted extent and x lies in
/// some corridor band; Turning otherwise.
pub fn classify_phase(est: (f64, f64), corridor_x: &[f64], farm: &FarmConfig) -> Phase {
    let (x, y) = est;
    let inside_rows = y > farm.row_start_y() && y < farm.row_end_y();
    let in_band = corridor_x.iter().any(|c| (x - c).abs() <= CORRIDOR_BAND);
    if inside_rows && in_band {
        Phase::RowFollowing
    } else {
        Phase::Turning
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BollHalt {
    Off,
    /// Seconds to hold still in front of a plant with visible bolls.
    Dwell(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionConfig {
    pub map_threshold: f64,
    /// Degrees.
    pub gps_threshold: f64,
    /// Percent.
    pub battery_return_level: f64,
    pub cruise_speed: f64,
    pub boll_halt: BollHalt,
    pub control_rate: f64,
    pub seed: u64,
    pub midpoints: usize,
    pub outer_passes: bool,
    /// Distance at which the controller switches to the terminal arc.
    pub capture_radius: f64,
    /// Control ticks between guidance frames.
    pub guidance_period: usize,
    /// Integer downscale applied to the guidance camera.
    pub guidance_downscale: usize,
    /// Battery percent per second.
    pub discharge_rate: f64,
    /// Simulated seconds before the run is abandoned.
    pub max_sim_time: f64,
    /// Wall-clock seconds before the run is abandoned.
    pub wall_budget: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            map_threshold: 0.25,
            gps_threshold: 5e-6,
            battery_return_level: 40.0,
            cruise_speed: 0.5,
            boll_halt: BollHalt::Off,
            control_rate: 10.0,
            seed: 1,
            midpoints: 3,
            outer_passes: false,
            capture_radius: 0.6,
            guidance_period: 5,
            guidance_downscale: 2,
            discharge_rate: crate::robot::DEFAULT_DISCHARGE_RATE,
            max_sim_time: 3600.0,
            wall_budget: 120.0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("mission: {m}")));
        if !(self.map_threshold > 0.0) || !(self.gps_threshold > 0.0) {
            return bad("thresholds must be positive");
        }
        if !(self.control_rate > 0.0) {
            return bad("control_rate must be positive");
        }
        if !(self.cruise_speed > 0.0) {
            return bad("cruise_speed must be positive");
        }
        if !(0.0..=100.0).contains(&self.battery_return_level) {
            return bad("battery_return_level must be a percentage");
        }
        if let BollHalt::Dwell(s) = self.boll_halt {
            if !(s > 0.0) {
                return bad("boll dwell must be positive");
            }
        }
        if self.guidance_period == 0 || self.guidance_downscale == 0 {
            return bad("guidance period and downscale must be at least 1");
        }
        if !(self.capture_radius > 0.0) || !(self.max_sim_time > 0.0) || !(self.wall_budget > 0.0) {
            return bad("capture radius and budgets must be positive");
        }
        if self.discharge_rate < 0.0 {
            return bad("discharge_rate must be non-negative");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }
}

// ---------------------------------------------------------------- runner

/// Sensor models used during a mission.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSuite {
    pub lidar: LidarSpec,
    pub gps: GpsNoiseModel,
    pub imu: ImuNoise,
    pub odometry: OdometryNoise,
    pub camera: CameraIntrinsics,
    /// Fraction of mask pixels relabelled at random.
    pub mask_noise: f64,
    pub bolls: BollDetectorSpec,
}

impl Default for SensorSuite {
    fn default() -> Self {
        Self {
            lidar: LidarSpec {
                noise_sigma: 0.01,
                ..LidarSpec::default()
            },
            gps: GpsNoiseModel::default(),
            imu: ImuNoise::default(),
            odometry: OdometryNoise {
                trans_mult: 0.02,
                rot_mult: 0.02,
                trans_add: 0.0005,
                rot_add: 0.0005,
            },
            camera: CameraIntrinsics::default(),
            mask_noise: 0.0,
            bolls: BollDetectorSpec::default(),
        }
    }
}

impl SensorSuite {
    /// No noise on any channel.
    pub fn noiseless() -> Self {
        Self {
            lidar: LidarSpec::default(),
            odometry: OdometryNoise::default(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        self.camera.validate()?;
        if !(0.0..=1.0).contains(&self.mask_noise) {
            return Err(Error::Config("mask_noise must lie in [0, 1]".into()));
        }
        let o = &self.odometry;
        let all = [
            self.gps.white_sigma,
            self.gps.drift_step_sigma,
            self.imu.yaw_sigma,
            self.imu.yaw_rate_sigma,
            o.trans_mult,
            o.rot_mult,
            o.trans_add,
            o.rot_add,
        ];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("noise parameters must be non-negative".into()));
        }
        Ok(())
    }
}

/// Navigation-stack parameters shared by both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavParams {
    pub dwa: DwaConfig,
    pub inflation: InflationParams,
    pub steering: SteeringLaw,
    pub filter: FilterConfig,
    /// Length of the straight run-in before each waypoint.
    pub approach: f64,
    /// Distance off the reference path that forces a replan.
    pub replan_deviation: f64,
    /// Motion since the last scan correction that triggers the next one.
    pub update_min_d: f64,
    pub update_min_a: f64,
    /// Tick interval between obstacle-layer rebuilds in GPS mode.
    pub costmap_period: usize,
    /// Trace limit for the GPS-mode obstacle layer.
    pub obstacle_range: f64,
    /// Safe-stop ticks after which an unreachable waypoint is skipped.
    pub skip_after: usize,
    /// Map mode starts with an in-place spin until the particle spread is
    /// below these (metres, radians) or `settle_max_turn` has been turned.
    pub settle_xy: f64,
    pub settle_yaw: f64,
    pub settle_omega: f64,
    pub settle_max_turn: f64,
}

impl Default for NavParams {
    fn default() -> Self {
        Self {
            dwa: DwaConfig::default(),
            inflation: InflationParams::default(),
            steering: SteeringLaw::default(),
            filter: FilterConfig::default(),
            approach: 1.0,
            replan_deviation: 0.5,
            update_min_d: 0.05,
            update_min_a: 0.05,
            costmap_period: 10,
            obstacle_range: 5.0,
            skip_after: 50,
            settle_xy: 0.03,
            settle_yaw: 1f64.to_radians(),
            settle_omega: 0.5,
            settle_max_turn: std::f64::consts::TAU,
        }
    }
}

/// What the navigator believes about the robot this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickInputs {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Measured body velocities (wheel encoders).
    pub v: f64,
    pub omega: f64,
    pub battery: f64,
    /// Fresh guidance output, if a frame was processed this tick.
    pub guidance: Option<SteeringCorrection>,
    /// A plant with visible bolls that has not been served yet.
    pub boll_plant: Option<usize>,
    /// Standard deviations of the pose estimate (position, yaw), when the
    /// estimator reports them.
    pub spread: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Localization,
    NoPath,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCommand {
    pub cmd: Twist,
    /// Length of this tick; shorter than the control period only on the
    /// final approach to a waypoint.
    pub duration: f64,
    pub correction_deg: f64,
    pub stop: Option<StopReason>,
}

/// Mission state plus the planning caches needed to produce commands.
#[derive(Debug, Clone)]
pub struct Navigator {
    pub phase: Phase,
    pub index: usize,
    pub targets: Vec<Waypoint>,
    pub home: Waypoint,
    pub corridor_x: Vec<f64>,
    pub reached: Vec<bool>,
    pub mode: NavMode,
    gps_points: Vec<GeoPoint>,
    anchor: GeoAnchor,
    pub costmap: Costmap,
    pub path: Vec<(f64, f64)>,
    path_key: Option<(usize, bool)>,
    pending_arrival: bool,
    prev_along: Option<f64>,
    dwell_until: f64,
    settle_turned: f64,
    blocked_ticks: usize,
    pub skipped: usize,
    pub recoveries: usize,
    pub last_cmd: Twist,
    farm: FarmConfig,
    robot: RobotSpec,
    config: MissionConfig,
    params: NavParams,
}

fn unit(yaw: f64) -> (f64, f64) {
    (yaw.cos(), yaw.sin())
}

fn segment_clear(cm: &Costmap, a: (f64, f64), b: (f64, f64)) -> bool {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let n = (len / (0.5 * cm.resolution)).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        cm.is_safe(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    })
}

/// Straight run-in when the line of sight is free, A* otherwise. The last
/// leg always ends on the waypoint along its heading.
pub fn reference_path(cm: &Costmap, from: (f64, f64), target: &Waypoint, approach: f64) -> Result<Vec<(f64, f64)>> {
    let (ux, uy) = unit(target.yaw);
    let wp = (target.x, target.y);
    let staging = (wp.0 - approach * ux, wp.1 - approach * uy);
    let goal = if approach > 0.0 && cm.is_safe(staging.0, staging.1) && segment_clear(cm, staging, wp) {
        staging
    } else {
        wp
    };
    let mut pts = if segment_clear(cm, from, goal) {
        vec![from, goal]
    } else {
        let s = cm.nearest_safe_cell(from.0, from.1, 20).ok_or(Error::InvalidEndpoint("start"))?;
        let g = cm.nearest_safe_cell(goal.0, goal.1, 20).ok_or(Error::InvalidEndpoint("goal"))?;
        let mut p = plan_cells(cm, s, g)?.points;
        p.insert(0, from);
        p.push(goal);
        p
    };
    if goal != wp {
        pts.push(wp);
    }
    Ok(pts)
}

impl Navigator {
    pub fn new(
        plan: &WaypointPlan,
        anchor: &GeoAnchor,
        farm: &FarmConfig,
        costmap: Costmap,
        robot: RobotSpec,
        config: MissionConfig,
        params: NavParams,
    ) -> Result<Self> {
        plan.validate()?;
        let targets = plan.targets(anchor)?;
        Ok(Self {
            phase: Phase::Idle,
            index: 0,
            reached: vec![false; targets.len()],
            targets,
            mode: plan.mode,
            gps_points: plan.gps_waypoints.iter().map(|w| w.point).collect(),
            anchor: *anchor,
            home: plan.home,
            corridor_x: plan.corridor_x.clone(),
            costmap,
            path: Vec::new(),
            path_key: None,
            pending_arrival: false,
            prev_along: None,
            dwell_until: 0.0,
            settle_turned: 0.0,
            blocked_ticks: 0,
            skipped: 0,
            recoveries: 0,
            last_cmd: Twist::ZERO,
            farm: farm.clone(),
            robot,
            config,
            params,
        })
    }

    fn returning(&self) -> bool {
        self.phase == Phase::ReturnHome
    }

    fn target(&self) -> Option<Waypoint> {
        if self.returning() {
            Some(self.home)
        } else {
            self.targets.get(self.index).copied()
        }
    }

    /// True when the next tick would run in a row and may use a frame.
    pub fn wants_guidance(&self, x: f64, y: f64) -> bool {
        matches!(self.phase, Phase::RowFollowing | Phase::Turning)
            && classify_phase((x, y), &self.corridor_x, &self.farm) == Phase::RowFollowing
    }

    /// Swaps in a new costmap; the path is re-checked against it.
    pub fn set_costmap(&mut self, cm: Costmap) {
        self.costmap = cm;
        if self.path.windows(2).any(|w| !segment_clear(&self.costmap, w[0], w[1])) {
            self.path_key = None;
        }
    }

    fn advance(&mut self, reached: bool) {
        self.pending_arrival = false;
        self.prev_along = None;
        self.path_key = None;
        self.blocked_ticks = 0;
        if self.returning() {
            self.phase = Phase::Done;
            return;
        }
        self.reached[self.index] = reached;
        self.index += 1;
        if self.index >= self.targets.len() {
            self.phase = Phase::Done;
        }
    }

    fn stop(&mut self, reason: StopReason, dt: f64) -> StepCommand {
        self.last_cmd = Twist::ZERO;
        StepCommand {
            cmd: Twist::ZERO,
            duration: dt,
            correction_deg: 0.0,
            stop: Some(reason),
        }
    }

    /// Degenerate localization: hold still this tick.
    pub fn safe_stop(&mut self, dt: f64) -> StepCommand {
        self.stop(StopReason::Localization, dt)
    }

    /// One control decision.
    pub fn mission_step(&mut self, inp: &TickInputs) -> Result<StepCommand> {
        let dt = self.config.dt();
        let here = (inp.x, inp.y);
        let idle = StepCommand {
            cmd: Twist::ZERO,
            duration: dt,
            correction_deg: 0.0,
            stop: None,
        };
        if self.phase == Phase::Done {
            self.last_cmd = Twist::ZERO;
            return Ok(idle);
        }
        if self.pending_arrival {
            let ok = match self.target() {
                Some(t) if self.returning() => reached_map(here, (t.x, t.y), self.config.map_threshold),
                Some(_) => self.reached_now(here)?,
                None => false,
            };
            self.advance(ok);
            if self.phase == Phase::Done {
                self.last_cmd = Twist::ZERO;
                return Ok(idle);
            }
        }
        if inp.battery <= self.config.battery_return_level && !self.returning() {
            self.phase = Phase::ReturnHome;
            self.path_key = None;
            self.prev_along = None;
        }
        if self.phase == Phase::BollDwell {
            if inp.time < self.dwell_until {
                self.last_cmd = Twist::ZERO;
                return Ok(idle);
            }
            self.phase = classify_phase(here, &self.corridor_x, &self.farm);
        }
        if self.phase == Phase::Idle {
            if let Some((sxy, syaw)) = inp.spread {
                let p = &self.params;
                let settled = sxy <= p.settle_xy && syaw <= p.settle_yaw;
                if !settled && self.settle_turned < p.settle_max_turn {
                    self.settle_turned += p.settle_omega * dt;
                    let cmd = Twist::new(0.0, p.settle_omega);
                    self.last_cmd = cmd;
                    return Ok(StepCommand { cmd, ..idle });
                }
            }
        }
        match self.phase {
            Phase::Idle => self.phase = Phase::NavigateToWaypoint,
            Phase::NavigateToWaypoint if self.index > 0 => {
                self.phase = classify_phase(here, &self.corridor_x, &self.farm)
            }
            Phase::RowFollowing | Phase::Turning => self.phase = classify_phase(here, &self.corridor_x, &self.farm),
            _ => {}
        }
        if let (BollHalt::Dwell(secs), Some(_), Phase::RowFollowing) = (self.config.boll_halt, inp.boll_plant, self.phase) {
            self.phase = Phase::BollDwell;
            self.dwell_until = inp.time + secs;
            self.last_cmd = Twist::ZERO;
            return Ok(idle);
        }
        let Some(target) = self.target() else {
            self.phase = Phase::Done;
            return Ok(idle);
        };

        // gate: passing the waypoint's perpendicular line near it counts as arrival
        let (ux, uy) = unit(target.yaw);
        let (ex, ey) = (inp.x - target.x, inp.y - target.y);
        let along = ex * ux + ey * uy;
        let lateral = (-ex * uy + ey * ux).abs();
        let crossed = self.prev_along.is_some_and(|p| p < 0.0 && along >= 0.0) && lateral <= 1.0;
        self.prev_along = Some(along);
        if crossed {
            self.pending_arrival = true;
            return self.mission_step(inp);
        }

        let row = self.phase == Phase::RowFollowing;
        let w_cap = MAX_TURN_DEG.to_radians() / dt;
        let clamp_row = |w: f64| if row { w.clamp(-w_cap, w_cap) } else { w };

        if let Some(cmd) = self.capture(inp, &target, dt) {
            let cmd = StepCommand {
                cmd: Twist::new(cmd.cmd.v, clamp_row(cmd.cmd.omega)),
                ..cmd
            };
            self.last_cmd = cmd.cmd;
            return Ok(cmd);
        }

        let key = (self.index, self.returning());
        let off_path = self.path.len() >= 2 && project_onto(&self.path, here).2 > self.params.replan_deviation;
        if self.path_key != Some(key) || off_path {
            match reference_path(&self.costmap, here, &target, self.params.approach) {
                Ok(p) => {
                    self.path = p;
                    self.path_key = Some(key);
                    self.blocked_ticks = 0;
                }
                Err(Error::NoPath | Error::InvalidEndpoint(_)) => {
                    self.blocked_ticks += 1;
                    if self.blocked_ticks >= self.params.skip_after && !self.returning() {
                        self.skipped += 1;
                        self.advance(false);
                    }
                    return Ok(self.stop(StopReason::NoPath, dt));
                }
                Err(e) => return Err(e),
            }
        }

        let est = RobotState {
            x: inp.x,
            y: inp.y,
            yaw: inp.yaw,
            v: inp.v,
            omega: inp.omega,
            battery: inp.battery,
            time: inp.time,
        };
        let lim = DwaLimits {
            max_speed: self.config.cruise_speed,
            max_yaw_rate: self.robot.max_yaw_rate,
            max_accel: self.robot.max_accel,
            max_yaw_accel: self.robot.max_yaw_accel,
        };
        let out = plan_local_dwa(&est, &self.path, &self.costmap, &self.params.dwa, &lim)?;
        if out.status == DwaStatus::Recovery {
            self.recoveries += 1;
        }
        let mut cmd = out.cmd;
        let mut correction_deg = 0.0;
        if let (true, Some(c)) = (row, inp.guidance) {
            correction_deg = c.angle;
            if c.confidence == Confidence::Full && c.angle != 0.0 {
                let w = c.angle.to_radians() / dt;
                let over = Twist::new(cmd.v, w);
                if rollout_is_clear(&rollout(&est, over, &self.params.dwa), &self.costmap, &self.params.dwa) {
                    cmd = over;
                }
            }
        }
        cmd.omega = clamp_row(cmd.omega);
        self.last_cmd = cmd;
        Ok(StepCommand {
            cmd,
            duration: dt,
            correction_deg,
            stop: None,
        })
    }

    fn reached_now(&self, here: (f64, f64)) -> Result<bool> {
        match self.mode {
            NavMode::Map => {
                let t = &self.targets[self.index];
                Ok(reached_map(here, (t.x, t.y), self.config.map_threshold))
            }
            NavMode::Gps => {
                let p = map_to_gps(here.0, here.1, &self.anchor)?;
                Ok(reached_gps(p, self.gps_points[self.index], self.config.gps_threshold))
            }
        }
    }

    /// Constant-curvature arc that ends exactly on the waypoint. The final
    /// tick is shortened to land on it; the one before is split evenly so no
    /// tick is shorter than half a period.
    fn capture(&mut self, inp: &TickInputs, target: &Waypoint, dt: f64) -> Option<StepCommand> {
        let (dx, dy) = (target.x - inp.x, target.y - inp.y);
        let d = dx.hypot(dy);
        if d > self.config.capture_radius {
            return None;
        }
        if d < 1e-9 {
            self.pending_arrival = true;
            return Some(StepCommand {
                cmd: Twist::ZERO,
                duration: dt,
                correction_deg: 0.0,
                stop: None,
            });
        }
        let alpha = normalize_angle(dy.atan2(dx) - inp.yaw);
        if alpha.abs() > std::f64::consts::FRAC_PI_4 {
            return None;
        }
        let kappa = 2.0 * alpha.sin() / d;
        let s = if alpha.abs() < 1e-12 { d } else { d * alpha / alpha.sin() };
        let floor = self.robot.max_accel * dt;
        let v = if inp.v >= floor {
            inp.v.min(self.config.cruise_speed)
        } else {
            (inp.v + floor).min(self.config.cruise_speed)
        };
        let duration = if s <= v * dt {
            self.pending_arrival = true;
            s / v
        } else if s <= 2.0 * v * dt {
            s / (2.0 * v)
        } else {
            dt
        };
        let cmd = Twist::new(v, kappa * v);
        let arc = DwaConfig {
            sim_horizon: s / v,
            dt: (s / v / 10.0).max(1e-3),
            ..self.params.dwa
        };
        let probe = RobotState::at(inp.x, inp.y, inp.yaw);
        if !rollout_is_clear(&rollout(&probe, cmd, &arc), &self.costmap, &arc) {
            self.pending_arrival = false;
            return None;
        }
        Some(StepCommand {
            cmd,
            duration,
            correction_deg: 0.0,
            stop: None,
        })
    }
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone)]
pub struct MissionSetup<'a> {
    pub world: &'a FarmWorld,
    pub plan: &'a WaypointPlan,
    pub robot: RobotSpec,
    pub sensors: SensorSuite,
    pub config: MissionConfig,
    pub params: NavParams,
    /// Prior map; required in map mode, ignored in GPS mode.
    pub map: Option<&'a TernaryMap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionOutcome {
    pub mode: NavMode,
    pub completed: bool,
    pub final_phase: Phase,
    /// Simulated seconds.
    pub duration: f64,
    pub ticks: usize,
    /// True poses; in GPS mode `fixes` carries the same samples in lat/lon.
    pub trajectory: TrajectoryLog,
    /// Raw receiver output (GPS mode).
    pub receiver_fixes: Vec<FixSample>,
    pub mission_csv: String,
    pub guidance_csv: String,
    /// Phase and waypoint index after each decision.
    pub phases: Vec<Phase>,
    pub indices: Vec<usize>,
    pub reached: Vec<bool>,
    pub skipped: usize,
    pub collisions: usize,
    pub row_ticks: usize,
    pub row_deviation_sum: f64,
    /// Largest |commanded yaw rate| on a RowFollowing tick.
    pub max_row_yaw_rate: f64,
    pub localization_stops: usize,
    pub no_path_stops: usize,
    pub recoveries: usize,
    pub abort: Option<String>,
}

impl MissionOutcome {
    pub fn mean_row_deviation(&self) -> Option<f64> {
        (self.row_ticks > 0).then(|| self.row_deviation_sum / self.row_ticks as f64)
    }
}

pub const MISSION_CSV_HEADER: &str = "t,phase,waypoint_index,x_est,y_est,yaw_est,v_cmd,w_cmd,correction_deg,battery\n";

/// Margin added around the field for planning and mapping grids.
pub const GRID_MARGIN: f64 = 1.0;
pub const GRID_RESOLUTION: f64 = 0.05;
/// Clearance the robot body keeps from lethal cells.
pub const FOOTPRINT_PADDING: f64 = 0.08;

/// Empty grid covering the field plus [`GRID_MARGIN`].
pub fn field_grid(world: &FarmWorld) -> OccupancyGrid {
    let b = world.bounds;
    let origin = (b.min_x - GRID_MARGIN, b.min_y - GRID_MARGIN);
    let width = ((b.width() + 2.0 * GRID_MARGIN) / GRID_RESOLUTION).ceil() as usize;
    let height = ((b.height() + 2.0 * GRID_MARGIN) / GRID_RESOLUTION).ceil() as usize;
    OccupancyGrid::new(width, height, GRID_RESOLUTION, origin)
}

/// True when the rectangular footprint overlaps any plant footprint.
pub fn footprint_contacts(world: &FarmWorld, state: &RobotState, spec: &RobotSpec) -> bool {
    let (hl, hw) = (0.5 * spec.length, 0.5 * spec.width);
    let (s, c) = state.yaw.sin_cos();
    world
        .plants_near(state.x, state.y, spec.circumscribed_radius())
        .any(|p| {
            let (dx, dy) = (p.center.0 - state.x, p.center.1 - state.y);
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            let (qx, qy) = (lx.clamp(-hl, hl), ly.clamp(-hw, hw));
            (lx - qx).hypot(ly - qy) < p.footprint_radius
        })
}

enum Estimator {
    Gps {
        gps: GpsSimulator,
        imu: ImuSimulator,
        layer: OccupancyGrid,
    },
    Map {
        filter: Box<ParticleFilter>,
        odom_rng: ChaCha8Rng,
        moved: (f64, f64),
        last: (f64, f64, f64),
    },
}

const LIDAR_STREAM: u64 = 0x11da;
const ODOM_STREAM: u64 = 0x0d0;
const FILTER_STREAM: u64 = 0xf11;
const MASK_STREAM: u64 = 0x3a5c;

fn sensor_offset(lidar: &LidarSpec) -> SensorOffset {
    let (x, y, yaw) = lidar_pose_2d(&RobotState::at(0.0, 0.0, 0.0), lidar);
    SensorOffset { x, y, yaw }
}

fn gps_costmap(layer: &OccupancyGrid, params: &InflationParams) -> Costmap {
    let p = InflationParams {
        unknown_is_lethal: false,
        ..*params
    };
    inflate(&threshold_map(layer), &p)
}

/// Runs a mission from the home pose until Done, ReturnHome completion or a
/// budget runs out.
pub fn run_mission(setup: &MissionSetup) -> Result<MissionOutcome> {
    let MissionSetup {
        world,
        plan,
        robot,
        sensors,
        config,
        params,
        map,
    } = setup;
    config.validate()?;
    robot.validate()?;
    sensors.validate()?;
    params.dwa.validate()?;
    let anchor = world.geo_anchor;
    let farm = &world.config;
    let dt = config.dt();
    let seed = config.seed;
    let home = plan.home;
    let mut truth = RobotState::at(home.x, home.y, home.yaw);
    let inflation = InflationParams {
        inscribed_radius: robot.inscribed_radius(),
        ..params.inflation
    };

    let (mut est, costmap) = match plan.mode {
        NavMode::Gps => {
            let layer = field_grid(world);
            let cm = gps_costmap(&layer, &inflation);
            let gps = GpsSimulator::new(GpsNoiseModel { seed, ..sensors.gps });
            let imu = ImuSimulator::new(ImuNoise { seed, ..sensors.imu });
            (Estimator::Gps { gps, imu, layer }, cm)
        }
        NavMode::Map => {
            let map = map.ok_or_else(|| Error::Config("map mode needs a prior map".into()))?;
            let field = build_likelihood_field(map, params.filter.sigma_hit, params.filter.floor)?;
            let mut filter = ParticleFilter::new(params.filter, field, sensor_offset(&sensors.lidar), stream_rng(seed, FILTER_STREAM));
            filter.init_around(home.x, home.y, home.yaw);
            let e = filter.estimate()?;
            let est = Estimator::Map {
                filter: Box::new(filter),
                odom_rng: stream_rng(seed, ODOM_STREAM),
                moved: (f64::INFINITY, 0.0),
                last: (e.x, e.y, e.yaw),
            };
            (est, inflate(map, &inflation))
        }
    };
    let params = &NavParams {
        dwa: DwaConfig {
            footprint: Some(params.dwa.footprint.unwrap_or(Footprint {
                half_length: 0.5 * robot.length,
                half_width: 0.5 * robot.width,
                padding: FOOTPRINT_PADDING,
            })),
            ..params.dwa
        },
        ..*params
    };
    let mut nav = Navigator::new(plan, &anchor, farm, costmap, *robot, *config, *params)?;
    let mut lidar_rng = stream_rng(seed, LIDAR_STREAM);
    let mut mask_rng = stream_rng(seed, MASK_STREAM);
    let guidance_cam = sensors.camera.downscaled(config.guidance_downscale);
    let model = SensorModel {
        raytrace_range: Some(params.obstacle_range),
        ..SensorModel::default()
    };
    let w_cap = MAX_TURN_DEG.to_radians() / dt;

    let mut out = MissionOutcome {
        mode: plan.mode,
        completed: false,
        final_phase: Phase::Idle,
        duration: 0.0,
        ticks: 0,
        trajectory: TrajectoryLog::default(),
        receiver_fixes: Vec::new(),
        mission_csv: String::from(MISSION_CSV_HEADER),
        guidance_csv: String::from(GUIDANCE_CSV_HEADER),
        phases: Vec::new(),
        indices: Vec::new(),
        reached: Vec::new(),
        skipped: 0,
        collisions: 0,
        row_ticks: 0,
        row_deviation_sum: 0.0,
        max_row_yaw_rate: 0.0,
        localization_stops: 0,
        no_path_stops: 0,
        recoveries: 0,
        abort: None,
    };
    let log_pose = |out: &mut MissionOutcome, s: &RobotState| -> Result<()> {
        out.trajectory.poses.push(PoseSample { t: s.time, x: s.x, y: s.y, yaw: s.yaw });
        if plan.mode == NavMode::Gps {
            let g = map_to_gps(s.x, s.y, &anchor)?;
            out.trajectory.fixes.push(FixSample { t: s.time, lat: g.lat, lon: g.lon });
        }
        Ok(())
    };
    log_pose(&mut out, &truth)?;

    let wall = Instant::now();
    let mut last_duration = dt;
    let mut in_contact = footprint_contacts(world, &truth, robot);
    let mut visited = vec![false; world.plants.len()];
    let mut tick = 0usize;
    loop {
        if truth.time > config.max_sim_time {
            out.abort = Some(format!("simulated time budget of {} s exhausted", config.max_sim_time));
            break;
        }
        if wall.elapsed().as_secs_f64() > config.wall_budget {
            out.abort = Some(format!("wall-clock budget of {} s exhausted", config.wall_budget));
            break;
        }
        let scan = simulate_lidar(world, &truth, &sensors.lidar, Some(&mut lidar_rng));
        let mut degenerate = false;
        let mut spread = None;
        let pose = match &mut est {
            Estimator::Gps { gps, imu, layer } => {
                let fix = gps.fix(&truth, &anchor, last_duration)?;
                out.receiver_fixes.push(FixSample { t: truth.time, lat: fix.lat, lon: fix.lon });
                let (x, y) = gps_to_map(fix.point(), &anchor)?;
                let yaw = imu.read(&truth).yaw;
                let believed = RobotState::at(x, y, yaw);
                if integrate_scan(layer, lidar_pose_2d(&believed, &sensors.lidar), &scan, &model).is_ok()
                    && tick % params.costmap_period == 0
                {
                    nav.set_costmap(gps_costmap(layer, &inflation));
                }
                (x, y, yaw)
            }
            Estimator::Map { filter, moved, last, .. } => {
                if moved.0 >= params.update_min_d || moved.1 >= params.update_min_a {
                    match filter.correct(&scan) {
                        Ok(_) => *moved = (0.0, 0.0),
                        Err(Error::DegenerateFilter) => {
                            degenerate = true;
                            filter.init_around(last.0, last.1, last.2);
                        }
                        Err(e) => return Err(e),
                    }
                }
                let e = filter.estimate()?;
                let c = &e.covariance;
                spread = Some(((c[0][0] + c[1][1]).max(0.0).sqrt(), c[2][2].max(0.0).sqrt()));
                *last = (e.x, e.y, e.yaw);
                *last
            }
        };

        let mut guidance = None;
        let mut boll_plant = None;
        if tick % config.guidance_period == 0 && nav.wants_guidance(pose.0, pose.1) {
            let cam = mount_pose_world(&truth, PRIMARY_CAMERA)?;
            let mut frame = render_segmentation(world, &cam, &guidance_cam);
            frame.timestamp = truth.time;
            if sensors.mask_noise > 0.0 {
                add_mask_noise(&mut frame, sensors.mask_noise, &mut mask_rng);
            }
            let g = guidance_from_frame(&frame, &params.steering);
            guidance_csv_row(&mut out.guidance_csv, truth.time, &g);
            guidance = Some(g.correction);
            if let BollHalt::Dwell(_) = config.boll_halt {
                boll_plant = next_boll_plant(world, &truth, sensors, &mut visited)?;
            }
        }

        let inputs = TickInputs {
            time: truth.time,
            x: pose.0,
            y: pose.1,
            yaw: pose.2,
            v: truth.v,
            omega: truth.omega,
            battery: truth.battery,
            guidance,
            boll_plant,
            spread,
        };
        let step = if degenerate {
            out.localization_stops += 1;
            nav.safe_stop(dt)
        } else {
            nav.mission_step(&inputs)?
        };
        if step.stop == Some(StopReason::NoPath) {
            out.no_path_stops += 1;
        }
        out.phases.push(nav.phase);
        out.indices.push(nav.index);
        let _ = writeln!(
            out.mission_csv,
            "{:.4},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            truth.time,
            nav.phase.name(),
            nav.index,
            pose.0,
            pose.1,
            pose.2,
            step.cmd.v,
            step.cmd.omega,
            step.correction_deg,
            truth.battery
        );
        if nav.phase == Phase::Done {
            break;
        }
        if nav.phase == Phase::RowFollowing {
            out.max_row_yaw_rate = out.max_row_yaw_rate.max(step.cmd.omega.abs());
            out.row_ticks += 1;
            out.row_deviation_sum += nav
                .corridor_x
                .iter()
                .map(|c| (truth.x - c).abs())
                .fold(f64::INFINITY, f64::min);
        }

        let next = step_kinematics(&truth, step.cmd, step.duration, robot)?;
        let next = step_battery(&next, step.duration, config.discharge_rate);
        if let Estimator::Map {
            filter, odom_rng, moved, ..
        } = &mut est
        {
            let d = simulate_odometry(&truth, &next, &sensors.odometry, odom_rng);
            filter.predict(&d);
            moved.0 += d.dx.hypot(d.dy);
            moved.1 += d.dyaw.abs();
        }
        let contact = footprint_contacts(world, &next, robot);
        if contact && !in_contact {
            out.collisions += 1;
        }
        in_contact = contact;
        truth = next;
        last_duration = step.duration;
        log_pose(&mut out, &truth)?;
        tick += 1;
    }
    debug_assert!(out.max_row_yaw_rate <= w_cap + 1e-12);
    out.completed = nav.phase == Phase::Done;
    out.final_phase = nav.phase;
    out.duration = truth.time;
    out.ticks = tick;
    out.reached = nav.reached.clone();
    out.skipped = nav.skipped;
    out.recoveries = nav.recoveries;
    Ok(out)
}

/// First unvisited plant with a boll visible to either side camera; marks it
/// visited.
fn next_boll_plant(world: &FarmWorld, truth: &RobotState, sensors: &SensorSuite, visited: &mut [bool]) -> Result<Option<usize>> {
    for (id, source) in [(SECONDARY_CAMERA, CameraSource::Secondary), (TERTIARY_CAMERA, CameraSource::Tertiary)] {
        let cam = mount_pose_world(truth, id)?;
        for det in detect_bolls(world, &cam, &sensors.camera, source, &sensors.bolls) {
            let p = det.world_point;
            let nearest = world
                .plants
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    let da = (a.1.center.0 - p.x).hypot(a.1.center.1 - p.y);
                    let db = (b.1.center.0 - p.x).hypot(b.1.center.1 - p.y);
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i);
            if let Some(i) = nearest {
                if !visited[i] {
                    visited[i] = true;
                    return Ok(Some(i));
                }
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::inflate;
    use crate::world::{generate_farm, rasterize_footprints};

    fn default_plan(mode: NavMode) -> (FarmWorld, WaypointPlan) {
        let world = generate_farm(&FarmConfig::default()).unwrap();
        let plan = generate_serpentine_waypoints(&world.config, mode, &world.geo_anchor, 3, false).unwrap();
        (world, plan)
    }

    #[test]
    fn default_farm_has_forty_waypoints() {
        let (_, plan) = default_plan(NavMode::Map);
        assert_eq!(plan.len(), 40);
        assert_eq!(plan.corridor_x.len(), 8);
        assert_eq!((plan.home.x, plan.home.y, plan.home.yaw), (-6.0, 1.0, 0.0));
        let (_, gps) = default_plan(NavMode::Gps);
        assert_eq!(gps.gps_waypoints.len(), 40);
        assert!(gps.map_waypoints.is_empty());
        gps.validate().unwrap();
    }

    #[test]
    fn corridors_sit_midway_between_rows() {
        let (world, plan) = default_plan(NavMode::Map);
        let mut row_x: Vec<f64> = world.plants.iter().map(|p| p.center.0).collect();
        row_x.sort_by(|a, b| b.partial_cmp(a).unwrap());
        row_x.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        assert_eq!(row_x.len(), 9);
        for (k, c) in plan.corridor_x.iter().enumerate() {
            assert!((row_x[k] - c - 0.9).abs() < 1e-9);
            assert!((c - row_x[k + 1] - 0.9).abs() < 1e-9);
        }
    }

    #[test]
    fn serpentine_order_and_headings() {
        let (world, plan) = default_plan(NavMode::Map);
        let farm = &world.config;
        let wps = &plan.map_waypoints;
        assert!((wps[0].y - (farm.row_start_y() - 1.5)).abs() < 1e-12);
        assert!((wps[4].y - (farm.row_end_y() + 1.5)).abs() < 1e-12);
        assert!((wps[5].y - wps[4].y).abs() < 1e-12);
        for (i, w) in wps.iter().enumerate() {
            let k = plan.corridor_of[i];
            let expect = if k % 2 == 0 { FRAC_PI_2 } else { -FRAC_PI_2 };
            assert_eq!(w.yaw, expect);
            assert_eq!(w.x, plan.corridor_x[k]);
        }
        assert!(plan.corridor_x.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn two_rows_make_one_corridor() {
        let farm = FarmConfig {
            n_rows: 2,
            ..FarmConfig::default()
        };
        let world = generate_farm(&farm).unwrap();
        let plan = generate_serpentine_waypoints(&farm, NavMode::Map, &world.geo_anchor, 3, false).unwrap();
        assert_eq!(plan.corridor_x.len(), 1);
        assert_eq!(plan.len(), 5);
        let one = FarmConfig {
            n_rows: 1,
            ..FarmConfig::default()
        };
        assert!(matches!(corridor_centerlines(&one, false), Err(Error::NoCorridor)));
    }

    #[test]
    fn outer_passes_add_two_corridors() {
        let xs = corridor_centerlines(&FarmConfig::default(), true).unwrap();
        assert_eq!(xs.len(), 10);
        assert!((xs[0] - (-8.1)).abs() < 1e-12);
    }

    #[test]
    fn arrival_thresholds() {
        assert!(reached_map((0.0, 0.0), (0.24, 0.0), 0.25));
        assert!(!reached_map((0.0, 0.0), (0.26, 0.0), 0.25));
        let a = GeoPoint { lat: 33.0, lon: -88.0 };
        let b = GeoPoint {
            lat: 33.0 + 3e-6,
            lon: -88.0 + 4e-6,
        };
        let d = degree_distance(a, b);
        assert!(reached_gps(a, b, d));
        assert!((d - 5e-6).abs() < 1e-12);
        let o = GeoPoint { lat: 0.0, lon: 0.0 };
        assert!(reached_gps(o, GeoPoint { lat: 3e-6, lon: 4e-6 }, 5e-6));
        assert!(!reached_gps(a, b, 4.9e-6));
    }

    #[test]
    fn phase_classification() {
        let farm = FarmConfig::default();
        let xs = corridor_centerlines(&farm, false).unwrap();
        let mid = 0.5 * (farm.row_start_y() + farm.row_end_y());
        assert_eq!(classify_phase((xs[2], mid), &xs, &farm), Phase::RowFollowing);
        assert_eq!(classify_phase((xs[2] + 0.6, mid), &xs, &farm), Phase::RowFollowing);
        assert_eq!(classify_phase((xs[2] + 0.61, mid), &xs, &farm), Phase::Turning);
        assert_eq!(classify_phase((xs[2], farm.row_end_y() + 2.0), &xs, &farm), Phase::Turning);
        assert_eq!(classify_phase((xs[2], farm.row_end_y()), &xs, &farm), Phase::Turning);
        assert_eq!(classify_phase((xs[2], farm.row_start_y()), &xs, &farm), Phase::Turning);
    }

    #[test]
    fn transition_relation() {
        use Phase::*;
        assert!(check_transitions(&[Idle, NavigateToWaypoint, Turning, RowFollowing, BollDwell, RowFollowing, Done]).is_ok());
        assert_eq!(check_transitions(&[Idle, RowFollowing]), Err((1, Idle, RowFollowing)));
        assert!(!transition_allowed(Done, Idle));
        assert!(!transition_allowed(ReturnHome, Turning));
        for p in [Idle, NavigateToWaypoint, RowFollowing, Turning, BollDwell, ReturnHome, Done] {
            assert_eq!(Phase::parse(p.name()), Some(p));
        }
    }

    #[test]
    fn survey_route_starts_and_ends_home() {
        let farm = FarmConfig::default();
        let home = Waypoint::new(-6.0, 1.0, 0.0);
        let r = survey_route(&farm, home, 0.5).unwrap();
        assert_eq!((r[0].0, r[0].1), (home.x, home.y));
        let last = r[r.len() - 1];
        assert_eq!((last.0, last.1), (home.x, home.y));
        assert!(r.windows(2).all(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1) <= 0.5 + 1e-9));
        assert!(survey_route(&farm, home, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        MissionConfig::default().validate().unwrap();
        let bad = MissionConfig {
            map_threshold: 0.0,
            ..MissionConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = MissionConfig {
            control_rate: -1.0,
            ..MissionConfig::default()
        };
        assert!(bad.validate().is_err());
        SensorSuite::default().validate().unwrap();
        SensorSuite::noiseless().validate().unwrap();
    }

    fn navigator(world: &FarmWorld, plan: &WaypointPlan) -> Navigator {
        let truth = threshold_map(&rasterize_footprints(world, GRID_RESOLUTION, GRID_MARGIN).unwrap());
        let robot = RobotSpec::default();
        let inflation = InflationParams {
            inscribed_radius: robot.inscribed_radius(),
            ..InflationParams::default()
        };
        let cm = inflate(&truth, &inflation);
        Navigator::new(
            plan,
            &world.geo_anchor,
            &world.config,
            cm,
            robot,
            MissionConfig::default(),
            NavParams::default(),
        )
        .unwrap()
    }

    fn inputs(x: f64, y: f64, yaw: f64, battery: f64) -> TickInputs {
        TickInputs {
            time: 10.0,
            x,
            y,
            yaw,
            v: 0.5,
            omega: 0.0,
            battery,
            guidance: None,
            boll_plant: None,
            spread: None,
        }
    }

    #[test]
    fn low_battery_returns_home() {
        let (world, plan) = default_plan(NavMode::Map);
        let mut nav = navigator(&world, &plan);
        let x = plan.corridor_x[0];
        nav.mission_step(&inputs(x, 8.0, FRAC_PI_2, 80.0)).unwrap();
        nav.index = 2;
        let before = nav.index;
        nav.mission_step(&inputs(x, 8.0, FRAC_PI_2, 39.0)).unwrap();
        assert_eq!(nav.phase, Phase::ReturnHome);
        assert_eq!(nav.target(), Some(plan.home));
        assert_eq!(nav.index, before);
    }

    #[test]
    fn done_is_absorbing() {
        let (world, plan) = default_plan(NavMode::Map);
        let mut nav = navigator(&world, &plan);
        nav.phase = Phase::Done;
        for _ in 0..3 {
            let c = nav.mission_step(&inputs(-9.9, 5.0, 0.0, 90.0)).unwrap();
            assert_eq!(c.cmd, Twist::ZERO);
            assert_eq!(nav.phase, Phase::Done);
        }
    }

    #[test]
    fn final_waypoint_ends_the_mission() {
        let (world, plan) = default_plan(NavMode::Map);
        let mut nav = navigator(&world, &plan);
        let last = plan.map_waypoints[39];
        nav.phase = Phase::Turning;
        nav.index = 39;
        nav.mission_step(&inputs(last.x, last.y + 0.3, last.yaw, 90.0)).unwrap();
        let c = nav.mission_step(&inputs(last.x, last.y, last.yaw, 90.0)).unwrap();
        let c = if nav.phase == Phase::Done { c } else { nav.mission_step(&inputs(last.x, last.y, last.yaw, 90.0)).unwrap() };
        assert_eq!(nav.phase, Phase::Done);
        assert_eq!(c.cmd, Twist::ZERO);
        assert!(nav.reached[39]);
    }

    #[test]
    fn row_override_is_clamped() {
        let (world, plan) = default_plan(NavMode::Map);
        let mut nav = navigator(&world, &plan);
        let x = plan.corridor_x[0];
        nav.phase = Phase::RowFollowing;
        nav.index = 2;
        let mut inp = inputs(x, 8.0, FRAC_PI_2, 90.0);
        inp.guidance = Some(SteeringCorrection {
            angle: 5.0,
            confidence: Confidence::Full,
        });
        let c = nav.mission_step(&inp).unwrap();
        let cap = MAX_TURN_DEG.to_radians() / MissionConfig::default().dt();
        assert_eq!(nav.phase, Phase::RowFollowing);
        assert!(c.cmd.omega.abs() <= cap + 1e-12);
        assert_eq!(c.correction_deg, 5.0);
    }
}
