//! Simulated lidar, GPS, IMU, wheel odometry and the camera oracles.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::geo::{map_to_gps, GeoAnchor, GeoPoint};
use crate::math::{normalize_angle, stream_rng, Pose3, Vec3};
use crate::robot::{compose_mount, mount, MountPose, RobotState, LIDAR};
use crate::world::{FarmWorld, SceneClass};

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

// ---------------------------------------------------------------- lidar

#[derive(Debug, Clone, PartialEq)]
pub struct LidarSpec {
    pub beam_count: usize,
    pub fov: f64,
    pub max_range: f64,
    pub mount: MountPose,
    /// Open intervals in the sensor frame; returns inside both are dropped.
    pub self_filter_y: (f64, f64),
    pub self_filter_z: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beam_count: 720,
            fov: 2.0 * PI,
            max_range: 30.0,
            mount: mount(LIDAR).expect("lidar mount").clone(),
            self_filter_y: (-10.0, 0.0),
            self_filter_z: (0.0, 0.5),
            noise_sigma: 0.0,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if self.beam_count == 0 || !(self.max_range > 0.0) || !(self.fov > 0.0) {
            return Err(Error::Config("lidar needs beams, a positive fov and a positive range".into()));
        }
        if self.self_filter_y.0 > self.self_filter_y.1 || self.self_filter_z.0 > self.self_filter_z.1 {
            return Err(Error::Config("lidar self-filter intervals are reversed".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("lidar noise must be non-negative".into()));
        }
        Ok(())
    }

    /// Beam angles in the sensor frame, counter-clockwise from -fov/2.
    pub fn beam_angles(&self) -> Vec<f64> {
        let n = self.beam_count;
        let full = self.fov >= 2.0 * PI - 1e-9;
        let step = if full || n == 1 { self.fov / n as f64 } else { self.fov / (n - 1) as f64 };
        (0..n).map(|k| -0.5 * self.fov + step * k as f64).collect()
    }

    /// True when a sensor-frame point falls inside the self-filter box.
    pub fn filtered(&self, p: Vec3) -> bool {
        let (y0, y1) = self.self_filter_y;
        let (z0, z1) = self.self_filter_z;
        p.y > y0 && p.y < y1 && p.z > z0 && p.z < z1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub angles: Vec<f64>,
    /// `max_range` marks beams without a return.
    pub ranges: Vec<f64>,
    pub max_range: f64,
    pub timestamp: f64,
}

impl LidarScan {
    /// Replaces returns whose sensor-frame endpoint lies in the filter box.
    pub fn apply_self_filter(&mut self, spec: &LidarSpec, points: &[Vec3]) {
        for (r, p) in self.ranges.iter_mut().zip(points) {
            if *r < self.max_range && spec.filtered(*p) {
                *r = self.max_range;
            }
        }
    }
}

/// Planar (x, y, yaw) of the lidar in the map frame.
pub fn lidar_pose_2d(state: &RobotState, spec: &LidarSpec) -> (f64, f64, f64) {
    let p = compose_mount(state, &spec.mount);
    (p.position.x, p.position.y, p.rpy().2)
}

/// One ray per beam from the lidar mount. `rng` adds range noise when
/// `noise_sigma` is positive.
pub fn simulate_lidar(
    world: &FarmWorld,
    state: &RobotState,
    spec: &LidarSpec,
    rng: Option<&mut ChaCha8Rng>,
) -> LidarScan {
    let pose = compose_mount(state, &spec.mount);
    let angles = spec.beam_angles();
    let mut ranges = Vec::with_capacity(angles.len());
    let mut points = Vec::with_capacity(angles.len());
    for &a in &angles {
        let local = Vec3::new(a.cos(), a.sin(), 0.0);
        let dir = pose.rotation.apply(&local);
        let hit = world.cast_ray(pose.position, dir, spec.max_range);
        let r = if hit.class == SceneClass::Sky { spec.max_range } else { hit.range.min(spec.max_range) };
        ranges.push(r);
        points.push(local.scale(r));
    }
    if let Some(rng) = rng {
        if spec.noise_sigma > 0.0 {
            for r in ranges.iter_mut().filter(|r| **r < spec.max_range) {
                *r = (*r + gauss(rng, spec.noise_sigma)).clamp(1e-3, spec.max_range);
            }
        }
    }
    let mut scan = LidarScan {
        angles,
        ranges,
        max_range: spec.max_range,
        timestamp: state.time,
    };
    scan.apply_self_filter(spec, &points);
    scan
}

// ---------------------------------------------------------------- gps

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
    pub timestamp: f64,
}

impl GpsFix {
    pub fn point(&self) -> GeoPoint {
        GeoPoint { lat: self.lat, lon: self.lon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsNoiseModel {
    /// Per-fix white noise, degrees.
    pub white_sigma: f64,
    /// Random-walk increment per second, degrees.
    pub drift_step_sigma: f64,
    pub seed: u64,
}

impl Default for GpsNoiseModel {
    fn default() -> Self {
        Self {
            white_sigma: 0.0,
            drift_step_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Stateful receiver: carries the drift between fixes.
#[derive(Debug, Clone)]
pub struct GpsSimulator {
    pub model: GpsNoiseModel,
    pub drift: (f64, f64),
    rng: ChaCha8Rng,
}

impl GpsSimulator {
    pub fn new(model: GpsNoiseModel) -> Self {
        Self {
            model,
            drift: (0.0, 0.0),
            rng: stream_rng(model.seed, 0x6905),
        }
    }

    /// Advances the drift by `dt` and returns a fix for the true position.
    pub fn fix(&mut self, state: &RobotState, anchor: &GeoAnchor, dt: f64) -> Result<GpsFix> {
        let truth = map_to_gps(state.x, state.y, anchor)?;
        let walk = self.model.drift_step_sigma * dt.max(0.0).sqrt();
        self.drift.0 += gauss(&mut self.rng, walk);
        self.drift.1 += gauss(&mut self.rng, walk);
        let lat = truth.lat + self.drift.0 + gauss(&mut self.rng, self.model.white_sigma);
        let lon = truth.lon + self.drift.1 + gauss(&mut self.rng, self.model.white_sigma);
        Ok(GpsFix {
            lat: lat.clamp(-90.0, 90.0),
            lon: wrap_lon(lon),
            timestamp: state.time,
        })
    }
}

fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

// ---------------------------------------------------------------- imu

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuNoise {
    pub yaw_sigma: f64,
    pub yaw_rate_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub yaw: f64,
    pub yaw_rate: f64,
    pub timestamp: f64,
}

#[derive(Debug, Clone)]
pub struct ImuSimulator {
    pub noise: ImuNoise,
    rng: ChaCha8Rng,
}

impl ImuSimulator {
    pub fn new(noise: ImuNoise) -> Self {
        Self {
            noise,
            rng: stream_rng(noise.seed, 0x1a0),
        }
    }

    pub fn read(&mut self, state: &RobotState) -> ImuReading {
        ImuReading {
            yaw: normalize_angle(state.yaw + gauss(&mut self.rng, self.noise.yaw_sigma)),
            yaw_rate: state.omega + gauss(&mut self.rng, self.noise.yaw_rate_sigma),
            timestamp: state.time,
        }
    }
}

// ---------------------------------------------------------------- odometry

/// Wheel odometry noise: each component gets a multiplicative term scaled by
/// the motion and an additive term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryNoise {
    pub trans_mult: f64,
    pub rot_mult: f64,
    pub trans_add: f64,
    pub rot_add: f64,
}

/// Displacement in the previous body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdomDelta {
    pub dx: f64,
    pub dy: f64,
    pub dyaw: f64,
}

impl OdomDelta {
    /// Applies the delta to a planar pose.
    pub fn apply(&self, pose: (f64, f64, f64)) -> (f64, f64, f64) {
        let (s, c) = pose.2.sin_cos();
        (
            pose.0 + c * self.dx - s * self.dy,
            pose.1 + s * self.dx + c * self.dy,
            normalize_angle(pose.2 + self.dyaw),
        )
    }
}

pub fn true_odometry(prev: &RobotState, new: &RobotState) -> OdomDelta {
    let (s, c) = prev.yaw.sin_cos();
    let (gx, gy) = (new.x - prev.x, new.y - prev.y);
    OdomDelta {
        dx: c * gx + s * gy,
        dy: -s * gx + c * gy,
        dyaw: normalize_angle(new.yaw - prev.yaw),
    }
}

pub fn simulate_odometry(prev: &RobotState, new: &RobotState, noise: &OdometryNoise, rng: &mut ChaCha8Rng) -> OdomDelta {
    let d = true_odometry(prev, new);
    let moved = d.dx.hypot(d.dy);
    let turned = d.dyaw.abs();
    if moved == 0.0 && turned == 0.0 {
        return d;
    }
    let t_sigma = noise.trans_mult * moved + noise.trans_add;
    let r_sigma = noise.rot_mult * turned + noise.rot_add;
    OdomDelta {
        dx: d.dx + gauss(rng, t_sigma),
        dy: d.dy + gauss(rng, t_sigma),
        dyaw: d.dyaw + gauss(rng, r_sigma),
    }
}

// ---------------------------------------------------------------- cameras

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Degrees.
    pub hfov: f64,
    pub vfov: f64,
    pub fps: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            hfov: 69.0,
            vfov: 42.0,
            fps: 24.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0
            && self.height > 0
            && self.hfov > 0.0
            && self.hfov < 180.0
            && self.vfov > 0.0
            && self.vfov < 180.0
            && self.fps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::error::Error::Config("camera intrinsics out of range".into()))
        }
    }

    pub fn fx(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.hfov.to_radians()).tan()
    }

    pub fn fy(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.vfov.to_radians()).tan()
    }

    /// Same field of view at a lower pixel count.
    pub fn downscaled(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            width: (self.width / f).max(1),
            height: (self.height / f).max(1),
            ..*self
        }
    }

    /// Camera-frame ray (x forward, y left, z up) through a pixel centre.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        self.subpixel_ray(u as f64 + 0.5, v as f64 + 0.5)
    }

    pub fn subpixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let cu = 0.5 * self.width as f64;
        let cv = 0.5 * self.height as f64;
        Vec3::new(1.0, -(u - cu) / self.fx(), -(v - cv) / self.fy())
    }

    /// Pixel coordinates of a camera-frame point, if in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        if p.x <= 0.0 {
            return None;
        }
        let u = 0.5 * self.width as f64 - self.fx() * p.y / p.x;
        let v = 0.5 * self.height as f64 - self.fy() * p.z / p.x;
        Some((u, v))
    }
}

/// Far enough that rays a fraction of a pixel below the horizon still find
/// the ground.
pub const CAMERA_MAX_RANGE: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SegMaskFrame {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub labels: Vec<SceneClass>,
    pub timestamp: f64,
}

impl SegMaskFrame {
    pub fn get(&self, u: usize, v: usize) -> SceneClass {
        self.labels[v * self.width + u]
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[*l as usize] += 1;
        }
        c
    }

    /// Horizontally mirrored copy.
    pub fn mirrored(&self) -> Self {
        let mut labels = Vec::with_capacity(self.labels.len());
        for row in self.labels.chunks(self.width) {
            labels.extend(row.iter().rev());
        }
        Self { labels, ..self.clone() }
    }

    /// Plain-text PGM (P2) with class ids as grey levels.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n2\n", self.width, self.height);
        for row in self.labels.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|c| (*c as u8).to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

pub fn render_segmentation(world: &FarmWorld, camera: &Pose3, intrinsics: &CameraIntrinsics) -> SegMaskFrame {
    let (w, h) = (intrinsics.width, intrinsics.height);
    let mut labels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let dir = camera.rotation.apply(&intrinsics.pixel_ray(u, v)).normalized();
            labels.push(world.cast_ray(camera.position, dir, CAMERA_MAX_RANGE).class);
        }
    }
    SegMaskFrame {
        width: w,
        height: h,
        labels,
        timestamp: 0.0,
    }
}

/// Flips each label to one of the other two classes with probability `rate`.
pub fn add_mask_noise(frame: &mut SegMaskFrame, rate: f64, rng: &mut ChaCha8Rng) {
    if rate <= 0.0 {
        return;
    }
    for l in frame.labels.iter_mut() {
        if rng.random::<f64>() < rate {
            let shift = 1 + rng.random_range(0..2usize);
            *l = SceneClass::ALL[(*l as usize + shift) % 3];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraSource {
    Secondary,
    Tertiary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BollDetection {
    pub bbox: BBox,
    pub source: CameraSource,
    pub world_point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BollDetectorSpec {
    pub bbox_size: f64,
    /// Bolls further than this from the camera are not reported.
    pub max_depth: f64,
    pub occlusion_tolerance: f64,
}

impl Default for BollDetectorSpec {
    fn default() -> Self {
        Self {
            bbox_size: 20.0,
            max_depth: 3.0,
            occlusion_tolerance: 0.05,
        }
    }
}

pub fn detect_bolls(
    world: &FarmWorld,
    camera: &Pose3,
    intrinsics: &CameraIntrinsics,
    source: CameraSource,
    spec: &BollDetectorSpec,
) -> Vec<BollDetection> {
    let (w, h) = (intrinsics.width as f64, intrinsics.height as f64);
    let half = 0.5 * spec.bbox_size;
    let mut out = Vec::new();
    let near = world.plants_near(camera.position.x, camera.position.y, spec.max_depth);
    for plant in near {
        for b in &plant.boll_points {
            let local = camera.to_local(b);
            if local.x > spec.max_depth {
                continue;
            }
            let Some((u, v)) = intrinsics.project(local) else { continue };
            if !(0.0..w).contains(&u) || !(0.0..h).contains(&v) {
                continue;
            }
            let offset = b.sub(&camera.position);
            let dist = offset.norm();
            let hit = world.cast_ray(camera.position, offset.scale(1.0 / dist), dist + 1.0);
            if hit.class == SceneClass::Sky || (hit.range - dist).abs() > spec.occlusion_tolerance {
                continue;
            }
            out.push(BollDetection {
                bbox: BBox {
                    x_min: (u - half).max(0.0),
                    y_min: (v - half).max(0.0),
                    x_max: (u + half).min(w),
                    y_max: (v + half).min(h),
                },
                source,
                world_point: *b,
            });
        }
    }
    out
}
