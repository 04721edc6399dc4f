//! Differential-drive platform: dimensions, kinematics, battery and the
//! sensor mount table.

use crate::error::{Error, Result};
use crate::math::{normalize_angle, Pose3, Rot3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotSpec {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub max_speed: f64,
    pub max_yaw_rate: f64,
    pub max_accel: f64,
    pub max_yaw_accel: f64,
    pub cruise_speed: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            length: 0.990,
            width: 0.670,
            height: 0.390,
            max_speed: 1.0,
            max_yaw_rate: 1.5,
            max_accel: 1.0,
            max_yaw_accel: 2.0,
            // 1.8 km/h
            cruise_speed: 0.5,
        }
    }
}

impl RobotSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.length,
            self.width,
            self.height,
            self.max_speed,
            self.max_yaw_rate,
            self.max_accel,
            self.max_yaw_accel,
            self.cruise_speed,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("robot dimensions and limits must be positive".into()));
        }
        if self.cruise_speed > self.max_speed {
            return Err(Error::Config("cruise_speed exceeds max_speed".into()));
        }
        Ok(())
    }

    /// Radius of the circle inscribed in the footprint.
    pub fn inscribed_radius(&self) -> f64 {
        0.5 * self.width.min(self.length)
    }

    pub fn circumscribed_radius(&self) -> f64 {
        0.5 * self.width.hypot(self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub omega: f64,
    pub battery: f64,
    pub time: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
            v: 0.0,
            omega: 0.0,
            battery: 100.0,
            time: 0.0,
        }
    }

    /// Base frame as a 3D pose on the ground plane.
    pub fn base_pose(&self) -> Pose3 {
        Pose3 {
            position: Vec3::new(self.x, self.y, 0.0),
            rotation: Rot3::from_rpy(0.0, 0.0, self.yaw),
        }
    }
}

/// Commanded body velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: f64,
    pub omega: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Body displacement for constant (v, ω) over dt, as (forward, left, dyaw).
pub fn arc_displacement(v: f64, omega: f64, dt: f64) -> (f64, f64, f64) {
    let dth = omega * dt;
    let half = 0.5 * dth;
    // chord length is v dt · sin(h)/h; the chord points along half the turn
    let sinc = if half.abs() < 1e-9 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    let chord = v * dt * sinc;
    (chord * half.cos(), chord * half.sin(), dth)
}

/// Advances the state by one control step, clamping the command to the speed
/// and acceleration limits first. Motion follows the exact constant-twist arc.
pub fn step_kinematics(state: &RobotState, cmd: Twist, dt: f64, spec: &RobotSpec) -> Result<RobotState> {
    let inputs = [state.x, state.y, state.yaw, state.v, state.omega, state.battery, state.time, cmd.v, cmd.omega, dt];
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidState("non-finite kinematic input".into()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidState(format!("time step must be positive, got {dt}")));
    }
    let dv = spec.max_accel * dt;
    let dw = spec.max_yaw_accel * dt;
    let v = cmd
        .v
        .clamp(state.v - dv, state.v + dv)
        .clamp(-spec.max_speed, spec.max_speed);
    let omega = cmd
        .omega
        .clamp(state.omega - dw, state.omega + dw)
        .clamp(-spec.max_yaw_rate, spec.max_yaw_rate);
    let (fwd, left, dth) = arc_displacement(v, omega, dt);
    let (s, c) = state.yaw.sin_cos();
    Ok(RobotState {
        x: state.x + c * fwd - s * left,
        y: state.y + s * fwd + c * left,
        yaw: normalize_angle(state.yaw + dth),
        v,
        omega,
        battery: state.battery,
        time: state.time + dt,
    })
}

/// Default discharge: 60 % over 2.4 h.
pub const DEFAULT_DISCHARGE_RATE: f64 = 60.0 / 8640.0;

pub fn step_battery(state: &RobotState, dt: f64, discharge_rate: f64) -> RobotState {
    let rate = discharge_rate.max(0.0);
    RobotState {
        battery: (state.battery - rate * dt).clamp(0.0, 100.0),
        ..*state
    }
}

/// Mount pose relative to the top-plate frame. Angles in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct MountPose {
    pub id: &'static str,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl MountPose {
    pub const fn new(id: &'static str, x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { id, x, y, z, roll, pitch, yaw }
    }

    pub fn local_pose(&self) -> Pose3 {
        Pose3 {
            position: Vec3::new(self.x, self.y, self.z),
            rotation: Rot3::from_rpy(self.roll.to_radians(), self.pitch.to_radians(), self.yaw.to_radians()),
        }
    }
}

/// Offset of the top-plate frame from the base frame.
pub const TOP_PLATE_OFFSET: Vec3 = Vec3::new(0.081, 0.0, 0.245);

pub const PRIMARY_CAMERA: &str = "primary_camera";
pub const SECONDARY_CAMERA: &str = "secondary_camera";
pub const TERTIARY_CAMERA: &str = "tertiary_camera";
pub const LIDAR: &str = "lidar";
pub const IMU: &str = "imu";
pub const GPS: &str = "gps";
pub const ARM_BASE: &str = "ur5e_base";
pub const BASE_PLATE: &str = "base_plate";

pub const MOUNTS: [MountPose; 8] = [
    MountPose::new(PRIMARY_CAMERA, 0.415, 0.000, 0.095, 0.0, 5.0, 0.0),
    MountPose::new(SECONDARY_CAMERA, -0.070, 0.300, -0.050, 0.0, -15.0, 90.0),
    MountPose::new(TERTIARY_CAMERA, -0.070, -0.300, -0.050, 0.0, -15.0, -90.0),
    MountPose::new(LIDAR, 0.430, -0.125, 0.000, 0.0, 0.0, 90.0),
    MountPose::new(IMU, 0.109, 0.000, -0.096, 0.0, -90.0, 180.0),
    MountPose::new(GPS, -0.354, 0.190, 0.513, 0.0, 0.0, 0.0),
    MountPose::new(ARM_BASE, 0.264, 0.000, 0.006, 0.0, 0.0, -90.0),
    MountPose::new(BASE_PLATE, -0.081, 0.000, -0.245, 0.0, 0.0, 0.0),
];

pub fn mount(id: &str) -> Result<&'static MountPose> {
    MOUNTS
        .iter()
        .find(|m| m.id == id)
        .ok_or_else(|| Error::UnknownMount(id.to_string()))
}

/// World pose of an arbitrary mount: base → top plate → mount.
pub fn compose_mount(state: &RobotState, m: &MountPose) -> Pose3 {
    let plate = Pose3 {
        position: TOP_PLATE_OFFSET,
        rotation: Rot3::IDENTITY,
    };
    state.base_pose().compose(&plate).compose(&m.local_pose())
}

pub fn mount_pose_world(state: &RobotState, id: &str) -> Result<Pose3> {
    Ok(compose_mount(state, mount(id)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn free_spec() -> RobotSpec {
        RobotSpec {
            max_speed: 10.0,
            max_yaw_rate: 10.0,
            max_accel: 1e6,
            max_yaw_accel: 1e6,
            ..Default::default()
        }
    }

    #[test]
    fn straight_and_rotation() {
        let s0 = RobotState::at(0.0, 0.0, 0.0);
        let s = step_kinematics(&s0, Twist::new(0.5, 0.0), 2.0, &free_spec()).unwrap();
        assert!((s.x - 1.0).abs() < 1e-12 && s.y.abs() < 1e-12 && s.yaw == 0.0);
        let s = step_kinematics(&s0, Twist::new(0.0, PI / 2.0), 1.0, &free_spec()).unwrap();
        assert!((s.yaw - PI / 2.0).abs() < 1e-12 && s.x == 0.0 && s.y == 0.0);
        assert_eq!(s.time, 1.0);
    }

    #[test]
    fn arc_matches_fine_euler() {
        let s0 = RobotState::at(0.0, 0.0, 0.0);
        let s = step_kinematics(&s0, Twist::new(0.5, 0.5), 1.0, &free_spec()).unwrap();
        // fine Euler oracle
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        let h = 1e-5;
        for _ in 0..100_000 {
            x += 0.5 * th.cos() * h;
            y += 0.5 * th.sin() * h;
            th += 0.5 * h;
        }
        assert!((s.x - x).abs() < 1e-5 && (s.y - y).abs() < 1e-5);
        assert!((s.x - 0.4794).abs() < 1e-4 && (s.y - 0.1224).abs() < 1e-4);
        assert!((s.yaw - 0.5).abs() < 1e-12);
    }

    #[test]
    fn acceleration_and_speed_limits() {
        let spec = RobotSpec::default();
        let s0 = RobotState::at(0.0, 0.0, 0.0);
        let s = step_kinematics(&s0, Twist::new(5.0, -5.0), 0.1, &spec).unwrap();
        assert!((s.v - 0.1).abs() < 1e-12);
        assert!((s.omega + 0.2).abs() < 1e-12);
        let mut st = s0;
        for _ in 0..100 {
            st = step_kinematics(&st, Twist::new(5.0, 5.0), 0.1, &spec).unwrap();
        }
        assert_eq!(st.v, spec.max_speed);
        assert_eq!(st.omega, spec.max_yaw_rate);
    }

    #[test]
    fn nan_input_is_rejected() {
        let s0 = RobotState::at(0.0, 0.0, 0.0);
        assert!(matches!(
            step_kinematics(&s0, Twist::new(f64::NAN, 0.0), 0.1, &free_spec()),
            Err(Error::InvalidState(_))
        ));
        assert!(step_kinematics(&s0, Twist::ZERO, 0.0, &free_spec()).is_err());
    }

    #[test]
    fn battery_examples() {
        let s = RobotState::at(0.0, 0.0, 0.0);
        assert!((step_battery(&s, 600.0, 0.05).battery - 70.0).abs() < 1e-12);
        assert_eq!(step_battery(&s, 600.0, 0.0).battery, 100.0);
        let low = RobotState { battery: 1.0, ..s };
        assert_eq!(step_battery(&low, 600.0, 0.05).battery, 0.0);
        // 100 -> 40 in 2.4 h
        assert!((step_battery(&s, 8640.0, DEFAULT_DISCHARGE_RATE).battery - 40.0).abs() < 1e-9);
    }

    #[test]
    fn registry_holds_table_entries() {
        assert_eq!(MOUNTS.len(), 8);
        let cam = mount(PRIMARY_CAMERA).unwrap();
        assert_eq!((cam.x, cam.z, cam.pitch), (0.415, 0.095, 5.0));
        assert!(matches!(mount("sonar"), Err(Error::UnknownMount(_))));
        // secondary/tertiary are 0.6 m apart
        let d = mount(SECONDARY_CAMERA).unwrap().y - mount(TERTIARY_CAMERA).unwrap().y;
        assert!((d - 0.6).abs() < 1e-12);
        // base plate entry inverts the top plate offset
        let bp = mount(BASE_PLATE).unwrap();
        let p = mount_pose_world(&RobotState::at(0.0, 0.0, 0.0), BASE_PLATE).unwrap();
        assert!(p.position.norm() < 1e-12, "{bp:?}");
    }

    #[test]
    fn primary_camera_world_pose() {
        let p = mount_pose_world(&RobotState::at(0.0, 0.0, 0.0), PRIMARY_CAMERA).unwrap();
        assert!((p.position.x - 0.496).abs() < 1e-12);
        assert!(p.position.y.abs() < 1e-12);
        assert!((p.position.z - 0.340).abs() < 1e-12);
        let (r, pitch, y) = p.rpy();
        assert!(r.abs() < 1e-12 && y.abs() < 1e-12);
        assert!((pitch - 5f64.to_radians()).abs() < 1e-12);
        // positive pitch tilts the optical axis below the horizon
        let axis = p.rotation.apply(&Vec3::new(1.0, 0.0, 0.0));
        assert!(axis.z < 0.0);
    }

    #[test]
    fn identity_mount_is_top_plate() {
        let m = MountPose::new("id", 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let p = compose_mount(&RobotState::at(1.0, 2.0, 0.0), &m);
        assert_eq!(p.position, Vec3::new(1.081, 2.0, 0.245));
    }

    #[test]
    fn lidar_offset_rotates_with_robot() {
        let p = mount_pose_world(&RobotState::at(0.0, 0.0, PI / 2.0), LIDAR).unwrap();
        // body offset (0.511, -0.125) rotated by +90°: (x, y) -> (-y, x)
        assert!((p.position.x - 0.125).abs() < 1e-12);
        assert!((p.position.y - 0.511).abs() < 1e-12);
        assert!((p.position.z - 0.245).abs() < 1e-12);
        assert!((p.rpy().2 - PI).abs() < 1e-12 || (p.rpy().2 + PI).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn split_step_matches_full_step(
            x in -10.0f64..10.0, y in -10.0f64..10.0, yaw in -3.14f64..3.14,
            v in -1.0f64..1.0, w in -1.5f64..1.5, dt in 0.01f64..2.0
        ) {
            let spec = RobotSpec::default();
            let s0 = RobotState { v, omega: w, ..RobotState::at(x, y, yaw) };
            let cmd = Twist::new(v, w);
            let full = step_kinematics(&s0, cmd, dt, &spec).unwrap();
            let half = step_kinematics(&s0, cmd, dt / 2.0, &spec).unwrap();
            let two = step_kinematics(&half, cmd, dt / 2.0, &spec).unwrap();
            prop_assert!((full.x - two.x).abs() < 1e-12);
            prop_assert!((full.y - two.y).abs() < 1e-12);
            prop_assert!(normalize_angle(full.yaw - two.yaw).abs() < 1e-12);
        }

        #[test]
        fn yaw_stays_normalized(yaw in -3.1416f64..3.1416, w in -1.5f64..1.5, dt in 0.01f64..5.0) {
            let s0 = RobotState { omega: w, ..RobotState::at(0.0, 0.0, yaw) };
            let s = step_kinematics(&s0, Twist::new(0.3, w), dt, &RobotSpec::default()).unwrap();
            prop_assert!(s.yaw > -PI && s.yaw <= PI);
        }

        #[test]
        fn battery_never_increases(b in 0.0f64..100.0, rate in 0.0001f64..1.0, dt in 0.0f64..1000.0) {
            let s = RobotState { battery: b, ..RobotState::at(0.0, 0.0, 0.0) };
            let n = step_battery(&s, dt, rate);
            prop_assert!(n.battery <= b && n.battery >= 0.0);
        }
    }
}
