//! Steering assistance from segmentation masks: per-class mask statistics,
//! guidance lines through row centres, their intersection and a bounded
//! proportional correction.
//!
//! Guidance geometry is computed in continuous image coordinates centred on
//! the frame (pixel `i` spans `[i, i + 1)`, so its centre is `i + 0.5 - W/2`).
//! Row centres come from integer sums, which makes a horizontal mirror negate
//! every horizontal coordinate exactly.

use std::fmt::Write as _;

use crate::sensors::{CameraIntrinsics, SegMaskFrame};
use crate::world::SceneClass;

/// Largest correction the law may return, degrees.
pub const MAX_TURN_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskStats {
    pub class: SceneClass,
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
    pub centroid: (f64, f64),
    /// Mean x index of the class pixels on row `y_min` / `y_max`.
    pub center_x_at_y_min: f64,
    pub center_x_at_y_max: f64,
    pub pixel_count: usize,
    frame_width: usize,
    frame_height: usize,
    /// (sum of x indices, count) on the extreme rows.
    top_row: (u64, u64),
    bottom_row: (u64, u64),
}

/// Signals from the guidance pipeline; none of them is a hard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceSignal {
    EmptyMask(SceneClass),
    DegenerateLine(SceneClass),
    Parallel,
}

pub fn mask_stats(frame: &SegMaskFrame, class: SceneClass) -> Result<MaskStats, GuidanceSignal> {
    let (w, h) = (frame.width, frame.height);
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (usize::MAX, 0, usize::MAX, 0);
    let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
    let mut row_sums = vec![(0u64, 0u64); h];
    for y in 0..h {
        let row = &frame.labels[y * w..(y + 1) * w];
        for (x, l) in row.iter().enumerate() {
            if *l != class {
                continue;
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
            sx += x as u64;
            sy += y as u64;
            n += 1;
            row_sums[y].0 += x as u64;
            row_sums[y].1 += 1;
        }
    }
    if n == 0 {
        return Err(GuidanceSignal::EmptyMask(class));
    }
    let top = row_sums[y_min];
    let bottom = row_sums[y_max];
    Ok(MaskStats {
        class,
        x_min,
        x_max,
        y_min,
        y_max,
        centroid: (sx as f64 / n as f64, sy as f64 / n as f64),
        center_x_at_y_min: top.0 as f64 / top.1 as f64,
        center_x_at_y_max: bottom.0 as f64 / bottom.1 as f64,
        pixel_count: n as usize,
        frame_width: w,
        frame_height: h,
        top_row: top,
        bottom_row: bottom,
    })
}

/// Line through two points in centred image coordinates (u right, v down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceLine {
    pub class: SceneClass,
    /// Row centre on the lowest mask row.
    pub lower: (f64, f64),
    /// Row centre on the highest mask row.
    pub upper: (f64, f64),
}

impl GuidanceLine {
    fn homogeneous(&self) -> [f64; 3] {
        let (u1, v1) = self.lower;
        let (u2, v2) = self.upper;
        [v1 - v2, u2 - u1, u1 * v2 - u2 * v1]
    }
}

/// Centred coordinate of the mean of `n` pixel indices summing to `s`.
fn centred(s: u64, n: u64, extent: usize) -> f64 {
    let num = 2 * s as i128 + n as i128 - n as i128 * extent as i128;
    num as f64 / (2 * n) as f64
}

pub fn fit_guidance_line(stats: &MaskStats) -> Result<GuidanceLine, GuidanceSignal> {
    if stats.y_min == stats.y_max {
        return Err(GuidanceSignal::DegenerateLine(stats.class));
    }
    let (w, h) = (stats.frame_width, stats.frame_height);
    let v = |y: usize| centred(y as u64, 1, h);
    Ok(GuidanceLine {
        class: stats.class,
        lower: (centred(stats.bottom_row.0, stats.bottom_row.1, w), v(stats.y_max)),
        upper: (centred(stats.top_row.0, stats.top_row.1, w), v(stats.y_min)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionPoint {
    /// Horizontal / vertical offset from the frame centre, pixels.
    pub u: f64,
    pub v: f64,
    pub width: usize,
    pub height: usize,
    pub pair: (SceneClass, SceneClass),
}

impl IntersectionPoint {
    pub fn from_pixel(x_int: f64, y_int: f64, k: &CameraIntrinsics) -> Self {
        Self {
            u: x_int - 0.5 * k.width as f64,
            v: y_int - 0.5 * k.height as f64,
            width: k.width,
            height: k.height,
            pair: (SceneClass::Sky, SceneClass::Ground),
        }
    }

    /// Pixel coordinates measured from the top-left frame corner.
    pub fn x_int(&self) -> f64 {
        self.u + 0.5 * self.width as f64
    }

    pub fn y_int(&self) -> f64 {
        self.v + 0.5 * self.height as f64
    }
}

pub fn intersect_lines(a: &GuidanceLine, b: &GuidanceLine, width: usize, height: usize) -> Result<IntersectionPoint, GuidanceSignal> {
    let da = (a.upper.0 - a.lower.0, a.upper.1 - a.lower.1);
    let db = (b.upper.0 - b.lower.0, b.upper.1 - b.lower.1);
    let na = da.0.hypot(da.1);
    let nb = db.0.hypot(db.1);
    let cross = (da.0 * db.1 - da.1 * db.0) / (na * nb);
    if cross.abs() < 1e-9 {
        return Err(GuidanceSignal::Parallel);
    }
    let l = a.homogeneous();
    let m = b.homogeneous();
    let x = l[1] * m[2] - l[2] * m[1];
    let y = l[2] * m[0] - l[0] * m[2];
    let z = l[0] * m[1] - l[1] * m[0];
    Ok(IntersectionPoint {
        u: x / z,
        v: y / z,
        width,
        height,
        pair: (a.class, b.class),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Confidence {
    Full,
    Degraded,
    None,
}

impl Confidence {
    pub fn name(self) -> &'static str {
        match self {
            Confidence::Full => "full",
            Confidence::Degraded => "degraded",
            Confidence::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringCorrection {
    /// Degrees, positive turns left.
    pub angle: f64,
    pub confidence: Confidence,
}

impl SteeringCorrection {
    pub const NONE: SteeringCorrection = SteeringCorrection {
        angle: 0.0,
        confidence: Confidence::None,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringLaw {
    pub gain: f64,
    /// Normalized offsets below this give no correction.
    pub deadband: f64,
}

impl Default for SteeringLaw {
    fn default() -> Self {
        Self { gain: 1.0, deadband: 0.02 }
    }
}

pub fn steering_correction(p: &IntersectionPoint, law: &SteeringLaw) -> SteeringCorrection {
    if !(p.u.is_finite() && p.v.is_finite()) {
        return SteeringCorrection::NONE;
    }
    let e = -p.u / (0.5 * p.width as f64);
    let angle = if e.abs() < law.deadband {
        0.0
    } else {
        (law.gain * e * MAX_TURN_DEG).clamp(-MAX_TURN_DEG, MAX_TURN_DEG)
    };
    SteeringCorrection {
        angle,
        confidence: Confidence::Full,
    }
}

/// Everything computed for one frame, for control and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceResult {
    pub correction: SteeringCorrection,
    pub sky_ground: Option<IntersectionPoint>,
    /// Logged only; control uses the sky–ground pair.
    pub cotton_ground: Option<IntersectionPoint>,
    pub cotton_sky: Option<IntersectionPoint>,
    pub signal: Option<GuidanceSignal>,
}

fn line_for(frame: &SegMaskFrame, class: SceneClass) -> Result<GuidanceLine, GuidanceSignal> {
    mask_stats(frame, class).and_then(|s| fit_guidance_line(&s))
}

pub fn guidance_from_frame(frame: &SegMaskFrame, law: &SteeringLaw) -> GuidanceResult {
    let (w, h) = (frame.width, frame.height);
    let sky = line_for(frame, SceneClass::Sky);
    let ground = line_for(frame, SceneClass::Ground);
    let cotton = line_for(frame, SceneClass::Cotton).ok();
    let pair = |a: Option<&GuidanceLine>, b: Option<&GuidanceLine>| match (a, b) {
        (Some(a), Some(b)) => intersect_lines(a, b, w, h).ok(),
        _ => None,
    };
    let cotton_ground = pair(cotton.as_ref(), ground.as_ref().ok());
    let cotton_sky = pair(cotton.as_ref(), sky.as_ref().ok());
    let (correction, sky_ground, signal) = match (sky, ground) {
        (Ok(s), Ok(g)) => match intersect_lines(&s, &g, w, h) {
            Ok(p) => (steering_correction(&p, law), Some(p), None),
            Err(sig) => (SteeringCorrection::NONE, None, Some(sig)),
        },
        (Err(sig), _) | (_, Err(sig)) => {
            let confidence = match sig {
                GuidanceSignal::DegenerateLine(_) => Confidence::Degraded,
                _ => Confidence::None,
            };
            (SteeringCorrection { angle: 0.0, confidence }, None, Some(sig))
        }
    };
    GuidanceResult {
        correction,
        sky_ground,
        cotton_ground,
        cotton_sky,
        signal,
    }
}

/// One CSV row: `t,x_int,y_int,angle_deg,confidence`. Missing intersections
/// are written as `NaN`.
pub fn guidance_csv_row(out: &mut String, t: f64, r: &GuidanceResult) {
    let (x, y) = r
        .sky_ground
        .map_or((f64::NAN, f64::NAN), |p| (p.x_int(), p.y_int()));
    let _ = writeln!(
        out,
        "{t:.3},{x:.4},{y:.4},{:.4},{}",
        r.correction.angle,
        r.correction.confidence.name()
    );
}

pub const GUIDANCE_CSV_HEADER: &str = "t,x_int,y_int,angle_deg,confidence\n";
