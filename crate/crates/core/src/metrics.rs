//! Navigation accuracy (waypoint error, AE, RMSE, completion rate) and
//! detection scores (precision, recall, ranked AP, mAP, mask IoU).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixSample {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub poses: Vec<PoseSample>,
    pub fixes: Vec<FixSample>,
}

impl TrajectoryLog {
    pub fn validate(&self) -> Result<()> {
        fn increasing(ts: impl Iterator<Item = f64>) -> bool {
            let mut last = f64::NEG_INFINITY;
            for t in ts {
                if t <= last {
                    return false;
                }
                last = t;
            }
            true
        }
        if !increasing(self.poses.iter().map(|p| p.t)) || !increasing(self.fixes.iter().map(|f| f.t)) {
            return Err(Error::InvalidState("trajectory timestamps must increase strictly".into()));
        }
        Ok(())
    }

    pub fn xy(&self) -> Vec<(f64, f64)> {
        self.poses.iter().map(|p| (p.x, p.y)).collect()
    }

    /// Fixes as (lat, lon) pairs.
    pub fn lat_lon(&self) -> Vec<(f64, f64)> {
        self.fixes.iter().map(|f| (f.lat, f.lon)).collect()
    }
}

/// Closest trajectory sample for one waypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointMatch {
    pub error: f64,
    pub sample: usize,
}

pub fn closest_matches(planned: &[(f64, f64)], actual: &[(f64, f64)]) -> Result<Vec<WaypointMatch>> {
    if actual.is_empty() {
        return Err(Error::Empty("trajectory"));
    }
    if planned.is_empty() {
        return Err(Error::Empty("waypoint list"));
    }
    Ok(planned
        .iter()
        .map(|&(px, py)| {
            let mut best = WaypointMatch {
                error: f64::INFINITY,
                sample: 0,
            };
            for (i, &(ax, ay)) in actual.iter().enumerate() {
                let d = (px - ax).hypot(py - ay);
                if d < best.error {
                    best = WaypointMatch { error: d, sample: i };
                }
            }
            best
        })
        .collect())
}

/// Distance from each planned waypoint to its closest trajectory sample.
pub fn waypoint_errors(planned: &[(f64, f64)], actual: &[(f64, f64)]) -> Result<Vec<f64>> {
    Ok(closest_matches(planned, actual)?.into_iter().map(|m| m.error).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub ae: f64,
    pub rmse: f64,
    /// Percent of waypoints with error ≤ threshold.
    pub cr: f64,
    pub threshold: f64,
}

pub fn aggregate(errors: &[f64], r: f64) -> Result<Aggregate> {
    if errors.is_empty() {
        return Err(Error::Empty("error list"));
    }
    if !(r > 0.0) {
        return Err(Error::Config("completion threshold must be positive".into()));
    }
    let n = errors.len() as f64;
    let ae = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let reached = errors.iter().filter(|&&e| e <= r).count() as f64;
    Ok(Aggregate {
        n: errors.len(),
        ae,
        rmse,
        cr: 100.0 * reached / n,
        threshold: r,
    })
}

/// Metres per degree of latitude and longitude at a latitude (WGS84 series).
pub fn meters_per_degree(lat_deg: f64) -> (f64, f64) {
    let p = lat_deg.to_radians();
    let lat = 111_132.92 - 559.82 * (2.0 * p).cos() + 1.175 * (4.0 * p).cos() - 0.0023 * (6.0 * p).cos();
    let lon = 111_412.84 * p.cos() - 93.5 * (3.0 * p).cos() + 0.118 * (5.0 * p).cos();
    (lat, lon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NavMode {
    Map,
    Gps,
}

impl NavMode {
    pub fn name(self) -> &'static str {
        match self {
            NavMode::Map => "map",
            NavMode::Gps => "gps",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "map" => Some(NavMode::Map),
            "gps" => Some(NavMode::Gps),
            _ => None,
        }
    }

    pub fn units(self) -> &'static str {
        match self {
            NavMode::Map => "m",
            NavMode::Gps => "deg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavReport {
    pub mode: NavMode,
    pub errors: Vec<f64>,
    pub aggregate: Aggregate,
    pub duration: f64,
    /// GPS mode only: the same errors converted to metres with local scale factors.
    pub errors_m: Option<Vec<f64>>,
    pub waypoints_reached: usize,
    pub collisions: usize,
}

impl NavReport {
    pub fn ae_m(&self) -> Option<f64> {
        self.errors_m.as_ref().map(|e| e.iter().sum::<f64>() / e.len() as f64)
    }

    pub fn rmse_m(&self) -> Option<f64> {
        self.errors_m
            .as_ref()
            .map(|e| (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
    }

    /// Flat `key = value` report; field order is fixed.
    pub fn to_text(&self) -> String {
        let a = &self.aggregate;
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode.name());
        let _ = writeln!(s, "units = {}", self.mode.units());
        let _ = writeln!(s, "waypoints = {}", a.n);
        let _ = writeln!(s, "threshold = {}", a.threshold);
        let _ = writeln!(s, "ae = {}", a.ae);
        let _ = writeln!(s, "rmse = {}", a.rmse);
        let _ = writeln!(s, "cr_percent = {}", a.cr);
        let _ = writeln!(s, "duration_s = {}", self.duration);
        let _ = writeln!(s, "waypoints_reached = {}", self.waypoints_reached);
        let _ = writeln!(s, "collisions = {}", self.collisions);
        if let (Some(ae), Some(rmse)) = (self.ae_m(), self.rmse_m()) {
            let _ = writeln!(s, "ae_m = {ae}");
            let _ = writeln!(s, "rmse_m = {rmse}");
        }
        s
    }

    /// Header plus one summary row.
    pub fn to_csv(&self) -> String {
        let a = &self.aggregate;
        format!(
            "mode,units,waypoints,threshold,ae,rmse,cr_percent,duration_s,waypoints_reached,collisions\n{},{},{},{},{},{},{},{},{},{}\n",
            self.mode.name(),
            self.mode.units(),
            a.n,
            a.threshold,
            a.ae,
            a.rmse,
            a.cr,
            self.duration,
            self.waypoints_reached,
            self.collisions
        )
    }

    /// Per-waypoint errors: `index,error` (plus `error_m` in GPS mode).
    pub fn errors_csv(&self) -> String {
        let mut s = String::from(if self.errors_m.is_some() { "index,error,error_m\n" } else { "index,error\n" });
        for (i, e) in self.errors.iter().enumerate() {
            match &self.errors_m {
                Some(m) => {
                    let _ = writeln!(s, "{i},{e},{}", m[i]);
                }
                None => {
                    let _ = writeln!(s, "{i},{e}");
                }
            }
        }
        s
    }
}

/// Scores planned waypoints against a trajectory. In GPS mode both inputs are
/// (lat, lon) and errors are in degrees.
pub fn evaluate(mode: NavMode, planned: &[(f64, f64)], actual: &[(f64, f64)], r: f64, duration: f64) -> Result<NavReport> {
    let matches = closest_matches(planned, actual)?;
    let errors: Vec<f64> = matches.iter().map(|m| m.error).collect();
    let aggregate = aggregate(&errors, r)?;
    let errors_m = (mode == NavMode::Gps).then(|| {
        planned
            .iter()
            .zip(&matches)
            .map(|(&(lat, lon), m)| {
                let (alat, alon) = actual[m.sample];
                let (ky, kx) = meters_per_degree(0.5 * (lat + alat));
                ((lat - alat) * ky).hypot((lon - alon) * kx)
            })
            .collect()
    });
    Ok(NavReport {
        mode,
        errors,
        aggregate,
        duration,
        errors_m,
        waypoints_reached: 0,
        collisions: 0,
    })
}

// ---------------------------------------------------------------- detection

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

/// Overlap measure between two regions of the same kind.
pub trait Region {
    fn iou(&self, other: &Self) -> Result<f64>;
}

impl Region for Rect {
    fn iou(&self, o: &Rect) -> Result<f64> {
        let inter = Rect {
            x_min: self.x_min.max(o.x_min),
            y_min: self.y_min.max(o.y_min),
            x_max: self.x_max.min(o.x_max),
            y_max: self.y_max.min(o.y_max),
        }
        .area();
        let union = self.area() + o.area() - inter;
        Ok(if union > 0.0 { inter / union } else { 0.0 })
    }
}

impl Region for Mask {
    fn iou(&self, o: &Mask) -> Result<f64> {
        mask_iou(self, o)
    }
}

pub fn mask_iou(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.bits.len() != b.bits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<R> {
    pub class: usize,
    pub confidence: f64,
    pub region: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth<R> {
    pub class: usize,
    pub region: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `None` when the denominator is zero.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// Per class present in the ground truth; `None` when no detection of
    /// that class was correct.
    pub ap: BTreeMap<usize, Option<f64>>,
    pub map: Option<f64>,
    /// Set when an undefined AP entered the mAP as zero.
    pub map_includes_undefined: bool,
    pub iou_threshold: f64,
}

/// Ranked AP: mean of running precision taken at each correct detection.
pub fn ranked_ap(hits: &[bool]) -> Option<f64> {
    let total = hits.iter().filter(|&&h| h).count();
    if total == 0 {
        return None;
    }
    let mut correct = 0usize;
    let mut sum = 0.0;
    for (i, &h) in hits.iter().enumerate() {
        if h {
            correct += 1;
            sum += correct as f64 / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Greedy matching in descending confidence; each truth is matched at most
/// once, to the unmatched same-class truth with the highest IoU.
pub fn match_detections<R: Region>(preds: &[Prediction<R>], truths: &[Truth<R>], iou_threshold: f64) -> Result<Vec<(usize, bool)>> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence).then(a.cmp(&b)));
    let mut used = vec![false; truths.len()];
    let mut out = Vec::with_capacity(preds.len());
    for i in order {
        let p = &preds[i];
        let mut best: Option<(f64, usize)> = None;
        for (j, t) in truths.iter().enumerate() {
            if used[j] || t.class != p.class {
                continue;
            }
            let iou = p.region.iou(&t.region)?;
            if best.is_none_or(|b| iou > b.0) {
                best = Some((iou, j));
            }
        }
        let hit = match best {
            Some((iou, j)) if iou >= iou_threshold => {
                used[j] = true;
                true
            }
            _ => false,
        };
        out.push((i, hit));
    }
    Ok(out)
}

pub fn detection_metrics<R: Region>(preds: &[Prediction<R>], truths: &[Truth<R>], iou_threshold: f64) -> Result<DetectionMetrics> {
    let ranked = match_detections(preds, truths, iou_threshold)?;
    let tp = ranked.iter().filter(|r| r.1).count();
    let fp = ranked.len() - tp;
    let fn_ = truths.len() - tp;
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let mut ap = BTreeMap::new();
    for t in truths {
        ap.entry(t.class).or_insert(None);
    }
    let classes: Vec<usize> = ap.keys().copied().collect();
    for c in classes {
        let hits: Vec<bool> = ranked.iter().filter(|r| preds[r.0].class == c).map(|r| r.1).collect();
        ap.insert(c, ranked_ap(&hits));
    }
    let map = (!ap.is_empty()).then(|| ap.values().map(|v| v.unwrap_or(0.0)).sum::<f64>() / ap.len() as f64);
    Ok(DetectionMetrics {
        tp,
        fp,
        fn_,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        map_includes_undefined: ap.values().any(|v| v.is_none()),
        ap,
        map,
        iou_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn rect(x: f64, y: f64, w: f64, h: f64) -> Rect {
        Rect { x_min: x, y_min: y, x_max: x + w, y_max: y + h }
    }

    #[test]
    fn waypoint_error_examples() {
        let pts = [(0.0, 0.0), (1.0, 2.0), (-3.0, 0.5)];
        assert_eq!(waypoint_errors(&pts, &pts).unwrap(), vec![0.0; 3]);
        assert_eq!(waypoint_errors(&[(0.0, 0.0)], &[(3.0, 4.0), (6.0, 8.0)]).unwrap(), vec![5.0]);
        assert!(matches!(waypoint_errors(&pts, &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[0.1, 0.1, 0.4], 0.25).unwrap();
        assert!((a.ae - 0.2).abs() < 1e-12);
        assert!((a.rmse - 0.06f64.sqrt()).abs() < 1e-12);
        assert!((a.cr - 200.0 / 3.0).abs() < 1e-12);
        let z = aggregate(&[0.0; 5], 0.25).unwrap();
        assert_eq!((z.ae, z.rmse, z.cr), (0.0, 0.0, 100.0));
        // boundary is inclusive
        assert_eq!(aggregate(&[0.25], 0.25).unwrap().cr, 100.0);
        assert!(aggregate(&[], 0.25).is_err());
    }

    #[test]
    fn log_timestamps_must_increase() {
        let p = |t| PoseSample { t, x: 0.0, y: 0.0, yaw: 0.0 };
        assert!(TrajectoryLog { poses: vec![p(0.0), p(0.1)], fixes: vec![] }.validate().is_ok());
        assert!(TrajectoryLog { poses: vec![p(0.0), p(0.0)], fixes: vec![] }.validate().is_err());
    }

    #[test]
    fn report_formats() {
        let r = evaluate(NavMode::Map, &[(0.0, 0.0), (1.0, 0.0)], &[(0.0, 0.1), (1.0, 0.0)], 0.25, 12.5).unwrap();
        let text = r.to_text();
        assert!(text.starts_with("mode = map\nunits = m\nwaypoints = 2\nthreshold = 0.25\n"));
        assert!(text.contains("cr_percent = 100\n"));
        assert_eq!(r.to_csv().lines().count(), 2);
        assert_eq!(r.errors_csv(), "index,error\n0,0.1\n1,0\n");
        let g = evaluate(NavMode::Gps, &[(33.0, -88.0)], &[(33.0 + 1e-5, -88.0)], 5e-6, 1.0).unwrap();
        let m = g.errors_m.as_ref().unwrap()[0];
        assert!((m - 1.109).abs() < 0.01, "{m}");
        assert_eq!(g.aggregate.cr, 0.0);
    }

    #[test]
    fn detection_examples() {
        let truths: Vec<Truth<Rect>> = (0..4).map(|i| Truth { class: i % 2, region: rect(10.0 * i as f64, 0.0, 5.0, 5.0) }).collect();
        let perfect: Vec<Prediction<Rect>> = truths
            .iter()
            .enumerate()
            .map(|(i, t)| Prediction { class: t.class, confidence: 0.9 - 0.1 * i as f64, region: t.region })
            .collect();
        let m = detection_metrics(&perfect, &truths, 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.map), (Some(1.0), Some(1.0), Some(1.0)));
        let mut extra = perfect.clone();
        extra.push(Prediction { class: 0, confidence: 0.01, region: rect(100.0, 100.0, 5.0, 5.0) });
        let m = detection_metrics(&extra, &truths, 0.5).unwrap();
        assert_eq!(m.precision, Some(4.0 / 5.0));
        assert_eq!(m.recall, Some(1.0));
        // spurious box is ranked last, so it does not lower AP
        assert_eq!(m.map, Some(1.0));
        let none: Vec<Prediction<Rect>> = vec![];
        let m = detection_metrics(&none, &truths, 0.5).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        assert!(m.map_includes_undefined);
        assert_eq!(m.map, Some(0.0));
    }

    #[test]
    fn hand_evaluated_ranked_ap() {
        // hits at ranks 1, 3, 4: (1/1 + 2/3 + 3/4) / 3
        let ap = ranked_ap(&[true, false, true, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0 + 0.75) / 3.0).abs() < 1e-15);
        assert_eq!(ranked_ap(&[false, false]), None);
    }

    #[test]
    fn five_boxes_three_truths() {
        let truths = vec![
            Truth { class: 0, region: rect(0.0, 0.0, 10.0, 10.0) },
            Truth { class: 0, region: rect(20.0, 0.0, 10.0, 10.0) },
            Truth { class: 0, region: rect(40.0, 0.0, 10.0, 10.0) },
        ];
        let preds = vec![
            Prediction { class: 0, confidence: 0.95, region: rect(1.0, 1.0, 10.0, 10.0) },   // IoU 81/119 hit
            Prediction { class: 0, confidence: 0.90, region: rect(0.0, 0.0, 10.0, 10.0) },   // truth 0 taken → miss
            Prediction { class: 0, confidence: 0.80, region: rect(25.0, 0.0, 10.0, 10.0) },  // IoU 50/150 miss
            Prediction { class: 0, confidence: 0.70, region: rect(40.0, 2.0, 10.0, 10.0) },  // IoU 80/120 hit
            Prediction { class: 0, confidence: 0.60, region: rect(20.0, 0.0, 10.0, 9.0) },   // IoU 0.9 hit
        ];
        let m = detection_metrics(&preds, &truths, 0.5).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (3, 2, 0));
        let expected = (1.0 + 2.0 / 4.0 + 3.0 / 5.0) / 3.0;
        assert!((m.ap[&0].unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn mask_iou_examples() {
        let mk = |bits: &[u8]| Mask { width: 4, height: 1, bits: bits.iter().map(|&b| b == 1).collect() };
        assert_eq!(mask_iou(&mk(&[1, 1, 0, 0]), &mk(&[1, 1, 0, 0])).unwrap(), 1.0);
        assert_eq!(mask_iou(&mk(&[1, 1, 0, 0]), &mk(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(mask_iou(&mk(&[1, 1, 0, 0]), &mk(&[0, 1, 1, 0])).unwrap(), 1.0 / 3.0);
        assert_eq!(mask_iou(&mk(&[0, 0, 0, 0]), &mk(&[0, 0, 0, 0])).unwrap(), 1.0);
        let other = Mask { width: 2, height: 2, bits: vec![true; 4] };
        assert!(matches!(mask_iou(&mk(&[1, 1, 0, 0]), &other), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn rmse_dominates_ae(errors in proptest::collection::vec(0.0f64..10.0, 1..50)) {
            let a = aggregate(&errors, 1.0).unwrap();
            prop_assert!(a.rmse >= a.ae - 1e-12);
        }

        #[test]
        fn cr_monotone(errors in proptest::collection::vec(0.0f64..1.0, 1..30), r1 in 0.001f64..1.0, r2 in 0.001f64..1.0) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(aggregate(&errors, lo).unwrap().cr <= aggregate(&errors, hi).unwrap().cr);
        }

        #[test]
        fn rigid_transform_invariance(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..10),
            traj in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
            th in -3.0f64..3.0, tx in -10.0f64..10.0, ty in -10.0f64..10.0
        ) {
            let (s, c) = th.sin_cos();
            let tf = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| (c * x - s * y + tx, s * x + c * y + ty)).collect::<Vec<_>>();
            let a = waypoint_errors(&pts, &traj).unwrap();
            let b = waypoint_errors(&tf(&pts), &tf(&traj)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn ap_depends_only_on_rank(scale in 0.01f64..100.0, shift in -0.5f64..0.5) {
            let truths = vec![
                Truth { class: 0, region: rect(0.0, 0.0, 10.0, 10.0) },
                Truth { class: 1, region: rect(20.0, 0.0, 10.0, 10.0) },
            ];
            let preds = vec![
                Prediction { class: 0, confidence: 0.9, region: rect(30.0, 30.0, 5.0, 5.0) },
                Prediction { class: 0, confidence: 0.8, region: rect(1.0, 0.0, 10.0, 10.0) },
                Prediction { class: 1, confidence: 0.7, region: rect(20.0, 1.0, 10.0, 10.0) },
            ];
            let moved: Vec<_> = preds.iter().map(|p| Prediction { confidence: p.confidence * scale + shift, ..p.clone() }).collect();
            prop_assert_eq!(detection_metrics(&preds, &truths, 0.5).unwrap(), detection_metrics(&moved, &truths, 0.5).unwrap());
        }
    }
}
