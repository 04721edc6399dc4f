//! Monte-Carlo localization against a known occupancy map.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mapping::{CellState, TernaryMap};
use crate::math::normalize_angle;
use crate::sensors::{LidarScan, OdomDelta};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub weight: f64,
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        loop {
            let p = v[k];
            if f[p].is_infinite() {
                // an infinite parabola never bounds anything; replace it
                v[k] = q;
                z[k + 1] = f64::INFINITY;
                break;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let d = q as f64 - p as f64;
        *o = d * d + f[p];
    }
}

/// Exact squared Euclidean distance, in cells, from every cell to the nearest
/// cell flagged in `seeds`. Infinite when there are no seeds.
pub fn squared_distance_transform(width: usize, height: usize, seeds: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodField {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: (f64, f64),
    pub sigma: f64,
    pub floor: f64,
    /// Metric distance to the nearest occupied cell centre.
    pub distance: Vec<f64>,
    pub values: Vec<f64>,
}

impl LikelihoodField {
    /// Field value at a map point; the floor outside the grid.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.origin.0) / self.resolution).floor();
        let fy = ((y - self.origin.1) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return self.floor;
        }
        self.values[fy as usize * self.width + fx as usize]
    }

    pub fn distance_at(&self, cx: usize, cy: usize) -> f64 {
        self.distance[cy * self.width + cx]
    }
}

pub fn build_likelihood_field(map: &TernaryMap, sigma: f64, floor: f64) -> Result<LikelihoodField> {
    let seeds: Vec<bool> = map.cells.iter().map(|c| *c == CellState::Occupied).collect();
    if !seeds.iter().any(|&s| s) {
        return Err(Error::EmptyMap);
    }
    if !(sigma > 0.0) || !(0.0..1.0).contains(&floor) {
        return Err(Error::Config("likelihood field needs sigma > 0 and floor in [0, 1)".into()));
    }
    let sq = squared_distance_transform(map.width, map.height, &seeds);
    let distance: Vec<f64> = sq.iter().map(|d| d.sqrt() * map.resolution).collect();
    let values = distance
        .iter()
        .map(|d| floor + (1.0 - floor) * (-d * d / (2.0 * sigma * sigma)).exp())
        .collect();
    Ok(LikelihoodField {
        width: map.width,
        height: map.height,
        resolution: map.resolution,
        origin: map.origin,
        sigma,
        floor,
        distance,
        values,
    })
}

/// Four-parameter odometry motion noise: rotation from rotation, rotation
/// from translation, translation from translation, translation from rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionNoise {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            alpha1: 0.05,
            alpha2: 0.05,
            alpha3: 0.05,
            alpha4: 0.05,
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Advances each particle by the body-frame delta decomposed into
/// rotate–translate–rotate, with noise on every component.
pub fn predict(particles: &mut [Particle], delta: &OdomDelta, noise: &MotionNoise, rng: &mut ChaCha8Rng) {
    let mut trans = delta.dx.hypot(delta.dy);
    let mut rot1 = if trans > 1e-9 { delta.dy.atan2(delta.dx) } else { 0.0 };
    if rot1.abs() > std::f64::consts::FRAC_PI_2 {
        // reversing: keep the heading and run the translation backwards
        rot1 = normalize_angle(rot1 + std::f64::consts::PI);
        trans = -trans;
    }
    let rot2 = normalize_angle(delta.dyaw - rot1);
    let s_rot1 = noise.alpha1 * rot1.abs() + noise.alpha2 * trans.abs();
    let s_trans = noise.alpha3 * trans.abs() + noise.alpha4 * (rot1.abs() + rot2.abs());
    let s_rot2 = noise.alpha1 * rot2.abs() + noise.alpha2 * trans.abs();
    for p in particles.iter_mut() {
        let r1 = rot1 + gauss(rng, s_rot1);
        let t = trans + gauss(rng, s_trans);
        let r2 = rot2 + gauss(rng, s_rot2);
        let heading = p.yaw + r1;
        p.x += t * heading.cos();
        p.y += t * heading.sin();
        p.yaw = normalize_angle(heading + r2);
    }
}

/// Pose of the lidar in the robot base frame, planar part only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorOffset {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Evenly spaced beam indices, at most `count` of them.
pub fn subsample_indices(n: usize, count: usize) -> Vec<usize> {
    let m = count.max(1).min(n);
    (0..m).map(|k| k * n / m).collect()
}

/// Reweights particles by the likelihood of the scan endpoints. Weights are
/// combined in the log domain and renormalized to sum to one.
pub fn update_weights(
    particles: &mut [Particle],
    scan: &LidarScan,
    field: &LikelihoodField,
    offset: &SensorOffset,
    beam_subsample: usize,
) -> Result<()> {
    // subsample among the beams that returned; max-range beams carry no endpoint
    let returns: Vec<usize> = (0..scan.ranges.len()).filter(|&i| scan.ranges[i] < scan.max_range).collect();
    let beams: Vec<(f64, f64, f64)> = subsample_indices(returns.len(), beam_subsample)
        .into_iter()
        .map(|k| returns[k])
        .map(|i| {
            let a = scan.angles[i] + offset.yaw;
            let r = scan.ranges[i];
            (r * a.cos(), r * a.sin(), 0.0)
        })
        .collect();
    let mut logw = Vec::with_capacity(particles.len());
    for p in particles.iter() {
        let (s, c) = p.yaw.sin_cos();
        let sx = p.x + c * offset.x - s * offset.y;
        let sy = p.y + s * offset.x + c * offset.y;
        let mut l = p.weight.ln();
        for &(bx, by, _) in &beams {
            let ex = sx + c * bx - s * by;
            let ey = sy + s * bx + c * by;
            l += field.value_at(ex, ey).ln();
        }
        logw.push(l);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateFilter);
    }
    let mut total = 0.0;
    for (p, l) in particles.iter_mut().zip(&logw) {
        p.weight = (l - max).exp();
        total += p.weight;
    }
    for p in particles.iter_mut() {
        p.weight /= total;
    }
    Ok(())
}

pub fn effective_sample_size(particles: &[Particle]) -> f64 {
    1.0 / particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
}

/// Low-variance resampling with a given offset `u0` in [0, 1/N).
pub fn systematic_resample(particles: &[Particle], u0: f64) -> Vec<Particle> {
    let n = particles.len();
    let step = 1.0 / n as f64;
    let uniform = step;
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut c = particles[0].weight;
    for m in 0..n {
        let u = u0 + m as f64 * step;
        while u > c && i + 1 < n {
            i += 1;
            c += particles[i].weight;
        }
        out.push(Particle {
            weight: uniform,
            ..particles[i]
        });
    }
    out
}

/// Resamples when the effective sample size falls below N/2. Returns whether
/// it did.
pub fn resample(particles: &mut Vec<Particle>, rng: &mut ChaCha8Rng) -> bool {
    let n = particles.len();
    if n == 0 || effective_sample_size(particles) >= n as f64 / 2.0 {
        return false;
    }
    let u0 = rng.random::<f64>() / n as f64;
    *particles = systematic_resample(particles, u0);
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEstimate {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    /// Covariance over (x, y, yaw).
    pub covariance: [[f64; 3]; 3],
}

pub fn estimate_pose(particles: &[Particle]) -> Result<PoseEstimate> {
    if particles.is_empty() {
        return Err(Error::Empty("particle set"));
    }
    let total: f64 = particles.iter().map(|p| p.weight).sum();
    let w = |p: &Particle| if total > 0.0 { p.weight / total } else { 1.0 / particles.len() as f64 };
    let (mut x, mut y, mut s, mut c) = (0.0, 0.0, 0.0, 0.0);
    for p in particles {
        let wi = w(p);
        x += wi * p.x;
        y += wi * p.y;
        s += wi * p.yaw.sin();
        c += wi * p.yaw.cos();
    }
    let yaw = if s == 0.0 && c == 0.0 { 0.0 } else { s.atan2(c) };
    let mut cov = [[0.0; 3]; 3];
    for p in particles {
        let wi = w(p);
        let d = [p.x - x, p.y - y, normalize_angle(p.yaw - yaw)];
        for (i, row) in cov.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += wi * d[i] * d[j];
            }
        }
    }
    Ok(PoseEstimate {
        x,
        y,
        yaw: normalize_angle(yaw),
        covariance: cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    pub beam_subsample: usize,
    pub sigma_hit: f64,
    pub floor: f64,
    pub motion: MotionNoise,
    pub init_sigma_xy: f64,
    pub init_sigma_yaw: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 500,
            beam_subsample: 60,
            sigma_hit: 0.1,
            floor: 0.05,
            motion: MotionNoise::default(),
            init_sigma_xy: 0.25,
            init_sigma_yaw: 5f64.to_radians(),
        }
    }
}

/// Particle set plus the state needed to run predict/update cycles.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    pub config: FilterConfig,
    pub particles: Vec<Particle>,
    pub field: LikelihoodField,
    pub offset: SensorOffset,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    pub fn new(config: FilterConfig, field: LikelihoodField, offset: SensorOffset, rng: ChaCha8Rng) -> Self {
        Self {
            config,
            particles: Vec::new(),
            field,
            offset,
            rng,
        }
    }

    /// Scatters particles around a pose with Gaussian spread.
    pub fn init_around(&mut self, x: f64, y: f64, yaw: f64) {
        let n = self.config.particles.max(1);
        let w = 1.0 / n as f64;
        let (sxy, syaw) = (self.config.init_sigma_xy, self.config.init_sigma_yaw);
        self.particles = (0..n)
            .map(|_| Particle {
                x: x + gauss(&mut self.rng, sxy),
                y: y + gauss(&mut self.rng, sxy),
                yaw: normalize_angle(yaw + gauss(&mut self.rng, syaw)),
                weight: w,
            })
            .collect();
    }

    /// Places particles uniformly in a box around a pose.
    pub fn init_uniform(&mut self, x: f64, y: f64, yaw: f64, half_xy: f64, half_yaw: f64) {
        let n = self.config.particles.max(1);
        let w = 1.0 / n as f64;
        self.particles = (0..n)
            .map(|_| Particle {
                x: x + self.rng.random_range(-half_xy..=half_xy),
                y: y + self.rng.random_range(-half_xy..=half_xy),
                yaw: normalize_angle(yaw + self.rng.random_range(-half_yaw..=half_yaw)),
                weight: w,
            })
            .collect();
    }

    pub fn predict(&mut self, delta: &OdomDelta) {
        let motion = self.config.motion;
        predict(&mut self.particles, delta, &motion, &mut self.rng);
    }

    /// Weight update followed by conditional resampling. A degenerate
    /// update leaves the particle set untouched and reports the error.
    pub fn correct(&mut self, scan: &LidarScan) -> Result<bool> {
        let backup = self.particles.clone();
        if let Err(e) = update_weights(&mut self.particles, scan, &self.field, &self.offset, self.config.beam_subsample) {
            self.particles = backup;
            return Err(e);
        }
        Ok(resample(&mut self.particles, &mut self.rng))
    }

    pub fn estimate(&self) -> Result<PoseEstimate> {
        estimate_pose(&self.particles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::stream_rng;
    use proptest::{prop_assert, prop_assert_eq, proptest};
    use std::f64::consts::PI;

    fn map_with(occupied: &[(usize, usize)], w: usize, h: usize, res: f64) -> TernaryMap {
        let mut cells = vec![CellState::Free; w * h];
        for &(x, y) in occupied {
            cells[y * w + x] = CellState::Occupied;
        }
        TernaryMap { width: w, height: h, resolution: res, origin: (0.0, 0.0), cells }
    }

    fn uniform(n: usize) -> Vec<Particle> {
        (0..n)
            .map(|i| Particle { x: i as f64, y: 0.0, yaw: 0.0, weight: 1.0 / n as f64 })
            .collect()
    }

    #[test]
    fn field_formula() {
        let sigma = 0.1;
        let floor = 0.05;
        let m = map_with(&[(0, 0)], 40, 1, 0.1);
        let f = build_likelihood_field(&m, sigma, floor).unwrap();
        assert_eq!(f.values[0], floor + (1.0 - floor));
        let expected = floor + (1.0 - floor) * (-4.5f64).exp();
        assert!((f.values[3] - expected).abs() < 1e-12);
        assert!(f.values.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn all_free_map_is_rejected() {
        let m = map_with(&[], 5, 5, 0.1);
        assert!(matches!(build_likelihood_field(&m, 0.1, 0.05), Err(Error::EmptyMap)));
    }

    proptest! {
        #[test]
        fn edt_matches_brute_force(seeds in proptest::collection::vec(proptest::bool::weighted(0.03), 2500)) {
            let (w, h) = (50usize, 50usize);
            let sq = squared_distance_transform(w, h, &seeds);
            let occ: Vec<(i64, i64)> = (0..w * h).filter(|&i| seeds[i]).map(|i| ((i % w) as i64, (i / w) as i64)).collect();
            for cy in 0..h as i64 {
                for cx in 0..w as i64 {
                    let best = occ.iter().map(|&(x, y)| ((x - cx).pow(2) + (y - cy).pow(2)) as f64).fold(f64::INFINITY, f64::min);
                    prop_assert_eq!(sq[cy as usize * w + cx as usize], best);
                }
            }
        }

        #[test]
        fn weights_sum_to_one(xs in proptest::collection::vec((0.0f64..5.0, 0.0f64..5.0, -3.0f64..3.0), 1..40)) {
            let m = map_with(&[(10, 10), (30, 25), (5, 40)], 50, 50, 0.1);
            let f = build_likelihood_field(&m, 0.1, 0.05).unwrap();
            let mut ps: Vec<Particle> = xs.iter().map(|&(x, y, t)| Particle { x, y, yaw: t, weight: 1.0 / xs.len() as f64 }).collect();
            let scan = LidarScan { angles: vec![0.0, 1.0, 2.0], ranges: vec![1.0, 2.0, 30.0], max_range: 30.0, timestamp: 0.0 };
            update_weights(&mut ps, &scan, &f, &SensorOffset::default(), 60).unwrap();
            let s: f64 = ps.iter().map(|p| p.weight).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn systematic_counts_within_one(ws in proptest::collection::vec(0.001f64..1.0, 1..30), u in 0.0f64..1.0) {
            let total: f64 = ws.iter().sum();
            let n = ws.len();
            let ps: Vec<Particle> = ws.iter().enumerate().map(|(i, w)| Particle { x: i as f64, y: 0.0, yaw: 0.0, weight: w / total }).collect();
            let out = systematic_resample(&ps, u / n as f64);
            prop_assert_eq!(out.len(), n);
            for (i, p) in ps.iter().enumerate() {
                let count = out.iter().filter(|q| q.x == i as f64).count() as f64;
                prop_assert!((count - n as f64 * p.weight).abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn predict_examples() {
        let mut rng = stream_rng(1, 1);
        let zero = MotionNoise { alpha1: 0.0, alpha2: 0.0, alpha3: 0.0, alpha4: 0.0 };
        let mut ps = vec![
            Particle { x: 1.0, y: 2.0, yaw: 0.3, weight: 0.5 },
            Particle { x: -1.0, y: 0.0, yaw: -2.0, weight: 0.5 },
        ];
        let before = ps.clone();
        predict(&mut ps, &OdomDelta::default(), &MotionNoise::default(), &mut rng);
        assert_eq!(ps, before);
        predict(&mut ps, &OdomDelta { dx: 1.0, dy: 0.0, dyaw: 0.0 }, &zero, &mut rng);
        for (a, b) in ps.iter().zip(&before) {
            assert!((a.x - b.x - b.yaw.cos()).abs() < 1e-12);
            assert!((a.y - b.y - b.yaw.sin()).abs() < 1e-12);
        }
        let mut back = before.clone();
        predict(&mut back, &OdomDelta { dx: -0.5, dy: 0.0, dyaw: 0.0 }, &zero, &mut rng);
        assert!((back[0].x - (1.0 - 0.5 * 0.3f64.cos())).abs() < 1e-12);
        assert!((back[0].yaw - 0.3).abs() < 1e-12);
    }

    #[test]
    fn spread_grows_with_alpha() {
        let spread = |a: f64| {
            let mut total = 0.0;
            for seed in 0..20 {
                let mut rng = stream_rng(seed, 1);
                let mut ps = vec![Particle { x: 0.0, y: 0.0, yaw: 0.0, weight: 1.0 }; 500];
                let noise = MotionNoise { alpha1: a, alpha2: a, alpha3: a, alpha4: a };
                predict(&mut ps, &OdomDelta { dx: 1.0, dy: 0.0, dyaw: 0.2 }, &noise, &mut rng);
                let mx = ps.iter().map(|p| p.x).sum::<f64>() / 500.0;
                total += ps.iter().map(|p| (p.x - mx).powi(2)).sum::<f64>() / 499.0;
            }
            total
        };
        let v: Vec<f64> = [0.01, 0.05, 0.1, 0.2].iter().map(|&a| spread(a)).collect();
        assert!(v.windows(2).all(|w| w[0] < w[1]), "{v:?}");
    }

    #[test]
    fn single_beam_weight_ratio() {
        let (sigma, floor) = (0.1, 0.05);
        let m = map_with(&[(20, 5)], 40, 10, 0.1);
        let f = build_likelihood_field(&m, sigma, floor).unwrap();
        // beam of 1 m along +x; one particle ends on the occupied cell, the other 3σ short
        let mut ps = vec![
            Particle { x: 1.05, y: 0.55, yaw: 0.0, weight: 0.5 },
            Particle { x: 0.75, y: 0.55, yaw: 0.0, weight: 0.5 },
        ];
        let scan = LidarScan { angles: vec![0.0], ranges: vec![1.0], max_range: 30.0, timestamp: 0.0 };
        update_weights(&mut ps, &scan, &f, &SensorOffset::default(), 60).unwrap();
        let expected = 1.0 / (floor + (1.0 - floor) * (-4.5f64).exp());
        assert!((ps[0].weight / ps[1].weight - expected).abs() < 1e-9);
    }

    #[test]
    fn uniform_field_keeps_weights_equal() {
        // every cell occupied: the field is 1 everywhere inside the grid
        let all: Vec<(usize, usize)> = (0..100).map(|i| (i % 10, i / 10)).collect();
        let m = map_with(&all, 10, 10, 0.5);
        let f = build_likelihood_field(&m, 0.1, 0.05).unwrap();
        let mut ps: Vec<Particle> = (0..5).map(|i| Particle { x: 1.0 + 0.3 * i as f64, y: 2.0, yaw: 0.1 * i as f64, weight: 0.2 }).collect();
        let scan = LidarScan { angles: vec![0.0, PI / 2.0], ranges: vec![0.5, 0.7], max_range: 30.0, timestamp: 0.0 };
        update_weights(&mut ps, &scan, &f, &SensorOffset::default(), 60).unwrap();
        assert!(ps.iter().all(|p| (p.weight - 0.2).abs() < 1e-15));
    }

    #[test]
    fn true_pose_scores_best_on_fixture() {
        // L-shaped wall plus a post: distinctive under translation and rotation
        let mut occ = Vec::new();
        for i in 0..40 {
            occ.push((i, 0));
            occ.push((0, i));
        }
        occ.push((25, 20));
        let m = map_with(&occ, 40, 40, 0.1);
        let f = build_likelihood_field(&m, 0.1, 0.01).unwrap();
        // noiseless scan from (1.5, 1.2, 0.3) computed geometrically
        let (tx, ty, tyaw) = (1.5, 1.2, 0.3);
        let targets = [(0.05, 1.2), (1.5, 0.05), (2.55, 2.05), (0.05, 3.0), (3.5, 0.05)];
        let mut angles = Vec::new();
        let mut ranges = Vec::new();
        for (x, y) in targets {
            angles.push(normalize_angle((y - ty as f64).atan2(x - tx) - tyaw));
            ranges.push(((x - tx) as f64).hypot(y - ty));
        }
        let scan = LidarScan { angles, ranges, max_range: 30.0, timestamp: 0.0 };
        let mut ps = vec![Particle { x: tx, y: ty, yaw: tyaw, weight: 1.0 }];
        for dx in [-0.2, -0.1, 0.0, 0.1, 0.2] {
            for dy in [-0.2, -0.1, 0.0, 0.1, 0.2] {
                for dth in [-0.1, 0.0, 0.1] {
                    if dx != 0.0 || dy != 0.0 || dth != 0.0 {
                        ps.push(Particle { x: tx + dx, y: ty + dy, yaw: tyaw + dth, weight: 1.0 });
                    }
                }
            }
        }
        let n = ps.len() as f64;
        ps.iter_mut().for_each(|p| p.weight = 1.0 / n);
        update_weights(&mut ps, &scan, &f, &SensorOffset::default(), 60).unwrap();
        assert!(ps.iter().skip(1).all(|p| p.weight <= ps[0].weight));
    }

    #[test]
    fn degenerate_update_errors() {
        let m = map_with(&[(0, 0)], 400, 400, 0.1);
        let f = build_likelihood_field(&m, 0.01, 0.0).unwrap();
        let mut ps = vec![Particle { x: 20.0, y: 20.0, yaw: 0.0, weight: 1.0 }];
        let scan = LidarScan { angles: vec![0.0], ranges: vec![1.0], max_range: 30.0, timestamp: 0.0 };
        assert!(matches!(update_weights(&mut ps, &scan, &f, &SensorOffset::default(), 1), Err(Error::DegenerateFilter)));
    }

    #[test]
    fn resample_examples() {
        let ps = uniform(7);
        let out = systematic_resample(&ps, 0.5 / 7.0);
        let xs: Vec<f64> = out.iter().map(|p| p.x).collect();
        assert_eq!(xs, (0..7).map(|i| i as f64).collect::<Vec<_>>());
        let mut one = uniform(5);
        one.iter_mut().enumerate().for_each(|(i, p)| p.weight = if i == 3 { 1.0 } else { 0.0 });
        assert!(systematic_resample(&one, 0.1).iter().all(|p| p.x == 3.0));
        // uniform weights: N_eff = N so nothing happens
        let mut u = uniform(10);
        assert!(!resample(&mut u, &mut stream_rng(1, 1)));
        assert!(resample(&mut one, &mut stream_rng(1, 1)));
        assert!(one.iter().all(|p| p.weight == 0.2));
    }

    #[test]
    fn resampling_preserves_mean() {
        let n = 10_000;
        let mut rng = stream_rng(2, 3);
        let mut ps: Vec<Particle> = (0..n)
            .map(|_| Particle { x: rng.random_range(0.0..10.0), y: rng.random_range(-5.0..5.0), yaw: 0.0, weight: rng.random::<f64>().powi(4) })
            .collect();
        let total: f64 = ps.iter().map(|p| p.weight).sum();
        ps.iter_mut().for_each(|p| p.weight /= total);
        let before = estimate_pose(&ps).unwrap();
        assert!(resample(&mut ps, &mut rng));
        let mx = ps.iter().map(|p| p.x).sum::<f64>() / n as f64;
        let my = ps.iter().map(|p| p.y).sum::<f64>() / n as f64;
        assert!(((mx - before.x) / before.x).abs() < 0.01);
        assert!((my - before.y).abs() < 0.01 * 5.0);
    }

    #[test]
    fn estimate_examples() {
        let same = vec![Particle { x: 1.0, y: -2.0, yaw: 0.4, weight: 0.25 }; 4];
        let e = estimate_pose(&same).unwrap();
        assert!((e.x - 1.0).abs() < 1e-12 && (e.y + 2.0).abs() < 1e-12 && (e.yaw - 0.4).abs() < 1e-12);
        assert!(e.covariance.iter().flatten().all(|v| v.abs() < 1e-20));
        let pair = vec![
            Particle { x: 0.0, y: 0.0, yaw: PI / 2.0, weight: 0.5 },
            Particle { x: 0.0, y: 0.0, yaw: -PI / 2.0, weight: 0.5 },
        ];
        assert!(estimate_pose(&pair).unwrap().yaw.abs() < 1e-12);
        // circular mean across the ±π seam
        let seam = vec![
            Particle { x: 0.0, y: 0.0, yaw: PI - 0.1, weight: 0.5 },
            Particle { x: 0.0, y: 0.0, yaw: -PI + 0.1, weight: 0.5 },
        ];
        let e = estimate_pose(&seam).unwrap();
        assert!((e.yaw.abs() - PI).abs() < 1e-12);
        assert!((e.covariance[2][2] - 0.01).abs() < 1e-12);
        assert!(estimate_pose(&[]).is_err());
    }
}
