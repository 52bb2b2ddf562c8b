//! Deterministic synthetic highway spray scenes.
//!
//! A scene holds a ground plane, one lead vehicle (the only ground-truth
//! box), two spray corridors (behind the lead vehicle and around the ego
//! vehicle at the origin), radar returns on the lead vehicle's rear face and
//! synthetic per-point anomaly scores. Spray corridors are unions of
//! elongated anisotropic Gaussian blobs aligned with the travel direction.
//!
//! Randomness comes from ChaCha8 seeded with `SceneConfig::seed`; every scene
//! component draws from its own ChaCha stream, so output is bit-identical
//! across platforms and across runs.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::geometry::{
    box_contains_point, Box3D, Point, PointClass, PointCloud, PointLabelArray, RadarTarget, RadarTargetList,
    ScoreArray,
};
use crate::io::{DatasetManifest, FrameBundle};

/// Lead vehicle dimensions `(w, l, h)`.
pub const VEHICLE_DIMS: (f64, f64, f64) = (1.9, 4.5, 1.6);
/// Range at which a vehicle carries `vehicle_surface_points` returns.
const REFERENCE_RANGE: f64 = 10.0;
/// Cap on the near-range point density boost.
const MAX_DENSITY_BOOST: f64 = 4.0;
const BLOBS_PER_CORRIDOR: usize = 5;
/// Blob standard deviation along travel, across travel and vertically.
const BLOB_SIGMA: [f64; 3] = [1.0, 0.3, 0.25];
const MAX_RESAMPLE: usize = 64;

/// Travel speed of both vehicles; faster means more spray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedClass {
    Kmh50,
    Kmh80,
    Kmh100,
    Kmh130,
}

impl SpeedClass {
    pub const ALL: [SpeedClass; 4] = [
        SpeedClass::Kmh50,
        SpeedClass::Kmh80,
        SpeedClass::Kmh100,
        SpeedClass::Kmh130,
    ];

    pub fn kmh(self) -> f64 {
        match self {
            SpeedClass::Kmh50 => 50.0,
            SpeedClass::Kmh80 => 80.0,
            SpeedClass::Kmh100 => 100.0,
            SpeedClass::Kmh130 => 130.0,
        }
    }

    /// Spray count multiplier relative to 100 km/h.
    pub fn spray_factor(self) -> f64 {
        self.kmh() / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    /// Lead vehicle center distance ahead of the ego, metres.
    pub lead_distance: f64,
    /// When positive, the distance is drawn from
    /// `[lead_distance, lead_distance + lead_distance_spread]`.
    pub lead_distance_spread: f64,
    pub lead_speed_class: SpeedClass,
    /// Draw the speed class per scene instead of using `lead_speed_class`.
    pub vary_speed: bool,
    /// Spray points per corridor at 100 km/h.
    pub spray_points: usize,
    /// Vehicle surface returns at the 10 m reference range; the count falls
    /// off inversely with range.
    pub vehicle_surface_points: usize,
    pub ground_points: usize,
    pub ground_noise_sigma: f64,
    pub radar_targets_on_vehicle: usize,
    pub clutter_target_prob: f64,
    /// Mean score of spray points; valid points have mean 0 and unit
    /// variance.
    pub score_separation: f64,
    /// Mean score of vehicle points (models vehicle/spray score overlap).
    pub vehicle_score_shift: f64,
    /// Scene seed. Dataset generation overrides it with `base_seed + i`.
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            lead_distance: 20.0,
            lead_distance_spread: 0.0,
            lead_speed_class: SpeedClass::Kmh100,
            vary_speed: false,
            spray_points: 400,
            vehicle_surface_points: 600,
            ground_points: 4000,
            ground_noise_sigma: 0.03,
            radar_targets_on_vehicle: 2,
            clutter_target_prob: 0.0,
            score_separation: 4.0,
            vehicle_score_shift: 0.0,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lead_distance,
            self.lead_distance_spread,
            self.ground_noise_sigma,
            self.clutter_target_prob,
            self.score_separation,
            self.vehicle_score_shift,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("scene config", "non-finite value"));
        }
        if self.lead_distance < 5.0 {
            return Err(Error::invalid("lead_distance", "must be at least 5 m"));
        }
        if self.lead_distance_spread < 0.0 || self.ground_noise_sigma < 0.0 {
            return Err(Error::invalid("scene config", "spread and sigma must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.clutter_target_prob) {
            return Err(Error::invalid("clutter_target_prob", "outside [0, 1]"));
        }
        Ok(())
    }
}

/// Independent RNG stream per scene component.
#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Layout = 1,
    Ground = 2,
    Vehicle = 3,
    LeadSpray = 4,
    EgoSpray = 5,
    Radar = 6,
    Scores = 7,
    Clutter = 8,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Box-frame `(u along, v across, z)` to world, with `z` measured from the
/// box bottom.
fn box_to_world(b: &Box3D, u: f64, v: f64, z: f64) -> [f64; 3] {
    let (s, c) = b.theta.sin_cos();
    [b.x + c * u - s * v, b.y + s * u + c * v, b.z - b.h / 2.0 + z]
}

fn sample_vehicle_surface(b: &Box3D, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let (hl, hw, h) = (b.l / 2.0, b.w / 2.0, b.h);
    // sides, front, rear, roof
    let areas = [b.l * h, b.l * h, b.w * h, b.w * h, b.l * b.w];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.random::<f64>() * total;
            let mut face = 0;
            while face < 4 && pick >= areas[face] {
                pick -= areas[face];
                face += 1;
            }
            let (a, c) = (rng.random::<f64>(), rng.random::<f64>());
            let (u, v, z) = match face {
                0 => (-hl + a * b.l, hw, c * h),
                1 => (-hl + a * b.l, -hw, c * h),
                2 => (hl, -hw + a * b.w, c * h),
                3 => (-hl, -hw + a * b.w, c * h),
                _ => (-hl + a * b.l, -hw + c * b.w, h),
            };
            box_to_world(b, u, v, z)
        })
        .collect()
}

/// Corridor described in a travel-aligned frame anchored at `(x0, y0)` with
/// heading `yaw`: blob centers along `u` in `[u_min, u_max]` on the two wheel
/// tracks.
struct Corridor {
    x0: f64,
    y0: f64,
    yaw: f64,
    u_min: f64,
    u_max: f64,
    track_half_width: f64,
}

fn sample_corridor(corridor: &Corridor, n: usize, exclude: &Box3D, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    if n == 0 {
        return Vec::new();
    }
    let blobs: Vec<[f64; 3]> = (0..BLOBS_PER_CORRIDOR)
        .map(|_| {
            let u = corridor.u_min + rng.random::<f64>() * (corridor.u_max - corridor.u_min);
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let v = side * corridor.track_half_width + 0.2 * gauss(rng);
            let z = 0.4 + 0.6 * rng.random::<f64>();
            [u, v, z]
        })
        .collect();
    let (s, c) = corridor.yaw.sin_cos();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let blob = blobs[rng.random_range(0..blobs.len())];
        for _ in 0..MAX_RESAMPLE {
            let u = blob[0] + BLOB_SIGMA[0] * gauss(rng);
            let v = blob[1] + BLOB_SIGMA[1] * gauss(rng);
            let z = blob[2] + BLOB_SIGMA[2] * gauss(rng);
            let p = [corridor.x0 + c * u - s * v, corridor.y0 + s * u + c * v, z];
            if z > 0.05 && !box_contains_point(exclude, p) {
                out.push(p);
                break;
            }
        }
    }
    out
}

/// Generate one scene; a pure function of `cfg` (including its seed).
pub fn generate_scene(cfg: &SceneConfig) -> Result<FrameBundle> {
    cfg.validate()?;
    let seed = cfg.seed;

    let mut layout = rng_for(seed, Stream::Layout);
    let distance = cfg.lead_distance + cfg.lead_distance_spread * layout.random::<f64>();
    let lateral = 0.3 * gauss(&mut layout);
    let yaw = 0.02 * gauss(&mut layout);
    let speed = if cfg.vary_speed {
        SpeedClass::ALL[layout.random_range(0..SpeedClass::ALL.len())]
    } else {
        cfg.lead_speed_class
    };
    let relative_speed = gauss(&mut layout);

    let (w, l, h) = VEHICLE_DIMS;
    let gt = Box3D::new(distance, lateral, h / 2.0, w, l, h, yaw)?;

    // Ground: uniform over the road patch, not under the vehicle.
    let mut rng = rng_for(seed, Stream::Ground);
    let ground_z = Normal::new(0.0, cfg.ground_noise_sigma)
        .map_err(|e| Error::invalid("ground_noise_sigma", e.to_string()))?;
    let mut ground = Vec::with_capacity(cfg.ground_points);
    while ground.len() < cfg.ground_points {
        let x = -20.0 + 100.0 * rng.random::<f64>();
        let y = -10.0 + 20.0 * rng.random::<f64>();
        let z: f64 = ground_z.sample(&mut rng);
        let footprint = Box3D {
            z: 0.0,
            h: 10.0,
            ..gt
        };
        if !box_contains_point(&footprint, [x, y, 0.0]) {
            ground.push([x, y, z]);
        }
    }

    let mut rng = rng_for(seed, Stream::Vehicle);
    let boost = (REFERENCE_RANGE / distance).min(MAX_DENSITY_BOOST);
    let n_vehicle = (cfg.vehicle_surface_points as f64 * boost).round() as usize;
    let vehicle = sample_vehicle_surface(&gt, n_vehicle, &mut rng);

    let n_spray = (cfg.spray_points as f64 * speed.spray_factor()).round() as usize;
    let lead_corridor = Corridor {
        x0: gt.x,
        y0: gt.y,
        yaw,
        u_min: -l / 2.0 - 1.5 - 10.0,
        u_max: -l / 2.0 - 2.5,
        track_half_width: 0.8,
    };
    let mut rng = rng_for(seed, Stream::LeadSpray);
    let mut spray = sample_corridor(&lead_corridor, n_spray, &gt, &mut rng);
    let ego_corridor = Corridor {
        x0: 0.0,
        y0: 0.0,
        yaw: 0.0,
        u_min: -12.0,
        u_max: 0.0,
        track_half_width: 0.8,
    };
    let mut rng = rng_for(seed, Stream::EgoSpray);
    spray.extend(sample_corridor(&ego_corridor, n_spray, &gt, &mut rng));

    // Radar: returns on the rear face, at bumper height with elevation noise.
    let mut rng = rng_for(seed, Stream::Radar);
    let mut targets = Vec::new();
    for _ in 0..cfg.radar_targets_on_vehicle {
        let u = -l / 2.0 + (0.1 * gauss(&mut rng)).abs().min(0.3);
        let v = (-w / 2.0 + 0.1) + rng.random::<f64>() * (w - 0.2);
        let z = (0.25 + 0.15 * gauss(&mut rng)).clamp(0.02, h - 0.02);
        let p = box_to_world(&gt, u, v, z);
        let bearing = p[1].atan2(p[0]);
        targets.push(RadarTarget {
            x: p[0],
            y: p[1],
            z: p[2],
            v: relative_speed * bearing.cos(),
        });
    }
    let mut rng = rng_for(seed, Stream::Clutter);
    if !spray.is_empty() && rng.random::<f64>() < cfg.clutter_target_prob {
        let p = spray[rng.random_range(0..spray.len())];
        targets.push(RadarTarget {
            x: p[0],
            y: p[1],
            z: p[2],
            v: 0.5 * gauss(&mut rng),
        });
    }

    let mut rng = rng_for(seed, Stream::Scores);
    let mut points = Vec::with_capacity(ground.len() + vehicle.len() + spray.len());
    let mut labels = Vec::with_capacity(points.capacity());
    let mut scores = Vec::with_capacity(points.capacity());
    let parts = [
        (&ground, PointClass::Background, 0.0, (0.05, 0.3)),
        (&vehicle, PointClass::Vehicle, cfg.vehicle_score_shift, (0.2, 0.9)),
        (&spray, PointClass::Spray, cfg.score_separation, (0.0, 0.1)),
    ];
    for (pts, class, mean, (i_lo, i_hi)) in parts {
        for p in pts.iter() {
            let intensity = i_lo + (i_hi - i_lo) * rng.random::<f64>();
            points.push(Point::new(
                p[0] as f32,
                p[1] as f32,
                p[2] as f32,
                intensity as f32,
            ));
            labels.push(class);
            scores.push((mean + gauss(&mut rng)) as f32);
        }
    }

    let mut bundle = FrameBundle::new(format!("scene_{seed}"), PointCloud::new(points)?);
    bundle.labels = Some(PointLabelArray::new(labels));
    bundle.scores = Some(ScoreArray::new(scores)?);
    bundle.gt_boxes = vec![gt];
    bundle.radar = Some(RadarTargetList::new(targets)?);
    Ok(bundle)
}

/// The scene for frame `i` of a dataset.
pub fn dataset_frame(template: &SceneConfig, base_seed: u64, i: usize) -> Result<FrameBundle> {
    let cfg = SceneConfig {
        seed: base_seed.wrapping_add(i as u64),
        ..template.clone()
    };
    let mut bundle = generate_scene(&cfg)?;
    bundle.frame_id = format!("frame_{i:05}");
    Ok(bundle)
}

/// Generate frames in memory with seeds `base_seed + i`.
pub fn generate_frames(
    template: &SceneConfig,
    frame_count: usize,
    base_seed: u64,
    mode: ExecMode,
) -> Result<Vec<FrameBundle>> {
    let ids: Vec<usize> = (0..frame_count).collect();
    exec::try_map_slice(mode, &ids, |&i| dataset_frame(template, base_seed, i))
}

/// Generate and write a dataset under `out_dir` (`frames/` plus
/// `manifest.json`).
pub fn generate_dataset(
    template: &SceneConfig,
    frame_count: usize,
    base_seed: u64,
    out_dir: &Path,
    mode: ExecMode,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ids: Vec<usize> = (0..frame_count).collect();
    let records = exec::try_map_slice(mode, &ids, |&i| {
        dataset_frame(template, base_seed, i)?.save(out_dir, "frames")
    })?;
    let manifest = DatasetManifest::new(out_dir, records);
    manifest.save(out_dir.join(DatasetManifest::FILE_NAME))?;
    Ok(manifest)
}

/// Parameters of the near/far clutter scene used to probe range-dependent
/// outlier filters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutterSceneConfig {
    /// Points in each of the near and far clutter blobs.
    pub clutter_points: usize,
    /// Isotropic standard deviation of the near and far blobs, metres.
    pub near_sigma: f64,
    pub far_sigma: f64,
    pub near_range: (f64, f64),
    pub far_range: (f64, f64),
    pub ground_points: usize,
    pub seed: u64,
}

impl Default for ClutterSceneConfig {
    fn default() -> Self {
        Self {
            clutter_points: 150,
            near_sigma: 1.5,
            far_sigma: 3.0,
            near_range: (4.0, 7.0),
            far_range: (22.0, 30.0),
            ground_points: 4000,
            seed: 0,
        }
    }
}

/// Ground plane plus two clutter blobs of equal cardinality, one near the
/// sensor and one far. Clutter is labeled spray; the near blob
/// comes first in point order.
pub fn generate_clutter_scene(cfg: &ClutterSceneConfig) -> Result<FrameBundle> {
    let mut rng = rng_for(cfg.seed, Stream::Clutter);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..cfg.ground_points {
        let x = -20.0 + 100.0 * rng.random::<f64>();
        let y = -10.0 + 20.0 * rng.random::<f64>();
        let z = 0.03 * gauss(&mut rng);
        points.push(Point::new(x as f32, y as f32, z as f32, 0.2));
        labels.push(PointClass::Background);
    }
    for ((lo, hi), sigma) in [(cfg.near_range, cfg.near_sigma), (cfg.far_range, cfg.far_sigma)] {
        let r = lo + (hi - lo) * rng.random::<f64>();
        let bearing = (rng.random::<f64>() - 0.5) * 0.6;
        let center = [r * bearing.cos(), r * bearing.sin(), 1.2];
        for _ in 0..cfg.clutter_points {
            let p = [
                center[0] + sigma * gauss(&mut rng),
                center[1] + sigma * gauss(&mut rng),
                (center[2] + sigma * gauss(&mut rng)).abs(),
            ];
            points.push(Point::new(p[0] as f32, p[1] as f32, p[2] as f32, 0.05));
            labels.push(PointClass::Spray);
        }
    }
    let mut bundle = FrameBundle::new(format!("clutter_{}", cfg.seed), PointCloud::new(points)?);
    bundle.labels = Some(PointLabelArray::new(labels));
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let cfg = SceneConfig {
            seed: 42,
            clutter_target_prob: 0.5,
            ..Default::default()
        };
        assert_eq!(generate_scene(&cfg).unwrap(), generate_scene(&cfg).unwrap());
        let other = SceneConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(generate_scene(&cfg).unwrap(), generate_scene(&other).unwrap());
    }

    #[test]
    fn labels_respect_the_gt_box() {
        for seed in 0..20 {
            let cfg = SceneConfig {
                seed,
                lead_distance: 8.0,
                lead_distance_spread: 40.0,
                ..Default::default()
            };
            let b = generate_scene(&cfg).unwrap();
            let gt = b.gt_boxes[0];
            let tol = pad_tol(&gt);
            for (p, c) in b.cloud.points().iter().zip(b.labels.as_ref().unwrap().as_slice()) {
                let inside = box_contains_point(&gt, p.position());
                match c {
                    PointClass::Spray => assert!(!inside, "spray inside gt at seed {seed}"),
                    PointClass::Vehicle => assert!(box_contains_point(&tol, p.position())),
                    PointClass::Background => {}
                }
            }
            for t in b.radar.as_ref().unwrap().targets() {
                assert!(box_contains_point(&gt, t.position()));
            }
        }
    }

    fn pad_tol(b: &Box3D) -> Box3D {
        crate::geometry::pad_box(b, 1e-4).unwrap()
    }

    #[test]
    fn no_spray_means_no_spray_labels() {
        let cfg = SceneConfig {
            spray_points: 0,
            clutter_target_prob: 1.0,
            ..Default::default()
        };
        let b = generate_scene(&cfg).unwrap();
        assert!(b
            .labels
            .as_ref()
            .unwrap()
            .as_slice()
            .iter()
            .all(|&c| c != PointClass::Spray));
        assert_eq!(b.radar.unwrap().len(), cfg.radar_targets_on_vehicle);
    }

    #[test]
    fn spray_grows_with_speed() {
        let count = |speed| {
            let cfg = SceneConfig {
                lead_speed_class: speed,
                ..Default::default()
            };
            let b = generate_scene(&cfg).unwrap();
            b.labels
                .unwrap()
                .as_slice()
                .iter()
                .filter(|&&c| c == PointClass::Spray)
                .count()
        };
        let counts: Vec<usize> = SpeedClass::ALL.iter().map(|&s| count(s)).collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn clutter_target_sits_on_spray() {
        let cfg = SceneConfig {
            clutter_target_prob: 1.0,
            ..Default::default()
        };
        let b = generate_scene(&cfg).unwrap();
        let radar = b.radar.unwrap();
        assert_eq!(radar.len(), cfg.radar_targets_on_vehicle + 1);
        let clutter = radar.targets().last().unwrap();
        assert!(!box_contains_point(&b.gt_boxes[0], clutter.position()));
    }

    #[test]
    fn dataset_frames_use_consecutive_seeds() {
        let t = SceneConfig::default();
        let f = dataset_frame(&t, 100, 3).unwrap();
        let direct = generate_scene(&SceneConfig { seed: 103, ..t }).unwrap();
        assert_eq!(f.frame_id, "frame_00003");
        assert_eq!(f.cloud, direct.cloud);
    }

    #[test]
    fn invalid_config() {
        let cfg = SceneConfig {
            clutter_target_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_scene(&cfg).is_err());
    }
}
