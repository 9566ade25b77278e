use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{BlobSpec, SceneConfig};
use crate::error::{Error, Result};
use crate::flow::grid_io::{read_grid, write_grid};
use crate::multitask::SkyCondition;

/// A generated image sequence with its ground truth. Frames are infrared
/// brightness temperatures in centi-Kelvin, rounded to `f32` so that the
/// grid files reproduce them exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub rows: usize,
    pub cols: usize,
    pub step_seconds: f64,
    pub air_temperature: f64,
    pub lapse_rate: f64,
    pub clear_temperature: f64,
    pub sun: (usize, usize),
    pub frames_per_day: usize,
    #[serde(skip)]
    pub frames: Vec<Array2<f64>>,
    /// True cloud velocity `[u, v]` (columns, rows per frame).
    pub wind: Vec<[f64; 2]>,
    pub csi: Vec<f64>,
    pub labels: Vec<SkyCondition>,
    pub elevation: Vec<f64>,
    pub azimuth: Vec<f64>,
    pub day: Vec<usize>,
    pub timestamps: Vec<f64>,
    pub blobs: Vec<BlobSpec>,
    /// Frame of closest approach to the Sun for every blob.
    pub transits: Vec<usize>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.csi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.csi.is_empty()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("frames"))?;
        std::fs::write(dir.join("scene.json"), serde_json::to_vec_pretty(self)?)?;
        for (k, f) in self.frames.iter().enumerate() {
            write_grid(dir.join("frames").join(format!("f{k:06}.skyg")), f)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut scene: Scene = serde_json::from_slice(&std::fs::read(dir.join("scene.json"))?)?;
        scene.frames = (0..scene.csi.len())
            .map(|k| read_grid(dir.join("frames").join(format!("f{k:06}.skyg"))))
            .collect::<Result<_>>()?;
        Ok(scene)
    }
}

fn blob_opacity(b: &BlobSpec, frame: usize, i: f64, j: f64) -> f64 {
    if frame < b.start_frame || frame >= b.start_frame + b.lifetime {
        return 0.0;
    }
    let dt = (frame - b.start_frame) as f64;
    let ci = b.center[0] + b.velocity[0] * dt;
    let cj = b.center[1] + b.velocity[1] * dt;
    let d2 = (i - ci).powi(2) + (j - cj).powi(2);
    if d2 > 9.0 * b.sigma * b.sigma {
        0.0
    } else {
        b.opacity * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
    }
}

fn random_blobs(cfg: &SceneConfig, sun: (usize, usize), rng: &mut ChaCha8Rng) -> Vec<BlobSpec> {
    let mut blobs = Vec::new();
    let p = cfg.transit_period;
    for d in 0..cfg.days {
        let theta = rng.random_range(0.0..2.0 * PI);
        let vel = [cfg.wind_speed * theta.sin(), cfg.wind_speed * theta.cos()];
        let perp = [theta.cos(), -theta.sin()];
        for s in 0..cfg.frames_per_day.div_ceil(p) {
            let start = d * cfg.frames_per_day + s * p;
            if rng.random::<f64>() < cfg.clear_probability {
                continue;
            }
            let (condition, sigma, opacity, height) = match rng.random_range(0..3) {
                0 => (
                    SkyCondition::Cumulus,
                    rng.random_range(2.0..3.5),
                    rng.random_range(0.6..0.9),
                    rng.random_range(1500.0..2500.0),
                ),
                1 => (
                    SkyCondition::Stratus,
                    rng.random_range(5.0..7.0),
                    rng.random_range(0.3..0.5),
                    rng.random_range(500.0..1200.0),
                ),
                _ => (
                    SkyCondition::Nimbus,
                    rng.random_range(5.0..7.0),
                    rng.random_range(0.85..1.0),
                    rng.random_range(2000.0..4000.0),
                ),
            };
            let offset = rng.random_range(-0.8..0.8) * sigma;
            let half = (p / 2) as f64;
            let center = [
                sun.0 as f64 - vel[0] * half + perp[0] * offset,
                sun.1 as f64 - vel[1] * half + perp[1] * offset,
            ];
            let lifetime = p.min(cfg.frames_per_day - s * p);
            blobs.push(BlobSpec { center, velocity: vel, sigma, opacity, height, start_frame: start, lifetime, condition });
        }
    }
    blobs
}

fn closest_approach(b: &BlobSpec, sun: (usize, usize)) -> usize {
    let rel = [sun.0 as f64 - b.center[0], sun.1 as f64 - b.center[1]];
    let v2 = b.velocity[0].powi(2) + b.velocity[1].powi(2);
    let t = if v2 > 0.0 { (rel[0] * b.velocity[0] + rel[1] * b.velocity[1]) / v2 } else { 0.0 };
    b.start_frame + t.round().clamp(0.0, b.lifetime.saturating_sub(1) as f64) as usize
}

/// Generates the scene. Random blobs come from `seed`; explicit blobs in the
/// config replace them.
pub fn generate_synthetic_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    let (m, n) = (cfg.rows, cfg.cols);
    let sun = ((m - 1) / 2, (n - 1) / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs = if cfg.blobs.is_empty() { random_blobs(cfg, sun, &mut rng) } else { cfg.blobs.clone() };
    for b in &blobs {
        if !(b.sigma > 0.0) || 3.0 * b.sigma > m.min(n) as f64 {
            return Err(Error::InvalidArgument(format!("blob sigma {} does not fit the grid", b.sigma)));
        }
        if !(b.opacity > 0.0 && b.opacity <= 1.0 && b.height > 0.0) {
            return Err(Error::InvalidArgument("blob opacity must be in (0, 1] and height > 0".into()));
        }
    }
    let noise = (cfg.csi_noise > 0.0).then(|| Normal::new(0.0, cfg.csi_noise).expect("positive sd"));
    let total = cfg.days * cfg.frames_per_day;
    let mut scene = Scene {
        rows: m,
        cols: n,
        step_seconds: cfg.step_seconds,
        air_temperature: cfg.air_temperature,
        lapse_rate: cfg.lapse_rate,
        clear_temperature: cfg.clear_temperature,
        sun,
        frames_per_day: cfg.frames_per_day,
        frames: Vec::with_capacity(total),
        wind: Vec::with_capacity(total),
        csi: Vec::with_capacity(total),
        labels: Vec::with_capacity(total),
        elevation: Vec::with_capacity(total),
        azimuth: Vec::with_capacity(total),
        day: Vec::with_capacity(total),
        timestamps: Vec::with_capacity(total),
        transits: blobs.iter().map(|b| closest_approach(b, sun)).collect(),
        blobs,
    };
    for k in 0..total {
        let (d, f) = (k / cfg.frames_per_day, k % cfg.frames_per_day);
        let live: Vec<&BlobSpec> =
            scene.blobs.iter().filter(|b| k >= b.start_frame && k < b.start_frame + b.lifetime).collect();
        let mut frame = Array2::from_elem((m, n), cfg.clear_temperature);
        let mut visible: Option<(f64, &BlobSpec)> = None;
        for ((i, j), t) in frame.indexed_iter_mut() {
            let (mut sum, mut warm) = (0.0, 0.0);
            for b in &live {
                let o = blob_opacity(b, k, i as f64, j as f64);
                if o > 0.0 {
                    sum += o;
                    warm += o * (cfg.air_temperature + cfg.lapse_rate * b.height - cfg.clear_temperature);
                }
            }
            if sum > 1.0 {
                warm /= sum;
            }
            *t += warm;
        }
        for b in &live {
            let dt = (k - b.start_frame) as f64;
            let ci = b.center[0] + b.velocity[0] * dt;
            let cj = b.center[1] + b.velocity[1] * dt;
            let reach = 3.0 * b.sigma;
            let on_grid = ci > -reach && ci < m as f64 - 1.0 + reach && cj > -reach && cj < n as f64 - 1.0 + reach;
            let dist = (ci - sun.0 as f64).hypot(cj - sun.1 as f64);
            if on_grid && visible.is_none_or(|(best, _)| dist < best) {
                visible = Some((dist, b));
            }
        }
        let o_sun: f64 = live.iter().map(|b| blob_opacity(b, k, sun.0 as f64, sun.1 as f64)).sum();
        let mut csi = (1.0 - cfg.attenuation * o_sun.min(1.0)).max(cfg.csi_floor);
        if let Some(nd) = noise {
            csi += nd.sample(&mut rng);
        }
        let tau = f as f64 / cfg.frames_per_day as f64;
        scene.frames.push(frame.mapv(|t| (t * 100.0) as f32 as f64));
        scene.wind.push(visible.map_or([0.0; 2], |(_, b)| [b.velocity[1], b.velocity[0]]));
        scene.csi.push(csi.max(1e-3));
        scene.labels.push(visible.map_or(SkyCondition::Clear, |(_, b)| b.condition));
        scene.elevation.push(60.0 - 12.0 * (2.0 * tau - 1.0).powi(2));
        scene.azimuth.push(140.0 + 80.0 * tau);
        scene.day.push(d);
        scene.timestamps.push(d as f64 * 86_400.0 + f as f64 * cfg.step_seconds);
    }
    Ok(scene)
}
