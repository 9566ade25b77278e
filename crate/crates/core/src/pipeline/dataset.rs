use std::path::Path;

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FeatureConfig, VelocitySource};
use super::synth::Scene;
use crate::error::{Error, Result};
use crate::flow::{
    assemble_feature_vector, cloud_dynamics, cloud_height, feature_names, helmholtz_decompose,
    inflated_covariance, intersection_moments, optical_flow, reproject_pixels, sun_weight_map,
    trace_streamline, traversal_times, wave_probability, weighted_moments, FeatureKind,
    MomentBlocks, ScalarField, Unit, VectorField, LAGS,
};
use crate::multitask::SkyCondition;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: f64,
    pub condition: SkyCondition,
    pub day: usize,
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Sample {
    /// The current CSI (first lag), which persistence repeats.
    pub fn current_csi(&self) -> f64 {
        self.features[0]
    }
}

/// Samples sharing one column layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub horizons: usize,
    pub samples: Vec<Sample>,
}

const META: [&str; 3] = ["timestamp", "condition", "day"];

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            horizons: self.horizons,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Column positions of the feature vector restricted to `sources`.
    pub fn columns_for(&self, sources: &[usize]) -> Result<Vec<usize>> {
        feature_names(sources)
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::InvalidArgument(format!("dataset has no column `{name}`")))
            })
            .collect()
    }

    pub fn design(&self, columns: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.samples.len();
        let x = DMatrix::from_fn(n, columns.len(), |i, j| self.samples[i].features[columns[j]]);
        let y = DMatrix::from_fn(n, self.horizons, |i, c| self.samples[i].targets[c]);
        (x, y)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = META.iter().map(|s| s.to_string()).collect();
        header.extend(self.feature_names.iter().cloned());
        header.extend((1..=self.horizons).map(|c| format!("csi_h{c}")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row = vec![s.timestamp.to_string(), s.condition.to_string(), s.day.to_string()];
            row.extend(s.features.iter().chain(&s.targets).map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 || header[..3] != META {
            return Err(Error::Format("dataset must start with timestamp, condition, day".into()));
        }
        let horizons = header.iter().filter(|h| h.starts_with("csi_h")).count();
        let n_feat = header.len() - 3 - horizons;
        if horizons == 0 || header[3 + n_feat..].iter().any(|h| !h.starts_with("csi_h")) {
            return Err(Error::Format("target columns csi_h<c> must come last".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<&str> = rec.iter().collect();
            samples.push(Sample {
                timestamp: num(vals[0])?,
                condition: vals[1].parse()?,
                day: vals[2].parse().map_err(|e| Error::Format(format!("bad day: {e}")))?,
                features: vals[3..3 + n_feat].iter().map(|v| num(v)).collect::<Result<_>>()?,
                targets: vals[3 + n_feat..].iter().map(|v| num(v)).collect::<Result<_>>()?,
            });
        }
        Ok(Dataset { feature_names: header[3..3 + n_feat].to_vec(), horizons, samples })
    }
}

/// Outcome of the per-frame feature extraction.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFeatures {
    pub blocks: MomentBlocks,
    pub weights: WeightSource,
}

/// Velocity field the weight maps were traced on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightSource {
    Field,
    /// The per-pixel field failed; its spatial mean was used.
    MeanFlow,
    /// Both failed (typically a motionless clear sky).
    Uniform,
}

fn frame_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Moment blocks for every horizon map of frame `k` (needs frame `k − 1`).
pub fn frame_features(scene: &Scene, k: usize, cfg: &FeatureConfig, seed: u64) -> Result<FrameFeatures> {
    if k == 0 || k >= scene.len() {
        return Err(Error::InvalidArgument(format!("frame {k} has no predecessor")));
    }
    let (m, n) = (scene.rows, scene.cols);
    let temp = ScalarField::new(scene.frames[k].clone(), Unit::CentiKelvin)?;
    let kelvin = temp.data().mapv(|t| t / 100.0);
    let height = cloud_height(&temp, scene.air_temperature, scene.lapse_rate)?;

    let flow_px = match cfg.velocity {
        VelocitySource::Truth => {
            let [u, v] = scene.wind[k];
            VectorField::from_fn(m, n, |_, _| (u, v))?
        }
        VelocitySource::OpticalFlow => {
            let prev = scene.frames[k - 1].mapv(|t| t / 100.0);
            optical_flow(&prev, &kelvin, 2, cfg.min_eigen)?.field
        }
    };

    let cloudy: Vec<f64> = kelvin
        .iter()
        .zip(height.data().iter())
        .filter(|(t, _)| **t - scene.clear_temperature > cfg.cloud_threshold)
        .map(|(_, h)| *h)
        .filter(|h| (100.0..20_000.0).contains(h))
        .collect();
    let layer = if cloudy.is_empty() {
        cfg.default_height
    } else {
        let mut c = cloudy;
        c.sort_by(f64::total_cmp);
        c[c.len() / 2]
    };
    let geo = reproject_pixels(m, n, scene.elevation[k], scene.azimuth[k], layer, cfg.fov)?;

    let dt = scene.step_seconds;
    let u = ndarray::Zip::from(&flow_px.u).and(&geo.dx).map_collect(|&u, &d| u * d / dt);
    let v = ndarray::Zip::from(&flow_px.v).and(&geo.dy).map_collect(|&v, &d| v * d / dt);
    let mean_cell = 0.5 * (geo.dx.mean().unwrap_or(1.0) + geo.dy.mean().unwrap_or(1.0));
    let speed = ndarray::Zip::from(&u).and(&v).map_collect(|a, b| a.hypot(*b)).mean().unwrap_or(0.0);
    let floor = cfg.relative_error_floor * speed;
    let e_u = (flow_px.e_u * mean_cell / dt).max(floor);
    let e_v = (flow_px.e_v * mean_cell / dt).max(floor);
    let vel = VectorField::new(u, v, e_u, e_v)?;
    let (mag, div, curl) = cloud_dynamics(&vel)?;

    let fields: [&Array2<f64>; 5] = [&kelvin, height.data(), mag.data(), div.data(), curl.data()];
    let horizons: Vec<f64> = cfg.horizons.iter().map(|&h| h as f64 * dt).collect();
    let seed = frame_seed(seed, k);

    let weight_maps = |field: &VectorField| -> Result<Vec<Array2<f64>>> {
        let potentials = helmholtz_decompose(&field.reversed())?;
        let line = trace_streamline(&potentials, scene.sun)?.with_geometry(&geo);
        let along: Vec<(f64, f64)> =
            line.pixels.iter().map(|&(i, j)| (field.u[[i, j]], field.v[[i, j]])).collect();
        let times = traversal_times(&line, &along, e_u, e_v, cfg.n_mc, seed)?;
        let mut moments =
            intersection_moments(&line, &times, &horizons, e_u, e_v, cfg.n_mc, seed.wrapping_add(1))?;
        for h in &mut moments {
            // one cell of positional spread keeps point-mass lines usable
            h.covariance[0][0] += mean_cell * mean_cell;
            h.covariance[1][1] += mean_cell * mean_cell;
            inflated_covariance(h)?;
        }
        let wave = wave_probability(&potentials, scene.sun)?;
        let z = sun_weight_map(&moments, &wave, &geo)?;
        if z.maps.iter().any(|m| !(m.sum() > 0.0)) {
            return Err(Error::Degenerate("weight map underflowed".into()));
        }
        Ok(z.maps)
    };

    let (maps, weights) = match weight_maps(&vel) {
        Ok(maps) => (maps, WeightSource::Field),
        Err(e) => {
            log::debug!("frame {k}: retracing on the mean flow ({e})");
            let (mu, mv) = (vel.u.mean().unwrap_or(0.0), vel.v.mean().unwrap_or(0.0));
            let mean = VectorField::new(
                Array2::from_elem((m, n), mu),
                Array2::from_elem((m, n), mv),
                e_u,
                e_v,
            )?;
            match weight_maps(&mean) {
                Ok(maps) => (maps, WeightSource::MeanFlow),
                Err(e) => {
                    log::debug!("frame {k}: uniform weights ({e})");
                    (vec![Array2::from_elem((m, n), 1.0); horizons.len()], WeightSource::Uniform)
                }
            }
        }
    };
    let mut blocks = MomentBlocks::default();
    for (c, z) in maps.iter().enumerate() {
        let zs = z.as_standard_layout();
        let zs = zs.as_slice().expect("standard layout");
        let mut block = [(0.0, 0.0); 5];
        for (b, f) in block.iter_mut().zip(fields) {
            let fs = f.as_standard_layout();
            *b = weighted_moments(fs.as_slice().expect("standard layout"), zs)?;
        }
        blocks.insert(c + 1, block);
    }
    debug_assert_eq!(FeatureKind::ALL.len(), fields.len());
    Ok(FrameFeatures { blocks, weights })
}

/// How many samples used each kind of weight map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightCounts {
    pub field: usize,
    pub mean_flow: usize,
    pub uniform: usize,
}

/// Builds one sample per frame that has `LAGS` past values and every
/// horizon inside the same day. Frames are processed in parallel and
/// collected in order.
pub fn build_dataset(scene: &Scene, cfg: &FeatureConfig, seed: u64) -> Result<(Dataset, WeightCounts)> {
    let max_h = *cfg.horizons.last().ok_or(Error::Empty("horizons"))?;
    let per_day = scene.frames_per_day;
    let frames: Vec<usize> = (0..scene.len())
        .filter(|&k| {
            let f = k % per_day;
            f >= LAGS && f + max_h < per_day
        })
        .collect();
    let all_sources: Vec<usize> = (1..=cfg.horizons.len()).collect();
    let rows = frames
        .par_iter()
        .map(|&k| {
            let ff = frame_features(scene, k, cfg, seed)?;
            let lags: Vec<f64> = (0..LAGS).map(|l| scene.csi[k - l]).collect();
            let features = assemble_feature_vector(
                &lags,
                (scene.elevation[k], scene.azimuth[k]),
                &ff.blocks,
                &all_sources,
            )?;
            let sample = Sample {
                timestamp: scene.timestamps[k],
                condition: scene.labels[k],
                day: scene.day[k],
                features,
                targets: cfg.horizons.iter().map(|&h| scene.csi[k + h]).collect(),
            };
            Ok((sample, ff.weights))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = WeightCounts::default();
    for (_, w) in &rows {
        match w {
            WeightSource::Field => counts.field += 1,
            WeightSource::MeanFlow => counts.mean_flow += 1,
            WeightSource::Uniform => counts.uniform += 1,
        }
    }
    Ok((
        Dataset {
            feature_names: feature_names(&all_sources),
            horizons: cfg.horizons.len(),
            samples: rows.into_iter().map(|r| r.0).collect(),
        },
        counts,
    ))
}
