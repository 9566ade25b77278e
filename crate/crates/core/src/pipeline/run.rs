use std::path::{Path, PathBuf};

use super::config::PipelineConfig;
use super::dataset::{build_dataset, Dataset, WeightCounts};
use super::metrics::{evaluate, persistence_forecast, MetricsReport};
use super::model::{run_cross_validation, select_training, split_by_day, CvSummary, ForecastModel};
use super::report::{write_report, Evaluation};
use super::synth::{generate_synthetic_scene, Scene};
use crate::error::{Error, Result};
use crate::multitask::SkyCondition;

/// File locations under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn scene(&self) -> PathBuf {
        self.root.join("scene")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.csv")
    }

    pub fn train(&self) -> PathBuf {
        self.root.join("train.csv")
    }

    pub fn test(&self) -> PathBuf {
        self.root.join("test.csv")
    }

    pub fn cv(&self) -> PathBuf {
        self.root.join("cv.json")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.to_path_buf()))
    }
}

pub fn synth(cfg: &PipelineConfig, seed: u64, out: &Layout) -> Result<Scene> {
    let scene = generate_synthetic_scene(&cfg.scene, seed)?;
    scene.save(out.scene())?;
    log::info!("scene: {} frames, {} transits", scene.len(), scene.transits.len());
    Ok(scene)
}

pub fn features(cfg: &PipelineConfig, seed: u64, out: &Layout) -> Result<(Dataset, WeightCounts)> {
    require(&out.scene().join("scene.json"))?;
    let scene = Scene::load(out.scene())?;
    let (data, counts) = build_dataset(&scene, &cfg.features, seed)?;
    data.write_csv(out.dataset())?;
    Ok((data, counts))
}

fn split_and_select(cfg: &PipelineConfig, data: &Dataset) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_by_day(data, cfg.selection.test_days)?;
    Ok((select_training(&train, &cfg.model.sources, &cfg.selection)?, test))
}

pub fn select(cfg: &PipelineConfig, out: &Layout) -> Result<(Dataset, Dataset)> {
    require(&out.dataset())?;
    let (train, test) = split_and_select(cfg, &Dataset::read_csv(out.dataset())?)?;
    train.write_csv(out.train())?;
    test.write_csv(out.test())?;
    log::info!("selected {} training and {} test samples", train.len(), test.len());
    Ok((train, test))
}

/// The selected split when `select` has run, else the split computed from
/// the full dataset.
pub fn train_test(cfg: &PipelineConfig, out: &Layout) -> Result<(Dataset, Dataset)> {
    if out.train().exists() && out.test().exists() {
        return Ok((Dataset::read_csv(out.train())?, Dataset::read_csv(out.test())?));
    }
    require(&out.dataset())?;
    split_and_select(cfg, &Dataset::read_csv(out.dataset())?)
}

pub fn cv(cfg: &PipelineConfig, seed: u64, out: &Layout) -> Result<CvSummary> {
    let (train, _) = train_test(cfg, out)?;
    let summary = run_cross_validation(&train, cfg, seed)?;
    summary.save(out.cv())?;
    Ok(summary)
}

pub fn fit(cfg: &PipelineConfig, seed: u64, out: &Layout) -> Result<Vec<ForecastModel>> {
    let (train, _) = train_test(cfg, out)?;
    let summary = if out.cv().exists() { Some(CvSummary::load(out.cv())?) } else { None };
    std::fs::create_dir_all(out.models())?;
    let mut models = Vec::new();
    for &family in &cfg.model.families {
        for &mode in &cfg.model.modes {
            let m = ForecastModel::train(family, mode, &train, cfg, seed, summary.as_ref())?;
            m.save(out.models().join(format!("{}.json", m.name())))?;
            log::info!("fitted {}", m.name());
            models.push(m);
        }
    }
    Ok(models)
}

/// Models of the configured families and modes, in configuration order.
pub fn load_models(cfg: &PipelineConfig, out: &Layout) -> Result<Vec<ForecastModel>> {
    let mut models = Vec::new();
    for &family in &cfg.model.families {
        for &mode in &cfg.model.modes {
            let path = out.models().join(format!("{family}_{mode}.json"));
            require(&path)?;
            models.push(ForecastModel::load(path)?);
        }
    }
    Ok(models)
}

/// One forecast per test sample with its targets and current CSI.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub timestamps: Vec<f64>,
    pub labels: Vec<SkyCondition>,
    pub current: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Predictions {
    pub fn from_dataset(data: &Dataset, predicted: Vec<Vec<f64>>) -> Self {
        Self {
            timestamps: data.samples.iter().map(|s| s.timestamp).collect(),
            labels: data.samples.iter().map(|s| s.condition).collect(),
            current: data.samples.iter().map(|s| s.current_csi()).collect(),
            predicted,
            targets: data.samples.iter().map(|s| s.targets.clone()).collect(),
        }
    }

    pub fn persistence(data: &Dataset) -> Self {
        let p = data.samples.iter().map(|s| persistence_forecast(s.current_csi(), data.horizons)).collect();
        Self::from_dataset(data, p)
    }

    pub fn evaluate(&self) -> Result<MetricsReport> {
        let c = self.targets.first().map_or(0, Vec::len);
        let pers: Vec<Vec<f64>> = self.current.iter().map(|&v| persistence_forecast(v, c)).collect();
        evaluate(&self.predicted, &self.targets, &pers, &self.labels)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let c = self.targets.first().map_or(0, Vec::len);
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["timestamp".to_string(), "condition".into(), "current_csi".into()];
        header.extend((1..=c).map(|h| format!("pred_h{h}")));
        header.extend((1..=c).map(|h| format!("csi_h{h}")));
        w.write_record(&header)?;
        for i in 0..self.timestamps.len() {
            let mut row = vec![self.timestamps[i].to_string(), self.labels[i].to_string(), self.current[i].to_string()];
            row.extend(self.predicted[i].iter().chain(&self.targets[i]).map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        require(path)?;
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let c = header.iter().filter(|h| h.starts_with("pred_h")).count();
        if header.len() != 3 + 2 * c || c == 0 || header[..3] != ["timestamp", "condition", "current_csi"] {
            return Err(Error::Format("expected timestamp, condition, current_csi, pred_h*, csi_h*".into()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad number {s:?}: {e}")));
        let mut p = Self {
            timestamps: Vec::new(),
            labels: Vec::new(),
            current: Vec::new(),
            predicted: Vec::new(),
            targets: Vec::new(),
        };
        for rec in r.records() {
            let rec = rec?;
            p.timestamps.push(num(&rec[0])?);
            p.labels.push(rec[1].parse()?);
            p.current.push(num(&rec[2])?);
            p.predicted.push((3..3 + c).map(|j| num(&rec[j])).collect::<Result<_>>()?);
            p.targets.push((3 + c..3 + 2 * c).map(|j| num(&rec[j])).collect::<Result<_>>()?);
        }
        Ok(p)
    }
}

/// Writes `predictions/<model>.csv` and `predictions/persistence.csv`.
pub fn predict(cfg: &PipelineConfig, out: &Layout) -> Result<Vec<(String, Predictions)>> {
    let models = load_models(cfg, out)?;
    let (_, test) = train_test(cfg, out)?;
    std::fs::create_dir_all(out.predictions())?;
    let mut all = Vec::new();
    for m in &models {
        let p = Predictions::from_dataset(&test, m.predict_dataset(&test)?);
        p.write_csv(out.predictions().join(format!("{}.csv", m.name())))?;
        all.push((m.name(), p));
    }
    Predictions::persistence(&test).write_csv(out.predictions().join("persistence.csv"))?;
    Ok(all)
}

fn horizon_minutes(cfg: &PipelineConfig) -> Vec<f64> {
    cfg.horizon_seconds().iter().map(|s| s / 60.0).collect()
}

/// Scores every fitted model on the held-out days and writes `metrics.json`.
pub fn evaluate_models(cfg: &PipelineConfig, out: &Layout) -> Result<Evaluation> {
    let models = load_models(cfg, out)?;
    let (_, test) = train_test(cfg, out)?;
    let mut eval = Evaluation { horizon_minutes: horizon_minutes(cfg), models: Vec::new() };
    for m in &models {
        let p = Predictions::from_dataset(&test, m.predict_dataset(&test)?);
        eval.models.push((m.name(), p.evaluate()?));
    }
    eval.save(out.metrics())?;
    Ok(eval)
}

/// Scores a predictions file against its own targets.
pub fn evaluate_file(cfg: &PipelineConfig, path: &Path, out: &Layout) -> Result<Evaluation> {
    let p = Predictions::read_csv(path)?;
    let name = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    let mut minutes = horizon_minutes(cfg);
    let c = p.targets.first().map_or(0, Vec::len);
    if minutes.len() != c {
        minutes = (1..=c).map(|h| h as f64).collect();
    }
    let eval = Evaluation { horizon_minutes: minutes, models: vec![(name, p.evaluate()?)] };
    std::fs::create_dir_all(&out.root)?;
    eval.save(out.metrics())?;
    Ok(eval)
}

pub fn report(out: &Layout) -> Result<()> {
    require(&out.metrics())?;
    write_report(&Evaluation::load(out.metrics())?, out.report())
}
