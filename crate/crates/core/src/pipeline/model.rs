use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, PipelineConfig, SelectionConfig};
use super::cv::{kfold_grid_search, CvReport};
use super::dataset::{Dataset, Sample};
use super::lof::select_inliers;
use super::metrics::mape;
use super::standardize::{StandardizationParams, Standardizer};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::multitask::{
    fit_multitask, predict_multitask, BaseParams, Coupling, ExpertBank, Family, FamilyParams, Mode,
    MultiTaskModel, MultiTaskStrategy, SkyCondition,
};
use crate::sparse::RvmOptions;

/// Training days first, the last `test_days` distinct days held out.
pub fn split_by_day(data: &Dataset, test_days: usize) -> Result<(Dataset, Dataset)> {
    let mut days: Vec<usize> = data.samples.iter().map(|s| s.day).collect();
    days.sort_unstable();
    days.dedup();
    if test_days == 0 || test_days >= days.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot hold out {test_days} of {} days",
            days.len()
        )));
    }
    let first_test = days[days.len() - test_days];
    let (train, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.samples[i].day < first_test);
    Ok((data.subset(&train), data.subset(&test)))
}

/// Keeps the `cap` most inlying samples by LOF on standardized `columns`.
pub fn lof_cap(data: &Dataset, columns: &[usize], k: usize, cap: usize) -> Result<Dataset> {
    if data.len() <= cap {
        return Ok(data.clone());
    }
    let (x, _) = data.design(columns);
    let z = Standardizer::fit(&x, false).apply(&x);
    Ok(data.subset(&select_inliers(&z, k, cap)?))
}

fn condition_subset(data: &Dataset, c: SkyCondition) -> Dataset {
    let idx: Vec<usize> = (0..data.len()).filter(|&i| data.samples[i].condition == c).collect();
    data.subset(&idx)
}

/// Per-condition LOF selection of the training set, capped at `cap_single`.
pub fn select_training(train: &Dataset, sources: &[usize], cfg: &SelectionConfig) -> Result<Dataset> {
    let columns = train.columns_for(sources)?;
    let mut keep = Vec::new();
    for c in SkyCondition::ALL {
        keep.extend(lof_cap(&condition_subset(train, c), &columns, cfg.lof_k, cfg.cap_single)?.samples);
    }
    keep.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(Dataset { feature_names: train.feature_names.clone(), horizons: train.horizons, samples: keep })
}

/// Evidence iterations per RVM fit; pruning tails past this change little.
pub const RVM_ITERATIONS: usize = 500;

/// The four hyperparameter candidates of one family, scaled by `γ0 = 1/dim`.
pub fn candidate_grid(family: Family, mode: Mode, dim: usize, cfg: &ModelConfig) -> Vec<BaseParams> {
    let g0 = 1.0 / dim.max(1) as f64;
    let coupling = if mode == Mode::Joint { Coupling::LengthScale(cfg.length_scale) } else { Coupling::Identity };
    let make = |gamma: f64, family: FamilyParams| BaseParams {
        kernel: KernelSpec::Rbf { gamma },
        family,
        coupling,
        jitter: cfg.jitter,
    };
    match family {
        Family::Krr => [(g0 / 4.0, 1e-2), (g0 / 4.0, 1e-1), (g0, 1e-2), (g0, 1e-1)]
            .map(|(g, ridge)| make(g, FamilyParams::Krr { ridge }))
            .to_vec(),
        Family::Gpr => [(g0 / 4.0, 1e-3), (g0 / 4.0, 1e-2), (g0, 1e-3), (g0, 1e-2)]
            .map(|(g, noise)| make(g, FamilyParams::Gpr { noise }))
            .to_vec(),
        Family::Svr => [(1.0, 0.05), (1.0, 0.2), (10.0, 0.05), (10.0, 0.2)]
            .map(|(c, epsilon)| make(g0 / 2.0, FamilyParams::Svr { c, epsilon }))
            .to_vec(),
        Family::Rvm => [g0 / 8.0, g0 / 4.0, g0 / 2.0, g0]
            .map(|g| make(g, FamilyParams::Rvm { options: RvmOptions { max_iterations: RVM_ITERATIONS, ..RvmOptions::default() } }))
            .to_vec(),
    }
}

/// A multi-task model with the scalers fitted on its own training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledModel {
    pub params: BaseParams,
    pub scaling: StandardizationParams,
    pub model: MultiTaskModel,
}

impl ScaledModel {
    pub fn fit(params: &BaseParams, mode: Mode, data: &Dataset, columns: &[usize]) -> Result<Self> {
        let (x, y) = data.design(columns);
        let scaling = StandardizationParams::fit(&x, &y, &params.kernel, params.family.family());
        let strategy = MultiTaskStrategy { mode, family: params.family.family(), horizons: y.ncols() };
        let per_horizon = vec![*params; y.ncols()];
        let model = fit_multitask(&strategy, &per_horizon, &scaling.features.apply(&x), &scaling.targets.apply(&y))?;
        Ok(Self { params: *params, scaling, model })
    }

    /// `row` holds the already selected feature columns.
    pub fn predict(&self, row: &[f64]) -> Result<Vec<f64>> {
        predict_with(&self.model, &self.scaling, row)
    }
}

fn predict_with(model: &MultiTaskModel, scaling: &StandardizationParams, row: &[f64]) -> Result<Vec<f64>> {
    let z = scaling.features.apply_row(row);
    Ok(scaling.targets.invert_row(&predict_multitask(model, &z)?.mean))
}

fn select_row(sample: &Sample, columns: &[usize]) -> Vec<f64> {
    columns.iter().map(|&j| sample.features[j]).collect()
}

/// Mean validation MAPE over horizons.
fn validation_mape(model: &ScaledModel, val: &Dataset, columns: &[usize]) -> Result<f64> {
    let mut pred = vec![Vec::with_capacity(val.len()); val.horizons];
    let mut tgt = vec![Vec::with_capacity(val.len()); val.horizons];
    for s in &val.samples {
        for (c, p) in model.predict(&select_row(s, columns))?.into_iter().enumerate() {
            pred[c].push(p);
            tgt[c].push(s.targets[c]);
        }
    }
    let mut total = 0.0;
    for (p, y) in pred.iter().zip(&tgt) {
        total += mape(p, y)?.0;
    }
    Ok(total / val.horizons as f64)
}

/// Grid search for one expert's training set.
pub fn cross_validate(
    family: Family,
    mode: Mode,
    data: &Dataset,
    columns: &[usize],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<CvReport<BaseParams>> {
    let grid = candidate_grid(family, mode, columns.len(), cfg);
    kfold_grid_search(&grid, data.len(), cfg.folds, seed, |p, train, val| {
        let model = ScaledModel::fit(p, mode, &data.subset(train), columns)?;
        validation_mape(&model, &data.subset(val), columns)
    })
}

/// Which training set an expert was fitted on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpertSource {
    Own(SkyCondition),
    Pooled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub family: Family,
    pub mode: Mode,
    pub expert: ExpertSource,
    pub report: CvReport<BaseParams>,
}

/// Every grid search of a run, in deterministic order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub seed: u64,
    pub entries: Vec<CvEntry>,
}

impl CvSummary {
    pub fn find(&self, family: Family, mode: Mode, expert: ExpertSource) -> Option<&CvEntry> {
        self.entries.iter().find(|e| e.family == family && e.mode == mode && e.expert == expert)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Training sets per expert: conditions with too few samples share the
/// pooled set. Joint models are further capped at `cap_joint`.
fn expert_sets(
    train: &Dataset,
    mode: Mode,
    columns: &[usize],
    cfg: &SelectionConfig,
) -> Result<BTreeMap<ExpertSource, Dataset>> {
    let cap = if mode == Mode::Joint { cfg.cap_joint } else { cfg.cap_single };
    let mut sets = BTreeMap::new();
    let mut need_pooled = false;
    for c in SkyCondition::ALL {
        let own = condition_subset(train, c);
        if own.len() >= cfg.min_expert_samples.max(2 * cfg.lof_k) {
            sets.insert(ExpertSource::Own(c), lof_cap(&own, columns, cfg.lof_k, cap)?);
        } else {
            need_pooled = true;
        }
    }
    if need_pooled {
        sets.insert(ExpertSource::Pooled, lof_cap(train, columns, cfg.lof_k, cap)?);
    }
    Ok(sets)
}

fn seed_for(seed: u64, family: Family, mode: Mode, expert: ExpertSource) -> u64 {
    let tag = format!("{family}/{mode}/{expert:?}");
    tag.bytes().fold(seed ^ 0xCBF2_9CE4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3))
}

/// Grid searches for every configured family, mode and expert.
pub fn run_cross_validation(train: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<CvSummary> {
    let columns = train.columns_for(&cfg.model.sources)?;
    let mut jobs = Vec::new();
    for &family in &cfg.model.families {
        for &mode in &cfg.model.modes {
            for (expert, data) in expert_sets(train, mode, &columns, &cfg.selection)? {
                jobs.push((family, mode, expert, data));
            }
        }
    }
    let entries = jobs
        .into_par_iter()
        .map(|(family, mode, expert, data)| {
            let s = seed_for(seed, family, mode, expert);
            let report = cross_validate(family, mode, &data, &columns, &cfg.model, s)?;
            Ok(CvEntry { family, mode, expert, report })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvSummary { seed, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertInfo {
    pub source: ExpertSource,
    pub params: BaseParams,
    pub scaling: StandardizationParams,
    pub train_size: usize,
}

/// Per-condition experts of one family and mode, ready to forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub family: Family,
    pub mode: Mode,
    pub horizons: usize,
    pub sources: Vec<usize>,
    /// Selected feature names, in model input order.
    pub columns: Vec<String>,
    pub experts: BTreeMap<SkyCondition, ExpertInfo>,
    pub bank: ExpertBank,
}

impl ForecastModel {
    /// Fits every expert, reusing `cv` selections when present and running
    /// the grid search otherwise. Experts whose fit fails use the pooled set.
    pub fn train(
        family: Family,
        mode: Mode,
        train: &Dataset,
        cfg: &PipelineConfig,
        seed: u64,
        cv: Option<&CvSummary>,
    ) -> Result<Self> {
        let columns = train.columns_for(&cfg.model.sources)?;
        let mut sets = expert_sets(train, mode, &columns, &cfg.selection)?;
        let fit_one = |expert: ExpertSource, data: &Dataset| -> Result<ScaledModel> {
            let params = match cv.and_then(|s| s.find(family, mode, expert)) {
                Some(e) => *e.report.best(),
                None => {
                    let s = seed_for(seed, family, mode, expert);
                    *cross_validate(family, mode, data, &columns, &cfg.model, s)?.best()
                }
            };
            ScaledModel::fit(&params, mode, data, &columns)
        };
        let fitted: Vec<(ExpertSource, Result<ScaledModel>)> =
            sets.par_iter().map(|(&e, d)| (e, fit_one(e, d))).collect();
        let mut models = BTreeMap::new();
        let mut failed = false;
        for (e, r) in fitted {
            match r {
                Ok(m) => {
                    models.insert(e, m);
                }
                Err(err) => {
                    log::warn!("{family}/{mode} expert {e:?} failed ({err}); using the pooled model");
                    failed = true;
                }
            }
        }
        if failed && !models.contains_key(&ExpertSource::Pooled) {
            let cap = if mode == Mode::Joint { cfg.selection.cap_joint } else { cfg.selection.cap_single };
            let pooled = lof_cap(train, &columns, cfg.selection.lof_k, cap)?;
            models.insert(ExpertSource::Pooled, fit_one(ExpertSource::Pooled, &pooled)?);
            sets.insert(ExpertSource::Pooled, pooled);
        }
        let mut experts = BTreeMap::new();
        let mut bank = BTreeMap::new();
        for c in SkyCondition::ALL {
            let source = if models.contains_key(&ExpertSource::Own(c)) { ExpertSource::Own(c) } else { ExpertSource::Pooled };
            let m = models.get(&source).ok_or_else(|| Error::Degenerate(format!("no model for {c}")))?;
            experts.insert(
                c,
                ExpertInfo { source, params: m.params, scaling: m.scaling.clone(), train_size: sets[&source].len() },
            );
            bank.insert(c, m.model.clone());
        }
        Ok(Self {
            family,
            mode,
            horizons: train.horizons,
            sources: cfg.model.sources.clone(),
            columns: columns.iter().map(|&j| train.feature_names[j].clone()).collect(),
            experts,
            bank: ExpertBank::new(bank)?,
        })
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.family, self.mode)
    }

    pub fn predict(&self, feature_names: &[String], sample: &Sample) -> Result<Vec<f64>> {
        let row = self
            .columns
            .iter()
            .map(|name| {
                feature_names
                    .iter()
                    .position(|n| n == name)
                    .map(|j| sample.features[j])
                    .ok_or_else(|| Error::InvalidArgument(format!("sample has no column `{name}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        predict_with(self.bank.expert(sample.condition), &self.experts[&sample.condition].scaling, &row)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        data.samples.par_iter().map(|s| self.predict(&data.feature_names, s)).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// `X` of a dataset restricted to the model's input columns.
pub fn model_inputs(model: &ForecastModel, data: &Dataset) -> Result<DMatrix<f64>> {
    let idx: Vec<usize> = model
        .columns
        .iter()
        .map(|name| {
            data.feature_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::InvalidArgument(format!("dataset has no column `{name}`")))
        })
        .collect::<Result<_>>()?;
    Ok(data.design(&idx).0)
}
