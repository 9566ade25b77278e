//! Multi-horizon strategies over any regressor family: one model per
//! horizon, regression chains, and Kronecker joint models, plus routing to
//! per-sky-condition experts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{fit_mt_gpr, mt_krr, DualWeights, GprModel};
use crate::error::{Error, Result};
use crate::kernels::{CorrelationMatrix, KernelSpec};
use crate::sparse::{mt_rvm, mt_svr, RvmModel, RvmOptions, SvrModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Krr,
    Gpr,
    Svr,
    Rvm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Krr, Family::Gpr, Family::Svr, Family::Rvm];

    pub fn is_bayesian(self) -> bool {
        matches!(self, Family::Gpr | Family::Rvm)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Krr => "krr",
            Family::Gpr => "gpr",
            Family::Svr => "svr",
            Family::Rvm => "rvm",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "krr" => Ok(Family::Krr),
            "gpr" => Ok(Family::Gpr),
            "svr" => Ok(Family::Svr),
            "rvm" => Ok(Family::Rvm),
            other => Err(Error::InvalidArgument(format!("unknown model family `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Independent,
    Chain,
    Joint,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Independent => "independent",
            Mode::Chain => "chain",
            Mode::Joint => "joint",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independent" => Ok(Mode::Independent),
            "chain" => Ok(Mode::Chain),
            "joint" => Ok(Mode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown multi-task mode `{other}`"))),
        }
    }
}

/// Family-specific regularization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    /// `ridge` is the unscaled γ; fits use γ/N (γ/(CN) jointly).
    Krr { ridge: f64 },
    /// Noise variance, shared by every horizon of a joint model.
    Gpr { noise: f64 },
    Svr { c: f64, epsilon: f64 },
    Rvm { options: RvmOptions },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Krr { .. } => Family::Krr,
            FamilyParams::Gpr { .. } => Family::Gpr,
            FamilyParams::Svr { .. } => Family::Svr,
            FamilyParams::Rvm { .. } => Family::Rvm,
        }
    }
}

/// Correlation structure of a joint model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Identity,
    LengthScale(f64),
}

impl Coupling {
    pub fn matrix(&self, horizons: usize) -> Result<CorrelationMatrix> {
        match *self {
            Coupling::Identity => CorrelationMatrix::identity(horizons),
            Coupling::LengthScale(l) => CorrelationMatrix::from_length_scale(horizons, l),
        }
    }
}

/// One hyperparameter set for a base regressor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub kernel: KernelSpec,
    pub family: FamilyParams,
    /// Used by joint models only.
    pub coupling: Coupling,
    pub jitter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskStrategy {
    pub mode: Mode,
    pub family: Family,
    pub horizons: usize,
}

/// A fitted base regressor over one or more horizons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedBase {
    Krr(DualWeights),
    Gpr(GprModel),
    Svr(SvrModel),
    Rvm(RvmModel),
}

impl FittedBase {
    pub fn family(&self) -> Family {
        match self {
            FittedBase::Krr(_) => Family::Krr,
            FittedBase::Gpr(_) => Family::Gpr,
            FittedBase::Svr(_) => Family::Svr,
            FittedBase::Rvm(_) => Family::Rvm,
        }
    }

    /// Means and, for Bayesian families, predictive variances.
    pub fn predict(&self, x: &[f64]) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        match self {
            FittedBase::Krr(m) => Ok((m.predict(x)?, None)),
            FittedBase::Svr(m) => Ok((m.predict(x)?, None)),
            FittedBase::Gpr(m) => {
                let p = m.predict(x)?;
                let v = p.covariance.diagonal();
                Ok((p.mean, Some(v)))
            }
            FittedBase::Rvm(m) => {
                let p = m.predict(x)?;
                let v = p.covariance.diagonal();
                Ok((p.mean, Some(v)))
            }
        }
    }
}

/// Fits one base regressor on an `N × C` target matrix with correlation `Γ`
/// (identity for a single column).
pub fn fit_base(
    params: &BaseParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    correlation: &CorrelationMatrix,
) -> Result<FittedBase> {
    let kernel = params.kernel;
    Ok(match params.family {
        FamilyParams::Krr { ridge } => {
            FittedBase::Krr(mt_krr(kernel, x, y, correlation, ridge, params.jitter)?)
        }
        FamilyParams::Gpr { noise } => {
            let noises = vec![noise; y.ncols()];
            FittedBase::Gpr(fit_mt_gpr(kernel, x, y, correlation, &noises, params.jitter)?)
        }
        FamilyParams::Svr { c, epsilon } => {
            FittedBase::Svr(mt_svr(kernel, x, y, correlation, c, epsilon, params.jitter)?)
        }
        FamilyParams::Rvm { options } => {
            FittedBase::Rvm(mt_rvm(kernel, x, y, correlation, &options, params.jitter)?)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MultiTaskModel {
    Independent { models: Vec<FittedBase> },
    /// Step `c` sees the inputs followed by horizons `1..c` (ascending).
    Chain { models: Vec<FittedBase> },
    Joint { model: FittedBase, horizons: usize },
}

/// Predicted horizons in ascending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskPrediction {
    pub mean: Vec<f64>,
    pub variance: Option<Vec<f64>>,
}

impl MultiTaskModel {
    pub fn horizons(&self) -> usize {
        match self {
            MultiTaskModel::Independent { models } | MultiTaskModel::Chain { models } => models.len(),
            MultiTaskModel::Joint { horizons, .. } => *horizons,
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            MultiTaskModel::Independent { .. } => Mode::Independent,
            MultiTaskModel::Chain { .. } => Mode::Chain,
            MultiTaskModel::Joint { .. } => Mode::Joint,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            MultiTaskModel::Independent { models } | MultiTaskModel::Chain { models } => {
                models[0].family()
            }
            MultiTaskModel::Joint { model, .. } => model.family(),
        }
    }
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>, params: usize) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.nrows() });
    }
    if y.ncols() == 0 {
        return Err(Error::Empty("horizons"));
    }
    if params != y.ncols() {
        return Err(Error::DimensionMismatch { expected: y.ncols(), got: params });
    }
    Ok(())
}

fn column(y: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(y.nrows(), 1, y.column(c).as_slice())
}

/// One model per horizon column, fitted in parallel.
pub fn fit_independent(
    params: &[BaseParams],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<MultiTaskModel> {
    check_shapes(x, y, params.len())?;
    let single = CorrelationMatrix::identity(1)?;
    let models = (0..y.ncols())
        .into_par_iter()
        .map(|c| fit_base(&params[c], x, &column(y, c), &single))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiTaskModel::Independent { models })
}

/// Regression chain trained with the true earlier-horizon targets appended
/// to the inputs.
pub fn fit_chain(params: &[BaseParams], x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<MultiTaskModel> {
    check_shapes(x, y, params.len())?;
    let single = CorrelationMatrix::identity(1)?;
    let mut inputs = x.clone();
    let mut models = Vec::with_capacity(y.ncols());
    for c in 0..y.ncols() {
        models.push(fit_base(&params[c], &inputs, &column(y, c), &single)?);
        let d = inputs.ncols();
        inputs = inputs.insert_column(d, 0.0);
        inputs.set_column(d, &y.column(c));
    }
    Ok(MultiTaskModel::Chain { models })
}

/// Kronecker joint model sharing one hyperparameter set across horizons.
pub fn fit_joint(params: &BaseParams, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<MultiTaskModel> {
    check_shapes(x, y, y.ncols())?;
    let gamma = params.coupling.matrix(y.ncols())?;
    Ok(MultiTaskModel::Joint { model: fit_base(params, x, y, &gamma)?, horizons: y.ncols() })
}

/// Dispatches on the strategy. Joint mode uses `params[0]`.
pub fn fit_multitask(
    strategy: &MultiTaskStrategy,
    params: &[BaseParams],
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<MultiTaskModel> {
    if y.ncols() != strategy.horizons {
        return Err(Error::DimensionMismatch { expected: strategy.horizons, got: y.ncols() });
    }
    if let Some(p) = params.iter().find(|p| p.family.family() != strategy.family) {
        return Err(Error::InvalidArgument(format!(
            "strategy family {} does not match parameters for {}",
            strategy.family,
            p.family.family()
        )));
    }
    match strategy.mode {
        Mode::Independent => fit_independent(params, x, y),
        Mode::Chain => fit_chain(params, x, y),
        Mode::Joint => {
            let p = params.first().ok_or(Error::Empty("parameters"))?;
            fit_joint(p, x, y)
        }
    }
}

pub fn predict_multitask(model: &MultiTaskModel, x: &[f64]) -> Result<MultiTaskPrediction> {
    match model {
        MultiTaskModel::Joint { model, .. } => {
            let (m, v) = model.predict(x)?;
            Ok(MultiTaskPrediction {
                mean: m.iter().copied().collect(),
                variance: v.map(|v| v.iter().copied().collect()),
            })
        }
        MultiTaskModel::Independent { models } => {
            let mut mean = Vec::with_capacity(models.len());
            let mut var = Vec::with_capacity(models.len());
            for m in models {
                let (mu, v) = m.predict(x)?;
                mean.push(mu[0]);
                if let Some(v) = v {
                    var.push(v[0]);
                }
            }
            let variance = (var.len() == mean.len()).then_some(var);
            Ok(MultiTaskPrediction { mean, variance })
        }
        MultiTaskModel::Chain { models } => {
            let mut input = x.to_vec();
            let mut mean = Vec::with_capacity(models.len());
            let mut var = Vec::with_capacity(models.len());
            for m in models {
                let (mu, v) = m.predict(&input)?;
                mean.push(mu[0]);
                input.push(mu[0]);
                if let Some(v) = v {
                    var.push(v[0]);
                }
            }
            let variance = (var.len() == mean.len()).then_some(var);
            Ok(MultiTaskPrediction { mean, variance })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkyCondition {
    Clear,
    Cumulus,
    Stratus,
    Nimbus,
}

impl SkyCondition {
    pub const ALL: [SkyCondition; 4] =
        [SkyCondition::Clear, SkyCondition::Cumulus, SkyCondition::Stratus, SkyCondition::Nimbus];

    pub fn as_str(self) -> &'static str {
        match self {
            SkyCondition::Clear => "clear",
            SkyCondition::Cumulus => "cumulus",
            SkyCondition::Stratus => "stratus",
            SkyCondition::Nimbus => "nimbus",
        }
    }
}

impl fmt::Display for SkyCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkyCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SkyCondition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

/// One fitted multi-task model per sky condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertBank {
    experts: BTreeMap<SkyCondition, MultiTaskModel>,
}

impl ExpertBank {
    /// Requires all four conditions and a common horizon count.
    pub fn new(experts: BTreeMap<SkyCondition, MultiTaskModel>) -> Result<Self> {
        for c in SkyCondition::ALL {
            if !experts.contains_key(&c) {
                return Err(Error::InvalidArgument(format!("expert bank is missing `{c}`")));
            }
        }
        let mut horizons = experts.values().map(MultiTaskModel::horizons);
        let first = horizons.next().unwrap_or(0);
        if let Some(h) = horizons.find(|&h| h != first) {
            return Err(Error::DimensionMismatch { expected: first, got: h });
        }
        Ok(Self { experts })
    }

    pub fn expert(&self, condition: SkyCondition) -> &MultiTaskModel {
        &self.experts[&condition]
    }

    pub fn horizons(&self) -> usize {
        self.experts.values().next().map_or(0, MultiTaskModel::horizons)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SkyCondition, &MultiTaskModel)> {
        self.experts.iter()
    }
}

/// Routes `x` to the expert for `label`.
pub fn dispatch_expert(bank: &ExpertBank, label: &str, x: &[f64]) -> Result<MultiTaskPrediction> {
    let condition: SkyCondition = label.parse()?;
    predict_multitask(bank.expert(condition), x)
}
