//! Training and scoring shared by the train, predict, evaluate and sweep
//! commands.

use std::path::Path;

use cmmd_core::baselines::{self, BaselineModel, BaselineSpec, LrReport};
use cmmd_core::bundle::Bundle;
use cmmd_core::cmmd::{CmmdModel, LossBreakdown};
use cmmd_core::evalx::{self, MetricReport, ScoreVector};
use cmmd_core::numcore::{SeedStream, Tensor2};
use cmmd_core::panel::{apply_scaler, downsample, fit_scaler, Dataset, Quarter, ScalerState};
use serde::{Deserialize, Serialize};

use crate::config::{Features, ModelSpec, SplitConfig};
use crate::error::{CliError, CliResult};

/// Preprocessing state stored in the bundle next to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub horizon: u8,
    pub features: Features,
    pub scaler: ScalerState,
    pub xm_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Cmmd(CmmdModel),
    Baseline(BaselineModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: TrainedModel,
    pub meta: ModelMeta,
}

/// What a fit produced besides the model.
#[derive(Debug, Clone, Default)]
pub struct FitLog {
    pub history: Vec<LossBreakdown>,
    pub lr: Option<LrReport>,
    pub train_rows: usize,
    pub train_positives: usize,
    /// Labelled training rows left out because they have no text.
    pub skipped_no_xm: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub kind: String,
    pub seed: u64,
    pub horizon: u8,
    pub train_rows: usize,
    pub train_positives: usize,
    pub skipped_no_xm: usize,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_total: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_converged: Option<bool>,
}

/// Scores for the rows a model could handle.
#[derive(Debug, Clone, Default)]
pub struct Scored {
    pub rows: Vec<usize>,
    pub scores: Vec<f64>,
    /// Rows left out because the model needs text they do not have.
    pub skipped: Vec<usize>,
}

fn baseline_spec(spec: &ModelSpec) -> Option<BaselineSpec> {
    Some(match spec {
        ModelSpec::Cmmd(_) => return None,
        ModelSpec::Lr(p) => BaselineSpec::Lr(p.clone()),
        ModelSpec::Nb(p) => BaselineSpec::Nb(p.clone()),
        ModelSpec::Knn(p) => BaselineSpec::Knn(p.clone()),
        ModelSpec::Mlp(p) => BaselineSpec::Mlp(p.clone()),
    })
}

/// Indices of rows in the test window.
pub fn test_rows(ds: &Dataset, split: &SplitConfig) -> Vec<usize> {
    window(ds, split.test_start, split.test_end)
}

/// Indices of rows at or before `train_end`.
pub fn train_rows(ds: &Dataset, split: &SplitConfig) -> Vec<usize> {
    (0..ds.rows.len()).filter(|&i| ds.rows[i].quarter <= split.train_end).collect()
}

pub fn window(ds: &Dataset, start: Quarter, end: Option<Quarter>) -> Vec<usize> {
    (0..ds.rows.len())
        .filter(|&i| {
            let q = ds.rows[i].quarter;
            q >= start && end.is_none_or(|e| q <= e)
        })
        .collect()
}

fn features(ds: &Dataset, idx: &[usize], scaler: &ScalerState, f: Features) -> CliResult<Tensor2> {
    let xo = apply_scaler(&ds.xo(idx), scaler)?;
    Ok(match f {
        Features::Xo => xo,
        Features::XoXm => {
            let xm = ds.xm(idx);
            let cols = xo.cols() + xm.cols();
            let mut data = Vec::with_capacity(idx.len() * cols);
            for r in 0..idx.len() {
                data.extend_from_slice(xo.row(r));
                data.extend_from_slice(xm.row(r));
            }
            Tensor2::from_vec(idx.len(), cols, data)?
        }
    })
}

/// Fits `spec` on the labelled rows of `candidates`.
///
/// Rows without text are skipped when the model reads text during training
/// (CMMD always, baselines with `xo_xm`). With `balance` the majority class
/// is down-sampled after the scaler is fitted on every usable row.
pub fn train_model(
    ds: &Dataset,
    candidates: &[usize],
    spec: &ModelSpec,
    feats: Features,
    horizon: u8,
    balance: bool,
    seed: u64,
) -> CliResult<(Trained, FitLog)> {
    let (labelled, _) = ds.labelled(candidates, horizon)?;
    let needs_xm = matches!(spec, ModelSpec::Cmmd(_)) || feats == Features::XoXm;
    let usable: Vec<usize> = labelled.iter().copied().filter(|&i| !needs_xm || ds.has_xm(i)).collect();
    let mut log = FitLog {
        skipped_no_xm: labelled.len() - usable.len(),
        ..Default::default()
    };
    let (usable, y) = ds.labelled(&usable, horizon)?;
    if !y.contains(&0) || !y.contains(&1) {
        return Err(CliError::validation(format!(
            "training data has {} rows but a single class",
            y.len()
        )));
    }
    let scaler = fit_scaler(&ds.xo(&usable))?;
    let (rows, y): (Vec<usize>, Vec<u8>) = if balance {
        downsample(&y, seed)?.into_iter().map(|k| (usable[k], y[k])).unzip()
    } else {
        (usable, y)
    };
    log.train_rows = rows.len();
    log.train_positives = y.iter().filter(|v| **v == 1).count();

    let meta = ModelMeta {
        horizon,
        features: feats,
        scaler,
        xm_dim: ds.xm_dim(),
    };
    let model = match spec {
        ModelSpec::Cmmd(cfg) => {
            let mut cfg = cfg.clone();
            cfg.xo_dim = cmmd_core::panel::N_PREDICTORS;
            cfg.xm_dim = ds.xm_dim();
            cfg.seed = seed;
            let xo = apply_scaler(&ds.xo(&rows), &meta.scaler)?;
            let labels = Tensor2::column(&y.iter().map(|&v| v as f64).collect::<Vec<_>>());
            let batch = cmmd_core::panel::Batch::new(xo, ds.xm(&rows), labels, ds.ids(&rows))?;
            let mut m = CmmdModel::new(cfg)?;
            log.history = m.train(&batch)?;
            TrainedModel::Cmmd(m)
        }
        other => {
            let b = baseline_spec(other).expect("baseline");
            b.validate()?;
            let x = features(ds, &rows, &meta.scaler, feats)?;
            match &b {
                BaselineSpec::Lr(p) => {
                    let (m, report) = baselines::fit_logistic(p, &x, &y)?;
                    log.lr = Some(report);
                    TrainedModel::Baseline(m)
                }
                _ => TrainedModel::Baseline(baselines::fit(&b, &x, &y, seed)?),
            }
        }
    };
    Ok((Trained { model, meta }, log))
}

impl Trained {
    pub fn kind(&self) -> &'static str {
        match &self.model {
            TrainedModel::Cmmd(_) => "cmmd",
            TrainedModel::Baseline(b) => b.kind(),
        }
    }

    /// Whether scoring a row requires its text.
    pub fn needs_xm(&self) -> bool {
        matches!(self.model, TrainedModel::Baseline(_)) && self.meta.features == Features::XoXm
    }

    pub fn to_bundle(&self) -> CliResult<Bundle> {
        let mut b = match &self.model {
            TrainedModel::Cmmd(m) => m.to_bundle()?,
            TrainedModel::Baseline(m) => m.to_bundle()?,
        };
        b.extra = serde_json::to_value(&self.meta)?;
        Ok(b)
    }

    pub fn from_bundle(b: &Bundle) -> CliResult<Self> {
        let meta: ModelMeta = serde_json::from_value(b.extra.clone())
            .map_err(|e| CliError::Data(format!("model bundle preprocessing metadata: {e}")))?;
        let model = if b.kind == CmmdModel::BUNDLE_KIND {
            TrainedModel::Cmmd(CmmdModel::from_bundle(b)?)
        } else {
            TrainedModel::Baseline(BaselineModel::from_bundle(b)?)
        };
        Ok(Self { model, meta })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        Ok(self.to_bundle()?.save(path)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::from_bundle(&Bundle::load(path)?)
    }

    fn check_dataset(&self, ds: &Dataset) -> CliResult<()> {
        if self.meta.xm_dim != ds.xm_dim() {
            return Err(CliError::validation(format!(
                "model was trained with {} text terms, dataset has {}",
                self.meta.xm_dim,
                ds.xm_dim()
            )));
        }
        Ok(())
    }

    /// Scores `idx`. CMMD reads only `xo`; `n_samples` overrides its draw
    /// count and `seed` drives the draws.
    pub fn score(&self, ds: &Dataset, idx: &[usize], n_samples: Option<usize>, seed: u64) -> CliResult<Scored> {
        self.check_dataset(ds)?;
        let (rows, skipped): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| !self.needs_xm() || ds.has_xm(i));
        let scores = if rows.is_empty() {
            Vec::new()
        } else {
            match &self.model {
                TrainedModel::Cmmd(m) => {
                    let xo = apply_scaler(&ds.xo(&rows), &self.meta.scaler)?;
                    let n = n_samples.unwrap_or(m.config().n_samples);
                    m.predict(&xo, n, &mut SeedStream::new(seed).rng("predict"))?
                }
                TrainedModel::Baseline(b) => b.predict(&features(ds, &rows, &self.meta.scaler, self.meta.features)?)?,
            }
        };
        Ok(Scored { rows, scores, skipped })
    }

    /// Prior means and variances of `p(z|xo)` for CMMD.
    pub fn latent(&self, ds: &Dataset, idx: &[usize]) -> CliResult<(Tensor2, Tensor2)> {
        let TrainedModel::Cmmd(m) = &self.model else {
            return Err(CliError::validation(format!(
                "latent representations need a cmmd model, got {}",
                self.kind()
            )));
        };
        self.check_dataset(ds)?;
        let xo = apply_scaler(&ds.xo(idx), &self.meta.scaler)?;
        let g = m.latent(&xo)?;
        Ok((g.mu().clone(), g.var()))
    }
}

/// Metrics over the labelled scored rows.
pub fn metrics(ds: &Dataset, scored: &Scored, horizon: u8, beta: [f64; 2]) -> CliResult<MetricReport> {
    let (scores, labels): (Vec<f64>, Vec<u8>) = scored
        .rows
        .iter()
        .zip(&scored.scores)
        .filter_map(|(&i, &s)| ds.rows[i].label(horizon).map(|y| (s, y)))
        .unzip();
    if scores.is_empty() {
        return Err(CliError::validation("no labelled rows to evaluate"));
    }
    let sv = ScoreVector::new(scores, labels)?;
    Ok(evalx::evaluate_with(&sv, (beta[0], beta[1]))?)
}

pub fn train_report(trained: &Trained, log: &FitLog, seed: u64) -> TrainReport {
    TrainReport {
        kind: trained.kind().into(),
        seed,
        horizon: trained.meta.horizon,
        train_rows: log.train_rows,
        train_positives: log.train_positives,
        skipped_no_xm: log.skipped_no_xm,
        epochs: log.history.len(),
        final_total: log.history.last().map(|h| h.total),
        lr_iterations: log.lr.as_ref().map(|r| r.iterations),
        lr_converged: log.lr.as_ref().map(|r| r.converged),
    }
}
