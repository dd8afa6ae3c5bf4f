//! Run configuration: a single JSON document, unknown keys rejected.
//!
//! Relative paths inside the document resolve against the directory that
//! holds it. Every command writes the resolved document to
//! `<out>/resolved_config.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cmmd_core::baselines::{KnnParams, LrParams, MlpParams, NbParams};
use cmmd_core::cmmd::CmmdConfig;
use cmmd_core::panel::{Quarter, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Dataset directory written by `synth` or `prep`.
    pub data: Option<PathBuf>,
    /// Label horizon in years.
    pub horizon: u8,
    pub split: Option<SplitConfig>,
    pub model: Option<ModelSpec>,
    pub features: Features,
    /// Balance training classes by down-sampling the majority.
    pub downsample: bool,
    pub synth: Option<SynthConfig>,
    pub prep: Option<PrepConfig>,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub sweep: Option<SweepConfig>,
    pub mui: MuiConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            data: None,
            horizon: 1,
            split: None,
            model: None,
            features: Features::Xo,
            downsample: true,
            synth: None,
            prep: None,
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
            sweep: None,
            mui: MuiConfig::default(),
        }
    }
}

/// Quarter boundaries. Training rows are at or before `train_end`, test
/// rows from `test_start` (through `test_end` when set). For sweeps, rows
/// from `valid_start` through `train_end` are held out for validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train_end: Quarter,
    pub test_start: Quarter,
    #[serde(default)]
    pub test_end: Option<Quarter>,
    #[serde(default)]
    pub valid_start: Option<Quarter>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Features {
    /// Accounting and market predictors only.
    Xo,
    /// Predictors followed by the text vector; rows without text are skipped.
    XoXm,
}

/// The model to train. CMMD always trains on both modalities and predicts
/// from `xo`; baselines use `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelSpec {
    Cmmd(CmmdConfig),
    Lr(LrParams),
    Nb(NbParams),
    Knn(KnnParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Cmmd(_) => "cmmd",
            ModelSpec::Lr(_) => "lr",
            ModelSpec::Nb(_) => "nb",
            ModelSpec::Knn(_) => "knn",
            ModelSpec::Mlp(_) => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub fundamentals: PathBuf,
    pub market: Option<PathBuf>,
    pub bankruptcies: PathBuf,
    pub mda_dir: PathBuf,
    pub require_mda: bool,
    pub label_end: Option<Quarter>,
    pub max_terms: usize,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            fundamentals: "fundamentals.csv".into(),
            market: None,
            bankruptcies: "bankruptcies.csv".into(),
            mda_dir: "mda".into(),
            require_mda: true,
            label_end: None,
            max_terms: cmmd_core::textprep::DEFAULT_MAX_TERMS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowSelection {
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub rows: RowSelection,
    /// Latent draws per row for CMMD; the model's own setting when absent.
    pub n_samples: Option<usize>,
    /// Also write `latent.csv` with prior means, variances and scores.
    pub export_latent: bool,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            model: None,
            rows: RowSelection::Test,
            n_samples: None,
            export_latent: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Score an existing `scores.csv` instead of training.
    pub scores: Option<PathBuf>,
    /// One train/test repetition per seed; the run seed when empty.
    pub seeds: Vec<u64>,
    /// Beta severity parameters of the H-measure.
    pub h_beta: [f64; 2],
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            scores: None,
            seeds: Vec::new(),
            h_beta: [cmmd_core::evalx::H_BETA.0, cmmd_core::evalx::H_BETA.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Model field name to candidate values; the cartesian product is run.
    pub grid: BTreeMap<String, Vec<serde_json::Value>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuiConfig {
    pub model: Option<PathBuf>,
}

/// Command-line overrides of scalar fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::validation(format!("config: {e}")))
    }

    /// Reads the config file (or defaults when `path` is `None`), resolves
    /// relative paths and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::validation(format!("config {}: {e}", p.display())))?;
                let mut cfg = Self::from_json(&text)?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                cfg.resolve_paths(&base);
                cfg
            }
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out = Some(out.clone());
        }
        if let Some(s) = &mut cfg.synth {
            s.seed = cfg.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.out, &mut self.data, &mut self.predict.model, &mut self.evaluate.scores, &mut self.mui.model]
            .into_iter()
            .flatten()
        {
            resolve(base, p);
        }
        if let Some(prep) = &mut self.prep {
            resolve(base, &mut prep.fundamentals);
            resolve(base, &mut prep.bankruptcies);
            resolve(base, &mut prep.mda_dir);
            if let Some(m) = &mut prep.market {
                resolve(base, m);
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if !cmmd_core::panel::HORIZONS.contains(&self.horizon) {
            return Err(CliError::validation(format!(
                "horizon {} not in {:?}",
                self.horizon,
                cmmd_core::panel::HORIZONS
            )));
        }
        if let Some(s) = &self.split {
            if s.train_end >= s.test_start {
                return Err(CliError::validation(format!(
                    "split: train_end {} must precede test_start {}",
                    s.train_end, s.test_start
                )));
            }
            if s.test_end.is_some_and(|e| e < s.test_start) {
                return Err(CliError::validation("split: test_end precedes test_start"));
            }
            if s.valid_start.is_some_and(|v| v > s.train_end) {
                return Err(CliError::validation("split: valid_start after train_end"));
            }
        }
        if self.evaluate.h_beta.iter().any(|v| !(*v > 0.0)) {
            return Err(CliError::validation("evaluate.h_beta entries must be positive"));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::validation("no output directory: set \"out\" or pass --out"))
    }

    pub fn data_dir(&self) -> CliResult<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| CliError::validation("no dataset: set \"data\""))
    }

    pub fn split(&self) -> CliResult<&SplitConfig> {
        self.split
            .as_ref()
            .ok_or_else(|| CliError::validation("no split: set \"split\""))
    }

    pub fn model(&self) -> CliResult<&ModelSpec> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::validation("no model: set \"model\""))
    }

    pub fn write_resolved(&self, out: &Path) -> CliResult<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(RESOLVED_CONFIG), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
