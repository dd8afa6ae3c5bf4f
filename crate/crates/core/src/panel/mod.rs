//! Quarterly firm panel: predictors, roll-over and lagging, labels, scaling,
//! balancing, temporal splits and a synthetic generator.

mod batch;
mod build;
mod dataset;
mod ingest;
mod predictors;
mod prep;
mod quarter;
mod synth;

pub use batch::Batch;
pub use build::{build_panel, BuildOptions, PanelRow, PrepReport, BANKRUPTCY_CHAPTERS, HORIZONS, MDA_WINDOW};
pub use dataset::{read_panel, term_name, write_panel, Dataset, DatasetMeta, META_FILE, PANEL_FILE, VOCAB_FILE, XM_FILE};
pub use ingest::{merge_market, read_bankruptcies, read_fundamentals, read_market, Bankruptcy, MarketQuarter};
pub use predictors::{
    compute_predictors, Fundamentals, PredictorVector, RawQuarter, MAX_DAILY_RETURNS, MIN_DAILY_RETURNS,
    N_PREDICTORS, PREDICTOR_NAMES, PRICE_CAP,
};
pub use prep::{apply_scaler, downsample, fit_scaler, split_by_period, PeriodSplit, Scaler, ScalerState};
pub use quarter::Quarter;
pub use synth::{synth_generate, SynthCoefficients, SynthConfig, SynthData};
