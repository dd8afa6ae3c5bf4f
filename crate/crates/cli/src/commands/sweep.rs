use std::collections::BTreeMap;

use cmmd_core::panel::Dataset;
use serde_json::Value;

use super::{create, prepare_out};
use crate::config::{ModelSpec, RunConfig};
use crate::error::{CliError, CliResult};
use crate::experiment::{metrics, train_model, window};

pub const LEADERBOARD_FILE: &str = "leaderboard.csv";

/// Cartesian product of the grid. Keys are taken in sorted order and the
/// last key varies fastest.
pub fn expand_grid(grid: &BTreeMap<String, Vec<Value>>) -> CliResult<Vec<BTreeMap<String, Value>>> {
    if grid.is_empty() {
        return Err(CliError::validation("sweep grid is empty"));
    }
    if let Some((k, _)) = grid.iter().find(|(_, v)| v.is_empty()) {
        return Err(CliError::validation(format!("sweep grid entry {k:?} has no values")));
    }
    let mut points = vec![BTreeMap::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

fn apply_point(base: &ModelSpec, point: &BTreeMap<String, Value>) -> CliResult<ModelSpec> {
    let mut v = serde_json::to_value(base)?;
    let obj = v.as_object_mut().expect("model specs serialise to objects");
    for (k, val) in point {
        obj.insert(k.clone(), val.clone());
    }
    serde_json::from_value(v).map_err(|e| CliError::validation(format!("sweep point {point:?}: {e}")))
}

/// Trains every grid point on rows before `split.valid_start` and scores
/// rows from `valid_start` through `train_end`. The leaderboard is sorted
/// by validation AUC, ties broken by grid order.
pub fn cmd_sweep(cfg: &RunConfig) -> CliResult<()> {
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::validation("no sweep section in config"))?;
    let base = cfg.model()?;
    let split = cfg.split()?;
    let valid_start = split
        .valid_start
        .ok_or_else(|| CliError::validation("sweeps need split.valid_start"))?;
    let points = expand_grid(&grid.grid)?;
    let specs = points.iter().map(|p| apply_point(base, p)).collect::<CliResult<Vec<_>>>()?;
    let ds = Dataset::read(cfg.data_dir()?)?;
    let out = prepare_out(cfg)?;

    let train: Vec<usize> = (0..ds.rows.len()).filter(|&i| ds.rows[i].quarter < valid_start).collect();
    let valid = window(&ds, valid_start, Some(split.train_end));
    let mut results = Vec::with_capacity(specs.len());
    for (gi, spec) in specs.iter().enumerate() {
        let (trained, _) = train_model(&ds, &train, spec, cfg.features, cfg.horizon, cfg.downsample, cfg.seed)?;
        let scored = trained.score(&ds, &valid, cfg.predict.n_samples, cfg.seed)?;
        results.push((gi, metrics(&ds, &scored, cfg.horizon, cfg.evaluate.h_beta)?));
    }
    results.sort_by(|a, b| b.1.auc.total_cmp(&a.1.auc).then(a.0.cmp(&b.0)));

    let mut w = csv::Writer::from_writer(create(&out.join(LEADERBOARD_FILE))?);
    w.write_record(["rank", "grid_index", "params", "auc", "h_measure", "ks", "n", "n_pos"])?;
    for (rank, (gi, m)) in results.iter().enumerate() {
        w.write_record([
            (rank + 1).to_string(),
            gi.to_string(),
            serde_json::to_string(&points[*gi])?,
            m.auc.to_string(),
            m.h_measure.to_string(),
            m.ks.to_string(),
            m.n.to_string(),
            m.n_pos.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "sweep: {} grid points, best auc {:.4} (grid index {})",
        results.len(),
        results[0].1.auc,
        results[0].0
    );
    Ok(())
}
