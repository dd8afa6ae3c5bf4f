use std::collections::{BTreeSet, HashMap};

use cmmd_core::mui::{mui_by_division, mui_series, write_mui_csv, CompanyLatent};
use cmmd_core::panel::Dataset;

use super::{create, model_path, prepare_out};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::Trained;

pub const MUI_FILE: &str = "mui.csv";

/// Market uncertainty index over every dataset row, overall and per SIC
/// division. Rows are dated by the quarter their predictors were observed.
pub fn cmd_mui(cfg: &RunConfig) -> CliResult<()> {
    let ds = Dataset::read(cfg.data_dir()?)?;
    let out = prepare_out(cfg)?;
    let trained = Trained::load(&model_path(cfg.mui.model.as_deref(), &out))?;

    let unmapped: BTreeSet<&str> = ds
        .rows
        .iter()
        .filter(|r| r.sic_division.is_none())
        .map(|r| r.firm_id.as_str())
        .collect();
    if !unmapped.is_empty() {
        return Err(CliError::validation(format!(
            "firms without a SIC division: {}",
            unmapped.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let divisions: HashMap<String, u8> = ds
        .rows
        .iter()
        .filter_map(|r| r.sic_division.map(|d| (r.firm_id.clone(), d)))
        .collect();

    let idx: Vec<usize> = (0..ds.rows.len()).collect();
    let (mu, var) = trained.latent(&ds, &idx)?;
    let latents: Vec<CompanyLatent> = ds
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| CompanyLatent {
            firm_id: row.firm_id.clone(),
            quarter: row.data_quarter,
            mu: mu.row(r).to_vec(),
            var: var.row(r).to_vec(),
        })
        .collect();
    let overall = mui_series(&latents)?;
    let by_div = mui_by_division(&latents, &divisions)?;
    write_mui_csv(create(&out.join(MUI_FILE))?, &overall, &by_div)?;
    eprintln!("mui: {} years, {} divisions", overall.values.len(), by_div.len());
    Ok(())
}
