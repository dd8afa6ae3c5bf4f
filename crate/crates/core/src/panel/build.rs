use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ingest::Bankruptcy;
use super::predictors::{compute_predictors, RawQuarter, N_PREDICTORS};
use super::Quarter;
use crate::{Error, Result};

/// Forecast horizons in years.
pub const HORIZONS: [u8; 3] = [1, 2, 3];
/// An MDA filed in quarter `m` serves data quarters `m..=m + 3`.
pub const MDA_WINDOW: i64 = 4;
/// Filings under these chapters count as bankruptcies.
pub const BANKRUPTCY_CHAPTERS: [u8; 2] = [7, 11];

/// One modelling observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub firm_id: String,
    /// Prediction quarter: the label clock starts here.
    pub quarter: Quarter,
    /// Quarter the predictors and MDA were observed in, one before `quarter`.
    pub data_quarter: Quarter,
    pub sic_division: Option<u8>,
    pub predictors: Vec<f64>,
    pub mda_ref: Option<String>,
    /// Labels for 1, 2 and 3 years; `None` when the window is not yet observed.
    pub labels: [Option<u8>; 3],
}

impl PanelRow {
    pub fn label(&self, horizon: u8) -> Option<u8> {
        HORIZONS
            .iter()
            .position(|h| *h == horizon)
            .and_then(|i| self.labels[i])
    }

    pub fn id(&self) -> String {
        format!("{}_{}", self.firm_id, self.quarter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Drop rows without an MDA in the roll-over window.
    pub require_mda: bool,
    /// Last quarter with complete bankruptcy information.
    pub label_end: Option<Quarter>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            require_mda: true,
            label_end: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepReport {
    pub raw_rows: usize,
    pub rows: usize,
    /// Dropped row counts keyed by reason.
    pub dropped: BTreeMap<String, usize>,
    /// How often each predictor was missing among rows that reached that check.
    pub missing_by_predictor: BTreeMap<String, usize>,
    pub bankruptcies: usize,
    pub bankruptcies_other_chapter: usize,
    /// Filings that no emitted row labels positive at any horizon.
    pub bankruptcies_unmatched: usize,
    pub positives: BTreeMap<String, usize>,
    pub mda_docs: usize,
    pub mda_docs_rejected_short: usize,
}

impl PrepReport {
    fn drop(&mut self, reason: &str) {
        *self.dropped.entry(reason.to_string()).or_default() += 1;
    }
}

fn latest_mda<'a>(index: &'a BTreeMap<(String, Quarter), String>, firm: &str, d: Quarter) -> Option<&'a String> {
    (0..MDA_WINDOW).find_map(|k| index.get(&(firm.to_string(), d.plus(-k))))
}

fn labels_for(q: Quarter, filing: Option<Quarter>, label_end: Option<Quarter>) -> [Option<u8>; 3] {
    let mut out = [None; 3];
    for (slot, h) in out.iter_mut().zip(HORIZONS) {
        let end = q.plus(4 * h as i64);
        let hit = filing.is_some_and(|f| q < f && f <= end);
        *slot = match label_end {
            _ if hit && label_end.is_none_or(|le| filing.expect("hit") <= le) => Some(1),
            Some(le) if end > le => None,
            _ => Some(0),
        };
    }
    out
}

/// Assembles the modelling panel.
///
/// Data quarter `d` gets the most recent MDA filed in `d-3..=d`; the row is
/// then lagged to prediction quarter `d+1`. Rows at or after a firm's first
/// Chapter 7/11 filing are removed, as are rows with any missing predictor.
pub fn build_panel(
    raw: &[RawQuarter],
    mda_index: &BTreeMap<(String, Quarter), String>,
    bankruptcies: &[Bankruptcy],
    opts: &BuildOptions,
) -> Result<(Vec<PanelRow>, PrepReport)> {
    let mut seen = BTreeSet::new();
    let dups: BTreeSet<String> = raw
        .iter()
        .filter(|r| !seen.insert((r.firm_id.as_str(), r.quarter)))
        .map(|r| format!("{}/{}", r.firm_id, r.quarter))
        .collect();
    if !dups.is_empty() {
        return Err(Error::Validation(format!(
            "duplicate firm-quarters: {}",
            dups.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }

    let mut report = PrepReport {
        raw_rows: raw.len(),
        bankruptcies: bankruptcies.len(),
        mda_docs: mda_index.len(),
        ..Default::default()
    };

    let mut filing: HashMap<&str, Quarter> = HashMap::new();
    for b in bankruptcies {
        if !BANKRUPTCY_CHAPTERS.contains(&b.chapter) {
            report.bankruptcies_other_chapter += 1;
            continue;
        }
        filing
            .entry(b.firm_id.as_str())
            .and_modify(|q| *q = (*q).min(b.quarter))
            .or_insert(b.quarter);
    }

    let mut total_equity: HashMap<Quarter, f64> = HashMap::new();
    for r in raw {
        if let Some(me) = r.fundamentals.market_equity().filter(|v| *v > 0.0) {
            *total_equity.entry(r.quarter).or_default() += me;
        }
    }

    let mut rows = Vec::new();
    for r in raw {
        let q = r.quarter.plus(1);
        let filed = filing.get(r.firm_id.as_str()).copied();
        if filed.is_some_and(|f| q >= f) {
            report.drop("post_filing");
            continue;
        }
        let mda = latest_mda(mda_index, &r.firm_id, r.quarter);
        if mda.is_none() && opts.require_mda {
            report.drop("no_mda");
            continue;
        }
        let p = compute_predictors(r, total_equity.get(&r.quarter).copied());
        for name in p.missing() {
            *report.missing_by_predictor.entry(name.to_string()).or_default() += 1;
        }
        let Some(values) = p.complete() else {
            report.drop("missing_predictor");
            continue;
        };
        rows.push(PanelRow {
            firm_id: r.firm_id.clone(),
            quarter: q,
            data_quarter: r.quarter,
            sic_division: r.sic_division,
            predictors: values.to_vec(),
            mda_ref: mda.cloned(),
            labels: labels_for(q, filed, opts.label_end),
        });
    }
    rows.sort_by(|a, b| (&a.firm_id, a.quarter).cmp(&(&b.firm_id, b.quarter)));

    let matched: BTreeSet<&str> = rows
        .iter()
        .filter(|r| r.labels.contains(&Some(1)))
        .map(|r| r.firm_id.as_str())
        .collect();
    report.bankruptcies_unmatched = filing.keys().filter(|f| !matched.contains(*f)).count();
    report.rows = rows.len();
    for (i, h) in HORIZONS.iter().enumerate() {
        let n = rows.iter().filter(|r| r.labels[i] == Some(1)).count();
        report.positives.insert(format!("y{h}"), n);
    }
    debug_assert!(rows.iter().all(|r| r.predictors.len() == N_PREDICTORS));
    Ok((rows, report))
}
