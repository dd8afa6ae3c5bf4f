use serde::{Deserialize, Serialize};

use super::Quarter;

pub const N_PREDICTORS: usize = 33;

/// Predictor names in vector order.
pub const PREDICTOR_NAMES: [&str; N_PREDICTORS] = [
    "actq_lctq",
    "apq_saleq",
    "cheq_atq",
    "cheq_me_tl",
    "chq_atq",
    "chq_lctq",
    "debt_atq",
    "invchy_saley",
    "invtq_saleq",
    "lctq_less_chq_atq",
    "lctq_atq",
    "lctq_ltq",
    "lctq_saleq",
    "ltq_atq",
    "ltq_me_tl",
    "log_atq",
    "log_abs_saleq",
    "market_to_book",
    "niq_atq",
    "niq_me_tl",
    "niq_saleq",
    "oiadpq_atq",
    "oiadpq_saleq",
    "quick_lctq",
    "req_atq",
    "req_lctq",
    "saleq_atq",
    "seqq_atq",
    "wcapq_atq",
    "rsize",
    "log_price",
    "excess_return",
    "volatility",
];

/// Fewest daily returns accepted for the volatility predictor.
pub const MIN_DAILY_RETURNS: usize = 21;
pub const MAX_DAILY_RETURNS: usize = 63;
pub const PRICE_CAP: f64 = 15.0;

/// Quarterly fundamentals by database column name. Absent values are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fundamentals {
    pub actq: Option<f64>,
    pub lctq: Option<f64>,
    pub apq: Option<f64>,
    pub saleq: Option<f64>,
    pub cheq: Option<f64>,
    pub atq: Option<f64>,
    pub chq: Option<f64>,
    pub dlcq: Option<f64>,
    pub dlttq: Option<f64>,
    pub invchy: Option<f64>,
    pub saley: Option<f64>,
    pub invtq: Option<f64>,
    pub ltq: Option<f64>,
    pub cshoq: Option<f64>,
    pub prccq: Option<f64>,
    pub niq: Option<f64>,
    pub oiadpq: Option<f64>,
    pub req: Option<f64>,
    pub seqq: Option<f64>,
    pub wcapq: Option<f64>,
}

impl Fundamentals {
    pub const COLUMNS: [&'static str; 20] = [
        "actq", "lctq", "apq", "saleq", "cheq", "atq", "chq", "dlcq", "dlttq", "invchy", "saley",
        "invtq", "ltq", "cshoq", "prccq", "niq", "oiadpq", "req", "seqq", "wcapq",
    ];

    pub fn set(&mut self, column: &str, v: Option<f64>) -> bool {
        let slot = match column {
            "actq" => &mut self.actq,
            "lctq" => &mut self.lctq,
            "apq" => &mut self.apq,
            "saleq" => &mut self.saleq,
            "cheq" => &mut self.cheq,
            "atq" => &mut self.atq,
            "chq" => &mut self.chq,
            "dlcq" => &mut self.dlcq,
            "dlttq" => &mut self.dlttq,
            "invchy" => &mut self.invchy,
            "saley" => &mut self.saley,
            "invtq" => &mut self.invtq,
            "ltq" => &mut self.ltq,
            "cshoq" => &mut self.cshoq,
            "prccq" => &mut self.prccq,
            "niq" => &mut self.niq,
            "oiadpq" => &mut self.oiadpq,
            "req" => &mut self.req,
            "seqq" => &mut self.seqq,
            "wcapq" => &mut self.wcapq,
            _ => return false,
        };
        *slot = v;
        true
    }

    /// Market equity `cshoq · prccq`.
    pub fn market_equity(&self) -> Option<f64> {
        Some(self.cshoq? * self.prccq?)
    }
}

/// One firm-quarter of raw inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuarter {
    pub firm_id: String,
    pub quarter: Quarter,
    pub fundamentals: Fundamentals,
    pub ret: Option<f64>,
    pub vwretd: Option<f64>,
    /// Up to the last 63 daily returns.
    pub daily_returns: Vec<f64>,
    pub sic_division: Option<u8>,
}

impl RawQuarter {
    pub fn new(firm_id: impl Into<String>, quarter: Quarter) -> Self {
        Self {
            firm_id: firm_id.into(),
            quarter,
            fundamentals: Fundamentals::default(),
            ret: None,
            vwretd: None,
            daily_returns: Vec::new(),
            sic_division: None,
        }
    }
}

/// The 33 predictors; `None` marks a value that could not be computed.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorVector(pub [Option<f64>; N_PREDICTORS]);

impl PredictorVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = PREDICTOR_NAMES.iter().position(|n| *n == name)?;
        self.0[i]
    }

    pub fn missing(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.0
            .iter()
            .zip(PREDICTOR_NAMES)
            .filter(|(v, _)| v.is_none())
            .map(|(_, n)| n)
    }

    pub fn complete(&self) -> Option<[f64; N_PREDICTORS]> {
        let mut out = [0.0; N_PREDICTORS];
        for (o, v) in out.iter_mut().zip(&self.0) {
            *o = (*v)?;
        }
        Some(out)
    }
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    let (n, d) = (num?, den?);
    if d == 0.0 {
        return None;
    }
    Some(n / d).filter(|v| v.is_finite())
}

fn ln(x: Option<f64>) -> Option<f64> {
    x.filter(|v| *v > 0.0 && v.is_finite()).map(f64::ln)
}

fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < MIN_DAILY_RETURNS || xs.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Some((xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Computes every predictor. `total_equity` is the market-equity sum of all
/// firms in the same quarter.
pub fn compute_predictors(rq: &RawQuarter, total_equity: Option<f64>) -> PredictorVector {
    let f = &rq.fundamentals;
    let me = f.market_equity();
    let me_tl = me.zip(f.ltq).map(|(a, b)| a + b);
    let add = |a: Option<f64>, b: Option<f64>| Some(a? + b?);
    let sub = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let debt = add(f.dlcq, f.dlttq.map(|v| 0.5 * v));

    PredictorVector([
        ratio(f.actq, f.lctq),
        ratio(f.apq, f.saleq),
        ratio(f.cheq, f.atq),
        ratio(f.cheq, me_tl),
        ratio(f.chq, f.atq),
        ratio(f.chq, f.lctq),
        ratio(debt, f.atq),
        ratio(f.invchy, f.saley),
        ratio(f.invtq, f.saleq),
        ratio(sub(f.lctq, f.chq), f.atq),
        ratio(f.lctq, f.atq),
        ratio(f.lctq, f.ltq),
        ratio(f.lctq, f.saleq),
        ratio(f.ltq, f.atq),
        ratio(f.ltq, me_tl),
        ln(f.atq),
        ln(f.saleq.map(f64::abs)),
        ratio(me, sub(f.atq, f.ltq)),
        ratio(f.niq, f.atq),
        ratio(f.niq, me_tl),
        ratio(f.niq, f.saleq),
        ratio(f.oiadpq, f.atq),
        ratio(f.oiadpq, f.saleq),
        ratio(sub(f.actq, f.invtq), f.lctq),
        ratio(f.req, f.atq),
        ratio(f.req, f.lctq),
        ratio(f.saleq, f.atq),
        ratio(f.seqq, f.atq),
        ratio(f.wcapq, f.atq),
        ratio(ln(me), total_equity),
        ln(f.prccq.map(|p| p.min(PRICE_CAP))),
        sub(rq.ret, rq.vwretd).filter(|v| v.is_finite()),
        sample_std(&rq.daily_returns),
    ])
}
