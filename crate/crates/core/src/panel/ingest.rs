use std::collections::BTreeMap;
use std::io::Read;

use super::predictors::{Fundamentals, RawQuarter, MAX_DAILY_RETURNS};
use super::Quarter;
use crate::mui::sic_division;
use crate::{Error, Result};

/// A bankruptcy filing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bankruptcy {
    pub firm_id: String,
    pub quarter: Quarter,
    pub chapter: u8,
}

/// Market columns of one firm-quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketQuarter {
    pub firm_id: String,
    pub quarter: Quarter,
    pub ret: Option<f64>,
    pub vwretd: Option<f64>,
    pub daily_returns: Vec<f64>,
}

struct Header {
    names: Vec<String>,
}

impl Header {
    fn new(h: &csv::StringRecord) -> Self {
        Self {
            names: h.iter().map(|s| s.trim().to_string()).collect(),
        }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str, file: &str) -> Result<usize> {
        self.find(name)
            .ok_or_else(|| Error::Data(format!("{file}: missing column {name:?}")))
    }
}

fn row_err(file: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{file} row {line}: {msg}"))
}

fn opt_f64(rec: &csv::StringRecord, i: Option<usize>, file: &str, line: usize) -> Result<Option<f64>> {
    let Some(s) = i.and_then(|i| rec.get(i)).map(str::trim) else {
        return Ok(None);
    };
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| row_err(file, line, format!("bad number {s:?}")))?;
    if !v.is_finite() {
        return Err(row_err(file, line, format!("non-finite number {s:?}")));
    }
    Ok(Some(v))
}

fn firm_quarter(
    rec: &csv::StringRecord,
    cols: (usize, usize, usize),
    file: &str,
    line: usize,
) -> Result<(String, Quarter)> {
    let firm = rec.get(cols.0).unwrap_or("").trim();
    if firm.is_empty() {
        return Err(row_err(file, line, "empty firm_id"));
    }
    let year: i32 = rec
        .get(cols.1)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| row_err(file, line, "bad year"))?;
    let q: u8 = rec
        .get(cols.2)
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| row_err(file, line, "bad quarter"))?;
    let quarter = Quarter::new(year, q).map_err(|e| row_err(file, line, e))?;
    Ok((firm.to_string(), quarter))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(false).from_reader(r)
}

/// Reads `fundamentals.csv`: `firm_id, year, quarter`, any of the database
/// columns, and optionally a four-digit `sic` code. Columns that are absent
/// leave the corresponding values missing.
pub fn read_fundamentals<R: Read>(r: R) -> Result<Vec<RawQuarter>> {
    const FILE: &str = "fundamentals.csv";
    let mut rdr = reader(r);
    let h = Header::new(rdr.headers()?);
    let key = (h.require("firm_id", FILE)?, h.require("year", FILE)?, h.require("quarter", FILE)?);
    let cols: Vec<(&str, Option<usize>)> = Fundamentals::COLUMNS.iter().map(|c| (*c, h.find(c))).collect();
    let sic = h.find("sic");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (firm, q) = firm_quarter(&rec, key, FILE, line)?;
        let mut rq = RawQuarter::new(firm, q);
        for (name, idx) in &cols {
            rq.fundamentals.set(name, opt_f64(&rec, *idx, FILE, line)?);
        }
        if let Some(s) = sic.and_then(|i| rec.get(i)).map(str::trim).filter(|s| !s.is_empty()) {
            let code: u16 = s.parse().map_err(|_| row_err(FILE, line, format!("bad sic {s:?}")))?;
            rq.sic_division = sic_division(code);
        }
        out.push(rq);
    }
    Ok(out)
}

/// Reads `market.csv`: `firm_id, year, quarter, ret, vwretd, r01..r63`.
/// Blank daily returns are skipped.
pub fn read_market<R: Read>(r: R) -> Result<Vec<MarketQuarter>> {
    const FILE: &str = "market.csv";
    let mut rdr = reader(r);
    let h = Header::new(rdr.headers()?);
    let key = (h.require("firm_id", FILE)?, h.require("year", FILE)?, h.require("quarter", FILE)?);
    let ret = h.find("ret");
    let vw = h.find("vwretd");
    let daily: Vec<usize> = (1..=MAX_DAILY_RETURNS)
        .filter_map(|d| h.find(&format!("r{d:02}")))
        .collect();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (firm_id, quarter) = firm_quarter(&rec, key, FILE, line)?;
        let mut daily_returns = Vec::new();
        for &c in &daily {
            if let Some(v) = opt_f64(&rec, Some(c), FILE, line)? {
                daily_returns.push(v);
            }
        }
        out.push(MarketQuarter {
            firm_id,
            quarter,
            ret: opt_f64(&rec, ret, FILE, line)?,
            vwretd: opt_f64(&rec, vw, FILE, line)?,
            daily_returns,
        });
    }
    Ok(out)
}

/// Reads `bankruptcies.csv`: `firm_id, filing_year, filing_quarter, chapter`.
pub fn read_bankruptcies<R: Read>(r: R) -> Result<Vec<Bankruptcy>> {
    const FILE: &str = "bankruptcies.csv";
    let mut rdr = reader(r);
    let h = Header::new(rdr.headers()?);
    let key = (
        h.require("firm_id", FILE)?,
        h.require("filing_year", FILE)?,
        h.require("filing_quarter", FILE)?,
    );
    let ch = h.require("chapter", FILE)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let (firm_id, quarter) = firm_quarter(&rec, key, FILE, line)?;
        let chapter: u8 = rec
            .get(ch)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| row_err(FILE, line, "bad chapter"))?;
        out.push(Bankruptcy { firm_id, quarter, chapter });
    }
    Ok(out)
}

/// Attaches market data to fundamentals by firm and quarter. Market rows
/// without fundamentals are ignored; duplicate market keys are an error.
pub fn merge_market(mut raw: Vec<RawQuarter>, market: Vec<MarketQuarter>) -> Result<Vec<RawQuarter>> {
    let mut by_key: BTreeMap<(String, Quarter), MarketQuarter> = BTreeMap::new();
    for m in market {
        let key = (m.firm_id.clone(), m.quarter);
        if let Some(prev) = by_key.insert(key, m) {
            return Err(Error::Validation(format!(
                "duplicate firm-quarter {}/{} in market data",
                prev.firm_id, prev.quarter
            )));
        }
    }
    for rq in &mut raw {
        if let Some(m) = by_key.get(&(rq.firm_id.clone(), rq.quarter)) {
            rq.ret = m.ret;
            rq.vwretd = m.vwretd;
            rq.daily_returns = m.daily_returns.clone();
        }
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fundamentals_with_partial_columns() {
        let text = "firm_id,year,quarter,actq,lctq,sic\nA,2010,1,2,1,3571\nB,2010,2,,4,\n";
        let rows = read_fundamentals(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].fundamentals.actq, Some(2.0));
        assert_eq!(rows[0].sic_division, Some(4));
        assert_eq!(rows[1].fundamentals.actq, None);
        assert_eq!(rows[1].fundamentals.atq, None);
        assert_eq!(rows[1].quarter.to_string(), "2010Q2");
    }

    #[test]
    fn market_and_merge() {
        let f = read_fundamentals("firm_id,year,quarter,atq\nA,2010,1,5\n".as_bytes()).unwrap();
        let m = read_market("firm_id,year,quarter,ret,vwretd,r01,r02,r03\nA,2010,1,0.1,0.05,0.01,,0.02\nZ,2010,1,0,0,,,\n".as_bytes()).unwrap();
        assert_eq!(m[0].daily_returns, [0.01, 0.02]);
        let merged = merge_market(f, m).unwrap();
        assert_eq!(merged[0].ret, Some(0.1));
        assert_eq!(merged[0].daily_returns.len(), 2);
    }

    #[test]
    fn bankruptcies() {
        let b = read_bankruptcies("firm_id,filing_year,filing_quarter,chapter\nA,2012,3,11\n".as_bytes()).unwrap();
        assert_eq!(b[0].quarter.to_string(), "2012Q3");
        assert_eq!(b[0].chapter, 11);
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let e = read_fundamentals("firm_id,year,quarter,atq\nA,2010,5,1\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("row 2"), "{e}");
        assert!(read_fundamentals("firm_id,year,quarter,atq\nA,2010,1,abc\n".as_bytes()).is_err());
        assert!(read_fundamentals("firm,year,quarter\n".as_bytes()).is_err());
        assert!(read_bankruptcies("firm_id,filing_year,filing_quarter,chapter\nA,2012,3,x\n".as_bytes()).is_err());
        let dup = "firm_id,year,quarter,ret\nA,2010,1,0\nA,2010,1,0\n";
        assert!(merge_market(vec![], read_market(dup.as_bytes()).unwrap()).is_err());
    }
}
