//! Market uncertainty index: the log of the summed per-firm latent standard
//! deviations, overall and by SIC division.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::panel::Quarter;
use crate::{Error, Result};

/// Division names, indexed by division number minus one.
pub const DIVISIONS: [&str; 10] = [
    "Agriculture, forestry and fishing",
    "Mining",
    "Construction",
    "Manufacturing",
    "Transportation, communications, electric, gas and sanitary",
    "Wholesale trade",
    "Retail trade",
    "Finance, insurance and real estate",
    "Services",
    "Public administration",
];

/// Inclusive four-digit SIC ranges for divisions 1 to 10.
const SIC_RANGES: [(u16, u16); 10] = [
    (100, 999),
    (1000, 1499),
    (1500, 1799),
    (2000, 3999),
    (4000, 4999),
    (5000, 5199),
    (5200, 5999),
    (6000, 6799),
    (7000, 8999),
    (9100, 9729),
];

/// Maps a four-digit SIC code to its division (1 to 10).
pub fn sic_division(sic: u16) -> Option<u8> {
    SIC_RANGES
        .iter()
        .position(|&(lo, hi)| (lo..=hi).contains(&sic))
        .map(|i| i as u8 + 1)
}

/// Latent distribution `p(z|xo)` of one firm at one point in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyLatent {
    pub firm_id: String,
    pub quarter: Quarter,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
}

impl CompanyLatent {
    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.var.len() {
            return Err(Error::dim("CompanyLatent", format!("mu {} vs var {}", self.mu.len(), self.var.len())));
        }
        if let Some(v) = self.var.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("firm {}: variance {v} is not positive", self.firm_id)));
        }
        Ok(())
    }
}

/// `sqrt(sum_i var_i)`: the standard deviation of the sum of independent coordinates.
pub fn company_std(c: &CompanyLatent) -> f64 {
    c.var.iter().sum::<f64>().sqrt()
}

/// Element-wise mean of `mu` and `var` over the observed quarters of one
/// firm in year `year`. The result carries the latest observed quarter.
pub fn yearly_average_latent(latents: &[CompanyLatent], year: i32) -> Result<CompanyLatent> {
    let in_year: Vec<&CompanyLatent> = latents.iter().filter(|c| c.quarter.year() == year).collect();
    let first = in_year
        .first()
        .ok_or_else(|| Error::Validation(format!("no quarter observed in {year}")))?;
    if let Some(other) = in_year.iter().find(|c| c.firm_id != first.firm_id) {
        return Err(Error::Validation(format!(
            "yearly average mixes firms {} and {}",
            first.firm_id, other.firm_id
        )));
    }
    let d = first.mu.len();
    let q = in_year.len() as f64;
    let mut mu = vec![0.0; d];
    let mut var = vec![0.0; d];
    for c in &in_year {
        c.validate()?;
        if c.mu.len() != d {
            return Err(Error::dim("yearly_average_latent", format!("dimension {} vs {d}", c.mu.len())));
        }
        for i in 0..d {
            mu[i] += c.mu[i] / q;
            var[i] += c.var[i] / q;
        }
    }
    Ok(CompanyLatent {
        firm_id: first.firm_id.clone(),
        quarter: in_year.iter().map(|c| c.quarter).max().expect("non-empty"),
        mu,
        var,
    })
}

/// `ln(sum_k company_std_k)`; `None` for an empty set.
pub fn mui(latents: &[CompanyLatent]) -> Option<f64> {
    if latents.is_empty() {
        return None;
    }
    Some(latents.iter().map(company_std).sum::<f64>().ln())
}

/// Year to index value, optionally per division.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MuiSeries {
    pub division: Option<u8>,
    pub values: BTreeMap<i32, f64>,
}

fn yearly_firms(latents: &[CompanyLatent]) -> Result<BTreeMap<i32, Vec<CompanyLatent>>> {
    let mut groups: BTreeMap<(i32, &str), Vec<CompanyLatent>> = BTreeMap::new();
    for c in latents {
        c.validate()?;
        groups
            .entry((c.quarter.year(), c.firm_id.as_str()))
            .or_default()
            .push(c.clone());
    }
    let mut out: BTreeMap<i32, Vec<CompanyLatent>> = BTreeMap::new();
    for ((year, _), group) in groups {
        out.entry(year).or_default().push(yearly_average_latent(&group, year)?);
    }
    Ok(out)
}

/// Overall series: quarterly latents are averaged per firm and year first.
pub fn mui_series(latents: &[CompanyLatent]) -> Result<MuiSeries> {
    let values = yearly_firms(latents)?
        .into_iter()
        .filter_map(|(y, firms)| mui(&firms).map(|m| (y, m)))
        .collect();
    Ok(MuiSeries { division: None, values })
}

/// One series per division present in the data, in division order.
pub fn mui_by_division(latents: &[CompanyLatent], divisions: &HashMap<String, u8>) -> Result<Vec<MuiSeries>> {
    let unmapped: BTreeSet<&str> = latents
        .iter()
        .filter(|c| !matches!(divisions.get(&c.firm_id), Some(1..=10)))
        .map(|c| c.firm_id.as_str())
        .collect();
    if !unmapped.is_empty() {
        return Err(Error::Validation(format!(
            "firms without a SIC division: {}",
            unmapped.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut by_div: BTreeMap<u8, Vec<CompanyLatent>> = BTreeMap::new();
    for c in latents {
        by_div.entry(divisions[&c.firm_id]).or_default().push(c.clone());
    }
    by_div
        .into_iter()
        .map(|(div, group)| {
            let mut s = mui_series(&group)?;
            s.division = Some(div);
            Ok(s)
        })
        .collect()
}

/// Writes `year,division,mui` rows; division 0 is the overall series.
pub fn write_mui_csv<W: Write>(w: W, overall: &MuiSeries, by_division: &[MuiSeries]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["year", "division", "mui"])?;
    for s in std::iter::once(overall).chain(by_division) {
        let div = s.division.unwrap_or(0);
        for (y, v) in &s.values {
            csv.write_record([y.to_string(), div.to_string(), v.to_string()])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lat(firm: &str, q: &str, var: Vec<f64>) -> CompanyLatent {
        CompanyLatent {
            firm_id: firm.into(),
            quarter: q.parse().unwrap(),
            mu: vec![0.0; var.len()],
            var,
        }
    }

    #[test]
    fn company_std_cases() {
        assert_eq!(company_std(&lat("a", "2010Q1", vec![1.0; 4])), 2.0);
        assert_eq!(company_std(&lat("a", "2010Q1", vec![2.25])), 1.5);
    }

    #[test]
    fn mui_hand_cases() {
        let one = lat("a", "2010Q1", vec![1.0; 4]);
        assert!((mui(&[one.clone()]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let two = [one.clone(), lat("b", "2010Q1", vec![1.0; 4])];
        assert!((mui(&two).unwrap() - (mui(&[one]).unwrap() + 2f64.ln())).abs() < 1e-12);
        assert!(mui(&[]).is_none());
    }

    #[test]
    fn yearly_average() {
        let a = lat("a", "2010Q1", vec![1.0, 1.0]);
        let b = lat("a", "2010Q3", vec![3.0, 3.0]);
        let other_year = lat("a", "2011Q1", vec![9.0, 9.0]);
        let avg = yearly_average_latent(&[a.clone(), b, other_year], 2010).unwrap();
        assert_eq!(avg.var, [2.0, 2.0]);
        assert_eq!(avg.quarter.to_string(), "2010Q3");
        assert_eq!(yearly_average_latent(&[a.clone()], 2010).unwrap(), a);
        assert!(yearly_average_latent(&[a], 2012).is_err());
    }

    #[test]
    fn division_table() {
        assert_eq!(sic_division(100), Some(1));
        assert_eq!(sic_division(1311), Some(2));
        assert_eq!(sic_division(1799), Some(3));
        assert_eq!(sic_division(1800), None);
        assert_eq!(sic_division(3571), Some(4));
        assert_eq!(sic_division(4911), Some(5));
        assert_eq!(sic_division(5199), Some(6));
        assert_eq!(sic_division(5812), Some(7));
        assert_eq!(sic_division(6021), Some(8));
        assert_eq!(sic_division(7372), Some(9));
        assert_eq!(sic_division(9721), Some(10));
        assert_eq!(sic_division(9999), None);
    }

    #[test]
    fn division_contracts() {
        let ls = vec![lat("a", "2010Q1", vec![1.0; 2]), lat("b", "2010Q2", vec![4.0; 2])];
        let single: HashMap<String, u8> = [("a".into(), 4), ("b".into(), 4)].into();
        let div = mui_by_division(&ls, &single).unwrap();
        assert_eq!(div.len(), 1);
        assert_eq!(div[0].values, mui_series(&ls).unwrap().values);

        let missing: HashMap<String, u8> = [("a".into(), 4)].into();
        let err = mui_by_division(&ls, &missing).unwrap_err().to_string();
        assert!(err.contains('b'));

        let split: HashMap<String, u8> = [("a".into(), 2), ("b".into(), 9)].into();
        let div = mui_by_division(&ls, &split).unwrap();
        assert_eq!(div.iter().map(|s| s.division.unwrap()).collect::<Vec<_>>(), [2, 9]);
    }

    #[test]
    fn csv_layout() {
        let ls = vec![lat("a", "2010Q1", vec![1.0; 4])];
        let map: HashMap<String, u8> = [("a".into(), 3)].into();
        let mut buf = Vec::new();
        write_mui_csv(&mut buf, &mui_series(&ls).unwrap(), &mui_by_division(&ls, &map).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let ln2 = 2f64.ln().to_string();
        assert_eq!(text, format!("year,division,mui\n2010,0,{ln2}\n2010,3,{ln2}\n"));
    }

    fn latents_strategy() -> impl Strategy<Value = Vec<(u8, u8, Vec<f64>)>> {
        prop::collection::vec((0u8..6, 1u8..=10, prop::collection::vec(0.01f64..10.0, 3)), 1..30)
    }

    proptest! {
        #[test]
        fn algebraic_identities(items in latents_strategy(), c in 0.1f64..10.0, bump in 0usize..30) {
            let ls: Vec<CompanyLatent> = items
                .iter()
                .enumerate()
                .map(|(i, (firm, _, var))| CompanyLatent {
                    firm_id: format!("f{firm}"),
                    quarter: Quarter::new(2010 + (i % 3) as i32, 1 + (i % 4) as u8).unwrap(),
                    mu: vec![i as f64; 3],
                    var: var.clone(),
                })
                .collect();
            let divs: HashMap<String, u8> = items.iter().map(|(f, d, _)| (format!("f{f}"), *d)).collect();

            let overall = mui_series(&ls).unwrap();
            let parts = mui_by_division(&ls, &divs).unwrap();
            for (year, m) in &overall.values {
                let sum: f64 = parts.iter().filter_map(|s| s.values.get(year)).map(|v| v.exp()).sum();
                prop_assert!((m.exp() - sum).abs() <= 1e-9 * sum.max(1.0));
            }

            let scaled: Vec<CompanyLatent> = ls
                .iter()
                .map(|l| CompanyLatent { var: l.var.iter().map(|v| v * c).collect(), ..l.clone() })
                .collect();
            let shifted = mui_series(&scaled).unwrap();
            for (year, m) in &overall.values {
                prop_assert!((shifted.values[year] - m - 0.5 * c.ln()).abs() < 1e-9);
            }

            let moved: Vec<CompanyLatent> = ls.iter().map(|l| CompanyLatent { mu: vec![-7.0; 3], ..l.clone() }).collect();
            prop_assert_eq!(&mui_series(&moved).unwrap(), &overall);

            let mut bigger = ls.clone();
            let k = bump % bigger.len();
            bigger[k].var[0] += 1.0;
            let grown = mui_series(&bigger).unwrap();
            for (year, m) in &overall.values {
                prop_assert!(grown.values[year] >= *m);
            }
        }
    }
}
