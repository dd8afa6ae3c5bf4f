use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::Quarter;
use crate::numcore::{SeedStream, Tensor2};
use crate::{Error, Result};

/// Per-feature training minimum and maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fits column ranges on `train`.
pub fn fit_scaler(train: &Tensor2) -> Result<ScalerState> {
    if train.rows() == 0 {
        return Err(Error::Validation("cannot fit a scaler on zero rows".into()));
    }
    if !train.is_finite() {
        return Err(Error::NonFinite("scaler input".into()));
    }
    let mut min = train.row(0).to_vec();
    let mut max = min.clone();
    for r in 1..train.rows() {
        for (c, &v) in train.row(r).iter().enumerate() {
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(ScalerState { min, max })
}

/// `(v − min) / (max − min)` clamped to `[0, 1]`; constant features map to 0.
pub fn apply_scaler(x: &Tensor2, state: &ScalerState) -> Result<Tensor2> {
    if x.cols() != state.min.len() {
        return Err(Error::Validation(format!(
            "scaler fitted on {} features, got {}",
            state.min.len(),
            x.cols()
        )));
    }
    let mut out = x.clone();
    let cols = x.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % cols;
        let span = state.max[c] - state.min[c];
        *v = if span > 0.0 {
            ((*v - state.min[c]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    Ok(out)
}

/// A min-max scaler that must be fitted before use.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    state: Option<ScalerState>,
}

impl Scaler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fitted(state: ScalerState) -> Self {
        Self { state: Some(state) }
    }

    pub fn fit(&mut self, train: &Tensor2) -> Result<()> {
        self.state = Some(fit_scaler(train)?);
        Ok(())
    }

    pub fn state(&self) -> Option<&ScalerState> {
        self.state.as_ref()
    }

    pub fn transform(&self, x: &Tensor2) -> Result<Tensor2> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Usage("scaler applied before fitting".into()))?;
        apply_scaler(x, state)
    }
}

/// Indices of a class-balanced subset: every minority row plus an equally
/// large seeded sample of majority rows, in ascending order.
pub fn downsample(labels: &[u8], seed: u64) -> Result<Vec<usize>> {
    if let Some(bad) = labels.iter().find(|l| **l > 1) {
        return Err(Error::Validation(format!("label {bad} is not 0 or 1")));
    }
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Validation("down-sampling needs both classes".into()));
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = SeedStream::new(seed).rng("downsample");
    let mut out = minority;
    out.extend(sample(&mut rng, majority.len(), out.len()).into_iter().map(|i| majority[i]));
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Rows at or before `train_end` train, rows at or after `test_start` test.
pub fn split_by_period(quarters: &[Quarter], train_end: Quarter, test_start: Quarter) -> Result<PeriodSplit> {
    if train_end >= test_start {
        return Err(Error::Validation(format!(
            "train_end {train_end} must precede test_start {test_start}"
        )));
    }
    let mut s = PeriodSplit::default();
    for (i, q) in quarters.iter().enumerate() {
        if *q <= train_end {
            s.train.push(i);
        } else if *q >= test_start {
            s.test.push(i);
        }
    }
    if s.train.is_empty() {
        s.warnings.push(format!("no rows at or before {train_end}"));
    }
    if s.test.is_empty() {
        s.warnings.push(format!("no rows at or after {test_start}"));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scaler_contracts() {
        let train = Tensor2::from_rows(&[[2.0, 7.0], [4.0, 7.0]]).unwrap();
        let mut s = Scaler::new();
        let test = Tensor2::from_rows(&[[3.0, 7.0], [10.0, 1.0], [-5.0, 9.0]]).unwrap();
        assert!(matches!(s.transform(&test), Err(Error::Usage(_))));
        s.fit(&train).unwrap();
        let out = s.transform(&test).unwrap();
        assert_eq!(out.row(0), &[0.5, 0.0]);
        assert_eq!(out.row(1), &[1.0, 0.0]);
        assert_eq!(out.row(2), &[0.0, 0.0]);
        assert!(s.transform(&Tensor2::zeros(1, 3)).is_err());
    }

    #[test]
    fn downsample_contracts() {
        let mut labels = vec![0u8; 100];
        labels.extend([1u8; 10]);
        let idx = downsample(&labels, 7).unwrap();
        assert_eq!(idx.len(), 20);
        assert_eq!(idx.iter().filter(|&&i| labels[i] == 1).count(), 10);
        assert_eq!(downsample(&labels, 7).unwrap(), idx);
        assert_ne!(downsample(&labels, 8).unwrap(), idx);

        let balanced = [0, 1, 1, 0];
        assert_eq!(downsample(&balanced, 1).unwrap(), [0, 1, 2, 3]);
        assert!(downsample(&[0, 0], 1).is_err());
        assert!(downsample(&[], 1).is_err());
    }

    #[test]
    fn period_split_boundaries() {
        let qs: Vec<Quarter> = ["2016Q4", "2017Q1", "2016Q3", "2018Q2"].iter().map(|s| s.parse().unwrap()).collect();
        let s = split_by_period(&qs, qs[0], qs[1]).unwrap();
        assert_eq!(s.train, [0, 2]);
        assert_eq!(s.test, [1, 3]);
        assert!(s.warnings.is_empty());
        assert!(split_by_period(&qs, qs[1], qs[0]).is_err());
        let late = split_by_period(&qs, "2020Q1".parse().unwrap(), "2020Q2".parse().unwrap()).unwrap();
        assert_eq!(late.warnings.len(), 1);
    }

    proptest! {
        #[test]
        fn scaled_values_stay_in_unit_interval(
            train in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..20),
            test in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 4), 1..20),
        ) {
            let st = fit_scaler(&Tensor2::from_rows(&train).unwrap()).unwrap();
            prop_assert!(st.min.iter().zip(&st.max).all(|(a, b)| a <= b));
            let out = apply_scaler(&Tensor2::from_rows(&test).unwrap(), &st).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn downsample_balances_exactly(labels in prop::collection::vec(0u8..=1, 2..200), seed in 0u64..1000) {
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let idx = downsample(&labels, seed).unwrap();
            let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
            prop_assert_eq!(pos * 2, idx.len());
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn period_split_never_leaks(idx in prop::collection::vec(8000i64..8100, 0..50), a in 8000i64..8100, gap in 1i64..8) {
            let qs: Vec<Quarter> = idx.iter().map(|i| Quarter::from_index(*i).unwrap()).collect();
            let te = Quarter::from_index(a).unwrap();
            let s = split_by_period(&qs, te, te.plus(gap)).unwrap();
            for &i in &s.train {
                for &j in &s.test {
                    prop_assert!(qs[i] < qs[j]);
                }
            }
            prop_assert!(s.train.iter().all(|i| !s.test.contains(i)));
        }
    }
}
