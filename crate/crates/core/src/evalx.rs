//! Rank-based classifier metrics: AUC, H-measure and the KS statistic.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::{Error, Result};

/// Scores in `[0, 1]` aligned with `{0, 1}` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!("score {s} outside [0, 1]")));
        }
        if let Some(l) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Validation(format!("label {l} is not 0 or 1")));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|l| **l == 1).count()
    }

    fn class_counts(&self) -> Result<(u64, u64)> {
        let n1 = self.n_pos() as u64;
        let n0 = self.len() as u64 - n1;
        if n1 == 0 || n0 == 0 {
            return Err(Error::UndefinedMetric("both classes must be present".into()));
        }
        Ok((n1, n0))
    }

    /// Per distinct score, ascending: `(negatives, positives)` at that score.
    fn tie_groups(&self) -> Vec<(u64, u64)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[a].total_cmp(&self.scores[b]));
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut last = None;
        for i in order {
            let s = self.scores[i];
            if last != Some(s) {
                groups.push((0, 0));
                last = Some(s);
            }
            let g = groups.last_mut().expect("pushed");
            if self.labels[i] == 1 {
                g.1 += 1;
            } else {
                g.0 += 1;
            }
        }
        groups
    }
}

/// `(concordant + ½·tied) / (n₁·n₀)`, counted exactly in integers.
pub fn auc(sv: &ScoreVector) -> Result<f64> {
    let (n1, n0) = sv.class_counts()?;
    let mut twice: u128 = 0;
    let mut neg_below: u64 = 0;
    for (neg, pos) in sv.tie_groups() {
        twice += pos as u128 * (2 * neg_below as u128 + neg as u128);
        neg_below += neg;
    }
    Ok(twice as f64 / (2 * n1 as u128 * n0 as u128) as f64)
}

/// Largest gap between the class-conditional score CDFs, evaluated at every
/// distinct score.
pub fn ks(sv: &ScoreVector) -> Result<f64> {
    let (n1, n0) = sv.class_counts()?;
    let (mut c0, mut c1) = (0u64, 0u64);
    let mut best: f64 = 0.0;
    for (neg, pos) in sv.tie_groups() {
        c0 += neg;
        c1 += pos;
        best = best.max((c1 as f64 / n1 as f64 - c0 as f64 / n0 as f64).abs());
    }
    Ok(best)
}

/// Misclassification-loss line `α + β·c` for one threshold.
#[derive(Debug, Clone, Copy)]
struct Line {
    alpha: f64,
    beta: f64,
}

/// Loss lines for every threshold, by decreasing slope. With cost `c` on
/// false positives, `L(c) = c·π₀·(1 − F₀(t)) + (1 − c)·π₁·F₁(t)`.
fn loss_lines(sv: &ScoreVector) -> Result<Vec<Line>> {
    let (n1, n0) = sv.class_counts()?;
    let n = (n1 + n0) as f64;
    let (pi0, pi1) = (n0 as f64 / n, n1 as f64 / n);
    let line = |c0: u64, c1: u64| {
        let f0 = c0 as f64 / n0 as f64;
        let f1 = c1 as f64 / n1 as f64;
        Line {
            alpha: pi1 * f1,
            beta: pi0 * (1.0 - f0) - pi1 * f1,
        }
    };
    let mut lines = vec![line(0, 0)];
    let (mut c0, mut c1) = (0u64, 0u64);
    for (neg, pos) in sv.tie_groups() {
        c0 += neg;
        c1 += pos;
        lines.push(line(c0, c1));
    }
    Ok(lines)
}

/// Lower envelope of lines sorted by strictly decreasing slope.
fn lower_envelope(lines: &[Line]) -> Vec<Line> {
    let mut hull: Vec<Line> = Vec::with_capacity(lines.len());
    for &l in lines {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // b is useless when l overtakes a no later than b does.
            if (l.alpha - a.alpha) * (a.beta - b.beta) <= (b.alpha - a.alpha) * (a.beta - l.beta) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(l);
    }
    hull
}

/// `∫_lo^hi (α + β·c)·Beta(c; a, b) dc`.
fn integrate_line(l: Line, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    let cdf = |x: f64, p: f64, q: f64| beta_reg(p, q, x.clamp(0.0, 1.0));
    let mass = cdf(hi, a, b) - cdf(lo, a, b);
    let first = a / (a + b) * (cdf(hi, a + 1.0, b) - cdf(lo, a + 1.0, b));
    l.alpha * mass + l.beta * first
}

fn integrate_envelope(lines: &[Line], a: f64, b: f64) -> f64 {
    let hull = lower_envelope(lines);
    let mut total = 0.0;
    let mut lo = 0.0;
    for i in 0..hull.len() {
        let hi = if i + 1 < hull.len() {
            let (p, q) = (hull[i], hull[i + 1]);
            ((q.alpha - p.alpha) / (p.beta - q.beta)).clamp(lo, 1.0)
        } else {
            1.0
        };
        if hi > lo {
            total += integrate_line(hull[i], lo, hi, a, b);
        }
        lo = hi;
    }
    total
}

/// H-measure with a `Beta(a, b)` distribution over the normalised cost.
///
/// The minimum expected loss over thresholds is integrated exactly along
/// the lower envelope of the per-threshold loss lines (the ROC convex hull)
/// and normalised by the loss of the better trivial classifier.
pub fn h_measure(sv: &ScoreVector, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Validation(format!("Beta parameters ({a}, {b}) must be positive")));
    }
    let lines = loss_lines(sv)?;
    let trivial = [lines[0], *lines.last().expect("two lines at least")];
    let l = integrate_envelope(&lines, a, b);
    let lmax = integrate_envelope(&trivial, a, b);
    Ok((1.0 - l / lmax).clamp(0.0, 1.0))
}

/// Default severity distribution for [`h_measure`].
pub const H_BETA: (f64, f64) = (2.0, 2.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub h_measure: f64,
    pub ks: f64,
    pub n: usize,
    pub n_pos: usize,
}

pub fn evaluate(sv: &ScoreVector) -> Result<MetricReport> {
    evaluate_with(sv, H_BETA)
}

pub fn evaluate_with(sv: &ScoreVector, beta: (f64, f64)) -> Result<MetricReport> {
    Ok(MetricReport {
        auc: auc(sv)?,
        h_measure: h_measure(sv, beta.0, beta.1)?,
        ks: ks(sv)?,
        n: sv.len(),
        n_pos: sv.n_pos(),
    })
}

pub fn write_metrics_json<W: Write>(mut w: W, report: &MetricReport) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{sigmoid, SeedStream};
    use rand::Rng as _;
    use statrs::distribution::{Beta, Continuous};

    fn sv(scores: &[f64], labels: &[u8]) -> ScoreVector {
        ScoreVector::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    fn pairwise_auc(v: &ScoreVector) -> f64 {
        let (mut conc, mut ties, mut n1, mut n0) = (0u64, 0u64, 0u64, 0u64);
        for (i, &li) in v.labels().iter().enumerate() {
            if li == 1 {
                n1 += 1;
            } else {
                n0 += 1;
            }
            if li != 1 {
                continue;
            }
            for (j, &lj) in v.labels().iter().enumerate() {
                if lj == 0 {
                    let (si, sj) = (v.scores()[i], v.scores()[j]);
                    if si > sj {
                        conc += 1;
                    } else if si == sj {
                        ties += 1;
                    }
                }
            }
        }
        (2 * conc + ties) as f64 / (2 * n1 * n0) as f64
    }

    fn brute_ks(v: &ScoreVector) -> f64 {
        let n1 = v.n_pos() as f64;
        let n0 = v.len() as f64 - n1;
        v.scores()
            .iter()
            .map(|&t| {
                let f1 = v.scores().iter().zip(v.labels()).filter(|(s, l)| **l == 1 && **s <= t).count() as f64 / n1;
                let f0 = v.scores().iter().zip(v.labels()).filter(|(s, l)| **l == 0 && **s <= t).count() as f64 / n0;
                (f1 - f0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Midpoint rule on a uniform grid, minimising the loss over every threshold directly.
    fn quadrature_h(v: &ScoreVector, a: f64, b: f64, grid: usize) -> f64 {
        let n = v.len() as f64;
        let n1 = v.n_pos() as f64;
        let n0 = n - n1;
        let (pi0, pi1) = (n0 / n, n1 / n);
        let mut thresholds: Vec<f64> = v.scores().to_vec();
        thresholds.push(-1.0);
        let rates: Vec<(f64, f64)> = thresholds
            .iter()
            .map(|&t| {
                let f1 = v.scores().iter().zip(v.labels()).filter(|(s, l)| **l == 1 && **s <= t).count() as f64 / n1;
                let f0 = v.scores().iter().zip(v.labels()).filter(|(s, l)| **l == 0 && **s <= t).count() as f64 / n0;
                (f0, f1)
            })
            .collect();
        let dist = Beta::new(a, b).unwrap();
        let (mut l, mut lmax) = (0.0, 0.0);
        for i in 0..grid {
            let c = (i as f64 + 0.5) / grid as f64;
            let u = dist.pdf(c) / grid as f64;
            let q = rates
                .iter()
                .map(|(f0, f1)| c * pi0 * (1.0 - f0) + (1.0 - c) * pi1 * f1)
                .fold(f64::INFINITY, f64::min);
            l += q * u;
            lmax += (c * pi0).min((1.0 - c) * pi1) * u;
        }
        1.0 - l / lmax
    }

    fn random_sv(seed: u64, n: usize, tie_levels: Option<u32>) -> ScoreVector {
        let mut rng = SeedStream::new(seed).rng("sv");
        loop {
            let labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
            if !labels.contains(&0) || !labels.contains(&1) {
                continue;
            }
            let scores = labels
                .iter()
                .map(|&l| {
                    let s: f64 = (rng.random::<f64>() + 0.3 * l as f64).min(1.0);
                    match tie_levels {
                        Some(k) => (s * k as f64).round() / k as f64,
                        None => s,
                    }
                })
                .collect();
            return ScoreVector::new(scores, labels).unwrap();
        }
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&sv(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap(), 0.75);
        assert_eq!(auc(&sv(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(auc(&sv(&[0.5; 4], &[0, 1, 0, 1])).unwrap(), 0.5);
        assert!(matches!(auc(&sv(&[0.5, 0.4], &[1, 1])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ks_cases() {
        assert_eq!(ks(&sv(&[0.2, 0.8], &[0, 1])).unwrap(), 1.0);
        assert_eq!(ks(&sv(&[0.3; 5], &[0, 1, 0, 1, 1])).unwrap(), 0.0);
        assert_eq!(ks(&sv(&[0.1, 0.6, 0.4, 0.9], &[0, 0, 1, 1])).unwrap(), 0.5);
        assert!(ks(&sv(&[0.1], &[0])).is_err());
    }

    #[test]
    fn h_measure_cases() {
        assert!((h_measure(&sv(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), 2.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(h_measure(&sv(&[0.4; 6], &[0, 1, 0, 0, 1, 0]), 2.0, 2.0).unwrap().abs() < 1e-12);
        let worked = sv(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        let exact = h_measure(&worked, 2.0, 2.0).unwrap();
        let grid = quadrature_h(&worked, 2.0, 2.0, 100_000);
        assert!((exact - grid).abs() < 1e-4, "{exact} vs {grid}");
        assert!(h_measure(&worked, 0.0, 2.0).is_err());
        assert!(h_measure(&sv(&[0.1], &[1]), 2.0, 2.0).is_err());
    }

    #[test]
    fn h_measure_matches_quadrature_on_random_vectors() {
        for seed in 0..10 {
            let v = random_sv(seed, 60, if seed % 2 == 0 { Some(10) } else { None });
            for (a, b) in [(2.0, 2.0), (1.0, 1.0), (3.0, 1.5)] {
                let exact = h_measure(&v, a, b).unwrap();
                let grid = quadrature_h(&v, a, b, 20_000);
                assert!((exact - grid).abs() < 1e-4, "seed {seed} ({a},{b}): {exact} vs {grid}");
            }
        }
    }

    #[test]
    fn auc_matches_pairwise_and_complements() {
        for seed in 0..100u64 {
            let n = 2 + (seed as usize * 37) % 499;
            let v = random_sv(seed, n, if seed % 3 == 0 { Some(20) } else { None });
            assert_eq!(auc(&v).unwrap(), pairwise_auc(&v), "seed {seed}");
            assert_eq!(ks(&v).unwrap(), brute_ks(&v), "seed {seed}");
            let flipped = ScoreVector::new(v.scores().iter().map(|s| 1.0 - s).collect(), v.labels().to_vec()).unwrap();
            assert_eq!(auc(&v).unwrap() + auc(&flipped).unwrap(), 1.0);
        }
    }

    #[test]
    fn invariant_under_increasing_transforms() {
        for seed in 0..100u64 {
            let v = random_sv(seed, 80, if seed % 4 == 0 { Some(8) } else { None });
            let base = evaluate(&v).unwrap();
            for t in [|s: f64| s * s * s, |s: f64| sigmoid(4.0 * s - 2.0)] {
                let w = ScoreVector::new(v.scores().iter().map(|&s| t(s)).collect(), v.labels().to_vec()).unwrap();
                let m = evaluate(&w).unwrap();
                assert!((m.auc - base.auc).abs() <= 1e-12);
                assert!((m.ks - base.ks).abs() <= 1e-12);
                assert!((m.h_measure - base.h_measure).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn score_vector_validation() {
        assert!(ScoreVector::new(vec![0.5], vec![0, 1]).is_err());
        assert!(ScoreVector::new(vec![1.5], vec![0]).is_err());
        assert!(ScoreVector::new(vec![f64::NAN], vec![0]).is_err());
        assert!(ScoreVector::new(vec![0.5], vec![2]).is_err());
    }

    #[test]
    fn metrics_json_fields() {
        let r = evaluate(&sv(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1])).unwrap();
        let mut buf = Vec::new();
        write_metrics_json(&mut buf, &r).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for k in ["auc", "h_measure", "ks", "n", "n_pos"] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert_eq!(v["n_pos"], 2);
    }
}
