use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::predictors::N_PREDICTORS;
use super::Quarter;
use crate::numcore::{sigmoid, SeedStream, Tensor2};
use crate::{Error, Result};

/// Parameters of the synthetic multimodal generator.
///
/// Per firm-quarter a latent `z* ~ N(0, I_k)` drives
///
/// - `xo = sigmoid(A z* + c + ε₁)`, each column loading on one or two latent
///   coordinates,
/// - `xm = normalize(top_density(relu(B z* + ε₂)))`,
/// - `y ~ Bernoulli(sigmoid(w·z* + bias))`, optionally flipped with
///   probability `label_noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_firms: usize,
    pub quarters_per_firm: usize,
    pub latent_k: usize,
    pub xo_dim: usize,
    pub xm_dim: usize,
    pub label_noise: f64,
    pub seed: u64,
    pub start_quarter: Quarter,
    pub bias: f64,
    /// Euclidean norm of `w`.
    pub label_scale: f64,
    /// Loading magnitude of `A`.
    pub xo_scale: f64,
    /// Standard deviation of the per-column offsets `c`.
    pub xo_offset: f64,
    pub xo_noise: f64,
    pub xm_noise: f64,
    /// Fraction of xm entries kept per row.
    pub xm_density: f64,
    /// Probability that a row has no text.
    pub xm_missing_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_firms: 200,
            quarters_per_firm: 8,
            latent_k: 8,
            xo_dim: N_PREDICTORS,
            xm_dim: 500,
            label_noise: 0.0,
            seed: 0,
            start_quarter: Quarter::new(2000, 1).expect("valid"),
            bias: -2.0,
            label_scale: 1.0,
            xo_scale: 1.0,
            xo_offset: 1.0,
            xo_noise: 0.5,
            xm_noise: 0.1,
            xm_density: 0.02,
            xm_missing_rate: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_firms == 0 || self.quarters_per_firm == 0 || self.latent_k == 0 || self.xo_dim == 0 || self.xm_dim == 0 {
            return Err(Error::Validation("synthetic sizes must be at least 1".into()));
        }
        for (name, p) in [
            ("label_noise", self.label_noise),
            ("xm_missing_rate", self.xm_missing_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(self.xm_density > 0.0 && self.xm_density <= 1.0) {
            return Err(Error::Validation(format!("xm_density {} outside (0, 1]", self.xm_density)));
        }
        Ok(())
    }
}

/// Seeded generator parameters, kept so oracles can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCoefficients {
    /// `xo_dim x k` loadings.
    pub a: Tensor2,
    pub offsets: Vec<f64>,
    /// `xm_dim x k` loadings.
    pub b: Tensor2,
    pub w: Vec<f64>,
    pub bias: f64,
}

/// Generated rows plus the ground truth behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub firm_ids: Vec<String>,
    pub quarters: Vec<Quarter>,
    pub sic_divisions: Vec<u8>,
    pub xo: Tensor2,
    pub xm: Tensor2,
    pub has_xm: Vec<bool>,
    pub y: Vec<u8>,
    pub z_star: Tensor2,
    /// `sigmoid(w·z* + bias)`, the Bayes-optimal score before label noise.
    pub p_true: Vec<f64>,
    pub coefficients: SynthCoefficients,
}

impl SynthData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

fn normal(rng: &mut impl rand::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut impl rand::Rng) -> Tensor2 {
    Tensor2::from_vec(rows, cols, (0..rows * cols).map(|_| normal(rng)).collect()).expect("sized")
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let stream = SeedStream::new(cfg.seed).child("synth");
    let k = cfg.latent_k;

    let mut prng = stream.rng("params");
    // Column j of xo loads on latent j mod k and, every other column, on one more.
    let mut a = Tensor2::zeros(cfg.xo_dim, k);
    for j in 0..cfg.xo_dim {
        let sign = if prng.random_bool(0.5) { 1.0 } else { -1.0 };
        a.set(j, j % k, sign * cfg.xo_scale);
        if j % 2 == 1 && k > 1 {
            let other = (j % k + 1 + prng.random_range(0..k - 1)) % k;
            a.set(j, other, 0.5 * cfg.xo_scale * normal(&mut prng));
        }
    }
    let offsets: Vec<f64> = (0..cfg.xo_dim).map(|_| cfg.xo_offset * normal(&mut prng)).collect();
    let b = normal_matrix(cfg.xm_dim, k, &mut prng);
    let mut w: Vec<f64> = (0..k).map(|_| normal(&mut prng)).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v *= cfg.label_scale / norm);
    let divisions: Vec<u8> = (0..cfg.n_firms).map(|_| prng.random_range(1..=10)).collect();

    let n = cfg.n_firms * cfg.quarters_per_firm;
    let mut zr = stream.rng("latent");
    let z_star = normal_matrix(n, k, &mut zr);

    let mut nr = stream.rng("noise");
    let mut xo = z_star.matmul_t(&a)?;
    for r in 0..n {
        for (v, c) in xo.row_mut(r).iter_mut().zip(&offsets) {
            *v = sigmoid(*v + c + cfg.xo_noise * normal(&mut nr));
        }
    }

    let keep = ((cfg.xm_density * cfg.xm_dim as f64).round() as usize).clamp(1, cfg.xm_dim);
    let mut xm = z_star.matmul_t(&b)?;
    let mut mr = stream.rng("missing");
    let mut has_xm = Vec::with_capacity(n);
    for r in 0..n {
        let row = xm.row_mut(r);
        for v in row.iter_mut() {
            *v = (*v + cfg.xm_noise * normal(&mut nr)).max(0.0);
        }
        let mut order: Vec<usize> = (0..row.len()).collect();
        order.sort_by(|&i, &j| row[j].total_cmp(&row[i]).then(i.cmp(&j)));
        for &i in &order[keep..] {
            row[i] = 0.0;
        }
        let present = !mr.random_bool(cfg.xm_missing_rate);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in row.iter_mut() {
            *v = if present && norm > 0.0 { *v / norm } else { 0.0 };
        }
        has_xm.push(present);
    }

    let mut lr = stream.rng("labels");
    let mut p_true = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for r in 0..n {
        let p = sigmoid(z_star.row(r).iter().zip(&w).map(|(z, w)| z * w).sum::<f64>() + cfg.bias);
        let mut label = lr.random_bool(p);
        if cfg.label_noise > 0.0 && lr.random_bool(cfg.label_noise) {
            label = !label;
        }
        p_true.push(p);
        y.push(label as u8);
    }

    let mut firm_ids = Vec::with_capacity(n);
    let mut quarters = Vec::with_capacity(n);
    let mut sic_divisions = Vec::with_capacity(n);
    for f in 0..cfg.n_firms {
        for t in 0..cfg.quarters_per_firm {
            firm_ids.push(format!("F{f:05}"));
            quarters.push(cfg.start_quarter.plus(t as i64));
            sic_divisions.push(divisions[f]);
        }
    }
    Ok(SynthData {
        firm_ids,
        quarters,
        sic_divisions,
        xo,
        xm,
        has_xm,
        y,
        z_star,
        p_true,
        coefficients: SynthCoefficients {
            a,
            offsets,
            b,
            w,
            bias: cfg.bias,
        },
    })
}
