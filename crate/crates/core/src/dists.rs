//! Diagonal Gaussian and Bernoulli densities.
//!
//! Every quantity is returned per row (a `batch x 1` tensor) and comes with a
//! `*_backward` function that maps per-row upstream weights to gradients
//! w.r.t. the distribution parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::numcore::{Tensor2, LOG_VAR_CLAMP};
use crate::{Error, Result};

/// Probabilities are kept inside `[PI_FLOOR, 1 - PI_FLOOR]`.
pub const PI_FLOOR: f64 = 1e-7;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian, one distribution per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    mu: Tensor2,
    log_var: Tensor2,
}

impl GaussianParams {
    pub fn new(mu: Tensor2, log_var: Tensor2) -> Result<Self> {
        log_var.expect_shape(mu.shape(), "GaussianParams")?;
        let (lo, hi) = LOG_VAR_CLAMP;
        if let Some(v) = log_var.data().iter().find(|v| !(lo..=hi).contains(*v)) {
            return Err(Error::Validation(format!(
                "log-variance {v} outside [{lo}, {hi}]"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::NonFinite("Gaussian mean".into()));
        }
        Ok(Self { mu, log_var })
    }

    pub fn standard(rows: usize, dim: usize) -> Self {
        Self {
            mu: Tensor2::zeros(rows, dim),
            log_var: Tensor2::zeros(rows, dim),
        }
    }

    pub fn mu(&self) -> &Tensor2 {
        &self.mu
    }

    pub fn log_var(&self) -> &Tensor2 {
        &self.log_var
    }

    pub fn var(&self) -> Tensor2 {
        self.log_var.map(f64::exp)
    }

    pub fn rows(&self) -> usize {
        self.mu.rows()
    }

    pub fn dim(&self) -> usize {
        self.mu.cols()
    }

    pub fn into_parts(self) -> (Tensor2, Tensor2) {
        (self.mu, self.log_var)
    }
}

/// Gradient w.r.t. the parameters of one [`GaussianParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrad {
    pub d_mu: Tensor2,
    pub d_log_var: Tensor2,
}

impl GaussianGrad {
    pub fn zeros_like(p: &GaussianParams) -> Self {
        Self {
            d_mu: Tensor2::zeros(p.rows(), p.dim()),
            d_log_var: Tensor2::zeros(p.rows(), p.dim()),
        }
    }

    pub fn add_assign(&mut self, other: &GaussianGrad) -> Result<()> {
        self.d_mu.add_assign(&other.d_mu)?;
        self.d_log_var.add_assign(&other.d_log_var)
    }
}

/// Bernoulli success probabilities, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliParams {
    pi: Tensor2,
}

impl BernoulliParams {
    pub fn new(pi: Tensor2) -> Result<Self> {
        if pi.cols() != 1 {
            return Err(Error::dim("BernoulliParams", format!("{} columns", pi.cols())));
        }
        if let Some(v) = pi.data().iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Validation(format!("probability {v} outside (0, 1)")));
        }
        Ok(Self { pi })
    }

    /// Floors/ceils every probability into `[1e-7, 1 - 1e-7]`.
    pub fn clamped(pi: Tensor2) -> Result<Self> {
        Self::new(pi.map(|v| v.clamp(PI_FLOOR, 1.0 - PI_FLOOR)))
    }

    pub fn pi(&self) -> &Tensor2 {
        &self.pi
    }
}

/// A batch of latent codes `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    pub z: Tensor2,
}

impl Representation {
    pub fn dim(&self) -> usize {
        self.z.cols()
    }
}

/// A location-scale draw together with the noise that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSample {
    pub z: Representation,
    pub eps: Tensor2,
}

/// `z = μ + σ ⊙ ε` with `ε ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(p: &GaussianParams, rng: &mut R) -> GaussianSample {
    let eps_data = (0..p.rows() * p.dim())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let eps = Tensor2::from_vec(p.rows(), p.dim(), eps_data).expect("shape");
    sample_gaussian_with_noise(p, eps).expect("shape")
}

pub fn sample_gaussian_with_noise(p: &GaussianParams, eps: Tensor2) -> Result<GaussianSample> {
    eps.expect_shape(p.mu.shape(), "sample_gaussian noise")?;
    let mut z = p.mu.clone();
    for ((zv, lv), e) in z.data_mut().iter_mut().zip(p.log_var.data()).zip(eps.data()) {
        *zv += (0.5 * lv).exp() * e;
    }
    Ok(GaussianSample {
        z: Representation { z },
        eps,
    })
}

/// Pulls `∂L/∂z` back to `μ` and `log σ²` through the stored noise.
pub fn sample_gaussian_backward(
    p: &GaussianParams,
    sample: &GaussianSample,
    d_z: &Tensor2,
) -> Result<GaussianGrad> {
    d_z.expect_shape(p.mu.shape(), "sample_gaussian_backward")?;
    let mut d_log_var = d_z.clone();
    for ((d, lv), e) in d_log_var
        .data_mut()
        .iter_mut()
        .zip(p.log_var.data())
        .zip(sample.eps.data())
    {
        *d *= 0.5 * (0.5 * lv).exp() * e;
    }
    Ok(GaussianGrad {
        d_mu: d_z.clone(),
        d_log_var,
    })
}

fn per_row(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Tensor2 {
    let data = (0..rows).map(|r| (0..cols).map(|c| f(r, c)).sum()).collect();
    Tensor2::from_vec(rows, 1, data).expect("shape")
}

fn check_upstream(upstream: &[f64], rows: usize, context: &str) -> Result<()> {
    if upstream.len() != rows {
        return Err(Error::dim(
            context,
            format!("{} upstream weights for {rows} rows", upstream.len()),
        ));
    }
    Ok(())
}

/// `KL[N(μ, σ²) ‖ N(0, I)] = −½ Σ_j (1 + log σ²_j − μ²_j − σ²_j)`.
pub fn kl_to_standard_normal(p: &GaussianParams) -> Tensor2 {
    per_row(p.rows(), p.dim(), |r, c| {
        let mu = p.mu.get(r, c);
        let lv = p.log_var.get(r, c);
        -0.5 * (1.0 + lv - mu * mu - lv.exp())
    })
}

pub fn kl_to_standard_normal_backward(p: &GaussianParams, upstream: &[f64]) -> Result<GaussianGrad> {
    check_upstream(upstream, p.rows(), "kl_to_standard_normal_backward")?;
    let mut g = GaussianGrad::zeros_like(p);
    for r in 0..p.rows() {
        for c in 0..p.dim() {
            g.d_mu.set(r, c, upstream[r] * p.mu.get(r, c));
            g.d_log_var
                .set(r, c, upstream[r] * 0.5 * (p.log_var.get(r, c).exp() - 1.0));
        }
    }
    Ok(g)
}

/// `KL[q ‖ p]` between diagonal Gaussians, per row.
pub fn kl_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<Tensor2> {
    q.mu.expect_shape(p.mu.shape(), "kl_gaussians")?;
    Ok(per_row(q.rows(), q.dim(), |r, c| {
        let (mq, lq) = (q.mu.get(r, c), q.log_var.get(r, c));
        let (mp, lp) = (p.mu.get(r, c), p.log_var.get(r, c));
        let diff = mq - mp;
        0.5 * (lp - lq) + (lq.exp() + diff * diff) / (2.0 * lp.exp()) - 0.5
    }))
}

/// Gradients of `Σ_r upstream[r] · KL_r[q ‖ p]` w.r.t. `q` and `p`.
pub fn kl_gaussians_backward(
    q: &GaussianParams,
    p: &GaussianParams,
    upstream: &[f64],
) -> Result<(GaussianGrad, GaussianGrad)> {
    q.mu.expect_shape(p.mu.shape(), "kl_gaussians_backward")?;
    check_upstream(upstream, q.rows(), "kl_gaussians_backward")?;
    let mut gq = GaussianGrad::zeros_like(q);
    let mut gp = GaussianGrad::zeros_like(p);
    for r in 0..q.rows() {
        let u = upstream[r];
        for c in 0..q.dim() {
            let (mq, lq) = (q.mu.get(r, c), q.log_var.get(r, c));
            let (mp, lp) = (p.mu.get(r, c), p.log_var.get(r, c));
            let var_p = lp.exp();
            let var_q = lq.exp();
            let diff = mq - mp;
            gq.d_mu.set(r, c, u * diff / var_p);
            gp.d_mu.set(r, c, -u * diff / var_p);
            gq.d_log_var.set(r, c, u * (-0.5 + var_q / (2.0 * var_p)));
            gp.d_log_var
                .set(r, c, u * (0.5 - (var_q + diff * diff) / (2.0 * var_p)));
        }
    }
    Ok((gq, gp))
}

/// `Σ_j [−½ ln 2π − ½ log σ²_j − (x_j − μ_j)² / (2σ²_j)]`, per row.
pub fn gaussian_log_pdf(x: &Tensor2, p: &GaussianParams) -> Result<Tensor2> {
    x.expect_shape(p.mu.shape(), "gaussian_log_pdf")?;
    Ok(per_row(p.rows(), p.dim(), |r, c| {
        let d = x.get(r, c) - p.mu.get(r, c);
        let lv = p.log_var.get(r, c);
        -HALF_LN_2PI - 0.5 * lv - d * d / (2.0 * lv.exp())
    }))
}

pub fn gaussian_log_pdf_backward(
    x: &Tensor2,
    p: &GaussianParams,
    upstream: &[f64],
) -> Result<GaussianGrad> {
    x.expect_shape(p.mu.shape(), "gaussian_log_pdf_backward")?;
    check_upstream(upstream, p.rows(), "gaussian_log_pdf_backward")?;
    let mut g = GaussianGrad::zeros_like(p);
    for r in 0..p.rows() {
        for c in 0..p.dim() {
            let d = x.get(r, c) - p.mu.get(r, c);
            let var = p.log_var.get(r, c).exp();
            g.d_mu.set(r, c, upstream[r] * d / var);
            g.d_log_var
                .set(r, c, upstream[r] * (-0.5 + d * d / (2.0 * var)));
        }
    }
    Ok(g)
}

fn check_labels(y: &Tensor2, p: &BernoulliParams) -> Result<()> {
    y.expect_shape(p.pi.shape(), "bernoulli_log_pmf")?;
    if let Some(v) = y.data().iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::Validation(format!("label {v} is not 0 or 1")));
    }
    Ok(())
}

/// `y ln π + (1 − y) ln(1 − π)`, per row.
pub fn bernoulli_log_pmf(y: &Tensor2, p: &BernoulliParams) -> Result<Tensor2> {
    check_labels(y, p)?;
    let data = y
        .data()
        .iter()
        .zip(p.pi.data())
        .map(|(&y, &pi)| if y == 1.0 { pi.ln() } else { (-pi).ln_1p() })
        .collect();
    Tensor2::from_vec(y.rows(), 1, data)
}

/// Gradient w.r.t. `π`.
pub fn bernoulli_log_pmf_backward(
    y: &Tensor2,
    p: &BernoulliParams,
    upstream: &[f64],
) -> Result<Tensor2> {
    check_labels(y, p)?;
    check_upstream(upstream, y.rows(), "bernoulli_log_pmf_backward")?;
    let data = y
        .data()
        .iter()
        .zip(p.pi.data())
        .zip(upstream)
        .map(|((&y, &pi), &u)| u * (y / pi - (1.0 - y) / (1.0 - pi)))
        .collect();
    Tensor2::from_vec(y.rows(), 1, data)
}
