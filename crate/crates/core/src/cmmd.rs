//! The conditional multimodal discriminative model.
//!
//! Five networks share one [`ParamStore`]:
//!
//! | network            | density          | input            | side |
//! |--------------------|------------------|------------------|------|
//! | `phi.encoder`      | `q(z|xo,xm,y)`   | `[xo, xm, y]`    | φ    |
//! | `phi.aux`          | `q(z|xo)`        | `xo`             | φ    |
//! | `theta.prior`      | `p(z|xo)`        | `xo`             | θ    |
//! | `theta.decoder`    | `p(xm|xo,z)`     | `[xo, z]`        | θ    |
//! | `theta.classifier` | `p(y|z)`         | `z`              | θ    |
//!
//! During training the decoder reads `z ~ q(z|xo,xm,y)` while the classifier
//! always reads `z ~ p(z|xo)`. At test time only `xo` is needed.
//!
//! The minimised objective is the negated weighted bound:
//!
//! ```text
//! total = −E[log p(xm|xo,z)] − E[log p(y|z)]
//!         + ω·KL[q(z|xo,xm,y) ‖ p(z|xo)] + (1−ω)·KL[q(z|xo) ‖ p(z|xo)]
//! ```
//!
//! with every term averaged over the batch.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dists::{
    bernoulli_log_pmf, bernoulli_log_pmf_backward, gaussian_log_pdf, gaussian_log_pdf_backward,
    kl_gaussians, kl_gaussians_backward, sample_gaussian, sample_gaussian_backward,
    BernoulliParams, GaussianGrad, GaussianParams, GaussianSample, Representation, PI_FLOOR,
};
use crate::numcore::{
    adam_step, mlp_backward, mlp_forward, Activation, AdamSettings, HeadSpec, MlpSpec, ParamStore,
    Rng, SeedStream, Tape, Tensor2, LOG_VAR_CLAMP,
};
use crate::panel::Batch;
use crate::{Error, Result};

pub const ENCODER: &str = "phi.encoder";
pub const AUX: &str = "phi.aux";
pub const PRIOR: &str = "theta.prior";
pub const DECODER: &str = "theta.decoder";
pub const CLASSIFIER: &str = "theta.classifier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmmdConfig {
    pub xo_dim: usize,
    pub xm_dim: usize,
    pub latent_dim: usize,
    pub encoder_layers: Vec<usize>,
    pub prior_layers: Vec<usize>,
    pub decoder_layers: Vec<usize>,
    pub classifier_layers: Vec<usize>,
    pub hidden_activation: Activation,
    /// Applied to encoder, auxiliary, prior and decoder hidden layers.
    pub dropout: f64,
    pub omega: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Prior draws averaged per prediction.
    pub n_samples: usize,
}

impl Default for CmmdConfig {
    fn default() -> Self {
        Self {
            xo_dim: 33,
            xm_dim: 20_000,
            latent_dim: 50,
            encoder_layers: vec![100, 100, 100],
            prior_layers: vec![100, 100, 100],
            decoder_layers: vec![100, 100, 100],
            classifier_layers: vec![150, 150],
            hidden_activation: Activation::Relu,
            dropout: 0.1,
            omega: 0.75,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            n_samples: 10,
        }
    }
}

impl CmmdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(0.0..=1.0).contains(&self.omega) {
            return bad(format!("omega {} outside [0, 1]", self.omega));
        }
        if self.latent_dim == 0 || self.xo_dim == 0 || self.xm_dim == 0 {
            return bad("xo_dim, xm_dim and latent_dim must be positive".into());
        }
        if self.batch_size == 0 || self.n_samples == 0 {
            return bad("batch_size and n_samples must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr >= 0.0) || !(self.eps > 0.0) {
            return bad("lr must be >= 0 and eps > 0".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamSettings {
        AdamSettings {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    fn gaussian_net(&self, name: &str, input: usize, hidden: &[usize], out: usize) -> MlpSpec {
        let (lo, hi) = LOG_VAR_CLAMP;
        MlpSpec {
            name: name.into(),
            layer_sizes: std::iter::once(input).chain(hidden.iter().copied()).collect(),
            hidden_activation: self.hidden_activation,
            output_heads: vec![
                HeadSpec::new("mu", out, Activation::Identity),
                HeadSpec::new("log_var", out, Activation::Identity).clamped(lo, hi),
            ],
            dropout_rate: self.dropout,
        }
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        self.gaussian_net(
            ENCODER,
            self.xo_dim + self.xm_dim + 1,
            &self.encoder_layers,
            self.latent_dim,
        )
    }

    pub fn aux_spec(&self) -> MlpSpec {
        self.gaussian_net(AUX, self.xo_dim, &self.prior_layers, self.latent_dim)
    }

    pub fn prior_spec(&self) -> MlpSpec {
        self.gaussian_net(PRIOR, self.xo_dim, &self.prior_layers, self.latent_dim)
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        self.gaussian_net(
            DECODER,
            self.xo_dim + self.latent_dim,
            &self.decoder_layers,
            self.xm_dim,
        )
    }

    pub fn classifier_spec(&self) -> MlpSpec {
        MlpSpec {
            name: CLASSIFIER.into(),
            layer_sizes: std::iter::once(self.latent_dim)
                .chain(self.classifier_layers.iter().copied())
                .collect(),
            hidden_activation: self.hidden_activation,
            output_heads: vec![HeadSpec::new("pi", 1, Activation::Sigmoid)
                .clamped(PI_FLOOR, 1.0 - PI_FLOOR)],
            dropout_rate: 0.0,
        }
    }

    fn specs(&self) -> [MlpSpec; 5] {
        [
            self.encoder_spec(),
            self.aux_spec(),
            self.prior_spec(),
            self.decoder_spec(),
            self.classifier_spec(),
        ]
    }
}

/// Per-batch means of the objective's terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon_xm: f64,
    pub class_ll: f64,
    pub kl_post_prior: f64,
    pub kl_aux_prior: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn from_terms(recon_xm: f64, class_ll: f64, kl_post_prior: f64, kl_aux_prior: f64, omega: f64) -> Self {
        Self {
            recon_xm,
            class_ll,
            kl_post_prior,
            kl_aux_prior,
            total: -recon_xm - class_ll + omega * kl_post_prior + (1.0 - omega) * kl_aux_prior,
        }
    }

    /// `|total − (−recon − class + ω·kl_pp + (1−ω)·kl_ap)|`.
    pub fn identity_residual(&self, omega: f64) -> f64 {
        let rebuilt = -self.recon_xm - self.class_ll
            + omega * self.kl_post_prior
            + (1.0 - omega) * self.kl_aux_prior;
        (self.total - rebuilt).abs()
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("recon_xm", self.recon_xm),
            ("class_ll", self.class_ll),
            ("kl_post_prior", self.kl_post_prior),
            ("kl_aux_prior", self.kl_aux_prior),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss component {name}")));
            }
        }
        Ok(())
    }

    fn mean_of(items: &[LossBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            recon_xm: sum(|b| b.recon_xm),
            class_ll: sum(|b| b.class_ll),
            kl_post_prior: sum(|b| b.kl_post_prior),
            kl_aux_prior: sum(|b| b.kl_aux_prior),
            total: sum(|b| b.total),
        }
    }
}

/// Loss terms plus the per-row bound estimate from the same forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub breakdown: LossBreakdown,
    /// Batch mean of `log p(xm|xo,z) + log p(y|z) − KL[q ‖ p]`, accumulated
    /// row by row. With `ω = 1` this equals `−total`.
    pub elbo: f64,
}

/// Independent generators for the two stochastic sites of a training step.
#[derive(Debug, Clone)]
pub struct StepRngs {
    pub dropout: Rng,
    pub noise: Rng,
}

impl StepRngs {
    pub fn from_stream(stream: &SeedStream) -> Self {
        Self {
            dropout: stream.rng("dropout"),
            noise: stream.rng("noise"),
        }
    }
}

struct NetPass {
    dist: GaussianParams,
    tape: Tape,
}

struct ForwardPass {
    post: NetPass,
    prior: NetPass,
    aux: NetPass,
    z_post: GaussianSample,
    z_prior: GaussianSample,
    dec: NetPass,
    pi: BernoulliParams,
    cls_tape: Tape,
    recon: Tensor2,
    class_ll: Tensor2,
    kl_pp: Tensor2,
    kl_ap: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmmdModel {
    config: CmmdConfig,
    params: ParamStore,
}

impl CmmdModel {
    /// Builds a model with Glorot-initialised weights drawn from the
    /// `init/<network>` streams of `config.seed`.
    pub fn new(config: CmmdConfig) -> Result<Self> {
        config.validate()?;
        let init = SeedStream::new(config.seed).child("init");
        let mut params = ParamStore::new();
        for spec in config.specs() {
            spec.init_params(&mut params, &mut init.rng(&spec.name))?;
        }
        Ok(Self { config, params })
    }

    /// Reassembles a model from stored parameters, checking names and shapes.
    pub fn from_parts(config: CmmdConfig, params: ParamStore) -> Result<Self> {
        let reference = Self::new(config.clone())?;
        if reference.params.len() != params.len() {
            return Err(Error::Data(format!(
                "expected {} parameter tensors, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        for ((rn, re), (n, e)) in reference.params.iter().zip(params.iter()) {
            if rn != n || re.value.shape() != e.value.shape() {
                return Err(Error::Data(format!(
                    "parameter {n} {:?} does not match expected {rn} {:?}",
                    e.value.shape(),
                    re.value.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &CmmdConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn check_cols(&self, t: &Tensor2, cols: usize, what: &str) -> Result<()> {
        if t.cols() != cols {
            return Err(Error::Validation(format!(
                "{what} has {} columns, model expects {cols}",
                t.cols()
            )));
        }
        Ok(())
    }

    fn run_gaussian(
        &self,
        spec: &MlpSpec,
        input: &Tensor2,
        train_mode: bool,
        rng: &mut Rng,
    ) -> Result<NetPass> {
        let (mut out, tape) = mlp_forward(spec, &self.params, input, train_mode, rng)?;
        let dist = GaussianParams::new(out.take("mu")?, out.take("log_var")?)?;
        Ok(NetPass { dist, tape })
    }

    fn encoder_input(&self, xo: &Tensor2, xm: &Tensor2, y: &Tensor2) -> Result<Tensor2> {
        self.check_cols(xo, self.config.xo_dim, "xo")?;
        self.check_cols(xm, self.config.xm_dim, "xm")?;
        self.check_cols(y, 1, "y")?;
        if let Some(v) = y.data().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Validation(format!("label {v} is not 0 or 1")));
        }
        Tensor2::hcat(&[xo, xm, y])
    }

    /// `q(z|xo,xm,y)`.
    pub fn encode_posterior(
        &self,
        xo: &Tensor2,
        xm: &Tensor2,
        y: &Tensor2,
        train_mode: bool,
        rng: &mut Rng,
    ) -> Result<GaussianParams> {
        let input = self.encoder_input(xo, xm, y)?;
        Ok(self.run_gaussian(&self.config.encoder_spec(), &input, train_mode, rng)?.dist)
    }

    /// `p(z|xo)`.
    pub fn encode_prior(&self, xo: &Tensor2, train_mode: bool, rng: &mut Rng) -> Result<GaussianParams> {
        self.check_cols(xo, self.config.xo_dim, "xo")?;
        Ok(self.run_gaussian(&self.config.prior_spec(), xo, train_mode, rng)?.dist)
    }

    /// Auxiliary `q(z|xo)`.
    pub fn encode_aux(&self, xo: &Tensor2, train_mode: bool, rng: &mut Rng) -> Result<GaussianParams> {
        self.check_cols(xo, self.config.xo_dim, "xo")?;
        Ok(self.run_gaussian(&self.config.aux_spec(), xo, train_mode, rng)?.dist)
    }

    /// `p(xm|xo,z)`.
    pub fn decode_xm(
        &self,
        xo: &Tensor2,
        z: &Representation,
        train_mode: bool,
        rng: &mut Rng,
    ) -> Result<GaussianParams> {
        self.check_cols(xo, self.config.xo_dim, "xo")?;
        self.check_cols(&z.z, self.config.latent_dim, "z")?;
        let input = Tensor2::hcat(&[xo, &z.z])?;
        Ok(self.run_gaussian(&self.config.decoder_spec(), &input, train_mode, rng)?.dist)
    }

    /// `p(y|z)`; the classifier has no stochastic layers.
    pub fn classify(&self, z: &Representation) -> Result<BernoulliParams> {
        self.check_cols(&z.z, self.config.latent_dim, "z")?;
        let mut unused = SeedStream::new(0).rng("classify");
        let (mut out, _) = mlp_forward(&self.config.classifier_spec(), &self.params, &z.z, false, &mut unused)?;
        BernoulliParams::clamped(out.take("pi")?)
    }

    fn forward(&self, xo: &Tensor2, xm: &Tensor2, y: &Tensor2, rngs: &mut StepRngs) -> Result<ForwardPass> {
        let n = xo.rows();
        if n == 0 || xm.rows() != n || y.rows() != n {
            return Err(Error::Validation(format!(
                "misaligned batch: xo {}, xm {}, y {} rows",
                n,
                xm.rows(),
                y.rows()
            )));
        }
        let cfg = &self.config;
        let enc_in = self.encoder_input(xo, xm, y)?;
        let post = self.run_gaussian(&cfg.encoder_spec(), &enc_in, true, &mut rngs.dropout)?;
        let prior = self.run_gaussian(&cfg.prior_spec(), xo, true, &mut rngs.dropout)?;
        let aux = self.run_gaussian(&cfg.aux_spec(), xo, true, &mut rngs.dropout)?;

        let z_post = sample_gaussian(&post.dist, &mut rngs.noise);
        let z_prior = sample_gaussian(&prior.dist, &mut rngs.noise);

        let dec_in = Tensor2::hcat(&[xo, &z_post.z.z])?;
        let dec = self.run_gaussian(&cfg.decoder_spec(), &dec_in, true, &mut rngs.dropout)?;
        let (mut cls_out, cls_tape) = mlp_forward(
            &cfg.classifier_spec(),
            &self.params,
            &z_prior.z.z,
            true,
            &mut rngs.dropout,
        )?;
        let pi = BernoulliParams::new(cls_out.take("pi")?)?;

        let recon = gaussian_log_pdf(xm, &dec.dist)?;
        let class_ll = bernoulli_log_pmf(y, &pi)?;
        let kl_pp = kl_gaussians(&post.dist, &prior.dist)?;
        let kl_ap = kl_gaussians(&aux.dist, &prior.dist)?;
        Ok(ForwardPass {
            post,
            prior,
            aux,
            z_post,
            z_prior,
            dec,
            pi,
            cls_tape,
            recon,
            class_ll,
            kl_pp,
            kl_ap,
        })
    }

    fn evaluate_pass(&self, pass: &ForwardPass) -> Result<LossEvaluation> {
        let breakdown = LossBreakdown::from_terms(
            pass.recon.mean(),
            pass.class_ll.mean(),
            pass.kl_pp.mean(),
            pass.kl_ap.mean(),
            self.config.omega,
        );
        breakdown.check_finite()?;
        let n = pass.recon.rows();
        let elbo = (0..n)
            .map(|r| pass.recon.get(r, 0) + pass.class_ll.get(r, 0) - pass.kl_pp.get(r, 0))
            .sum::<f64>()
            / n as f64;
        Ok(LossEvaluation { breakdown, elbo })
    }

    /// Training-mode loss on one batch, without gradients.
    pub fn loss(&self, xo: &Tensor2, xm: &Tensor2, y: &Tensor2, rngs: &mut StepRngs) -> Result<LossEvaluation> {
        let pass = self.forward(xo, xm, y, rngs)?;
        self.evaluate_pass(&pass)
    }

    /// Training-mode loss with gradients of `total` accumulated into the
    /// parameter store.
    pub fn loss_and_grad(
        &mut self,
        xo: &Tensor2,
        xm: &Tensor2,
        y: &Tensor2,
        rngs: &mut StepRngs,
    ) -> Result<LossEvaluation> {
        let mut pass = self.forward(xo, xm, y, rngs)?;
        let eval = self.evaluate_pass(&pass)?;
        self.backward(xm, y, &mut pass)?;
        Ok(eval)
    }

    fn backward(&mut self, xm: &Tensor2, y: &Tensor2, pass: &mut ForwardPass) -> Result<()> {
        let n = xm.rows();
        let omega = self.config.omega;
        let xo_dim = self.config.xo_dim;
        let w = |k: f64| vec![k / n as f64; n];

        let mut g_post = GaussianGrad::zeros_like(&pass.post.dist);
        let mut g_prior = GaussianGrad::zeros_like(&pass.prior.dist);

        // −recon: decoder → z_post → posterior.
        let g_dec = gaussian_log_pdf_backward(xm, &pass.dec.dist, &w(-1.0))?;
        let d_dec_in = mlp_backward(
            &mut pass.dec.tape,
            &[("mu", &g_dec.d_mu), ("log_var", &g_dec.d_log_var)],
            &mut self.params,
        )?;
        let d_z_post = d_dec_in.columns(xo_dim, d_dec_in.cols())?;
        g_post.add_assign(&sample_gaussian_backward(&pass.post.dist, &pass.z_post, &d_z_post)?)?;

        // −class: classifier → z_prior → prior.
        let d_pi = bernoulli_log_pmf_backward(y, &pass.pi, &w(-1.0))?;
        let d_z_prior = mlp_backward(&mut pass.cls_tape, &[("pi", &d_pi)], &mut self.params)?;
        g_prior.add_assign(&sample_gaussian_backward(&pass.prior.dist, &pass.z_prior, &d_z_prior)?)?;

        let (gq, gp) = kl_gaussians_backward(&pass.post.dist, &pass.prior.dist, &w(omega))?;
        g_post.add_assign(&gq)?;
        g_prior.add_assign(&gp)?;
        let (g_aux, gp) = kl_gaussians_backward(&pass.aux.dist, &pass.prior.dist, &w(1.0 - omega))?;
        g_prior.add_assign(&gp)?;

        for (net, g) in [
            (&mut pass.post, &g_post),
            (&mut pass.prior, &g_prior),
            (&mut pass.aux, &g_aux),
        ] {
            mlp_backward(
                &mut net.tape,
                &[("mu", &g.d_mu), ("log_var", &g.d_log_var)],
                &mut self.params,
            )?;
        }
        Ok(())
    }

    /// Trains with the model's own config; see [`CmmdModel::train_observed`].
    pub fn train(&mut self, data: &Batch) -> Result<Vec<LossBreakdown>> {
        self.train_observed(data, |_, _, _| {})
    }

    /// Seeded minibatch Adam over `epochs` shuffled passes. `observer` sees
    /// every batch's evaluation (epoch, batch index, evaluation). Returns the
    /// per-epoch means of the batch breakdowns.
    pub fn train_observed<F>(&mut self, data: &Batch, mut observer: F) -> Result<Vec<LossBreakdown>>
    where
        F: FnMut(usize, usize, &LossEvaluation),
    {
        if data.is_empty() {
            return Err(Error::Validation("empty training set".into()));
        }
        let stream = SeedStream::new(self.config.seed).child("train");
        let mut shuffle = stream.rng("shuffle");
        let mut rngs = StepRngs::from_stream(&stream);
        let adam = self.config.adam();
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = Vec::with_capacity(self.config.epochs);

        for epoch in 0..self.config.epochs {
            order.shuffle(&mut shuffle);
            let mut batches = Vec::new();
            for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let mb = data.select(chunk);
                self.params.zero_grad();
                let eval = self.loss_and_grad(&mb.xo, &mb.xm, &mb.y, &mut rngs)?;
                adam_step(&mut self.params, &adam)?;
                observer(epoch, b, &eval);
                batches.push(eval.breakdown);
            }
            history.push(LossBreakdown::mean_of(&batches));
        }
        Ok(history)
    }

    /// Prior parameters `p(z|xo)` in evaluation mode.
    pub fn latent(&self, xo: &Tensor2) -> Result<GaussianParams> {
        let mut unused = SeedStream::new(0).rng("latent");
        self.encode_prior(xo, false, &mut unused)
    }

    /// Bankruptcy probabilities from `xo` alone: `π` averaged over
    /// `n_samples` draws `z ~ p(z|xo)`.
    pub fn predict(&self, xo: &Tensor2, n_samples: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if n_samples == 0 {
            return Err(Error::Validation("n_samples must be at least 1".into()));
        }
        let prior = self.latent(xo)?;
        let mut acc = vec![0.0; xo.rows()];
        for _ in 0..n_samples {
            let z = sample_gaussian(&prior, rng).z;
            let pi = self.classify(&z)?;
            for (a, p) in acc.iter_mut().zip(pi.pi().data()) {
                *a += p;
            }
        }
        Ok(acc.into_iter().map(|a| a / n_samples as f64).collect())
    }

    /// Decoder mean of `p(xm|xo,z)` with `z ~ p(z|xo)`.
    pub fn generate_xm(&self, xo: &Tensor2, rng: &mut Rng) -> Result<Tensor2> {
        let prior = self.latent(xo)?;
        let z = sample_gaussian(&prior, rng).z;
        let mut unused = SeedStream::new(0).rng("generate");
        Ok(self.decode_xm(xo, &z, false, &mut unused)?.into_parts().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GradCheckOptions};
    use rand::Rng as _;

    pub(crate) fn toy_config() -> CmmdConfig {
        CmmdConfig {
            xo_dim: 6,
            xm_dim: 8,
            latent_dim: 4,
            encoder_layers: vec![7],
            prior_layers: vec![5],
            decoder_layers: vec![6],
            classifier_layers: vec![5],
            hidden_activation: Activation::Tanh,
            dropout: 0.0,
            omega: 0.75,
            epochs: 3,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        }
    }

    fn toy_batch(n: usize, seed: u64) -> Batch {
        let mut rng = SeedStream::new(seed).rng("batch");
        let mut gen = |r: usize, c: usize| {
            Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random::<f64>()).collect()).unwrap()
        };
        let xo = gen(n, 6);
        let xm = gen(n, 8);
        let y = Tensor2::from_vec(n, 1, (0..n).map(|i| (i % 2) as f64).collect()).unwrap();
        Batch::new(xo, xm, y, (0..n).map(|i| i.to_string()).collect()).unwrap()
    }

    #[test]
    fn parameter_names_partition_into_theta_and_phi() {
        let m = CmmdModel::new(toy_config()).unwrap();
        assert!(m.params().names().all(|n| n.starts_with("theta.") || n.starts_with("phi.")));
        assert!(m.params().names().any(|n| n.starts_with("phi.aux")));
    }

    #[test]
    fn posterior_contracts() {
        let m = CmmdModel::new(toy_config()).unwrap();
        let b = toy_batch(3, 1);
        let dup = b.select(&[0, 0, 1]);
        let q = m
            .encode_posterior(&dup.xo, &dup.xm, &dup.y, false, &mut SeedStream::new(0).rng("d"))
            .unwrap();
        assert_eq!(q.mu().shape(), (3, 4));
        assert_eq!(q.mu().row(0), q.mu().row(1));
        assert_eq!(q.log_var().row(0), q.log_var().row(1));
        assert!(m
            .encode_posterior(&b.xm, &b.xm, &b.y, false, &mut SeedStream::new(0).rng("d"))
            .is_err());
    }

    #[test]
    fn prior_contracts() {
        let m = CmmdModel::new(toy_config()).unwrap();
        let b = toy_batch(3, 2).select(&[2, 2, 0]);
        let p = m.encode_prior(&b.xo, false, &mut SeedStream::new(0).rng("d")).unwrap();
        assert_eq!(p.mu().shape(), (3, 4));
        assert_eq!(p.mu().row(0), p.mu().row(1));
        assert!(m.encode_prior(&b.xm, false, &mut SeedStream::new(0).rng("d")).is_err());
    }

    #[test]
    fn decoder_shapes_and_determinism() {
        let m = CmmdModel::new(toy_config()).unwrap();
        let b = toy_batch(5, 3);
        let z = Representation { z: Tensor2::filled(5, 4, 0.2) };
        let a = m.decode_xm(&b.xo, &z, false, &mut SeedStream::new(1).rng("d")).unwrap();
        let c = m.decode_xm(&b.xo, &z, false, &mut SeedStream::new(2).rng("d")).unwrap();
        assert_eq!(a.mu().shape(), (5, 8));
        assert_eq!(a.log_var().shape(), (5, 8));
        assert_eq!(a, c);
        let bad = Representation { z: Tensor2::zeros(5, 3) };
        assert!(m.decode_xm(&b.xo, &bad, false, &mut SeedStream::new(1).rng("d")).is_err());
    }

    #[test]
    fn decoder_log_likelihood_finite_over_sweep() {
        let m = CmmdModel::new(toy_config()).unwrap();
        let mut rng = SeedStream::new(4).rng("sweep");
        for _ in 0..1000 {
            let scale: f64 = rng.random_range(0.1..50.0);
            let mut g = |c: usize| {
                Tensor2::from_vec(1, c, (0..c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
            };
            let xo = g(6);
            let z = Representation { z: g(4) };
            let xm = g(8);
            let px = m.decode_xm(&xo, &z, false, &mut SeedStream::new(0).rng("d")).unwrap();
            assert!(gaussian_log_pdf(&xm, &px).unwrap().get(0, 0).is_finite());
        }
    }

    fn zero_all(m: &mut CmmdModel, prefix: &str) {
        let names: Vec<String> = m.params().names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
        for n in names {
            m.params_mut().value_mut(&n).unwrap().fill(0.0);
        }
    }

    #[test]
    fn classifier_contracts() {
        let mut m = CmmdModel::new(toy_config()).unwrap();
        let z = Representation { z: Tensor2::filled(3, 4, 0.7) };
        let pi = m.classify(&z).unwrap();
        assert!(pi.pi().data().iter().all(|&p| p > 0.0 && p < 1.0));

        let before = pi.pi().clone();
        let bias = format!("{CLASSIFIER}.pi.b");
        m.params_mut().value_mut(&bias).unwrap().data_mut()[0] += 1.0;
        let after = m.classify(&z).unwrap();
        for (a, b) in after.pi().data().iter().zip(before.data()) {
            assert!(a > b);
        }

        zero_all(&mut m, CLASSIFIER);
        assert!(m.classify(&z).unwrap().pi().data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn omega_one_drops_aux_term() {
        let cfg = CmmdConfig { omega: 1.0, ..toy_config() };
        let m = CmmdModel::new(cfg).unwrap();
        let b = toy_batch(5, 5);
        let mut rngs = StepRngs::from_stream(&SeedStream::new(1));
        let e = m.loss(&b.xo, &b.xm, &b.y, &mut rngs).unwrap();
        assert!(e.breakdown.kl_aux_prior > 0.0);
        let l = e.breakdown;
        assert_eq!(l.total, -l.recon_xm - l.class_ll + l.kl_post_prior);
        assert!((l.total + e.elbo).abs() < 1e-10);
    }

    #[test]
    fn coinciding_distributions_zero_both_kls() {
        let mut m = CmmdModel::new(toy_config()).unwrap();
        for p in [ENCODER, PRIOR, AUX] {
            zero_all(&mut m, p);
        }
        let b = toy_batch(4, 6);
        let e = m.loss(&b.xo, &b.xm, &b.y, &mut StepRngs::from_stream(&SeedStream::new(2))).unwrap();
        assert_eq!(e.breakdown.kl_post_prior, 0.0);
        assert_eq!(e.breakdown.kl_aux_prior, 0.0);
        assert!(e.breakdown.identity_residual(0.75) < 1e-10);
    }

    #[test]
    fn full_objective_gradient_check() {
        for (dropout, seed) in [(0.0, 1), (0.3, 2)] {
            let cfg = CmmdConfig { dropout, seed, ..toy_config() };
            let mut m = CmmdModel::new(cfg).unwrap();
            let b = toy_batch(5, 7);
            let mut params = m.params().clone();
            let report = grad_check(
                &mut params,
                |p| {
                    std::mem::swap(m.params_mut(), p);
                    let mut rngs = StepRngs::from_stream(&SeedStream::new(99));
                    let e = m.loss_and_grad(&b.xo, &b.xm, &b.y, &mut rngs).unwrap();
                    std::mem::swap(m.params_mut(), p);
                    e.breakdown.total
                },
                &GradCheckOptions::default(),
            );
            assert!(report.passed(), "max rel err {}: {:?}", report.max_rel_error(), report.flagged_tensors().collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_lr_training_keeps_params() {
        let cfg = CmmdConfig { lr: 0.0, ..toy_config() };
        let mut m = CmmdModel::new(cfg).unwrap();
        let before: Vec<Tensor2> = m.params().iter().map(|(_, e)| e.value.clone()).collect();
        m.train(&toy_batch(10, 8)).unwrap();
        let after: Vec<Tensor2> = m.params().iter().map(|(_, e)| e.value.clone()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn training_is_deterministic_and_omega_is_live() {
        let data = toy_batch(12, 9);
        let run = |omega: f64| {
            let mut m = CmmdModel::new(CmmdConfig { omega, dropout: 0.2, ..toy_config() }).unwrap();
            let h = m.train(&data).unwrap();
            (m, h)
        };
        let (a, ha) = run(0.75);
        let (b, hb) = run(0.75);
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 3);
        let (c, _) = run(1.0);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn empty_training_set_rejected() {
        let mut m = CmmdModel::new(toy_config()).unwrap();
        let empty = toy_batch(3, 1).select(&[]);
        assert!(matches!(m.train(&empty), Err(Error::Validation(_))));
    }

    #[test]
    fn prediction_contracts() {
        let mut m = CmmdModel::new(toy_config()).unwrap();
        let b = toy_batch(6, 10);
        let s1 = m.predict(&b.xo, 1, &mut SeedStream::new(5).rng("p")).unwrap();
        let s2 = m.predict(&b.xo, 1, &mut SeedStream::new(5).rng("p")).unwrap();
        assert_eq!(s1, s2);
        assert!(m.predict(&b.xo, 0, &mut SeedStream::new(5).rng("p")).is_err());
        let gen = m.generate_xm(&b.xo, &mut SeedStream::new(5).rng("g")).unwrap();
        assert_eq!(gen.shape(), (6, 8));
        assert_eq!(gen, m.generate_xm(&b.xo, &mut SeedStream::new(5).rng("g")).unwrap());

        zero_all(&mut m, CLASSIFIER);
        let s = m.predict(&b.xo, 10, &mut SeedStream::new(5).rng("p")).unwrap();
        assert!(s.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn prediction_variance_shrinks_with_samples() {
        let mut m = CmmdModel::new(toy_config()).unwrap();
        // A classifier with real slope so draws of z matter.
        let w = format!("{CLASSIFIER}.pi.w");
        m.params_mut().value_mut(&w).unwrap().data_mut().iter_mut().for_each(|v| *v *= 20.0);
        let xo = toy_batch(1, 11).xo;
        let mut rng = SeedStream::new(6).rng("var");
        let mut variance = |n: usize| {
            let est: Vec<f64> = (0..400).map(|_| m.predict(&xo, n, &mut rng).unwrap()[0]).collect();
            let mean = est.iter().sum::<f64>() / est.len() as f64;
            est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64
        };
        let (v1, v10, v100) = (variance(1), variance(10), variance(100));
        let r1 = v1 / v10;
        let r2 = v10 / v100;
        assert!((6.0..16.0).contains(&r1), "v1/v10 = {r1}");
        assert!((6.0..16.0).contains(&r2), "v10/v100 = {r2}");
    }
}
