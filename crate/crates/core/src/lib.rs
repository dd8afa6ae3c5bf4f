//! Conditional multimodal discriminative (CMMD) model for corporate
//! bankruptcy prediction.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: dense tensors, multilayer perceptrons with hand-derived
//!   backward passes, Adam, and a finite-difference gradient checker.
//! - [`dists`]: diagonal Gaussian and Bernoulli densities, sampling and
//!   closed-form KL divergences, each with its gradient.
//! - [`cmmd`]: the four-network model (encoder, prior, decoder, classifier)
//!   plus the auxiliary `q(z|xo)` head, its weighted objective, training and
//!   prior-based prediction.
//! - [`bundle`]: the binary model file format.
//! - [`textprep`]: tokenizer, Porter stemmer, stopwords and TF-IDF.
//! - [`panel`]: predictor formulas, quarterly panel assembly, scaling,
//!   down-sampling, temporal splits and a synthetic multimodal generator.
//! - [`evalx`]: AUC, H-measure and KS.
//! - [`baselines`]: logistic regression, Gaussian naive Bayes, k-NN and MLP.
//! - [`mui`]: the market uncertainty index built from latent variances.

pub mod baselines;
pub mod bundle;
pub mod cmmd;
pub mod dists;
mod error;
pub mod evalx;
pub mod mui;
pub mod numcore;
pub mod panel;
pub mod textprep;

pub use error::{Error, Result};
