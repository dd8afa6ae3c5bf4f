//! Benchmark classifiers: logistic regression, Gaussian naive Bayes,
//! k-nearest neighbours and a multilayer perceptron.
//!
//! A [`BaselineModel`] only comes out of [`fit`] (or a bundle), so there is
//! no unfitted state to guard against at prediction time.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::dists::{bernoulli_log_pmf, bernoulli_log_pmf_backward, BernoulliParams, PI_FLOOR};
use crate::numcore::{
    adam_step, mlp_backward, mlp_forward, sigmoid, Activation, AdamSettings, HeadSpec, MlpSpec, ParamStore,
    SeedStream, Tensor2,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

/// Penalised logistic regression. The objective is the mean log-loss plus
/// `R(w) / (C·n)`, with `R = ½‖w‖²` (L2) or `‖w‖₁` (L1); the intercept is
/// not penalised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrParams {
    pub penalty: Penalty,
    /// Inverse regularisation strength.
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            max_iter: 10_000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbParams {
    /// Class priors `[P(y=0), P(y=1)]`; empirical frequencies when absent.
    pub priors: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnWeights {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name", deny_unknown_fields)]
pub enum Metric {
    Euclidean,
    Manhattan,
    Minkowski { p: f64 },
}

impl Metric {
    fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            Metric::Euclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Manhattan => pairs.map(|(x, y)| (x - y).abs()).sum(),
            Metric::Minkowski { p } => pairs.map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
    pub weights: KnnWeights,
    pub metric: Metric,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            k: 5,
            weights: KnnWeights::Uniform,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_layers: vec![100],
            activation: Activation::Relu,
            dropout: 0.0,
            lr: 1e-3,
            epochs: 50,
            batch_size: 128,
        }
    }
}

/// Which classifier to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaselineSpec {
    Lr(LrParams),
    Nb(NbParams),
    Knn(KnnParams),
    Mlp(MlpParams),
}

impl BaselineSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            BaselineSpec::Lr(_) => "lr",
            BaselineSpec::Nb(_) => "nb",
            BaselineSpec::Knn(_) => "knn",
            BaselineSpec::Mlp(_) => "mlp",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        match self {
            BaselineSpec::Lr(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) {
                    return bad(format!("lr: C must be positive, got {}", p.c));
                }
                if !(p.tol > 0.0) {
                    return bad(format!("lr: tol must be positive, got {}", p.tol));
                }
            }
            BaselineSpec::Nb(p) => {
                if let Some(pr) = p.priors {
                    if pr.iter().any(|v| !(*v > 0.0)) || ((pr[0] + pr[1]) - 1.0).abs() > 1e-9 {
                        return bad(format!("nb: priors {pr:?} must be positive and sum to 1"));
                    }
                }
            }
            BaselineSpec::Knn(p) => {
                if p.k == 0 {
                    return bad("knn: k must be at least 1".into());
                }
                if let Metric::Minkowski { p } = p.metric {
                    if !(p >= 1.0) {
                        return bad(format!("knn: minkowski p must be at least 1, got {p}"));
                    }
                }
            }
            BaselineSpec::Mlp(p) => {
                if p.hidden_layers.contains(&0) || p.epochs == 0 || p.batch_size == 0 || !(p.lr > 0.0) {
                    return bad("mlp: layer sizes, epochs, batch size and lr must be positive".into());
                }
                if !(0.0..1.0).contains(&p.dropout) {
                    return bad(format!("mlp: dropout {} outside [0, 1)", p.dropout));
                }
            }
        }
        Ok(())
    }
}

/// Fitted state per classifier family.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Lr {
        params: LrParams,
        weights: Vec<f64>,
        intercept: f64,
    },
    Nb {
        params: NbParams,
        /// Row per class.
        mean: Tensor2,
        var: Tensor2,
        priors: [f64; 2],
    },
    Knn {
        params: KnnParams,
        x: Tensor2,
        y: Vec<u8>,
    },
    Mlp {
        params: MlpParams,
        spec: MlpSpec,
        store: ParamStore,
    },
}

/// Convergence record of a logistic-regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LrReport {
    pub iterations: usize,
    pub converged: bool,
    /// Objective at iteration 0 and every 100 iterations after.
    pub objective_trace: Vec<f64>,
}

const NB_VAR_FLOOR: f64 = 1e-9;
const MLP_NETWORK: &str = "baseline.mlp";

fn check_training(x: &Tensor2, y: &[u8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Validation(format!("{} rows for {} labels", x.rows(), y.len())));
    }
    if y.iter().any(|v| *v > 1) {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::Validation("training data must contain both classes".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("training features".into()));
    }
    Ok(())
}

pub fn fit(spec: &BaselineSpec, x: &Tensor2, y: &[u8], seed: u64) -> Result<BaselineModel> {
    spec.validate()?;
    check_training(x, y)?;
    Ok(match spec {
        BaselineSpec::Lr(p) => fit_logistic(p, x, y)?.0,
        BaselineSpec::Nb(p) => fit_naive_bayes(p, x, y),
        BaselineSpec::Knn(p) => {
            if p.k > x.rows() {
                return Err(Error::Validation(format!("knn: k = {} exceeds {} training rows", p.k, x.rows())));
            }
            BaselineModel::Knn {
                params: p.clone(),
                x: x.clone(),
                y: y.to_vec(),
            }
        }
        BaselineSpec::Mlp(p) => fit_mlp(p, x, y, seed)?,
    })
}

struct LogisticObjective<'a> {
    x: &'a Tensor2,
    y: &'a [u8],
    penalty: Penalty,
    lambda: f64,
}

impl LogisticObjective<'_> {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        (0..self.x.rows())
            .map(|r| self.x.row(r).iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }

    fn penalty_value(&self, w: &[f64]) -> f64 {
        self.lambda
            * match self.penalty {
                Penalty::L2 => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
                Penalty::L1 => w.iter().map(|v| v.abs()).sum::<f64>(),
            }
    }

    /// Mean log-loss `mean(softplus(m) − y·m)`.
    fn loss(&self, margins: &[f64]) -> f64 {
        let n = margins.len() as f64;
        margins
            .iter()
            .zip(self.y)
            .map(|(&m, &y)| crate::numcore::softplus(m) - y as f64 * m)
            .sum::<f64>()
            / n
    }

    fn value(&self, w: &[f64], b: f64) -> f64 {
        self.loss(&self.margins(w, b)) + self.penalty_value(w)
    }

    /// Gradient of the smooth part (loss, plus the L2 term when present).
    fn smooth_grad(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let n = self.x.rows() as f64;
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (r, m) in self.margins(w, b).into_iter().enumerate() {
            let resid = (sigmoid(m) - self.y[r] as f64) / n;
            gb += resid;
            for (g, a) in gw.iter_mut().zip(self.x.row(r)) {
                *g += resid * a;
            }
        }
        if self.penalty == Penalty::L2 {
            for (g, v) in gw.iter_mut().zip(w) {
                *g += self.lambda * v;
            }
        }
        (gw, gb)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Full-batch (proximal) gradient descent with step `1/L`, where `L` bounds
/// the Lipschitz constant of the smooth gradient by the Frobenius norm of
/// the intercept-augmented design.
pub fn fit_logistic(p: &LrParams, x: &Tensor2, y: &[u8]) -> Result<(BaselineModel, LrReport)> {
    BaselineSpec::Lr(p.clone()).validate()?;
    check_training(x, y)?;
    let n = x.rows() as f64;
    let obj = LogisticObjective {
        x,
        y,
        penalty: p.penalty,
        lambda: 1.0 / (p.c * n),
    };
    let frob = x.data().iter().map(|v| v * v).sum::<f64>() + n;
    let lipschitz = 0.25 * frob / n + if p.penalty == Penalty::L2 { obj.lambda } else { 0.0 };
    let step = 1.0 / lipschitz;

    let mut w = vec![0.0; x.cols()];
    let mut b = 0.0;
    let mut trace = vec![obj.value(&w, b)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iter {
        let (gw, gb) = obj.smooth_grad(&w, b);
        let new_w: Vec<f64> = match p.penalty {
            Penalty::L2 => w.iter().zip(&gw).map(|(v, g)| v - step * g).collect(),
            Penalty::L1 => w
                .iter()
                .zip(&gw)
                .map(|(v, g)| soft_threshold(v - step * g, step * obj.lambda))
                .collect(),
        };
        let new_b = b - step * gb;
        // Norm of the (proximal) gradient mapping; equals ‖∇f‖ for L2.
        let mapping = (w.iter().zip(&new_w).map(|(a, c)| (a - c).powi(2)).sum::<f64>() + (b - new_b).powi(2)).sqrt() / step;
        w = new_w;
        b = new_b;
        iterations += 1;
        if iterations % 100 == 0 {
            trace.push(obj.value(&w, b));
        }
        if mapping < p.tol {
            converged = true;
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::NonFinite("logistic regression weights".into()));
    }
    Ok((
        BaselineModel::Lr {
            params: p.clone(),
            weights: w,
            intercept: b,
        },
        LrReport {
            iterations,
            converged,
            objective_trace: trace,
        },
    ))
}

fn fit_naive_bayes(p: &NbParams, x: &Tensor2, y: &[u8]) -> BaselineModel {
    let d = x.cols();
    let mut mean = Tensor2::zeros(2, d);
    let mut var = Tensor2::zeros(2, d);
    let mut counts = [0usize; 2];
    for (r, &c) in y.iter().enumerate() {
        counts[c as usize] += 1;
        for (m, v) in mean.row_mut(c as usize).iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for c in 0..2 {
        let k = counts[c] as f64;
        mean.row_mut(c).iter_mut().for_each(|m| *m /= k);
    }
    for (r, &c) in y.iter().enumerate() {
        let c = c as usize;
        for j in 0..d {
            let dev = x.get(r, j) - mean.get(c, j);
            var.set(c, j, var.get(c, j) + dev * dev);
        }
    }
    for c in 0..2 {
        let k = counts[c] as f64;
        var.row_mut(c).iter_mut().for_each(|v| *v = (*v / k).max(NB_VAR_FLOOR));
    }
    let total = y.len() as f64;
    let priors = p.priors.unwrap_or([counts[0] as f64 / total, counts[1] as f64 / total]);
    BaselineModel::Nb {
        params: p.clone(),
        mean,
        var,
        priors,
    }
}

fn fit_mlp(p: &MlpParams, x: &Tensor2, y: &[u8], seed: u64) -> Result<BaselineModel> {
    let spec = MlpSpec {
        name: MLP_NETWORK.into(),
        layer_sizes: std::iter::once(x.cols()).chain(p.hidden_layers.iter().copied()).collect(),
        hidden_activation: p.activation,
        output_heads: vec![HeadSpec::new("pi", 1, Activation::Sigmoid).clamped(PI_FLOOR, 1.0 - PI_FLOOR)],
        dropout_rate: p.dropout,
    };
    let stream = SeedStream::new(seed);
    let mut store = ParamStore::new();
    spec.init_params(&mut store, &mut stream.child("init").rng(MLP_NETWORK))?;
    let train = stream.child("train");
    let mut shuffle = train.rng("shuffle");
    let mut dropout = train.rng("dropout");
    let adam = AdamSettings {
        lr: p.lr,
        ..AdamSettings::default()
    };
    let labels = Tensor2::from_vec(y.len(), 1, y.iter().map(|&v| v as f64).collect())?;
    let mut order: Vec<usize> = (0..x.rows()).collect();
    for _ in 0..p.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(p.batch_size) {
            let xb = x.select_rows(chunk);
            let yb = labels.select_rows(chunk);
            store.zero_grad();
            let (mut out, mut tape) = mlp_forward(&spec, &store, &xb, true, &mut dropout)?;
            let pi = BernoulliParams::new(out.take("pi")?)?;
            let weight = vec![-1.0 / chunk.len() as f64; chunk.len()];
            let d_pi = bernoulli_log_pmf_backward(&yb, &pi, &weight)?;
            mlp_backward(&mut tape, &[("pi", &d_pi)], &mut store)?;
            adam_step(&mut store, &adam)?;
        }
    }
    Ok(BaselineModel::Mlp {
        params: p.clone(),
        spec,
        store,
    })
}

impl BaselineModel {
    pub fn kind(&self) -> &'static str {
        match self {
            BaselineModel::Lr { .. } => "lr",
            BaselineModel::Nb { .. } => "nb",
            BaselineModel::Knn { .. } => "knn",
            BaselineModel::Mlp { .. } => "mlp",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            BaselineModel::Lr { weights, .. } => weights.len(),
            BaselineModel::Nb { mean, .. } => mean.cols(),
            BaselineModel::Knn { x, .. } => x.cols(),
            BaselineModel::Mlp { spec, .. } => spec.input_dim(),
        }
    }

    /// Probability of the positive class per row.
    pub fn predict(&self, x: &Tensor2) -> Result<Vec<f64>> {
        if x.cols() != self.input_dim() {
            return Err(Error::Validation(format!(
                "{} model expects {} features, got {}",
                self.kind(),
                self.input_dim(),
                x.cols()
            )));
        }
        let rows = 0..x.rows();
        Ok(match self {
            BaselineModel::Lr { weights, intercept, .. } => rows
                .map(|r| sigmoid(x.row(r).iter().zip(weights).map(|(a, w)| a * w).sum::<f64>() + intercept))
                .collect(),
            BaselineModel::Nb { .. } => rows.map(|r| self.nb_posteriors(x.row(r))[1]).collect(),
            BaselineModel::Knn { params, x: train, y } => rows.map(|r| knn_score(params, train, y, x.row(r))).collect(),
            BaselineModel::Mlp { spec, store, .. } => {
                let mut unused = SeedStream::new(0).rng("predict");
                let (mut out, _) = mlp_forward(spec, store, x, false, &mut unused)?;
                out.take("pi")?.into_vec()
            }
        })
    }

    /// `[P(y=0|x), P(y=1|x)]` for a naive Bayes model.
    pub fn nb_posteriors(&self, row: &[f64]) -> [f64; 2] {
        let BaselineModel::Nb { mean, var, priors, .. } = self else {
            panic!("nb_posteriors on a {} model", self.kind());
        };
        let log_joint = |c: usize| {
            priors[c].ln()
                + row
                    .iter()
                    .zip(mean.row(c).iter().zip(var.row(c)))
                    .map(|(x, (m, v))| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v))
                    .sum::<f64>()
        };
        let diff = log_joint(1) - log_joint(0);
        let p1 = sigmoid(diff).clamp(PI_FLOOR, 1.0 - PI_FLOOR);
        [1.0 - p1, p1]
    }

    /// Log-likelihood of the labels under the model, averaged over rows.
    pub fn mean_log_likelihood(&self, x: &Tensor2, y: &[u8]) -> Result<f64> {
        let scores = self.predict(x)?;
        let pi = BernoulliParams::new(Tensor2::column(
            &scores.iter().map(|p| p.clamp(PI_FLOOR, 1.0 - PI_FLOOR)).collect::<Vec<_>>(),
        ))?;
        let labels = Tensor2::column(&y.iter().map(|&v| v as f64).collect::<Vec<_>>());
        Ok(bernoulli_log_pmf(&labels, &pi)?.mean())
    }
}

/// Weighted vote fraction of the `k` nearest training rows. Distance ties
/// go to the lower training index; with distance weights, exact matches
/// outvote everything else.
fn knn_score(p: &KnnParams, x: &Tensor2, y: &[u8], q: &[f64]) -> f64 {
    let mut dist: Vec<(f64, usize)> = (0..x.rows()).map(|r| (p.metric.distance(x.row(r), q), r)).collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if p.k < dist.len() {
        dist.select_nth_unstable_by(p.k - 1, cmp);
        dist.truncate(p.k);
    }
    let nearest = &dist;
    let weights: Vec<f64> = match p.weights {
        KnnWeights::Uniform => vec![1.0; nearest.len()],
        KnnWeights::Distance if nearest.iter().any(|(d, _)| *d == 0.0) => {
            nearest.iter().map(|(d, _)| if *d == 0.0 { 1.0 } else { 0.0 }).collect()
        }
        KnnWeights::Distance => nearest.iter().map(|(d, _)| 1.0 / d).collect(),
    };
    let total: f64 = weights.iter().sum();
    let pos: f64 = nearest.iter().zip(&weights).filter(|((_, i), _)| y[*i] == 1).map(|(_, w)| w).sum();
    pos / total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Descriptor {
    Lr { params: LrParams },
    Nb { params: NbParams },
    Knn { params: KnnParams },
    Mlp { params: MlpParams, spec: MlpSpec },
}

impl BaselineModel {
    pub const BUNDLE_KIND: &'static str = "baseline";

    pub fn to_bundle(&self) -> Result<Bundle> {
        let (descriptor, tensors) = match self {
            BaselineModel::Lr { params, weights, intercept } => (
                Descriptor::Lr { params: params.clone() },
                vec![
                    ("weights".to_string(), Tensor2::from_vec(1, weights.len(), weights.clone())?),
                    ("intercept".to_string(), Tensor2::filled(1, 1, *intercept)),
                ],
            ),
            BaselineModel::Nb { params, mean, var, priors } => (
                Descriptor::Nb { params: params.clone() },
                vec![
                    ("mean".to_string(), mean.clone()),
                    ("var".to_string(), var.clone()),
                    ("priors".to_string(), Tensor2::from_vec(1, 2, priors.to_vec())?),
                ],
            ),
            BaselineModel::Knn { params, x, y } => (
                Descriptor::Knn { params: params.clone() },
                vec![
                    ("x".to_string(), x.clone()),
                    ("y".to_string(), Tensor2::column(&y.iter().map(|&v| v as f64).collect::<Vec<_>>())),
                ],
            ),
            BaselineModel::Mlp { params, spec, store } => (
                Descriptor::Mlp {
                    params: params.clone(),
                    spec: spec.clone(),
                },
                store.iter().map(|(n, e)| (n.to_string(), e.value.clone())).collect(),
            ),
        };
        Ok(Bundle {
            kind: Self::BUNDLE_KIND.into(),
            model: serde_json::to_value(descriptor)?,
            extra: serde_json::Value::Null,
            tensors,
        })
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        bundle.expect_kind(Self::BUNDLE_KIND)?;
        let descriptor: Descriptor = serde_json::from_value(bundle.model.clone())
            .map_err(|e| Error::Data(format!("baseline descriptor: {e}")))?;
        let tensor = |name: &str| {
            bundle
                .tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::Data(format!("baseline bundle lacks tensor {name:?}")))
        };
        let shape_err = |what: &str| Error::Data(format!("baseline bundle: inconsistent {what} shape"));
        let model = match descriptor {
            Descriptor::Lr { params } => {
                let (w, b) = (tensor("weights")?, tensor("intercept")?);
                if w.rows() != 1 || b.shape() != (1, 1) {
                    return Err(shape_err("weight"));
                }
                BaselineModel::Lr {
                    params,
                    weights: w.into_vec(),
                    intercept: b.get(0, 0),
                }
            }
            Descriptor::Nb { params } => {
                let (mean, var, pr) = (tensor("mean")?, tensor("var")?, tensor("priors")?);
                if mean.rows() != 2 || var.shape() != mean.shape() || pr.shape() != (1, 2) {
                    return Err(shape_err("naive Bayes"));
                }
                if var.data().iter().any(|v| !(*v > 0.0)) || pr.data().iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::Data("baseline bundle: non-positive variance or prior".into()));
                }
                BaselineModel::Nb {
                    params,
                    mean,
                    var,
                    priors: [pr.get(0, 0), pr.get(0, 1)],
                }
            }
            Descriptor::Knn { params } => {
                let (x, y) = (tensor("x")?, tensor("y")?);
                if y.shape() != (x.rows(), 1) || y.data().iter().any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(shape_err("neighbour label"));
                }
                BaselineSpec::Knn(params.clone()).validate().map_err(|e| Error::Data(e.to_string()))?;
                if params.k > x.rows() {
                    return Err(Error::Data("baseline bundle: k exceeds stored rows".into()));
                }
                BaselineModel::Knn {
                    params,
                    x,
                    y: y.data().iter().map(|&v| v as u8).collect(),
                }
            }
            Descriptor::Mlp { params, spec } => {
                spec.validate().map_err(|e| Error::Data(e.to_string()))?;
                let store = bundle.param_store()?;
                let mut expected = ParamStore::new();
                spec.init_params(&mut expected, &mut SeedStream::new(0).rng("shape"))?;
                let matches = expected.len() == store.len()
                    && expected.iter().all(|(n, e)| store.value(n).map(|v| v.shape() == e.value.shape()).unwrap_or(false));
                if !matches {
                    return Err(shape_err("network parameter"));
                }
                BaselineModel::Mlp { params, spec, store }
            }
        };
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_blobs(n: usize, d: usize, shift: f64, seed: u64) -> (Tensor2, Vec<u8>) {
        let mut rng = SeedStream::new(seed).rng("blobs");
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let mut x = Tensor2::zeros(n, d);
        for r in 0..n {
            for c in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                x.set(r, c, z + if y[r] == 1 { shift } else { -shift } * (c == 0) as u8 as f64);
            }
        }
        (x, y)
    }

    #[test]
    fn lr_separates_two_points() {
        let x = Tensor2::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let m = fit(&BaselineSpec::Lr(LrParams::default()), &x, &[0, 1], 0).unwrap();
        let s = m.predict(&x).unwrap();
        assert!(s[0] < 0.5 && s[1] > 0.5);
    }

    #[test]
    fn lr_zero_weights_give_half() {
        let m = BaselineModel::Lr {
            params: LrParams::default(),
            weights: vec![0.0; 3],
            intercept: 0.0,
        };
        let x = Tensor2::from_rows(&[[1.0, -2.0, 3.0], [0.0, 0.0, 9.0]]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(m.predict(&Tensor2::zeros(1, 2)), Err(Error::Validation(_))));
    }

    #[test]
    fn lr_objective_decreases_monotonically() {
        let (x, y) = gaussian_blobs(200, 4, 0.7, 1);
        for penalty in [Penalty::L2, Penalty::L1] {
            let p = LrParams { penalty, c: 0.5, max_iter: 3000, tol: 1e-12 };
            let (_, report) = fit_logistic(&p, &x, &y).unwrap();
            assert!(report.objective_trace.len() >= 3, "{:?}", report.objective_trace);
            for pair in report.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-15, "{penalty:?}: {} then {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn lr_converges_and_l1_sparsifies() {
        let (x, y) = gaussian_blobs(300, 5, 1.0, 2);
        let (m, report) = fit_logistic(&LrParams::default(), &x, &y).unwrap();
        assert!(report.converged, "{} iterations", report.iterations);
        let BaselineModel::Lr { weights, .. } = m else { unreachable!() };
        assert!(weights[0] > 1.0);

        let (m, _) = fit_logistic(&LrParams { penalty: Penalty::L1, c: 0.02, ..Default::default() }, &x, &y).unwrap();
        let BaselineModel::Lr { weights, .. } = m else { unreachable!() };
        assert!(weights[0] > 0.0);
        assert!(weights[1..].iter().filter(|w| **w == 0.0).count() >= 2, "{weights:?}");
    }

    #[test]
    fn nb_symmetric_midpoint_and_posteriors() {
        let x = Tensor2::from_rows(&[[-2.0], [-1.0], [1.0], [2.0]]).unwrap();
        let m = fit(&BaselineSpec::Nb(NbParams::default()), &x, &[0, 0, 1, 1], 0).unwrap();
        let s = m.predict(&Tensor2::from_rows(&[[0.0]]).unwrap()).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-12);

        let (x, y) = gaussian_blobs(100, 3, 1.5, 3);
        let m = fit(&BaselineSpec::Nb(NbParams { priors: Some([0.5, 0.5]) }), &x, &y, 0).unwrap();
        for r in 0..x.rows() {
            let p = m.nb_posteriors(x.row(r));
            assert!(p[1] > 0.0 && p[1] < 1.0);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nb_floors_constant_features() {
        let x = Tensor2::from_rows(&[[1.0, 3.0], [1.0, 4.0], [1.0, 5.0], [1.0, 6.0]]).unwrap();
        let m = fit(&BaselineSpec::Nb(NbParams::default()), &x, &[0, 0, 1, 1], 0).unwrap();
        let s = m.predict(&x).unwrap();
        assert!(s.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        assert!(s[3] > s[0]);
    }

    #[test]
    fn nb_priors_shift_scores() {
        let (x, y) = gaussian_blobs(60, 2, 1.0, 4);
        let lo = fit(&BaselineSpec::Nb(NbParams { priors: Some([0.9, 0.1]) }), &x, &y, 0).unwrap();
        let hi = fit(&BaselineSpec::Nb(NbParams { priors: Some([0.1, 0.9]) }), &x, &y, 0).unwrap();
        let (a, b) = (lo.predict(&x).unwrap(), hi.predict(&x).unwrap());
        assert!(a.iter().zip(&b).all(|(a, b)| a < b));
        assert!(fit(&BaselineSpec::Nb(NbParams { priors: Some([0.9, 0.3]) }), &x, &y, 0).is_err());
    }

    #[test]
    fn knn_one_neighbour_recovers_training_labels() {
        let (x, y) = gaussian_blobs(50, 3, 0.5, 5);
        for weights in [KnnWeights::Uniform, KnnWeights::Distance] {
            let m = fit(&BaselineSpec::Knn(KnnParams { k: 1, weights, ..Default::default() }), &x, &y, 0).unwrap();
            let s = m.predict(&x).unwrap();
            assert_eq!(s, y.iter().map(|&v| v as f64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn knn_vote_fractions() {
        let x = Tensor2::from_rows(&[[0.0], [1.0], [2.0], [10.0]]).unwrap();
        let y = [1, 0, 1, 0];
        let q = Tensor2::from_rows(&[[0.9]]).unwrap();
        let uniform = fit(&BaselineSpec::Knn(KnnParams { k: 3, ..Default::default() }), &x, &y, 0).unwrap();
        assert!((uniform.predict(&q).unwrap()[0] - 2.0 / 3.0).abs() < 1e-15);

        let weighted = fit(
            &BaselineSpec::Knn(KnnParams { k: 3, weights: KnnWeights::Distance, metric: Metric::Manhattan }),
            &x,
            &y,
            0,
        )
        .unwrap();
        let (w0, w1, w2) = (1.0 / 0.9, 1.0 / 0.1, 1.0 / 1.1);
        assert!((weighted.predict(&q).unwrap()[0] - (w0 + w2) / (w0 + w1 + w2)).abs() < 1e-12);
        assert!(fit(&BaselineSpec::Knn(KnnParams { k: 5, ..Default::default() }), &x, &y, 0).is_err());
    }

    #[test]
    fn minkowski_matches_named_metrics() {
        let (a, b) = ([0.0, 3.0, -1.0], [4.0, 0.0, 1.0]);
        assert!((Metric::Minkowski { p: 2.0 }.distance(&a, &b) - Metric::Euclidean.distance(&a, &b)).abs() < 1e-12);
        assert!((Metric::Minkowski { p: 1.0 }.distance(&a, &b) - Metric::Manhattan.distance(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn mlp_learns_and_is_deterministic() {
        let (x, y) = gaussian_blobs(200, 3, 1.5, 6);
        let spec = BaselineSpec::Mlp(MlpParams { hidden_layers: vec![8], epochs: 30, batch_size: 32, lr: 1e-2, ..Default::default() });
        let m = fit(&spec, &x, &y, 9).unwrap();
        assert_eq!(m, fit(&spec, &x, &y, 9).unwrap());
        let s = m.predict(&x).unwrap();
        let acc = s.iter().zip(&y).filter(|(p, l)| (**p > 0.5) == (**l == 1)).count() as f64 / y.len() as f64;
        assert!(acc > 0.8, "{acc}");
        assert!(m.mean_log_likelihood(&x, &y).unwrap() > -0.5);
    }

    #[test]
    fn fit_rejects_single_class_and_bad_shapes() {
        let x = Tensor2::zeros(3, 2);
        assert!(fit(&BaselineSpec::Lr(LrParams::default()), &x, &[1, 1, 1], 0).is_err());
        assert!(fit(&BaselineSpec::Lr(LrParams::default()), &x, &[1, 0], 0).is_err());
        assert!(fit(&BaselineSpec::Lr(LrParams { c: 0.0, ..Default::default() }), &x, &[1, 0, 1], 0).is_err());
    }

    #[test]
    fn bundles_round_trip_byte_identically() {
        let (x, y) = gaussian_blobs(40, 3, 1.0, 7);
        let specs = [
            BaselineSpec::Lr(LrParams { penalty: Penalty::L1, ..Default::default() }),
            BaselineSpec::Nb(NbParams::default()),
            BaselineSpec::Knn(KnnParams { k: 3, weights: KnnWeights::Distance, metric: Metric::Minkowski { p: 3.0 } }),
            BaselineSpec::Mlp(MlpParams { hidden_layers: vec![4, 3], epochs: 2, ..Default::default() }),
        ];
        for spec in specs {
            let m = fit(&spec, &x, &y, 1).unwrap();
            let bytes = m.to_bundle().unwrap().to_bytes().unwrap();
            let back = BaselineModel::from_bundle(&Bundle::from_bytes(&bytes).unwrap()).unwrap();
            assert_eq!(back.to_bundle().unwrap().to_bytes().unwrap(), bytes);
            assert_eq!(back.predict(&x).unwrap(), m.predict(&x).unwrap(), "{}", spec.kind());
        }
    }

    #[test]
    fn spec_json_is_tagged_and_strict() {
        let s: BaselineSpec = serde_json::from_str(r#"{"kind":"knn","k":3,"metric":{"name":"minkowski","p":3}}"#).unwrap();
        assert_eq!(s, BaselineSpec::Knn(KnnParams { k: 3, metric: Metric::Minkowski { p: 3.0 }, ..Default::default() }));
        assert!(serde_json::from_str::<BaselineSpec>(r#"{"kind":"lr","C":2}"#).is_err());
        assert!(serde_json::from_str::<BaselineSpec>(r#"{"kind":"svm"}"#).is_err());
    }

    #[test]
    fn all_kinds_score_inside_unit_interval() {
        let mut rng = SeedStream::new(8).rng("x");
        let (x, y) = gaussian_blobs(60, 2, 3.0, 8);
        let q = Tensor2::from_vec(20, 2, (0..40).map(|_| rng.random_range(-20.0..20.0)).collect()).unwrap();
        for spec in [
            BaselineSpec::Lr(LrParams::default()),
            BaselineSpec::Nb(NbParams::default()),
            BaselineSpec::Knn(KnnParams::default()),
            BaselineSpec::Mlp(MlpParams { epochs: 3, ..Default::default() }),
        ] {
            let s = fit(&spec, &x, &y, 0).unwrap().predict(&q).unwrap();
            assert!(s.iter().all(|v| (0.0..=1.0).contains(v)), "{}", spec.kind());
        }
    }
}
