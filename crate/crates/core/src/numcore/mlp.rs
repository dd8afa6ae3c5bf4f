//! Multilayer perceptrons with explicit forward caches and hand-derived
//! backward rules.
//!
//! A network is a trunk of dense layers sharing one hidden activation,
//! followed by one or more linear heads reading the last trunk output. Each
//! head has its own activation and an optional value clamp (used for
//! log-variances and Bernoulli probabilities).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Softplus,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Softplus => softplus(z),
        }
    }

    /// Derivative at pre-activation `z` with output `a = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Softplus => sigmoid(z),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    pub size: usize,
    pub activation: Activation,
    /// Output is clamped to `[lo, hi]`; the gradient is zero outside.
    pub clamp: Option<(f64, f64)>,
}

impl HeadSpec {
    pub fn new(name: impl Into<String>, size: usize, activation: Activation) -> Self {
        Self {
            name: name.into(),
            size,
            activation,
            clamp: None,
        }
    }

    pub fn clamped(mut self, lo: f64, hi: f64) -> Self {
        self.clamp = Some((lo, hi));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Prefix for every parameter name owned by this network.
    pub name: String,
    /// Input width followed by the hidden layer widths.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_heads: Vec<HeadSpec>,
    pub dropout_rate: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::Validation(format!(
                "{}: layer sizes must be non-empty and positive, got {:?}",
                self.name, self.layer_sizes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Validation(format!(
                "{}: dropout rate {} outside [0, 1)",
                self.name, self.dropout_rate
            )));
        }
        if self.output_heads.is_empty() || self.output_heads.iter().any(|h| h.size == 0) {
            return Err(Error::Validation(format!(
                "{}: needs at least one head of positive size",
                self.name
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    fn trunk_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }

    pub fn hidden_param_names(&self, layer: usize) -> (String, String) {
        (
            format!("{}.h{layer}.w", self.name),
            format!("{}.h{layer}.b", self.name),
        )
    }

    pub fn head_param_names(&self, head: &str) -> (String, String) {
        (
            format!("{}.{head}.w", self.name),
            format!("{}.{head}.b", self.name),
        )
    }

    /// Adds Glorot-uniform weights and zero biases for every layer to `store`.
    pub fn init_params<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) -> Result<()> {
        self.validate()?;
        for (i, pair) in self.layer_sizes.windows(2).enumerate() {
            let (w, b) = self.hidden_param_names(i);
            store.insert(w, glorot(pair[1], pair[0], rng))?;
            store.insert(b, Tensor2::zeros(pair[1], 1))?;
        }
        let width = self.trunk_width();
        for h in &self.output_heads {
            let (w, b) = self.head_param_names(&h.name);
            store.insert(w, glorot(h.size, width, rng))?;
            store.insert(b, Tensor2::zeros(h.size, 1))?;
        }
        Ok(())
    }
}

fn glorot<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor2::from_vec(fan_out, fan_in, data).expect("shape")
}

/// Outputs of a forward pass, one tensor per head in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    entries: Vec<(String, Tensor2)>,
}

impl HeadOutputs {
    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Removes and returns a head output.
    pub fn take(&mut self, name: &str) -> Result<Tensor2> {
        let pos = self
            .entries
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Usage(format!("no head named {name:?}")))?;
        Ok(self.entries.remove(pos).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    w: String,
    b: String,
    input: Tensor2,
    pre: Tensor2,
    post: Tensor2,
    activation: Activation,
    mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct HeadCache {
    name: String,
    w: String,
    b: String,
    pre: Tensor2,
    post: Tensor2,
    activation: Activation,
    clamp: Option<(f64, f64)>,
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct Tape {
    network: String,
    layers: Vec<LayerCache>,
    trunk_out: Tensor2,
    heads: Vec<HeadCache>,
    consumed: bool,
}

impl Tape {
    pub fn network(&self) -> &str {
        &self.network
    }
}

fn dense_forward(
    input: &Tensor2,
    params: &ParamStore,
    w: &str,
    b: &str,
    context: &str,
) -> Result<Tensor2> {
    let weight = params.value(w)?;
    let bias = params.value(b)?;
    if weight.cols() != input.cols() {
        return Err(Error::dim(
            context,
            format!(
                "input has {} columns, weight {w} expects {}",
                input.cols(),
                weight.cols()
            ),
        ));
    }
    if bias.shape() != (weight.rows(), 1) {
        return Err(Error::dim(context, format!("bias {b} shape {:?}", bias.shape())));
    }
    let mut out = input.matmul_t(weight)?;
    let bias = bias.data();
    for r in 0..out.rows() {
        for (o, bv) in out.row_mut(r).iter_mut().zip(bias) {
            *o += bv;
        }
    }
    Ok(out)
}

/// Accumulates weight/bias gradients and returns the gradient w.r.t. the input.
fn dense_backward(
    d_pre: &Tensor2,
    input: &Tensor2,
    params: &mut ParamStore,
    w: &str,
    b: &str,
) -> Result<Tensor2> {
    let weight = params.value(w)?.clone();
    let (out_dim, in_dim) = weight.shape();
    let mut d_input = Tensor2::zeros(input.rows(), in_dim);
    {
        let gw = params.grad_mut(w)?;
        for i in 0..input.rows() {
            let x = input.row(i);
            for (o, &g) in d_pre.row(i).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (gwv, xv) in gw.row_mut(o).iter_mut().zip(x) {
                    *gwv += g * xv;
                }
            }
        }
    }
    {
        let gb = params.grad_mut(b)?;
        for i in 0..d_pre.rows() {
            for (o, &g) in d_pre.row(i).iter().enumerate() {
                gb.data_mut()[o] += g;
            }
        }
    }
    for i in 0..input.rows() {
        let dx = d_input.row_mut(i);
        for o in 0..out_dim {
            let g = d_pre.get(i, o);
            if g == 0.0 {
                continue;
            }
            for (d, wv) in dx.iter_mut().zip(weight.row(o)) {
                *d += g * wv;
            }
        }
    }
    Ok(d_input)
}

/// Runs the network. Dropout (inverted scaling) touches hidden activations
/// only, and only when `train_mode` is set and the rate is positive; no
/// randomness is consumed otherwise.
pub fn mlp_forward<R: Rng + ?Sized>(
    spec: &MlpSpec,
    params: &ParamStore,
    input: &Tensor2,
    train_mode: bool,
    rng: &mut R,
) -> Result<(HeadOutputs, Tape)> {
    spec.validate()?;
    if input.cols() != spec.input_dim() {
        return Err(Error::dim(
            format!("{} input layer", spec.name),
            format!("expected {} columns, got {}", spec.input_dim(), input.cols()),
        ));
    }
    let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
    let mut current = input.clone();
    for i in 0..spec.layer_sizes.len() - 1 {
        let (w, b) = spec.hidden_param_names(i);
        let context = format!("{} hidden layer {i}", spec.name);
        let pre = dense_forward(&current, params, &w, &b, &context)?;
        let post = pre.map(|z| spec.hidden_activation.apply(z));
        let (out, mask) = if train_mode && spec.dropout_rate > 0.0 {
            let keep = 1.0 - spec.dropout_rate;
            let scale = 1.0 / keep;
            let mask: Vec<f64> = (0..post.len())
                .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                .collect();
            let mut dropped = post.clone();
            for (v, m) in dropped.data_mut().iter_mut().zip(&mask) {
                *v *= m;
            }
            (dropped, Some(mask))
        } else {
            (post.clone(), None)
        };
        layers.push(LayerCache {
            w,
            b,
            input: std::mem::replace(&mut current, out),
            pre,
            post,
            activation: spec.hidden_activation,
            mask,
        });
    }

    let mut heads = Vec::with_capacity(spec.output_heads.len());
    let mut outputs = Vec::with_capacity(spec.output_heads.len());
    for h in &spec.output_heads {
        let (w, b) = spec.head_param_names(&h.name);
        let context = format!("{} head {}", spec.name, h.name);
        let pre = dense_forward(&current, params, &w, &b, &context)?;
        let post = pre.map(|z| h.activation.apply(z));
        let out = match h.clamp {
            Some((lo, hi)) => post.map(|v| v.clamp(lo, hi)),
            None => post.clone(),
        };
        if !out.is_finite() {
            return Err(Error::NonFinite(context));
        }
        outputs.push((h.name.clone(), out));
        heads.push(HeadCache {
            name: h.name.clone(),
            w,
            b,
            pre,
            post,
            activation: h.activation,
            clamp: h.clamp,
        });
    }

    Ok((
        HeadOutputs { entries: outputs },
        Tape {
            network: spec.name.clone(),
            layers,
            trunk_out: current,
            heads,
            consumed: false,
        },
    ))
}

/// Back-propagates head gradients through the network recorded in `tape`,
/// accumulating into `params` grads, and returns `∂loss/∂input`.
///
/// Heads without an upstream entry contribute zero. A tape can be consumed
/// once.
pub fn mlp_backward(
    tape: &mut Tape,
    upstream: &[(&str, &Tensor2)],
    params: &mut ParamStore,
) -> Result<Tensor2> {
    if tape.consumed {
        return Err(Error::Usage(format!(
            "backward called twice on the tape of {}",
            tape.network
        )));
    }
    if let Some((name, _)) = upstream
        .iter()
        .find(|(n, _)| !tape.heads.iter().any(|h| h.name == *n))
    {
        return Err(Error::Usage(format!(
            "{} has no head named {name:?}",
            tape.network
        )));
    }
    tape.consumed = true;

    let mut d_trunk = Tensor2::zeros(tape.trunk_out.rows(), tape.trunk_out.cols());
    for h in &tape.heads {
        let Some((_, g)) = upstream.iter().find(|(n, _)| *n == h.name) else {
            continue;
        };
        g.expect_shape(h.post.shape(), &format!("{} head {} upstream", tape.network, h.name))?;
        let mut d_pre = Tensor2::zeros(h.pre.rows(), h.pre.cols());
        for (k, d) in d_pre.data_mut().iter_mut().enumerate() {
            let a = h.post.data()[k];
            let pass = match h.clamp {
                Some((lo, hi)) => (lo..=hi).contains(&a),
                None => true,
            };
            if pass {
                *d = g.data()[k] * h.activation.derivative(h.pre.data()[k], a);
            }
        }
        let dx = dense_backward(&d_pre, &tape.trunk_out, params, &h.w, &h.b)?;
        d_trunk.add_assign(&dx)?;
    }

    let mut d_out = d_trunk;
    for layer in tape.layers.iter().rev() {
        let mut d_pre = d_out;
        for (k, d) in d_pre.data_mut().iter_mut().enumerate() {
            let m = layer.mask.as_ref().map_or(1.0, |m| m[k]);
            *d *= m * layer
                .activation
                .derivative(layer.pre.data()[k], layer.post.data()[k]);
        }
        d_out = dense_backward(&d_pre, &layer.input, params, &layer.w, &layer.b)?;
    }
    Ok(d_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::SeedStream;

    fn single_layer(act: Activation, n: usize) -> MlpSpec {
        MlpSpec {
            name: "net".into(),
            layer_sizes: vec![n],
            hidden_activation: Activation::Relu,
            output_heads: vec![HeadSpec::new("out", n, act)],
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = single_layer(Activation::Identity, 3);
        let mut p = ParamStore::new();
        p.insert("net.out.w", Tensor2::identity(3)).unwrap();
        p.insert("net.out.b", Tensor2::zeros(3, 1)).unwrap();
        let x = Tensor2::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let mut rng = SeedStream::new(0).rng("t");
        let (out, _) = mlp_forward(&spec, &p, &x, false, &mut rng).unwrap();
        assert_eq!(out.get("out").unwrap(), &x);
    }

    #[test]
    fn relu_clips_negatives() {
        let spec = single_layer(Activation::Relu, 2);
        let mut p = ParamStore::new();
        p.insert("net.out.w", Tensor2::identity(2)).unwrap();
        p.insert("net.out.b", Tensor2::zeros(2, 1)).unwrap();
        let x = Tensor2::from_vec(1, 2, vec![-1.0, 2.0]).unwrap();
        let mut rng = SeedStream::new(0).rng("t");
        let (out, _) = mlp_forward(&spec, &p, &x, false, &mut rng).unwrap();
        assert_eq!(out.get("out").unwrap().data(), &[0.0, 2.0]);
    }

    #[test]
    fn two_by_three_matches_hand_product() {
        // spec [2, 3]: one hidden identity layer 2 -> 3, then an identity head.
        let spec = MlpSpec {
            name: "net".into(),
            layer_sizes: vec![2, 3],
            hidden_activation: Activation::Identity,
            output_heads: vec![HeadSpec::new("out", 1, Activation::Identity)],
            dropout_rate: 0.0,
        };
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(3).rng("init")).unwrap();
        let x = Tensor2::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let (out, _) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(0).rng("d")).unwrap();

        let w0 = p.value("net.h0.w").unwrap();
        let w1 = p.value("net.out.w").unwrap();
        let mut hidden = [0.0; 3];
        for (j, h) in hidden.iter_mut().enumerate() {
            *h = w0.get(j, 0) + w0.get(j, 1);
        }
        let expect: f64 = (0..3).map(|j| w1.get(0, j) * hidden[j]).sum();
        assert!((out.get("out").unwrap().get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn dimension_error_names_layer() {
        let spec = single_layer(Activation::Identity, 3);
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(0).rng("i")).unwrap();
        let x = Tensor2::zeros(1, 2);
        let err = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(0).rng("d")).unwrap_err();
        assert!(err.to_string().contains("net input layer"), "{err}");
    }

    #[test]
    fn backward_twice_is_a_usage_error() {
        let spec = single_layer(Activation::Tanh, 2);
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(0).rng("i")).unwrap();
        let x = Tensor2::filled(1, 2, 0.3);
        let (_, mut tape) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(0).rng("d")).unwrap();
        let g = Tensor2::filled(1, 2, 1.0);
        mlp_backward(&mut tape, &[("out", &g)], &mut p).unwrap();
        assert!(matches!(
            mlp_backward(&mut tape, &[("out", &g)], &mut p),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let spec = MlpSpec {
            name: "net".into(),
            layer_sizes: vec![3, 4],
            hidden_activation: Activation::Tanh,
            output_heads: vec![HeadSpec::new("out", 2, Activation::Sigmoid)],
            dropout_rate: 0.0,
        };
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(1).rng("i")).unwrap();
        let x = Tensor2::filled(2, 3, 0.7);
        let (_, mut tape) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(0).rng("d")).unwrap();
        let g = Tensor2::zeros(2, 2);
        let dx = mlp_backward(&mut tape, &[("out", &g)], &mut p).unwrap();
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(p.iter().all(|(_, e)| e.grad.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn identity_network_weight_grad_is_input_broadcast() {
        // loss = sum(W x + b): dW[o, i] = Σ_rows x[i], db[o] = rows.
        let spec = single_layer(Activation::Identity, 2);
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(2).rng("i")).unwrap();
        let x = Tensor2::from_vec(2, 2, vec![1.0, 2.0, 3.0, -1.0]).unwrap();
        let (_, mut tape) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(0).rng("d")).unwrap();
        let g = Tensor2::filled(2, 2, 1.0);
        mlp_backward(&mut tape, &[("out", &g)], &mut p).unwrap();
        assert_eq!(p.grad("net.out.w").unwrap().data(), &[4.0, 1.0, 4.0, 1.0]);
        assert_eq!(p.grad("net.out.b").unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn eval_mode_is_pure_and_rate_zero_dropout_is_identity() {
        let mut spec = MlpSpec {
            name: "net".into(),
            layer_sizes: vec![3, 5, 4],
            hidden_activation: Activation::Relu,
            output_heads: vec![HeadSpec::new("out", 2, Activation::Identity)],
            dropout_rate: 0.5,
        };
        let mut p = ParamStore::new();
        spec.init_params(&mut p, &mut SeedStream::new(5).rng("i")).unwrap();
        let x = Tensor2::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, 0.9]).unwrap();
        let (a, _) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(1).rng("d")).unwrap();
        let (b, _) = mlp_forward(&spec, &p, &x, false, &mut SeedStream::new(2).rng("d")).unwrap();
        assert_eq!(a, b);
        spec.dropout_rate = 0.0;
        let (c, _) = mlp_forward(&spec, &p, &x, true, &mut SeedStream::new(3).rng("d")).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = single_layer(Activation::Identity, 2);
        spec.dropout_rate = 1.0;
        assert!(spec.validate().is_err());
        spec.dropout_rate = 0.0;
        spec.layer_sizes.clear();
        assert!(spec.validate().is_err());
    }
}
